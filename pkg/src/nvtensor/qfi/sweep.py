"""Variational SLD search by local sweeps over an MPO ansatz.

The SLD is an MPO whose site blocks are real combinations of an orthonormal
Hermitian basis, ``S[a, :, :, b] = sum_mu X[a, mu, b] G_mu``. Every local
update maximizes the concave quadratic

    f(L) = 2 Tr(drho L) - Tr(rho L^2)

over one site tensor ``X`` with the others held fixed, which reduces to the
real symmetric system ``M x = b``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.linalg.lapack

from ..tn.linalg import NumericalError
from ..tn.mpo import MPO
from ..tn.mps import MPDO, mpdo_trace

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-10
CONDITION_LIMIT = 1e12
# local systems are solved densely; this bounds the unknowns per site
MAX_LOCAL_PARAMS = 6561


@lru_cache(maxsize=None)
def hermitian_basis(d: int) -> np.ndarray:
    """Orthonormal (Hilbert-Schmidt) basis of d x d Hermitian matrices, shape (d*d, d, d)."""
    basis = []
    for k in range(d):
        m = np.zeros((d, d), dtype=complex)
        m[k, k] = 1.0
        basis.append(m)
    for j in range(d):
        for k in range(j + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = m[k, j] = 1 / np.sqrt(2)
            basis.append(m)
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = -1j / np.sqrt(2)
            m[k, j] = 1j / np.sqrt(2)
            basis.append(m)
    out = np.array(basis)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _pair_products(d: int) -> np.ndarray:
    """Gamma[(i, i'), mu, nu] = (G_mu G_nu)[i', i], contracted against rho[i, i']."""
    g = hermitian_basis(d)
    prod = np.einsum("mab,nbc->mnac", g, g)  # (mu, nu, i', i)
    out = prod.transpose(3, 2, 0, 1).reshape(d * d, d * d, d * d)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _single(d: int) -> np.ndarray:
    """g[(i, i'), mu] = G_mu[i', i]."""
    g = hermitian_basis(d)
    out = g.transpose(2, 1, 0).reshape(d * d, d * d)
    out.setflags(write=False)
    return out


@dataclass
class SLDOperator:
    """SLD as a train of real coefficient tensors ``X[l]`` of shape (a, d*d, b)."""

    tensors: list
    d: int = 3

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    def site_operator(self, k: int) -> np.ndarray:
        """Complex site block S[a, out, in, b]."""
        return _site_operator(self.tensors[k], self.d)

    def to_mpo(self) -> MPO:
        return MPO([self.site_operator(k) for k in range(self.n_sites)])

    def to_dense(self) -> np.ndarray:
        return self.to_mpo().to_dense()

    def copy(self) -> "SLDOperator":
        return SLDOperator([t.copy() for t in self.tensors], self.d)


def _site_operator(x: np.ndarray, d: int) -> np.ndarray:
    return np.tensordot(x, hermitian_basis(d), axes=(1, 0)).transpose(0, 2, 3, 1)


@dataclass
class QFIResult:
    value: float
    sld: SLDOperator
    restarts: list
    sweeps_used: int
    converged: bool
    regularized: int = 0
    history: list = field(default_factory=list)


# --- environments: rho legs (r), first and second SLD legs (a, c); drho legs (p)


def _rho_sites(state: MPDO, d: int):
    return [t.reshape(t.shape[0], d, d, t.shape[2]) for t in state.tensors]


def _left3(env, rho, s):
    t = np.tensordot(env, rho, axes=(0, 0))  # (a, c, i, i', r')
    t = np.tensordot(t, s, axes=((0, 3), (0, 1)))  # (c, i, r', k, a')
    return np.tensordot(t, s, axes=((0, 3, 1), (0, 1, 2)))  # (r', a', c')


def _right3(env, rho, s):
    t = np.tensordot(rho, env, axes=(3, 0))  # (r, i, i', a', c')
    t = np.tensordot(t, s, axes=((2, 3), (1, 3)))  # (r, i, c', a, k)
    return np.tensordot(t, s, axes=((4, 1, 2), (1, 2, 3)))  # (r, a, c)


def _left2(env, drho, s):
    t = np.tensordot(env, drho, axes=(0, 0))  # (a, i, i', p')
    return np.tensordot(t, s, axes=((0, 2, 1), (0, 1, 2)))  # (p', a')


def _right2(env, drho, s):
    t = np.tensordot(drho, env, axes=(3, 0))  # (p, i, i', a')
    return np.tensordot(t, s, axes=((2, 1, 3), (1, 2, 3)))  # (p, a)


class _Problem:
    """Fixed inputs and cached environments for one optimization."""

    def __init__(self, rho: MPDO, drho: MPDO, d: int):
        self.d = d
        self.n = rho.n_sites
        self.rho = _rho_sites(rho, d)
        self.drho = _rho_sites(drho, d)
        dd = d * d
        # rho contracted with every basis pair, per site: (r, mu, nu, r')
        gam = _pair_products(d)
        self.rho_pairs = [
            np.tensordot(t.reshape(t.shape[0], dd, t.shape[3]), gam, axes=(1, 0)).transpose(0, 2, 3, 1)
            for t in self.rho
        ]
        g1 = _single(d)
        self.drho_single = [
            np.tensordot(t.reshape(t.shape[0], dd, t.shape[3]), g1, axes=(1, 0)).transpose(0, 2, 1)
            for t in self.drho
        ]

    def local_system(self, k, l3, r3, l2, r2):
        """Return M (real symmetric), b and the (a, b, d*d) block shape for site ``k``."""
        p = self.rho_pairs[k]
        t = np.tensordot(l3, p, axes=(0, 0))  # (a, c, mu, nu, r')
        t = np.tensordot(t, r3, axes=(4, 0))  # (a, c, mu, nu, b, e)
        a, c, dd, _, b, e = t.shape
        m = t.transpose(0, 4, 2, 1, 5, 3).reshape(a * b * dd, c * e * dd).real
        q = self.drho_single[k]
        u = np.tensordot(l2, q, axes=(0, 0))  # (a, mu, q')
        u = np.tensordot(u, r2, axes=(2, 0))  # (a, mu, b)
        vec = u.transpose(0, 2, 1).reshape(-1).real
        return 0.5 * (m + m.T), vec, (a, b, dd)


def _solve(m: np.ndarray, b: np.ndarray):
    """Solve the local normal equations; returns (x, regularized).

    Well-conditioned systems use a plain Cholesky solve. Otherwise a pivoted
    Cholesky factorization stops at pivots below ``PIVOT_TOL * max(diag)`` and the
    system is solved on the retained pivots only, which discards directions
    in which ``rho`` is zero up to rounding.
    """
    if not np.any(b):
        return np.zeros_like(b), False
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(b))):
        raise NumericalError("non-finite local QFI system")
    diag_max = float(np.max(np.diag(m)))
    if diag_max <= 0:
        return np.zeros_like(b), True
    try:
        c, lower = scipy.linalg.cho_factor(m, check_finite=False)
        diag = np.abs(np.diag(c))
        if diag.min() > 0 and (diag.max() / diag.min()) ** 2 <= CONDITION_LIMIT:
            return scipy.linalg.cho_solve((c, lower), b, check_finite=False), False
    except np.linalg.LinAlgError:
        pass
    u, piv, rank, _ = scipy.linalg.lapack.dpstrf(m, tol=PIVOT_TOL * diag_max, lower=0)
    p = piv[:rank] - 1
    r = np.triu(u[:rank, :rank])
    y = scipy.linalg.solve_triangular(r, b[p], trans="T", check_finite=False)
    x = np.zeros_like(b)
    x[p] = scipy.linalg.solve_triangular(r, y, check_finite=False)
    return x, True


def _functional(m, b, x) -> float:
    return float(2.0 * b @ x - x @ m @ x)


def sld_bond_caps(n: int, chi_l: int, d: int = 3) -> list[int]:
    """Bond dimensions of the SLD ansatz, including the trivial outer bonds."""
    dd = d * d
    caps = [1]
    for k in range(1, n):
        caps.append(int(min(chi_l, dd**k, dd ** (n - k))))
    caps.append(1)
    return caps


def random_sld(n: int, chi_l: int, rng: np.random.Generator, d: int = 3) -> SLDOperator:
    """Random SLD ansatz; each site block is scaled to unit spectral norm."""
    caps = sld_bond_caps(n, chi_l, d)
    tensors = []
    for k in range(n):
        x = rng.normal(size=(caps[k], d * d, caps[k + 1]))
        s = _site_operator(x, d)
        norm = np.linalg.norm(s.reshape(caps[k] * d, d * caps[k + 1]), 2)
        tensors.append(x / norm if norm > 0 else x)
    return SLDOperator(tensors, d)


def fit_bonds(sld: SLDOperator, chi_l: int) -> SLDOperator:
    """Adapt an SLD to the bond caps for ``chi_l`` by SVD truncation or zero padding."""
    n, d = sld.n_sites, sld.d
    caps = sld_bond_caps(n, chi_l, d)
    xs = _right_canonical([t.copy() for t in sld.tensors])
    for k in range(n - 1):
        a, dd, b = xs[k].shape
        u, s, vh = np.linalg.svd(xs[k].reshape(a * dd, b), full_matrices=False)
        keep = min(caps[k + 1], len(s))
        xs[k] = u[:, :keep].reshape(a, dd, keep)
        xs[k + 1] = np.tensordot(s[:keep, None] * vh[:keep], xs[k + 1], axes=(1, 0))
        if keep < caps[k + 1]:
            pad = caps[k + 1] - keep
            xs[k] = np.concatenate([xs[k], np.zeros((a, dd, pad))], axis=2)
            xs[k + 1] = np.concatenate([xs[k + 1], np.zeros((pad,) + xs[k + 1].shape[1:])], axis=0)
    return SLDOperator(xs, d)


def _right_canonical(xs):
    for k in range(len(xs) - 1, 0, -1):
        a, dd, b = xs[k].shape
        q, r = np.linalg.qr(xs[k].reshape(a, dd * b).T)
        xs[k] = q.T.reshape(-1, dd, b)
        xs[k - 1] = np.tensordot(xs[k - 1], r.T, axes=(2, 0))
    return xs


def _optimize(problem: _Problem, sld: SLDOperator, max_sweeps: int, tol: float):
    """Sweep one ansatz to convergence. Returns (value, sld, sweeps, converged, regularized, history)."""
    n, d = problem.n, problem.d
    xs = _right_canonical([t.copy() for t in sld.tensors])
    ops = [_site_operator(x, d) for x in xs]
    one3, one2 = np.ones((1, 1, 1)), np.ones((1, 1))
    L3, L2 = [one3] + [None] * n, [one2] + [None] * n
    R3, R2 = [None] * n + [one3], [None] * n + [one2]
    for k in range(n - 1, 0, -1):
        R3[k] = _right3(R3[k + 1], problem.rho[k], ops[k])
        R2[k] = _right2(R2[k + 1], problem.drho[k], ops[k])

    history = []
    regularized = 0
    value = -np.inf
    previous = None
    converged = False
    sweeps = 0

    def update(k, direction):
        nonlocal value, regularized
        m, b, (a, bb, dd) = problem.local_system(k, L3[k], R3[k + 1], L2[k], R2[k + 1])
        x, reg = _solve(m, b)
        regularized += int(reg)
        value = _functional(m, b, x)
        history.append(value)
        x = x.reshape(a, bb, dd).transpose(0, 2, 1)
        if direction > 0 and k < n - 1:
            q, r = np.linalg.qr(x.reshape(a * dd, bb))
            xs[k] = q.reshape(a, dd, -1)
            xs[k + 1] = np.tensordot(r, xs[k + 1], axes=(1, 0))
            ops[k] = _site_operator(xs[k], d)
            L3[k + 1] = _left3(L3[k], problem.rho[k], ops[k])
            L2[k + 1] = _left2(L2[k], problem.drho[k], ops[k])
        elif direction < 0 and k > 0:
            q, r = np.linalg.qr(x.reshape(a, dd * bb).T)
            xs[k] = q.T.reshape(-1, dd, bb)
            xs[k - 1] = np.tensordot(xs[k - 1], r.T, axes=(2, 0))
            ops[k] = _site_operator(xs[k], d)
            R3[k] = _right3(R3[k + 1], problem.rho[k], ops[k])
            R2[k] = _right2(R2[k + 1], problem.drho[k], ops[k])
        else:
            xs[k] = x

    for sweeps in range(1, max_sweeps + 1):
        for k in range(n):
            update(k, +1 if k < n - 1 else -1)
        for k in range(n - 2, -1, -1):
            update(k, -1 if k > 0 else 0)
        if previous is not None and abs(value - previous) <= tol * max(abs(value), 1e-300):
            converged = True
            break
        previous = value
    return value, SLDOperator(xs, d), sweeps, converged, regularized, history


def _check_inputs(rho: MPDO, drho: MPDO, d: int) -> None:
    if rho.n_sites != drho.n_sites:
        raise ValueError("rho and drho lengths differ")
    if any(p != d * d for p in rho.phys_dims + drho.phys_dims):
        raise ValueError(f"expected vectorized sites of dimension {d * d}")
    tr = mpdo_trace(rho)
    if abs(tr - 1.0) > 1e-8:
        raise ValueError(f"rho must be trace-normalized (trace {tr:.3e})")
    dtr = mpdo_trace(drho)
    if abs(dtr) > 1e-8 * max(1.0, drho.norm()):
        raise ValueError(f"drho must be traceless (trace {dtr:.3e})")


def default_chi_l(rho: MPDO, cap: int = 64, d: int = 3) -> int:
    """Twice the largest bond of ``rho``, capped at ``cap`` and by the local solve budget."""
    budget = int(np.sqrt(MAX_LOCAL_PARAMS / (d * d)))
    return int(min(2 * max([1] + rho.bond_dims), cap, budget))


def qfi_local_sweep(
    rho: MPDO,
    drho: MPDO,
    chi_l: int | None = None,
    restarts: int = 10,
    warm_start: SLDOperator | None = None,
    rng: np.random.Generator | int | None = None,
    max_sweeps: int = 200,
    tol: float = 1e-8,
    d: int = 3,
) -> QFIResult:
    """Maximize 2 Tr(drho L) - Tr(rho L^2) over SLD MPOs of bond dimension ``chi_l``.

    Each restart starts from a random ansatz, except that a given
    ``warm_start`` replaces the first one. Sweeps run 0..N-1..0 until the
    functional changes by less than ``tol`` (relative) between full sweeps.
    The best restart is returned.
    """
    _check_inputs(rho, drho, d)
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    chi_l = default_chi_l(rho) if chi_l is None else int(chi_l)
    if chi_l < 1:
        raise ValueError("chi_l must be at least 1")
    n = rho.n_sites
    caps = sld_bond_caps(n, chi_l, d)
    largest = max(caps[k] * caps[k + 1] * d * d for k in range(n))
    if largest > MAX_LOCAL_PARAMS:
        raise ValueError(f"chi_l={chi_l} gives {largest} unknowns per site (limit {MAX_LOCAL_PARAMS})")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    problem = _Problem(rho, drho, d)

    best = None
    values = []
    total_sweeps = 0
    total_reg = 0
    for k in range(restarts):
        if k == 0 and warm_start is not None:
            if warm_start.n_sites != n:
                raise ValueError("warm start has the wrong number of sites")
            init = fit_bonds(warm_start, chi_l)
        else:
            init = random_sld(n, chi_l, rng, d)
        value, sld, sweeps, conv, reg, hist = _optimize(problem, init, max_sweeps, tol)
        values.append(value)
        total_sweeps += sweeps
        total_reg += reg
        if not np.isfinite(value):
            raise NumericalError("non-finite QFI functional")
        if best is None or value > best[0]:
            best = (value, sld, conv, hist)
    if total_reg:
        log.debug("regularized %d local QFI solves", total_reg)
    value, sld, conv, hist = best
    return QFIResult(
        value=float(value),
        sld=sld,
        restarts=values,
        sweeps_used=total_sweeps,
        converged=conv,
        regularized=total_reg,
        history=hist,
    )
