"""TDVP integration of d|rho>>/dt = L|rho>> on an MPDO."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tn.linalg import DEFAULT_FLOOR, TruncationLog, qr_positive, svd_split
from ..tn.mpo import MPO
from ..tn.mps import MPDO, MPS, move_center, mpdo_trace, normalize_trace
from .krylov import expm_krylov


@dataclass(frozen=True)
class TDVPConfig:
    dt: float
    mode: str = "two-site"
    krylov_dim: int = 20
    krylov_tol: float = 1e-10
    chi_max: int = 64
    trunc_floor: float = DEFAULT_FLOOR
    renormalize: bool = True

    def __post_init__(self):
        if self.dt < 0:
            raise ValueError("dt must be non-negative")
        if self.krylov_dim < 2:
            raise ValueError("krylov_dim must be at least 2")
        if self.mode not in ("one-site", "two-site"):
            raise ValueError(f"unknown TDVP mode {self.mode!r}")
        if self.chi_max < 1:
            raise ValueError("chi_max must be at least 1")


@dataclass
class StepInfo:
    truncation: TruncationLog
    trace_before: complex


# environment conventions: L[a, m, x], R[b, n, y]; a/b bra (conjugated), x/y ket


def _update_left(env, a, w):
    t = np.tensordot(env, a, axes=(2, 0))  # (a, m, p, y)
    t = np.tensordot(t, w, axes=((1, 2), (0, 2)))  # (a, y, s, n)
    return np.tensordot(a.conj(), t, axes=((0, 1), (0, 2))).transpose(0, 2, 1)


def _update_right(env, b, w):
    t = np.tensordot(b, env, axes=(2, 2))  # (x, p, b, n)
    t = np.tensordot(w, t, axes=((2, 3), (1, 3)))  # (m, s, x, b)
    return np.tensordot(b.conj(), t, axes=((1, 2), (1, 3))).transpose(0, 1, 2)


def _right_envs(psi: MPS, mpo: MPO):
    n = psi.n_sites
    envs = [None] * n
    envs[n - 1] = np.ones((1, 1, 1), dtype=complex)
    for k in range(n - 1, 0, -1):
        envs[k - 1] = _update_right(envs[k], psi.tensors[k], mpo.tensors[k])
    return envs


def _apply_one_site(env_l, w, env_r, theta):
    t = np.tensordot(env_l, theta, axes=(2, 0))  # (a, m, p, y)
    t = np.tensordot(t, w, axes=((1, 2), (0, 2)))  # (a, y, s, n)
    return np.tensordot(t, env_r, axes=((1, 3), (2, 1)))  # (a, s, b)


def _apply_two_site(env_l, w1, w2, env_r, theta):
    t = np.tensordot(env_l, theta, axes=(2, 0))  # (a, m, p, q, z)
    t = np.tensordot(t, w1, axes=((1, 2), (0, 2)))  # (a, q, z, s, n)
    t = np.tensordot(t, w2, axes=((4, 1), (0, 2)))  # (a, z, s, u, k)
    return np.tensordot(t, env_r, axes=((1, 4), (2, 1)))  # (a, s, u, b)


def _apply_bond(env_l, env_r, c):
    t = np.tensordot(env_l, c, axes=(2, 0))  # (a, m, y)
    return np.tensordot(t, env_r, axes=((1, 2), (1, 2)))  # (a, b)


def _evolve(apply, tensor, tau, config: TDVPConfig):
    shape = tensor.shape

    def matvec(x):
        return apply(x.reshape(shape)).reshape(-1)

    out = expm_krylov(matvec, tensor.reshape(-1), tau, config.krylov_dim, config.krylov_tol)
    return out.reshape(shape)


def tdvp_step(state: MPS, generator: MPO, config: TDVPConfig):
    """One symmetric TDVP sweep (left-to-right and back, dt/2 each).

    Returns ``(state, StepInfo)``; the returned state has its center on site 0.
    """
    if generator.n_sites != state.n_sites:
        raise ValueError("generator and state lengths differ")
    psi = move_center(state, 0)
    log = TruncationLog()
    if config.dt == 0:
        return psi, StepInfo(log, _trace(psi))
    n = psi.n_sites
    W = generator.tensors
    A = psi.tensors
    half = 0.5 * config.dt
    R = _right_envs(psi, generator)
    L = [None] * n
    L[0] = np.ones((1, 1, 1), dtype=complex)

    if n == 1:
        A[0] = _evolve(lambda x: _apply_one_site(L[0], W[0], R[0], x), A[0], config.dt, config)
    elif config.mode == "two-site":
        for i in range(n - 1):
            theta = np.tensordot(A[i], A[i + 1], axes=(2, 0))
            theta = _evolve(lambda x: _apply_two_site(L[i], W[i], W[i + 1], R[i + 1], x), theta, half, config)
            A[i], c, rep = svd_split(theta, config.chi_max, config.trunc_floor, absorb="right")
            log.add(rep)
            L[i + 1] = _update_left(L[i], A[i], W[i])
            if i < n - 2:
                c = _evolve(lambda x: _apply_one_site(L[i + 1], W[i + 1], R[i + 1], x), c, -half, config)
            A[i + 1] = c
        for i in range(n - 2, -1, -1):
            theta = np.tensordot(A[i], A[i + 1], axes=(2, 0))
            theta = _evolve(lambda x: _apply_two_site(L[i], W[i], W[i + 1], R[i + 1], x), theta, half, config)
            c, A[i + 1], rep = svd_split(theta, config.chi_max, config.trunc_floor, absorb="left")
            log.add(rep)
            R[i] = _update_right(R[i + 1], A[i + 1], W[i + 1])
            if i > 0:
                c = _evolve(lambda x: _apply_one_site(L[i], W[i], R[i], x), c, -half, config)
            A[i] = c
    else:
        for i in range(n):
            A[i] = _evolve(lambda x: _apply_one_site(L[i], W[i], R[i], x), A[i], half, config)
            if i < n - 1:
                cl, d, cr = A[i].shape
                q, r = qr_positive(A[i].reshape(cl * d, cr))
                A[i] = q.reshape(cl, d, -1)
                L[i + 1] = _update_left(L[i], A[i], W[i])
                r = _evolve(lambda x: _apply_bond(L[i + 1], R[i], x), r, -half, config)
                A[i + 1] = np.tensordot(r, A[i + 1], axes=(1, 0))
        for i in range(n - 1, -1, -1):
            A[i] = _evolve(lambda x: _apply_one_site(L[i], W[i], R[i], x), A[i], half, config)
            if i > 0:
                cl, d, cr = A[i].shape
                q, r = qr_positive(A[i].reshape(cl, d * cr).T)
                A[i] = q.T.reshape(-1, d, cr)
                R[i - 1] = _update_right(R[i], A[i], W[i])
                r = _evolve(lambda x: _apply_bond(L[i], R[i - 1], x), r.T, -half, config)
                A[i - 1] = np.tensordot(A[i - 1], r, axes=(2, 0))

    out = type(state)(A, center=0)
    trace = _trace(out)
    if config.renormalize:
        if isinstance(out, MPDO):
            normalize_trace(out)
        else:
            out.scale(1.0 / trace)
    return out, StepInfo(log, trace)


def _trace(psi: MPS) -> complex:
    """Trace for an MPDO, 2-norm for a pure-state MPS."""
    return mpdo_trace(psi) if isinstance(psi, MPDO) else complex(psi.norm())
