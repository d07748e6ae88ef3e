"""Tensor trains for pure states (MPS) and vectorized density operators (MPDO).

Site tensors have index order (left bond, physical, right bond). For an MPDO
the physical index is j = i * d + i', ket index i and bra index i', matching
``nvtensor.model.vectorize``.
"""

from __future__ import annotations

import io

import numpy as np

from .linalg import DEFAULT_FLOOR, NumericalError, TruncationLog, qr_positive, svd, truncated_svd


class MPS:
    """Open-boundary tensor train.

    ``center`` is the orthogonality center when known, otherwise ``None``.
    """

    def __init__(self, tensors, center: int | None = None):
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise ValueError("boundary bonds must have dimension 1")
        for a, b in zip(self.tensors, self.tensors[1:]):
            if a.shape[2] != b.shape[0]:
                raise ValueError(f"bond mismatch {a.shape} vs {b.shape}")
        self.center = center

    def __len__(self) -> int:
        return len(self.tensors)

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def phys_dims(self) -> list[int]:
        return [t.shape[1] for t in self.tensors]

    @property
    def bond_dims(self) -> list[int]:
        """Dimensions of the N-1 internal bonds."""
        return [t.shape[2] for t in self.tensors[:-1]]

    def copy(self):
        return type(self)([t.copy() for t in self.tensors], self.center)

    def to_dense(self) -> np.ndarray:
        out = self.tensors[0]
        for t in self.tensors[1:]:
            out = np.tensordot(out, t, axes=(out.ndim - 1, 0))
        return out.reshape(-1)

    @classmethod
    def from_dense(cls, vec: np.ndarray, dims, chi_max: int | None = None, floor: float = 0.0):
        """Exact (or truncated) tensor train of a dense vector by successive SVDs."""
        dims = list(dims)
        rest = np.asarray(vec, dtype=complex).reshape(1, -1)
        tensors = []
        for d in dims[:-1]:
            chi = rest.shape[0]
            u, s, vh, _ = truncated_svd(rest.reshape(chi * d, -1), chi_max, floor)
            tensors.append(u.reshape(chi, d, -1))
            rest = s[:, None] * vh
        tensors.append(rest.reshape(rest.shape[0], dims[-1], 1))
        return cls(tensors, center=len(dims) - 1)

    def scale(self, c) -> None:
        k = self.center if self.center is not None else 0
        self.tensors[k] = self.tensors[k] * c

    def norm(self) -> float:
        if self.center is not None:
            return float(np.linalg.norm(self.tensors[self.center]))
        env = np.ones((1, 1), dtype=complex)
        for t in self.tensors:
            env = np.einsum("ab,asc,bsd->cd", env, t.conj(), t)
        return float(np.sqrt(abs(env[0, 0])))

    def describe(self) -> str:
        """Site shapes and bond spectra as plain text for debugging."""
        buf = io.StringIO()
        buf.write(f"{type(self).__name__} n_sites={self.n_sites} center={self.center}\n")
        for k, t in enumerate(self.tensors):
            buf.write(f"site {k}: shape={t.shape}\n")
        for b in range(1, self.n_sites):
            s = bond_spectrum(self, b)
            vals = " ".join(f"{x:.6e}" for x in s)
            buf.write(f"bond {b}: chi={len(s)} spectrum=[{vals}]\n")
        return buf.getvalue()


class MPDO(MPS):
    """Vectorized density operator as a tensor train with physical dimension d^2."""

    @property
    def local_dim(self) -> int:
        return int(round(np.sqrt(self.tensors[0].shape[1])))

    def to_density_matrix(self) -> np.ndarray:
        """Unvectorize into the dense N-site density matrix."""
        n, d = self.n_sites, self.local_dim
        t = self.to_dense().reshape((d,) * (2 * n))
        order = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
        return t.transpose(order).reshape(d**n, d**n)

    @classmethod
    def from_density_matrix(cls, rho: np.ndarray, n: int, d: int = 3, chi_max=None, floor: float = 0.0):
        t = np.asarray(rho, dtype=complex).reshape((d,) * (2 * n))
        order = [k for s in range(n) for k in (s, n + s)]
        return cls.from_dense(t.transpose(order).reshape(-1), [d * d] * n, chi_max, floor)


def _check_density_matrix(rho: np.ndarray, tol: float = 1e-10) -> None:
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if not np.allclose(rho, rho.conj().T, atol=tol, rtol=0):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise ValueError(f"density matrix has trace {np.trace(rho)}")
    if np.linalg.eigvalsh(rho).min() < -tol:
        raise ValueError("density matrix is not positive semidefinite")


def product_mpdo(local_density_matrices) -> MPDO:
    """Bond-dimension-one MPDO of a product of single-site density matrices."""
    tensors = []
    for rho in local_density_matrices:
        rho = np.asarray(rho, dtype=complex)
        _check_density_matrix(rho)
        tensors.append(rho.reshape(1, -1, 1))
    return MPDO(tensors, center=None)


def product_mps(local_states) -> MPS:
    tensors = [np.asarray(v, dtype=complex).reshape(1, -1, 1) for v in local_states]
    return MPS(tensors, center=None)


def pure_mpdo(mps: MPS) -> MPDO:
    """Vectorize |psi><psi| site by site; bond dimensions are squared."""
    tensors = []
    for a in mps.tensors:
        cl, d, cr = a.shape
        t = np.einsum("aib,cjd->acijbd", a, a.conj()).reshape(cl * cl, d * d, cr * cr)
        tensors.append(t)
    return MPDO(tensors, center=None)


def random_mps(dims, chi: int, rng: np.random.Generator) -> MPS:
    """Normalized random MPS with bonds capped at ``chi`` and by the exact maximum."""
    n = len(dims)
    bonds = [1]
    for b in range(1, n):
        left = int(np.prod(dims[:b]))
        right = int(np.prod(dims[b:]))
        bonds.append(min(chi, left, right))
    bonds.append(1)
    tensors = [
        rng.normal(size=(bonds[k], dims[k], bonds[k + 1]))
        + 1j * rng.normal(size=(bonds[k], dims[k], bonds[k + 1]))
        for k in range(n)
    ]
    psi = canonicalize(MPS(tensors), 0)
    psi.tensors[0] /= np.linalg.norm(psi.tensors[0])
    return psi


def canonicalize(state: MPS, center: int) -> MPS:
    """Mixed-canonical copy of ``state`` with orthogonality center at ``center``.

    QR factors carry a non-negative diagonal so repeating the operation is a
    no-op up to rounding.
    """
    n = state.n_sites
    if not 0 <= center < n:
        raise IndexError(f"center {center} outside 0..{n - 1}")
    tensors = [t.copy() for t in state.tensors]
    for k in range(center):
        cl, d, cr = tensors[k].shape
        q, r = qr_positive(tensors[k].reshape(cl * d, cr))
        tensors[k] = q.reshape(cl, d, -1)
        tensors[k + 1] = np.tensordot(r, tensors[k + 1], axes=(1, 0))
    for k in range(n - 1, center, -1):
        cl, d, cr = tensors[k].shape
        q, r = qr_positive(tensors[k].reshape(cl, d * cr).T)
        tensors[k] = q.T.reshape(-1, d, cr)
        tensors[k - 1] = np.tensordot(tensors[k - 1], r.T, axes=(2, 0))
    return type(state)(tensors, center=center)


def move_center(state: MPS, center: int) -> MPS:
    """Shift an existing orthogonality center; falls back to full canonicalization."""
    if state.center is None:
        return canonicalize(state, center)
    tensors = list(state.tensors)
    k = state.center
    while k < center:
        cl, d, cr = tensors[k].shape
        q, r = qr_positive(tensors[k].reshape(cl * d, cr))
        tensors[k] = q.reshape(cl, d, -1)
        tensors[k + 1] = np.tensordot(r, tensors[k + 1], axes=(1, 0))
        k += 1
    while k > center:
        cl, d, cr = tensors[k].shape
        q, r = qr_positive(tensors[k].reshape(cl, d * cr).T)
        tensors[k] = q.T.reshape(-1, d, cr)
        tensors[k - 1] = np.tensordot(tensors[k - 1], r.T, axes=(2, 0))
        k -= 1
    return type(state)(tensors, center=center)


def compress(state: MPS, chi_max: int | None = None, floor: float = DEFAULT_FLOOR):
    """Truncate all bonds by a right-to-left SVD sweep; returns ``(state, log)``.

    The result is left-canonical with its center on site 0.
    """
    log = TruncationLog()
    psi = canonicalize(state, state.n_sites - 1)
    tensors = psi.tensors
    for k in range(state.n_sites - 1, 0, -1):
        cl, d, cr = tensors[k].shape
        u, s, vh, rep = truncated_svd(tensors[k].reshape(cl, d * cr), chi_max, floor)
        log.add(rep)
        tensors[k] = vh.reshape(-1, d, cr)
        tensors[k - 1] = np.tensordot(tensors[k - 1], u * s[None, :], axes=(2, 0))
    return type(state)(tensors, center=0), log


def add(a: MPS, b: MPS, alpha=1.0, beta=1.0) -> MPS:
    """Direct-sum representation of alpha*a + beta*b (bonds add up)."""
    n = a.n_sites
    if n != b.n_sites:
        raise ValueError("length mismatch")
    if n == 1:
        return type(a)([alpha * a.tensors[0] + beta * b.tensors[0]])
    tensors = []
    for k, (x, y) in enumerate(zip(a.tensors, b.tensors)):
        if k == 0:
            t = np.concatenate([alpha * x, beta * y], axis=2)
        elif k == n - 1:
            t = np.concatenate([x, y], axis=0)
        else:
            cl = x.shape[0] + y.shape[0]
            cr = x.shape[2] + y.shape[2]
            t = np.zeros((cl, x.shape[1], cr), dtype=complex)
            t[: x.shape[0], :, : x.shape[2]] = x
            t[x.shape[0]:, :, x.shape[2]:] = y
        tensors.append(t)
    return type(a)(tensors)


# ---------------------------------------------------------------------------
# traces and expectation values


def _identity_row(d: int) -> np.ndarray:
    return np.eye(d).reshape(-1)


def _observable_row(op: np.ndarray) -> np.ndarray:
    # Tr(rho O) = sum_j vec(rho)_j vec(O^T)_j
    return np.asarray(op).T.reshape(-1)


def _site_transfer(state: MPDO, rows):
    """Contract each site's physical index against a row vector."""
    return [np.einsum("ajb,j->ab", t, r) for t, r in zip(state.tensors, rows)]


def _chain_product(mats) -> complex:
    out = mats[0]
    for m in mats[1:]:
        out = out @ m
    return complex(out[0, 0])


def mpdo_trace(state: MPDO) -> complex:
    idr = _identity_row(state.local_dim)
    return _chain_product(_site_transfer(state, [idr] * state.n_sites))


def mpdo_expectation(state: MPDO, observable, normalized: bool = True) -> complex:
    """Tr(rho O) for a sum of single-site operators ``[(site, op), ...]``.

    With ``normalized`` the result is divided by Tr(rho).
    """
    d = state.local_dim
    idr = _identity_row(d)
    ident = _site_transfer(state, [idr] * state.n_sites)
    n = state.n_sites
    # prefix/suffix products of the identity transfer matrices
    left = [np.ones((1, 1), dtype=complex)]
    for m in ident:
        left.append(left[-1] @ m)
    right = [np.ones((1, 1), dtype=complex)]
    for m in reversed(ident):
        right.append(m @ right[-1])
    right = right[::-1]
    total = 0.0j
    for site, op in observable:
        if not 0 <= site < n:
            raise IndexError(f"observable on site {site} outside chain")
        m = np.einsum("ajb,j->ab", state.tensors[site], _observable_row(op))
        total += complex((left[site] @ m @ right[site + 1])[0, 0])
    if not normalized:
        return total
    tr = complex(left[-1][0, 0])
    if tr == 0:
        raise NumericalError("zero trace")
    return total / tr


def site_averaged(state: MPDO, op: np.ndarray, normalized: bool = True) -> complex:
    """(1/N) sum_i Tr(rho O_i), e.g. the magnetization per spin for O = Sz."""
    n = state.n_sites
    return mpdo_expectation(state, [(s, op) for s in range(n)], normalized) / n


def normalize_trace(state: MPDO) -> complex:
    """Rescale ``state`` in place to unit trace and return the previous trace."""
    tr = mpdo_trace(state)
    if tr == 0 or not np.isfinite(tr):
        raise NumericalError(f"cannot normalise trace {tr}")
    state.scale(1.0 / tr)
    return tr


# ---------------------------------------------------------------------------
# entanglement


def bond_spectrum(state: MPS, bond: int) -> np.ndarray:
    """Raw singular values across the cut between sites ``bond-1`` and ``bond``."""
    n = state.n_sites
    if not 1 <= bond < n:
        raise IndexError(f"bond {bond} outside 1..{n - 1}")
    psi = move_center(state, bond) if state.center is not None else canonicalize(state, bond)
    t = psi.tensors[bond]
    return svd(t.reshape(t.shape[0], -1))[1]


def _entropy_bits(s: np.ndarray) -> float:
    w = np.asarray(s, dtype=float) ** 2
    total = w.sum()
    if total <= 0 or not np.isfinite(total):
        raise NumericalError("bond spectrum is zero or non-finite")
    p = w / total
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)) + 0.0)


def operator_entanglement_entropy(state: MPDO, bond: int | None = None) -> float:
    """Operator entanglement entropy in bits at ``bond`` (default: middle bond).

    The bond spectrum is normalized so its squares sum to one.
    """
    bond = state.n_sites // 2 if bond is None else bond
    return _entropy_bits(bond_spectrum(state, bond))


def entanglement_entropy(state: MPS, bond: int | None = None) -> float:
    """Von Neumann entropy in bits of the reduced state left of ``bond``."""
    bond = state.n_sites // 2 if bond is None else bond
    return _entropy_bits(bond_spectrum(state, bond))
