"""Exact reference propagation of the full vectorized density matrix.

The generator is assembled as a sparse matrix from the local terms and the
state is propagated with scipy's ``expm_multiply``, which is independent of
the Arnoldi routine used by the tensor-network engines.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from ..model import ModelSpec, build_superop_terms, spin1_operators

MAX_ED_SITES = 6


class CapacityError(RuntimeError):
    """The requested exact computation does not fit the configured limits."""


def sparse_generator(terms, n: int, d: int) -> sp.csr_matrix:
    """Sparse sum of local terms on an n-site chain with site dimension d."""
    out = sp.csr_matrix((d**n, d**n), dtype=complex)
    for t in terms:
        for fac in t.factors:
            factors = [sp.identity(d, dtype=complex, format="csr")] * n
            for op, s in zip(fac, t.sites):
                factors[s] = sp.csr_matrix(op)
            m = factors[0]
            for f in factors[1:]:
                m = sp.kron(m, f, format="csr")
            out = out + m
    out.eliminate_zeros()
    return out.tocsr()


def sparse_liouvillian(model: ModelSpec) -> sp.csr_matrix:
    if model.n_sites > MAX_ED_SITES:
        raise CapacityError(f"exact evolution limited to {MAX_ED_SITES} sites, got {model.n_sites}")
    return sparse_generator(build_superop_terms(model), model.n_sites, 9)


def product_vector(local_density_matrices) -> np.ndarray:
    """Site-grouped vectorization of a product density matrix."""
    out = np.ones(1, dtype=complex)
    for rho in local_density_matrices:
        out = np.kron(out, np.asarray(rho, dtype=complex).reshape(-1))
    return out


def _site_rows(v: np.ndarray, n: int, row: np.ndarray) -> np.ndarray:
    """Contract every site of a grouped vector with ``row`` except one, for each site."""
    t = v.reshape((9,) * n)
    out = []
    for s in range(n):
        x = t
        for k in range(n - 1, -1, -1):
            if k != s:
                x = np.tensordot(x, row, axes=(k, 0))
        out.append(x)
    return out


def dense_trace(v: np.ndarray, n: int) -> complex:
    idr = np.eye(3).reshape(-1)
    t = v.reshape((9,) * n)
    for _ in range(n):
        t = np.tensordot(t, idr, axes=(t.ndim - 1, 0))
    return complex(t)


def dense_site_averaged(v: np.ndarray, n: int, op: np.ndarray, normalized: bool = True) -> complex:
    idr = np.eye(3).reshape(-1)
    obs = np.asarray(op).T.reshape(-1)
    reduced = _site_rows(v, n, idr)
    val = sum(complex(r @ obs) for r in reduced) / n
    if normalized:
        val /= dense_trace(v, n)
    return val


def dense_opee(v: np.ndarray, n: int, bond: int | None = None) -> float:
    bond = n // 2 if bond is None else bond
    s = np.linalg.svd(v.reshape(9**bond, -1), compute_uv=False)
    p = s**2 / np.sum(s**2)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)) + 0.0)


def dense_density_matrix(v: np.ndarray, n: int) -> np.ndarray:
    t = v.reshape((3,) * (2 * n))
    order = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
    return t.transpose(order).reshape(3**n, 3**n)


def ed_propagate(generator, v0: np.ndarray, dt: float, n_steps: int, chunk: int = 50):
    """States at times 0, dt, ..., n_steps*dt as an iterator."""
    v = np.asarray(v0, dtype=complex)
    yield v
    done = 0
    while done < n_steps:
        k = min(chunk, n_steps - done)
        block = expm_multiply(generator, v, start=0.0, stop=k * dt, num=k + 1, endpoint=True)
        for row in block[1:]:
            yield row
        v = block[-1]
        done += k


def ed_reference_evolve(model: ModelSpec, dt: float, n_steps: int, record=("sz", "trace"), initial=None):
    """Exact trajectory; see :func:`nvtensor.evolve.trajectory.run_trajectory`."""
    from .trajectory import Trajectory

    n = model.n_sites
    if n > MAX_ED_SITES:
        raise CapacityError(f"exact evolution limited to {MAX_ED_SITES} sites, got {n}")
    lv = sparse_liouvillian(model)
    if initial is None:
        zero = np.diag([0.0, 1.0, 0.0]).astype(complex)
        initial = product_vector([zero] * n)
    sz = spin1_operators()[2]
    traj = Trajectory(dt=dt)
    for k, v in enumerate(ed_propagate(lv, initial, dt, n_steps)):
        tr = dense_trace(v, n)
        traj.append(
            time=k * dt,
            sz=dense_site_averaged(v, n, sz) if "sz" in record else None,
            opee=dense_opee(v, n) if "opee" in record and n > 1 else None,
            trace=tr,
            epsilon=0.0,
        )
        if "states" in record:
            traj.states.append(v)
    return traj
