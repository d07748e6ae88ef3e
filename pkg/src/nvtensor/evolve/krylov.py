"""Arnoldi approximation of exp(t A) v for non-Hermitian A."""

from __future__ import annotations

import numpy as np
import scipy.linalg

# Krylov sizes at which convergence is tested before the full dimension is reached
_CHECKPOINTS = (4, 6, 8, 11, 14, 17)


class KrylovConvergenceError(RuntimeError):
    def __init__(self, residual: float, message: str = ""):
        self.residual = residual
        super().__init__(message or f"Krylov exponential did not converge (residual {residual:.3e})")


def arnoldi(matvec, v: np.ndarray, m: int, breakdown_tol: float = 1e-14, stop=None):
    """Orthonormal Krylov basis and Hessenberg matrix of ``matvec`` started at ``v``.

    Orthogonalization is classical Gram-Schmidt applied twice. ``stop(k, H,
    h_next)`` may end the iteration early. Returns ``(V, H, beta, h_next)``
    with ``V`` of shape (k, n), ``H`` of shape (k, k) and ``h_next`` the
    subdiagonal element that would follow (0 on happy breakdown).
    """
    beta = float(np.linalg.norm(v))
    V = np.zeros((m + 1, v.size), dtype=complex)
    H = np.zeros((m + 1, m), dtype=complex)
    V[0] = v / beta
    for j in range(m):
        w = matvec(V[j])
        basis = V[: j + 1]
        c = basis.conj() @ w
        w = w - c @ basis
        c2 = basis.conj() @ w
        w = w - c2 @ basis
        H[: j + 1, j] = c + c2
        h = float(np.linalg.norm(w))
        H[j + 1, j] = h
        k = j + 1
        if h < breakdown_tol * max(beta, 1.0):
            return V[:k], H[:k, :k], beta, 0.0
        V[k] = w / h
        if stop is not None and k < m and stop(k, H[:k, :k], h):
            return V[:k], H[:k, :k], beta, h
    return V[:m], H[:m, :m], beta, float(H[m, m - 1].real)


def expm_krylov(
    matvec,
    v: np.ndarray,
    t: complex,
    m: int = 20,
    tol: float = 1e-10,
    max_substeps: int = 10000,
) -> np.ndarray:
    """exp(t A) v by restarted Arnoldi with adaptive time substeps.

    The error of a substep covering a fraction ``tau`` of ``t`` is estimated
    as ``beta * h_{k+1,k} * |tau t| * |[exp(tau t H_k)]_{k,0}|`` and must stay
    below ``tol * |v| * tau``. The Krylov space stops growing as soon as the
    remaining time passes this test; otherwise the substep is shortened.
    """
    v = np.asarray(v, dtype=complex)
    if t == 0 or not np.any(v):
        return v.copy()
    if m < 2:
        raise ValueError("Krylov dimension must be at least 2")
    m = min(m, v.size)
    w = v.copy()
    vnorm = float(np.linalg.norm(v))
    t_done = 0.0
    tau = 1.0
    err = np.inf
    for _ in range(max_substeps):
        remaining = 1.0 - t_done
        tau = min(tau, remaining)
        beta = float(np.linalg.norm(w))

        def converged(k, H, h, tau=tau, beta=beta):
            if k not in _CHECKPOINTS:
                return False
            E = scipy.linalg.expm(tau * t * H)
            return beta * h * abs(tau * t) * abs(E[-1, 0]) <= tol * vnorm * tau

        V, H, beta, h_next = arnoldi(matvec, w, m, stop=converged)
        while True:
            dt = tau * t
            E = scipy.linalg.expm(dt * H)
            err = beta * h_next * abs(dt) * abs(E[-1, 0])
            if h_next == 0.0 or err <= tol * vnorm * tau:
                break
            tau *= 0.5
            if tau < 1e-12:
                raise KrylovConvergenceError(err)
        w = beta * (E[:, 0] @ V)
        t_done += tau
        if t_done >= 1.0 - 1e-15:
            return w
        if err < 0.1 * tol * vnorm * tau:
            tau *= 2.0
    raise KrylovConvergenceError(err)
