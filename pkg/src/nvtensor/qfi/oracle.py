"""Dense spectral reference for the quantum Fisher information."""

from __future__ import annotations

import numpy as np


def qfi_exact_oracle(rho: np.ndarray, drho: np.ndarray, cutoff: float = 1e-10):
    """QFI and SLD of a dense density matrix from its eigendecomposition.

    Pairs of eigenvectors with ``lambda_i + lambda_j <= cutoff`` are dropped,
    so the returned SLD solves ``drho = (L rho + rho L) / 2`` on the support
    of ``rho`` and vanishes outside it. Returns ``(F, L)``.
    """
    rho = np.asarray(rho, dtype=complex)
    drho = np.asarray(drho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape != drho.shape:
        raise ValueError("rho and drho must be square matrices of equal shape")
    rho = 0.5 * (rho + rho.conj().T)
    drho = 0.5 * (drho + drho.conj().T)
    w, v = np.linalg.eigh(rho)
    d = v.conj().T @ drho @ v
    s = w[:, None] + w[None, :]
    keep = s > cutoff
    coeff = np.zeros_like(s)
    coeff[keep] = 2.0 / s[keep]
    sld_eig = coeff * d
    value = float(np.sum(coeff[keep] * np.abs(d[keep]) ** 2))
    sld = v @ sld_eig @ v.conj().T
    return value, 0.5 * (sld + sld.conj().T)
