"""SVD splitting with truncation bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

DEFAULT_FLOOR = 1e-12


class NumericalError(ArithmeticError):
    """Raised on non-finite data or degenerate normalisations."""


@dataclass
class TruncationReport:
    """Singular values kept and discarded at one bond.

    ``epsilon`` is the square root of the summed squares of the discarded
    values, which equals the Frobenius error of the truncated split.
    """

    kept: int
    singular_values: np.ndarray
    discarded: np.ndarray

    @property
    def epsilon(self) -> float:
        return float(np.sqrt(np.sum(self.discarded**2)))


@dataclass
class TruncationLog:
    """Accumulates truncation reports over a sweep or a whole trajectory."""

    reports: list = field(default_factory=list)

    def add(self, report: TruncationReport) -> None:
        self.reports.append(report)

    def extend(self, other: "TruncationLog") -> None:
        self.reports.extend(other.reports)

    @property
    def epsilon(self) -> float:
        """Root-sum-square of all discarded values."""
        return float(np.sqrt(sum(r.epsilon**2 for r in self.reports)))

    @property
    def epsilon_sum(self) -> float:
        """Sum of per-bond errors, a triangle-inequality bound on the total error."""
        return float(sum(r.epsilon for r in self.reports))

    @property
    def max_kept(self) -> int:
        return max((r.kept for r in self.reports), default=0)


def svd(mat: np.ndarray):
    """Thin SVD, falling back to the slower but more robust LAPACK driver."""
    if not np.all(np.isfinite(mat)):
        raise NumericalError("non-finite entries in SVD input")
    try:
        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")


def truncated_svd(mat: np.ndarray, chi_max: int | None = None, floor: float = DEFAULT_FLOOR):
    """SVD of a matrix keeping at most ``chi_max`` values above ``floor * s_max``.

    Returns ``(u, s, vh, report)``. At least one value is always kept.
    """
    if chi_max is not None and chi_max < 1:
        raise ValueError("chi_max must be at least 1")
    if floor < 0:
        raise ValueError("floor must be non-negative")
    u, s, vh = svd(mat)
    keep = len(s)
    if floor > 0 and s.size:
        keep = int(np.count_nonzero(s > floor * s[0]))
    keep = max(1, keep)
    if chi_max is not None:
        keep = min(keep, chi_max)
    report = TruncationReport(kept=keep, singular_values=s[:keep].copy(), discarded=s[keep:].copy())
    return u[:, :keep], s[:keep], vh[:keep], report


def svd_split(theta: np.ndarray, chi_max: int | None = None, floor: float = DEFAULT_FLOOR, absorb: str = "right"):
    """Split a two-site tensor ``(chi_l, d1, d2, chi_r)`` into two site tensors.

    The factor that does not absorb the singular values is an isometry: the
    left tensor is left-orthonormal for ``absorb="right"`` and the right tensor
    is right-orthonormal for ``absorb="left"``. ``absorb="none"`` leaves both
    isometric and the singular values can be read from the report.
    """
    chi_l, d1, d2, chi_r = theta.shape
    u, s, vh, report = truncated_svd(theta.reshape(chi_l * d1, d2 * chi_r), chi_max, floor)
    if absorb == "right":
        vh = s[:, None] * vh
    elif absorb == "left":
        u = u * s[None, :]
    elif absorb != "none":
        raise ValueError(f"unknown absorb mode {absorb!r}")
    k = len(s)
    return u.reshape(chi_l, d1, k), vh.reshape(k, d2, chi_r), report


def qr_positive(mat: np.ndarray):
    """Thin QR with a non-negative real diagonal in R, which makes it unique."""
    q, r = np.linalg.qr(mat)
    diag = np.diagonal(r)
    phase = np.where(np.abs(diag) > 0, diag / np.where(diag == 0, 1, np.abs(diag)), 1.0)
    return q * phase[None, :], r * phase.conj()[:, None]
