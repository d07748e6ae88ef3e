"""W^II MPO propagator for sums of one- and two-site generator terms.

For every pair of incoming/outgoing channels (a, b) at a site, the operator

    M = tau D + sqrt(tau) C_b s2 + sqrt(tau) B_a s1 + A_ab s1 s2

is exponentiated on the physical space times two hard-core auxiliary modes
(s = |0><1|). The propagator elements are the blocks of exp(M) that map the
auxiliary vacuum to |a b> occupations, so products of disjoint terms are
resummed exactly and overlapping ones to first order in tau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..model import ModelSpec, build_superop_terms
from ..tn.linalg import DEFAULT_FLOOR, NumericalError, TruncationLog
from ..tn.mpo import MPO, apply_mpo, fsm_mpo
from ..tn.mps import MPS, normalize_trace, mpdo_trace
from .tdvp import StepInfo


@dataclass(frozen=True)
class WIIConfig:
    dt: float
    complex_substeps: bool = True
    chi_max: int = 64
    trunc_floor: float = DEFAULT_FLOOR
    renormalize: bool = True

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.chi_max < 1:
            raise ValueError("chi_max must be at least 1")


def wii_site_tensor(A, B, C, D, tau: complex) -> np.ndarray:
    d = D.shape[0]
    nl, nr = B.shape[0], C.shape[0]
    rt = np.sqrt(complex(tau))
    out = np.zeros((1 + nl, d, d, 1 + nr), dtype=complex)
    # block indices of the auxiliary Fock states |n1 n2>
    v00, v01, v10, v11 = (slice(k * d, (k + 1) * d) for k in range(4))
    for a in range(1 + nl):
        for b in range(1 + nr):
            if a > 0 and b > 0 and not np.any(A[a - 1, b - 1]) and not np.any(B[a - 1]) and not np.any(C[b - 1]):
                continue
            m = np.zeros((4 * d, 4 * d), dtype=complex)
            for blk in (v00, v01, v10, v11):
                m[blk, blk] = tau * D
            if b > 0:
                m[v00, v01] = rt * C[b - 1]
                m[v10, v11] = rt * C[b - 1]
            if a > 0:
                m[v00, v10] = rt * B[a - 1]
                m[v01, v11] = rt * B[a - 1]
            if a > 0 and b > 0:
                m[v00, v11] = A[a - 1, b - 1]
            e = scipy.linalg.expm(m)
            if a == 0 and b == 0:
                out[0, :, :, 0] = e[v00, v00]
            elif b == 0:
                out[a, :, :, 0] = e[v00, v10]
            elif a == 0:
                out[0, :, :, b] = e[v00, v01]
            else:
                out[a, :, :, b] = e[v00, v11]
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite W^II propagator element")
    return out


def wii_mpo(terms, n_sites: int, tau: complex) -> MPO:
    """First-order W^II approximation of exp(tau * sum(terms))."""
    _, blocks = fsm_mpo(terms, n_sites)
    return MPO([wii_site_tensor(*blk, tau) for blk in blocks])


class WIIPropagator:
    """Cached W^II MPOs for one time step (one or two complex substeps)."""

    def __init__(self, terms, n_sites: int, config: WIIConfig):
        self.config = config
        if config.complex_substeps:
            taus = [0.5 * (1 + 1j) * config.dt, 0.5 * (1 - 1j) * config.dt]
        else:
            taus = [config.dt]
        self.mpos = [wii_mpo(terms, n_sites, tau) for tau in taus]

    @classmethod
    def from_model(cls, model: ModelSpec, config: WIIConfig) -> "WIIPropagator":
        return cls(build_superop_terms(model), model.n_sites, config)


def wii_step(state: MPS, propagator, config: WIIConfig):
    """Apply one W^II time step, truncate to ``chi_max`` and renormalize the trace.

    ``propagator`` is a :class:`WIIPropagator` or a :class:`ModelSpec`.
    """
    if isinstance(propagator, ModelSpec):
        propagator = WIIPropagator.from_model(propagator, config)
    log = TruncationLog()
    psi = state
    for mpo in propagator.mpos:
        psi, sub = apply_mpo(mpo, psi, config.chi_max, config.trunc_floor)
        log.extend(sub)
    trace = mpdo_trace(psi)
    if config.renormalize:
        normalize_trace(psi)
    return psi, StepInfo(log, trace)
