"""Trajectory driver shared by the TDVP, W^II and exact engines."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..model import ModelSpec, build_superop_terms, spin1_operators
from ..tn.linalg import NumericalError, TruncationLog
from ..tn.mpo import MPO, mpo_from_terms
from ..tn.mps import MPDO, operator_entanglement_entropy, product_mpdo, site_averaged
from .krylov import KrylovConvergenceError
from .tdvp import TDVPConfig, tdvp_step
from .wii import WIIConfig, WIIPropagator, wii_step

log = logging.getLogger(__name__)

ENGINES = ("tdvp", "wii", "ed")
DEFAULT_RECORD = frozenset({"sz", "opee", "trace", "epsilon"})


@dataclass
class Trajectory:
    """Time series recorded along one run.

    ``trace`` holds the raw trace before renormalization at each step and
    ``epsilon`` the truncation error of that step.
    """

    dt: float
    times: list = field(default_factory=list)
    sz: list = field(default_factory=list)
    opee: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    epsilon: list = field(default_factory=list)
    truncation: TruncationLog = field(default_factory=TruncationLog)
    states: list = field(default_factory=list)
    state_times: list = field(default_factory=list)
    failure: str | None = None

    def append(self, time, sz=None, opee=None, trace=None, epsilon=None):
        self.times.append(time)
        self.sz.append(sz)
        self.opee.append(opee)
        self.trace.append(trace)
        self.epsilon.append(epsilon)

    def __len__(self) -> int:
        return len(self.times)

    def array(self, name: str) -> np.ndarray:
        return np.array(getattr(self, name))

    @property
    def sz_array(self) -> np.ndarray:
        return np.array(self.sz, dtype=complex)

    @property
    def trace_drift(self) -> np.ndarray:
        return np.abs(np.array(self.trace, dtype=complex) - 1.0)


def liouvillian_mpo(model: ModelSpec, compress_tol: float | None = 1e-13) -> MPO:
    """MPO of the vectorized Lindblad generator."""
    return mpo_from_terms(build_superop_terms(model), model.n_sites, compress_tol)


def initial_state(n: int) -> MPDO:
    """|0><0| on every site."""
    zero = np.diag([0.0, 1.0, 0.0]).astype(complex)
    return product_mpdo([zero] * n)


def run_trajectory(
    model: ModelSpec,
    engine: str,
    config,
    n_steps: int,
    record=DEFAULT_RECORD,
    state_every: int | None = None,
    initial: MPDO | None = None,
) -> Trajectory:
    """Evolve |0>^N for ``n_steps`` steps and record the requested series.

    ``record`` may contain "sz" (site-averaged <Sz>, complex), "opee"
    (middle-bond operator entanglement), "trace" and "epsilon". With
    ``state_every`` the state is stored every that many steps (MPDO for the
    tensor-network engines, grouped dense vector for "ed"). Engine failures
    stop the run and are reported in ``Trajectory.failure``.
    """
    record = frozenset(record)
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}, expected one of {ENGINES}")
    if engine == "ed":
        from .exact import ed_reference_evolve

        rec = set(record) | ({"states"} if state_every else set())
        start = initial.to_dense() if initial is not None else None
        traj = ed_reference_evolve(model, config.dt, n_steps, rec, start)
        if state_every:
            keep = list(range(0, n_steps + 1, state_every))
            traj.states = [traj.states[k] for k in keep]
            traj.state_times = [traj.times[k] for k in keep]
        return traj

    n = model.n_sites
    sz_op = spin1_operators()[2]
    if engine == "tdvp":
        generator = liouvillian_mpo(model)

        def step(psi):
            return tdvp_step(psi, generator, config)

    else:
        propagator = WIIPropagator.from_model(model, config)

        def step(psi):
            return wii_step(psi, propagator, config)

    psi = initial.copy() if initial is not None else initial_state(n)
    traj = Trajectory(dt=config.dt)

    def observe(k, psi, trace, eps):
        sz = site_averaged(psi, sz_op) if "sz" in record else None
        opee = operator_entanglement_entropy(psi) if "opee" in record and n > 1 else None
        traj.append(k * config.dt, sz, opee, trace, eps)
        if state_every and k % state_every == 0:
            traj.states.append(psi.copy())
            traj.state_times.append(k * config.dt)

    observe(0, psi, 1.0 + 0j, 0.0)
    for k in range(1, n_steps + 1):
        try:
            psi, info = step(psi)
            traj.truncation.extend(info.truncation)
            observe(k, psi, info.trace_before, info.truncation.epsilon)
        except (NumericalError, KrylovConvergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
            traj.failure = f"step {k}: {exc}"
            log.warning("%s engine failed at step %d: %s", engine, k, exc)
            break
    return traj


def engine_config(engine: str, dt: float, chi_max: int = 64, **kw):
    """Build the config object for ``engine`` from shared keyword arguments."""
    if engine == "tdvp":
        keys = {"mode", "krylov_dim", "krylov_tol", "trunc_floor", "renormalize"}
        return TDVPConfig(dt=dt, chi_max=chi_max, **{k: v for k, v in kw.items() if k in keys})
    if engine == "wii":
        keys = {"complex_substeps", "trunc_floor", "renormalize"}
        return WIIConfig(dt=dt, chi_max=chi_max, **{k: v for k, v in kw.items() if k in keys})
    if engine == "ed":
        return EDConfig(dt=dt)
    raise ValueError(f"unknown engine {engine!r}")


@dataclass(frozen=True)
class EDConfig:
    dt: float
