"""QFI along a trajectory: finite-difference derivative states and warm-started sweeps."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..evolve.exact import dense_density_matrix, ed_reference_evolve
from ..evolve.tdvp import TDVPConfig
from ..evolve.trajectory import EDConfig, run_trajectory
from ..evolve.wii import WIIConfig
from ..model import Geometry, ModelSpec, mhz
from ..tn.linalg import DEFAULT_FLOOR, NumericalError
from ..tn.mps import MPDO, add, compress
from .oracle import qfi_exact_oracle
from .sweep import QFIResult, qfi_local_sweep

log = logging.getLogger(__name__)

NORMALIZATIONS = ("sql", "raw")


@dataclass(frozen=True)
class DerivativeConfig:
    """Central finite difference in gs*muB*Bz with step ``delta`` (rad/us)."""

    delta: float = 1e-3 * mhz(1.0)
    scheme: str = "central"
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.scheme != "central":
            raise ValueError(f"unsupported difference scheme {self.scheme!r}")


def engine_name(config) -> str:
    if isinstance(config, TDVPConfig):
        return "tdvp"
    if isinstance(config, WIIConfig):
        return "wii"
    if isinstance(config, EDConfig):
        return "ed"
    raise TypeError(f"unrecognized engine config {type(config).__name__}")


def _states(model: ModelSpec, config, n_steps: int, every: int) -> list[MPDO]:
    engine = engine_name(config)
    traj = run_trajectory(model, engine, config, n_steps, record=(), state_every=every)
    if traj.failure:
        raise NumericalError(traj.failure)
    if engine == "ed":
        return [MPDO.from_dense(v, [9] * model.n_sites) for v in traj.states]
    return traj.states


def derivative_series(model: ModelSpec, config, n_steps: int, every: int, dconfig: DerivativeConfig | None = None):
    """States and derivative states at steps 0, every, 2*every, ..., n_steps.

    Returns ``(times, rhos, drhos)``. The derivative is
    ``(rho(B + delta/2) - rho(B - delta/2)) / delta`` assembled as an MPDO sum
    and recompressed.
    """
    dconfig = dconfig or DerivativeConfig()
    if every < 1:
        raise ValueError("every must be at least 1")
    h = dconfig.delta
    rhos = _states(model, config, n_steps, every)
    plus = _states(model.with_zeeman_shift(0.5 * h), config, n_steps, every)
    minus = _states(model.with_zeeman_shift(-0.5 * h), config, n_steps, every)
    drhos = [compress(add(p, m, 1.0 / h, -1.0 / h), floor=dconfig.floor)[0] for p, m in zip(plus, minus)]
    times = np.arange(len(rhos)) * every * config.dt
    return times, rhos, drhos


def derivative_mpdo(model: ModelSpec, t: float, config, dconfig: DerivativeConfig | None = None):
    """``(rho, drho)`` at time ``t``, which must be a multiple of ``config.dt``."""
    n_steps = int(round(t / config.dt)) if config.dt > 0 else 0
    if abs(n_steps * config.dt - t) > 1e-9 * max(1.0, t):
        raise ValueError("t must be a whole number of time steps")
    _, rhos, drhos = derivative_series(model, config, n_steps, max(n_steps, 1), dconfig)
    return rhos[-1], drhos[-1]


def single_probe_model(model: ModelSpec) -> ModelSpec:
    """One NV with the parameters and dissipators of site 0."""
    geo = Geometry(model.geometry.positions[:1], model.geometry.axes[:1])
    return ModelSpec(
        sites=model.sites[:1],
        geometry=geo,
        dissipators=tuple(d for d in model.dissipators if d.site == 0),
        interaction_form=model.interaction_form,
        constants=model.constants,
        interactions=model.interactions,
    )


def single_probe_qfi(model: ModelSpec, dt: float, n_steps: int, every: int, dconfig: DerivativeConfig | None = None):
    """Exact QFI series of one NV under the drive of site 0, by dense propagation."""
    dconfig = dconfig or DerivativeConfig()
    one = single_probe_model(model)
    h = dconfig.delta
    runs = [
        ed_reference_evolve(m, dt, n_steps, {"states"}).states[::every]
        for m in (one, one.with_zeeman_shift(0.5 * h), one.with_zeeman_shift(-0.5 * h))
    ]
    out = []
    for v, p, m in zip(*runs):
        rho = dense_density_matrix(v, 1)
        drho = (dense_density_matrix(p, 1) - dense_density_matrix(m, 1)) / h
        out.append(qfi_exact_oracle(rho, drho)[0])
    return np.array(out)


def moving_average(values, window: int = 10) -> np.ndarray:
    """Trailing mean over up to ``window`` points (fewer at the start of the series)."""
    x = np.asarray(values, dtype=float)
    if window < 1:
        raise ValueError("window must be at least 1")
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


@dataclass
class QFISeries:
    """QFI over time.

    ``values`` are the raw values divided by ``reference``: the largest QFI a
    single NV reaches in the same time window under the same drive
    (``normalization="sql"``), or 1 (``"raw"``). With the former,
    N non-interacting NVs peak at exactly N.
    """

    times: np.ndarray
    values: np.ndarray
    raw: np.ndarray
    moving_average: np.ndarray
    reference: float
    normalization: str
    results: list = field(default_factory=list)
    failures: list = field(default_factory=list)


def qfi_dynamics(
    model: ModelSpec,
    config,
    n_steps: int,
    dconfig: DerivativeConfig | None = None,
    chi_l: int | None = None,
    restarts: int = 10,
    every: int = 10,
    normalization: str = "sql",
    seed: int = 0,
    window: int = 10,
    max_sweeps: int = 200,
    tol: float = 1e-8,
) -> QFISeries:
    """QFI with respect to gs*muB*Bz every ``every`` steps of a trajectory.

    The optimum at one time seeds the first restart at the next; the other
    ``restarts - 1`` start from random ansatze drawn from
    ``default_rng([seed, time_index])``. Failures at single times are
    recorded and leave NaN in the series.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    dconfig = dconfig or DerivativeConfig()
    times, rhos, drhos = derivative_series(model, config, n_steps, every, dconfig)

    raw = np.full(len(times), np.nan)
    results: list[QFIResult | None] = []
    failures = []
    warm = None
    for k, (rho, drho) in enumerate(zip(rhos, drhos)):
        try:
            res = qfi_local_sweep(
                rho,
                drho,
                chi_l=chi_l,
                restarts=restarts,
                warm_start=warm,
                rng=np.random.default_rng([seed, k]),
                max_sweeps=max_sweeps,
                tol=tol,
            )
        except (NumericalError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("QFI failed at t=%g: %s", times[k], exc)
            failures.append((float(times[k]), str(exc)))
            results.append(None)
            continue
        raw[k] = res.value
        results.append(res)
        warm = res.sld

    if normalization == "sql":
        ref = float(np.max(single_probe_qfi(model, config.dt, n_steps, every, dconfig)))
        if not ref > 0:
            raise NumericalError("single-NV reference QFI vanishes; use normalization='raw'")
    else:
        ref = 1.0
    values = raw / ref
    return QFISeries(
        times=times,
        values=values,
        raw=raw,
        moving_average=moving_average(values, window),
        reference=ref,
        normalization=normalization,
        results=results,
        failures=failures,
    )
