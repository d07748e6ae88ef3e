"""Experiment registry and runner.

Every experiment expands its config into a grid of independent jobs (one
per combination of the scan axes), runs them, possibly on a thread pool,
and returns named column sets. The runner alone writes files, so the
output is identical for any thread count.
"""

from __future__ import annotations

import itertools
import json
import logging
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..evolve.trajectory import Trajectory, run_trajectory
from ..qfi.dynamics import DerivativeConfig, qfi_dynamics
from ..model import mhz
from .config import ExperimentConfig, validate
from .csvio import NonFiniteError, write_series

log = logging.getLogger(__name__)


@dataclass
class ErrorMetrics:
    """Pointwise absolute deviation of site-averaged <Sz> between two runs."""

    times: np.ndarray
    abs_re: np.ndarray
    abs_im: np.ndarray

    @property
    def max_re(self) -> float:
        return float(np.max(self.abs_re))

    @property
    def final_re(self) -> float:
        return float(self.abs_re[-1])

    @property
    def max_im(self) -> float:
        return float(np.max(self.abs_im))

    @property
    def final_im(self) -> float:
        return float(self.abs_im[-1])


def error_metrics(traj: Trajectory, reference: Trajectory, atol: float = 1e-9) -> ErrorMetrics:
    """Compare two trajectories recorded on the same time grid.

    Raises ValueError when the grids differ in length or spacing.
    """
    t_a, t_b = np.asarray(traj.times, dtype=float), np.asarray(reference.times, dtype=float)
    if t_a.shape != t_b.shape or not np.allclose(t_a, t_b, rtol=0.0, atol=atol):
        raise ValueError(f"time grids differ ({len(t_a)} vs {len(t_b)} points)")
    if len(t_a) == 0:
        raise ValueError("empty trajectories")
    with np.errstate(invalid="ignore"):
        diff = traj.sz_array - reference.sz_array
    return ErrorMetrics(t_a, np.abs(diff.real), np.abs(diff.imag))


def _truncate(*trajs: Trajectory) -> int:
    return min(len(t) for t in trajs)


def _sub(traj: Trajectory, n: int, stride: int = 1) -> Trajectory:
    out = Trajectory(dt=traj.dt * stride)
    for k in range(0, n * stride, stride):
        out.append(traj.times[k], traj.sz[k], traj.opee[k], traj.trace[k], traj.epsilon[k])
    return out


def _tag(value: float) -> str:
    return f"{value:g}"


@dataclass
class JobOutput:
    """Column sets produced by one grid point plus summary rows."""

    series: dict = field(default_factory=dict)
    summary: list = field(default_factory=list)
    failures: list = field(default_factory=list)


def _engine_comparison(cfg: ExperimentConfig, spacing: float, gamma: float) -> JobOutput:
    eng = cfg.engine
    model = cfg.model.build(spacing, gamma)
    chi = eng.chi_max[0]
    record = ("sz",)
    ed = run_trajectory(model, "ed", eng.engine_config("ed"), eng.n_steps, record)
    tdvp = run_trajectory(model, "tdvp", eng.engine_config("tdvp", chi), eng.n_steps, record)
    wii_dt = eng.dt_us if eng.wii_dt_ns is None else eng.wii_dt_ns * 1e-3
    stride = eng.dt_us / wii_dt
    if abs(stride - round(stride)) > 1e-9 or round(stride) < 1:
        raise ValueError("dt_ns must be an integer multiple of wii_dt_ns")
    stride = int(round(stride))
    wii = run_trajectory(model, "wii", eng.engine_config("wii", chi, wii_dt), eng.n_steps * stride, record)
    failures = [f"{name}: {t.failure}" for name, t in (("tdvp", tdvp), ("wii", wii)) if t.failure]
    n = min(len(ed), len(tdvp), (len(wii) - 1) // stride + 1)
    ed, tdvp, wii = _sub(ed, n), _sub(tdvp, n), _sub(wii, n, stride)
    out = JobOutput(failures=failures)
    sz = {k: t.sz_array for k, t in (("tdvp", tdvp), ("wii", wii), ("ed", ed))}
    out.series[f"r{_tag(spacing)}_g{_tag(gamma)}"] = {
        "t": np.asarray(ed.times),
        "Sz_re_tdvp": sz["tdvp"].real,
        "Sz_im_tdvp": sz["tdvp"].imag,
        "Sz_re_wii": sz["wii"].real,
        "Sz_im_wii": sz["wii"].imag,
        "Sz_re_ed": sz["ed"].real,
    }
    row = {"spacing_nm": spacing, "gamma": gamma, "chi_max": chi}
    for name, traj in (("tdvp", tdvp), ("wii", wii)):
        m = error_metrics(traj, ed)
        row.update(
            {
                f"max_err_{name}": m.max_re,
                f"final_err_{name}": m.final_re,
                f"max_im_{name}": float(np.max(np.abs(sz[name].imag))),
            }
        )
    out.summary.append(row)
    return out


def _bond_scan(cfg: ExperimentConfig, spacing: float, gamma: float) -> JobOutput:
    eng = cfg.engine
    engine = "tdvp" if eng.engine == "ed" else eng.engine
    model = cfg.model.build(spacing, gamma)
    ed = run_trajectory(model, "ed", eng.engine_config("ed"), eng.n_steps, ("sz",))
    out = JobOutput()
    runs = {}
    for chi in eng.chi_max:
        traj = run_trajectory(model, engine, eng.engine_config(engine, chi), eng.n_steps, ("sz", "epsilon"))
        if traj.failure:
            out.failures.append(f"chi={chi}: {traj.failure}")
        runs[chi] = traj
    n = _truncate(ed, *runs.values())
    ed = _sub(ed, n)
    cols = {"t": np.asarray(ed.times), "Sz_re_ed": ed.sz_array.real}
    for chi, traj in runs.items():
        traj_n = _sub(traj, n)
        m = error_metrics(traj_n, ed)
        cols[f"Sz_re_chi{chi}"] = traj_n.sz_array.real
        cols[f"err_chi{chi}"] = m.abs_re
        out.summary.append(
            {
                "spacing_nm": spacing,
                "gamma": gamma,
                "chi_max": chi,
                "max_err": m.max_re,
                "final_err": m.final_re,
                "epsilon": traj.truncation.epsilon,
                "max_bond": traj.truncation.max_kept,
            }
        )
    out.series[f"r{_tag(spacing)}_g{_tag(gamma)}"] = cols
    return out


def _dissipation_scan(cfg: ExperimentConfig, spacing: float, gamma: float) -> JobOutput:
    eng = cfg.engine
    engine = "tdvp" if eng.engine == "ed" else eng.engine
    chi = eng.chi_max[0]
    model = cfg.model.build(spacing, gamma)
    ed = run_trajectory(model, "ed", eng.engine_config("ed"), eng.n_steps, ("sz",))
    traj = run_trajectory(model, engine, eng.engine_config(engine, chi), eng.n_steps, ("sz", "trace"))
    out = JobOutput(failures=[f"{engine}: {traj.failure}"] if traj.failure else [])
    n = _truncate(ed, traj)
    ed, traj = _sub(ed, n), _sub(traj, n)
    m = error_metrics(traj, ed)
    out.series[f"r{_tag(spacing)}_g{_tag(gamma)}"] = {
        "t": np.asarray(ed.times),
        "Sz_re_ed": ed.sz_array.real,
        f"Sz_re_{engine}": traj.sz_array.real,
        "err": m.abs_re,
        "trace_drift": traj.trace_drift,
    }
    out.summary.append(
        {"spacing_nm": spacing, "gamma": gamma, "chi_max": chi, "max_err": m.max_re, "final_err": m.final_re}
    )
    return out


def _opee(cfg: ExperimentConfig, spacing: float, gamma: float, rabi: float) -> JobOutput:
    eng = cfg.engine
    model = cfg.model.build(spacing, gamma, rabi)
    traj = run_trajectory(model, eng.engine, eng.engine_config(), eng.n_steps, ("sz", "opee"))
    out = JobOutput(failures=[f"{eng.engine}: {traj.failure}"] if traj.failure else [])
    keep = slice(0, len(traj), eng.opee_every)
    opee = np.asarray(traj.opee, dtype=float)
    out.series[f"r{_tag(spacing)}_g{_tag(gamma)}_om{_tag(rabi)}"] = {
        "t": np.asarray(traj.times)[keep],
        "opee": opee[keep],
        "Sz_re": traj.sz_array.real[keep],
    }
    out.summary.append(
        {
            "spacing_nm": spacing,
            "gamma": gamma,
            "rabi_mhz": rabi,
            "final_opee": float(opee[-1]),
            "max_opee": float(np.max(opee)),
        }
    )
    return out


def _qfi_dynamics(cfg: ExperimentConfig, spacing: float, gamma: float, rabi: float) -> JobOutput:
    eng, q = cfg.engine, cfg.qfi
    model = cfg.model.build(spacing, gamma, rabi)
    series = qfi_dynamics(
        model,
        eng.engine_config(),
        eng.n_steps,
        dconfig=DerivativeConfig(delta=mhz(q.delta_mhz), floor=eng.trunc_floor),
        chi_l=q.chi_l,
        restarts=q.restarts,
        every=q.every,
        normalization=q.normalization,
        seed=cfg.seed,
        window=q.window,
        max_sweeps=q.max_sweeps,
        tol=q.tol,
    )
    out = JobOutput(failures=[f"t={t:g}: {msg}" for t, msg in series.failures])
    ok = np.isfinite(series.raw)
    out.series[f"r{_tag(spacing)}_g{_tag(gamma)}_om{_tag(rabi)}"] = {
        "t": series.times[ok],
        "qfi": series.values[ok],
        "qfi_raw": series.raw[ok],
        "qfi_avg": series.moving_average[ok],
    }
    out.summary.append(
        {
            "spacing_nm": spacing,
            "gamma": gamma,
            "rabi_mhz": rabi,
            "reference": series.reference,
            "max_qfi": float(np.nanmax(series.values)) if ok.any() else float("nan"),
            "max_qfi_avg": float(np.nanmax(series.moving_average)) if ok.any() else float("nan"),
        }
    )
    return out


def _grid(cfg: ExperimentConfig, with_rabi: bool):
    axes = [cfg.model.spacing_nm, cfg.model.gamma]
    if with_rabi:
        axes.append(cfg.model.rabi_mhz)
    return list(itertools.product(*axes))


@dataclass(frozen=True)
class Experiment:
    name: str
    job: object
    with_rabi: bool = False
    description: str = ""


EXPERIMENTS = {
    e.name: e
    for e in (
        Experiment("engine-comparison", _engine_comparison, description="TDVP and W^II against the exact reference"),
        Experiment("bond-scan", _bond_scan, description="error against the exact reference versus chi_max"),
        Experiment("dissipation-scan", _dissipation_scan, description="error against the exact reference versus gamma"),
        Experiment("opee", _opee, with_rabi=True, description="operator entanglement of the middle bond"),
        Experiment("qfi-dynamics", _qfi_dynamics, with_rabi=True, description="QFI with respect to Bz over time"),
    )
}
NEEDS_ED = frozenset({"engine-comparison", "bond-scan", "dissipation-scan"})


@dataclass
class RunRecord:
    experiment: str
    config_hash: str
    seed: int
    version: str
    python: str
    started: str
    wall_time_s: float = 0.0
    files: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    nonfinite: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures and not self.nonfinite


def run_experiment(config: ExperimentConfig, out_dir=None, threads: int = 1) -> RunRecord:
    """Run ``config``, write its CSV files and ``run.json`` into ``out_dir``.

    Returns the run record. Engine failures are listed in
    ``record.failures`` with whatever output was produced still written;
    non-finite values raise :class:`NonFiniteError` after the remaining
    files and the record are flushed.
    """
    validate(config)
    exp = EXPERIMENTS[config.experiment]
    out = Path(out_dir if out_dir is not None else config.output)
    out.mkdir(parents=True, exist_ok=True)
    record = RunRecord(
        experiment=config.experiment,
        config_hash=config.config_hash(),
        seed=config.seed,
        version=__version__,
        python=platform.python_version(),
        started=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    )
    (out / "config.yaml").write_text(config.to_yaml())
    grid = _grid(config, exp.with_rabi)
    t0 = time.perf_counter()

    def job(point):
        try:
            return exp.job(config, *point)
        except Exception as exc:  # one grid point must not abort the rest
            log.exception("job %s failed", point)
            return JobOutput(failures=[f"{type(exc).__name__}: {exc}"])

    if threads > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, grid))
    else:
        results = [job(p) for p in grid]
    record.wall_time_s = time.perf_counter() - t0

    summary = []
    for point, res in zip(grid, results):
        record.failures.extend(f"{point}: {msg}" for msg in res.failures)
        summary.extend(res.summary)
        for tag, cols in res.series.items():
            _write(out / f"{config.experiment}_{tag}.csv", cols, record)
    if summary:
        keys = list(summary[0])
        _write(
            out / f"{config.experiment}_summary.csv",
            {k: np.array([row[k] for row in summary], dtype=float) for k in keys},
            record,
        )
    (out / "run.json").write_text(json.dumps(asdict(record), indent=2))
    if record.nonfinite:
        raise NonFiniteError(*record.nonfinite[0])
    return record


def _write(path: Path, cols: dict, record: RunRecord) -> None:
    try:
        write_series(path, cols, record.config_hash, record.seed)
        record.files.append(path.name)
    except NonFiniteError as exc:
        record.nonfinite.append((exc.path, exc.column))
