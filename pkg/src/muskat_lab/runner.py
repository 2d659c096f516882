"""Run harness behind ``muskat-lab simulate``: stepping, checkpoints, outputs."""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .dynamics import (
    BlowUp,
    MonitorLog,
    RunState,
    Stepper,
    StabilityError,
    contradiction_chain,
    crossing_fixture_field,
    deficit_monitor,
    l2_norm_monitor,
    mode_initial,
    random_lipschitz,
    sup_norm_monitor,
)
from .kernel import InterfaceField, PeriodicGrid
from .modulus import Modulus
from .snapshot import SnapshotError, read_snapshot, write_snapshot

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BLOWUP = 2
EXIT_MONITOR = 3

TIMESERIES_COLUMNS = ("t", "sup_norm", "l2_norm", "lipschitz", "min_deficit")
_SNAP_RE = re.compile(r"snap_(\d+)\.musk$")


@dataclass
class RunResult:
    exit_code: int
    summary: dict
    state: RunState
    log: MonitorLog


def initial_field(cfg: RunConfig, m: Modulus) -> InterfaceField:
    """Build the t = 0 field described by ``initial.kind`` and ``initial.params``."""
    grid = PeriodicGrid(cfg.n, cfg.period)
    p = cfg.initial_param_dict()
    if cfg.initial_kind == "mode":
        k = (int(p.get("k1", 1)), int(p.get("k2", 0)))
        vals = mode_initial(grid, k, p.get("amp", 1e-3), p.get("offset", 0.5))
        t0 = 0.0
    elif cfg.initial_kind == "random-lipschitz":
        vals = random_lipschitz(grid, p.get("lipschitz", cfg.L), cfg.seed, kmax=int(p.get("kmax", 4)))
        t0 = 0.0
    else:
        t0 = p.get("t", 0.0)
        off = (int(p.get("offset1", 8)), int(p.get("offset2", 0)))
        vals, _, _ = crossing_fixture_field(grid, m, t0, offset=off)
    return InterfaceField(grid, vals, t0)


def step_from_name(path) -> int:
    mt = _SNAP_RE.search(str(path))
    return int(mt.group(1)) if mt else 0


def _set_threads(deterministic: bool) -> None:
    if deterministic:
        import numba

        numba.set_num_threads(1)


def _json_safe(x):
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def run(cfg: RunConfig, config_text: str | None = None, resume=None) -> RunResult:
    """Execute one run and write snapshots, ``timeseries.csv`` and ``summary.json``.

    Raises ``ConfigError`` or ``OSError`` on bad inputs; blow-up and monitor
    failures are reported through the exit code.
    """
    _set_threads(cfg.deterministic)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    m = Modulus.from_L(cfg.L)
    grid = PeriodicGrid(cfg.n, cfg.period)

    if resume is not None:
        try:
            fld = read_snapshot(resume)
        except SnapshotError as exc:
            raise ConfigError(str(exc)) from exc
        if fld.grid.n != cfg.n or fld.grid.period != cfg.period:
            raise ConfigError("snapshot grid does not match the config")
        step0 = step_from_name(resume)
    else:
        fld = initial_field(cfg, m)
        step0 = 0

    stepper = Stepper(grid, cfg.quadrature(), cfg.scheme, cfg.dt_factor, cfg.dt_max)
    log = MonitorLog(modulus_enabled=cfg.monitors_modulus, radius_cap=cfg.monitors_radius_cap, threshold=cfg.monitors_threshold)
    state = RunState(fld, m, step0, 0.0, log)
    log.record(state)
    if resume is None:
        write_snapshot(out / f"snap_{step0:06d}.musk", state.field)

    horizon = cfg.horizon if cfg.horizon > 0 else math.inf
    t_tol = 1e-12 * max(1.0, horizon) if math.isfinite(horizon) else 0.0
    max_steps = cfg.steps if cfg.steps > 0 else None
    exit_code = EXIT_OK
    error = None
    rows = []

    def checkpoint():
        rec = log.record(state, stepper.last_budget)
        rows.append(rec)
        write_snapshot(out / f"snap_{state.step_count:06d}.musk", state.field)

    stop_crossing = cfg.monitors_stop_on_crossing
    while log.crossing is None or not stop_crossing:
        if max_steps is not None and state.step_count >= max_steps:
            break
        remaining = horizon - state.field.time
        if remaining <= t_tol:
            break
        dt = stepper.default_dt(state.field.values)
        if dt >= remaining:
            dt = remaining
        try:
            state = stepper.step(state, dt)
        except BlowUp as exc:
            exit_code, error = EXIT_BLOWUP, str(exc)
            break
        except StabilityError as exc:
            raise ConfigError(str(exc)) from exc
        last = (max_steps is not None and state.step_count >= max_steps) or horizon - state.field.time <= t_tol
        if state.step_count % cfg.checkpoint_every == 0 or last:
            checkpoint()

    with open(out / "timeseries.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("step",) + TIMESERIES_COLUMNS)
        for r in rows:
            w.writerow([r.step] + [repr(float(getattr(r, c))) for c in TIMESERIES_COLUMNS])

    monitors = {
        "sup_norm_nonincreasing": sup_norm_monitor(log, cfg.monitors_sup_slack),
        "l2_norm_nonincreasing": l2_norm_monitor(log, cfg.monitors_l2_slack),
        "deficit_positive": deficit_monitor(log) if cfg.monitors_modulus else None,
    }
    crossing = log.crossing
    verdict = None
    if crossing is not None and stop_crossing and crossing.xi < 2.0 / m.nu:
        verdict = contradiction_chain(crossing, state, cfg.quadrature()).as_dict()
    if exit_code == EXIT_OK and (not all(v for v in monitors.values() if v is not None) or crossing is not None):
        exit_code = EXIT_MONITOR

    summary = {
        "config_text": config_text if config_text is not None else cfg.to_text(),
        "config": cfg.as_dict(),
        "resumed_from": str(resume) if resume is not None else None,
        "steps": state.step_count,
        "final_time": state.field.time,
        "scheme": cfg.scheme,
        "measured_speed": stepper.c_meas,
        "max_budget": max((r.budget for r in log.records if not math.isnan(r.budget)), default=None),
        "monitors": monitors,
        "crossing": crossing.as_dict() if crossing is not None else None,
        "verdict": verdict,
        "error": error,
        "exit_code": exit_code,
    }
    summary = _json_safe(summary)
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return RunResult(exit_code, summary, state, log)
