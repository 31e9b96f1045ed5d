"""Command-line front end: run, convergence, inspect.

Configuration is flat ``key = value`` text with dotted section prefixes
(``solver.theta1 = 0.5``); ``#`` starts a comment.  Every key has a schema
entry, unknown keys are rejected, and unset keys fall back to the scenario
preset.  ``--set key=value`` applies the same syntax on top of the file.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dynamics import (
    AdaptiveConfig,
    StabilityViolationError,
    advance_adaptive,
    advance_fixed,
)
from .grid import Grid, SpectralWorkspace, norm
from .output import (
    DiagnosticsWriter,
    SnapshotFormatError,
    params_digest,
    read_snapshot,
    snapshot_text,
    write_manifest,
    write_snapshot,
)
from .potential import PhysParams
from .scenarios import (
    PRESET_NAMES,
    RNG_NAME,
    Scenario,
    manufactured_forcing,
    manufactured_state,
    preset,
)
from .solver import SolverConfig, SolverDivergedError

__all__ = ["ConfigError", "RunConfig", "cmd_run", "cmd_convergence", "cmd_inspect", "main"]


class ConfigError(ValueError):
    """Bad configuration: unknown key, bad value, or inconsistent settings."""


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_int_list(s: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in s.split(",") if tok.strip())


# key -> (parser, emitter)
_SCHEMA = {
    "scenario": (str, str),
    "grid.nx": (int, str),
    "grid.ny": (int, str),
    "grid.lx": (float, repr),
    "grid.ly": (float, repr),
    "phys.eps": (float, repr),
    "phys.eta": (float, repr),
    "phys.lam": (float, repr),
    "phys.p": (int, str),
    "solver.theta1": (float, repr),
    "solver.theta2": (float, repr),
    "solver.tol_res": (float, repr),
    "solver.max_iter": (int, str),
    "solver.ls_tol": (float, repr),
    "solver.ls_max": (int, str),
    "solver.ls_margin": (float, repr),
    "adaptive.dt_max": (float, repr),
    "adaptive.dt_min": (float, repr),
    "adaptive.rate_hi": (float, repr),
    "adaptive.rate_lo": (float, repr),
    "adaptive.grow": (float, repr),
    "adaptive.shrink": (float, repr),
    "adaptive.dt_init": (float, repr),
    "run.t_end": (float, repr),
    "run.seed": (int, str),
    "run.ell": (float, repr),
    "run.snap_every_steps": (int, str),
    "run.snap_every_time": (float, repr),
    "run.out": (str, str),
    "run.text_snapshots": (_parse_bool, lambda b: "true" if b else "false"),
    "convergence.n_list": (_parse_int_list, lambda t: ",".join(str(n) for n in t)),
    "convergence.coupling": (str, str),
    "convergence.t_final": (float, repr),
    "convergence.refine": (int, str),
}


@dataclass
class RunConfig:
    """Validated flat configuration; unset keys defer to scenario presets."""

    values: dict = field(default_factory=dict)

    def set(self, key: str, raw: str) -> None:
        if key not in _SCHEMA:
            raise ConfigError(f"unknown configuration key {key!r}")
        parser, _ = _SCHEMA[key]
        try:
            self.values[key] = parser(raw.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc

    def get(self, key: str, default=None):
        if key not in _SCHEMA:
            raise ConfigError(f"unknown configuration key {key!r}")
        return self.values.get(key, default)

    def emit(self) -> str:
        lines = []
        for key in sorted(self.values):
            emit = _SCHEMA[key][1]
            lines.append(f"{key} = {emit(self.values[key])}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        cfg = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
            key, raw = stripped.split("=", 1)
            cfg.set(key.strip(), raw)
        return cfg

    def __eq__(self, other) -> bool:
        return isinstance(other, RunConfig) and self.values == other.values


def _build_scenario(cfg: RunConfig) -> Scenario:
    name = cfg.get("scenario", "spinodal")
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(PRESET_NAMES)}")
    try:
        scn = preset(
            name,
            n=cfg.get("grid.nx"),
            seed=cfg.get("run.seed", 0),
            ell=cfg.get("run.ell", 0.35),
            t_end=cfg.get("run.t_end"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    grid = scn.grid
    nx = cfg.get("grid.nx", grid.shape[0])
    ny = cfg.get("grid.ny", grid.shape[1] if grid.ndim == 2 else grid.shape[0])
    lx = cfg.get("grid.lx", grid.lengths[0])
    ly = cfg.get("grid.ly", grid.lengths[1] if grid.ndim == 2 else grid.lengths[0])
    try:
        grid = Grid((nx, ny), (lx, ly))
        phys = PhysParams(
            eps=cfg.get("phys.eps", scn.phys.eps),
            eta=cfg.get("phys.eta", scn.phys.eta),
            lam=cfg.get("phys.lam", scn.phys.lam),
            p=cfg.get("phys.p", scn.phys.p),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return Scenario(
        name, grid, phys, t_end=scn.t_end, seed=scn.seed, ell=scn.ell
    )


def _solver_config(cfg: RunConfig) -> SolverConfig:
    base = SolverConfig()
    try:
        return SolverConfig(
            theta1=cfg.get("solver.theta1", base.theta1),
            theta2=cfg.get("solver.theta2", base.theta2),
            tol_res=cfg.get("solver.tol_res", base.tol_res),
            max_iter=cfg.get("solver.max_iter", base.max_iter),
            ls_tol=cfg.get("solver.ls_tol", base.ls_tol),
            ls_max=cfg.get("solver.ls_max", base.ls_max),
            ls_margin=cfg.get("solver.ls_margin", base.ls_margin),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _adaptive_config(cfg: RunConfig) -> AdaptiveConfig:
    base = AdaptiveConfig()
    try:
        return AdaptiveConfig(
            dt_max=cfg.get("adaptive.dt_max", base.dt_max),
            dt_min=cfg.get("adaptive.dt_min", base.dt_min),
            rate_hi=cfg.get("adaptive.rate_hi", base.rate_hi),
            rate_lo=cfg.get("adaptive.rate_lo", base.rate_lo),
            grow=cfg.get("adaptive.grow", base.grow),
            shrink=cfg.get("adaptive.shrink", base.shrink),
            dt_init=cfg.get("adaptive.dt_init", base.dt_init),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _resolved_config_text(cfg: RunConfig, scn: Scenario, solver: SolverConfig,
                          adaptive: AdaptiveConfig, outdir: Path) -> str:
    resolved = RunConfig()
    resolved.values.update(cfg.values)
    resolved.values.setdefault("scenario", scn.name)
    resolved.values.setdefault("grid.nx", scn.grid.shape[0])
    if scn.grid.ndim == 2:
        resolved.values.setdefault("grid.ny", scn.grid.shape[1])
        resolved.values.setdefault("grid.ly", scn.grid.lengths[1])
    resolved.values.setdefault("grid.lx", scn.grid.lengths[0])
    resolved.values.setdefault("phys.eps", scn.phys.eps)
    resolved.values.setdefault("phys.eta", scn.phys.eta)
    resolved.values.setdefault("phys.lam", scn.phys.lam)
    resolved.values.setdefault("phys.p", scn.phys.p)
    for key, val in (
        ("solver.theta1", solver.theta1),
        ("solver.theta2", solver.theta2),
        ("solver.tol_res", solver.tol_res),
        ("solver.max_iter", solver.max_iter),
        ("solver.ls_tol", solver.ls_tol),
        ("solver.ls_max", solver.ls_max),
        ("solver.ls_margin", solver.ls_margin),
        ("adaptive.dt_max", adaptive.dt_max),
        ("adaptive.dt_min", adaptive.dt_min),
        ("adaptive.rate_hi", adaptive.rate_hi),
        ("adaptive.rate_lo", adaptive.rate_lo),
        ("adaptive.grow", adaptive.grow),
        ("adaptive.shrink", adaptive.shrink),
        ("run.t_end", scn.t_end),
        ("run.seed", scn.seed),
        ("run.ell", scn.ell),
        ("run.out", str(outdir)),
    ):
        resolved.values.setdefault(key, val)
    return resolved.emit()


def cmd_run(cfg: RunConfig, outdir: str | Path) -> int:
    """Run one scenario, writing diagnostics, snapshots and a manifest."""
    scn = _build_scenario(cfg)
    solver = _solver_config(cfg)
    adaptive = _adaptive_config(cfg)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    digest = params_digest(scn.grid, scn.phys, solver, adaptive, scn.seed, scn.ell)
    phi = scn.initial_condition()
    ws = SpectralWorkspace(scn.grid)

    write_manifest(
        outdir / "manifest.txt",
        _resolved_config_text(cfg, scn, solver, adaptive, outdir),
        seed=scn.seed,
        rng_name=RNG_NAME,
    )

    snap_steps = cfg.get("run.snap_every_steps", 0)
    snap_time = cfg.get("run.snap_every_time", 0.0)
    text_export = cfg.get("run.text_snapshots", False)

    def save(phi_now, *, time, step_index):
        path = outdir / f"field_{step_index:08d}.snap"
        write_snapshot(
            path, phi_now, scn.grid, time=time, step=step_index, seed=scn.seed,
            params=digest,
        )
        if text_export and max(scn.grid.shape) <= 64:
            (outdir / f"field_{step_index:08d}.txt").write_text(snapshot_text(phi_now))

    save(phi, time=0.0, step_index=0)
    if scn.t_end <= 0.0:
        with DiagnosticsWriter(outdir / "diagnostics.csv"):
            pass
        return 0

    snap_state = {"next_time": snap_time if snap_time > 0 else None}

    with DiagnosticsWriter(outdir / "diagnostics.csv") as diag:

        def sink(rec, phi_now):
            diag.write(rec)
            if snap_steps > 0 and rec.step % snap_steps == 0:
                save(phi_now, time=rec.t, step_index=rec.step)
            elif snap_state["next_time"] is not None and rec.t + 1e-15 >= snap_state["next_time"]:
                save(phi_now, time=rec.t, step_index=rec.step)
                snap_state["next_time"] += snap_time

        records, phi_end = advance_adaptive(
            phi, scn.t_end, scn.grid, scn.phys, adaptive, solver, ws, sink=sink
        )

    save(phi_end, time=scn.t_end, step_index=records[-1].step if records else 0)
    return 0


def _convergence_error(n: int, coupling: str, t_final: float, phys: PhysParams,
                       solver: SolverConfig, refine: int) -> tuple[float, int, float]:
    """One forced run; returns (dt, steps, l2 error at t_final)."""
    grid = Grid.square(n)
    ws = SpectralWorkspace(grid)
    h = grid.spacing[0]
    dt_nominal = 16.0 * h * h if coupling == "dt16h2" else h
    steps = max(1, round(t_final / dt_nominal))
    dt = t_final / steps
    phi = manufactured_state(grid, 0.0)

    def forcing(t_start: float) -> np.ndarray:
        return manufactured_forcing(grid, t_start, phys, refine_factor=refine)

    _, phi_end = advance_fixed(
        phi, dt, steps, grid, phys, solver, ws, source_fn=forcing
    )
    err = norm(phi_end - manufactured_state(grid, t_final), grid, "l2")
    return dt, steps, err


def cmd_convergence(cfg: RunConfig, outdir: str | Path) -> int:
    """Grid refinement study against the manufactured solution."""
    scn_name = cfg.get("scenario", "convergence")
    if scn_name != "convergence":
        raise ConfigError("the convergence command requires scenario = convergence")
    base = preset("convergence")
    phys = PhysParams(
        eps=cfg.get("phys.eps", base.phys.eps),
        eta=cfg.get("phys.eta", base.phys.eta),
        lam=cfg.get("phys.lam", base.phys.lam),
        p=cfg.get("phys.p", base.phys.p),
    )
    solver = _solver_config(cfg)
    n_list = cfg.get("convergence.n_list", (16, 32, 64, 128))
    coupling = cfg.get("convergence.coupling", "dt16h2")
    if coupling not in ("dt16h2", "dth"):
        raise ConfigError(f"coupling must be dt16h2 or dth, got {coupling!r}")
    t_final = cfg.get("convergence.t_final", 0.32)
    refine = cfg.get("convergence.refine", 4)
    if not n_list:
        raise ConfigError("convergence.n_list must not be empty")

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    rows = []
    for n in n_list:
        dt, steps, err = _convergence_error(n, coupling, t_final, phys, solver, refine)
        rows.append((n, dt, steps, err))
        print(f"N = {n:5d}  dt = {dt:.6e}  steps = {steps:6d}  l2 error = {err:.8e}")

    slope = None
    pair_slope = None
    if len(rows) >= 2:
        logn = np.log([r[0] for r in rows])
        loge = np.log([r[3] for r in rows])
        slope = float(np.polyfit(logn, loge, 1)[0])
        pair_slope = float((loge[-1] - loge[-2]) / (logn[-1] - logn[-2]))
        print(f"fitted slope (all N): {slope:.4f}")
        print(f"slope of finest pair: {pair_slope:.4f}")

    with open(outdir / "convergence.csv", "w", encoding="ascii") as fh:
        fh.write("N,dt,steps,l2_error\n")
        for n, dt, steps, err in rows:
            fh.write(f"{n},{dt:.17g},{steps},{err:.17g}\n")
        if slope is not None:
            fh.write(f"# fitted_slope = {slope:.17g}\n")
            fh.write(f"# finest_pair_slope = {pair_slope:.17g}\n")
    return 0


def cmd_inspect(path: str | Path, dump_text: bool = False) -> int:
    phi, meta = read_snapshot(path)
    g = meta.grid
    print(f"snapshot {path}")
    print(f"  grid: shape {g.shape}, lengths {g.lengths}, spacing {g.spacing}")
    print(f"  time = {meta.time:.17g}, step = {meta.step}, seed = {meta.seed}")
    print(f"  params = {meta.params}")
    print(
        f"  stats: min = {phi.min():.17g}, max = {phi.max():.17g}, "
        f"mean = {phi.mean():.17g}"
    )
    if dump_text:
        print(snapshot_text(phi), end="")
    return 0


def _load_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        cfg = RunConfig.parse(text)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        key, raw = item.split("=", 1)
        cfg.set(key.strip(), raw)
    if getattr(args, "seed", None) is not None:
        cfg.set("run.seed", str(args.seed))
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fchsim",
        description="Simulate the functionalized Cahn-Hilliard equation "
        "with logarithmic potential on periodic grids.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to key = value configuration file")
    common.add_argument(
        "--set", action="append", metavar="KEY=VALUE", help="override one config key"
    )
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="random seed")

    sub.add_parser("run", parents=[common], help="run a scenario")
    sub.add_parser(
        "convergence", parents=[common], help="manufactured-solution refinement study"
    )
    p_inspect = sub.add_parser("inspect", help="print snapshot header and statistics")
    p_inspect.add_argument("snapshot", help="snapshot file to inspect")
    p_inspect.add_argument(
        "--text", action="store_true", help="also dump the field as text"
    )

    args = parser.parse_args(argv)
    try:
        if args.command == "inspect":
            return cmd_inspect(args.snapshot, dump_text=args.text)
        cfg = _load_config(args)
        if args.command == "run":
            return cmd_run(cfg, args.out)
        if args.command == "convergence":
            return cmd_convergence(cfg, args.out)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (SolverDivergedError, StabilityViolationError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except (OSError, SnapshotFormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
