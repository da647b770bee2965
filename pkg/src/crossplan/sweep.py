"""Parameter-sweep harness: batched seeded simulations over solver-parameter
grids, aggregation, and CSV/SVG reporting."""

from __future__ import annotations

import csv
import io
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import DomainParams
from .simulation import Scenario, RunResult, run_simulation
from .solver import SolverConfig


class EmptyReport(ValueError):
    """Report requested with no sweep cells."""


# solver/domain knobs addressable from a sweep grid
_SOLVER_KEYS = {"N": "horizon", "n_ep": "n_episodes", "n_par": "n_particles",
                "c": "ucb_c", "gamma": "gamma"}


@dataclass
class SweepConfig:
    """One-parameter-at-a-time grids around a base configuration.

    ``grid`` maps parameter names (Table-style: N, c, n_ep, n_par, gamma) to
    value lists.  Every (parameter, value) pair is crossed with every dt and
    run ``runs_per_cell`` times with per-cell derived seeds.  ``cartesian``
    sweeps the full product of all grid axes instead.
    """

    scenario: Scenario
    grid: dict
    dts: tuple = (1.0, 0.5, 0.25)
    runs_per_cell: int = 50
    seed_base: int = 0
    base_solver: SolverConfig = field(default_factory=SolverConfig)
    base_params: DomainParams = field(default_factory=DomainParams)
    cartesian: bool = False
    jobs: int = 1
    timing: bool = True

    def __post_init__(self):
        if not self.grid:
            raise ValueError("grid must be non-empty")
        if self.runs_per_cell < 1:
            raise ValueError("runs_per_cell must be >= 1")
        for key in self.grid:
            if key not in _SOLVER_KEYS:
                raise ValueError(f"unknown sweep parameter {key!r}")


@dataclass
class SweepCell:
    """Aggregated results of one (parameter assignment, dt) grid point."""

    params: tuple          # ((name, value), ...) in sorted-name order
    dt: float
    mean_reward: float
    crash_count: int
    failed_runs: int
    mean_runtime: float
    mean_steps: float
    runs: int

    @property
    def realtime_pct(self) -> float:
        sim_time = self.mean_steps * self.dt
        if sim_time <= 0:
            return 0.0
        return self.mean_runtime / sim_time * 100.0


def _cells_of(config: SweepConfig):
    names = sorted(config.grid)
    if config.cartesian:
        combos = [()]
        for name in names:
            combos = [c + ((name, v),) for c in combos
                      for v in config.grid[name]]
    else:
        combos = [((name, v),) for name in names
                  for v in config.grid[name]]
    return [(combo, dt) for combo in combos for dt in config.dts]


def _solver_for(base: SolverConfig, combo) -> SolverConfig:
    kwargs = {}
    for name, value in combo:
        attr = _SOLVER_KEYS[name]
        kwargs[attr] = type(getattr(base, attr))(value)
    return replace(base, **kwargs)


def _cell_seed(seed_base: int, combo, dt: float, run: int) -> int:
    """Stable per-run seed independent of grid composition and scheduling."""
    tag = ";".join(f"{n}={v!r}" for n, v in combo) + f"@dt={dt!r}"
    crc = zlib.crc32(tag.encode())
    ss = np.random.SeedSequence(entropy=seed_base, spawn_key=(crc, run))
    return int(ss.generate_state(1)[0])


def _run_one(args):
    scenario, solver, params, dt, seed, timing = args
    try:
        res = run_simulation(scenario, solver, params, dt=dt, seed=seed,
                             timing=timing)
        return (res.normalized_reward, res.crashed, res.steps,
                res.wall_runtime, False)
    except Exception:
        return (0.0, False, 0, 0.0, True)


def run_sweep(config: SweepConfig) -> list[SweepCell]:
    """Run every grid cell and aggregate.

    Individual run failures are counted per cell, never aborting the sweep;
    crashes are results, not errors.  With jobs > 1 the runs execute in a
    process pool, and because per-run seeds depend only on the cell and run
    index, the aggregated results match a serial execution exactly.
    """
    cell_specs = _cells_of(config)
    tasks = []
    for combo, dt in cell_specs:
        solver = _solver_for(config.base_solver, combo)
        for run in range(config.runs_per_cell):
            seed = _cell_seed(config.seed_base, combo, dt, run)
            tasks.append((config.scenario, solver, config.base_params, dt,
                          seed, config.timing))

    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as ex:
            outcomes = list(ex.map(_run_one, tasks, chunksize=1))
    else:
        outcomes = [_run_one(t) for t in tasks]

    cells = []
    idx = 0
    for combo, dt in cell_specs:
        chunk = outcomes[idx: idx + config.runs_per_cell]
        idx += config.runs_per_cell
        ok = [o for o in chunk if not o[4]]
        failed = len(chunk) - len(ok)
        rewards = [o[0] for o in ok]
        cells.append(SweepCell(
            params=combo,
            dt=dt,
            mean_reward=float(np.mean(rewards)) if rewards else 0.0,
            crash_count=sum(1 for o in ok if o[1]),
            failed_runs=failed,
            mean_runtime=float(np.mean([o[3] for o in ok])) if ok else 0.0,
            mean_steps=float(np.mean([o[2] for o in ok])) if ok else 0.0,
            runs=len(chunk),
        ))
    return cells


def _param_label(cell: SweepCell):
    name = "/".join(n for n, _ in cell.params)
    value = "/".join(repr(v) for _, v in cell.params)
    return name, value


def emit_csv(cells: list[SweepCell]) -> bytes:
    """Deterministic CSV report, one row per cell."""
    if not cells:
        raise EmptyReport("no cells to report")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["param", "value", "dt", "mean_reward", "crash_count",
                     "failed_runs", "mean_runtime_s", "realtime_pct"])
    for cell in sorted(cells, key=lambda c: (c.params, -c.dt)):
        name, value = _param_label(cell)
        writer.writerow([name, value, repr(cell.dt), repr(cell.mean_reward),
                         cell.crash_count, cell.failed_runs,
                         repr(cell.mean_runtime), repr(cell.realtime_pct)])
    return buf.getvalue().encode()


def parse_csv(data: bytes) -> list[dict]:
    """Parse an emit_csv report back into one dict per row."""
    rows = []
    reader = csv.DictReader(io.StringIO(data.decode()))
    for row in reader:
        rows.append({
            "param": row["param"],
            "value": row["value"],
            "dt": float(row["dt"]),
            "mean_reward": float(row["mean_reward"]),
            "crash_count": int(row["crash_count"]),
            "failed_runs": int(row["failed_runs"]),
            "mean_runtime_s": float(row["mean_runtime_s"]),
            "realtime_pct": float(row["realtime_pct"]),
        })
    return rows


def emit_svg(cells: list[SweepCell], width: int = 640, height: int = 420) -> bytes:
    """Grouped line chart: mean reward vs swept value, one series per dt.

    Hand-rolled SVG so the bytes are deterministic.
    """
    if not cells:
        raise EmptyReport("no cells to report")
    margin = 60
    by_dt: dict = {}
    for cell in cells:
        by_dt.setdefault(cell.dt, []).append(cell)
    values = sorted({float(v) for c in cells for _, v in c.params[:1]})
    rewards = [c.mean_reward for c in cells]
    lo, hi = min(rewards), max(rewards)
    if hi - lo < 1e-9:
        hi = lo + 1.0
    vlo, vhi = min(values), max(values)
    if vhi - vlo < 1e-9:
        vhi = vlo + 1.0

    def sx(v):
        return margin + (v - vlo) / (vhi - vlo) * (width - 2 * margin)

    def sy(r):
        return height - margin - (r - lo) / (hi - lo) * (height - 2 * margin)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
    ]
    param_name = "/".join(n for n, _ in cells[0].params)
    parts.append(f'<text x="{width // 2}" y="{height - 16}" '
                 f'text-anchor="middle" font-size="13">{param_name}</text>')
    parts.append(f'<text x="18" y="{height // 2}" text-anchor="middle" '
                 f'font-size="13" transform="rotate(-90 18 {height // 2})">'
                 f'mean normalized reward</text>')
    for vi in (vlo, vhi):
        parts.append(f'<text x="{sx(vi):.1f}" y="{height - margin + 16}" '
                     f'text-anchor="middle" font-size="11">{vi:g}</text>')
    for ri in (lo, hi):
        parts.append(f'<text x="{margin - 6}" y="{sy(ri):.1f}" '
                     f'text-anchor="end" font-size="11">{ri:.0f}</text>')
    for i, dt in enumerate(sorted(by_dt, reverse=True)):
        series = sorted(by_dt[dt], key=lambda c: float(c.params[0][1]))
        color = colors[i % len(colors)]
        pts = " ".join(f"{sx(float(c.params[0][1])):.2f},"
                       f"{sy(c.mean_reward):.2f}" for c in series)
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="2"/>')
        for c in series:
            parts.append(f'<circle cx="{sx(float(c.params[0][1])):.2f}" '
                         f'cy="{sy(c.mean_reward):.2f}" r="3" fill="{color}"/>')
        parts.append(f'<text x="{width - margin + 8}" '
                     f'y="{margin + 16 * i}" font-size="12" '
                     f'fill="{color}">dt={dt:g}</text>')
    parts.append("</svg>")
    return "\n".join(parts).encode()
