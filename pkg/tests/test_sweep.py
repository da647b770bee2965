"""Sweep harness: aggregation, reporting, determinism."""

import json

import numpy as np
import pytest

from crossplan.cli import build_configs, main
from crossplan.domain import DomainParams
from crossplan.fixtures import fixture_path
from crossplan.simulation import load_scenario
from crossplan.solver import SolverConfig
from crossplan.sweep import (EmptyReport, SweepConfig, emit_csv, emit_svg,
                             parse_csv, run_sweep, _cell_seed)

QUICK = SolverConfig(horizon=2, n_episodes=60, n_particles=30)


@pytest.fixture(scope="module")
def straight():
    return load_scenario(fixture_path("straight.json"))


def quick_config(straight, **kw):
    defaults = dict(scenario=straight, grid={"N": [1, 2]}, dts=(1.0,),
                    runs_per_cell=2, seed_base=3, base_solver=QUICK,
                    base_params=DomainParams(), timing=False)
    defaults.update(kw)
    return SweepConfig(**defaults)


class TestRunSweep:
    def test_minimal_sweep_shape(self, straight):
        cells = run_sweep(quick_config(straight, grid={"N": [2]}))
        assert len(cells) == 1
        cell = cells[0]
        assert cell.runs == 2
        assert cell.failed_runs == 0
        assert cell.crash_count == 0

    def test_one_at_a_time_grid(self, straight):
        cells = run_sweep(quick_config(straight,
                                       grid={"N": [1, 2], "c": [10.0]},
                                       dts=(1.0, 0.5)))
        # 3 (param, value) combos x 2 dts
        assert len(cells) == 6

    def test_cartesian_grid(self, straight):
        cells = run_sweep(quick_config(straight,
                                       grid={"N": [1, 2], "c": [10.0, 20.0]},
                                       cartesian=True))
        assert len(cells) == 4

    def test_serial_parallel_identical(self, straight):
        serial = run_sweep(quick_config(straight))
        parallel = run_sweep(quick_config(straight, jobs=2))
        assert emit_csv(serial) == emit_csv(parallel)

    def test_seed_stability_under_grid_growth(self, straight):
        small = run_sweep(quick_config(straight, grid={"N": [2]}))
        big = run_sweep(quick_config(straight, grid={"N": [1, 2]}))
        small_row = [c for c in small if c.params == (("N", 2),)][0]
        big_row = [c for c in big if c.params == (("N", 2),)][0]
        assert small_row.mean_reward == big_row.mean_reward

    def test_cell_seed_depends_on_cell_and_run(self):
        a = _cell_seed(0, (("N", 1),), 0.5, 0)
        assert a == _cell_seed(0, (("N", 1),), 0.5, 0)
        assert a != _cell_seed(0, (("N", 1),), 0.5, 1)
        assert a != _cell_seed(0, (("N", 2),), 0.5, 0)
        assert a != _cell_seed(1, (("N", 1),), 0.5, 0)


class TestReports:
    def test_csv_round_trip(self, straight):
        cells = run_sweep(quick_config(straight, dts=(1.0, 0.5)))
        data = emit_csv(cells)
        rows = parse_csv(data)
        assert len(rows) == len(cells)
        by_key = {(c.params, c.dt): c for c in cells}
        for row in rows:
            cell = by_key[((("N", int(float(row["value"]))),), row["dt"])]
            assert row["mean_reward"] == pytest.approx(cell.mean_reward)
            assert row["crash_count"] == cell.crash_count

    def test_csv_header(self, straight):
        cells = run_sweep(quick_config(straight, grid={"N": [2]}))
        header = emit_csv(cells).decode().splitlines()[0]
        assert header == ("param,value,dt,mean_reward,crash_count,"
                          "failed_runs,mean_runtime_s,realtime_pct")

    def test_rows_grouped_by_param_value(self, straight):
        cells = run_sweep(quick_config(straight, grid={"N": [2]},
                                       dts=(1.0, 0.5, 0.25)))
        rows = parse_csv(emit_csv(cells))
        assert len(rows) == 3
        assert {r["value"] for r in rows} == {"2"}

    def test_realtime_pct_consistency(self, straight):
        cells = run_sweep(quick_config(straight, grid={"N": [2]},
                                       timing=True))
        cell = cells[0]
        expect = cell.mean_runtime / (cell.mean_steps * cell.dt) * 100.0
        assert cell.realtime_pct == pytest.approx(expect, rel=1e-6)

    def test_empty_report_raises(self):
        with pytest.raises(EmptyReport):
            emit_csv([])
        with pytest.raises(EmptyReport):
            emit_svg([])

    def test_svg_structure(self, straight):
        cells = run_sweep(quick_config(straight, dts=(1.0, 0.5)))
        svg = emit_svg(cells).decode()
        assert svg.startswith("<svg")
        assert svg.count("<polyline") == 2
        assert "dt=1" in svg and "dt=0.5" in svg


class TestCli:
    def test_build_configs_table_defaults(self):
        solver, params = build_configs({})
        assert solver.horizon == 5
        assert solver.n_episodes == 3000
        assert solver.n_particles == 300
        assert solver.ucb_c == 20000.0
        assert solver.gamma == 1.0
        assert params.action_set == (-2.0, -1.0, 0.0, 1.0)
        assert params.idm.tau == 2.0
        assert params.idm.delta == 4.0
        assert params.idm.d_min == 1.0
        assert params.rewards.r_acc == 1.0
        assert params.rewards.r_vel == 100.0
        assert params.rewards.r_crash == 10000.0
        assert params.rewards.a_lat_max == 0.5
        assert params.noise.sigma_omega1 == 1.0
        assert tuple(params.noise.r_diag) == (1e-2, 1e-2, 0.0)

    def test_build_configs_overrides(self):
        solver, params = build_configs({"N": 3, "c": 50, "Q": [0.01, 0.01, 0],
                                        "R": [0.04, 0.04, 0]})
        assert solver.horizon == 3
        assert solver.ucb_c == 50.0
        assert tuple(params.noise.q_diag) == (0.01, 0.01, 0.0)

    def test_build_configs_rejects_unknown(self):
        from crossplan.cli import ConfigError
        with pytest.raises(ConfigError):
            build_configs({"bogus": 1})

    def test_simulate_exit_codes(self, tmp_path, capsys):
        scen = str(fixture_path("straight.json"))
        rc = main(["simulate", "--scenario", scen, "--dt", "1.0",
                   "--seed", "0", "--config", str(tmp_path / "missing.json")])
        assert rc == 1
        rc = main(["simulate", "--scenario", str(tmp_path / "nope.json"),
                   "--dt", "1.0", "--seed", "0"])
        assert rc == 2
        capsys.readouterr()

    def test_simulate_byte_identical_logs(self, tmp_path, capsys):
        scen = str(fixture_path("straight.json"))
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n_ep": 60, "n_par": 30, "N": 2}))
        outputs = []
        for i in range(2):
            log = tmp_path / f"log{i}.jsonl"
            rc = main(["simulate", "--scenario", scen, "--dt", "0.5",
                       "--seed", "11", "--config", str(cfg),
                       "--log", str(log)])
            assert rc == 0
            outputs.append(log.read_bytes())
            capsys.readouterr()
        assert outputs[0] == outputs[1]

    def test_sweep_csv_output(self, tmp_path, capsys):
        scen = str(fixture_path("straight.json"))
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n_ep": 60, "n_par": 30}))
        out = tmp_path / "o.csv"
        plot = tmp_path / "o.svg"
        rc = main(["sweep", "--scenario", scen, "--config", str(cfg),
                   "--param", "N", "--values", "1,2", "--dt", "1.0",
                   "--runs", "2", "--seed", "0", "--out", str(out),
                   "--plot", str(plot), "--no-timing"])
        assert rc == 0
        capsys.readouterr()
        rows = parse_csv(out.read_bytes())
        assert len(rows) == 2
        assert plot.read_bytes().startswith(b"<svg")
