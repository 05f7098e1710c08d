import csv
import json

import numpy as np
import pytest

from qaoa_depth.harness import (
    TRACE_COLUMNS,
    ConfigError,
    ExperimentSpec,
    PhaseOneUnreached,
    format_oracle,
    oracle,
    parse_trace_csv,
    read_trace,
    replica_initials,
    run_depth_scan,
    run_random_init_ensemble,
    run_single,
    run_sweep,
    run_two_phase,
    schedule_sidecar,
    trace_to_csv,
    write_trace,
)
from qaoa_depth.optimizer import Algorithm, IterateRecord, OptimizerConfig
from qaoa_depth.schedule import ControlSchedule

CFG = OptimizerConfig(eta=0.006, lam=0.72, tol=0.0, max_iters=10, algorithm=Algorithm.PG)


def spec(**kw):
    base = dict(instance="7node", config=CFG)
    base.update(kw)
    return ExperimentSpec(**base)


class TestTraceFormat:
    def test_header(self):
        assert ",".join(TRACE_COLUMNS) == "iter,phase,f,F,r,active_depth,l1_length,evals,accepted_extrapolation"

    def test_round_trip(self):
        recs = [
            IterateRecord(0, -1.0 / 3, 0.1, 0.6, 14, 4.2, 0, False, 1),
            IterateRecord(1, -2.5e-17, 1e-300, 0.5, 0, 0.0, 29, True, 2),
        ]
        assert parse_trace_csv(trace_to_csv(recs)) == recs

    def test_wrong_header(self):
        with pytest.raises(ValueError):
            parse_trace_csv("iter,f\n0,1.0\n")

    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_file_round_trip(self, tmp_path, fmt):
        res = run_single(spec())
        path = tmp_path / f"t.{fmt}"
        write_trace(path, res.trace, fmt)
        assert read_trace(path) == res.trace


class TestRunSingle:
    def test_streamed_csv_matches_result(self, tmp_path):
        out = tmp_path / "run.csv"
        res = run_single(spec(out=str(out)))
        assert read_trace(out) == res.trace
        with out.open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 11 and rows[0]["evals"] == "0"
        assert rows[3]["accepted_extrapolation"] == "0"

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_single(spec(out=str(a), config=CFG.with_(algorithm=Algorithm.APG)))
        run_single(spec(out=str(b), config=CFG.with_(algorithm=Algorithm.APG)))
        assert a.read_bytes() == b.read_bytes()

    def test_seeded_random_init_is_reproducible(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_single(spec(out=str(a), init_range=(0.27, 0.33), seed=5))
        run_single(spec(out=str(b), init_range=(0.27, 0.33), seed=5))
        assert a.read_bytes() == b.read_bytes()

    def test_zero_iterations(self):
        res = run_single(spec(config=CFG.with_(max_iters=0)))
        assert len(res.trace) == 1 and res.trace[0].k == 0

    def test_json_carries_metadata(self, tmp_path):
        out = tmp_path / "run.json"
        run_single(spec(out=str(out), fmt="json"))
        doc = json.loads(out.read_text())
        assert doc["algorithm"] == "pg" and len(doc["trace"]) == 11
        assert ControlSchedule.from_dict(doc["schedule"]).layers == 7

    def test_bad_spec(self):
        with pytest.raises(ConfigError):
            spec(p=0)
        with pytest.raises(ConfigError):
            spec(fmt="xml")


class TestTwoPhase:
    def test_switch_at_fixed_iteration(self, tmp_path):
        out = tmp_path / "tp.csv"
        res = run_two_phase(spec(switch_at=5, phase2_total_iters=12, out=str(out)))
        assert res.switch_iteration == 5
        assert [r.k for r in res.trace] == list(range(13))
        assert [r.phase for r in res.trace] == [1] * 6 + [2] * 7
        zero = res.phase1.schedule.packed() == 0
        assert np.all(res.schedule.packed()[zero] == 0)
        evals = [r.evals for r in res.trace]
        assert all(b > a for a, b in zip(evals, evals[1:]))
        side = json.loads(out.with_suffix(".schedule.json").read_text())
        assert side["op_count"] == len(side["operations"])

    def test_empty_phase_two(self):
        res = run_two_phase(spec(switch_at=10, phase2_total_iters=10))
        assert res.phase2 is None and len(res.trace) == 11
        assert res.schedule == res.phase1.schedule

    def test_unreached_target_raises(self):
        s = spec(config=CFG.with_(lam=2.0, max_iters=20), phase2_total_iters=30)
        with pytest.raises(PhaseOneUnreached) as info:
            run_two_phase(s)
        assert len(info.value.phase1.trace) == 21

    def test_unreached_allowed(self):
        s = spec(config=CFG.with_(lam=2.0, max_iters=5), phase2_total_iters=8, allow_unreached=True)
        res = run_two_phase(s)
        assert res.final.k == 8

    def test_needs_total(self):
        with pytest.raises(ConfigError):
            run_two_phase(spec())

    def test_sidecar_lists_merged_operations(self):
        side = schedule_sidecar(ControlSchedule([0.1, 0.0, 0.3], [0.4, 0.5, 0.6]))
        assert side["op_count"] == 4
        assert [op["generator"] for op in side["operations"]] == ["H_o", "H_c", "H_o", "H_c"]


class TestEnsemble:
    ens = spec(init_range=(0.27, 0.33), replicas=3, config=CFG.with_(max_iters=5))

    def test_identical_replicas_have_zero_spread(self):
        summary = run_random_init_ensemble(self.ens, replica_seeds=[7, 7, 7])
        assert np.all(summary.r_traces == summary.r_traces[0])
        # the mean of equal floats can round by one ulp
        assert np.max(summary.std_r) < 1e-15

    def test_single_replica_rejected(self):
        with pytest.raises(ConfigError):
            run_random_init_ensemble(self.ens.with_(replicas=1))

    def test_initials_within_range_and_distinct(self):
        inits = replica_initials(self.ens)
        assert inits.shape == (3, 14)
        assert np.all((inits >= 0.27) & (inits <= 0.33))
        assert len({row.tobytes() for row in inits}) == 3

    def test_written_statistics_recompute(self, tmp_path):
        out = tmp_path / "ens.csv"
        summary = run_random_init_ensemble(self.ens.with_(out=str(out)))
        with out.open() as fh:
            rows = list(csv.DictReader(fh))
        with out.with_suffix(".replicas.csv").open() as fh:
            per = np.array([[float(v) for v in row[1:]] for row in list(csv.reader(fh))[1:]])
        assert per.shape == (3, 6)
        for k, row in enumerate(rows):
            col = per[:, k]
            mean = sum(col) / len(col)
            std = (sum((v - mean) ** 2 for v in col) / len(col)) ** 0.5
            assert abs(float(row["mean_r"]) - mean) < 1e-12
            assert abs(float(row["std_r"]) - std) < 1e-12
        assert summary.replicas == 3 and summary.failed == 0


class TestDepthScanAndSweep:
    def test_rows(self, tmp_path):
        out = tmp_path / "scan.csv"
        rows = run_depth_scan(spec(out=str(out)), [4, 6], lambdas=[0.0, 0.72])
        assert [(r.initial_depth, r.lam) for r in rows] == [(4, 0.0), (4, 0.72), (6, 0.0), (6, 0.72)]
        assert rows[0].final_depth == 4
        assert len(out.read_text().splitlines()) == 5

    @pytest.mark.parametrize("bad", [[3], [0], [-2]])
    def test_bad_depth(self, bad):
        with pytest.raises(ConfigError):
            run_depth_scan(spec(), bad)

    def test_sweep_outputs(self, tmp_path):
        out = tmp_path / "sw.csv"
        s = spec(lambda_grid=(1000.0, 0.0), config=CFG.with_(r_star=0.55, stop_on_target=True), out=str(out))
        rep = run_sweep(s)
        assert rep.selected_lambda == 0.0
        summary = json.loads((tmp_path / "sw.summary.json").read_text())
        assert summary["selected_lambda"] == 0.0
        assert (tmp_path / "sw.lam1000.csv").exists() and (tmp_path / "sw.lam0.csv").exists()


class TestOracle:
    def test_seven_node(self):
        graph, spectrum = oracle("7node")
        text = format_oracle(graph, spectrum)
        assert "c_min -5.17" in text and "minimizers 2" in text
        assert "1111000" in text and "0000111" in text
