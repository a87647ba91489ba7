import csv
import json

import pytest

from ringacc.cli import main
from ringacc.config import config_from_dict, load_config
from ringacc.errors import ConfigError


BASE = {
    "n_k": 2, "n_w": 2,
    "world_size": 2, "subring_size": 2, "lanes": 1, "measurements": 2,
    "seed": 3, "value_mode": "integer", "timeout_s": 10.0,
}


def write_config(tmp_path, name="config.json", **extra):
    d = dict(BASE)
    d.update(extra)
    path = tmp_path / name
    path.write_text(json.dumps(d))
    return path


class TestConfigLoading:
    def test_round_trip(self, tmp_path):
        path = write_config(tmp_path)
        cfg = load_config(path)
        again = config_from_dict(cfg.to_dict())
        assert again == cfg

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path, subrng_size=3)
        with pytest.raises(ConfigError, match="subrng_size"):
            load_config(path)

    def test_unknown_nested_key_rejected(self, tmp_path):
        path = write_config(tmp_path, link={"nic_bandwith": 1e9})
        with pytest.raises(ConfigError, match="nic_bandwith"):
            load_config(path)

    def test_indivisible_subring_rejected(self, tmp_path):
        path = write_config(tmp_path, world_size=6, subring_size=4)
        with pytest.raises(ConfigError, match="divide"):
            load_config(path)

    def test_world_larger_than_space_rejected(self, tmp_path):
        path = write_config(tmp_path, world_size=6, subring_size=6)
        with pytest.raises(ConfigError, match="empty slice"):
            load_config(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.json")

    @pytest.mark.parametrize("field,value,match", [
        ("lanes", 1000, "tag stride"),
        ("lanes", 0, "integer >= 1"),
        ("measurements", -2, "integer >= 1"),
        ("seed", -1, "non-negative"),
        ("value_mode", "decimal", "value_mode"),
        ("transport", "mpi", "transport"),
        ("direction", "spiral", "direction"),
        ("timeout_s", 0, "timeout_s"),
    ])
    def test_field_level_validation(self, tmp_path, field, value, match):
        path = write_config(tmp_path, **{field: value})
        with pytest.raises(ConfigError, match=match):
            load_config(path)

    def test_bad_json_rejected(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="JSON"):
            load_config(path)


class TestRunCommand:
    def test_artifacts_and_exit_code(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["run", "--config", str(path), "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        # config echo re-parses to the identical config
        assert config_from_dict(report["config"]) == load_config(path)
        with (out / "counters.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2  # one lane per rank
        assert all(int(r["envelopes_sent"]) == 2 for r in rows)
        mem_rows = list(csv.DictReader((out / "memory.csv").open()))
        assert {r["rank"] for r in mem_rows} == {"0", "1"}

    def test_config_error_exit_2(self, tmp_path):
        path = write_config(tmp_path, world_size=5, subring_size=2)
        assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == 2

    def test_deadlock_exit_4(self, tmp_path):
        path = write_config(tmp_path, timeout_s=0.5)
        code = main(["run", "--config", str(path), "--out", str(tmp_path),
                     "--fault", "skip-send"])
        assert code == 4

    def test_sim_outputs_bitwise_reproducible(self, tmp_path):
        path = write_config(tmp_path, transport="sim")
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--config", str(path), "--out", str(out_a)]) == 0
        assert main(["run", "--config", str(path), "--out", str(out_b)]) == 0
        for name in ("report.json", "counters.csv", "memory.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_inprocess_deterministic_outputs(self, tmp_path):
        # under the real clock, everything except timer fields is stable
        path = write_config(tmp_path)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["run", "--config", str(path), "--out", str(out_a)])
        main(["run", "--config", str(path), "--out", str(out_b)])
        timer_cols = {"wait_s", "accumulate_s", "total_s"}
        rows_a = list(csv.DictReader((out_a / "counters.csv").open()))
        rows_b = list(csv.DictReader((out_b / "counters.csv").open()))
        for ra, rb in zip(rows_a, rows_b):
            for col, val in ra.items():
                if col not in timer_cols:
                    assert rb[col] == val


class TestVerifyCommand:
    def test_integer_mode_exit_0(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["verify", "--config", str(path), "--out", str(out),
                     "--runs", "2"]) == 0
        payload = json.loads((out / "verify.json").read_text())
        assert payload["pass"] is True
        assert payload["l1_real"] == 0.0
        assert len(payload["runs"]) == 2

    def test_corrupted_run_exit_3(self, tmp_path):
        path = write_config(tmp_path)
        code = main(["verify", "--config", str(path), "--out", str(tmp_path),
                     "--runs", "1", "--corrupt-entry"])
        assert code == 3


class TestSweepCommand:
    def test_rows_fit_and_rejections(self, tmp_path, capsys):
        path = write_config(
            tmp_path, world_size=2, subring_size=2,
            sweep={"msg_bytes": 1_000_000, "measurements": 5,
                   "subrings": [2, 3, 4]},
            link={"ranks_per_node": 2})
        out = tmp_path / "out"
        # world_size=2: S=3 and S=4 are rejected, S=2 proceeds
        assert main(["sweep", "--config", str(path), "--out", str(out)]) == 0
        err = capsys.readouterr().err
        assert "rejecting S=3" in err and "rejecting S=4" in err
        rows = list(csv.DictReader((out / "sweep.csv").open()))
        assert [r["S"] for r in rows] == ["2"]
        fit = json.loads((out / "fit.json").read_text())
        assert fit["points"] == 1

    def test_multi_point_sweep_writes_fit(self, tmp_path):
        path = write_config(
            tmp_path, world_size=12, subring_size=2, n_k=4, n_w=4,
            sweep={"msg_bytes": 500_000, "measurements": 5,
                   "subrings": [2, 4, 6]},
            link={"ranks_per_node": 2})
        out = tmp_path / "out"
        assert main(["sweep", "--config", str(path), "--out", str(out),
                     "--subrings", "2,4,6"]) == 0
        with (out / "sweep.csv").open() as fh:
            reader = csv.DictReader(fh)
            assert reader.fieldnames == ["S", "n_meas", "msg_bytes",
                                         "elapsed_s", "eff_bw_Bps", "predicted_s"]
            rows = list(reader)
        assert [r["S"] for r in rows] == ["2", "4", "6"]
        fit = json.loads((out / "fit.json").read_text())
        assert set(fit) >= {"slope", "intercept", "r_squared"}

    def test_empty_subrings_is_usage_error(self, tmp_path):
        path = write_config(tmp_path)
        assert main(["sweep", "--config", str(path), "--out", str(tmp_path)]) == 2


class TestMemreportCommand:
    def test_production_shape_numbers(self, tmp_path):
        path = write_config(
            tmp_path, n_k=6, n_w=6, world_size=3, subring_size=3, lanes=7,
            memory={"entries": 212_336_640, "entry_bytes": 16,
                    "matrix_bytes": 0.17e9})
        out = tmp_path / "out"
        assert main(["memreport", "--config", str(path), "--out", str(out)]) == 0
        plan = json.loads((out / "memory_plan.json").read_text())
        gb = 1e9
        assert plan["gt_bytes_total"] / gb == pytest.approx(3.40, rel=0.01)
        assert plan["gt_bytes_per_rank"] / gb == pytest.approx(1.13, rel=0.01)
        assert plan["gsigma_bytes_original"] / gb == pytest.approx(2.38, rel=0.01)
        assert plan["gsigma_bytes_distributed"] / gb == pytest.approx(7.14, rel=0.01)

    def test_desk_shape_matches_tracker(self, tmp_path):
        from ringacc.engine import run_experiment

        path = write_config(tmp_path, world_size=2, subring_size=2, lanes=2)
        out = tmp_path / "out"
        assert main(["memreport", "--config", str(path), "--out", str(out)]) == 0
        plan = json.loads((out / "memory_plan.json").read_text())
        rep = run_experiment(load_config(path))
        # distributed per-rank total equals the tracked peak exactly here
        assert plan["distributed_total_per_rank"] == rep.memory_peaks[0]

    def test_p1_slice_is_total(self, tmp_path):
        path = write_config(tmp_path, world_size=1, subring_size=1)
        out = tmp_path / "out"
        assert main(["memreport", "--config", str(path), "--out", str(out)]) == 0
        plan = json.loads((out / "memory_plan.json").read_text())
        assert plan["gt_bytes_per_rank"] == plan["gt_bytes_total"]


class TestPredictCommand:
    def test_prediction_rows(self, tmp_path):
        path = write_config(
            tmp_path, world_size=12, subring_size=2, n_k=4, n_w=4,
            sweep={"msg_bytes": 1_700_000, "measurements": 10, "subrings": [6, 12]},
            link={"ranks_per_node": 6})
        out = tmp_path / "out"
        assert main(["predict", "--config", str(path), "--out", str(out)]) == 0
        rows = list(csv.DictReader((out / "predict.csv").open()))
        assert [r["slow_link"] for r in rows] == ["intra", "nic"]
        assert float(rows[1]["predicted_s"]) > float(rows[0]["predicted_s"])
