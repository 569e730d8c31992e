import json

import numpy as np
import pandas as pd
import pytest

from qnbm.cli import main
from qnbm.dataset import load_csv

TINY = {
    "model": {"n_u": 8, "n_z": 4, "rank": 2},
    "train": {"max_epochs": 2, "patience": 2},
}


def write_config(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    cfg = write_config(out / "cfg.json", {"synth": {"n_days": 40}})
    assert main(["synth", "--config", cfg, "--out", str(out)]) == 0
    return out


class TestSynth:
    def test_thirty_days(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", {"synth": {"n_days": 30}})
        assert main(["synth", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
        df = pd.read_csv(tmp_path / "o" / "synth.csv")
        assert len(df) == 720
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest["command"] == "synth" and manifest["outputs"] == ["synth.csv", "synth_spec.json"]

    def test_same_seed_same_bytes(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", {"synth": {"n_days": 30}})
        for d in ("a", "b"):
            main(["synth", "--config", cfg, "--seed", "5", "--out", str(tmp_path / d)])
        assert (tmp_path / "a" / "synth.csv").read_bytes() == (tmp_path / "b" / "synth.csv").read_bytes()
        main(["synth", "--config", cfg, "--seed", "6", "--out", str(tmp_path / "c")])
        assert (tmp_path / "a" / "synth.csv").read_bytes() != (tmp_path / "c" / "synth.csv").read_bytes()


class TestTrainEvaluateExplain:
    def test_train_with_sidecar(self, synth_dir, tmp_path):
        cfg = {**TINY, "data": str(synth_dir / "synth.csv"), "synth_spec": str(synth_dir / "synth_spec.json"), "test_days": 7}
        rc = main(["train", "--config", write_config(tmp_path / "c.json", cfg), "--out", str(tmp_path / "t")])
        assert rc == 0
        report = json.loads((tmp_path / "t" / "report.json").read_text())
        assert report["crps_lower_bound"] > 0 and report["n_days"] == 7
        assert (tmp_path / "t" / "checkpoints" / "model.ckpt").exists()
        fc = pd.read_csv(tmp_path / "t" / "forecast.csv")
        assert len(fc) == 7 * 24 * 99

    def test_train_baseline_with_grid(self, synth_dir, tmp_path):
        cfg = {**TINY, "data": str(synth_dir / "synth.csv"), "test_days": 3, "grid": {"candidates": {"learning_rate": [1e-3, 1e-2]}}}
        rc = main(["train", "--model", "qrdnn", "--config", write_config(tmp_path / "c.json", cfg), "--out", str(tmp_path / "t")])
        assert rc == 0
        assert len(pd.read_csv(tmp_path / "t" / "grid.csv")) == 2

    @pytest.mark.filterwarnings("ignore:DM test")
    def test_evaluate_perfect_forecast(self, synth_dir, tmp_path):
        frame = load_csv(synth_dir / "synth.csv")
        prices = frame.daily("price")[-5:]
        days = frame.days[-5:]
        rows = [(str(d), h, g, prices[i, h]) for i, d in enumerate(days) for h in range(24) for g in (0.05, 0.5, 0.95)]
        pd.DataFrame(rows, columns=["day", "hour", "gamma", "value"]).to_csv(tmp_path / "perfect.csv", index=False, float_format="%.17g")
        shifted = [(d, h, g, v + 1) for d, h, g, v in rows]
        pd.DataFrame(shifted, columns=["day", "hour", "gamma", "value"]).to_csv(tmp_path / "shifted.csv", index=False, float_format="%.17g")
        cfg = {
            "data": str(synth_dir / "synth.csv"),
            "evaluate": {"forecasts": {"perfect": "perfect.csv", "shifted": "shifted.csv"}},
        }
        rc = main(["evaluate", "--config", write_config(tmp_path / "c.json", cfg), "--out", str(tmp_path / "e")])
        assert rc == 0
        rep = json.loads((tmp_path / "e" / "report_perfect.json").read_text())
        assert rep["crps"] == 0.0 and rep["mae"] == 0.0 and rep["picp"]["90"] == 100.0
        assert (tmp_path / "e" / "dm_matrix.csv").exists()

    def test_backtest_then_explain(self, synth_dir, tmp_path):
        frame = load_csv(synth_dir / "synth.csv")
        cfg = {**TINY, "data": str(synth_dir / "synth.csv"),
               "backtest": {"test_start": str(frame.days[-14]), "test_end": str(frame.days[-1])}}
        rc = main(["backtest", "--config", write_config(tmp_path / "c.json", cfg), "--out", str(tmp_path / "b")])
        assert rc == 0
        ckpts = sorted((tmp_path / "b" / "checkpoints").glob("*.ckpt"))
        assert len(ckpts) == 2
        ex = {"explain": {"checkpoints": [str(p) for p in ckpts], "gammas": [0.5], "hours": [0], "features": ["load_fcst_h00"]}}
        rc = main(["explain", "--config", write_config(tmp_path / "x.json", ex), "--out", str(tmp_path / "x")])
        assert rc == 0
        meta = json.loads((tmp_path / "x" / "shapes" / "shapes_manifest.json").read_text())
        assert len(meta["curves"]) == 2


class TestExitCodes:
    def test_unknown_key_is_config_error(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", {"synth": {"n_days": 30}, "bogus": 1})
        assert main(["synth", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["exit_code"] == 2

    def test_invalid_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{nope")
        assert main(["synth", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == 2

    def test_missing_data_file(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", {"data": "absent.csv"})
        assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 3

    def test_bad_csv_schema(self, tmp_path):
        (tmp_path / "d.csv").write_text("timestamp,price\n2021-01-01T00:00:00,1\n")
        cfg = write_config(tmp_path / "c.json", {"data": "d.csv"})
        assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 3

    def test_backtest_without_plan(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", {"data": "d.csv"})
        assert main(["backtest", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
