import json

import pytest

from ncmosr.cli import main
from ncmosr.errors import ConfigError, DataFormatError
from ncmosr.features import load_features
from ncmosr.head import TrainConfig
from ncmosr.pipeline import RunConfig, load_reports, run_pipeline
from ncmosr.synthetic import easy_benchmark

SMALL = easy_benchmark(n_known_classes=4, n_unknown_clusters=2, feature_dim=8, samples_per_class=60)
FAST = TrainConfig(max_epochs=30, batch_size=64)


def small_run(out, **kw):
    return RunConfig(output_dir=str(out), synthetic=SMALL, train=FAST, **kw)


class TestRunPipeline:
    def test_artifacts(self, tmp_path):
        result = run_pipeline(small_run(tmp_path))
        for rel in ("config.json", "head.ncmh", "prototypes.ncmp", "splits/test.ncmf",
                    "scores/ncm_agreement.csv", "reports/summary.csv", "reports/summary.txt",
                    "figures/roc.png", "figures/hist_ncm_agreement.png", "manifest.json"):
            assert (tmp_path / rel).exists(), rel
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["status"] == "ok"
        assert manifest["counts"] == {"train": 144, "validation": 48, "test_known": 48, "test_unknown": 120}
        assert set(load_reports(tmp_path / "reports")) == {"ncm_agreement", "max_softmax", "temp_scaling"}
        assert result.reports["ncm_agreement"].auroc > 0.9

    def test_rerun_identical(self, tmp_path):
        first = run_pipeline(small_run(tmp_path, figures=False))
        saved = {name: (tmp_path / name).read_bytes() for name in first.manifest["files"]}
        manifest = (tmp_path / "manifest.json").read_bytes()
        second = run_pipeline(small_run(tmp_path, figures=False))
        assert second.manifest == first.manifest
        assert (tmp_path / "manifest.json").read_bytes() == manifest
        for name, data in saved.items():
            assert (tmp_path / name).read_bytes() == data, name

    def test_hash_ignores_output_dir(self, tmp_path):
        assert small_run(tmp_path / "a").digest() == small_run(tmp_path / "b").digest()

    def test_unit_temperature_matches_msp(self, tmp_path):
        result = run_pipeline(small_run(tmp_path, temperature=1.0, figures=False,
                                        scorers=["max_softmax", "temp_scaling"]))
        a, b = result.reports["max_softmax"].to_dict(), result.reports["temp_scaling"].to_dict()
        a.pop("scorer_name"), b.pop("scorer_name")
        assert a == b

    def test_failure_recorded(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("id,label,f0,f1\na,x,1,2\nb,y,1\n")
        cfg = RunConfig(output_dir=str(tmp_path / "out"), known_path=str(bad), train=FAST)
        with pytest.raises(DataFormatError) as err:
            run_pipeline(cfg)
        assert err.value.stage == "load"
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["status"] == "failed" and manifest["failed_stage"] == "load"

    def test_missing_unknowns(self, tmp_path):
        path = tmp_path / "k.csv"
        path.write_text("id,label,f0\n" + "".join(f"{i},{'ab'[i % 2]},{i}\n" for i in range(20)))
        with pytest.raises(ConfigError):
            run_pipeline(RunConfig(output_dir=str(tmp_path / "o"), known_path=str(path), train=FAST))


class TestRunConfig:
    def test_exactly_one_source(self):
        with pytest.raises(ConfigError):
            RunConfig()
        with pytest.raises(ConfigError):
            RunConfig(known_path="k.csv", synthetic=SMALL)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            RunConfig.from_dict({"synthetic": SMALL.to_dict(), "learning_rate": 1})

    def test_bad_values(self):
        with pytest.raises(ConfigError):
            RunConfig(synthetic=SMALL, scorers=["energy"])
        with pytest.raises(ConfigError):
            RunConfig(synthetic=SMALL, threshold_policy="best")

    def test_dict_round_trip(self):
        cfg = small_run("x", threshold_policy=0.4)
        assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))).digest() == cfg.digest()


class TestCLI:
    def test_step_by_step(self, tmp_path, capsys):
        d = str(tmp_path)
        args = ["--output-dir", d, "--seed", "1"]
        assert main(["synth", "--n-known", "3", "--n-unknown", "2", "--dim", "6",
                     "--samples-per-class", "40", *args]) == 0
        assert main(["split", f"{d}/known.csv", *args]) == 0
        assert main(["train-head", "--train", f"{d}/train.csv", "--epochs", "20", *args]) == 0
        assert main(["fit-prototypes", "--input", f"{d}/validation.csv", *args]) == 0
        assert main(["score", "--head", f"{d}/head.ncmh", "--prototypes", f"{d}/prototypes.ncmp",
                     "--input", f"{d}/test.csv", f"{d}/unknown.csv", *args]) == 0
        scores_dir = tmp_path / "cal"
        assert main(["score", "--head", f"{d}/head.ncmh", "--prototypes", f"{d}/prototypes.ncmp",
                     "--input", f"{d}/validation.csv", "--output-dir", str(scores_dir)]) == 0
        assert main(["eval", "--scores", f"{d}/ncm_agreement.csv", f"{d}/max_softmax.csv",
                     "--calibration", str(scores_dir / "ncm_agreement.csv"), str(scores_dir / "max_softmax.csv"),
                     "--prototypes", f"{d}/prototypes.ncmp", "--output-dir", f"{d}/eval"]) == 0
        out = capsys.readouterr().out
        assert "ncm_agreement" in out and "AUROC" in out
        assert (tmp_path / "eval" / "roc.png").exists()
        assert len(load_features(f"{d}/test.csv").ids) == 24

    def test_run_synthetic(self, tmp_path, capsys):
        code = main(["run", "--synthetic", "easy", "--epochs", "5", "--no-figures",
                     "--output-dir", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "reports" / "summary.csv").exists()
        assert not (tmp_path / "figures").exists()

    def test_config_error_exit_code(self, tmp_path, capsys):
        assert main(["run", "--output-dir", str(tmp_path)]) == 2
        assert "error:" in capsys.readouterr().err

    def test_data_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("id,label,f0,f1\na,x,1,2\nb,y,1\n")
        assert main(["fit-prototypes", "--input", str(bad), "--output-dir", str(tmp_path)]) == 3
        assert "row 3" in capsys.readouterr().err

    def test_numeric_error_exit_code(self, tmp_path, capsys):
        path = tmp_path / "t.csv"
        path.write_text("id,label,f0\n" + "".join(f"{i},{'ab'[i % 2]},{1e200 * (i % 2)}\n" for i in range(10)))
        assert main(["train-head", "--train", str(path), "--epochs", "2", "--lr", "1e200",
                     "--output-dir", str(tmp_path)]) == 4
