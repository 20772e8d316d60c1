import json

import numpy as np
import pytest

from app.core.evaluation import SurrogateConfig, SurrogateModel, init_surrogate
from app.core.patterns import tile
from app.main import run
from app.utils.images import load_binary_pgm, save_binary_pgm
from app.utils.storage import read_csv
from tests.helpers import square_cell

pytestmark = pytest.mark.usefixtures("reset_logging")

TINY_TRAIN = ["--image-side", "32", "--latent-dim", "4", "--batch-size", "4", "--epochs", "1",
              "--set", "generator_hidden=[8]", "--set", "critic_hidden=[8]", "--set", "weights.n_critic=1"]


def invoke(capsys, *argv) -> dict:
    assert run(list(argv)) == 0
    return json.loads(capsys.readouterr().out)


@pytest.fixture
def dataset(tmp_path, capsys):
    out = tmp_path / "data"
    invoke(capsys, "synth", "--out", str(out), "--profile", "custom", "--set", "train_counts=[6,4,3]",
           "--test-per-class", "2", "--image-side", "32", "--cell-side", "8", "--seed", "3")
    return out


@pytest.fixture
def checkpoint(tmp_path, dataset, capsys):
    response = invoke(capsys, "train", "--data", str(dataset / "manifest.jsonl"), "--out", str(tmp_path / "run"),
                      *TINY_TRAIN)
    return response["checkpoint"]


class TestSynth:

    def test_writes_dataset_and_run_files(self, tmp_path, capsys):
        out = tmp_path / "data"
        response = invoke(capsys, "synth", "--out", str(out), "--profile", "custom",
                          "--set", "train_counts=[6,4,3]", "--test-per-class", "2",
                          "--image-side", "32", "--cell-side", "8", "--seed", "3")
        assert response["period"] == 4
        assert response["train_counts"] == [6, 4, 3]
        assert response["test_counts"] == [2, 2, 2]
        for name in ("manifest.jsonl", "dataset.json", "resolved-config.json", "run.log"):
            assert (out / name).is_file()
        assert "[SYNTH]" in (out / "run.log").read_text(encoding="utf-8")

    def test_rerun_from_resolved_config_is_identical(self, tmp_path, dataset, capsys):
        again = tmp_path / "again"
        invoke(capsys, "synth", "--config", str(dataset / "resolved-config.json"), "--out", str(again))
        assert (again / "manifest.jsonl").read_bytes() == (dataset / "manifest.jsonl").read_bytes()
        for path in sorted((dataset / "train").iterdir()):
            assert path.read_bytes() == (again / "train" / path.name).read_bytes()


class TestTrainAndGenerate:

    def test_train_writes_artifacts(self, tmp_path, checkpoint):
        run_dir = tmp_path / "run"
        assert (run_dir / "checkpoint.json").is_file()
        rows = read_csv(run_dir / "metrics.csv")
        assert len(rows) == 3
        assert list(rows[0]) == ["epoch", "iter", "L_D", "L_W", "L_cls", "L_blur", "L_recon", "p_h", "p_w", "k"]
        assert (run_dir / "samples" / "epoch_0001.pgm").is_file()

    def test_variant_preset(self, tmp_path, dataset, capsys):
        invoke(capsys, "train", "--data", str(dataset / "manifest.jsonl"), "--out", str(tmp_path / "vanilla"),
               "--variant", "vanilla", *TINY_TRAIN)
        resolved = json.loads((tmp_path / "vanilla" / "resolved-config.json").read_text(encoding="utf-8"))
        assert resolved["variant"] == "vanilla"
        rows = read_csv(tmp_path / "vanilla" / "metrics.csv")
        assert all(float(r["L_blur"]) == 0.0 and float(r["L_recon"]) == 0.0 for r in rows)
        assert all((r["p_h"], r["p_w"]) == ("4", "4") for r in rows)

    def test_generate_is_deterministic(self, tmp_path, checkpoint, capsys):
        first = invoke(capsys, "generate", "--checkpoint", checkpoint, "--out", str(tmp_path / "g1"),
                       "--n", "4", "--seed", "2")
        invoke(capsys, "generate", "--checkpoint", checkpoint, "--out", str(tmp_path / "g2"),
               "--n", "4", "--seed", "2")
        assert first["counts"] == {"0": 4, "1": 4, "2": 4}
        names = sorted(p.name for p in (tmp_path / "g1").glob("*.pgm"))
        assert len(names) == 12
        for name in names:
            assert (tmp_path / "g1" / name).read_bytes() == (tmp_path / "g2" / name).read_bytes()
        assert set(np.unique(load_binary_pgm(tmp_path / "g1" / names[0]))) <= {0, 1}

    def test_single_label(self, tmp_path, checkpoint, capsys):
        response = invoke(capsys, "generate", "--checkpoint", checkpoint, "--out", str(tmp_path / "g"),
                          "--label", "1", "--n", "3", "--no-grid")
        assert response["counts"] == {"1": 3}
        assert not (tmp_path / "g" / "grids").exists()

    def test_eval_writes_one_row(self, tmp_path, dataset, checkpoint, capsys):
        invoke(capsys, "generate", "--checkpoint", checkpoint, "--out", str(tmp_path / "g"), "--n", "4")
        response = invoke(capsys, "eval", "--real", str(dataset / "manifest.jsonl"), "--generated",
                          str(tmp_path / "g"), "--out", str(tmp_path / "eval" / "row.csv"),
                          "--set", "surrogate_config.epochs=2", "--set", "surrogate_config.hidden=[8,4]")
        rows = read_csv(tmp_path / "eval" / "row.csv")
        assert len(rows) == 1
        assert rows[0]["n_real"] == "13" and rows[0]["n_gen"] == "12"
        assert response["surrogate_metrics"]["n_test"] == 6
        assert (tmp_path / "eval" / "surrogate.json").is_file()


class TestAnalyze:

    def test_recovers_tiling(self, tmp_path, capsys):
        image = save_binary_pgm(tmp_path / "tiling.pgm", tile(square_cell(8, 3, 2, 1), 4))
        response = invoke(capsys, "analyze", "--image", str(image), "--out", str(tmp_path / "analysis"))
        assert (response["p_h"], response["p_w"], response["valid"]) == (4, 4, True)
        report = json.loads((tmp_path / "analysis" / "report.json").read_text(encoding="utf-8"))
        assert report["autocorrelation_period"] == [4, 4]
        assert report["crop"] == [0, 0]
        cell = load_binary_pgm(tmp_path / "analysis" / "cell.pgm")
        assert np.array_equal(cell, square_cell(8, 3, 2, 1))


class TestAugment:

    def test_balances_with_saved_surrogate(self, tmp_path, dataset, checkpoint, capsys):
        model = init_surrogate(SurrogateConfig(hidden=[8, 4]), 32, 3, np.random.default_rng(0))
        flat = SurrogateModel(model.spec, model.params.zeros_like(), 32, model.feature_depth)
        surrogate = flat.save(tmp_path / "flat.json")
        response = invoke(capsys, "augment", "--data", str(dataset / "manifest.jsonl"), "--generator", checkpoint,
                          "--surrogate", str(surrogate), "--out", str(tmp_path / "aug"),
                          "--threshold-mode", "absolute", "--alpha-conf", "0.3", "--no-evaluate")
        assert response["acceptance"]["train_counts_after"] == [6, 6, 6]
        assert response["comparison"] is None
        assert (tmp_path / "aug" / "acceptance.json").is_file()
        assert len(list((tmp_path / "aug" / "synthetic").glob("*.pgm"))) == 5


class TestBench:

    def test_quick_ablation(self, tmp_path, capsys):
        config = {
            "dataset": {"profile": "custom", "train_counts": [6, 4, 3], "test_per_class": 2,
                        "image_side": 32, "cell_side": 8, "seed": 3},
            "train": {"latent_dim": 4, "generator_hidden": [8], "critic_hidden": [8], "batch_size": 4,
                      "epochs": 1, "sample_every_epochs": 0, "weights": {"n_critic": 1}},
            "surrogate": {"hidden": [8, 4], "epochs": 2},
            "variants": ["full", "no-fft"],
            "seeds": 1,
            "n_generated": 4,
            "splits": 2,
        }
        path = tmp_path / "bench.json"
        path.write_text(json.dumps(config), encoding="utf-8")
        response = invoke(capsys, "bench", "--config", str(path), "--out", str(tmp_path / "bench"),
                          "--skip-augmentation")
        assert [s["variant"] for s in response["summary"]] == ["full", "no-fft"]
        assert response["augmentation"] is None
        rows = read_csv(tmp_path / "bench" / "ablation.csv")
        assert [r["variant"] for r in rows] == ["full", "no-fft"]
        assert len(read_csv(tmp_path / "bench" / "ablation_summary.csv")) == 2
        assert (tmp_path / "bench" / "runs" / "no-fft" / "seed0" / "checkpoint.json").is_file()


class TestErrors:

    @pytest.mark.parametrize("argv", [
        [],
        ["synth"],
        ["synth", "--out", "x", "--bogus", "1"],
        ["analyze", "--out", "x"],
    ])
    def test_usage_errors_exit_2(self, argv, capsys):
        assert run(argv) == 2
        assert "error:" in capsys.readouterr().err

    def test_invalid_geometry(self, tmp_path, capsys):
        assert run(["synth", "--out", str(tmp_path), "--image-side", "30", "--cell-side", "8"]) == 2
        assert "invalid configuration" in capsys.readouterr().err

    def test_unknown_nested_key(self, tmp_path, capsys):
        assert run(["train", "--data", "m.jsonl", "--out", str(tmp_path), "--set", "weights.lambda_x=1"]) == 2

    def test_assignment_without_value(self, tmp_path):
        assert run(["synth", "--out", str(tmp_path), "--set", "seed"]) == 2

    def test_missing_config_file(self, tmp_path):
        assert run(["synth", "--out", str(tmp_path), "--config", str(tmp_path / "none.json")]) == 2

    def test_missing_manifest(self, tmp_path):
        assert run(["train", "--data", str(tmp_path / "none.jsonl"), "--out", str(tmp_path / "run")]) == 2

    def test_unreachable_band(self, tmp_path, capsys):
        code = run(["synth", "--out", str(tmp_path), "--image-side", "32", "--set", "coverage_bands=[0.001,0.002]",
                    "--max-rejections", "50"])
        assert code == 2
        assert "unreachable" in capsys.readouterr().err


@pytest.mark.slow
def test_benchmark_directions(tmp_path, capsys):
    config = {
        "train": {"epochs": 100000, "max_generator_steps": 2000, "sample_every_epochs": 0},
        "variants": ["full", "no-fft", "no-recon"],
        "seeds": 3,
        "augmentation_profile": "macrophage",
        "augmentation_scale": 0.1,
    }
    path = tmp_path / "bench.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    response = invoke(capsys, "bench", "--config", str(path), "--out", str(tmp_path / "bench"))
    medians = {s["variant"]: s["topofid_median"] for s in response["summary"]}
    assert medians["full"] <= medians["no-fft"]
    assert medians["full"] <= medians["no-recon"]
    baseline = np.median([c["baseline"]["macro_f1"] for c in response["comparisons"]])
    augmented = np.median([c["augmented"]["macro_f1"] for c in response["comparisons"]])
    assert augmented >= baseline
