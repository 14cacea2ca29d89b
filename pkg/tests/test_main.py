import pandas as pd
import pytest
import yaml

from src.data.snapshots import read_snapshots
from src.main import main
from src.utils.config import load_config


@pytest.fixture
def config_file(tmp_path):
    cfg = {
        "dataset": {"train_param_counts": [3], "n_train_times": 21, "n_val_params": 1, "n_val_times": 4,
                    "n_test_params": 2, "n_test_times": 3, "n_x": 32, "seed": 5},
        "architecture": {"reducer": "pod", "preset": None, "n_conv": 1, "channels": 1, "n_latent": 4, "pod_rank": 4},
        "hodmd": {"n_delay": 2},
        "sweep_n_delays": [1, 2],
        "paths": {"data_dir": str(tmp_path / "data"), "output_dir": str(tmp_path / "output")},
    }
    path = tmp_path / "rom.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


class TestPipeline:
    def test_init_writes_loadable_config(self, tmp_path, config_file):
        out = tmp_path / "written.yaml"
        assert main(["init", "--config", str(config_file), "--seed", "9", "--out", str(out)]) == 0
        cfg = load_config(out)
        assert cfg.dataset.seed == 9 and cfg.training.seed == 9
        assert cfg.architecture.pod_rank == 4

    def test_end_to_end(self, tmp_path, config_file):
        config = ["--config", str(config_file)]
        data, output = tmp_path / "data", tmp_path / "output"

        assert main(["generate-data", *config]) == 0
        for split in ("train", "validation", "test"):
            assert (data / f"{split}.roms").is_file()

        assert main(["train", *config]) == 0
        assert (output / "reducer.romp").is_file()

        assert main(["build-rom", *config]) == 0
        bundle = output / "bundle"
        assert (bundle / "manifest.json").is_file() and (bundle / "hodmd_000.romd").is_file()
        spectrum = pd.read_csv(output / "hodmd_spectrum.csv")
        assert set(spectrum["param_index"]) == {0, 1, 2}

        profile, latents = tmp_path / "profile.csv", tmp_path / "latents.csv"
        assert main(["predict", *config, "--time", "1.0", "--param", "450",
                     "--csv", str(profile), "--latent-csv", str(latents)]) == 0
        prediction = read_snapshots(output / "prediction.roms")
        assert prediction.fields.shape == (1, 1, 1, 1, 32)
        assert list(pd.read_csv(profile).columns) == ["channel", "y", "x", "u"]
        # 450 is a training node, so the stored latents come along as reference columns
        latent_frame = pd.read_csv(latents)
        assert list(latent_frame.columns) == ["t", "q0", "q1", "q2", "q3", "energy",
                                              "ref_q0", "ref_q1", "ref_q2", "ref_q3"]
        assert len(latent_frame) == 21

        assert main(["evaluate", *config]) == 0
        summary = pd.read_csv(output / "evaluation.csv")
        assert list(summary.columns) == ["n_delay", "E_cae", "E_latent", "E_cae_phodmd", "E_cae_phodmd_in_window"]
        assert list(summary["n_delay"]) == [1, 2]
        report = pd.read_csv(output / "evaluation_n_delay_2.csv")
        assert list(report.columns) == ["t", "omega", "eps_cae", "eps_latent", "eps_cae_phodmd"]
        assert len(report) == 6


class TestExitCodes:
    def test_bad_config(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("hodmd:\n  n_dealy: 3\n")
        assert main(["generate-data", "--config", str(path)]) == 2

    def test_missing_bundle(self, tmp_path, config_file):
        assert main(["predict", "--config", str(config_file), "--bundle", str(tmp_path / "nowhere"),
                     "--time", "0.5", "--param", "300"]) == 4

    def test_predict_needs_query(self, config_file):
        assert main(["predict", "--config", str(config_file)]) == 2

    def test_parameter_outside_training_range(self, config_file):
        config = ["--config", str(config_file)]
        assert main(["generate-data", *config]) == 0
        assert main(["train", *config]) == 0
        assert main(["build-rom", *config]) == 0
        assert main(["predict", *config, "--time", "0.5", "--param", "900"]) == 3
