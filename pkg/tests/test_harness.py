import json
from pathlib import Path

import numpy as np
import pytest

from uqbench import cli, harness
from uqbench.harness import StudySettings
from uqbench.posterior import PredictiveBatch
from uqbench.synthdata import DATASET_SPECS, generate_splits, lrfd


def micro_settings(**overrides):
    """Smallest settings that still exercise every code path."""
    values = dict(
        dataset="A",
        algorithms=("nne", "dpmm"),
        n_train=(80,),
        seed=1,
        size="small",
        learning_rate=0.01,
        max_epochs=4,
        patience=4,
        ensemble_size=2,
        candidates=2,
        mcd_passes=10,
        gp_mc_samples=50,
        gp_optimize=False,
        dpmm_truncation=8,
        dpmm_chains=1,
        dpmm_burn_in=10,
        dpmm_samples=10,
        grid_n_train=(80,),
        grid_sizes=("small",),
        grid_weight_decays=(0.01,),
        grid_members=2,
        spatial_points=5,
        spatial_extent=20.0,
    )
    values.update(overrides)
    return StudySettings(**values)


@pytest.fixture(scope="module")
def micro_bundle():
    return generate_splits("A", seed=1, sizes=(200, 120, 150))


class TestConfigFiles:
    def test_parse_scalars_lists_comments(self):
        text = """
        # study configuration
        dataset = "A"
        seed = 3
        n_train = 250, 1000   # sweep sizes
        learning_rate = 0.001
        gp_optimize = true
        size = medium
        """
        parsed = harness.parse_config_text(text)
        assert parsed == {
            "dataset": "A", "seed": 3, "n_train": (250, 1000),
            "learning_rate": 0.001, "gp_optimize": True, "size": "medium",
        }

    def test_malformed_line_rejected(self):
        with pytest.raises(harness.ConfigError):
            harness.parse_config_text("dataset A")
        with pytest.raises(harness.ConfigError):
            harness.parse_config_text("= 3")

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("no_such_setting = 1\n")
        with pytest.raises(harness.ConfigError):
            harness.settings_from_file(path)

    def test_settings_file_roundtrip(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text('dataset = "B"\nseed = 9\nn_train = 250\nfast = true\n')
        settings = harness.settings_from_file(path)
        assert settings.dataset == "B"
        assert settings.seed == 9
        assert settings.n_train == (250,)
        assert settings.ensemble_size == 10  # fast default

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            harness.settings_from_file(tmp_path / "none.cfg")


class TestFingerprints:
    def test_stable_and_sensitive(self):
        s = micro_settings()
        f1 = harness.run_fingerprint(s, "nne", 80)
        f2 = harness.run_fingerprint(s, "nne", 80)
        assert f1 == f2
        assert harness.run_fingerprint(s, "dpmm", 80) != f1
        assert harness.run_fingerprint(micro_settings(seed=2), "nne", 80) != f1


class TestRadialProfile:
    def test_single_point(self):
        batch = PredictiveBatch(np.array([0.7]), np.array([0.1]))
        rows = harness.radial_profile(batch, np.array([[3.0, 4.0]]),
                                      np.array([0.0, 10.0]), DATASET_SPECS["A"])
        assert len(rows) == 1
        assert rows[0]["n_points"] == 1
        assert rows[0]["min_prob"] == rows[0]["max_prob"] == 0.7

    def test_lrfd_column_matches_oracle_exactly(self):
        spec = DATASET_SPECS["B"]
        batch = PredictiveBatch(np.array([0.5, 0.5]), np.array([0.1, 0.1]))
        pts = np.array([[1.0, 0.0], [7.0, 0.0]])
        rows = harness.radial_profile(batch, pts, np.array([0.0, 2.0, 10.0]), spec)
        for row in rows:
            assert row["lrfd_center"] == float(lrfd(row["r_center"], spec))

    def test_identical_class_generator_profile_is_half(self):
        spec = DATASET_SPECS["C"]
        rows = harness.radial_profile(
            PredictiveBatch(np.full(5, 0.5), np.full(5, 0.2)),
            np.column_stack([np.linspace(1, 40, 5), np.zeros(5)]),
            np.linspace(0.0, 50.0, 6), spec)
        for row in rows:
            assert row["lrfd_center"] == pytest.approx(0.5, abs=1e-12)

    def test_empty_bins_omitted(self):
        batch = PredictiveBatch(np.array([0.5]), np.array([0.1]))
        rows = harness.radial_profile(batch, np.array([[30.0, 0.0]]),
                                      np.array([0.0, 10.0, 20.0, 40.0]), DATASET_SPECS["A"])
        assert len(rows) == 1
        assert rows[0]["r_lo"] == 20.0


class TestNearestRank:
    def test_examples(self):
        values = list(range(1, 21))
        assert harness.nearest_rank_percentile(values, 2.5) == 1
        assert harness.nearest_rank_percentile(values, 97.5) == 20
        assert harness.nearest_rank_percentile(values, 50.0) == 10

    def test_empty(self):
        with pytest.raises(ValueError):
            harness.nearest_rank_percentile([], 50.0)


class TestGridCells:
    def test_default_cell_counts(self):
        defaults = StudySettings()
        for algorithm in ("nne", "cl", "edl", "mcd"):
            assert len(harness.grid_cells(defaults, algorithm)) == 81

    def test_column_axes(self):
        defaults = StudySettings()
        cells = harness.grid_cells(defaults, "nne")
        assert {c["column_param"] for c in cells} == {"learning_rate"}
        assert {c["column_value"] for c in cells} == {0.01, 0.001, 0.0001}
        cl_cells = harness.grid_cells(defaults, "cl")
        assert {c["learning_rate"] for c in cl_cells} == {0.001}
        assert {c["column_value"] for c in cl_cells} == {0.1, 0.2, 0.5}

    def test_nonsearchable_algorithm_rejected(self):
        with pytest.raises(harness.ConfigError):
            harness.grid_cells(StudySettings(), "gp")


class TestStudyRuns:
    def test_default_settings_pin_study_protocol(self):
        s = StudySettings()
        assert len(s.algorithms) * len(s.n_train) == 42
        assert (s.size, s.learning_rate, s.weight_decay) == ("medium", 0.001, 0.01)
        assert (s.beta, s.lambda0, s.dropout) == (0.1, 0.002, 0.3)
        assert (s.ensemble_size, s.gp_mc_samples, s.mcd_passes) == (20, 1000, 500)
        assert (s.max_epochs, s.patience) == (200, 20)

    def test_micro_study_records(self, micro_bundle, tmp_path):
        settings = micro_settings(out_dir=str(tmp_path / "study"))
        records = harness.run_study(settings, bundle=micro_bundle)
        assert len(records) == 2
        by_algo = {r["algorithm"]: r for r in records}
        assert set(by_algo) == {"nne", "dpmm"}
        for record in records:
            assert record["status"] == "ok"
            assert 0.0 <= record["accuracy"] <= 1.0
            assert np.isfinite(record["wasserstein1"])
            assert record["fingerprint"]
        out = tmp_path / "study"
        assert (out / "records.csv").exists()
        assert (out / "profiles.csv").exists()
        assert (out / "manifest.json").exists()

    def test_study_determinism_modulo_walltime(self, micro_bundle):
        settings = micro_settings()
        r1 = harness.run_study(settings, bundle=micro_bundle, write=False)
        r2 = harness.run_study(settings, bundle=micro_bundle, write=False)
        for a, b in zip(r1, r2):
            a = {k: v for k, v in a.items() if k != "wall_time_s"}
            b = {k: v for k, v in b.items() if k != "wall_time_s"}
            assert a == b

    def test_diverged_run_recorded_with_flag(self, micro_bundle):
        settings = micro_settings(algorithms=("nne",), learning_rate=10.0,
                                  weight_decay=1.0, max_epochs=200, patience=200)
        records = harness.run_study(settings, bundle=micro_bundle, write=False)
        assert len(records) == 1
        assert records[0]["status"] == "diverged"
        assert np.isnan(records[0]["accuracy"])

    def test_identical_class_cap_for_nonparametrics(self):
        settings = micro_settings(dataset="C")
        assert harness._effective_n_train(settings, "gp", 5000) == (2000, True)
        assert harness._effective_n_train(settings, "nne", 5000) == (5000, False)
        assert harness._effective_n_train(settings, "dpmm", 1000) == (1000, False)

    def test_spatial_rows_written(self, micro_bundle, tmp_path):
        settings = micro_settings(algorithms=("nne",), spatial=True,
                                  out_dir=str(tmp_path / "s"))
        harness.run_study(settings, bundle=micro_bundle)
        rows = harness.read_rows(tmp_path / "s" / "spatial.csv")
        assert len(rows) == 25
        assert set(rows[0]) == set(harness.SPATIAL_COLUMNS)

    def test_micro_grid(self, micro_bundle):
        settings = micro_settings()
        rows = harness.run_grid(settings, "nne", bundle=micro_bundle, write=False)
        assert len(rows) == 3  # 3 learning rates x 1 wd x 1 size x 1 n_train
        for row in rows:
            assert row["column_param"] == "learning_rate"
            assert row["status"] in ("ok", "diverged")
            if row["status"] == "ok":
                assert 0.0 <= row["val_accuracy"] <= 1.0
                assert row["ood_prob_p2_5"] <= row["ood_prob_p97_5"] + 1e-12


class TestReport:
    def test_bundle_files(self, micro_bundle, tmp_path):
        study_dir = tmp_path / "study"
        settings = micro_settings(out_dir=str(study_dir), spatial=True)
        harness.run_study(settings, bundle=micro_bundle)
        harness.run_grid(settings, "nne", bundle=micro_bundle)
        out = tmp_path / "report"
        written = harness.report(study_dir, out)
        assert set(written) >= {"metrics.csv", "ood.csv", "profiles.csv", "grid.csv",
                                "spatial.csv", "manifest.json"}
        metrics = harness.read_rows(out / "metrics.csv")
        assert {r["algorithm"] for r in metrics} == {"nne", "dpmm"}

    def test_report_missing_records(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            harness.report(tmp_path, tmp_path / "out")


@pytest.fixture(scope="module")
def cli_workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliwork")
    data = root / "data"
    assert cli.main(["datagen", "--dataset", "A", "--seed", "3", "--out", str(data),
                     "--train-size", "200", "--val-size", "80", "--test-size", "100"]) == 0
    cfg = root / "study.cfg"
    cfg.write_text(
        'dataset = "A"\nsize = small\nlearning_rate = 0.01\nmax_epochs = 3\n'
        "patience = 3\nensemble_size = 2\ncandidates = 2\nmcd_passes = 5\n"
        "gp_optimize = false\ngp_mc_samples = 40\ndpmm_truncation = 8\n"
        "dpmm_chains = 1\ndpmm_burn_in = 5\ndpmm_samples = 5\n"
    )
    return root, data, cfg


class TestCLI:
    def test_datagen_writes_expected_files(self, tmp_path):
        out = tmp_path / "data"
        code = cli.main(["datagen", "--dataset", "A", "--seed", "7", "--out", str(out),
                         "--train-size", "300", "--val-size", "100", "--test-size", "120"])
        assert code == 0
        for name in ("train.csv", "validation.csv", "test.csv", "ood_grid.csv", "manifest.json"):
            assert (out / name).exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["dataset"] == "A"
        assert manifest["seed"] == 7

    def test_train_and_evaluate_roundtrip(self, cli_workdir, tmp_path):
        root, data, cfg = cli_workdir
        ck = root / "nne_ck"
        assert cli.main(["train", "--data", str(data), "--algorithm", "nne",
                         "--n-train", "100", "--config", str(cfg), "--out", str(ck)]) == 0
        ck_file = ck.with_suffix(".json")
        assert ck_file.exists()

        out1 = tmp_path / "eval1"
        out2 = tmp_path / "eval2"
        assert cli.main(["evaluate", "--checkpoint", str(ck_file), "--data", str(data),
                         "--out", str(out1), "--spatial"]) == 0
        assert cli.main(["evaluate", "--checkpoint", str(ck_file), "--data", str(data),
                         "--out", str(out2), "--spatial"]) == 0
        for name in ("metrics.csv", "profiles.csv", "spatial.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_gp_checkpoint_roundtrip(self, cli_workdir, tmp_path):
        root, data, cfg = cli_workdir
        ck = root / "gp_ck"
        assert cli.main(["train", "--data", str(data), "--algorithm", "gp",
                         "--n-train", "100", "--config", str(cfg), "--out", str(ck)]) == 0
        assert ck.with_suffix(".npz").exists()
        out = tmp_path / "gpeval"
        assert cli.main(["evaluate", "--checkpoint", str(ck.with_suffix(".npz")),
                         "--data", str(data), "--out", str(out)]) == 0
        assert (out / "metrics.csv").exists()

    def test_exit_code_missing_file(self, tmp_path):
        assert cli.main(["evaluate", "--checkpoint", str(tmp_path / "none.json"),
                         "--data", str(tmp_path)]) == cli.EXIT_MISSING_FILE

    def test_exit_code_bad_config(self, cli_workdir, tmp_path):
        root, data, _ = cli_workdir
        bad = tmp_path / "bad.cfg"
        bad.write_text("not a config\n")
        assert cli.main(["train", "--data", str(data), "--algorithm", "nne",
                         "--n-train", "50", "--config", str(bad)]) == cli.EXIT_BAD_CONFIG

    def test_exit_code_fingerprint_mismatch(self, cli_workdir, tmp_path):
        root, data, cfg = cli_workdir
        ck = tmp_path / "tampered"
        assert cli.main(["train", "--data", str(data), "--algorithm", "nne",
                         "--n-train", "100", "--config", str(cfg), "--out", str(ck)]) == 0
        doc = json.loads(ck.with_suffix(".json").read_text())
        doc["n_train"] = 999  # stored config no longer matches the fingerprint
        ck.with_suffix(".json").write_text(json.dumps(doc))
        assert cli.main(["evaluate", "--checkpoint", str(ck.with_suffix(".json")),
                         "--data", str(data), "--out", str(tmp_path / "o")]) == cli.EXIT_FINGERPRINT

    def test_env_var_overrides_output_dir(self, cli_workdir, tmp_path, monkeypatch):
        root, data, cfg = cli_workdir
        target = tmp_path / "env_out"
        monkeypatch.setenv("UQBENCH_OUT", str(target))
        assert cli.main(["datagen", "--dataset", "B", "--seed", "1", "--out", "ignored",
                         "--train-size", "50", "--val-size", "30", "--test-size", "30"]) == 0
        assert (target / "train.csv").exists()
