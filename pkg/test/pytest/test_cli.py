import json
import logging
import re

import pandas as pd
import pytest

from gazeid.database.csv_dataset import CsvDatasetRepository
from gazeid.database.model_store import load_model
from gazeid.main import main
from gazeid.schemas.gaze import IvtParams
from gazeid.services.experiment_service import ExperimentService


# ------------------------------- Helpers --------------------------------------
def synth(out, seed=0, users=3, duration=15):
    return main([
        "synth", "--users", str(users), "--sessions", "2", "--duration", str(duration),
        "--rate", "250", "--seed", str(seed), "--output-dir", str(out),
    ])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert synth(out) == 0
    return out


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    # basicConfig punta allo stdout catturato del singolo test
    logging.getLogger().handlers.clear()


def files_of(directory):
    return {p.relative_to(directory).as_posix(): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


def run(*argv):
    return main([str(a) for a in argv])


# --------------------------------- synth --------------------------------------
def test_synth_is_deterministic(tmp_path):
    assert synth(tmp_path / "a", duration=5) == 0
    assert synth(tmp_path / "b", duration=5) == 0
    a, b = files_of(tmp_path / "a"), files_of(tmp_path / "b")
    assert a == b
    assert {"manifest.json", "experiment.json", "config.json", "u001_s1.csv", "u003_s2.events.csv"} <= set(a)


def test_synth_experiment_is_ready_to_run(dataset):
    cfg = json.loads((dataset / "experiment.json").read_text())
    assert cfg["manifest"] == "manifest.json"
    assert cfg["split"]["train_sessions"] == ["s1"] and cfg["split"]["test_sessions"] == ["s2"]


# ------------------------------- evaluate -------------------------------------
def test_evaluate_writes_report(dataset, tmp_path, capsys):
    code = run("evaluate", "--config", dataset / "experiment.json", "--seeds", 3, "--output-dir", tmp_path / "r1")
    out = capsys.readouterr().out
    assert code == 0
    assert re.search(r"accuracy = \d\.\d{4} ± \d\.\d{4} over 3 seeds", out)
    for name in ("report.json", "report.csv", "report.txt", "config.json"):
        assert (tmp_path / "r1" / name).is_file()
    report = json.loads((tmp_path / "r1" / "report.json").read_text())
    assert report["seeds"] == [0, 1, 2]
    assert report["n_predictions"] == 3

    assert run("evaluate", "--config", dataset / "experiment.json", "--seeds", 3, "--output-dir", tmp_path / "r2") == 0
    assert files_of(tmp_path / "r1") == files_of(tmp_path / "r2")


def test_ivt_flags_reach_the_config(dataset, tmp_path):
    code = run("evaluate", "--config", dataset / "experiment.json", "--seeds", 1,
               "--vt", 27, "--mfd", 0.096, "--output-dir", tmp_path)
    assert code == 0
    ivt = json.loads((tmp_path / "config.json").read_text())["ivt"]
    assert ivt == {"velocity_threshold_deg_s": 27.0, "min_fixation_duration_s": 0.096}


def test_set_overrides(dataset, tmp_path, capsys):
    cfg = dataset / "experiment.json"
    assert run("evaluate", "--config", cfg, "--set", "no_such_key=1", "--output-dir", tmp_path) == 1
    assert "no_such_key" in capsys.readouterr().err
    assert run("evaluate", "--config", cfg, "--set", "seeds=0", "--output-dir", tmp_path) == 2
    assert "seeds" in capsys.readouterr().err


# ------------------------------- segment --------------------------------------
def test_segment_counts_match_the_pipeline(dataset, tmp_path, capsys):
    recording = dataset / "u001_s1.csv"
    assert run("segment", recording, "--manifest", dataset / "manifest.json", "--output-dir", tmp_path) == 0
    printed = capsys.readouterr().out.strip().splitlines()[-1]

    repo = CsvDatasetRepository(dataset / "manifest.json")
    segments = ExperimentService.segment_recording(repo.load_recording(repo.entries()[0]), IvtParams())
    expected = {k: sum(s.kind == k for s in segments) for k in ("fixation", "saccade", "blink")}
    assert printed == (
        f"fixations={expected['fixation']} saccades={expected['saccade']} blinks={expected['blink']}"
    )
    dump = pd.read_csv(tmp_path / "u001_s1_segments.csv")
    assert len(dump) == len(segments)
    assert list(dump.columns) == ["kind", "start_index", "end_index", "duration_s"]


def test_missing_recording_is_a_data_error(tmp_path, capsys):
    assert run("segment", tmp_path / "nope.csv", "--rate", 250, "--output-dir", tmp_path) == 2
    assert "not found" in capsys.readouterr().err


def test_malformed_recording_names_the_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t_s,x,y,valid\n0.000,0,0,1\n0.004,0,0,1\n0.008,oops,0,1\n0.012,0,0,1\n", encoding="utf-8")
    assert run("segment", bad, "--rate", 250, "--output-dir", tmp_path / "out") == 2
    assert "bad.csv:4" in capsys.readouterr().err


# -------------------------------- usage ---------------------------------------
def test_usage_errors(capsys):
    assert main([]) == 1
    assert main(["evaluate", "--config", "x.json", "--no-such-flag"]) == 1
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "synth" in capsys.readouterr().out


def test_missing_config_is_a_data_error(tmp_path):
    assert run("evaluate", "--config", tmp_path / "missing.json", "--output-dir", tmp_path) == 2


# ---------------------------- other subcommands -------------------------------
def test_sweep_mfd_stage(dataset, tmp_path, capsys):
    code = run("sweep", "--config", dataset / "experiment.json", "--stage", "mfd", "--seeds", 1, "--output-dir", tmp_path)
    assert code == 0
    frame = pd.read_csv(tmp_path / "sweep.csv")
    assert set(frame["stage"]) == {"mfd"}
    assert set(frame["vt_deg_s"]) == {50.0}
    assert (tmp_path / "sweep_best.json").is_file()
    assert "best: VT=50" in capsys.readouterr().out


def test_tune_weights_prints_both_settings(dataset, tmp_path, capsys):
    code = run("tune-weights", "--config", dataset / "experiment.json", "--seeds", 2, "--output-dir", tmp_path)
    out = capsys.readouterr().out
    assert code == 0
    assert re.search(r"^initial\s+w=", out, re.M)
    assert re.search(r"^optimized w=.*over 2 seeds", out, re.M)
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["initial_fusion_weights"] == {"w_fix": 0.5, "w_sac": 0.5, "w_blink": 0.0}
    assert re.search(r"^validation accuracy \S+ -> \S+", out, re.M)
    assert report["validation_accuracy"] >= report["initial_validation_accuracy"]


def test_ablate_orders(dataset, tmp_path):
    code = run("ablate", "--config", dataset / "experiment.json", "--orders", 0, 2, "--seeds", 1, "--output-dir", tmp_path)
    assert code == 0
    frame = pd.read_csv(tmp_path / "ablation.csv")
    assert frame["derivative_order"].tolist() == [0, 2]
    assert frame["feature_count"].tolist() == [14, 51]


def test_train_saves_loadable_models(dataset, tmp_path):
    assert run("train", "--config", dataset / "experiment.json", "--seed", 4, "--output-dir", tmp_path) == 0
    summary = json.loads((tmp_path / "models.json").read_text())
    assert summary["seed"] == 4
    assert {"fixation", "saccade"} <= set(summary["models"])
    model, norm = load_model(tmp_path / "models" / "fixation.npz")
    assert model.n_features == 51
    assert model.class_labels == ("u001", "u002", "u003")
    assert norm is not None and norm.mean.shape == (51,)


def test_extract_feature_matrices(dataset, tmp_path):
    assert run("extract", "--config", dataset / "experiment.json", "--output-dir", tmp_path) == 0
    fix = pd.read_csv(tmp_path / "features_fixation.csv")
    assert fix.shape[1] == 3 + 51
    assert list(fix.columns[:3]) == ["participant_id", "session_label", "kind"]
    assert set(fix["kind"]) == {"fixation"}
    assert (tmp_path / "features_blink.csv").is_file()


def test_convert_to_pixels(dataset, tmp_path):
    assert run("convert", dataset / "u001_s1.csv", "--to", "pixels",
               "--manifest", dataset / "manifest.json", "--output-dir", tmp_path) == 0
    frame = pd.read_csv(tmp_path / "u001_s1_pixels.csv")
    assert list(frame.columns) == ["t_s", "x", "y", "valid"]
    # gaze near the screen centre lands near (840, 525)
    assert 0 < frame["x"].median() < 1680
