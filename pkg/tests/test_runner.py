import csv
import json
from pathlib import Path

import numpy as np
import pytest

from helpers import write_hhar_csvs, write_imufd_fixture, write_trimp_csv
from plotbench import runner
from plotbench.cli import main as cli_main
from plotbench.errors import ConfigurationError
from plotbench.runner import (
    ExperimentRunner,
    config_hash,
    emit_report,
    export_instances,
    normalize_config,
    read_records,
    run_experiment,
    validate_config,
)

SMALL_FUNCTION_GRID = {
    "repeats": 2,
    "num_points": (50,),
    "noise_levels": (0.0, 1.0),
    "func_types": ("linear", "periodic"),
}


def small_config(tmp_path, backend="oracle", tasks=None, modalities=("text", "plot"), **extra):
    cfg = {
        "master_seed": 11,
        "out_dir": str(tmp_path / "run"),
        "tasks": tasks or {"function_id": {"grid": SMALL_FUNCTION_GRID}},
        "modalities": list(modalities),
        "codec": {"precision": 2, "separator": "space"},
        "plot": {"components": "none", "dpi": 50},
        "models": [{"kind": backend, "model": f"scripted-{backend}", "seed": 1}],
        "render_workers": 1,
        "invoke_workers": 2,
    }
    cfg.update(extra)
    return cfg


# --- config handling -----------------------------------------------------------


def test_validate_collects_all_errors(tmp_path):
    cfg = normalize_config(
        {
            "master_seed": "not-int",
            "out_dir": "",
            "tasks": {"bogus_task": {}, "imu_activity": {}},
            "modalities": ["text", "hologram"],
            "codec": {"precision": 3},
            "models": [],
        }
    )
    errors = validate_config(cfg)
    joined = "\n".join(errors)
    assert "master_seed" in joined
    assert "out_dir" in joined
    assert "bogus_task" in joined
    assert "accel_csv" in joined
    assert "hologram" in joined
    assert "precision" in joined
    assert "model/backend" in joined
    assert len(errors) >= 7


def test_dataset_missing_error_names_path(tmp_path):
    cfg = normalize_config(
        small_config(
            tmp_path,
            tasks={"imu_fall": {"index_csv": str(tmp_path / "nowhere" / "index.csv")}},
        )
    )
    errors = validate_config(cfg)
    assert any("nowhere" in e and "index.csv" in e for e in errors)


def test_shot_validation(tmp_path):
    cfg = normalize_config(
        small_config(tmp_path, tasks={"function_id": {"grid": SMALL_FUNCTION_GRID, "shots": [4]}})
    )
    assert any("shot count 4" in e for e in validate_config(cfg))
    cfg = normalize_config(
        small_config(tmp_path, tasks={"function_id": {"grid": SMALL_FUNCTION_GRID, "shots": [3]}})
    )
    assert any("few-shot pools" in e for e in validate_config(cfg))


def test_config_hash_stable_and_sensitive(tmp_path):
    a = normalize_config(small_config(tmp_path))
    b = normalize_config(small_config(tmp_path))
    assert config_hash(a) == config_hash(b)
    b["master_seed"] = 12
    assert config_hash(a) != config_hash(b)


# --- oracle end-to-end -----------------------------------------------------------


def test_oracle_run_small_matrix(tmp_path):
    out = run_experiment(small_config(tmp_path))
    records = read_records(out / "records.jsonl")
    # 8 instances x 2 modalities
    assert len(records) == 16
    assert all(r.parse_status == "ok" for r in records)
    assert all(r.predicted == r.ground_truth for r in records)
    assert (out / "summaries.csv").exists()
    assert (out / "comparisons.csv").exists()
    assert (out / "breakdown_function_id.csv").exists()
    assert list((out / "report").glob("box_function_id_*.png"))


def test_oracle_run_all_synthetic_kinds(tmp_path):
    tasks = {
        "function_id": {"grid": SMALL_FUNCTION_GRID},
        "correlation": {"grid": {"repeats": 1, "num_points": (50,), "noise_levels": (0.0,), "slope_pairs": ((1, 2), (5, -1))}},
        "cluster_count": {"grid": {"repeats": 1, "cluster_stds": (0.05,), "cluster_points": (10,), "cluster_counts": (2, 5)}},
        "derivative_id": {"grid": {"repeats": 1, "num_points": (50,), "noise_levels": (0.0,), "func_types": ("quadratic",)}},
        "quadratic_derivative_id": {"grid": {"repeats": 1, "num_points": (50,), "noise_levels": (0.0,), "scales": (1.0, -5.0)}},
    }
    out = run_experiment(small_config(tmp_path, tasks=tasks))
    records = read_records(out / "records.jsonl")
    by_task = {}
    for r in records:
        by_task.setdefault(r.task_kind, []).append(r)
    expected = {"function_id": 16, "correlation": 4, "cluster_count": 4, "derivative_id": 2, "quadratic_derivative_id": 4}
    assert {k: len(v) for k, v in by_task.items()} == expected
    assert all(r.predicted == r.ground_truth for r in records)
    # summaries show accuracy 1.0 / mae 0.0 everywhere
    with open(out / "summaries.csv") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        assert float(row["point"]) == (0.0 if row["metric"] == "mae" else 1.0)


def test_quadratic_fewshot_run(tmp_path):
    tasks = {
        "quadratic_derivative_id": {
            "grid": {"repeats": 1, "num_points": (50,), "noise_levels": (0.0,), "scales": (1.0,)},
            "shots": [3],
        }
    }
    out = run_experiment(small_config(tmp_path, tasks=tasks, modalities=("text",)))
    records = read_records(out / "records.jsonl")
    assert len(records) == 1
    assert records[0].shots == 3
    assert records[0].predicted == records[0].ground_truth


def test_random_backend_near_chance(tmp_path):
    grid = {"repeats": 25, "num_points": (50,), "noise_levels": (0.0, 1.0), "func_types": ("linear", "periodic")}
    out = run_experiment(
        small_config(tmp_path, backend="random", tasks={"function_id": {"grid": grid}}, modalities=("text",))
    )
    records = read_records(out / "records.jsonl")
    assert len(records) == 100
    acc = np.mean([r.predicted == r.ground_truth for r in records])
    # 5 classes -> 0.2; wide tolerance for a small n
    assert 0.05 <= acc <= 0.4


def test_determinism_two_cold_runs_byte_identical(tmp_path):
    cfg1 = small_config(tmp_path / "a")
    cfg2 = small_config(tmp_path / "b")
    out1 = run_experiment(cfg1)
    out2 = run_experiment(cfg2)
    assert (out1 / "records.jsonl").read_bytes() == (out2 / "records.jsonl").read_bytes()
    for name in ("summaries.csv", "comparisons.csv", "breakdown_function_id.csv", "summaries.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    pngs1 = sorted(p.name for p in (out1 / "report").glob("*.png"))
    pngs2 = sorted(p.name for p in (out2 / "report").glob("*.png"))
    assert pngs1 == pngs2
    for name in pngs1:
        assert (out1 / "report" / name).read_bytes() == (out2 / "report" / name).read_bytes()


def test_warm_rerun_issues_zero_backend_calls(tmp_path):
    cfg = small_config(tmp_path)
    r1 = ExperimentRunner(normalize_config(cfg))
    r1.run()
    calls_cold = sum(r1.backend_calls.values())
    assert calls_cold == 16
    r2 = ExperimentRunner(normalize_config(cfg))
    r2.run(resume=True)
    assert sum(r2.backend_calls.values()) == 0
    # and the rerun reproduces the records byte for byte
    assert (Path(cfg["out_dir"]) / "records.jsonl").exists()


def test_mixed_config_directory_refused(tmp_path):
    cfg = small_config(tmp_path)
    run_experiment(cfg)
    cfg2 = small_config(tmp_path)
    cfg2["master_seed"] = 999
    with pytest.raises(ConfigurationError, match="refusing to mix"):
        run_experiment(cfg2, resume=True)


def test_existing_records_require_resume(tmp_path):
    cfg = small_config(tmp_path)
    run_experiment(cfg)
    with pytest.raises(ConfigurationError, match="resume"):
        run_experiment(cfg)
    run_experiment(cfg, resume=True)  # explicit resume is fine


# --- real-world tasks -------------------------------------------------------------


def test_activity_run_with_fewshots(tmp_path):
    acc, gyro = write_hhar_csvs(tmp_path, users=("a", "b", "c"), labels=("walk", "sit"))
    tasks = {
        "imu_activity": {
            "accel_csv": str(acc),
            "gyro_csv": str(gyro),
            "shots": [1],
            "shots_per_class": True,
        }
    }
    out = run_experiment(small_config(tmp_path, tasks=tasks))
    records = read_records(out / "records.jsonl")
    assert len(records) == 12  # 6 segments x 2 modalities
    assert all(r.predicted == r.ground_truth for r in records)
    with open(out / "summaries.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert all(row["metric"] == "macro_f1" for row in rows)
    assert all(float(row["point"]) == 1.0 for row in rows)


def test_fall_run_votes_and_split(tmp_path):
    index = write_imufd_fixture(tmp_path, participants=("p1", "p2", "p3", "p4", "p5"))
    tasks = {"imu_fall": {"index_csv": str(index), "shots": [1]}}
    out = run_experiment(small_config(tmp_path, tasks=tasks, modalities=("text",)))
    records = read_records(out / "records.jsonl")
    # 1 train participant, 4 test participants x 3 labels x 2 locations
    assert len(records) == 24
    participants = {r.params["participant"] for r in records}
    assert len(participants) == 4  # the train participant is excluded from eval
    assert all(r.params["split"] == "test" for r in records)
    with open(out / "summaries.csv") as fh:
        rows = list(csv.DictReader(fh))
    # majority voting folds 2 locations into 1 voted record per trial
    assert all(int(row["n"]) == 12 for row in rows)
    assert all(float(row["point"]) == 1.0 for row in rows)


def test_readiness_run(tmp_path):
    trimp = write_trimp_csv(tmp_path, n_cases=6)
    tasks = {"readiness": {"trimp_csv": str(trimp)}}
    out = run_experiment(small_config(tmp_path, tasks=tasks))
    records = read_records(out / "records.jsonl")
    assert len(records) == 12
    assert {r.ground_truth for r in records} == {"up", "down"}
    assert all(r.predicted == r.ground_truth for r in records)


# --- report shapes -----------------------------------------------------------------


def test_comparisons_missing_modality_pair_emits_dashes(tmp_path):
    out = run_experiment(small_config(tmp_path, modalities=("text",)))
    with open(out / "comparisons.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows
    assert all(row["median_diff"] == "--" for row in rows)
    assert all(row["significant"] == "--" for row in rows)


def test_comparisons_significance_star_logic(tmp_path):
    # oracle vs oracle: both modalities perfect -> all diffs zero -> no p-value
    out = run_experiment(small_config(tmp_path))
    with open(out / "comparisons.csv") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        assert row["median_diff"] == "0.0"
        assert row["p_raw"] == "--"  # degenerate: all differences zero
        assert row["significant"] == "--"


def test_report_from_saved_records_matches(tmp_path):
    cfg = small_config(tmp_path)
    out = run_experiment(cfg)
    summaries_first = (out / "summaries.csv").read_bytes()
    records = read_records(out / "records.jsonl")
    emit_report(records, out, normalize_config(cfg), config_hash(normalize_config(cfg)))
    assert (out / "summaries.csv").read_bytes() == summaries_first


def test_config_hash_stamped_in_outputs(tmp_path):
    cfg = normalize_config(small_config(tmp_path))
    out = run_experiment(cfg)
    h = config_hash(cfg)
    records = read_records(out / "records.jsonl")
    assert all(r.config_hash == h for r in records)
    with open(out / "summaries.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert all(row["config_hash"] == h for row in rows)
    assert list((out / "report").glob(f"box_function_id_{h}.png"))


# --- instance export ---------------------------------------------------------------


def test_export_instances_archive(tmp_path):
    cfg = small_config(tmp_path)
    archive = tmp_path / "instances.jsonl"
    count = export_instances(cfg, archive)
    assert count == 8
    lines = [json.loads(line) for line in archive.read_text().splitlines()]
    assert len(lines) == 8
    from plotbench.synthgen import instance_from_dict, rederive_ground_truth

    for doc in lines:
        inst = instance_from_dict(doc)
        assert rederive_ground_truth(inst) == inst.ground_truth


# --- CLI ------------------------------------------------------------------------------


def write_config(tmp_path, cfg):
    import yaml

    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_cli_validate_ok(tmp_path, capsys):
    path = write_config(tmp_path, small_config(tmp_path))
    assert cli_main(["validate", "--config", str(path)]) == 0
    assert "config ok" in capsys.readouterr().out


def test_cli_validate_reports_errors(tmp_path, capsys):
    cfg = small_config(tmp_path)
    cfg["modalities"] = ["hologram"]
    path = write_config(tmp_path, cfg)
    assert cli_main(["validate", "--config", str(path)]) == 1
    assert "hologram" in capsys.readouterr().err


def test_cli_run_and_report(tmp_path, capsys):
    path = write_config(tmp_path, small_config(tmp_path))
    assert cli_main(["run", "--config", str(path)]) == 0
    out = capsys.readouterr().out
    assert "run complete" in out
    assert cli_main(["report", "--config", str(path)]) == 0


def test_cli_generate(tmp_path, capsys):
    path = write_config(tmp_path, small_config(tmp_path))
    assert cli_main(["generate", "--config", str(path)]) == 0
    assert "wrote 8 instances" in capsys.readouterr().out


def test_cli_backend_override(tmp_path):
    path = write_config(tmp_path, small_config(tmp_path, modalities=("text",)))
    assert cli_main(["run", "--config", str(path), "--backend", "random", "--out", str(tmp_path / "rnd")]) == 0
    records = read_records(tmp_path / "rnd" / "records.jsonl")
    assert any(r.predicted != r.ground_truth for r in records)
