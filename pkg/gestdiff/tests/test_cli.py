"""
Tests for the command-line entry point and its exit codes.
"""

import json

import pytest

from gestdiff.main import EXIT_DATA_ERROR, EXIT_OK, EXIT_USAGE_ERROR, main
from gestdiff.motion.bvh import read_bvh, serialize_bvh
from gestdiff.tests.conftest import make_tiny_config, static_motion


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "tiny.txt"
    path.write_text(make_tiny_config().to_kv_text(), encoding="utf-8")
    return str(path)


def test_no_verb_is_a_usage_error():
    assert main([]) == EXIT_USAGE_ERROR


def test_missing_required_argument_is_a_usage_error():
    assert main(["prep"]) == EXIT_USAGE_ERROR


def test_help_exits_cleanly(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "synthesize" in capsys.readouterr().out


def test_invalid_config_is_a_usage_error(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("motion.hampel_window = 4\n", encoding="utf-8")
    (tmp_path / "m.bvh").write_text(serialize_bvh(static_motion(10)), encoding="utf-8")

    assert main(["stats", str(tmp_path / "m.bvh"), "--config", str(bad)]) == EXIT_USAGE_ERROR
    assert "odd" in capsys.readouterr().err


def test_prep_prints_summary(corpus_writer, config_file, tmp_path, capsys):
    manifest = corpus_writer(["a", "b"], static=("a", "b"))

    code = main(["prep", str(manifest), "--out", str(tmp_path / "data"), "--config", config_file])

    assert code == EXIT_OK
    assert capsys.readouterr().out.strip() == "prepared 2/2"
    assert (tmp_path / "data" / "resolved_config.txt").is_file()


def test_prep_with_failed_clip_is_a_data_error(corpus_writer, config_file, tmp_path, capsys):
    manifest = corpus_writer(["a", "b"], static=("a", "b"))
    (manifest.parent / "a_main.txt").unlink()

    code = main(["prep", str(manifest), "--out", str(tmp_path / "data"), "--config", config_file])

    assert code == EXIT_DATA_ERROR
    captured = capsys.readouterr()
    assert captured.out.strip() == "prepared 1/2"
    assert "a_main.txt" in captured.err


def test_missing_manifest_is_a_data_error(tmp_path, config_file):
    assert main(["prep", str(tmp_path / "none.tsv"), "--out", str(tmp_path / "data"), "--config", config_file]) == EXIT_DATA_ERROR


def test_diffusion_before_csmp_is_reported(corpus_writer, config_file, tmp_path, capsys):
    manifest = corpus_writer(["a"], static=("a",))
    main(["prep", str(manifest), "--out", str(tmp_path / "data"), "--config", config_file])

    code = main(["train-diffusion", str(tmp_path / "data"), "--out", str(tmp_path / "run"), "--config", config_file])

    assert code == EXIT_DATA_ERROR
    assert "run train-csmp first" in capsys.readouterr().err


def test_synthesize_without_checkpoints_is_a_data_error(corpus_writer, config_file, tmp_path, capsys):
    raw = corpus_writer(["a"]).parent

    code = main([
        "synthesize", "--run-dir", str(tmp_path / "empty"), "--config", config_file,
        "--main-audio", str(raw / "a_main.wav"), "--main-transcript", str(raw / "a_main.txt"),
        "--interlocutor-audio", str(raw / "a_other.wav"), "--interlocutor-transcript", str(raw / "a_other.txt"),
        "--out", str(tmp_path / "out.bvh"),
    ])

    assert code == EXIT_DATA_ERROR
    assert "[csmp]" in capsys.readouterr().err


def test_stats_prints_one_row_per_file(tmp_path, capsys):
    for name in ("one", "two"):
        (tmp_path / f"{name}.bvh").write_text(serialize_bvh(static_motion(12)), encoding="utf-8")

    assert main(["stats", str(tmp_path)]) == EXIT_OK

    rows = [line.split("\t") for line in capsys.readouterr().out.splitlines()]
    assert [row[0] for row in rows] == ["one.bvh", "two.bvh"]
    assert all(row[1] == "12" for row in rows)


def test_stats_writes_json_report(tmp_path):
    (tmp_path / "one.bvh").write_text(serialize_bvh(static_motion(12)), encoding="utf-8")

    assert main(["stats", str(tmp_path / "one.bvh"), "--out", str(tmp_path / "out" / "stats.json")]) == EXIT_OK

    report = json.loads((tmp_path / "out" / "stats.json").read_text())
    assert report["clips"][0]["frames"] == 12
    assert (tmp_path / "out" / "resolved_config.txt").is_file()


@pytest.mark.slow
def test_full_pipeline_from_the_command_line(corpus_writer, config_file, tmp_path):
    manifest = corpus_writer(["a", "b"], static=("a",))
    data, run = str(tmp_path / "data"), str(tmp_path / "run")
    raw = manifest.parent

    assert main(["prep", str(manifest), "--out", data, "--config", config_file]) == EXIT_OK
    assert main(["train-csmp", data, "--out", run, "--config", config_file]) == EXIT_OK
    assert main(["train-diffusion", data, "--out", run, "--config", config_file, "--steps", "10"]) == EXIT_OK
    assert main([
        "synthesize", "--run-dir", run, "--config", config_file, "--gamma", "1.5", "--seed", "4",
        "--main-audio", str(raw / "b_main.wav"), "--main-transcript", str(raw / "b_main.txt"),
        "--interlocutor-audio", str(raw / "b_other.wav"), "--interlocutor-transcript", str(raw / "b_other.txt"),
        "--out", str(tmp_path / "gen" / "b.bvh"),
    ]) == EXIT_OK

    assert read_bvh(tmp_path / "gen" / "b.bvh").frame_count == 60
    sidecar = json.loads((tmp_path / "gen" / "b.json").read_text())
    assert sidecar["gamma"] == 1.5
    assert sidecar["seed"] == 4
