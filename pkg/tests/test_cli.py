"""Command-line entry point: exit codes, JSON output, and artifact layout."""

import json

import pytest

from gridcast.cli import OUTDIR_ENV, main

# Small problem so end-to-end runs stay fast.
TINY = [
    "data.n_users=6", "data.n_regions=2", "data.days=4", "data.steps_per_day=24",
    "train.window=12", "train.horizon=4", "train.epochs=1", "train.batch_size=16",
    "dims.d_s=6", "dims.d_tod=4", "dims.d_dow=2", "dims.d_moy=2",
    "dims.hidden=4", "dims.pool_width=4", "graph.k_hops=1",
]


def run(verb, out_dir, *extra):
    argv = [verb, "--set", f"paths.out_dir={out_dir}"]
    for item in (*TINY, *extra):
        argv += ["--set", item]
    return main(argv)


def read_stdout_json(capsys):
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 1  # exactly one JSON line on stdout
    return json.loads(out[0])


def read_stderr_json(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])


# -- happy paths -----------------------------------------------------------


def test_generate_writes_csvs_and_reports_json(tmp_path, capsys):
    assert run("generate", tmp_path) == 0
    payload = read_stdout_json(capsys)
    assert payload["command"] == "generate"
    assert payload["n_steps"] == 4 * 24
    assert payload["n_users"] == 6
    for name in ("users.csv", "regions.csv", "readings.csv"):
        assert (tmp_path / "data" / name).exists()
    assert (tmp_path / "config.yaml").exists()


def test_full_e2e_produces_all_artifacts(tmp_path, capsys):
    assert run("e2e", tmp_path) == 0
    payload = read_stdout_json(capsys)
    assert payload["command"] == "e2e"
    assert set(payload["steps"]) == {"generate", "train", "calibrate", "predict"}
    for name in ("model.npz", "scaler.json", "loss_trace.csv",
                 "calibration.json", "intervals.csv", "report.json"):
        assert (tmp_path / name).exists()
    # the evaluation report is merged into the top-level payload
    assert 0.0 <= payload["coverage"] <= 1.0
    assert payload["winkler"] >= payload["mpiw"]


def test_stepwise_matches_verb_sequence(tmp_path, capsys):
    for verb in ("generate", "train", "calibrate", "predict", "evaluate"):
        assert run(verb, tmp_path) == 0, verb
        payload = read_stdout_json(capsys)
        assert payload["command"] == verb
    with (tmp_path / "intervals.csv").open() as fh:
        header = fh.readline().strip()
    assert header == "timestamp,user_id,low,median,high,y_true"


def test_e2e_is_deterministic_across_runs(tmp_path, capsys):
    assert run("e2e", tmp_path / "a") == 0
    assert run("e2e", tmp_path / "b") == 0
    capsys.readouterr()
    first = (tmp_path / "a" / "intervals.csv").read_bytes()
    second = (tmp_path / "b" / "intervals.csv").read_bytes()
    assert first == second


def test_flags_compose(tmp_path, capsys):
    rc = run("e2e", tmp_path, "flags.static_cqr=true",
             "flags.per_user_windows=true", "flags.disable_macro=true",
             "flags.disable_pools=true")
    assert rc == 0
    payload = read_stdout_json(capsys)
    assert payload["steps"]["predict"]["rolling"] is False
    calib = json.loads((tmp_path / "calibration.json").read_text())
    assert calib["per_user"] is True
    assert len(calib["windows"]) == 6  # one per user


def test_config_file_plus_override(tmp_path, capsys):
    sections = {"paths": {"out_dir": str(tmp_path / "run")}}
    for item in TINY:
        key, value = item.split("=")
        section, field = key.split(".")
        sections.setdefault(section, {})[field] = value
    lines = []
    for section, fields in sections.items():
        lines.append(f"{section}:")
        lines += [f"  {field}: {value}" for field, value in fields.items()]
    path = tmp_path / "cfg.yaml"
    path.write_text("\n".join(lines) + "\n")
    rc = main(["generate", "--config", str(path), "--set", "data.days=2"])
    assert rc == 0
    payload = read_stdout_json(capsys)
    assert payload["n_steps"] == 2 * 24
    assert payload["n_users"] == 6


# -- environment variable --------------------------------------------------


def test_outdir_env_is_honoured(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(OUTDIR_ENV, str(tmp_path / "from_env"))
    argv = ["generate"]
    for item in TINY:
        argv += ["--set", item]
    assert main(argv) == 0
    capsys.readouterr()
    assert (tmp_path / "from_env" / "data" / "readings.csv").exists()


def test_explicit_set_beats_env(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(OUTDIR_ENV, str(tmp_path / "from_env"))
    assert run("generate", tmp_path / "explicit") == 0
    capsys.readouterr()
    assert (tmp_path / "explicit" / "data" / "readings.csv").exists()
    assert not (tmp_path / "from_env").exists()


# -- failure modes ---------------------------------------------------------


def test_predict_without_checkpoint_is_a_user_error(tmp_path, capsys):
    assert run("generate", tmp_path) == 0
    capsys.readouterr()
    rc = run("predict", tmp_path)
    assert rc == 1
    err = read_stderr_json(capsys)
    assert err["error"] == "FileNotFoundError"
    assert "model" in err["message"]


def test_evaluate_without_intervals_is_a_user_error(tmp_path, capsys):
    assert run("generate", tmp_path) == 0
    capsys.readouterr()
    assert run("evaluate", tmp_path) == 1
    assert read_stderr_json(capsys)["error"] == "FileNotFoundError"


def test_bad_override_value_is_a_user_error(tmp_path, capsys):
    rc = run("generate", tmp_path, "train.epochs=-3")
    assert rc == 1
    err = read_stderr_json(capsys)
    assert err["error"] == "ValueError"


def test_malformed_override_is_a_user_error(tmp_path, capsys):
    assert run("generate", tmp_path, "no_equals_here") == 1
    assert read_stderr_json(capsys)["error"] == "ValueError"


def test_unknown_verb_rejected_by_parser(capsys):
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_internal_error_maps_to_exit_two(tmp_path, capsys, monkeypatch):
    import gridcast.cli as cli_mod

    def boom(*args, **kwargs):
        raise RuntimeError("wires crossed")

    monkeypatch.setattr(cli_mod, "run_command", boom)
    assert main(["generate", "--set", f"paths.out_dir={tmp_path}"]) == 2
    assert read_stderr_json(capsys)["error"] == "RuntimeError"
