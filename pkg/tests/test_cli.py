import numpy as np
import pytest

from dsaa.cli import ConfigError, EnvConfig, ExperimentSpec, apply_ini, dump_ini, main
from dsaa.driver import RunConfig
from dsaa.eval import read_pnm

SMALL = ["--phases", "1", "--e-iters", "400", "--episode-cap", "100", "--sgd-steps", "10",
         "--set", "options.hidden=16", "--set", "options.batch_size=32",
         "--set", "run.encoder_hidden=16", "--set", "run.decoder_hidden=8"]


@pytest.fixture
def out_root(tmp_path, monkeypatch):
    monkeypatch.setenv("DSAA_OUTPUT_ROOT", str(tmp_path / "root"))
    return tmp_path


def test_train_smoke(out_root):
    out = out_root / "t"
    assert main(["train", "--env", "fourrooms", "--seed", "1", "--out", str(out), *SMALL]) == 0
    for name in ("metrics.csv", "abstraction.pgm", "abstraction.svg", "config.ini", "coverage.csv",
                 "steps.csv", "phases.csv", "summary.csv"):
        assert (out / name).exists(), name
    assert read_pnm(out / "abstraction.pgm").shape == (13 * 8, 13 * 8)


def test_train_default_output_root(out_root):
    assert main(["train", "--env", "fourrooms", "--seed", "0", *SMALL]) == 0
    assert (out_root / "root" / "train" / "fourrooms" / "metrics.csv").exists()


def test_invalid_env_is_usage_error(out_root, capsys):
    assert main(["train", "--env", "mountaincar", "--out", str(out_root / "x")]) == 2
    assert "unknown environment" in capsys.readouterr().err


@pytest.mark.parametrize("extra", [
    ["--set", "run.nope=1"],
    ["--set", "bogus"],
    ["--set", "abstraction.gamma=1.5"],
    ["--set", "run.n_abstract=four"],
    ["--seeds", "1,1"],
])
def test_bad_config_is_usage_error(out_root, extra):
    assert main(["train", "--out", str(out_root / "x"), *SMALL, *extra]) == 2


def test_missing_config_file(out_root):
    assert main(["train", "--config", str(out_root / "nope.ini")]) == 2


def test_train_deterministic(out_root):
    a, b = out_root / "a", out_root / "b"
    for d in (a, b):
        assert main(["train", "--seed", "5", "--out", str(d), *SMALL]) == 0
    for name in ("metrics.csv", "steps.csv", "phases.csv", "coverage.csv", "returns.csv", "summary.csv",
                 "config.ini", "abstraction.pgm"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_multi_seed_layout(out_root):
    out = out_root / "m"
    assert main(["train", "--seeds", "0,1", "--out", str(out), *SMALL]) == 0
    assert (out / "seed_0" / "metrics.csv").exists() and (out / "seed_1" / "metrics.csv").exists()
    assert (out / "seed_0" / "steps.csv").read_bytes() != (out / "seed_1" / "steps.csv").read_bytes()


def test_config_round_trip_reproduces_run(out_root):
    a = out_root / "a"
    assert main(["train", "--seed", "2", "--out", str(a), *SMALL, "--beta-h", "3", "--tau", "1.0"]) == 0
    b = out_root / "b"
    assert main(["train", "--config", str(a / "config.ini"), "--seed", "2", "--out", str(b)]) == 0
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    assert (a / "config.ini").read_text() == (b / "config.ini").read_text()


def test_ini_round_trip_values():
    run, env = RunConfig(n_abstract=16, encoder_hidden=(8, 4)), EnvConfig(name="arm2d", task="hard")
    run.abstraction.tau = 0.25
    run2, env2 = RunConfig(), EnvConfig()
    apply_ini(dump_ini(run, env), run2, env2)
    assert run2 == run and env2 == env


def test_experiment_spec_validation():
    with pytest.raises(ConfigError):
        ExperimentSpec(seeds=(1, 1))
    with pytest.raises(ConfigError):
        ExperimentSpec(env=EnvConfig(name="pong"))


def test_baseline_uniform_and_match(out_root):
    t = out_root / "t"
    assert main(["train", "--seed", "0", "--out", str(t), *SMALL]) == 0
    b = out_root / "b"
    assert main(["baseline", "--kind", "uniform", "--match", str(t), "--seed", "0", "--out", str(b)]) == 0
    rows = (b / "coverage.csv").read_text().splitlines()
    assert rows[0] == "step,fraction_visited" and rows[-1].startswith("400,")
    assert main(["baseline", "--match", str(t), "--steps", "999", "--out", str(out_root / "c")]) == 2
    assert main(["baseline", "--match", str(t), "--episode-cap", "7", "--out", str(out_root / "c")]) == 2
    assert main(["baseline", "--match", str(out_root / "nothing"), "--out", str(out_root / "c")]) == 2


def test_baseline_uniform_fixed_budget(out_root):
    b = out_root / "u"
    assert main(["baseline", "--kind", "uniform", "--steps", "10000", "--episode-cap", "1000",
                 "--out", str(b)]) == 0
    assert (b / "coverage.csv").read_text().splitlines()[-1].startswith("10000,")


def test_baseline_softq_arm(out_root):
    b = out_root / "s"
    assert main(["baseline", "--kind", "softq", "--env", "arm2d", "--task", "easy", "--steps", "300",
                 "--episode-cap", "100", "--set", "options.hidden=8", "--set", "options.batch_size=16",
                 "--out", str(b)]) == 0
    lines = (b / "returns.csv").read_text().splitlines()
    assert lines[0] == "episode,end_step,return" and len(lines) == 4


def test_figs(out_root):
    t = out_root / "t"
    assert main(["train", "--seed", "0", "--out", str(t), *SMALL]) == 0
    b = out_root / "b"
    assert main(["baseline", "--match", str(t), "--out", str(b)]) == 0
    figs = out_root / "figs"
    args = ["figs", "--run", str(t), "--baseline", str(b), "--sr-demo", "--out", str(figs)]
    assert main(args) == 0
    assert len(list((figs / "sr_demo").glob("sr_distance_*.pgm"))) == 3
    run_dir = next(figs.glob("dsaa_0_*"))
    assert (run_dir / "abstraction.pgm").exists() and (run_dir / "graph.dot").exists()
    assert (figs / "coverage.svg").exists()
    before = {p: p.read_bytes() for p in figs.rglob("*") if p.is_file()}
    assert main(args) == 0
    assert before == {p: p.read_bytes() for p in figs.rglob("*") if p.is_file()}


def test_figs_missing_inputs(out_root, capsys):
    assert main(["figs", "--out", str(out_root / "f")]) == 2
    missing = out_root / "ghost"
    assert main(["figs", "--run", str(missing), "--out", str(out_root / "f")]) == 2
    assert str(missing) in capsys.readouterr().err


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for cmd in ("train", "baseline", "oracle-check", "figs"):
        assert cmd in text
