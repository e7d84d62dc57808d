"""Command-line entry point.

Subcommands: ``train``, ``baseline``, ``oracle-check``, ``figs``. Run
``dsaa <subcommand> --help`` for flags. Exit codes: 0 ok, 1 runtime
failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import logging
import os
import shutil
import sys
from io import StringIO
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checks
from .abstraction import AbstractionLossConfig, load_abstraction
from .driver import RunConfig, run_dsaa
from .envs import ENV_NAMES, GridWorld, make_env
from .eval import (
    baseline_flat_softq,
    baseline_uniform_walk,
    grid_assignment,
    line_plot_svg,
    occupancy_stats,
    render_abstraction,
    render_arm_slice,
    render_sr_demo,
    room_labels,
    room_purity,
    write_coverage_csv,
    write_rows,
)
from .graph import AbstractAgentConfig
from .options import OptionConfig

OUTPUT_ROOT_VAR = "DSAA_OUTPUT_ROOT"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("dsaa")


class ConfigError(ValueError):
    pass


@dataclass
class EnvConfig:
    name: str = "fourrooms"
    task: str = "easy"
    noise_k: int = 0
    obs_mode: str = "coords_normalized"


@dataclass
class ExperimentSpec:
    env: EnvConfig = field(default_factory=EnvConfig)
    run: RunConfig = field(default_factory=RunConfig)
    out: Path = Path("runs")
    seeds: tuple = (0,)

    def __post_init__(self):
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        name = self.env.name.lower()
        if name not in ENV_NAMES and not name.endswith(".map"):
            raise ConfigError(f"unknown environment {self.env.name!r}; choose from {', '.join(ENV_NAMES)}")


# --------------------------------------------------------------------------
# INI config

_SECTIONS = {"run": RunConfig, "abstraction": AbstractionLossConfig, "options": OptionConfig,
             "agent": AbstractAgentConfig, "env": EnvConfig}


def _parse_value(raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    if isinstance(default, tuple):
        return tuple(int(v) for v in raw.split(",") if v.strip())
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def _format_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(i) for i in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _scalar_fields(obj):
    return [f for f in dataclasses.fields(obj) if not dataclasses.is_dataclass(getattr(obj, f.name))]


def _sub(run: RunConfig, env: EnvConfig, section: str):
    return {"run": run, "abstraction": run.abstraction, "options": run.options,
            "agent": run.agent, "env": env}[section]


def apply_ini(text: str, run: RunConfig, env: EnvConfig) -> None:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        target = _sub(run, env, section)
        names = {f.name for f in _scalar_fields(target)}
        for key, raw in cp[section].items():
            if key not in names:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                value = _parse_value(raw, getattr(target, key))
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
            setattr(target, key, value)


def dump_ini(run: RunConfig, env: EnvConfig) -> str:
    cp = configparser.ConfigParser()
    for section in _SECTIONS:
        target = _sub(run, env, section)
        cp[section] = {f.name: _format_value(getattr(target, f.name)) for f in _scalar_fields(target)}
    buf = StringIO()
    cp.write(buf)
    return buf.getvalue()


def revalidate(run: RunConfig) -> RunConfig:
    """Rebuild the configs so their validation runs on the final values."""
    try:
        return RunConfig(**{**{f.name: getattr(run, f.name) for f in dataclasses.fields(run)},
                            "abstraction": AbstractionLossConfig(**vars(run.abstraction)),
                            "options": OptionConfig(**vars(run.options)),
                            "agent": AbstractAgentConfig(**vars(run.agent))})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------
# Argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI file with [run]/[abstraction]/[options]/[agent]/[env] sections")
    p.add_argument("--env", help=f"environment: {', '.join(ENV_NAMES)} or a .map file")
    p.add_argument("--task", choices=("easy", "hard"), help="Arm2D task")
    p.add_argument("--noise-k", type=int, help="append k uniform noise features to observations")
    p.add_argument("--seed", type=int, help="single seed")
    p.add_argument("--seeds", help="comma-separated seeds, one run each")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes over seeds")
    p.add_argument("--out", type=Path, help=f"output directory (default ${OUTPUT_ROOT_VAR}/<cmd>/<env>)")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value; repeatable")
    p.add_argument("--episode-cap", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsaa", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="cmd", required=True)

    t = sub.add_parser("train", help="run DSAA")
    _common(t)
    t.add_argument("--mode", choices=("unsupervised", "online"))
    t.add_argument("--n-abstract", type=int)
    t.add_argument("--phases", type=int, help="outer iterations (unsupervised)")
    t.add_argument("--e-iters", type=int, help="environment steps per exploration phase")
    t.add_argument("--max-steps", type=int, help="total step cap (online)")
    t.add_argument("--sgd-steps", type=int, help="abstraction SGD steps per phase")
    t.add_argument("--encoder-mode", choices=("gumbel_soft", "plain_softmax"))
    t.add_argument("--beta-h", type=float)
    t.add_argument("--beta-sr", type=float)
    t.add_argument("--tau", type=float)
    t.add_argument("--entropy-scope", choices=("batch_marginal", "per_sample"))
    t.add_argument("--reset-options", action="store_true", default=None)

    b = sub.add_parser("baseline", help="uniform random walk or flat soft-Q")
    _common(b)
    b.add_argument("--kind", choices=("uniform", "softq"), default="uniform")
    b.add_argument("--steps", type=int, help="environment step budget")
    b.add_argument("--match", type=Path, help="train output directory whose step budget must be matched")

    o = sub.add_parser("oracle-check", help="gradient, SR and soft-Q oracle suites")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--out", type=Path, help="also write results.csv here")
    o.add_argument("--quick", action="store_true", help="10 random nets instead of 50")

    f = sub.add_parser("figs", help="render figures from previous outputs")
    f.add_argument("--run", type=Path, action="append", default=[], help="train output directory")
    f.add_argument("--baseline", type=Path, action="append", default=[], help="baseline output directory")
    f.add_argument("--sr-demo", action="store_true", help="two-room uniform-policy SR distance heatmaps")
    f.add_argument("--gamma", type=float, default=0.95)
    f.add_argument("--out", type=Path, help="figure directory")
    return parser


def _overrides(args) -> list[tuple[str, str, str]]:
    flag_map = {
        "mode": ("run", "mode"), "n_abstract": ("run", "n_abstract"), "phases": ("run", "outer_iters"),
        "e_iters": ("run", "e_iters"), "max_steps": ("run", "max_total_steps"),
        "episode_cap": ("run", "episode_cap"), "reset_options": ("run", "reset_options"),
        "sgd_steps": ("abstraction", "sgd_steps"), "encoder_mode": ("abstraction", "mode"),
        "beta_h": ("abstraction", "beta_entropy"), "beta_sr": ("abstraction", "beta_sr"),
        "tau": ("abstraction", "tau"), "entropy_scope": ("abstraction", "entropy_scope"),
        "env": ("env", "name"), "task": ("env", "task"), "noise_k": ("env", "noise_k"),
    }
    out = []
    for attr, (section, key) in flag_map.items():
        v = getattr(args, attr, None)
        if v is not None:
            out.append((section, key, _format_value(v)))
    for item in args.set:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        lhs, value = item.split("=", 1)
        section, key = lhs.split(".", 1)
        out.append((section, key, value))
    return out


def spec_from_args(args) -> ExperimentSpec:
    run, env = RunConfig(), EnvConfig()
    if args.config:
        if not args.config.exists():
            raise ConfigError(f"config file not found: {args.config}")
        apply_ini(args.config.read_text(), run, env)
    lines: dict[str, list[str]] = {}
    for section, key, value in _overrides(args):
        lines.setdefault(section, []).append(f"{key} = {value}")
    if lines:
        apply_ini("\n".join(f"[{s}]\n" + "\n".join(v) for s, v in lines.items()), run, env)
    if args.seeds:
        seeds = tuple(int(s) for s in args.seeds.split(","))
    elif args.seed is not None:
        seeds = (args.seed,)
    else:
        seeds = (run.seed,)
    run = revalidate(run)
    root = Path(os.environ.get(OUTPUT_ROOT_VAR, "runs"))
    out = args.out if args.out is not None else root / args.cmd / Path(env.name).stem
    return ExperimentSpec(env, run, out, seeds)


def _seed_dir(spec: ExperimentSpec, seed: int) -> Path:
    return spec.out if len(spec.seeds) == 1 else spec.out / f"seed_{seed}"


def _map_seeds(fn, spec: ExperimentSpec, jobs: int, *extra) -> list:
    work = [(spec, seed, *extra) for seed in spec.seeds]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, *zip(*work)))
    return [fn(*w) for w in work]


# --------------------------------------------------------------------------
# train

METRIC_COLUMNS = ("phase", "steps_total", "edges", "phase_unique_cells", "coverage", "occupancy_entropy",
                  "normalized_entropy", "room_purity", "empty_states", "mean_return", "option_loss",
                  "abstraction_loss", "l_h", "l_sr")


def train_one(spec: ExperimentSpec, seed: int) -> Path:
    run = dataclasses.replace(spec.run, seed=seed)
    out = _seed_dir(spec, seed)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_ini(run, spec.env))
    env = make_env(spec.env.name, task=spec.env.task, noise_k=spec.env.noise_k, seed=seed,
                   obs_mode=spec.env.obs_mode)
    inner = getattr(env, "inner", env)
    grid = isinstance(inner, GridWorld)
    labels = room_labels(inner) if grid else None
    rows, cells, total = [], [], 0

    def progress(plog, enc):
        nonlocal total
        total += len(plog)
        sm = plog.summary
        purity, empty = float("nan"), ""
        cov = ent = nent = float("nan")
        if grid:
            cells.append(plog.column("cell"))
            st = occupancy_stats(np.concatenate(cells), inner.n_cells)
            cov, ent, nent = float(st.coverage[-1]), st.entropy, st.normalized_entropy
            asg = _grid_assignment(enc, env, inner)
            purity, empty = room_purity(asg, labels)
        rows.append((sm["phase"], total, sm["edges"], sm["phase_unique_cells"], cov, ent, nent, purity,
                     empty, sm["mean_return"], sm["option_loss"], sm["abstraction_loss"], sm["l_h"], sm["l_sr"]))

    res = run_dsaa(run, env, out_dir=out, progress=progress)
    write_rows(out / "metrics.csv", METRIC_COLUMNS, rows)
    write_rows(out / "returns.csv", ("episode", "end_step", "return"),
               [(i, s, float(r)) for i, (s, r) in enumerate(zip(res.episode_end_steps, res.episode_returns))])
    if grid:
        st = occupancy_stats(res.cells(), inner.n_cells)
        write_coverage_csv(out / "coverage.csv", st)
    _render_run(out, res.encoder, env)
    write_rows(out / "summary.csv", ("key", "value"),
               [("total_steps", res.total_steps), ("stopped_by", res.stopped_by),
                ("first_success_step", res.first_success_step if res.first_success_step else "")])
    return out


def _grid_assignment(enc, env, inner) -> dict:
    if env is inner:
        return grid_assignment(enc, inner)
    # noisy wrapper: probe with fixed mid-range noise so the map is deterministic
    obs = np.array([np.concatenate([inner.observe_cell(c), np.full(env.k, 0.5)]) for c in inner.cells])
    return {c: int(s) for c, s in zip(inner.cells, np.atleast_1d(enc.encode_hard(obs)))}


def _render_run(out: Path, enc, env) -> None:
    inner = getattr(env, "inner", env)
    if isinstance(inner, GridWorld):
        asg = _grid_assignment(enc, env, inner)
        render_abstraction(inner.walls, asg, out / "abstraction.pgm")
        render_abstraction(inner.walls, asg, out / "abstraction.svg", scale=16)
    elif env is inner:
        render_arm_slice(enc, inner, out / "abstraction_slice.pgm")


def cmd_train(args) -> int:
    spec = spec_from_args(args)
    for out in _map_seeds(train_one, spec, args.jobs):
        print(out)
    return EXIT_OK


# --------------------------------------------------------------------------
# baseline


def _budget_of(run_dir: Path) -> tuple[int, int]:
    """(total env steps, episode cap) recorded by a train run."""
    summary = run_dir / "summary.csv"
    config = run_dir / "config.ini"
    for p in (summary, config):
        if not p.exists():
            raise ConfigError(f"--match: missing {p}")
    with open(summary, newline="") as fh:
        kv = {row["key"]: row["value"] for row in csv.DictReader(fh)}
    cp = configparser.ConfigParser()
    cp.read_string(config.read_text())
    return int(kv["total_steps"]), int(cp["run"]["episode_cap"])


def baseline_one(spec: ExperimentSpec, seed: int, kind: str, steps: int) -> Path:
    run = dataclasses.replace(spec.run, seed=seed)
    out = _seed_dir(spec, seed)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_ini(run, spec.env))
    env = make_env(spec.env.name, task=spec.env.task, noise_k=spec.env.noise_k, seed=seed,
                   obs_mode=spec.env.obs_mode)
    inner = getattr(env, "inner", env)
    if kind == "uniform":
        traj = baseline_uniform_walk(env, steps, np.random.default_rng(seed), run.episode_cap)
        if isinstance(inner, GridWorld):
            st = occupancy_stats(traj, inner.n_cells)
            write_coverage_csv(out / "coverage.csv", st)
            write_rows(out / "metrics.csv", ("steps_total", "coverage", "occupancy_entropy", "normalized_entropy"),
                       [(steps, float(st.coverage[-1]), st.entropy, st.normalized_entropy)])
        total = steps
        ends, rets, first = [], [], None
    else:
        run = dataclasses.replace(run, max_total_steps=steps, mode="online")
        res = baseline_flat_softq(env, run)
        total, ends, rets, first = res.total_steps, res.episode_end_steps, res.episode_returns, res.first_success_step
    write_rows(out / "returns.csv", ("episode", "end_step", "return"),
               [(i, s, float(r)) for i, (s, r) in enumerate(zip(ends, rets))])
    write_rows(out / "summary.csv", ("key", "value"),
               [("total_steps", total), ("kind", kind), ("first_success_step", first if first else "")])
    return out


def cmd_baseline(args) -> int:
    spec = spec_from_args(args)
    steps = args.steps
    if args.match is not None:
        matched, cap = _budget_of(args.match)
        if steps is not None and steps != matched:
            raise ConfigError(f"budget mismatch: --steps {steps} but {args.match} used {matched} steps")
        if args.episode_cap is not None and args.episode_cap != cap:
            raise ConfigError(f"budget mismatch: --episode-cap {args.episode_cap} but {args.match} used {cap}")
        steps = matched
        spec.run = dataclasses.replace(spec.run, episode_cap=cap)
    if steps is None:
        r = spec.run
        steps = r.max_total_steps if (args.kind == "softq" or r.mode == "online") else r.e_iters * r.outer_iters
    if steps < 1:
        raise ConfigError("--steps must be positive")
    for out in _map_seeds(baseline_one, spec, args.jobs, args.kind, steps):
        print(out)
    return EXIT_OK


# --------------------------------------------------------------------------
# oracle-check


def cmd_oracle_check(args) -> int:
    results = [*checks.gradient_suite(n_nets=10 if args.quick else 50, seed=args.seed),
               checks.sr_oracle_check(seed=args.seed), checks.soft_q_fixed_point_check(seed=args.seed)]
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print("all oracle checks passed" if not failed else f"FAILED: {', '.join(failed)}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        write_rows(args.out / "results.csv", ("check", "passed", "residual", "tolerance"),
                   [(r.name, int(r.passed), r.residual, r.tolerance) for r in results])
    return EXIT_OK if not failed else EXIT_FAIL


# --------------------------------------------------------------------------
# figs


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_figs(args) -> int:
    if not (args.run or args.baseline or args.sr_demo):
        raise ConfigError("nothing to do: pass --run, --baseline and/or --sr-demo")
    root = Path(os.environ.get(OUTPUT_ROOT_VAR, "runs"))
    out = args.out if args.out is not None else root / "figs"
    out.mkdir(parents=True, exist_ok=True)
    for d in [*args.run, *args.baseline]:
        if not (d / "config.ini").exists():
            raise ConfigError(f"missing input: {d / 'config.ini'} (not a train/baseline output directory)")
    written = []
    if args.sr_demo:
        written += render_sr_demo(GridWorld.two_rooms(), out / "sr_demo", gamma=args.gamma)
    coverage, returns = {}, {}
    for i, d in enumerate(args.run):
        tag = f"dsaa_{i}_{d.name}"
        ckpts = sorted((d / "checkpoints").glob("abstraction_*.json"))
        if not ckpts:
            raise ConfigError(f"missing input: no abstraction checkpoints under {d / 'checkpoints'}")
        run, env_cfg = RunConfig(), EnvConfig()
        apply_ini((d / "config.ini").read_text(), run, env_cfg)
        env = make_env(env_cfg.name, task=env_cfg.task, noise_k=env_cfg.noise_k, seed=run.seed,
                       obs_mode=env_cfg.obs_mode)
        enc, _, _ = load_abstraction(ckpts[-1])
        fig_dir = out / tag
        fig_dir.mkdir(exist_ok=True)
        _render_run(fig_dir, enc, env)
        graphs = sorted(d.glob("graph_*.dot"))
        if graphs:
            shutil.copyfile(graphs[-1], fig_dir / "graph.dot")
        written.append(fig_dir)
        if (d / "coverage.csv").exists():
            coverage[tag] = _read_csv(d / "coverage.csv")
        if (d / "returns.csv").exists():
            returns[tag] = _read_csv(d / "returns.csv")
    for i, d in enumerate(args.baseline):
        tag = f"baseline_{i}_{d.name}"
        if (d / "coverage.csv").exists():
            coverage[tag] = _read_csv(d / "coverage.csv")
        if (d / "returns.csv").exists():
            returns[tag] = _read_csv(d / "returns.csv")
    if coverage:
        series = {k: ([float(r["step"]) for r in v], [float(r["fraction_visited"]) for r in v])
                  for k, v in coverage.items()}
        (out / "coverage.svg").write_text(line_plot_svg(series, "env steps", "fraction of cells visited"))
        written.append(out / "coverage.svg")
    if returns and any(returns.values()):
        series = {k: ([float(r["end_step"]) for r in v], [float(r["return"]) for r in v])
                  for k, v in returns.items() if v}
        (out / "returns.svg").write_text(line_plot_svg(series, "env steps", "episode return"))
        written.append(out / "returns.svg")
    for p in written:
        print(p)
    return EXIT_OK


# --------------------------------------------------------------------------


COMMANDS = {"train": cmd_train, "baseline": cmd_baseline, "oracle-check": cmd_oracle_check, "figs": cmd_figs}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.cmd](args)
    except (ConfigError, configparser.Error) as exc:
        print(f"dsaa {args.cmd}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - surfaced as exit 1 with the message
        print(f"dsaa {args.cmd}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        if getattr(args, "verbose", False):
            raise
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
