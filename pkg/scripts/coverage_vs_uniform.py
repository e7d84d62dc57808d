"""DSAA against a uniform random walk on FourRooms with 100-step episodes.

Both arms get the same step budget. Reports steps to 95% cell coverage and
normalized occupancy entropy per seed.

    python3 scripts/coverage_vs_uniform.py --seeds 0,1,2,3,4
"""

import argparse
from pathlib import Path

from dsaa.eval import write_rows
from dsaa.experiments import censored_median, fourrooms_config, run_fourrooms, run_uniform_fourrooms


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--episode-cap", type=int, default=100)
    p.add_argument("--phases", type=int, default=16)
    p.add_argument("--e-iters", type=int, default=5000)
    p.add_argument("--out", type=Path, default=Path("runs/coverage"))
    args = p.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    rows, d95, u95 = [], [], []
    for seed in map(int, args.seeds.split(",")):
        cfg = fourrooms_config(seed, episode_cap=args.episode_cap, e_iters=args.e_iters, phases=args.phases)
        d = run_fourrooms(cfg)
        u = run_uniform_fourrooms(seed, d.total_steps, args.episode_cap)
        d95.append(d.steps_to_95)
        u95.append(u.steps_to_95)
        rows.append([seed, d.total_steps, d.steps_to_95, u.steps_to_95,
                     f"{d.normalized_entropy:.4f}", f"{u.normalized_entropy:.4f}"])
        print(*rows[-1], flush=True)
    write_rows(args.out / "coverage.csv", ["seed", "budget", "dsaa_steps_to_95", "uniform_steps_to_95",
                                           "dsaa_entropy", "uniform_entropy"], rows)
    budget = rows[0][1]
    print(f"censored median steps to 95%: dsaa {censored_median(d95, budget):.0f} "
          f"uniform {censored_median(u95, budget):.0f}")


if __name__ == "__main__":
    main()
