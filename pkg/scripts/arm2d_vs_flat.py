"""Online DSAA against flat soft-Q on Arm2D. Hours per seed on one core.

    python3 scripts/arm2d_vs_flat.py --task easy --seeds 0 --max-steps 3000000
"""

import argparse
from pathlib import Path

from dsaa.eval import write_rows
from dsaa.experiments import arm_config, censored_median, run_arm_pair


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--task", choices=("easy", "hard"), default="easy")
    p.add_argument("--max-steps", type=int, default=3_000_000)
    p.add_argument("--out", type=Path, default=Path("runs/arm2d"))
    args = p.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    rows, d, f = [], [], []
    for seed in map(int, args.seeds.split(",")):
        r = run_arm_pair(arm_config(seed, args.max_steps), task=args.task)
        d.append(r.dsaa_first_success)
        f.append(r.flat_first_success)
        rows.append([seed, r.dsaa_first_success, r.dsaa_converged, r.flat_first_success, r.flat_converged,
                     f"{r.seconds:.0f}"])
        print(*rows[-1], flush=True)
    write_rows(args.out / f"arm2d_{args.task}.csv", ["seed", "dsaa_first_success", "dsaa_converged",
                                                     "flat_first_success", "flat_converged", "seconds"], rows)
    print(f"median first success: dsaa {censored_median(d, args.max_steps):.0f} "
          f"flat {censored_median(f, args.max_steps):.0f}")


if __name__ == "__main__":
    main()
