"""Train DSAA on FourRooms (N=4) over several seeds and score room purity.

    python3 scripts/fourrooms_abstraction.py --seeds 0,1,2,3,4 --out runs/fourrooms
"""

import argparse
from pathlib import Path

from dsaa.envs import GridWorld
from dsaa.eval import render_abstraction, write_rows
from dsaa.experiments import fourrooms_config, run_fourrooms


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--phases", type=int, default=10)
    p.add_argument("--e-iters", type=int, default=20_000)
    p.add_argument("--out", type=Path, default=Path("runs/fourrooms"))
    args = p.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    walls = GridWorld.four_rooms().walls
    rows = []
    for seed in map(int, args.seeds.split(",")):
        r = run_fourrooms(fourrooms_config(seed, phases=args.phases, e_iters=args.e_iters))
        render_abstraction(walls, r.assignment, args.out / f"abstraction_seed{seed}.ppm")
        rows.append([seed, f"{r.purity:.4f}", r.empty_states, r.steps_to_95, f"{r.normalized_entropy:.4f}",
                     f"{r.seconds:.1f}"])
        print(*rows[-1], flush=True)
    write_rows(args.out / "purity.csv", ["seed", "purity", "empty_states", "steps_to_95",
                                         "normalized_entropy", "seconds"], rows)
    hits = sum(float(r[1]) >= 0.85 for r in rows)
    print(f"{hits}/{len(rows)} seeds with purity >= 0.85")


if __name__ == "__main__":
    main()
