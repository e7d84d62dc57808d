"""FourRooms with k uniform noise features appended; does the encoder ignore them?

    python3 scripts/noise_robustness.py --noise-k 2 --n-abstract 16
"""

import argparse
from pathlib import Path

from dsaa.envs import GridWorld
from dsaa.eval import render_abstraction, write_rows
from dsaa.experiments import fourrooms_config, run_fourrooms


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--noise-k", type=int, default=2)
    p.add_argument("--n-abstract", type=int, default=16)
    p.add_argument("--out", type=Path, default=Path("runs/noise"))
    args = p.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    walls = GridWorld.four_rooms().walls
    rows = []
    for seed in map(int, args.seeds.split(",")):
        r = run_fourrooms(fourrooms_config(seed, n_abstract=args.n_abstract), noise_k=args.noise_k)
        render_abstraction(walls, r.assignment, args.out / f"abstraction_seed{seed}.ppm")
        rows.append([seed, f"{r.consistency:.4f}", f"{r.purity:.4f}", f"{r.seconds:.1f}"])
        print(*rows[-1], flush=True)
    write_rows(args.out / "consistency.csv", ["seed", "consistency", "purity", "seconds"], rows)


if __name__ == "__main__":
    main()
