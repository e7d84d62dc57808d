"""Uniform-policy SR distance heatmaps on the two-room grid.

    python3 scripts/sr_demo.py --out runs/sr_demo
"""

import argparse
from pathlib import Path

from dsaa.envs import GridWorld
from dsaa.eval import render_sr_demo


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--gamma", type=float, default=0.95)
    p.add_argument("--scale", type=int, default=8)
    p.add_argument("--out", type=Path, default=Path("runs/sr_demo"))
    args = p.parse_args()
    for path in render_sr_demo(GridWorld.two_rooms(), args.out, args.gamma, scale=args.scale):
        print(path)


if __name__ == "__main__":
    main()
