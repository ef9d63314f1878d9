#!/usr/bin/env python3
"""Run the full desk-scale pipeline end to end.

Synthesizes the expert corpus (20 episodes x 10 vehicles x 20 s on a 3-lane,
500 m roadway), trains GAIL MLP and BC MLP policies, fits the static
Gaussian baseline, evaluates all three on a shared 100-scene x 5-repeat
campaign, and prints the headline numbers.
"""

import argparse
import json
import os
import sys
import time

from drivesim.cli import main as drivesim


def run(args):
    print(f"$ drivesim {' '.join(args)}", file=sys.stderr)
    rc = drivesim(args)
    if rc != 0:
        raise SystemExit(f"step failed with exit code {rc}: {args}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/desk_campaign")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--scenes", type=int, default=100)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--jobs", type=int, default=1)
    opts = ap.parse_args()

    t0 = time.time()
    out = opts.out
    seed = ["--seed", str(opts.seed)]
    data = ["--set", f"paths.dataset={os.path.join(out, 'trajectories.csv')}",
            "--set", f"paths.centerlines={os.path.join(out, 'centerlines.csv')}"]

    run(["synth-expert", "--out", out, *seed])
    run(["train", "gail", "--arch", "mlp", "--out", out, *seed, *data])
    run(["train", "bc", "--arch", "mlp", "--out", out, *seed, *data])
    run(["fit", "sg", "--out", out, *seed, *data])
    run(["evaluate", "--models",
         f"gail={os.path.join(out, 'gail_mlp.npz')}",
         f"bc={os.path.join(out, 'bc_mlp.npz')}",
         f"sg={os.path.join(out, 'sg.npz')}",
         "--out", out, *seed,
         "--set", f"metrics.scenes={opts.scenes}",
         "--set", f"metrics.repeats={opts.repeats}",
         "--jobs", str(opts.jobs), *data])

    with open(os.path.join(out, "evaluation.json")) as f:
        payload = json.load(f)
    print(f"\ncampaign finished in {(time.time() - t0) / 60:.1f} min")
    for name in ("gail", "bc", "sg", "_real"):
        rep = payload[name]
        em = rep["emergent"]
        rwse1 = rep["rwse"].get("position", {}).get("1.0")
        rwse1 = "-" if rwse1 is None else f"{rwse1:.3f}"
        print(f"{name:>6}: collision {em['collision_rate']:.3f}  "
              f"offroad {em['offroad_duration']:.3f}  "
              f"lane changes {em['lane_change_rate']:.3f}  "
              f"hard brakes {em['hard_brake_rate']:.3f}  "
              f"position RWSE@1s {rwse1}")


if __name__ == "__main__":
    main()
