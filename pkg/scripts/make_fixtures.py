#!/usr/bin/env python3
"""Regenerate the small bundled fixture dataset used by the test suite.

Writes tests/fixtures/trajectories.csv and tests/fixtures/centerlines.csv.
The fixtures are committed; rerun this only when the generator changes, and
expect determinism-sensitive tests to need their expectations refreshed.
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from drivesim import synth  # noqa: E402

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures")


def main():
    cfg = synth.SynthConfig(n_episodes=3, n_vehicles=6, episode_seconds=15.0)
    roadway, rows = synth.generate(cfg, seed=20260823)
    os.makedirs(FIXTURE_DIR, exist_ok=True)
    synth.write_dataset(rows, os.path.join(FIXTURE_DIR, "trajectories.csv"))
    synth.write_centerlines(roadway, os.path.join(FIXTURE_DIR, "centerlines.csv"))
    print(f"wrote fixtures for {len({r[0] for r in rows})} vehicles "
          f"to {os.path.abspath(FIXTURE_DIR)}")


if __name__ == "__main__":
    main()
