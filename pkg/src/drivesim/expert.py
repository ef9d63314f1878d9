"""Expert demonstrations: replay each recorded car through the feature
pipeline and pair every observation with the finite-difference action that
produced the next recorded state."""

from dataclasses import dataclass

import numpy as np

from . import features as ft
from .util import wrap_angle


@dataclass
class ExpertData:
    raw_obs: np.ndarray      # (N, 51) unnormalized observations
    actions: np.ndarray      # (N, 2) accel, turn rate
    seq_slices: list         # [(start, stop)] contiguous per-trajectory runs
    stats: object = None     # NormStats once fitted

    @property
    def obs(self):
        if self.stats is None:
            return self.raw_obs
        return self.stats.transform(self.raw_obs)

    def sa_pairs(self):
        return np.concatenate([self.obs, self.actions], axis=1)

    def sequences(self):
        """Per-trajectory (obs, action) arrays for recurrent training."""
        O = self.obs
        return [(O[a:b], self.actions[a:b]) for a, b in self.seq_slices]


def fd_action(cur, nxt, dt):
    """The (accel, turn rate) that maps one recorded state toward the next."""
    a = (nxt.speed - cur.speed) / dt
    w = wrap_angle(nxt.heading - cur.heading) / dt
    return np.array([a, w])


def extract(scene_index, roadway, dt=0.1, fit_stats=True, skip_degenerate=True):
    """Build the expert dataset from a smoothed scene index.

    Observations use every frame that has a successor within the same
    trajectory; normalization statistics are fitted on the pooled raw
    observations unless fit_stats is False.
    """
    raws, acts, slices = [], [], []
    for vid in sorted(scene_index.trajectories):
        tr = scene_index.trajectories[vid]
        if tr.vehicle.vclass != "car":
            continue
        if skip_degenerate and tr.degenerate:
            continue
        start = len(raws)
        for k in range(len(tr.states) - 1):
            frame = int(tr.frames[k])
            others = [(st, scene_index.defs[ovid])
                      for ovid, st in scene_index.states_at(frame)
                      if ovid != vid]
            raw, _, _ = ft.observe(tr.states[k], tr.vehicle, others, roadway, None)
            raws.append(raw)
            acts.append(fd_action(tr.states[k], tr.states[k + 1], dt))
        if len(raws) > start:
            slices.append((start, len(raws)))

    data = ExpertData(raw_obs=np.array(raws), actions=np.array(acts),
                      seq_slices=slices)
    if fit_stats and len(raws) > 0:
        data.stats = ft.NormStats.fit(data.raw_obs)
    return data
