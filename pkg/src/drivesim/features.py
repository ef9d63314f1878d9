"""The 51-element observation: 8 core features, 20 lidar ranges, 20 range
rates, 3 indicator bits.

Beam 0 points straight ahead in the ego heading frame; beams are spaced 18
degrees apart counter-clockwise.  Range rate is the projection of the struck
vehicle's velocity relative to the ego onto the beam direction, so positive
means the gap along the beam is opening.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import roadway as rd
from .dynamics import obb_intersects, ray_obb_distances

N_BEAMS = 20
MAX_RANGE = 100.0
FEATURE_DIM = 8 + 2 * N_BEAMS + 3
OFFROAD_TOLERANCE = 1.0  # m beyond the outer marker

_BEAM_ANGLES = np.arange(N_BEAMS) * (2.0 * np.pi / N_BEAMS)


class LengthMismatch(Exception):
    pass


def core_features(ego_state, ego_def, roadway):
    """The 8 core features, in fixed order: speed, length, width, lane offset,
    lane-relative heading, curvature, left marker distance, right marker
    distance."""
    proj = rd.project_to_frenet(roadway, (ego_state.x, ego_state.y), ego_state.heading)
    lane = roadway.lanes[proj.lane_index]
    s_clamped = float(np.clip(proj.s, 0.0, lane.length))
    left, right = rd.marker_distances(roadway, proj)
    return np.array([
        ego_state.speed,
        ego_def.length,
        ego_def.width,
        proj.t,
        proj.phi,
        rd.curvature_at(lane, s_clamped),
        left,
        right,
    ])


def _velocity(state):
    return state.speed * np.array([np.cos(state.heading), np.sin(state.heading)])


def lidar_scan(ego_state, ego_def, others):
    """Ranges and range rates for the 20 beams.

    others is an iterable of (VehicleState, VehicleDef).  Beams that hit
    nothing within MAX_RANGE report range MAX_RANGE and rate 0.
    """
    angles = ego_state.heading + _BEAM_ANGLES
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    origin = np.array([ego_state.x, ego_state.y])

    best = np.full(N_BEAMS, np.inf)
    hit_idx = np.full(N_BEAMS, -1)
    for j, (st, vdef) in enumerate(others):
        if (st.x - ego_state.x) ** 2 + (st.y - ego_state.y) ** 2 > (MAX_RANGE + 50.0) ** 2:
            continue
        d = ray_obb_distances(origin, dirs, st, vdef)
        closer = d < best
        best = np.where(closer, d, best)
        hit_idx = np.where(closer, j, hit_idx)

    ranges = np.minimum(best, MAX_RANGE)
    rates = np.zeros(N_BEAMS)
    ego_v = _velocity(ego_state)
    valid = best <= MAX_RANGE
    for k in np.flatnonzero(valid):
        st, _ = others[hit_idx[k]]
        rates[k] = float(np.dot(_velocity(st) - ego_v, dirs[k]))
    ranges = np.where(valid, ranges, MAX_RANGE)
    return ranges, rates


def indicators(ego_state, ego_def, others, roadway):
    """(colliding, offroad, reversing) bits for the current snapshot."""
    colliding = any(obb_intersects(ego_state, ego_def, st, vdef) for st, vdef in others)
    proj = rd.project_to_frenet(roadway, (ego_state.x, ego_state.y), ego_state.heading)
    offroad = rd.distance_beyond_outer(roadway, proj) > OFFROAD_TOLERANCE
    reversing = ego_state.speed < 0.0
    return np.array([float(colliding), float(offroad), float(reversing)])


class NormStats:
    """Per-dimension z-score statistics, frozen after fitting.

    Only the first 48 dimensions are normalized; the 3 indicator bits pass
    through untouched.  Identity stats (mean 0, std 1) leave the raw vector
    unchanged.
    """

    def __init__(self, mean=None, std=None):
        self.mean = np.zeros(FEATURE_DIM) if mean is None else np.asarray(mean, float)
        self.std = np.ones(FEATURE_DIM) if std is None else np.asarray(std, float)
        if self.mean.shape != (FEATURE_DIM,) or self.std.shape != (FEATURE_DIM,):
            raise LengthMismatch("stats must have one entry per feature dimension")

    @classmethod
    def fit(cls, raw_vectors):
        X = np.asarray(raw_vectors, dtype=float)
        if X.ndim != 2 or X.shape[1] != FEATURE_DIM:
            raise LengthMismatch(f"expected (n, {FEATURE_DIM}) array")
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        mean[-3:] = 0.0
        std[-3:] = 1.0
        return cls(mean=mean, std=std)

    def transform(self, raw):
        raw = np.asarray(raw, dtype=float)
        if raw.shape[-1] != FEATURE_DIM:
            raise LengthMismatch(f"expected {FEATURE_DIM} features, got {raw.shape[-1]}")
        return (raw - self.mean) / np.maximum(self.std, 1e-6)

    def save(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["index", "mean", "std"])
            for i in range(FEATURE_DIM):
                w.writerow([i, repr(float(self.mean[i])), repr(float(self.std[i]))])

    @classmethod
    def load(cls, path):
        mean = np.zeros(FEATURE_DIM)
        std = np.ones(FEATURE_DIM)
        with open(path, newline="") as f:
            for row in csv.DictReader(f):
                i = int(row["index"])
                mean[i] = float(row["mean"])
                std[i] = float(row["std"])
        return cls(mean=mean, std=std)


def assemble_and_normalize(core, ranges, rates, ind, stats=None):
    """Concatenate the feature blocks in fixed order and apply z-scoring."""
    raw = np.concatenate([core, ranges, rates, ind])
    if raw.shape != (FEATURE_DIM,):
        raise LengthMismatch(f"assembled {raw.shape[0]} features, expected {FEATURE_DIM}")
    if stats is None:
        return raw
    return stats.transform(raw)


def lead_vehicle(ego_state, ego_def, others, roadway):
    """Nearest in-lane leader; returns (bumper gap, closing speed) or None."""
    proj = rd.project_to_frenet(roadway, (ego_state.x, ego_state.y), ego_state.heading)
    lane = roadway.lanes[proj.lane_index]
    best = None
    for st, vdef in others:
        s, t, _, _ = lane.project((st.x, st.y))
        if abs(t) > roadway.lane_width / 2.0:
            continue
        ds = s - proj.s
        if ds <= 0:
            continue
        gap = ds - (ego_def.length + vdef.length) / 2.0
        if best is None or gap < best[0]:
            best = (gap, ego_state.speed - st.speed)
    if best is None or best[0] <= 0.0:
        return None
    return best


def observe(ego_state, ego_def, others, roadway, stats=None):
    """Full observation pipeline; returns (raw, normalized, indicator bits)."""
    core = core_features(ego_state, ego_def, roadway)
    ranges, rates = lidar_scan(ego_state, ego_def, others)
    ind = indicators(ego_state, ego_def, others, roadway)
    raw = np.concatenate([core, ranges, rates, ind])
    norm = raw if stats is None else stats.transform(raw)
    return raw, norm, ind
