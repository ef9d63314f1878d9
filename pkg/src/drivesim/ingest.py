"""Trajectory dataset loading, car filtering, EKF smoothing, scene indexing.

Input CSV header: vehicle_id,frame,class,length,width,x,y (meters, 10 Hz).
Smoothed output CSV header: vehicle_id,frame,x,y,heading,speed.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .dynamics import VehicleDef, VehicleState
from .util import wrap_angle

DT = 0.1  # dataset sample period, 10 Hz


class ParseError(Exception):
    pass


class GapError(Exception):
    pass


@dataclass
class RawTrajectory:
    vehicle: VehicleDef
    frames: np.ndarray  # contiguous, strictly increasing
    xy: np.ndarray      # (n, 2)


@dataclass
class Trajectory:
    vehicle: VehicleDef
    frames: np.ndarray
    states: list                 # list of VehicleState, one per frame
    degenerate: bool = False     # all raw samples coincided
    heading_jumps: list = field(default_factory=list)  # frames with > pi/2 steps

    def __len__(self):
        return len(self.states)


@dataclass
class SceneIndex:
    frames: dict                 # frame -> list of (vehicle_id, VehicleState)
    defs: dict                   # vehicle_id -> VehicleDef
    trajectories: dict           # vehicle_id -> Trajectory
    frame_range: tuple           # (first, last) inclusive

    def states_at(self, frame):
        return self.frames.get(frame, [])


def load_trajectories(path):
    """Parse the trajectory CSV into one RawTrajectory per vehicle id."""
    rows = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        expected = {"vehicle_id", "frame", "class", "length", "width", "x", "y"}
        if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
            raise ParseError(f"{path}:1: expected header {','.join(sorted(expected))}")
        for lineno, row in enumerate(reader, start=2):
            try:
                vid = int(row["vehicle_id"])
                rec = (int(row["frame"]), float(row["x"]), float(row["y"]),
                       row["class"], float(row["length"]), float(row["width"]))
            except (ValueError, TypeError) as e:
                raise ParseError(f"{path}:{lineno}: {e}") from e
            rows.setdefault(vid, []).append(rec)

    out = []
    for vid in sorted(rows):
        recs = sorted(rows[vid])
        frames = np.array([r[0] for r in recs])
        gaps = np.flatnonzero(np.diff(frames) != 1)
        if gaps.size:
            raise GapError(f"vehicle {vid}: missing frame after {frames[gaps[0]]}")
        vdef = VehicleDef(id=vid, length=recs[0][4], width=recs[0][5], vclass=recs[0][3])
        xy = np.array([[r[1], r[2]] for r in recs])
        out.append(RawTrajectory(vehicle=vdef, frames=frames, xy=xy))
    return out


def filter_cars(trajs):
    """Keep only class=car trajectories, preserving order."""
    return [t for t in trajs if t.vehicle.vclass == "car"]


@dataclass(frozen=True)
class ProcessNoise:
    sigma_xy: float = 0.02       # m per step
    sigma_heading: float = 0.02  # rad per step
    sigma_speed: float = 0.3     # m/s per step


@dataclass(frozen=True)
class MeasurementNoise:
    sigma: float = 0.5  # m per axis


def _predict(z, dt):
    x, y, th, v = z
    return np.array([x + v * np.cos(th) * dt, y + v * np.sin(th) * dt, th, v])


def _jacobian(z, dt):
    _, _, th, v = z
    return np.array([
        [1.0, 0.0, -v * np.sin(th) * dt, np.cos(th) * dt],
        [0.0, 1.0, v * np.cos(th) * dt, np.sin(th) * dt],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])


def ekf_smooth(raw, q=ProcessNoise(), r=MeasurementNoise()):
    """Forward EKF on (x, y, heading, speed) with position-only measurements,
    followed by a fixed-interval backward smoothing pass on the filter
    linearizations.
    """
    n = len(raw.frames)
    if n < 2:
        raise ValueError("need at least 2 samples to smooth")
    meas = raw.xy
    disp = np.diff(meas, axis=0)
    norms = np.hypot(disp[:, 0], disp[:, 1])
    if np.all(norms < 1e-12):
        states = [VehicleState(x=p[0], y=p[1], heading=0.0, speed=0.0) for p in meas]
        return Trajectory(vehicle=raw.vehicle, frames=raw.frames.copy(),
                          states=states, degenerate=True)

    first = int(np.flatnonzero(norms >= 1e-12)[0])
    h0 = np.arctan2(disp[first, 1], disp[first, 0])
    v0 = norms[0] / DT

    Q = np.diag([q.sigma_xy**2, q.sigma_xy**2, q.sigma_heading**2, q.sigma_speed**2])
    R = np.eye(2) * r.sigma**2
    H = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])

    z = np.array([meas[0, 0], meas[0, 1], h0, v0])
    P = np.diag([r.sigma**2, r.sigma**2, 0.5**2, 2.0**2])

    filt_z, filt_P = [z], [P]
    pred_z, pred_P, pred_F = [], [], []
    for k in range(1, n):
        F = _jacobian(z, DT)
        zp = _predict(z, DT)
        Pp = F @ P @ F.T + Q
        pred_z.append(zp)
        pred_P.append(Pp)
        pred_F.append(F)
        innov = meas[k] - H @ zp
        S = H @ Pp @ H.T + R
        K = Pp @ H.T @ np.linalg.inv(S)
        z = zp + K @ innov
        P = (np.eye(4) - K @ H) @ Pp
        filt_z.append(z)
        filt_P.append(P)

    # RTS backward pass
    sm = [None] * n
    sm[-1] = filt_z[-1]
    for k in range(n - 2, -1, -1):
        C = filt_P[k] @ pred_F[k].T @ np.linalg.inv(pred_P[k])
        sm[k] = filt_z[k] + C @ (sm[k + 1] - pred_z[k])

    states, jumps = [], []
    prev_h = None
    for k, zk in enumerate(sm):
        h = wrap_angle(zk[2])
        if prev_h is not None and abs(wrap_angle(h - prev_h)) > np.pi / 2:
            jumps.append(int(raw.frames[k]))
        prev_h = h
        states.append(VehicleState(x=float(zk[0]), y=float(zk[1]),
                                   heading=h, speed=float(zk[3])))
    return Trajectory(vehicle=raw.vehicle, frames=raw.frames.copy(),
                      states=states, heading_jumps=jumps)


def build_scene_index(trajs):
    """Bucket smoothed trajectory states by frame."""
    frames = {}
    defs = {}
    by_id = {}
    for tr in trajs:
        defs[tr.vehicle.id] = tr.vehicle
        by_id[tr.vehicle.id] = tr
        for f, st in zip(tr.frames, tr.states):
            frames.setdefault(int(f), []).append((tr.vehicle.id, st))
    if not frames:
        return SceneIndex(frames={}, defs={}, trajectories={}, frame_range=(0, -1))
    keys = frames.keys()
    return SceneIndex(frames=frames, defs=defs, trajectories=by_id,
                      frame_range=(min(keys), max(keys)))


def save_smoothed(trajs, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["vehicle_id", "frame", "x", "y", "heading", "speed"])
        for tr in trajs:
            for fr, st in zip(tr.frames, tr.states):
                w.writerow([tr.vehicle.id, int(fr),
                            f"{st.x:.6f}", f"{st.y:.6f}",
                            f"{st.heading:.6f}", f"{st.speed:.6f}"])
