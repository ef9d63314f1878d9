"""Synthetic expert data: a straight multi-lane roadway populated with
IDM+MOBIL-controlled cars, recorded in the trajectory CSV format.

Stands in for recorded highway data at desk scale.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import roadway as rd
from .dynamics import DriveAction, VehicleDef, VehicleState, propagate
from .rules import (ControllerNoise, IdmParams, LaneContext, MobilParams,
                    _accel_given, lane_track_turnrate, mobil_decide)


@dataclass(frozen=True)
class SynthConfig:
    n_episodes: int = 20
    n_vehicles: int = 10
    episode_seconds: float = 20.0
    n_lanes: int = 3
    length: float = 500.0
    lane_width: float = 3.7
    speed_min: float = 8.0
    speed_max: float = 15.0
    gap_min: float = 25.0
    gap_max: float = 60.0
    sigma_accel: float = 0.5
    sigma_turnrate: float = 0.03
    dt: float = 0.1


class _SynthVehicle:
    def __init__(self, vid, state, vdef, desired_speed, target_lane):
        self.vid = vid
        self.state = state
        self.vdef = vdef
        self.idm = IdmParams(desired_speed=desired_speed)
        self.target_lane = target_lane


def _neighbors(vehicles, me, roadway, lane_index):
    if lane_index < 0 or lane_index >= roadway.n_lanes:
        return None
    lane = roadway.lanes[lane_index]
    s_me, _, _, _ = lane.project((me.state.x, me.state.y))
    lead = follow = None
    for v in vehicles:
        if v is me:
            continue
        s, t, _, _ = lane.project((v.state.x, v.state.y))
        if abs(t) > roadway.lane_width / 2.0:
            continue
        ds = s - s_me
        gap = abs(ds) - (me.vdef.length + v.vdef.length) / 2.0
        if ds > 0 and (lead is None or ds < lead[0]):
            lead = (ds, gap, v.state.speed)
        elif ds <= 0 and (follow is None or -ds < follow[0]):
            follow = (-ds, gap, v.state.speed)
    return LaneContext(
        lead_gap=None if lead is None else lead[1],
        lead_speed=None if lead is None else lead[2],
        follow_gap=None if follow is None else follow[1],
        follow_speed=None if follow is None else follow[2],
    )


def _step_vehicle(v, vehicles, roadway, mobil, noise, rng, dt):
    proj = rd.project_to_frenet(roadway, (v.state.x, v.state.y), v.state.heading)
    current = _neighbors(vehicles, v, roadway, proj.lane_index)
    if proj.lane_index == v.target_lane:
        decision = mobil_decide(mobil, v.idm, v.state.speed, current,
                                left=_neighbors(vehicles, v, roadway, proj.lane_index + 1),
                                right=_neighbors(vehicles, v, roadway, proj.lane_index - 1))
        if decision == "left":
            v.target_lane = proj.lane_index + 1
        elif decision == "right":
            v.target_lane = proj.lane_index - 1

    ctxs = [current]
    if v.target_lane != proj.lane_index:
        ctxs.append(_neighbors(vehicles, v, roadway, v.target_lane))
    gaps = [(c.lead_gap, c.lead_speed) for c in ctxs
            if c is not None and c.lead_gap is not None]
    if gaps:
        lead_gap, lead_speed = min(gaps, key=lambda g: g[0])
        a = _accel_given(v.idm, v.state.speed, lead_gap, lead_speed)
    else:
        a = _accel_given(v.idm, v.state.speed, None, None)

    lane = roadway.lanes[v.target_lane]
    s, t, phi_ref, _ = lane.project((v.state.x, v.state.y))
    tproj = rd.FrenetProjection(
        lane_index=v.target_lane, s=s, t=t,
        phi=float(np.arctan2(np.sin(v.state.heading - phi_ref),
                             np.cos(v.state.heading - phi_ref))))
    w = lane_track_turnrate(0.1, 1.0, tproj)
    a += noise.sigma_accel * rng.standard_normal()
    w += noise.sigma_turnrate * rng.standard_normal()
    nxt = propagate(v.state, DriveAction(accel=float(a), turn_rate=float(w)), dt)
    if nxt.speed < 0.0:
        nxt = VehicleState(x=nxt.x, y=nxt.y, heading=nxt.heading, speed=0.0)
    v.state = nxt


def generate(cfg, seed=0):
    """Simulate the episodes; returns (roadway, rows) where rows are the
    trajectory CSV records (vehicle_id, frame, class, length, width, x, y)."""
    roadway = rd.straight_roadway(cfg.n_lanes, cfg.length, cfg.lane_width)
    mobil = MobilParams()
    noise = ControllerNoise(sigma_accel=cfg.sigma_accel,
                            sigma_turnrate=cfg.sigma_turnrate)
    rng = np.random.default_rng(seed)
    steps = int(round(cfg.episode_seconds / cfg.dt))
    rows = []
    next_id = 1
    for ep in range(cfg.n_episodes):
        frame0 = ep * steps
        vehicles = []
        lane_x = [rng.uniform(0.0, 20.0) for _ in range(cfg.n_lanes)]
        for i in range(cfg.n_vehicles):
            lane = i % cfg.n_lanes
            x = lane_x[lane]
            lane_x[lane] += rng.uniform(cfg.gap_min, cfg.gap_max)
            speed = rng.uniform(cfg.speed_min, cfg.speed_max)
            vdef = VehicleDef(id=next_id,
                              length=float(rng.uniform(4.2, 4.8)),
                              width=float(rng.uniform(1.7, 1.9)))
            st = VehicleState(x=x, y=lane * cfg.lane_width, heading=0.0, speed=speed)
            vehicles.append(_SynthVehicle(next_id, st, vdef, speed, lane))
            next_id += 1
        for k in range(steps):
            for v in vehicles:
                rows.append((v.vid, frame0 + k, v.vdef.vclass,
                             v.vdef.length, v.vdef.width,
                             v.state.x, v.state.y))
            for v in vehicles:
                _step_vehicle(v, vehicles, roadway, mobil, noise, rng, cfg.dt)
    return roadway, rows


def write_dataset(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["vehicle_id", "frame", "class", "length", "width", "x", "y"])
        for r in rows:
            w.writerow([r[0], r[1], r[2], f"{r[3]:.3f}", f"{r[4]:.3f}",
                        f"{r[5]:.6f}", f"{r[6]:.6f}"])


def write_centerlines(roadway, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["lane", "x", "y"])
        for i, lane in enumerate(roadway.lanes):
            for x, y in lane.xy:
                w.writerow([i, f"{x:.3f}", f"{y:.3f}"])
