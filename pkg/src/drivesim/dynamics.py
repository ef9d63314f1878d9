"""Kinematic state propagation and oriented-bounding-box geometry."""

from dataclasses import dataclass

import numpy as np

from .util import wrap_angle

# action clamps applied before propagation (configurable at the env level)
ACCEL_BOUNDS = (-8.0, 5.0)
TURN_RATE_BOUNDS = (-0.5, 0.5)

# below this total rotation the exact arc formulas lose ~half their digits to
# cancellation, so a 2nd-order expansion in omega takes over
_SMALL_ROTATION = 1e-4


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    heading: float  # (-pi, pi]
    speed: float    # m/s; may go negative, caller decides termination


@dataclass(frozen=True)
class VehicleDef:
    id: int
    length: float
    width: float
    vclass: str = "car"  # car | truck | bus | motorcycle


@dataclass(frozen=True)
class DriveAction:
    accel: float      # m/s^2
    turn_rate: float  # rad/s


def clamp_action(action, accel_bounds=ACCEL_BOUNDS, turn_rate_bounds=TURN_RATE_BOUNDS):
    return DriveAction(
        accel=float(np.clip(action.accel, *accel_bounds)),
        turn_rate=float(np.clip(action.turn_rate, *turn_rate_bounds)),
    )


def propagate(state, action, dt):
    """Advance one step along the exact constant-accel, constant-turn-rate arc.

    Closed-form integration, so two half steps compose to one full step
    exactly (up to roundoff).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    v, h = state.speed, state.heading
    a, w = action.accel, action.turn_rate
    h1 = h + w * dt
    v1 = v + a * dt
    if abs(w * dt) < _SMALL_ROTATION:
        d = v * dt + 0.5 * a * dt * dt
        lateral = w * (v * dt**2 / 2.0 + a * dt**3 / 3.0)
        dx = d * np.cos(h) - lateral * np.sin(h)
        dy = d * np.sin(h) + lateral * np.cos(h)
    else:
        dx = (v1 * np.sin(h1) - v * np.sin(h)) / w + a * (np.cos(h1) - np.cos(h)) / w**2
        dy = (-v1 * np.cos(h1) + v * np.cos(h)) / w + a * (np.sin(h1) - np.sin(h)) / w**2
    return VehicleState(x=state.x + dx, y=state.y + dy,
                        heading=wrap_angle(h1), speed=v1)


def obb_corners(state, vdef):
    """The 4 corners of the vehicle's oriented bounding box, (4, 2)."""
    c, s = np.cos(state.heading), np.sin(state.heading)
    R = np.array([[c, -s], [s, c]])
    half = np.array([[vdef.length / 2, vdef.width / 2],
                     [vdef.length / 2, -vdef.width / 2],
                     [-vdef.length / 2, -vdef.width / 2],
                     [-vdef.length / 2, vdef.width / 2]])
    return np.array([state.x, state.y]) + half @ R.T


def obb_intersects(a, adef, b, bdef):
    """Separating-axis test over the 4 face normals of two oriented rectangles."""
    ca = obb_corners(a, adef)
    cb = obb_corners(b, bdef)
    for heading in (a.heading, b.heading):
        for axis in (np.array([np.cos(heading), np.sin(heading)]),
                     np.array([-np.sin(heading), np.cos(heading)])):
            pa = ca @ axis
            pb = cb @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def ray_obb_distances(origin, directions, state, vdef):
    """Distance from origin to an OBB along each unit ray direction (slab test).

    directions has shape (K, 2); returns (K,) with inf where a ray misses.
    An origin inside the box gives distance 0.
    """
    c, s = np.cos(state.heading), np.sin(state.heading)
    R = np.array([[c, -s], [s, c]])
    r = R.T @ (np.asarray(origin, dtype=float) - [state.x, state.y])
    du = np.asarray(directions, dtype=float) @ R
    ext = np.array([vdef.length / 2, vdef.width / 2])

    K = du.shape[0]
    tmin = np.full(K, -np.inf)
    tmax = np.full(K, np.inf)
    for i in range(2):
        parallel = np.abs(du[:, i]) < 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-ext[i] - r[i]) / du[:, i]
            t2 = (ext[i] - r[i]) / du[:, i]
        lo, hi = np.minimum(t1, t2), np.maximum(t1, t2)
        tmin = np.where(parallel, np.where(np.abs(r[i]) <= ext[i], tmin, np.inf), np.maximum(tmin, lo))
        tmax = np.where(parallel, np.where(np.abs(r[i]) <= ext[i], tmax, -np.inf), np.minimum(tmax, hi))

    hit = tmax >= np.maximum(tmin, 0.0)
    dist = np.where(hit, np.maximum(tmin, 0.0), np.inf)
    return dist
