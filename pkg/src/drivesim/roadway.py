"""Lane-centerline geometry: Frenet projection, curvature, marker distances.

Sign convention: lateral offset t > 0 lies to the left of the direction of
travel.  Lane 0 is the rightmost lane.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .util import wrap_angle


class EmptyRoadway(Exception):
    pass


class OutOfRange(Exception):
    pass


@dataclass(frozen=True)
class FrenetProjection:
    lane_index: int
    s: float      # arclength along the lane centerline [m]
    t: float      # signed lateral offset, left positive [m]
    phi: float    # lane-relative heading, (-pi, pi]


class Centerline:
    """Polyline centerline with precomputed arclength, heading and curvature.

    Heading at point i is the direction of segment i -> i+1 (the last point
    copies its neighbor).  Curvature is the central finite difference of the
    unwrapped heading over arclength, with endpoints copying their neighbor.
    """

    def __init__(self, xy):
        xy = np.asarray(xy, dtype=float)
        if xy.ndim != 2 or xy.shape[0] < 2 or xy.shape[1] != 2:
            raise ValueError("centerline needs at least 2 (x, y) points")
        self.xy = xy
        seg = np.diff(xy, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len <= 0.0):
            raise ValueError("centerline has coincident consecutive points")
        self.s = np.concatenate([[0.0], np.cumsum(seg_len)])
        seg_heading = np.arctan2(seg[:, 1], seg[:, 0])
        self.heading = np.concatenate([seg_heading, seg_heading[-1:]])
        unwrapped = np.unwrap(self.heading)
        k = np.zeros(len(xy))
        if len(xy) > 2:
            k[1:-1] = (unwrapped[2:] - unwrapped[:-2]) / (self.s[2:] - self.s[:-2])
            k[0] = k[1]
            k[-1] = k[-2]
        self.curvature = k

    @property
    def length(self):
        return float(self.s[-1])

    def project(self, point):
        """Project a point onto the polyline.

        Returns (s, t, phi_ref, dist) where phi_ref is the heading of the
        supporting segment.  The first and last segments are extended so
        queries slightly beyond the ends still project sensibly; s may then
        fall outside [0, length].
        """
        q = np.asarray(point, dtype=float)
        p0 = self.xy[:-1]
        d = np.diff(self.xy, axis=0)
        d2 = np.einsum("ij,ij->i", d, d)
        u = np.einsum("ij,ij->i", q - p0, d) / d2
        uc = np.clip(u, 0.0, 1.0)
        # allow extension beyond the polyline ends
        uc[0] = min(u[0], 1.0)
        uc[-1] = max(u[-1], 0.0)
        feet = p0 + uc[:, None] * d
        dists = np.hypot(*(q - feet).T)
        i = int(np.argmin(dists))
        seg_len = np.sqrt(d2[i])
        s = float(self.s[i] + uc[i] * seg_len)
        tangent = d[i] / seg_len
        off = q - feet[i]
        t = float(tangent[0] * off[1] - tangent[1] * off[0])  # left positive
        return s, t, float(np.arctan2(tangent[1], tangent[0])), float(dists[i])

    def point_at(self, s):
        """Interpolated (x, y, heading) at arclength s (clamped to the ends)."""
        s = float(np.clip(s, 0.0, self.length))
        i = int(np.searchsorted(self.s, s, side="right")) - 1
        i = min(max(i, 0), len(self.xy) - 2)
        seg_len = self.s[i + 1] - self.s[i]
        u = (s - self.s[i]) / seg_len
        xy = self.xy[i] + u * (self.xy[i + 1] - self.xy[i])
        return xy[0], xy[1], float(self.heading[i])


@dataclass
class Roadway:
    """Ordered parallel lanes (index 0 = rightmost) plus outer boundaries."""

    lanes: list
    lane_width: float = 3.7
    outer_left: np.ndarray = field(default=None, repr=False)
    outer_right: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.outer_left is None and self.lanes:
            self.outer_left = _offset_polyline(self.lanes[-1], +self.lane_width / 2.0)
        if self.outer_right is None and self.lanes:
            self.outer_right = _offset_polyline(self.lanes[0], -self.lane_width / 2.0)

    @property
    def n_lanes(self):
        return len(self.lanes)


def _offset_polyline(cl, t):
    normals = np.stack([-np.sin(cl.heading), np.cos(cl.heading)], axis=1)
    return cl.xy + t * normals


def project_to_frenet(roadway, position, heading):
    """Project a pose onto the closest centerline by perpendicular distance.

    Ties between lanes break toward the lower lane index.
    """
    if not roadway.lanes:
        raise EmptyRoadway("roadway has no lanes")
    best = None
    for idx, lane in enumerate(roadway.lanes):
        s, t, phi_ref, dist = lane.project(position)
        if best is None or dist < best[0]:
            best = (dist, idx, s, t, phi_ref)
    _, idx, s, t, phi_ref = best
    return FrenetProjection(lane_index=idx, s=s, t=t,
                            phi=wrap_angle(heading - phi_ref))


def frenet_to_cartesian(roadway, lane_index, s, t):
    """Inverse of project_to_frenet for points inside the lane corridor."""
    lane = roadway.lanes[lane_index]
    x, y, h = lane.point_at(s)
    return x - t * np.sin(h), y + t * np.cos(h)


def curvature_at(centerline, s):
    """Curvature of the stored point closest to arclength s."""
    if s < 0.0 or s > centerline.length:
        raise OutOfRange(f"s={s} outside [0, {centerline.length}]")
    i = int(np.argmin(np.abs(centerline.s - s)))
    return float(centerline.curvature[i])


def marker_distances(roadway, proj):
    """Distances from the vehicle center to the lane markings of its lane.

    Both are >= 0 inside the lane and negative once past the marking;
    left + right always equals the lane width.
    """
    half = roadway.lane_width / 2.0
    return half - proj.t, half + proj.t


def distance_beyond_outer(roadway, proj):
    """How far the point lies outside the closest outer road marker (<= 0 inside)."""
    half = roadway.lane_width / 2.0
    beyond = 0.0
    if proj.lane_index == roadway.n_lanes - 1:
        beyond = max(beyond, proj.t - half)
    if proj.lane_index == 0:
        beyond = max(beyond, -proj.t - half)
    return beyond


def straight_roadway(n_lanes=3, length=500.0, lane_width=3.7, n_points=None):
    """Parallel straight lanes along +x, lane 0 at y=0."""
    if n_points is None:
        n_points = max(2, int(length // 10) + 1)
    xs = np.linspace(0.0, length, n_points)
    lanes = [Centerline(np.stack([xs, np.full_like(xs, i * lane_width)], axis=1))
             for i in range(n_lanes)]
    return Roadway(lanes=lanes, lane_width=lane_width)


def arc_centerline(radius, arc_angle, spacing=1.0, center=(0.0, 0.0)):
    """Counter-clockwise circular arc starting at angle 0, for tests and demos."""
    n = max(2, int(abs(radius * arc_angle) / spacing) + 1)
    ang = np.linspace(0.0, arc_angle, n)
    xy = np.stack([center[0] + radius * np.cos(ang - np.pi / 2),
                   center[1] + radius * np.sin(ang - np.pi / 2)], axis=1)
    return Centerline(xy)


def load_centerlines(path, lane_width=3.7):
    """Load a roadway from a CSV with header lane,x,y (points in travel order)."""
    by_lane = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"lane", "x", "y"}.issubset(reader.fieldnames):
            raise ValueError(f"{path}: expected header lane,x,y")
        for row in reader:
            by_lane.setdefault(int(row["lane"]), []).append((float(row["x"]), float(row["y"])))
    if not by_lane:
        raise EmptyRoadway(f"{path}: no centerline points")
    lanes = [Centerline(np.array(by_lane[k])) for k in sorted(by_lane)]
    return Roadway(lanes=lanes, lane_width=lane_width)
