"""Rule-based control: IDM car following, MOBIL lane changes, proportional
lane tracking, and the replay emergency-braking wrapper."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import roadway as rd
from .dynamics import DriveAction, VehicleState, clamp_action, propagate


class NonPositiveGap(Exception):
    pass


@dataclass(frozen=True)
class IdmParams:
    desired_speed: float = 15.0   # m/s
    min_spacing: float = 1.0      # m
    time_headway: float = 0.5     # s
    max_accel: float = 3.0        # m/s^2
    comfort_decel: float = 2.5    # m/s^2
    exponent: float = 4.0


@dataclass(frozen=True)
class MobilParams:
    politeness: float = 0.5
    accel_gain_threshold: float = 0.1  # m/s^2
    safe_decel_limit: float = 4.0      # m/s^2


@dataclass(frozen=True)
class ControllerNoise:
    sigma_accel: float = 0.0      # m/s^2
    sigma_turnrate: float = 0.0   # rad/s


def idm_accel(p, speed, closing_speed=0.0, gap=None):
    """Intelligent Driver Model acceleration.

    closing_speed is ego speed minus leader speed.  gap=None means free road.
    Output is clamped below at -8 m/s^2.
    """
    free = 1.0 - (speed / p.desired_speed) ** p.exponent
    if gap is None:
        a = p.max_accel * free
    else:
        if gap <= 0.0:
            raise NonPositiveGap(f"gap={gap}")
        s_star = p.min_spacing + max(
            0.0,
            speed * p.time_headway
            + speed * closing_speed / (2.0 * np.sqrt(p.max_accel * p.comfort_decel)),
        )
        a = p.max_accel * (free - (s_star / gap) ** 2)
    return float(max(a, -8.0))


@dataclass(frozen=True)
class LaneContext:
    """Leader/follower situation in one candidate lane, relative to ego.

    Gaps are bumper-to-bumper and positive when there is free space.
    None means no such vehicle.
    """
    lead_gap: Optional[float] = None
    lead_speed: Optional[float] = None
    follow_gap: Optional[float] = None
    follow_speed: Optional[float] = None


def _accel_given(p, speed, lead_gap, lead_speed):
    if lead_gap is None:
        return idm_accel(p, speed)
    if lead_gap <= 0.0:
        return -8.0  # overlapped; treat as emergency braking for scoring
    return idm_accel(p, speed, closing_speed=speed - lead_speed, gap=lead_gap)


def mobil_decide(p, idm, ego_speed, current: LaneContext,
                 left: Optional[LaneContext] = None,
                 right: Optional[LaneContext] = None):
    """MOBIL lane-change decision: 'left', 'stay', or 'right'.

    A change must pass the safety criterion (the new follower never needs to
    brake harder than the safe limit) and the incentive criterion (ego gain
    plus politeness-weighted follower gains exceeds the threshold).
    Ties favor stay, then right.
    """
    a_ego_now = _accel_given(idm, ego_speed, current.lead_gap, current.lead_speed)

    def evaluate(ctx):
        if ctx is None:
            return None
        # safety: the follower in the target lane would trail the ego
        if ctx.follow_gap is not None:
            if ctx.follow_gap <= 0.0:
                return None
            a_follow_new = _accel_given(idm, ctx.follow_speed, ctx.follow_gap, ego_speed)
            if a_follow_new < -p.safe_decel_limit:
                return None
            a_follow_old = _accel_given(idm, ctx.follow_speed,
                                        None if ctx.lead_gap is None
                                        else ctx.follow_gap + ctx.lead_gap,
                                        ctx.lead_speed)
            follower_gain = a_follow_new - a_follow_old
        else:
            follower_gain = 0.0
        a_ego_new = _accel_given(idm, ego_speed, ctx.lead_gap, ctx.lead_speed)
        return a_ego_new - a_ego_now + p.politeness * follower_gain

    gains = {"right": evaluate(right), "left": evaluate(left)}
    best, best_gain = "stay", p.accel_gain_threshold
    for side in ("right", "left"):  # right checked first so ties favor right
        g = gains[side]
        if g is not None and g > best_gain:
            best, best_gain = side, g
    return best


def lane_track_turnrate(gain_offset, gain_heading, proj,
                        bounds=(-0.5, 0.5)):
    """Proportional centerline tracking: w = -k_t * t - k_phi * phi, clamped."""
    w = -gain_offset * proj.t - gain_heading * proj.phi
    return float(np.clip(w, *bounds))


class EmergencyWrapper:
    """Replay wrapper for one non-ego vehicle.

    The vehicle follows its recorded states until the IDM acceleration
    computed against the ego (as leader) drops below the activation
    threshold; it then switches permanently to IDM longitudinal control with
    desired speed frozen at the transition speed, while tracking the closest
    lane centerline.
    """

    def __init__(self, vdef, roadway, threshold=-2.0, dt=0.1,
                 gain_offset=0.1, gain_heading=1.0):
        self.vdef = vdef
        self.roadway = roadway
        self.threshold = threshold
        self.dt = dt
        self.gain_offset = gain_offset
        self.gain_heading = gain_heading
        self.triggered = False
        self.idm = None

    def _gap_to_ego(self, state, ego_state, ego_def):
        """Bumper-to-bumper gap when the ego leads this vehicle in its lane."""
        proj = rd.project_to_frenet(self.roadway, (state.x, state.y), state.heading)
        eproj = rd.project_to_frenet(self.roadway, (ego_state.x, ego_state.y), ego_state.heading)
        if proj.lane_index != eproj.lane_index:
            return None
        ds = eproj.s - proj.s
        if ds <= 0.0:
            return None
        return ds - (self.vdef.length + ego_def.length) / 2.0

    def step(self, state, recorded_next, ego_state, ego_def):
        """Return the vehicle's next state given the ego's current state."""
        if not self.triggered and ego_state is not None:
            gap = self._gap_to_ego(state, ego_state, ego_def)
            if gap is not None and gap > 0.0:
                probe = IdmParams(desired_speed=max(state.speed, 0.1))
                a = idm_accel(probe, state.speed,
                              closing_speed=state.speed - ego_state.speed, gap=gap)
                if a < self.threshold:
                    self.triggered = True
                    self.idm = probe
        if not self.triggered:
            return recorded_next

        if ego_state is not None:
            gap = self._gap_to_ego(state, ego_state, ego_def)
        else:
            gap = None
        if gap is not None and gap <= 0.0:
            a = -8.0
        elif gap is not None:
            a = idm_accel(self.idm, state.speed,
                          closing_speed=state.speed - ego_state.speed, gap=gap)
        else:
            a = idm_accel(self.idm, max(state.speed, 0.0))
        proj = rd.project_to_frenet(self.roadway, (state.x, state.y), state.heading)
        w = lane_track_turnrate(self.gain_offset, self.gain_heading, proj)
        nxt = propagate(state, DriveAction(accel=a, turn_rate=w), self.dt)
        if nxt.speed < 0.0:  # braked-to-rest vehicles stay stopped
            nxt = VehicleState(x=nxt.x, y=nxt.y, heading=nxt.heading, speed=0.0)
        return nxt


def idm_mobil_action(idm, mobil, noise, ego_speed, proj_target, contexts, rng,
                     gain_offset=0.1, gain_heading=1.0):
    """One IDM+MOBIL control step.

    contexts is a dict with keys 'current' and optionally 'left'/'right'
    holding LaneContext values; proj_target is the Frenet projection onto the
    centerline of the lane MOBIL selects (the caller re-projects after the
    decision).  Gaussian noise makes the controller nondeterministic.
    """
    cur = contexts["current"]
    a = _accel_given(idm, ego_speed, cur.lead_gap, cur.lead_speed)
    w = lane_track_turnrate(gain_offset, gain_heading, proj_target)
    if noise.sigma_accel > 0.0:
        a += noise.sigma_accel * rng.standard_normal()
    if noise.sigma_turnrate > 0.0:
        w += noise.sigma_turnrate * rng.standard_normal()
    return clamp_action(DriveAction(accel=float(a), turn_rate=float(w)))
