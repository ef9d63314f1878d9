"""Episode lifecycle: scene initialization from recorded data, ego stepping,
replay of the other participants with emergency braking, termination, and
rollout capture."""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import features as ft
from . import roadway as rd
from .dynamics import DriveAction, clamp_action, obb_intersects, propagate
from .rules import EmergencyWrapper


class NoEligibleScene(Exception):
    pass


class SteppedAfterTermination(Exception):
    pass


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    horizon: int = 100
    offroad_tolerance: float = 1.0  # m beyond the outer marker
    accel_bounds: tuple = (-8.0, 5.0)
    turn_rate_bounds: tuple = (-0.5, 0.5)
    brake_threshold: float = -2.0   # replay emergency-braking activation


@dataclass
class EpisodeRollout:
    scene_frame: int
    ego_id: int
    states: list = field(default_factory=list)        # ego VehicleState per step
    observations: list = field(default_factory=list)  # normalized 51-vectors
    actions: list = field(default_factory=list)       # applied (clamped) actions
    log_probs: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    indicator_bits: list = field(default_factory=list)
    lead_info: list = field(default_factory=list)     # (gap, closing) or None per step
    termination: str = "horizon"                      # horizon|collision|offroad|reverse
    recorded_future: list = field(default_factory=list)  # ego recorded states, same steps

    def __len__(self):
        return len(self.actions)


class Env:
    """Single-episode simulation over a shared immutable dataset."""

    def __init__(self, scene_index, roadway, config=SimConfig(), stats=None):
        self.scene = scene_index
        self.roadway = roadway
        self.config = config
        self.stats = stats
        self._eligible = self._find_eligible()
        self._live = False

    def _find_eligible(self):
        """frame -> list of car ids with >= horizon recorded frames remaining."""
        eligible = {}
        for vid, tr in self.scene.trajectories.items():
            if tr.vehicle.vclass != "car":
                continue
            last = int(tr.frames[-1])
            for f in tr.frames:
                f = int(f)
                if last - f >= self.config.horizon:
                    eligible.setdefault(f, []).append(vid)
        return {f: sorted(v) for f, v in eligible.items()}

    @property
    def eligible_frames(self):
        return sorted(self._eligible)

    def reset(self, rng, frame=None, ego_id=None):
        """Sample a scene and ego; returns the first observation."""
        if not self._eligible:
            raise NoEligibleScene("no frame has an eligible ego car")
        if frame is None:
            frames = self.eligible_frames
            frame = frames[rng.integers(len(frames))]
        elif frame not in self._eligible:
            raise NoEligibleScene(f"frame {frame} has no eligible ego")
        if ego_id is None:
            cars = self._eligible[frame]
            ego_id = cars[rng.integers(len(cars))]

        self.frame0 = frame
        self.t = 0
        self.ego_id = ego_id
        ego_tr = self.scene.trajectories[ego_id]
        self._ego_tr = ego_tr
        self._ego_offset = int(frame - ego_tr.frames[0])
        self.ego_state = ego_tr.states[self._ego_offset]
        self.ego_def = ego_tr.vehicle

        self._wrappers = {}
        self._sim_states = {}   # states of emergency-braking vehicles
        self.terminated = None

        self.rollout = EpisodeRollout(scene_frame=frame, ego_id=ego_id)
        obs = self._observe()
        self._last_obs = obs
        self._live = True
        return obs

    def _others_at(self, frame):
        """Current non-ego vehicle states at an absolute frame."""
        out = []
        seen = set()
        for vid, w in self._wrappers.items():
            if w.triggered:
                out.append((vid, self._sim_states[vid], w.vdef))
                seen.add(vid)
        for vid, st in self.scene.states_at(frame):
            if vid == self.ego_id or vid in seen:
                continue
            out.append((vid, st, self.scene.defs[vid]))
        return out

    def _observe(self):
        others = [(st, vdef) for _, st, vdef in self._others_at(self.frame0 + self.t)]
        raw, norm, ind = ft.observe(self.ego_state, self.ego_def, others,
                                    self.roadway, self.stats)
        self._last_ind = ind
        return norm

    def _recorded_state(self, vid, frame):
        tr = self.scene.trajectories[vid]
        off = int(frame - tr.frames[0])
        if 0 <= off < len(tr.states):
            return tr.states[off]
        return None

    def step(self, action, override_next_state=None):
        """Advance one step; returns (observation, termination reason | None).

        override_next_state replaces the propagated ego state (used for exact
        replay of the recorded ego); the action is still recorded.
        """
        if not self._live or self.terminated is not None:
            raise SteppedAfterTermination("episode is over; call reset first")
        cfg = self.config
        act = clamp_action(DriveAction(*np.asarray(action, dtype=float)),
                           cfg.accel_bounds, cfg.turn_rate_bounds)

        prev_ego = self.ego_state
        frame = self.frame0 + self.t
        next_frame = frame + 1

        # advance non-ego vehicles through the emergency-braking wrapper
        for vid, st, vdef in self._others_at(frame):
            w = self._wrappers.get(vid)
            if w is None:
                w = EmergencyWrapper(vdef, self.roadway,
                                     threshold=cfg.brake_threshold, dt=cfg.dt)
                self._wrappers[vid] = w
            recorded_next = self._recorded_state(vid, next_frame)
            nxt = w.step(st, recorded_next, prev_ego, self.ego_def)
            if w.triggered:
                self._sim_states[vid] = nxt

        if override_next_state is not None:
            self.ego_state = override_next_state
        else:
            self.ego_state = propagate(prev_ego, act, cfg.dt)
        self.t += 1

        obs = self._observe()
        ind = self._last_ind
        reason = None
        if ind[0] > 0.5:
            reason = "collision"
        elif ind[1] > 0.5:
            reason = "offroad"
        elif self.ego_state.speed < 0.0:
            reason = "reverse"
        elif self.t >= cfg.horizon:
            reason = "horizon"
        self.terminated = reason

        ro = self.rollout
        ro.states.append(self.ego_state)
        ro.actions.append(np.array([act.accel, act.turn_rate]))
        ro.observations.append(self._last_obs)
        ro.indicator_bits.append(ind.copy())
        others = [(st, vdef) for _, st, vdef in self._others_at(next_frame)]
        ro.lead_info.append(ft.lead_vehicle(self.ego_state, self.ego_def,
                                            others, self.roadway))
        rec = self._ego_tr.states[self._ego_offset + self.t] \
            if self._ego_offset + self.t < len(self._ego_tr.states) else None
        ro.recorded_future.append(rec)
        if reason is not None:
            ro.termination = reason
        self._last_obs = obs
        return obs, reason


def rollout(policy, env, rng, frame=None, ego_id=None):
    """Run one full episode under a policy; returns the EpisodeRollout."""
    obs = env.reset(rng, frame=frame, ego_id=ego_id)
    policy.reset()
    exact = getattr(policy, "exact_replay", False)
    while True:
        action, logp = policy.act(obs, env, rng)
        override = None
        if exact:
            off = env._ego_offset + env.t + 1
            if off < len(env._ego_tr.states):
                override = env._ego_tr.states[off]
        obs, reason = env.step(action, override_next_state=override)
        env.rollout.log_probs.append(logp)
        if reason is not None:
            return env.rollout


def write_rollout_csv(ro, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "x", "y", "heading", "speed", "accel", "turn_rate",
                    "logp", "termination"])
        for i, (st, a) in enumerate(zip(ro.states, ro.actions)):
            logp = ro.log_probs[i] if i < len(ro.log_probs) else float("nan")
            term = ro.termination if i == len(ro.states) - 1 else ""
            w.writerow([i, f"{st.x:.6f}", f"{st.y:.6f}", f"{st.heading:.6f}",
                        f"{st.speed:.6f}", f"{a[0]:.6f}", f"{a[1]:.6f}",
                        f"{logp:.6f}", term])
