"""Policy adapters sharing one interface: act(obs, env, rng) -> (action, logp).

Neural policies act on the 51-element observation alone; the rule-based
controller reads the scene (ego pose, neighbors, roadway) from the env.
"""

import numpy as np

from . import roadway as rd
from .baselines import MixtureRegression, StaticGaussian
from .nets import gaussian_logprob, policy_forward, sample_and_logprob
from .rules import (ControllerNoise, IdmParams, LaneContext, MobilParams,
                    _accel_given, lane_track_turnrate, mobil_decide)


class NeuralPolicy:
    """Wraps an MLP or GRU policy network for rollouts."""

    def __init__(self, net, deterministic=False):
        self.net = net
        self.deterministic = deterministic
        self._hidden = None

    def reset(self):
        self._hidden = self.net.initial_hidden()

    def act(self, obs, env, rng):
        dist, self._hidden = policy_forward(self.net, obs, self._hidden)
        if self.deterministic:
            a = dist.mu.copy()
            return a, gaussian_logprob(a, dist.mu, dist.log_nu)
        return sample_and_logprob(dist, rng)


class StaticGaussianPolicy:
    def __init__(self, model: StaticGaussian):
        self.model = model
        self._chol = np.linalg.cholesky(model.sigma)

    def reset(self):
        pass

    def act(self, obs, env, rng):
        a = self.model.mu + self._chol @ rng.standard_normal(2)
        diff = np.linalg.solve(self._chol, a - self.model.mu)
        logp = float(-0.5 * diff @ diff - np.sum(np.log(np.diag(self._chol)))
                     - np.log(2.0 * np.pi))
        return a, logp


class MixtureRegressionPolicy:
    def __init__(self, model: MixtureRegression):
        self.model = model

    def reset(self):
        pass

    def act(self, obs, env, rng):
        cond = self.model.conditional(np.asarray(obs, dtype=float))
        k = rng.choice(len(cond.weights), p=cond.weights)
        a = rng.multivariate_normal(cond.means[k], cond.covs[k])
        return a, 0.0


def lane_neighbors(env, lane_index):
    """Nearest leader and follower of the ego in a given lane.

    Returns a LaneContext with bumper-to-bumper gaps, or None when the lane
    does not exist.
    """
    if lane_index < 0 or lane_index >= env.roadway.n_lanes:
        return None
    ego = env.ego_state
    eproj = env.roadway.lanes[lane_index].project((ego.x, ego.y))
    s_ego = eproj[0]
    lead = follow = None
    for _, st, vdef in env._others_at(env.frame0 + env.t):
        s, t, _, dist = env.roadway.lanes[lane_index].project((st.x, st.y))
        if abs(t) > env.roadway.lane_width / 2.0:
            continue
        ds = s - s_ego
        gap = abs(ds) - (env.ego_def.length + vdef.length) / 2.0
        if ds > 0 and (lead is None or ds < lead[0]):
            lead = (ds, gap, st.speed)
        elif ds <= 0 and (follow is None or -ds < follow[0]):
            follow = (-ds, gap, st.speed)
    return LaneContext(
        lead_gap=None if lead is None else lead[1],
        lead_speed=None if lead is None else lead[2],
        follow_gap=None if follow is None else follow[1],
        follow_speed=None if follow is None else follow[2],
    )


class IdmMobilPolicy:
    """IDM longitudinal control plus MOBIL lane selection with proportional
    centerline tracking; Gaussian noise makes it nondeterministic."""

    def __init__(self, idm=IdmParams(), mobil=MobilParams(),
                 noise=ControllerNoise(), gain_offset=0.1, gain_heading=1.0):
        self.idm = idm
        self.mobil = mobil
        self.noise = noise
        self.gain_offset = gain_offset
        self.gain_heading = gain_heading
        self.target_lane = None

    def reset(self):
        self.target_lane = None

    def act(self, obs, env, rng):
        ego = env.ego_state
        proj = rd.project_to_frenet(env.roadway, (ego.x, ego.y), ego.heading)
        if self.target_lane is None:
            self.target_lane = proj.lane_index

        current = lane_neighbors(env, proj.lane_index)
        # reconsider the target only once the previous change has completed
        if proj.lane_index == self.target_lane:
            decision = mobil_decide(
                self.mobil, self.idm, ego.speed, current,
                left=lane_neighbors(env, proj.lane_index + 1),
                right=lane_neighbors(env, proj.lane_index - 1))
            if decision == "left":
                self.target_lane = proj.lane_index + 1
            elif decision == "right":
                self.target_lane = proj.lane_index - 1

        # follow the nearer of the current-lane and target-lane leaders
        ctxs = [current]
        if self.target_lane != proj.lane_index:
            ctxs.append(lane_neighbors(env, self.target_lane))
        gaps = [(c.lead_gap, c.lead_speed) for c in ctxs
                if c is not None and c.lead_gap is not None]
        if gaps:
            lead_gap, lead_speed = min(gaps, key=lambda g: g[0])
            a = _accel_given(self.idm, ego.speed, lead_gap, lead_speed)
        else:
            a = _accel_given(self.idm, ego.speed, None, None)

        lane = env.roadway.lanes[self.target_lane]
        s, t, phi_ref, _ = lane.project((ego.x, ego.y))
        tproj = rd.FrenetProjection(lane_index=self.target_lane, s=s, t=t,
                                    phi=float(np.arctan2(
                                        np.sin(ego.heading - phi_ref),
                                        np.cos(ego.heading - phi_ref))))
        w = lane_track_turnrate(self.gain_offset, self.gain_heading, tproj,
                                bounds=env.config.turn_rate_bounds)
        if self.noise.sigma_accel > 0.0:
            a += self.noise.sigma_accel * rng.standard_normal()
        if self.noise.sigma_turnrate > 0.0:
            w += self.noise.sigma_turnrate * rng.standard_normal()
        return np.array([a, w]), 0.0


class ReplayPolicy:
    """Replays the ego's own recorded trajectory exactly (the env teleports
    the ego to the recorded states; actions are finite differences); used for
    self-comparison checks."""

    exact_replay = True

    def reset(self):
        pass

    def act(self, obs, env, rng):
        tr = env._ego_tr
        off = env._ego_offset + env.t
        cur, nxt = tr.states[off], tr.states[min(off + 1, len(tr.states) - 1)]
        dt = env.config.dt
        a = (nxt.speed - cur.speed) / dt
        dw = np.arctan2(np.sin(nxt.heading - cur.heading),
                        np.cos(nxt.heading - cur.heading))
        return np.array([a, dw / dt]), 0.0
