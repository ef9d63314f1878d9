"""Validation metrics: RWSE, KL divergence over emergent-quantity
histograms, emergent behavior rates, and the campaign driver."""

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import features as ft
from . import roadway as rd
from .simenv import Env, rollout as run_rollout

DT = 0.1
KL_QUANTITIES = ("ittc", "speed", "acceleration", "turn_rate", "jerk")
RWSE_VARIABLES = ("position", "lane_offset", "speed")
HARD_BRAKE = -3.0
LANE_CHANGE_DEBOUNCE = 5  # steps the new lane must persist


class MisalignedSamples(Exception):
    pass


class RangeMismatch(Exception):
    pass


@dataclass(frozen=True)
class RwseConfig:
    horizons: tuple = (0.5, 1.0, 2.0, 3.0, 4.0, 5.0)
    samples_per_trajectory: int = 20


def rwse(truth, samples):
    """Root-weighted square error at each horizon.

    truth: (m, H) true values; samples: (m, n, H) simulated values.
    Trajectories ended before a horizon must already hold their final value.
    """
    truth = np.asarray(truth, dtype=float)
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 3 or samples.shape[0] != truth.shape[0] \
            or samples.shape[2] != truth.shape[1]:
        raise MisalignedSamples(
            f"truth {truth.shape} vs samples {samples.shape}")
    sq = (truth[:, None, :] - samples) ** 2
    return np.sqrt(sq.mean(axis=(0, 1)))


@dataclass
class Histogram:
    lo: float
    hi: float
    counts: np.ndarray
    n_bins: int = 100

    @classmethod
    def from_samples(cls, samples, lo, hi, n_bins=100):
        samples = np.asarray(samples, dtype=float)
        counts, _ = np.histogram(np.clip(samples, lo, hi), bins=n_bins,
                                 range=(lo, hi))
        return cls(lo=lo, hi=hi, counts=counts.astype(float), n_bins=n_bins)

    @property
    def total(self):
        return float(self.counts.sum())


def kl_divergence(real, sim, eps=1e-6):
    """KL(real || sim) in nats over bin probabilities, with additive
    smoothing eps per bin; finite even for disjoint supports."""
    if (real.lo, real.hi, real.n_bins) != (sim.lo, sim.hi, sim.n_bins):
        raise RangeMismatch("histograms use different ranges or bin counts")
    p = real.counts / max(real.total, 1.0)
    q = sim.counts / max(sim.total, 1.0)
    p = (p + eps) / (1.0 + real.n_bins * eps)
    q = (q + eps) / (1.0 + sim.n_bins * eps)
    return float(np.sum(p * np.log(p / q)))


# -- per-trajectory quantity extraction ----------------------------------

def trajectory_quantities(states, roadway, lead_info=None):
    """Emergent quantity series for one trajectory of VehicleStates.

    Returns a dict with speed, acceleration (realized), turn_rate, jerk,
    lane_index, offroad flags, and (when lead_info is given) ittc samples.
    """
    speeds = np.array([s.speed for s in states])
    headings = np.array([s.heading for s in states])
    accel = np.diff(speeds) / DT
    turn = np.array([])
    if len(headings) > 1:
        d = np.arctan2(np.sin(np.diff(headings)), np.cos(np.diff(headings)))
        turn = d / DT
    jerk = np.diff(accel) / DT if len(accel) > 1 else np.array([])

    lanes = np.zeros(len(states), dtype=int)
    offroad = np.zeros(len(states), dtype=bool)
    for i, s in enumerate(states):
        proj = rd.project_to_frenet(roadway, (s.x, s.y), s.heading)
        lanes[i] = proj.lane_index
        offroad[i] = rd.distance_beyond_outer(roadway, proj) > ft.OFFROAD_TOLERANCE

    out = {"speed": speeds, "acceleration": accel, "turn_rate": turn,
           "jerk": jerk, "lane_index": lanes, "offroad": offroad}
    if lead_info is not None:
        out["ittc"] = np.array(ittc_samples_from_lead(lead_info))
    return out


def ittc_samples_from_lead(lead_info):
    """Inverse time-to-collision samples; steps without a leader excluded."""
    out = []
    for li in lead_info:
        if li is None:
            continue
        gap, closing = li
        out.append(max(0.0, closing) / gap)
    return out


def ittc_samples(rollouts):
    out = []
    for r in rollouts:
        out.extend(ittc_samples_from_lead(r.lead_info))
    return out


def count_lane_changes(lane_index):
    """Lane changes where the new closest centerline persists >= 5 steps."""
    lanes = np.asarray(lane_index)
    if len(lanes) == 0:
        return 0
    committed = lanes[0]
    changes = 0
    i = 1
    while i < len(lanes):
        if lanes[i] != committed:
            run = 1
            while i + run < len(lanes) and lanes[i + run] == lanes[i]:
                run += 1
            if run >= LANE_CHANGE_DEBOUNCE:
                changes += 1
                committed = lanes[i]
                i += run
                continue
            i += run
        else:
            i += 1
    return changes


@dataclass
class EmergentReport:
    lane_change_rate: float
    offroad_duration: float
    collision_rate: float
    hard_brake_rate: float

    def as_dict(self):
        return {"lane_change_rate": self.lane_change_rate,
                "offroad_duration": self.offroad_duration,
                "collision_rate": self.collision_rate,
                "hard_brake_rate": self.hard_brake_rate}


def emergent_from_quantities(quantity_dicts, collided_flags):
    n = len(quantity_dicts)
    if n == 0:
        return EmergentReport(0.0, 0.0, 0.0, 0.0)
    lc = np.mean([count_lane_changes(q["lane_index"]) for q in quantity_dicts])
    off = np.mean([q["offroad"].sum() for q in quantity_dicts])
    coll = np.mean([1.0 if c else 0.0 for c in collided_flags])
    hard = np.mean([1.0 if np.any(q["acceleration"] < HARD_BRAKE) else 0.0
                    for q in quantity_dicts])
    return EmergentReport(lane_change_rate=float(lc), offroad_duration=float(off),
                          collision_rate=float(coll), hard_brake_rate=float(hard))


def emergent_metrics(rollouts, roadway):
    qs = [trajectory_quantities(r.states, roadway) for r in rollouts]
    collided = [any(b[0] > 0.5 for b in r.indicator_bits) for r in rollouts]
    return emergent_from_quantities(qs, collided)


# -- campaign ------------------------------------------------------------

@dataclass(frozen=True)
class CampaignConfig:
    scenes: int = 1000
    repeats: int = 20
    horizons: tuple = (0.5, 1.0, 2.0, 3.0, 4.0, 5.0)
    horizon_steps: int = 100
    jobs: int = 1


@dataclass
class EvaluationReport:
    model: str
    rwse: dict          # variable -> {horizon: value}
    kl: dict            # quantity -> nats
    emergent: dict
    n_rollouts: int = 0

    def as_dict(self):
        return {"model": self.model, "rwse": self.rwse, "kl": self.kl,
                "emergent": self.emergent, "n_rollouts": self.n_rollouts}


def _lane_offsets(states, roadway):
    return np.array([rd.project_to_frenet(roadway, (s.x, s.y), s.heading).t
                     for s in states])


_WORKER = {}


def _init_worker(scene_index, roadway, sim_config, stats, models):
    _WORKER["env"] = Env(scene_index, roadway, sim_config, stats)
    _WORKER["models"] = models
    _WORKER["roadway"] = roadway


def _run_chunk(args):
    model_name, tasks = args
    env = _WORKER["env"]
    policy = _WORKER["models"][model_name]
    roadway = _WORKER["roadway"]
    return [_one_rollout_summary(env, policy, roadway, frame, ego, seed)
            for frame, ego, seed in tasks]


def _one_rollout_summary(env, policy, roadway, frame, ego, seed):
    rng = np.random.default_rng(seed)
    ro = run_rollout(policy, env, rng, frame=frame, ego_id=ego)
    # include the (recorded) initial state so sim series align step-for-step
    # with the recorded segment
    tr = env.scene.trajectories[ego]
    states = [tr.states[int(frame - tr.frames[0])]] + ro.states
    q = trajectory_quantities(states, roadway, lead_info=ro.lead_info)
    collided = any(b[0] > 0.5 for b in ro.indicator_bits)
    xs = np.array([s.x for s in states])
    ys = np.array([s.y for s in states])
    vs = np.array([s.speed for s in states])
    offs = _lane_offsets(states, roadway)
    return {"q": q, "collided": collided, "xy": np.stack([xs, ys], axis=1),
            "speed": vs, "lane_offset": offs}


def sample_campaign_scenes(env, n_scenes, rng):
    """The fixed (frame, ego) sample shared by every model."""
    frames = env.eligible_frames
    out = []
    for _ in range(n_scenes):
        f = frames[rng.integers(len(frames))]
        cars = env._eligible[f]
        out.append((f, cars[rng.integers(len(cars))]))
    return out


def _recorded_segment(scene, roadway, frame, ego, n_steps):
    tr = scene.trajectories[ego]
    off = int(frame - tr.frames[0])
    states = tr.states[off:off + n_steps + 1]
    lead = []
    for k in range(1, len(states)):
        f = frame + k
        others = [(st, scene.defs[vid]) for vid, st in scene.states_at(f)
                  if vid != ego]
        lead.append(ft.lead_vehicle(states[k], tr.vehicle, others, roadway))
    q = trajectory_quantities(states, roadway, lead_info=lead)
    xy = np.array([[s.x, s.y] for s in states])
    speed = np.array([s.speed for s in states])
    offs = _lane_offsets(states, roadway)
    return {"q": q, "xy": xy, "speed": speed, "lane_offset": offs}


def run_campaign(models, scene_index, roadway, sim_config, stats,
                 campaign=CampaignConfig(), seed=0):
    """Evaluate every model on a shared scene/ego sample.

    models: ordered dict name -> policy.  Returns {name: EvaluationReport}.
    Deterministic for fixed (models, dataset, seed), independent of jobs.
    """
    env = Env(scene_index, roadway, sim_config, stats)
    master = np.random.SeedSequence(seed)
    scene_rng = np.random.default_rng(master.spawn(1)[0])
    scenes = sample_campaign_scenes(env, campaign.scenes, scene_rng)

    # per-(scene, repeat) seeds, shared across models
    seeds = np.random.SeedSequence(seed + 1).generate_state(
        campaign.scenes * campaign.repeats, dtype=np.uint64)

    # real-world side
    real = [_recorded_segment(scene_index, roadway, f, e, campaign.horizon_steps)
            for f, e in scenes]
    ranges = {}
    for qty in KL_QUANTITIES:
        vals = np.concatenate([r["q"][qty] for r in real]) if real else np.zeros(1)
        if vals.size == 0:
            vals = np.zeros(1)
        lo, hi = np.percentile(vals, [0.1, 99.9])
        if hi - lo < 1e-9:
            hi = lo + 1.0
        ranges[qty] = (float(lo), float(hi))
    real_hists = {qty: Histogram.from_samples(
        np.concatenate([r["q"][qty] for r in real]) if real else [],
        *ranges[qty]) for qty in KL_QUANTITIES}
    real_emergent = emergent_from_quantities(
        [r["q"] for r in real], [False] * len(real))

    horizon_steps = [int(round(h / DT)) for h in campaign.horizons]

    tasks = []
    for i, (f, e) in enumerate(scenes):
        for j in range(campaign.repeats):
            tasks.append((f, e, int(seeds[i * campaign.repeats + j])))

    reports = {}
    for name, policy in models.items():
        if campaign.jobs > 1:
            chunks = [(name, tasks[k::campaign.jobs]) for k in range(campaign.jobs)]
            with ProcessPoolExecutor(
                    max_workers=campaign.jobs, initializer=_init_worker,
                    initargs=(scene_index, roadway, sim_config, stats, models)) as ex:
                parts = list(ex.map(_run_chunk, chunks))
            summaries = [None] * len(tasks)
            for k, part in enumerate(parts):
                for idx, summ in zip(range(k, len(tasks), campaign.jobs), part):
                    summaries[idx] = summ
        else:
            summaries = [_one_rollout_summary(env, policy, roadway, f, e, s)
                         for f, e, s in tasks]

        # RWSE: truth (m, H) vs samples (m, n, H) per variable
        m, n = campaign.scenes, campaign.repeats
        rw = {}
        for var in RWSE_VARIABLES:
            truth = np.zeros((m, len(horizon_steps)))
            sample = np.zeros((m, n, len(horizon_steps)))
            for i in range(m):
                for hidx, hs in enumerate(horizon_steps):
                    if var == "position":
                        truth[i, hidx] = 0.0
                    elif var == "lane_offset":
                        truth[i, hidx] = real[i]["lane_offset"][
                            min(hs, len(real[i]["lane_offset"]) - 1)]
                    else:
                        truth[i, hidx] = real[i]["speed"][
                            min(hs, len(real[i]["speed"]) - 1)]
                for j in range(n):
                    summ = summaries[i * n + j]
                    for hidx, hs in enumerate(horizon_steps):
                        if var == "position":
                            true_xy = real[i]["xy"][min(hs, len(real[i]["xy"]) - 1)]
                            sim_xy = summ["xy"][min(hs, len(summ["xy"]) - 1)]
                            sample[i, j, hidx] = np.hypot(*(true_xy - sim_xy))
                        elif var == "lane_offset":
                            sample[i, j, hidx] = summ["lane_offset"][
                                min(hs, len(summ["lane_offset"]) - 1)]
                        else:
                            sample[i, j, hidx] = summ["speed"][
                                min(hs, len(summ["speed"]) - 1)]
            vals = rwse(truth, sample)
            rw[var] = {str(h): float(v) for h, v in zip(campaign.horizons, vals)}

        kl = {}
        for qty in KL_QUANTITIES:
            sim_vals = np.concatenate([s["q"][qty] for s in summaries]) \
                if summaries else np.zeros(0)
            sim_hist = Histogram.from_samples(sim_vals, *ranges[qty])
            kl[qty] = kl_divergence(real_hists[qty], sim_hist)

        emergent = emergent_from_quantities([s["q"] for s in summaries],
                                            [s["collided"] for s in summaries])
        reports[name] = EvaluationReport(
            model=name, rwse=rw, kl=kl, emergent=emergent.as_dict(),
            n_rollouts=len(summaries))
    reports["_real"] = EvaluationReport(
        model="_real", rwse={}, kl={q: 0.0 for q in KL_QUANTITIES},
        emergent=real_emergent.as_dict(), n_rollouts=len(real))
    return reports


def write_reports(reports, out_dir):
    """JSON report plus figure-shaped CSV tables."""
    import csv
    import os
    os.makedirs(out_dir, exist_ok=True)
    payload = {name: r.as_dict() for name, r in reports.items()}
    with open(os.path.join(out_dir, "evaluation.json"), "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)

    model_names = [n for n in reports if n != "_real"]
    for var in RWSE_VARIABLES:
        path = os.path.join(out_dir, f"rwse_{var}.csv")
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            horizons = sorted({h for n in model_names
                               for h in reports[n].rwse.get(var, {})}, key=float)
            w.writerow(["model"] + horizons)
            for n in model_names:
                w.writerow([n] + [reports[n].rwse.get(var, {}).get(h, "")
                                  for h in horizons])
    with open(os.path.join(out_dir, "kl_divergences.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["model"] + list(KL_QUANTITIES))
        for n in model_names:
            w.writerow([n] + [reports[n].kl[q] for q in KL_QUANTITIES])
    with open(os.path.join(out_dir, "emergent_values.csv"), "w", newline="") as f:
        w = csv.writer(f)
        keys = ["lane_change_rate", "offroad_duration", "collision_rate",
                "hard_brake_rate"]
        w.writerow(["model"] + keys)
        for n in ["_real"] + model_names:
            w.writerow([n] + [reports[n].emergent[k] for k in keys])
