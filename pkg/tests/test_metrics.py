import json

import numpy as np
import pytest

from drivesim import metrics as mt
from drivesim.dynamics import VehicleState
from drivesim.policies import IdmMobilPolicy, ReplayPolicy
from drivesim.roadway import straight_roadway
from drivesim.simenv import SimConfig


def test_rwse_oracle():
    truth = np.array([[0.0]])
    samples = np.array([[[1.0], [2.0]]])
    out = mt.rwse(truth, samples)
    # sqrt((1 + 4) / 2)
    assert abs(out[0] - 1.5811388300841898) < 1e-9


def test_rwse_multi_horizon_shape():
    rng = np.random.default_rng(0)
    truth = rng.standard_normal((4, 6))
    samples = truth[:, None, :] + np.zeros((4, 3, 6))
    assert np.allclose(mt.rwse(truth, samples), 0.0)


def test_rwse_misaligned_raises():
    with pytest.raises(mt.MisalignedSamples):
        mt.rwse(np.zeros((2, 3)), np.zeros((2, 5, 4)))


def test_kl_two_bin_oracle():
    real = mt.Histogram(lo=0.0, hi=1.0, counts=np.array([3.0, 1.0]), n_bins=2)
    sim = mt.Histogram(lo=0.0, hi=1.0, counts=np.array([2.0, 2.0]), n_bins=2)
    # 0.75 ln(1.5) + 0.25 ln(0.5)
    expected = 0.75 * np.log(1.5) + 0.25 * np.log(0.5)
    assert abs(mt.kl_divergence(real, sim) - expected) < 1e-5


def test_kl_identical_histograms_zero():
    h = mt.Histogram.from_samples(np.linspace(0, 1, 50), 0.0, 1.0)
    assert mt.kl_divergence(h, h) == 0.0


def test_kl_disjoint_supports_finite():
    real = mt.Histogram.from_samples(np.full(100, 0.1), 0.0, 1.0)
    sim = mt.Histogram.from_samples(np.full(100, 0.9), 0.0, 1.0)
    v = mt.kl_divergence(real, sim)
    assert np.isfinite(v) and v > 0.0


def test_kl_range_mismatch_raises():
    a = mt.Histogram.from_samples([0.5], 0.0, 1.0)
    b = mt.Histogram.from_samples([0.5], 0.0, 2.0)
    with pytest.raises(mt.RangeMismatch):
        mt.kl_divergence(a, b)


def test_histogram_clips_outliers_into_end_bins():
    h = mt.Histogram.from_samples([-10.0, 0.5, 10.0], 0.0, 1.0, n_bins=10)
    assert h.total == 3.0
    assert h.counts[0] == 1.0 and h.counts[-1] == 1.0


def test_ittc_oracle():
    assert mt.ittc_samples_from_lead([(10.0, 5.0)]) == [0.5]
    # an opening gap contributes zero, a missing leader contributes nothing
    assert mt.ittc_samples_from_lead([(10.0, -3.0), None]) == [0.0]


def test_lane_change_debounce():
    # 4-step excursion does not count; a 5-step one does
    assert mt.count_lane_changes([0] * 10 + [1] * 4 + [0] * 10) == 0
    assert mt.count_lane_changes([0] * 10 + [1] * 5 + [0] * 2) == 1
    # out and back, both held long enough: two changes
    assert mt.count_lane_changes([0] * 10 + [1] * 6 + [0] * 6) == 2
    assert mt.count_lane_changes([]) == 0
    assert mt.count_lane_changes([2] * 20) == 0


def test_trajectory_quantities_constant_accel():
    road = straight_roadway(1, 500.0)
    dt = mt.DT
    states = []
    v, x = 10.0, 0.0
    for _ in range(20):
        states.append(VehicleState(x=x, y=0.0, heading=0.0, speed=v))
        x += v * dt + 0.5 * 2.0 * dt * dt
        v += 2.0 * dt
    q = mt.trajectory_quantities(states, road)
    assert np.allclose(q["acceleration"], 2.0, atol=1e-9)
    assert np.allclose(q["jerk"], 0.0, atol=1e-6)
    assert np.allclose(q["turn_rate"], 0.0)
    assert not q["offroad"].any()
    assert (q["lane_index"] == 0).all()


def test_emergent_hard_brake_rate():
    road = straight_roadway(1, 500.0)
    dt = mt.DT
    def make(decel):
        states, v, x = [], 20.0, 0.0
        for _ in range(10):
            states.append(VehicleState(x=x, y=0.0, heading=0.0, speed=v))
            x += v * dt
            v += decel * dt
        return mt.trajectory_quantities(states, road)
    qs = [make(-3.5), make(-1.0)]
    rep = mt.emergent_from_quantities(qs, [False, True])
    assert rep.hard_brake_rate == 0.5
    assert rep.collision_rate == 0.5
    assert rep.lane_change_rate == 0.0


def _small_campaign(models, fixture_scene, fixture_roadway, seed=0, jobs=1):
    cfg = mt.CampaignConfig(scenes=4, repeats=2, jobs=jobs)
    return mt.run_campaign(models, fixture_scene, fixture_roadway,
                           SimConfig(), None, cfg, seed=seed)


def test_self_replay_scores_perfectly(fixture_scene, fixture_roadway):
    reports = _small_campaign({"replay": ReplayPolicy()},
                              fixture_scene, fixture_roadway)
    rep = reports["replay"]
    for var, by_h in rep.rwse.items():
        for h, v in by_h.items():
            assert v == 0.0, (var, h, v)
    for qty, v in rep.kl.items():
        assert abs(v) < 1e-12, (qty, v)


def test_campaign_deterministic_and_real_entry(fixture_scene, fixture_roadway):
    outs = []
    for _ in range(2):
        reports = _small_campaign(
            {"idm": IdmMobilPolicy(), "replay": ReplayPolicy()},
            fixture_scene, fixture_roadway, seed=3)
        outs.append(json.dumps({k: r.as_dict() for k, r in reports.items()},
                               sort_keys=True))
    assert outs[0] == outs[1]
    reports = json.loads(outs[0])
    assert "_real" in reports
    assert set(reports["idm"]["kl"]) == set(mt.KL_QUANTITIES)
    assert set(reports["idm"]["rwse"]) == set(mt.RWSE_VARIABLES)
    assert reports["idm"]["n_rollouts"] == 8


def test_write_reports_files(tmp_path, fixture_scene, fixture_roadway):
    reports = _small_campaign({"replay": ReplayPolicy()},
                              fixture_scene, fixture_roadway)
    mt.write_reports(reports, str(tmp_path))
    names = {p.name for p in tmp_path.iterdir()}
    assert {"evaluation.json", "kl_divergences.csv", "emergent_values.csv",
            "rwse_position.csv", "rwse_lane_offset.csv",
            "rwse_speed.csv"} <= names
    payload = json.loads((tmp_path / "evaluation.json").read_text())
    assert set(payload) == {"replay", "_real"}
