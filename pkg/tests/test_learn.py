import numpy as np
import pytest

from drivesim.learn import (Adam, GailConfig, NonFiniteGradient, TrpoConfig,
                            ValueBaseline, advantages, bc_train,
                            conjugate_gradient, disc_update,
                            discounted_returns, gail_train, surrogate_reward,
                            surrogate_rewards_batch, trpo_update)
from drivesim.nets import DiscriminatorNet, GruPolicyNet, MlpPolicyNet

FEATURE_DIM = 51


def test_discounted_returns_oracle():
    r = [1.0, 1.0, 1.0]
    out = discounted_returns(r, 0.5)
    assert np.allclose(out, [1 + 0.5 + 0.25, 1.5, 1.0])


def test_advantages_lambda_one_identity():
    """With lambda = 1 the advantage equals discounted return minus value."""
    rng = np.random.default_rng(0)
    r = rng.standard_normal(10)
    v = rng.standard_normal(10)
    adv, ret = advantages([r], [v], gamma=0.9, lam=1.0, normalize=False)
    assert np.allclose(adv[0], discounted_returns(r, 0.9) - v, atol=1e-10)
    assert np.allclose(ret[0], discounted_returns(r, 0.9))


def test_advantages_normalized():
    rng = np.random.default_rng(1)
    rs = [rng.standard_normal(8) for _ in range(4)]
    vs = [rng.standard_normal(8) for _ in range(4)]
    adv, _ = advantages(rs, vs, 0.95, 0.95, normalize=True)
    flat = np.concatenate(adv)
    assert abs(flat.mean()) < 1e-10 and abs(flat.std() - 1.0) < 1e-8


def test_conjugate_gradient_matches_direct():
    rng = np.random.default_rng(2)
    for _ in range(5):
        M = rng.standard_normal((20, 20))
        A = M @ M.T + 20 * np.eye(20)
        b = rng.standard_normal(20)
        x = conjugate_gradient(lambda v: A @ v, b, iters=60, tol=1e-24)
        direct = np.linalg.solve(A, b)
        assert np.linalg.norm(x - direct) / np.linalg.norm(direct) < 1e-8


def _forward_episode(policy, obs):
    if not policy.recurrent:
        mu, ln, _ = policy.forward_np(obs)
        return mu, ln
    mus, lns = [], []
    h = policy.initial_hidden()
    for o in obs:
        mu, ln, h = policy.forward_np(o, h)
        mus.append(mu[0])
        lns.append(ln[0])
    return np.array(mus), np.array(lns)


def _random_batch(policy, rng, n_eps=3, T=15):
    obs_eps = [rng.standard_normal((T, FEATURE_DIM)) for _ in range(n_eps)]
    act_eps, logp_eps = [], []
    for o in obs_eps:
        mu, ln = _forward_episode(policy, o)
        nu = np.exp(ln)
        a = mu + np.sqrt(nu) * rng.standard_normal(mu.shape)
        lp = np.sum(-0.5 * (a - mu) ** 2 / nu
                    - 0.5 * (np.log(2 * np.pi) + ln), axis=1)
        act_eps.append(a)
        logp_eps.append(lp)
    adv_eps = [rng.standard_normal(T) for _ in range(n_eps)]
    return obs_eps, act_eps, adv_eps, logp_eps


@pytest.mark.parametrize("arch", ["mlp", "gru"])
def test_trpo_respects_trust_region(arch):
    rng = np.random.default_rng(3)
    policy = MlpPolicyNet(seed=3) if arch == "mlp" else GruPolicyNet(seed=3)
    cfg = TrpoConfig(kl_step=0.01)
    batch = _random_batch(policy, rng, n_eps=2, T=10)
    diag = trpo_update(policy, *batch, cfg)
    if diag.accepted:
        assert diag.mean_kl <= 1.05 * cfg.kl_step
        assert diag.improvement >= 0.0


def test_trpo_rejection_leaves_params():
    rng = np.random.default_rng(4)
    policy = MlpPolicyNet(seed=4)
    theta0 = policy.params.get_flat()
    # adversarial: zero advantages, no possible improvement
    obs_eps, act_eps, _, logp_eps = _random_batch(policy, rng, 2, 8)
    adv_eps = [np.zeros(8), np.zeros(8)]
    diag = trpo_update(policy, obs_eps, act_eps, adv_eps, logp_eps, TrpoConfig())
    if not diag.accepted:
        assert np.array_equal(policy.params.get_flat(), theta0)


def test_adam_nonfinite_guard():
    opt = Adam(3)
    with pytest.raises(NonFiniteGradient):
        opt.step(np.zeros(3), np.array([np.nan, 0.0, 0.0]))


def test_value_baseline_fits():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((400, FEATURE_DIM))
    y = X[:, 0] * 2.0 + 1.0
    bl = ValueBaseline(seed=0, epochs=40, step_size=1e-2)
    bl.fit(X, y, rng)
    pred = bl.predict(X)
    assert np.mean((pred - y) ** 2) < 0.5


def test_surrogate_reward_spot_values():
    class FakeDisc:
        def __init__(self, d):
            self.d = d

        def forward_np(self, sa):
            return np.full((np.atleast_2d(sa).shape[0], 1), self.d)

    assert abs(surrogate_reward(FakeDisc(0.5), np.zeros(FEATURE_DIM),
                                np.zeros(2)) - np.log(2.0)) < 1e-9
    assert abs(surrogate_reward(FakeDisc(0.9), np.zeros(FEATURE_DIM),
                                np.zeros(2)) - 2.302585092994046) < 1e-9


def test_surrogate_rewards_batch_clipped():
    class FakeDisc:
        def forward_np(self, sa):
            return np.array([[0.999999999], [1e-9]])

    r = surrogate_rewards_batch(FakeDisc(), np.zeros((2, FEATURE_DIM)),
                                np.zeros((2, 2)), 0.0, 20.0)
    assert r[0] == 20.0 and r[1] >= 0.0


def test_disc_update_never_decreases_value():
    rng = np.random.default_rng(6)
    disc = DiscriminatorNet(seed=6)
    e = rng.standard_normal((300, FEATURE_DIM + 2)) + 0.5
    p = rng.standard_normal((300, FEATURE_DIM + 2)) - 0.5
    cfg = GailConfig(disc_epochs=4, disc_minibatch=64)
    v0, v1 = disc_update(disc, e, p, cfg, rng)
    assert v1 >= v0 - 1e-6


def test_disc_separates_separable_pairs():
    rng = np.random.default_rng(7)
    disc = DiscriminatorNet(seed=7)
    e = rng.standard_normal((400, FEATURE_DIM + 2)) + 3.0
    p = rng.standard_normal((400, FEATURE_DIM + 2)) - 3.0
    cfg = GailConfig(disc_epochs=20, disc_minibatch=128, disc_step_size=1e-2)
    disc_update(disc, e, p, cfg, rng)
    acc = (np.mean(disc.forward_np(e)[:, 0] > 0.5)
           + np.mean(disc.forward_np(p)[:, 0] < 0.5)) / 2
    assert acc > 0.95


@pytest.mark.parametrize("arch", ["mlp", "gru"])
def test_bc_train_monotone_nll(arch):
    rng = np.random.default_rng(8)
    net = MlpPolicyNet(seed=8) if arch == "mlp" else GruPolicyNet(seed=8)
    X = rng.standard_normal((120, FEATURE_DIM))
    A = np.stack([X[:, 0] * 0.3, X[:, 1] * 0.1], axis=1)
    if arch == "gru":
        seqs = [(X[i:i + 20], A[i:i + 20]) for i in range(0, 120, 20)]
        hist = bc_train(net, None, None, epochs=5, rng=rng, sequences=seqs)
    else:
        hist = bc_train(net, X, A, epochs=8, rng=rng, minibatch=32)
    train = [h[0] for h in hist]
    assert all(b <= a + 1e-12 for a, b in zip(train, train[1:]))
    assert train[-1] < train[0]  # actually learned something


def test_bc_train_recurrent_needs_sequences():
    with pytest.raises(ValueError):
        bc_train(GruPolicyNet(seed=0), None, None, epochs=1)


def test_bc_train_deterministic():
    X = np.random.default_rng(9).standard_normal((60, FEATURE_DIM))
    A = X[:, :2] * 0.2
    outs = []
    for _ in range(2):
        net = MlpPolicyNet(seed=9)
        hist = bc_train(net, X, A, epochs=3,
                        rng=np.random.default_rng(42), minibatch=16)
        outs.append((net.params.get_flat(), hist))
    assert np.array_equal(outs[0][0], outs[1][0])
    assert outs[0][1] == outs[1][1]


class _ToyRollout:
    def __init__(self, obs, actions, log_probs):
        self.observations = obs
        self.actions = actions
        self.log_probs = log_probs

    def __len__(self):
        return len(self.actions)


def _toy_sampler(env_rng_seed=0):
    def sampler(policy, n_episodes, rng):
        outs = []
        for _ in range(n_episodes):
            obs = rng.standard_normal((10, FEATURE_DIM))
            acts, lps = [], []
            mu, ln, _ = policy.forward_np(obs)
            nu = np.exp(ln)
            a = mu + np.sqrt(nu) * rng.standard_normal(mu.shape)
            lp = np.sum(-0.5 * (a - mu) ** 2 / nu
                        - 0.5 * (np.log(2 * np.pi) + ln), axis=1)
            outs.append(_ToyRollout(obs, a, lp))
        return outs
    return sampler


def test_gail_train_runs_and_is_deterministic():
    rng_e = np.random.default_rng(10)
    expert_sa = rng_e.standard_normal((300, FEATURE_DIM + 2))
    hists = []
    for _ in range(2):
        policy = MlpPolicyNet(seed=10)
        disc = DiscriminatorNet(seed=11)
        h = gail_train(_toy_sampler(), expert_sa, policy, disc,
                       gail_cfg=GailConfig(iterations=2, expert_batch=128),
                       trpo_cfg=TrpoConfig(batch_episodes=3),
                       rng=np.random.default_rng(12))
        hists.append((h.rows, policy.params.get_flat()))
    assert hists[0][0] == hists[1][0]
    assert np.array_equal(hists[0][1], hists[1][1])
    for row in hists[0][0]:
        assert set(row) == {"iter", "V", "mean_reward", "mean_kl",
                            "mean_len", "accepted"}
