"""Policy optimization: advantage estimation, TRPO natural-gradient updates,
GAIL discriminator training and surrogate reward, and behavioral cloning."""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ParamVector, Var
from .nets import ACTION_DIM, FEATURE_DIM

LOG_2PI = np.log(2.0 * np.pi)


class NonFiniteGradient(Exception):
    pass


@dataclass(frozen=True)
class TrpoConfig:
    gamma: float = 0.95
    lam: float = 0.95
    kl_step: float = 0.01
    cg_iters: int = 10
    cg_damping: float = 0.1
    backtrack_ratio: float = 0.5
    backtrack_steps: int = 10
    batch_episodes: int = 50


@dataclass(frozen=True)
class GailConfig:
    iterations: int = 50
    disc_step_size: float = 1e-3
    disc_epochs: int = 3
    disc_minibatch: int = 256
    expert_batch: int = 1024
    reward_min: float = 0.0
    reward_max: float = 20.0


# -- returns and advantages ----------------------------------------------

def discounted_returns(rewards, gamma):
    g = 0.0
    out = np.zeros(len(rewards))
    for t in range(len(rewards) - 1, -1, -1):
        g = rewards[t] + gamma * g
        out[t] = g
    return out


def advantages(reward_lists, value_lists, gamma, lam, normalize=True):
    """Discounted returns and lambda-smoothed temporal-difference advantages.

    reward_lists / value_lists are per-episode arrays; value beyond the last
    step is taken as 0.  With normalize=True the concatenated advantages are
    scaled to zero mean and unit variance.
    """
    adv_all, ret_all = [], []
    for r, v in zip(reward_lists, value_lists):
        r = np.asarray(r, dtype=float)
        v = np.asarray(v, dtype=float)
        v_next = np.concatenate([v[1:], [0.0]])
        deltas = r + gamma * v_next - v
        a = np.zeros(len(r))
        acc = 0.0
        for t in range(len(r) - 1, -1, -1):
            acc = deltas[t] + gamma * lam * acc
            a[t] = acc
        adv_all.append(a)
        ret_all.append(discounted_returns(r, gamma))
    if normalize:
        flat = np.concatenate(adv_all) if adv_all else np.zeros(0)
        mu = flat.mean() if flat.size else 0.0
        sd = max(flat.std(), 1e-8) if flat.size else 1.0
        adv_all = [(a - mu) / sd for a in adv_all]
    return adv_all, ret_all


# -- taped Gaussian quantities -------------------------------------------

def _policy_outputs(policy, obs_episodes):
    """Taped (mu, log_nu) Vars over all steps of a batch of episodes."""
    if policy.recurrent:
        return _gru_batch_outputs(policy, obs_episodes)
    X = np.concatenate([np.asarray(ep) for ep in obs_episodes], axis=0)
    return policy.forward_tape(X)


def _gru_batch_outputs(policy, obs_episodes):
    """Unroll every episode inside a single tape so one backward covers all."""
    from .nets import LOG_NU_MAX, LOG_NU_MIN, gru_step
    p = policy._param_vars()
    mus, lns = [], []
    for ep in obs_episodes:
        ep = np.asarray(ep, dtype=float)
        h = Var(np.atleast_2d(policy.initial_hidden()))
        outs = []
        for t in range(ep.shape[0]):
            x = policy._ff_tape(p, ep[t:t + 1])
            h = gru_step(p["Wg"], p["Ug"], p["bg"],
                         p["Wgz"], p["Ugz"], p["bgz"],
                         p["Wgr"], p["Ugr"], p["bgr"], x, h)
            outs.append(h @ p["Wout"] + p["bout"])
        out = ad.concat(outs, axis=0)
        mus.append(out[:, :ACTION_DIM])
        lns.append(out[:, ACTION_DIM:])
    mu = ad.concat(mus, axis=0)
    log_nu = ad.clip(ad.concat(lns, axis=0), LOG_NU_MIN, LOG_NU_MAX)
    return mu, log_nu


def _logprob_var(mu, log_nu, actions):
    d = mu - actions
    nu = ad.exp(log_nu)
    per_dim = -0.5 * ad.square(d) / nu - 0.5 * log_nu - 0.5 * LOG_2PI
    return ad.vsum(per_dim, axis=1)


def _mean_kl_var(mu, log_nu, mu_old, log_nu_old):
    """Mean KL(old || new) between diagonal Gaussians; old side is constant."""
    ratio = ad.exp(-log_nu) * np.exp(log_nu_old)
    quad = ad.square(mu - mu_old) * ad.exp(-log_nu)
    per_dim = 0.5 * (ratio + quad - 1.0 + (log_nu - log_nu_old))
    return ad.vmean(ad.vsum(per_dim, axis=1))


def conjugate_gradient(matvec, b, iters=10, tol=1e-10):
    """Solve A x = b for SPD A given only matrix-vector products."""
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = r @ r
    for _ in range(iters):
        if rs < tol:
            break
        Ap = matvec(p)
        alpha = rs / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rs_new = r @ r
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


@dataclass
class TrpoDiagnostics:
    accepted: bool
    surrogate_before: float
    surrogate_after: float
    mean_kl: float
    backtracks: int
    grad_norm: float

    @property
    def improvement(self):
        return self.surrogate_after - self.surrogate_before


def trpo_update(policy, obs_episodes, act_episodes, adv_episodes, logp_episodes,
                cfg=TrpoConfig()):
    """One natural-gradient policy update under a KL trust region.

    obs/act/adv/logp are per-episode lists recorded under the current
    parameters.  Returns diagnostics; on rejection or non-finite gradients
    the parameters are left untouched.
    """
    actions = np.concatenate([np.asarray(a, float).reshape(-1, ACTION_DIM)
                              for a in act_episodes], axis=0)
    adv = np.concatenate([np.asarray(a, float) for a in adv_episodes])
    logp_old = np.concatenate([np.asarray(l, float) for l in logp_episodes])

    theta0 = policy.params.get_flat()

    def surrogate_and_kl(theta, ref):
        policy.params.set_flat(theta)
        mu, log_nu = _policy_outputs(policy, obs_episodes)
        logp = _logprob_var(mu, log_nu, actions)
        sur = ad.vmean(ad.exp(logp - logp_old) * adv)
        kl = _mean_kl_var(mu, log_nu, ref[0], ref[1])
        return sur, kl, (mu.data.copy(), log_nu.data.copy())

    # reference (old) distribution and gradient at theta0
    policy.params.set_flat(theta0)
    mu0v, ln0v = _policy_outputs(policy, obs_episodes)
    mu0, ln0 = mu0v.data.copy(), ln0v.data.copy()
    logp = _logprob_var(mu0v, ln0v, actions)
    sur0_var = ad.vmean(ad.exp(logp - logp_old) * adv)
    sur0 = float(sur0_var.data)
    g = policy.backward(sur0_var).copy()
    if not np.all(np.isfinite(g)):
        policy.params.set_flat(theta0)
        raise NonFiniteGradient("policy gradient contains non-finite values")
    gnorm = float(np.linalg.norm(g))
    if gnorm < 1e-12:
        policy.params.set_flat(theta0)
        return TrpoDiagnostics(False, sur0, sur0, 0.0, 0, gnorm)

    def kl_grad(theta):
        policy.params.set_flat(theta)
        mu, log_nu = _policy_outputs(policy, obs_episodes)
        kl = _mean_kl_var(mu, log_nu, mu0, ln0)
        return policy.backward(kl).copy()

    def fvp(v):
        eps = 1e-5 / max(np.linalg.norm(v), 1e-12)
        gp = kl_grad(theta0 + eps * v)
        gm = kl_grad(theta0 - eps * v)
        return (gp - gm) / (2.0 * eps) + cfg.cg_damping * v

    x = conjugate_gradient(fvp, g, iters=cfg.cg_iters)
    xAx = float(x @ fvp(x))
    if xAx <= 0.0 or not np.isfinite(xAx):
        policy.params.set_flat(theta0)
        return TrpoDiagnostics(False, sur0, sur0, 0.0, 0, gnorm)
    full_step = np.sqrt(2.0 * cfg.kl_step / xAx) * x

    for j in range(cfg.backtrack_steps):
        theta = theta0 + (cfg.backtrack_ratio ** j) * full_step
        sur, kl, _ = surrogate_and_kl(theta, (mu0, ln0))
        sur_val, kl_val = float(sur.data), float(kl.data)
        if np.isfinite(sur_val) and np.isfinite(kl_val) \
                and sur_val > sur0 and kl_val <= cfg.kl_step:
            policy.params.set_flat(theta)
            return TrpoDiagnostics(True, sur0, sur_val, kl_val, j, gnorm)
    policy.params.set_flat(theta0)
    return TrpoDiagnostics(False, sur0, sur0, 0.0, cfg.backtrack_steps, gnorm)


# -- adaptive-moment ascent/descent --------------------------------------

class Adam:
    def __init__(self, n_params, step_size=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.step_size = step_size
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, theta, grad, maximize=False):
        g = grad if not maximize else -grad
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        new = theta - self.step_size * mhat / (np.sqrt(vhat) + self.eps)
        if not np.all(np.isfinite(new)):
            raise NonFiniteGradient("optimizer produced non-finite parameters")
        return new


# -- value baseline -------------------------------------------------------

class ValueBaseline:
    """Small dense value network (51-64-64-1), refit each iteration."""

    def __init__(self, seed=0, hidden=(64, 64), step_size=1e-2, epochs=20,
                 minibatch=512):
        rng = np.random.default_rng(seed)
        self.params = ParamVector()
        dims = (FEATURE_DIM,) + hidden + (1,)
        self.n_layers = len(dims) - 1
        for i in range(self.n_layers):
            bound = 1.0 / np.sqrt(dims[i])
            self.params.add(f"W{i}", rng.uniform(-bound, bound, (dims[i], dims[i + 1])))
            self.params.add(f"b{i}", np.zeros(dims[i + 1]))
        self.step_size = step_size
        self.epochs = epochs
        self.minibatch = minibatch

    def _forward_tape(self, X):
        self._tape_vars = {n: Var(self.params.get(n)) for n in self.params.slices}
        h = Var(np.atleast_2d(X))
        for i in range(self.n_layers):
            h = h @ self._tape_vars[f"W{i}"] + self._tape_vars[f"b{i}"]
            if i < self.n_layers - 1:
                h = ad.elu(h)
        return h

    def predict(self, X):
        h = np.atleast_2d(np.asarray(X, dtype=float))
        for i in range(self.n_layers):
            h = h @ self.params.get(f"W{i}") + self.params.get(f"b{i}")
            if i < self.n_layers - 1:
                h = np.where(h > 0, h, np.expm1(np.minimum(h, 0.0)))
        return h[:, 0]

    def fit(self, X, targets, rng):
        X = np.asarray(X, dtype=float)
        targets = np.asarray(targets, dtype=float)
        opt = Adam(self.params.size, step_size=self.step_size)
        n = len(X)
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.minibatch):
                idx = order[start:start + self.minibatch]
                pred = self._forward_tape(X[idx])
                err = pred[:, 0] - targets[idx]
                loss = ad.vmean(ad.square(err))
                ad.backward(loss)
                self.params.store_grads(self._tape_vars)
                self.params.set_flat(opt.step(self.params.get_flat(),
                                              self.params.grad_flat))


# -- GAIL discriminator ---------------------------------------------------

def _disc_value(disc, expert_sa, policy_sa):
    de = disc.forward_np(expert_sa)[:, 0]
    dp = disc.forward_np(policy_sa)[:, 0]
    return float(np.mean(np.log(de)) + np.mean(np.log(1.0 - dp)))


def disc_update(disc, expert_sa, policy_sa, cfg, rng):
    """Ascend the discriminator objective V = E_exp[log D] + E_pol[log(1-D)].

    Minibatch adaptive-moment ascent for cfg.disc_epochs; an epoch that moves
    V down on the training batch is reverted and retried at half step size,
    so V never decreases over a full update (within 1e-6).
    Returns (V before, V after).
    """
    expert_sa = np.asarray(expert_sa, dtype=float)
    policy_sa = np.asarray(policy_sa, dtype=float)
    v_start = _disc_value(disc, expert_sa, policy_sa)
    step = cfg.disc_step_size
    v_before_epoch = v_start
    for _ in range(cfg.disc_epochs):
        snapshot = disc.params.get_flat()
        opt = Adam(disc.params.size, step_size=step)
        eo = rng.permutation(len(expert_sa))
        po = rng.permutation(len(policy_sa))
        nb = max(1, min(len(expert_sa), len(policy_sa)) // cfg.disc_minibatch)
        for b in range(nb):
            ei = eo[b * cfg.disc_minibatch:(b + 1) * cfg.disc_minibatch]
            pi = po[b * cfg.disc_minibatch:(b + 1) * cfg.disc_minibatch]
            de = disc.forward_tape(expert_sa[ei])
            v1 = ad.vmean(ad.log(de))
            disc.backward(v1)
            g = disc.params.grad_flat.copy()
            dp = disc.forward_tape(policy_sa[pi])
            v2 = ad.vmean(ad.log(1.0 - dp))
            disc.backward(v2)
            g += disc.params.grad_flat
            disc.params.set_flat(opt.step(disc.params.get_flat(), g, maximize=True))
        v_after_epoch = _disc_value(disc, expert_sa, policy_sa)
        if v_after_epoch < v_before_epoch - 1e-6:
            disc.params.set_flat(snapshot)
            step *= 0.5
        else:
            v_before_epoch = v_after_epoch
    return v_start, _disc_value(disc, expert_sa, policy_sa)


def surrogate_reward(disc, obs, action):
    """GAIL surrogate reward -log(1 - D(s, a)); D is clamped inside the net."""
    sa = np.concatenate([np.asarray(obs, float), np.asarray(action, float)])
    d = float(disc.forward_np(sa)[0, 0])
    return -np.log(1.0 - d)


def surrogate_rewards_batch(disc, obs, actions, reward_min=0.0, reward_max=20.0):
    sa = np.concatenate([np.asarray(obs, float), np.asarray(actions, float)], axis=1)
    d = disc.forward_np(sa)[:, 0]
    return np.clip(-np.log(1.0 - d), reward_min, reward_max)


# -- behavioral cloning ---------------------------------------------------

def bc_train(policy, expert_obs, expert_actions, epochs=50, step_size=1e-3,
             rng=None, minibatch=512, heldout_frac=0.1, sequences=None):
    """Maximum-likelihood fit of the policy to expert actions.

    Feedforward policies take flat (N, 51) / (N, 2) arrays; recurrent
    policies instead take `sequences`, a list of (obs_seq, act_seq) pairs
    unrolled contiguously.  The training NLL schedule halves the step size
    and reverts the epoch whenever the NLL regresses, so the reported train
    curve is non-increasing.  Returns a list of (train_nll, heldout_nll).
    """
    rng = np.random.default_rng(0) if rng is None else rng

    if policy.recurrent:
        if sequences is None:
            raise ValueError("recurrent BC needs contiguous (obs, act) sequences")
        items = list(sequences)
        n_hold = max(1, int(len(items) * heldout_frac)) if len(items) > 1 else 0
        order = rng.permutation(len(items))
        hold = [items[i] for i in order[:n_hold]]
        train = [items[i] for i in order[n_hold:]]

        def nll_var(batch):
            obs_eps = [b[0] for b in batch]
            acts = np.concatenate([np.asarray(b[1], float) for b in batch], axis=0)
            mu, log_nu = _gru_batch_outputs(policy, obs_eps)
            return -ad.vmean(_logprob_var(mu, log_nu, acts))

        def nll_value(batch):
            from .nets import gaussian_logprob
            total, count = 0.0, 0
            for ob, ac in batch:
                h = policy.initial_hidden()
                for t in range(len(ob)):
                    mu, ln, h = policy.forward_np(ob[t], h)
                    total -= gaussian_logprob(np.asarray(ac[t], float), mu[0], ln[0])
                    count += 1
            return total / max(count, 1)

        seq_minibatch = 8
    else:
        X = np.asarray(expert_obs, dtype=float)
        A = np.asarray(expert_actions, dtype=float)
        n_hold = int(len(X) * heldout_frac)
        order = rng.permutation(len(X))
        hi, ti = order[:n_hold], order[n_hold:]
        Xh, Ah, Xt, At = X[hi], A[hi], X[ti], A[ti]

        def nll_var_flat(xb, ab):
            mu, log_nu = policy.forward_tape(xb)
            return -ad.vmean(_logprob_var(mu, log_nu, ab))

        def nll_value_flat(x, a):
            mu, ln, _ = policy.forward_np(x)
            nu = np.exp(ln)
            lp = np.sum(-0.5 * (a - mu) ** 2 / nu - 0.5 * (LOG_2PI + ln), axis=1)
            return float(-np.mean(lp))

    opt = Adam(policy.params.size, step_size=step_size)
    lr = step_size
    history = []
    prev_train = np.inf
    for _ in range(epochs):
        snapshot = policy.params.get_flat()
        opt_state = (opt.m.copy(), opt.v.copy(), opt.t)
        if policy.recurrent:
            perm = rng.permutation(len(train))
            for start in range(0, len(train), seq_minibatch):
                batch = [train[i] for i in perm[start:start + seq_minibatch]]
                if not batch:
                    continue
                loss = nll_var(batch)
                policy.backward(loss)
                policy.params.set_flat(opt.step(policy.params.get_flat(),
                                                policy.params.grad_flat))
            train_nll = nll_value(train)
            hold_nll = nll_value(hold) if hold else float("nan")
        else:
            perm = rng.permutation(len(Xt))
            for start in range(0, len(Xt), minibatch):
                idx = perm[start:start + minibatch]
                loss = nll_var_flat(Xt[idx], At[idx])
                policy.backward(loss)
                policy.params.set_flat(opt.step(policy.params.get_flat(),
                                                policy.params.grad_flat))
            train_nll = nll_value_flat(Xt, At)
            hold_nll = nll_value_flat(Xh, Ah) if len(Xh) else float("nan")
        if train_nll > prev_train + 1e-12:
            policy.params.set_flat(snapshot)
            opt.m, opt.v, opt.t = opt_state
            lr *= 0.5
            opt.step_size = lr
            train_nll = prev_train
            hold_nll = history[-1][1] if history else float("nan")
        prev_train = train_nll
        history.append((train_nll, hold_nll))
    return history


# -- GAIL outer loop ------------------------------------------------------

@dataclass
class GailHistory:
    rows: list = field(default_factory=list)  # dicts per iteration

    def append(self, **kw):
        self.rows.append(kw)


def gail_train(sampler, expert_sa, policy, disc, gail_cfg=GailConfig(),
               trpo_cfg=TrpoConfig(), rng=None, callback=None):
    """Alternate TRPO policy updates against discriminator updates.

    sampler(policy, n_episodes, rng) must return a list of rollouts exposing
    .observations (T, 51), .actions (T, 2), .log_probs (T,).  expert_sa is
    the precomputed (N, 53) expert state-action matrix.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    expert_sa = np.asarray(expert_sa, dtype=float)
    baseline = ValueBaseline(seed=int(rng.integers(2**31)))
    history = GailHistory()
    for it in range(gail_cfg.iterations):
        rollouts = sampler(policy, trpo_cfg.batch_episodes, rng)
        obs_eps = [np.asarray(r.observations, float) for r in rollouts]
        act_eps = [np.asarray(r.actions, float) for r in rollouts]
        logp_eps = [np.asarray(r.log_probs, float) for r in rollouts]

        rew_eps = [surrogate_rewards_batch(disc, o, a,
                                           gail_cfg.reward_min, gail_cfg.reward_max)
                   for o, a in zip(obs_eps, act_eps)]

        all_obs = np.concatenate(obs_eps, axis=0)
        _, ret_eps = advantages(rew_eps, [np.zeros(len(r)) for r in rew_eps],
                                trpo_cfg.gamma, trpo_cfg.lam, normalize=False)
        baseline.fit(all_obs, np.concatenate(ret_eps), rng)
        val_eps = [baseline.predict(o) for o in obs_eps]
        adv_eps, _ = advantages(rew_eps, val_eps, trpo_cfg.gamma, trpo_cfg.lam)

        diag = trpo_update(policy, obs_eps, act_eps, adv_eps, logp_eps, trpo_cfg)

        policy_sa = np.concatenate(
            [np.concatenate([o, a], axis=1) for o, a in zip(obs_eps, act_eps)], axis=0)
        n_exp = min(gail_cfg.expert_batch, len(expert_sa))
        exp_idx = rng.choice(len(expert_sa), size=n_exp, replace=False)
        n_pol = min(gail_cfg.expert_batch, len(policy_sa))
        pol_idx = rng.choice(len(policy_sa), size=n_pol, replace=False)
        v_before, v_after = disc_update(disc, expert_sa[exp_idx],
                                        policy_sa[pol_idx], gail_cfg, rng)

        mean_len = float(np.mean([len(r) for r in rew_eps]))
        mean_rew = float(np.mean(np.concatenate(rew_eps)))
        history.append(iter=it, V=v_after, mean_reward=mean_rew,
                       mean_kl=diag.mean_kl, mean_len=mean_len,
                       accepted=diag.accepted)
        if callback is not None:
            callback(it, history.rows[-1])
    return history
