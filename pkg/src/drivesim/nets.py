"""Policy and discriminator networks built on the autodiff engine.

Architectures:
  * MLP policy: dense 51-256-128-64-48-32-4 with ELU between layers.
  * GRU policy: dense 51-256-128-64-48-32 with ELU, a 32-unit GRU, then a
    linear map to 4 outputs.  Gate convention: h' = (1-z)*h + z*htilde.
  * Discriminator: (51 features + 2 actions) -> 128 -> 128 -> sigmoid.

Outputs 4 = (mu accel, mu turn-rate, log-variance accel, log-variance
turn-rate); log-variances are clamped to [-10, 4].
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamVector, ShapeMismatch, Var

FEATURE_DIM = 51
ACTION_DIM = 2
LOG_NU_MIN, LOG_NU_MAX = -10.0, 4.0

POLICY_HIDDEN = (256, 128, 64, 48, 32)
GRU_UNITS = 32
DISC_HIDDEN = (128, 128)
DISC_CLAMP = 1e-6


@dataclass(frozen=True)
class GaussianActionDist:
    mu: np.ndarray      # (2,)
    log_nu: np.ndarray  # (2,), clamped


def _dense_init(rng, n_in, n_out, scale=1.0):
    bound = scale / np.sqrt(n_in)
    return rng.uniform(-bound, bound, size=(n_in, n_out))


def _orthogonal(rng, n):
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))


def _elu_np(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _sigmoid_np(x):
    return 1.0 / (1.0 + np.exp(-x))


class _Net:
    """Shared plumbing: named parameters, taped forward bookkeeping."""

    def __init__(self):
        self.params = ParamVector()
        self._tape_vars = None
        self._loss = None

    def _param_vars(self):
        self._tape_vars = {name: Var(self.params.get(name))
                           for name in self.params.slices}
        return self._tape_vars

    def backward(self, loss):
        """Reverse pass; leaves gradients in params.grad_flat.

        Raises GraphReuse when called twice without a fresh forward pass.
        """
        ad.backward(loss)
        self.params.store_grads(self._tape_vars)
        return self.params.grad_flat


def gru_step(W, U, b, Wz, Uz, bz, Wr, Ur, br, x, h):
    """One GRU step on Vars; x (B, n_in), h (B, n_hidden)."""
    if x.shape[-1] != W.shape[0] or h.shape[-1] != U.shape[0]:
        raise ShapeMismatch(f"gru_step got x{x.shape}, h{h.shape}")
    z = ad.sigmoid(x @ Wz + h @ Uz + bz)
    r = ad.sigmoid(x @ Wr + h @ Ur + br)
    htilde = ad.tanh(x @ W + (r * h) @ U + b)
    return (1.0 - z) * h + z * htilde


class MlpPolicyNet(_Net):
    kind = "mlp_policy"

    def __init__(self, seed=0):
        super().__init__()
        rng = np.random.default_rng(seed)
        dims = (FEATURE_DIM,) + POLICY_HIDDEN + (2 * ACTION_DIM,)
        self.n_layers = len(dims) - 1
        for i in range(self.n_layers):
            scale = 0.01 if i == self.n_layers - 1 else 1.0
            self.params.add(f"W{i}", _dense_init(rng, dims[i], dims[i + 1], scale))
            bias = np.zeros(dims[i + 1])
            if i == self.n_layers - 1:
                bias[ACTION_DIM:] = -1.0  # gentle initial action variance
            self.params.add(f"b{i}", bias)

    @property
    def recurrent(self):
        return False

    def forward_tape(self, X):
        """Taped forward on a (B, 51) batch; returns (mu, log_nu) Vars."""
        if X.shape[-1] != FEATURE_DIM:
            raise ShapeMismatch(f"expected {FEATURE_DIM} features")
        p = self._param_vars()
        h = Var(np.atleast_2d(X))
        for i in range(self.n_layers):
            h = h @ p[f"W{i}"] + p[f"b{i}"]
            if i < self.n_layers - 1:
                h = ad.elu(h)
        mu = h[:, :ACTION_DIM]
        log_nu = ad.clip(h[:, ACTION_DIM:], LOG_NU_MIN, LOG_NU_MAX)
        return mu, log_nu

    def forward_np(self, x, hidden=None):
        """Fast graph-free forward for rollouts; ignores hidden."""
        h = np.atleast_2d(x)
        for i in range(self.n_layers):
            h = h @ self.params.get(f"W{i}") + self.params.get(f"b{i}")
            if i < self.n_layers - 1:
                h = _elu_np(h)
        mu = h[..., :ACTION_DIM]
        log_nu = np.clip(h[..., ACTION_DIM:], LOG_NU_MIN, LOG_NU_MAX)
        return mu, log_nu, None

    def initial_hidden(self):
        return None


class GruPolicyNet(_Net):
    kind = "gru_policy"

    def __init__(self, seed=0):
        super().__init__()
        rng = np.random.default_rng(seed)
        dims = (FEATURE_DIM,) + POLICY_HIDDEN
        self.n_ff = len(dims) - 1
        for i in range(self.n_ff):
            self.params.add(f"W{i}", _dense_init(rng, dims[i], dims[i + 1]))
            self.params.add(f"b{i}", np.zeros(dims[i + 1]))
        n = GRU_UNITS
        for gate in ("", "z", "r"):
            self.params.add(f"Wg{gate}", _dense_init(rng, dims[-1], n))
            self.params.add(f"Ug{gate}", _orthogonal(rng, n))
            self.params.add(f"bg{gate}", np.zeros(n))
        self.params.add("Wout", _dense_init(rng, n, 2 * ACTION_DIM, 0.01))
        bias = np.zeros(2 * ACTION_DIM)
        bias[ACTION_DIM:] = -1.0
        self.params.add("bout", bias)

    @property
    def recurrent(self):
        return True

    def initial_hidden(self):
        return np.zeros(GRU_UNITS)

    def _ff_tape(self, p, X):
        h = Var(np.atleast_2d(X))
        for i in range(self.n_ff):
            h = ad.elu(h @ p[f"W{i}"] + p[f"b{i}"])
        return h

    def forward_tape_sequence(self, X, h0=None):
        """Taped unroll over a (T, 51) sequence; returns (mu, log_nu) Vars of
        shape (T, 2) with BPTT through the whole sequence."""
        p = self._param_vars()
        h = Var(np.atleast_2d(self.initial_hidden() if h0 is None else h0))
        outs = []
        for t in range(X.shape[0]):
            x = self._ff_tape(p, X[t:t + 1])
            h = gru_step(p["Wg"], p["Ug"], p["bg"],
                         p["Wgz"], p["Ugz"], p["bgz"],
                         p["Wgr"], p["Ugr"], p["bgr"], x, h)
            outs.append(h @ p["Wout"] + p["bout"])
        out = ad.concat(outs, axis=0)
        mu = out[:, :ACTION_DIM]
        log_nu = ad.clip(out[:, ACTION_DIM:], LOG_NU_MIN, LOG_NU_MAX)
        return mu, log_nu

    def forward_np(self, x, hidden):
        """Single-step graph-free forward; returns (mu, log_nu, next hidden)."""
        h = np.atleast_2d(x)
        for i in range(self.n_ff):
            h = _elu_np(h @ self.params.get(f"W{i}") + self.params.get(f"b{i}"))
        hp = np.atleast_2d(hidden)
        g = self.params.get
        z = _sigmoid_np(h @ g("Wgz") + hp @ g("Ugz") + g("bgz"))
        r = _sigmoid_np(h @ g("Wgr") + hp @ g("Ugr") + g("bgr"))
        htilde = np.tanh(h @ g("Wg") + (r * hp) @ g("Ug") + g("bg"))
        hnew = (1.0 - z) * hp + z * htilde
        out = hnew @ g("Wout") + g("bout")
        mu = out[..., :ACTION_DIM]
        log_nu = np.clip(out[..., ACTION_DIM:], LOG_NU_MIN, LOG_NU_MAX)
        return mu, log_nu, hnew[0]


def policy_forward(net, obs, hidden=None):
    """Single-observation forward; returns (GaussianActionDist, next hidden)."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (FEATURE_DIM,):
        raise ShapeMismatch(f"expected a {FEATURE_DIM}-vector")
    mu, log_nu, h = net.forward_np(obs, hidden)
    return GaussianActionDist(mu=mu[0], log_nu=log_nu[0]), h


def sample_and_logprob(dist, rng):
    """Draw an action from the Gaussian head and return its log-density."""
    nu = np.exp(dist.log_nu)
    a = dist.mu + np.sqrt(nu) * rng.standard_normal(ACTION_DIM)
    return a, gaussian_logprob(a, dist.mu, dist.log_nu)


def gaussian_logprob(a, mu, log_nu):
    nu = np.exp(log_nu)
    return float(np.sum(-0.5 * (a - mu) ** 2 / nu - 0.5 * (np.log(2.0 * np.pi) + log_nu)))


class DiscriminatorNet(_Net):
    kind = "discriminator"

    def __init__(self, seed=0):
        super().__init__()
        rng = np.random.default_rng(seed)
        dims = (FEATURE_DIM + ACTION_DIM,) + DISC_HIDDEN + (1,)
        self.n_layers = len(dims) - 1
        for i in range(self.n_layers):
            self.params.add(f"W{i}", _dense_init(rng, dims[i], dims[i + 1]))
            self.params.add(f"b{i}", np.zeros(dims[i + 1]))

    def forward_tape(self, SA):
        """Taped forward on (B, 53) state-action pairs; returns clamped D."""
        if SA.shape[-1] != FEATURE_DIM + ACTION_DIM:
            raise ShapeMismatch(f"expected {FEATURE_DIM + ACTION_DIM} inputs")
        p = self._param_vars()
        h = Var(np.atleast_2d(SA))
        for i in range(self.n_layers):
            h = h @ p[f"W{i}"] + p[f"b{i}"]
            if i < self.n_layers - 1:
                h = ad.elu(h)
        return ad.clip(ad.sigmoid(h), DISC_CLAMP, 1.0 - DISC_CLAMP)

    def forward_np(self, sa):
        h = np.atleast_2d(sa)
        for i in range(self.n_layers):
            h = h @ self.params.get(f"W{i}") + self.params.get(f"b{i}")
            if i < self.n_layers - 1:
                h = _elu_np(h)
        return np.clip(_sigmoid_np(h), DISC_CLAMP, 1.0 - DISC_CLAMP)


def disc_forward(disc, obs, action):
    """Discriminator output D in (0, 1) for one state-action pair."""
    obs = np.asarray(obs, dtype=np.float64)
    action = np.asarray(action, dtype=np.float64)
    if obs.shape != (FEATURE_DIM,) or action.shape != (ACTION_DIM,):
        raise ShapeMismatch("expected 51-vector observation and 2-vector action")
    return float(disc.forward_np(np.concatenate([obs, action]))[0, 0])
