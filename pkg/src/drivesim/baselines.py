"""Static Gaussian and mixture-regression baseline models."""

from dataclasses import dataclass, field

import numpy as np

ACTION_DIM = 2


class TooFewSamples(Exception):
    pass


class DegenerateComponent(Exception):
    pass


class SingularBlock(Exception):
    pass


@dataclass
class StaticGaussian:
    """Unchanging Gaussian action distribution N(a | mu, sigma)."""
    mu: np.ndarray
    sigma: np.ndarray

    def sample(self, rng):
        return rng.multivariate_normal(self.mu, self.sigma)


def fit_static_gaussian(actions, ridge=1e-9):
    """Maximum-likelihood fit: sample mean and MLE covariance (divisor N)."""
    A = np.asarray(actions, dtype=float)
    if A.ndim != 2 or len(A) < 2:
        raise TooFewSamples("need at least 2 actions")
    mu = A.mean(axis=0)
    centered = A - mu
    sigma = centered.T @ centered / len(A) + ridge * np.eye(A.shape[1])
    return StaticGaussian(mu=mu, sigma=sigma)


def _log_gauss(X, mean, cov):
    d = X.shape[1]
    L = np.linalg.cholesky(cov)
    diff = X - mean
    sol = np.linalg.solve(L, diff.T)
    return (-0.5 * np.sum(sol**2, axis=0)
            - np.sum(np.log(np.diag(L)))
            - 0.5 * d * np.log(2.0 * np.pi))


def _logsumexp(a, axis=None):
    m = np.max(a, axis=axis, keepdims=True)
    return (m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))).squeeze(axis)


@dataclass
class Gmm:
    weights: np.ndarray   # (K,), sums to 1
    means: np.ndarray     # (K, D)
    covs: np.ndarray      # (K, D, D), positive definite
    loglik_history: list = field(default_factory=list)

    @property
    def n_components(self):
        return len(self.weights)

    def component_logpdfs(self, X):
        return np.stack([_log_gauss(X, self.means[k], self.covs[k])
                         for k in range(self.n_components)], axis=1)

    def loglik(self, X):
        lp = self.component_logpdfs(X) + np.log(self.weights)
        return float(np.sum(_logsumexp(lp, axis=1)))


def _kmeanspp_seeds(X, K, rng):
    idx = [rng.integers(len(X))]
    for _ in range(1, K):
        d2 = np.min([np.sum((X - X[i]) ** 2, axis=1) for i in idx], axis=0)
        probs = d2 / d2.sum() if d2.sum() > 0 else None
        idx.append(rng.choice(len(X), p=probs))
    return X[np.array(idx)]


def em_fit(X, K, iters=100, seed=0, tol=1e-7, ridge=1e-6, n_init=3):
    """EM for a K-component full-covariance Gaussian mixture.

    Runs n_init independently seeded fits and keeps the one with the best
    final log-likelihood, which guards against single-start local optima.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if n <= K * d:
        raise TooFewSamples(f"need more than K*dim = {K * d} samples")
    best = None
    for child in np.random.SeedSequence(seed).spawn(max(1, n_init)):
        gmm = _em_once(X, K, iters, np.random.default_rng(child), tol, ridge)
        if best is None or gmm.loglik_history[-1] > best.loglik_history[-1]:
            best = gmm
    return best


def _em_once(X, K, iters, rng, tol, ridge):
    """One EM run: k-means++-style mean seeding; covariances
    ridge-regularized; stops when the log-likelihood improves by less than
    tol.  A component whose weight collapses below 1e-8 is re-seeded once,
    then raises DegenerateComponent.
    """
    n, d = X.shape
    means = _kmeanspp_seeds(X, K, rng)
    covs = np.tile(np.cov(X.T, bias=True).reshape(d, d) + ridge * np.eye(d), (K, 1, 1))
    weights = np.full(K, 1.0 / K)
    gmm = Gmm(weights=weights, means=means, covs=covs)

    reseeded = set()
    prev_ll = -np.inf
    for _ in range(iters):
        # E step
        lp = gmm.component_logpdfs(X) + np.log(gmm.weights)
        norm = _logsumexp(lp, axis=1)
        resp = np.exp(lp - norm[:, None])
        ll = float(np.sum(norm))
        gmm.loglik_history.append(ll)
        if ll - prev_ll < tol and np.isfinite(prev_ll):
            break
        prev_ll = ll
        # M step
        nk = resp.sum(axis=0)
        for k in range(K):
            if nk[k] / n < 1e-8:
                if k in reseeded:
                    raise DegenerateComponent(f"component {k} collapsed")
                reseeded.add(k)
                gmm.means[k] = X[rng.integers(n)]
                gmm.covs[k] = np.cov(X.T, bias=True).reshape(d, d) + ridge * np.eye(d)
                nk[k] = 1.0
                continue
            gmm.means[k] = resp[:, k] @ X / nk[k]
            diff = X - gmm.means[k]
            gmm.covs[k] = (resp[:, k, None] * diff).T @ diff / nk[k] + ridge * np.eye(d)
        gmm.weights = np.maximum(nk / nk.sum(), 1e-12)
        gmm.weights /= gmm.weights.sum()
    return gmm


def gmm_free_params(K, d):
    """Free parameters of a full-covariance K-component mixture in dim d."""
    return K - 1 + K * d + K * d * (d + 1) // 2


def bic(gmm, X):
    K, d = gmm.means.shape
    return gmm_free_params(K, d) * np.log(len(X)) - 2.0 * gmm.loglik(X)


def greedy_bic_select(actions, features, candidates, max_features, K,
                      iters=50, seed=0):
    """Forward feature selection minimizing the joint-GMM BIC.

    Repeatedly adds the candidate whose inclusion most decreases
    BIC = k ln N - 2 ln L of the joint (action, selected-feature) mixture;
    stops when no candidate helps or max_features is reached.
    """
    actions = np.asarray(actions, dtype=float)
    features = np.asarray(features, dtype=float)
    selected = []
    current_bic = bic(em_fit(actions, K, iters=iters, seed=seed), actions)
    remaining = list(candidates)
    while remaining and len(selected) < max_features:
        best = None
        for c in remaining:
            cols = selected + [c]
            joint = np.concatenate([actions, features[:, cols]], axis=1)
            try:
                b = bic(em_fit(joint, K, iters=iters, seed=seed), joint)
            except (TooFewSamples, np.linalg.LinAlgError):
                continue
            if best is None or b < best[0]:
                best = (b, c)
        if best is None or best[0] >= current_bic:
            break
        current_bic = best[0]
        selected.append(best[1])
        remaining.remove(best[1])
    return selected


@dataclass
class MixtureRegression:
    """Joint Gaussian mixture over (action, selected features)."""
    gmm: Gmm
    feature_indices: list

    def conditional(self, feature_vector):
        return mr_conditional(self, feature_vector)


def fit_mixture_regression(actions, features, K=4, max_features=10,
                           candidates=None, iters=100, seed=0):
    actions = np.asarray(actions, dtype=float)
    features = np.asarray(features, dtype=float)
    if candidates is None:
        candidates = list(range(features.shape[1]))
    selected = greedy_bic_select(actions, features, candidates, max_features, K,
                                 iters=min(iters, 50), seed=seed)
    joint = np.concatenate([actions, features[:, selected]], axis=1) if selected else actions
    gmm = em_fit(joint, K, iters=iters, seed=seed)
    return MixtureRegression(gmm=gmm, feature_indices=selected)


@dataclass
class ConditionalMixture:
    """Mixture over actions conditioned on a feature vector."""
    weights: np.ndarray
    means: np.ndarray  # (K, 2)
    covs: np.ndarray   # (K, 2, 2)

    def sample(self, rng):
        k = rng.choice(len(self.weights), p=self.weights)
        return rng.multivariate_normal(self.means[k], self.covs[k])

    def mean(self):
        return self.weights @ self.means


def mr_conditional(mr, feature_vector):
    """Condition each joint component on the feature block and reweight by
    the component's marginal feature likelihood (partitioned-Gaussian
    formulas)."""
    gmm = mr.gmm
    na = ACTION_DIM
    if not mr.feature_indices:
        return ConditionalMixture(weights=gmm.weights.copy(),
                                  means=gmm.means[:, :na].copy(),
                                  covs=gmm.covs[:, :na, :na].copy())
    f = np.asarray(feature_vector, dtype=float)[mr.feature_indices]
    K = gmm.n_components
    means = np.zeros((K, na))
    covs = np.zeros((K, na, na))
    logw = np.zeros(K)
    for k in range(K):
        mu_a = gmm.means[k, :na]
        mu_f = gmm.means[k, na:]
        S_aa = gmm.covs[k, :na, :na]
        S_af = gmm.covs[k, :na, na:]
        S_ff = gmm.covs[k, na:, na:]
        try:
            sol = np.linalg.solve(S_ff, (f - mu_f))
            gain = np.linalg.solve(S_ff, S_af.T).T
        except np.linalg.LinAlgError as e:
            raise SingularBlock(f"component {k} feature block singular") from e
        means[k] = mu_a + S_af @ sol
        covs[k] = S_aa - gain @ S_af.T
        covs[k] += 1e-9 * np.eye(na)
        logw[k] = np.log(gmm.weights[k]) + _log_gauss(f[None, :], mu_f, S_ff)[0]
    w = np.exp(logw - _logsumexp(logw))
    w /= w.sum()
    return ConditionalMixture(weights=w, means=means, covs=covs)
