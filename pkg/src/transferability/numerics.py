"""Numerical kernels shared by the estimators.

All functions are pure: identical inputs (and seeds) give identical outputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize
from scipy.special import logsumexp

from .errors import DegenerateInputError, TransferabilityError

GMM_VAR_FLOOR = 1e-6


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each row so that its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(vectors.shape[0]), idx])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


# -- PCA ----------------------------------------------------------------------

@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    total_variance: float

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        if self.total_variance <= 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) @ self.components + self.mean


def pca_fit_transform(X, d: int) -> tuple[PcaModel, np.ndarray]:
    """Center-only PCA onto the top ``d`` principal directions.

    Components are sorted by decreasing variance and each has its
    largest-magnitude entry positive.
    """
    X = np.asarray(X, dtype=np.float64)
    n, D = X.shape
    if not 1 <= d <= min(n, D):
        raise TransferabilityError(f"PCA dimension {d} outside [1, min(N, D)] = [1, {min(n, D)}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    denom = max(n - 1, 1)
    if n >= D:
        cov = Xc.T @ Xc / denom
        cov = (cov + cov.T) / 2
        evals, evecs = linalg.eigh(cov)
        order = np.argsort(-evals, kind="stable")
        evals = evals[order]
        components = evecs[:, order].T
    else:
        _, s, vt = linalg.svd(Xc, full_matrices=False)
        evals = s**2 / denom
        components = vt
    evals = np.clip(evals[:d], 0.0, None)
    components = _fix_signs(components[:d])
    total = float(np.trace(Xc.T @ Xc) / denom) if n >= D else float((Xc**2).sum() / denom)
    model = PcaModel(mean, components, evals, total)
    return model, Xc @ components.T


# -- covariance -----------------------------------------------------------------

def covariance(X) -> np.ndarray:
    """Unbiased (N-1) sample covariance, exactly symmetric."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise TransferabilityError("covariance needs at least 2 samples")
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / (n - 1)
    return (cov + cov.T) / 2


def ledoit_wolf_intensity(X) -> float:
    """Analytic Ledoit-Wolf shrinkage intensity towards a scaled identity.

    Returns ``gamma`` in [0, 1]; a constant input gives 1.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    Xc = X - X.mean(axis=0)
    emp = Xc.T @ Xc / n
    mu = np.trace(emp) / d
    delta = emp.copy()
    delta[np.diag_indices(d)] -= mu
    delta_sq = np.sum(delta**2) / d
    if delta_sq <= 0:
        return 1.0
    X2 = Xc**2
    beta_sq = (np.sum((X2.T @ X2)) / n - np.sum(emp**2)) / (d * n)
    beta_sq = min(beta_sq, delta_sq)
    return float(beta_sq / delta_sq)


def shrinkage_covariance(X) -> tuple[np.ndarray, float]:
    """Ledoit-Wolf shrunk covariance ``(1-g) S + g tau I`` and the intensity ``g``.

    ``S`` is the unbiased covariance and ``tau`` its mean diagonal. Raises
    :class:`DegenerateInputError` when ``tau`` is zero (constant input).
    """
    S = covariance(X)
    d = S.shape[0]
    tau = np.trace(S) / d
    if tau <= 0:
        raise DegenerateInputError("shrinkage covariance of constant features is degenerate (tau = 0)")
    gamma = ledoit_wolf_intensity(X)
    shrunk = (1.0 - gamma) * S
    shrunk[np.diag_indices(d)] += gamma * tau
    return shrunk, gamma


def pseudo_inverse(M, tol: float = 1e-10) -> np.ndarray:
    """Moore-Penrose inverse; singular values below ``tol * max(s)`` are dropped."""
    M = np.asarray(M, dtype=np.float64)
    u, s, vt = linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros(M.T.shape)
    keep = s > tol * s[0]
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    return (vt.T * inv_s) @ u.T


def logdet_psd(M) -> float:
    """Log-determinant of a symmetric PSD matrix.

    Eigenvalues in ``[-1e-6, 1e-12]`` are treated as the ``1e-12`` floor;
    anything more negative raises.
    """
    M = np.asarray(M, dtype=np.float64)
    evals = linalg.eigvalsh((M + M.T) / 2)
    if evals.size and evals[0] < -1e-6:
        raise TransferabilityError(f"matrix is not PSD (smallest eigenvalue {evals[0]:.3g})")
    return float(np.sum(np.log(np.maximum(evals, 1e-12))))


# -- Gaussian mixture -------------------------------------------------------------

@dataclass(frozen=True)
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: list = field(default_factory=list)
    converged: bool = True

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    def log_joint(self, X) -> np.ndarray:
        """``log w_k + log N(x | mu_k, diag var_k)`` for every sample and component."""
        X = np.asarray(X, dtype=np.float64)
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        prec = 1.0 / self.variances
        # squared Mahalanobis distances without an N x K x D temporary
        maha = (
            (X**2) @ prec.T
            - 2.0 * X @ (self.means * prec).T
            + np.sum(self.means**2 * prec, axis=1)
        )
        maha = np.maximum(maha, 0.0)
        log_norm = -0.5 * (X.shape[1] * np.log(2 * np.pi) + np.sum(np.log(self.variances), axis=1))
        return log_w + log_norm - 0.5 * maha

    def posteriors(self, X) -> np.ndarray:
        lj = self.log_joint(X)
        return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))

    def score(self, X) -> float:
        """Total log-likelihood of ``X``."""
        return float(logsumexp(self.log_joint(X), axis=1).sum())


def kmeans_plus_plus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``k`` seeds chosen by D^2 sampling."""
    n = X.shape[0]
    first = int(rng.integers(n))
    chosen = [first]
    closest = np.sum((X - X[first]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all remaining points coincide with a seed; pick uniformly among unused
            pool = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(pool))
        else:
            nxt = int(rng.choice(n, p=closest / total))
        chosen.append(nxt)
        closest = np.minimum(closest, np.sum((X - X[nxt]) ** 2, axis=1))
    return np.array(chosen)


def fit_gmm(X, K: int, seed: int, max_iter: int = 200, tol: float = 1e-4) -> GmmModel:
    """Diagonal-covariance Gaussian mixture fitted by EM.

    Initialised from a k-means++ seeding (hard assignment to the nearest seed).
    Stops when the relative log-likelihood improvement drops below ``tol``.
    Variances are floored at ``GMM_VAR_FLOOR``; the floored M-step is still the
    constrained maximiser, so the likelihood never decreases.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if K < 1:
        raise TransferabilityError("GMM needs at least one component")
    if n < K:
        raise TransferabilityError(f"GMM with {K} components needs at least {K} samples, got {n}")
    rng = np.random.default_rng(seed)

    seeds = X[kmeans_plus_plus(X, K, rng)]
    d2 = (X**2).sum(1)[:, None] - 2 * X @ seeds.T + (seeds**2).sum(1)[None, :]
    resp = np.zeros((n, K))
    resp[np.arange(n), np.argmin(d2, axis=1)] = 1.0
    weights, means, variances = _m_step(X, resp, None)

    history = []
    converged = False
    for _ in range(max_iter):
        model = GmmModel(weights, means, variances)
        lj = model.log_joint(X)
        norm = logsumexp(lj, axis=1, keepdims=True)
        ll = float(norm.sum())
        history.append(ll)
        if len(history) > 1 and (ll - history[-2]) <= tol * abs(history[-2]):
            converged = True
            break
        resp = np.exp(lj - norm)
        weights, means, variances = _m_step(X, resp, (weights, means, variances))
    else:
        model = GmmModel(weights, means, variances)
        history.append(model.score(X))

    return GmmModel(weights, means, variances, history, converged)


def _m_step(X, resp, previous):
    nk = resp.sum(axis=0)
    weights = nk / nk.sum()
    safe = nk > 1e-10
    means = np.zeros((resp.shape[1], X.shape[1]))
    variances = np.ones_like(means)
    means[safe] = (resp[:, safe].T @ X) / nk[safe, None]
    second = (resp[:, safe].T @ X**2) / nk[safe, None]
    variances[safe] = second - means[safe] ** 2
    if previous is not None and not safe.all():
        means[~safe] = previous[1][~safe]
        variances[~safe] = previous[2][~safe]
    elif not safe.all():
        means[~safe] = X.mean(axis=0)
        variances[~safe] = X.var(axis=0)
    return weights, means, np.maximum(variances, GMM_VAR_FLOOR)


# -- multinomial logistic regression --------------------------------------------------

@dataclass(frozen=True)
class LinearModel:
    """Softmax head; ``weights[:, :-1]`` multiply features, ``weights[:, -1]`` is the bias."""

    weights: np.ndarray
    converged: bool = True
    n_iter: int = 0
    grad_norm: float = 0.0

    def logits(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights[:, :-1].T + self.weights[:, -1]

    def predict_proba(self, X) -> np.ndarray:
        z = self.logits(X)
        return np.exp(z - logsumexp(z, axis=1, keepdims=True))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.logits(X), axis=1)


class SoftmaxObjective:
    """Mean cross-entropy of a softmax head plus ``l2 / (2 N) * ||w||^2``.

    Dividing the usual summed objective by N keeps the minimiser unchanged and
    makes the gradient tolerance independent of the sample count.
    """

    def __init__(self, X, y, n_classes: int, l2: float, penalize_bias: bool = False):
        X = np.asarray(X, dtype=np.float64)
        self.n, self.d = X.shape
        self.C = n_classes
        self.Xb = np.hstack([X, np.ones((self.n, 1))])
        self.Y = np.zeros((self.n, n_classes))
        self.Y[np.arange(self.n), y] = 1.0
        self.l2 = l2
        self.mask = np.ones((n_classes, self.d + 1))
        if not penalize_bias:
            self.mask[:, -1] = 0.0

    def _unpack(self, w):
        return w.reshape(self.C, self.d + 1)

    def probs(self, w) -> np.ndarray:
        z = self.Xb @ self._unpack(w).T
        return np.exp(z - logsumexp(z, axis=1, keepdims=True))

    def cross_entropy(self, w) -> float:
        z = self.Xb @ self._unpack(w).T
        return float(np.mean(logsumexp(z, axis=1) - np.sum(z * self.Y, axis=1)))

    def penalty(self, w) -> float:
        W = self._unpack(w)
        return 0.5 * self.l2 * float(np.sum(self.mask * W**2)) / self.n

    def value(self, w) -> float:
        return self.cross_entropy(w) + self.penalty(w)

    def gradient(self, w) -> np.ndarray:
        W = self._unpack(w)
        P = self.probs(w)
        G = (P - self.Y).T @ self.Xb / self.n + self.l2 * self.mask * W / self.n
        return G.ravel()

    def hessp(self, w, v) -> np.ndarray:
        P = self.probs(w)
        V = self._unpack(v)
        XV = self.Xb @ V.T
        PXV = P * XV
        R = PXV - P * PXV.sum(axis=1, keepdims=True)
        Hv = R.T @ self.Xb / self.n + self.l2 * self.mask * V / self.n
        return Hv.ravel()

    def diag_hessian(self, w) -> np.ndarray:
        """Diagonal of the cross-entropy Hessian (penalty excluded)."""
        P = self.probs(w)
        return ((P * (1 - P)).T @ self.Xb**2 / self.n).ravel()


def fit_logistic(
    X,
    y,
    l2: float = 1.0,
    max_iter: int = 200,
    tol: float = 1e-8,
    n_classes: int | None = None,
    penalize_bias: bool = False,
) -> LinearModel:
    """Multinomial logistic regression by trust-region Newton-CG from zero.

    ``l2`` weighs ``||w||^2 / 2`` against the summed cross-entropy. The bias
    column is unpenalised unless ``penalize_bias``. Non-convergence is
    reported through ``LinearModel.converged`` with a ``RuntimeWarning``.
    """
    y = np.asarray(y)
    C = int(y.max()) + 1 if n_classes is None else n_classes
    if C < 2:
        raise TransferabilityError("logistic regression needs at least 2 classes")
    obj = SoftmaxObjective(X, y, C, l2, penalize_bias)
    w0 = np.zeros(C * (obj.d + 1))
    res = optimize.minimize(
        obj.value,
        w0,
        jac=obj.gradient,
        hessp=obj.hessp,
        method="trust-ncg",
        options={"gtol": tol, "maxiter": max_iter},
    )
    grad_norm = float(np.linalg.norm(obj.gradient(res.x)))
    converged = grad_norm <= tol
    if not converged:
        warnings.warn(
            f"logistic regression stopped at gradient norm {grad_norm:.2e} > {tol:.0e}",
            RuntimeWarning,
            stacklevel=2,
        )
    return LinearModel(res.x.reshape(C, obj.d + 1), converged, int(res.nit), grad_norm)


# -- Fisher discriminant projection ------------------------------------------------------

def scatter_matrices(X, y, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Within- and between-class scatter, both normalised by N."""
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    mean = X.mean(axis=0)
    Sw = np.zeros((d, d))
    Sb = np.zeros((d, d))
    for c in range(n_classes):
        Xc = X[y == c]
        mu = Xc.mean(axis=0)
        diff = Xc - mu
        Sw += diff.T @ diff
        delta = (mu - mean)[:, None]
        Sb += Xc.shape[0] * (delta @ delta.T)
    return (Sw + Sw.T) / (2 * n), (Sb + Sb.T) / (2 * n)


def fda_project(X, y, shrink: float = 0.5, n_classes: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Regularised Fisher discriminant directions and projected features.

    Solves ``S_b v = lambda S_w' v`` with ``S_w' = (1 - shrink) S_w + shrink tau I``
    (``tau`` the mean diagonal of ``S_w``) and keeps the top ``C - 1``
    directions, each scaled to unit norm with its largest entry positive.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    C = int(y.max()) + 1 if n_classes is None else n_classes
    n, d = X.shape
    if C < 2:
        raise TransferabilityError("FDA needs at least 2 classes")
    if n <= C:
        raise TransferabilityError(f"FDA needs more samples ({n}) than classes ({C})")
    if not 0.0 <= shrink <= 1.0:
        raise TransferabilityError(f"FDA shrinkage {shrink} outside [0, 1]")
    Sw, Sb = scatter_matrices(X, y, C)
    tau = np.trace(Sw) / d
    if tau <= 0 and np.trace(Sb) <= 0:
        raise DegenerateInputError("FDA scatter is degenerate (all features identical)")
    if tau <= 0:
        # zero within-class spread: regularise with the between-class scale instead
        tau = np.trace(Sb) / d
    Sw_reg = (1.0 - shrink) * Sw
    Sw_reg[np.diag_indices(d)] += shrink * tau
    try:
        evals, evecs = linalg.eigh(Sb, Sw_reg)
    except linalg.LinAlgError:
        raise DegenerateInputError("regularised within-class scatter is singular; raise shrink") from None
    order = np.argsort(-evals, kind="stable")[: C - 1]
    directions = evecs[:, order].T
    directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    directions = _fix_signs(directions)
    return directions, X @ directions.T
