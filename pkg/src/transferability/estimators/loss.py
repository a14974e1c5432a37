"""Loss-approximation estimators.

H-Score, regularised H-Score, NLEEP, TransRate, LogME, SFDA and PACTran.
"""

from __future__ import annotations

import warnings
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from ..errors import DegenerateInputError, TransferabilityError
from ..numerics import (
    SoftmaxObjective,
    covariance,
    fda_project,
    fit_gmm,
    fit_logistic,
    logdet_psd,
    pseudo_inverse,
    shrinkage_covariance,
)
from ._common import class_means, features_and_labels, one_hot


# -- H-Score ---------------------------------------------------------------------

def _class_mean_covariance(X, y, C) -> np.ndarray:
    # every sample replaced by its class mean, so classes are frequency weighted
    return covariance(class_means(X, y, C)[y])


def h_score(X, y) -> float:
    """``tr(cov(f)^+ cov(E[f | y]))`` with a pseudo-inverted feature covariance."""
    X, y, C = features_and_labels(X, y)
    if X.shape[0] < 2:
        raise TransferabilityError("H-Score needs at least 2 samples")
    cov_f = covariance(X)
    if not np.any(cov_f):
        raise DegenerateInputError("H-Score undefined: all features are constant")
    cov_g = _class_mean_covariance(X, y, C)
    return float(np.sum(pseudo_inverse(cov_f) * cov_g.T))


def reg_h_score(X, y) -> float:
    """H-Score with the Ledoit-Wolf shrunk feature covariance, inverted exactly."""
    X, y, C = features_and_labels(X, y)
    if X.shape[0] < 2:
        raise TransferabilityError("H-Score needs at least 2 samples")
    try:
        cov_f, _ = shrinkage_covariance(X)
    except DegenerateInputError:
        raise DegenerateInputError("regularised H-Score undefined: all features are constant") from None
    cov_g = _class_mean_covariance(X, y, C)
    try:
        return float(np.trace(np.linalg.solve(cov_f, cov_g)))
    except np.linalg.LinAlgError:
        # zero shrinkage intensity leaves a rank-deficient covariance
        raise DegenerateInputError("regularised H-Score undefined: shrunk covariance is singular") from None


# -- NLEEP -------------------------------------------------------------------------

def nleep_from_posteriors(posteriors, y) -> float:
    """Mean log expected empirical prediction from component posteriors ``(N, K)``."""
    post = np.asarray(posteriors, dtype=np.float64)
    y = np.asarray(y)
    C = int(y.max()) + 1
    joint = one_hot(y, C).T @ post  # (C, K)
    mass = post.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        label_given_comp = np.where(mass > 0, joint / mass, 0.0)
    pred = post @ label_given_comp.T  # (N, C)
    return float(np.mean(np.log(pred[np.arange(y.shape[0]), y])))


def nleep_score(X, y, gmm_multiplier: int = 5, seed: int = 0) -> float:
    X, y, C = features_and_labels(X, y)
    K = gmm_multiplier * C
    if X.shape[0] < K:
        raise TransferabilityError(f"NLEEP with {K} components needs at least {K} samples")
    gmm = fit_gmm(X, K, seed)
    return min(nleep_from_posteriors(gmm.posteriors(X), y), 0.0)


# -- TransRate -----------------------------------------------------------------------

def coding_rate(Z, epsilon: float) -> float:
    """``0.5 * logdet(I + D / (N eps^2) Z^T Z)`` for already centred ``Z``."""
    Z = np.asarray(Z, dtype=np.float64)
    n, d = Z.shape
    # singular values avoid forming I + scale * gram, whose unit eigenvalues
    # lose absolute precision when scale is large
    s = np.linalg.svd(Z, compute_uv=False)
    return 0.5 * float(np.sum(np.log1p((d / (n * epsilon**2)) * s**2)))


def _rate_from_scatter(scatter: np.ndarray, n: int, epsilon: float) -> float:
    d = scatter.shape[0]
    M = (d / (n * epsilon**2)) * scatter
    M[np.diag_indices(d)] += 1.0
    return 0.5 * logdet_psd(M)


def transrate_score(X, y, epsilon: float = 1e-4) -> float:
    """Coding rate of all features minus the class-weighted per-class coding rates."""
    if epsilon <= 0:
        raise TransferabilityError("TransRate epsilon must be positive")
    X, y, C = features_and_labels(X, y)
    n, d = X.shape
    Z = X - X.mean(axis=0)
    if d > n:
        rate = coding_rate(Z, epsilon)
        for c in range(C):
            Zc = Z[y == c]
            rate -= Zc.shape[0] / n * coding_rate(Zc - Zc.mean(axis=0), epsilon)
        return float(rate)
    # total scatter = within-class scatters + between-class term: one pass over the data
    total = np.zeros((d, d))
    class_rates = 0.0
    for c in range(C):
        Zc = Z[y == c]
        nc = Zc.shape[0]
        mu = Zc.mean(axis=0)
        Zc = Zc - mu
        Sc = Zc.T @ Zc
        total += Sc + nc * np.outer(mu, mu)
        if nc <= d:
            class_rates += nc / n * coding_rate(Zc, epsilon)
        else:
            class_rates += nc / n * _rate_from_scatter(Sc, nc, epsilon)
    return float(_rate_from_scatter(total, n, epsilon) - class_rates)


# -- LogME -----------------------------------------------------------------------------

LOGME_MAX_ITER = 100
LOGME_TOL = 1e-3
_PRECISION_BOUNDS = (1e-10, 1e10)


class _Spectral:
    """Thin SVD of the feature matrix, reused across target columns."""

    def __init__(self, F: np.ndarray):
        self.n, self.d = F.shape
        self.u, s, _ = np.linalg.svd(F, full_matrices=False)
        self.s = s
        self.sigma = s**2

    def project(self, t: np.ndarray):
        uty = self.u.T @ t
        perp = max(float(t @ t) - float(uty @ uty), 0.0)
        return uty, perp

    def evidence_terms(self, alpha, beta, uty, perp):
        """Posterior mean norm ``||m||^2`` and residual ``||t - F m||^2``."""
        x = self.s * uty
        m_rot = beta * x / (alpha + beta * self.sigma)
        m2 = float(m_rot @ m_rot)
        res2 = perp + float(np.sum((uty - self.s * m_rot) ** 2))
        return m2, res2

    def log_evidence(self, alpha, beta, uty, perp) -> float:
        m2, res2 = self.evidence_terms(alpha, beta, uty, perp)
        n, d = self.n, self.d
        logdet = np.sum(np.log(alpha + beta * self.sigma)) + (d - self.sigma.size) * np.log(alpha)
        return float(
            0.5 * d * np.log(alpha)
            + 0.5 * n * np.log(beta)
            - 0.5 * alpha * m2
            - 0.5 * beta * res2
            - 0.5 * logdet
            - 0.5 * n * np.log(2 * np.pi)
        )


def logme_column(spec: _Spectral, t: np.ndarray) -> tuple[float, float, float, bool]:
    """Maximise the evidence for one regression target by the MacKay fixed point.

    Returns ``(log_evidence, alpha, beta, converged)``.
    """
    uty, perp = spec.project(t)
    alpha = beta = 1.0
    lo, hi = _PRECISION_BOUNDS
    previous = None
    converged = False
    for _ in range(LOGME_MAX_ITER):
        evidence = spec.log_evidence(alpha, beta, uty, perp)
        if previous is not None and abs(evidence - previous) <= LOGME_TOL * abs(previous):
            converged = True
            break
        m2, res2 = spec.evidence_terms(alpha, beta, uty, perp)
        gamma = float(np.sum(beta * spec.sigma / (alpha + beta * spec.sigma)))
        alpha = float(np.clip(gamma / max(m2, 1e-300), lo, hi))
        beta = float(np.clip((spec.n - gamma) / max(res2, 1e-300), lo, hi))
        previous = evidence
    else:
        evidence = spec.log_evidence(alpha, beta, uty, perp)
    return evidence, alpha, beta, converged


def logme_score(X, y) -> float:
    """Mean over classes of the per-sample log marginal evidence of one-vs-all targets."""
    X, y, C = features_and_labels(X, y)
    spec = _Spectral(X)
    targets = one_hot(y, C)
    total = 0.0
    unconverged = 0
    for c in range(C):
        evidence, _, _, ok = logme_column(spec, targets[:, c])
        total += evidence / X.shape[0]
        unconverged += not ok
    if unconverged:
        warnings.warn(
            f"LogME evidence iteration did not converge for {unconverged} of {C} classes",
            RuntimeWarning,
            stacklevel=2,
        )
    return total / C


# -- SFDA --------------------------------------------------------------------------------

def lda_log_posteriors(Z, y, C) -> np.ndarray:
    """Log posteriors of a shared-covariance Gaussian classifier fitted on ``(Z, y)``.

    Class priors are the class frequencies; the pooled covariance uses the
    ``N - C`` divisor with a ridge of ``1e-10`` times the overall spread.
    """
    Z = np.asarray(Z, dtype=np.float64)
    n, d = Z.shape
    counts = np.bincount(y, minlength=C)
    mus = class_means(Z, y, C)
    resid = Z - mus[y]
    pooled = resid.T @ resid / max(n - C, 1)
    spread = np.mean(np.sum((Z - Z.mean(axis=0)) ** 2, axis=1)) / d
    pooled[np.diag_indices(d)] += 1e-10 * spread + 1e-300
    prec = np.linalg.inv((pooled + pooled.T) / 2)
    diff = Z[:, None, :] - mus[None, :, :]
    maha = np.einsum("ncd,de,nce->nc", diff, prec, diff)
    logits = np.log(counts / n) - 0.5 * maha
    return logits - logsumexp(logits, axis=1, keepdims=True)


class SfdaStages(NamedTuple):
    stage1: float
    stage2: float
    score: float


def sfda_stages(X, y, shrink: float = 0.5) -> SfdaStages:
    X, y, C = features_and_labels(X, y)
    counts = np.bincount(y, minlength=C)
    if counts.min() < 2:
        raise TransferabilityError("SFDA needs at least 2 samples per class")
    _, Z = fda_project(X, y, shrink, n_classes=C)
    idx = np.arange(X.shape[0])
    logp = lda_log_posteriors(Z, y, C)
    stage1 = float(np.mean(logp[idx, y]))
    # self-challenge: pull each sample towards its class mean by its confidence
    confidence = np.exp(logp[idx, y])[:, None]
    mixed = (1.0 - confidence) * Z + confidence * class_means(Z, y, C)[y]
    logp2 = lda_log_posteriors(mixed, y, C)
    stage2 = float(np.mean(logp2[idx, y]))
    return SfdaStages(stage1, stage2, min(0.5 * (stage1 + stage2), 0.0))


def sfda_score(X, y, shrink: float = 0.5, seed: int = 0) -> float:
    """Mean true-class log posterior after Fisher projection, averaged over both stages.

    ``seed`` is accepted for interface uniformity; the computation is deterministic.
    """
    return sfda_stages(X, y, shrink).score


# -- PACTran (Gaussian prior) ------------------------------------------------------------

class PactranTerms(NamedTuple):
    cross_entropy: float
    penalty: float
    complexity: float

    @property
    def score(self) -> float:
        return -(self.cross_entropy + self.penalty + self.complexity)


def pactran_terms(X, y, lam: float = 1.0, sigma0_sq: float = 10.0, tol: float = 1e-8) -> PactranTerms:
    """Optimised PAC-Bayes bound terms for a softmax head under an isotropic Gaussian prior.

    The head minimises ``CE(w) + ||w||^2 / (2 sigma0^2 lam N)`` (bias included
    in the prior). The flatness term uses the diagonal of the cross-entropy
    Hessian ``h``: ``sum_j log(1 + lam N sigma0^2 h_j) / (2 lam N)``.
    """
    if lam <= 0 or sigma0_sq <= 0:
        raise TransferabilityError("PACTran needs lambda > 0 and sigma0^2 > 0")
    X, y, C = features_and_labels(X, y)
    n = X.shape[0]
    l2 = 1.0 / (sigma0_sq * lam)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = fit_logistic(X, y, l2=l2, tol=tol, n_classes=C, penalize_bias=True)
    obj = SoftmaxObjective(X, y, C, l2, penalize_bias=True)
    w = model.weights.ravel()
    h = obj.diag_hessian(w)
    complexity = float(np.sum(np.log1p(lam * n * sigma0_sq * h)) / (2 * lam * n))
    return PactranTerms(obj.cross_entropy(w), obj.penalty(w), complexity)


def pactran_score(X, y, lam: float = 1.0, sigma0_sq: float = 10.0, seed: int = 0) -> float:
    """Negative optimised PAC-Gauss bound; ``seed`` is unused (deterministic)."""
    return pactran_terms(X, y, lam, sigma0_sq).score
