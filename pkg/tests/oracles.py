"""Naive, loop-based reference implementations used as test oracles.

Nothing here imports the package under test, apart from
``kmeans_plus_plus`` which the GMM oracle reuses for a shared initialisation.
"""

import itertools
import math

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp
from scipy.stats import multivariate_normal


def dist(a, b, kind):
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    if kind == "euclidean":
        return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
    if kind == "cosine":
        dot = sum(x * y for x, y in zip(a, b))
        na = math.sqrt(sum(x * x for x in a))
        nb = math.sqrt(sum(y * y for y in b))
        return 1.0 - dot / (na * nb)
    if kind == "correlation":
        ma = sum(a) / len(a)
        mb = sum(b) / len(b)
        a = [x - ma for x in a]
        b = [y - mb for y in b]
        return dist(a, b, "cosine")
    raise ValueError(kind)


def ranks(values):
    """1-based ranks, ties get the mean of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    out = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        for t in range(i, j + 1):
            out[order[t]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return out


def pearson(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    da = math.sqrt(sum((x - ma) ** 2 for x in a))
    db = math.sqrt(sum((y - mb) ** 2 for y in b))
    return num / (da * db)


def spearman(a, b):
    return pearson(ranks(list(a)), ranks(list(b)))


def lower_triangle(X, kind):
    n = len(X)
    return [dist(X[i], X[j], kind) for i in range(n) for j in range(i)]


def dse(phi, psi, kind="euclidean"):
    return -sum(dist(p, q, kind) for p, q in zip(phi, psi)) / len(phi)


def zscore(X):
    X = np.array(X, dtype=float)
    out = np.zeros_like(X)
    for j in range(X.shape[1]):
        col = X[:, j]
        sd = col.std()
        out[:, j] = 0.0 if sd == 0 else (col - col.mean()) / sd
    return out


def rsa(phi, psi, kind="correlation"):
    return spearman(lower_triangle(zscore(phi), kind), lower_triangle(zscore(psi), kind))


def silhouette(X, y, kind):
    n = len(X)
    total = 0.0
    classes = sorted(set(y))
    for i in range(n):
        own = [j for j in range(n) if y[j] == y[i] and j != i]
        if not own:
            continue
        a = sum(dist(X[i], X[j], kind) for j in own) / len(own)
        b = min(
            sum(dist(X[i], X[j], kind) for j in range(n) if y[j] == c) / sum(1 for j in range(n) if y[j] == c)
            for c in classes
            if c != y[i]
        )
        total += (b - a) / max(a, b) if max(a, b) > 0 else 0.0
    return total / n


def knn(X, y, k, kind):
    n = len(X)
    correct = 0
    for i in range(n):
        neigh = sorted((dist(X[i], X[j], kind), j) for j in range(n) if j != i)[:k]
        votes = {}
        first = {}
        for d, j in neigh:
            votes[y[j]] = votes.get(y[j], 0) + 1
            first.setdefault(y[j], d)
        best = max(votes.values())
        tied = [c for c in votes if votes[c] == best]
        pred = min(tied, key=lambda c: (first[c], c))
        correct += pred == y[i]
    return correct / n


def parc(X, y, kind="correlation"):
    C = max(y) + 1
    onehot = [[1.0 if c == label else 0.0 for c in range(C)] for label in y]
    return spearman(lower_triangle(X, kind), lower_triangle(onehot, kind))


def bhattacharyya(mu1, cov1, mu2, cov2):
    cov = (cov1 + cov2) / 2
    diff = mu1 - mu2
    term1 = diff @ np.linalg.inv(cov) @ diff / 8
    term2 = 0.5 * math.log(np.linalg.det(cov) / math.sqrt(np.linalg.det(cov1) * np.linalg.det(cov2)))
    return term1 + term2


def gbc(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    C = int(y.max()) + 1
    params = []
    for c in range(C):
        Xc = X[y == c]
        mu = Xc.mean(axis=0)
        var = ((Xc - mu) ** 2).sum(axis=0) / (len(Xc) - 1)
        params.append((mu, np.diag(var)))
    return -sum(
        math.exp(-bhattacharyya(*params[i], *params[j])) for i, j in itertools.combinations(range(C), 2)
    )


def cov_unbiased(X):
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    mu = X.mean(axis=0)
    out = np.zeros((d, d))
    for row in X:
        out += np.outer(row - mu, row - mu)
    return out / (n - 1)


def h_score(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    means = {c: X[y == c].mean(axis=0) for c in set(y.tolist())}
    G = np.array([means[label] for label in y.tolist()])
    return float(np.trace(np.linalg.pinv(cov_unbiased(X), rcond=1e-10) @ cov_unbiased(G)))


def nleep_frozen(X, y, weights, means, variances):
    """NLEEP given a fixed diagonal GMM, densities evaluated one sample at a time."""
    X = np.asarray(X, dtype=float)
    n, K = len(X), len(weights)
    post = np.zeros((n, K))
    for i in range(n):
        dens = [weights[k] * multivariate_normal.pdf(X[i], means[k], np.diag(variances[k])) for k in range(K)]
        total = sum(dens)
        post[i] = [d / total for d in dens]
    return nleep_from_resp(post, y)


def nleep_from_resp(post, y):
    """Mean log expected empirical prediction, summed term by term."""
    post = np.asarray(post, dtype=float)
    y = [int(v) for v in y]
    n, K = post.shape
    C = max(y) + 1
    p_y_given_c = np.zeros((C, K))
    for k in range(K):
        for c in range(C):
            p_y_given_c[c, k] = sum(post[i, k] for i in range(n) if y[i] == c) / sum(post[:, k])
    total = 0.0
    for i in range(n):
        total += math.log(sum(p_y_given_c[y[i], k] * post[i, k] for k in range(K)))
    return total / n


def coding_rate(Z, eps):
    Z = np.asarray(Z, dtype=float)
    n, d = Z.shape
    M = np.eye(d) + d / (n * eps**2) * Z.T @ Z
    sign, logdet = np.linalg.slogdet(M)
    return 0.5 * logdet


def transrate(X, y, eps=1e-4):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    Z = X - X.mean(axis=0)
    out = coding_rate(Z, eps)
    for c in sorted(set(y.tolist())):
        Zc = Z[y == c]
        out -= len(Zc) / len(Z) * coding_rate(Zc - Zc.mean(axis=0), eps)
    return out


def log_evidence_dense(F, t, alpha, beta):
    """Bayesian linear regression log marginal likelihood, dense formula."""
    n, d = F.shape
    A = alpha * np.eye(d) + beta * F.T @ F
    m = beta * np.linalg.solve(A, F.T @ t)
    res = t - F @ m
    return (
        0.5 * d * math.log(alpha)
        + 0.5 * n * math.log(beta)
        - 0.5 * beta * res @ res
        - 0.5 * alpha * m @ m
        - 0.5 * np.linalg.slogdet(A)[1]
        - 0.5 * n * math.log(2 * math.pi)
    )


def logme_optimal(X, y):
    """Evidence maximised over (log alpha, log beta) by a grid then Nelder-Mead."""
    F = np.asarray(X, dtype=float)
    y = np.asarray(y)
    C = int(y.max()) + 1
    total = 0.0
    grid = np.linspace(-8, 8, 33)
    for c in range(C):
        t = (y == c).astype(float)
        f = lambda p: -log_evidence_dense(F, t, math.exp(p[0]), math.exp(p[1]))  # noqa: E731
        start = min(itertools.product(grid, grid), key=f)
        res = minimize(f, start, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000})
        total += -res.fun / len(F)
    return total / C


def softmax_rows(logits):
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def pactran(X, y, lam=1.0, sigma0_sq=10.0):
    """Minimise the PAC-Gauss objective with a long L-BFGS run and evaluate its terms."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    n, d = X.shape
    C = int(y.max()) + 1
    Xb = np.hstack([X, np.ones((n, 1))])
    Y = np.eye(C)[y]

    def ce(w):
        P = softmax_rows(Xb @ w.reshape(C, d + 1).T)
        return -np.mean(np.log(P[np.arange(n), y]))

    def pen(w):
        return w @ w / (2 * sigma0_sq * lam * n)

    def f(w):
        W = w.reshape(C, d + 1)
        P = softmax_rows(Xb @ W.T)
        grad = ((P - Y).T @ Xb) / n + W / (sigma0_sq * lam * n)
        return ce(w) + pen(w), grad.ravel()

    res = minimize(f, np.zeros(C * (d + 1)), jac=True, method="L-BFGS-B",
                   options={"maxiter": 100000, "gtol": 1e-12, "ftol": 1e-15, "maxcor": 50})
    w = res.x
    P = softmax_rows(Xb @ w.reshape(C, d + 1).T)
    # diagonal of the mean cross-entropy Hessian, entry (c, j)
    h = np.array([[np.mean(P[:, c] * (1 - P[:, c]) * Xb[:, j] ** 2) for j in range(d + 1)] for c in range(C)])
    complexity = np.sum(np.log1p(lam * n * sigma0_sq * h)) / (2 * lam * n)
    return -(ce(w) + pen(w) + complexity)


def lda_stage(Z, y):
    """Mean log posterior of the true class under shared-covariance Gaussians."""
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y)
    n, d = Z.shape
    C = int(y.max()) + 1
    mus = [Z[y == c].mean(axis=0) for c in range(C)]
    pooled = sum(np.outer(Z[i] - mus[y[i]], Z[i] - mus[y[i]]) for i in range(n)) / (n - C)
    spread = np.mean(np.sum((Z - Z.mean(axis=0)) ** 2, axis=1)) / d
    pooled = pooled + (1e-10 * spread + 1e-300) * np.eye(d)
    priors = [np.mean(y == c) for c in range(C)]
    logp = np.zeros((n, C))
    for i in range(n):
        joint = np.array([math.log(priors[c]) + multivariate_normal.logpdf(Z[i], mus[c], pooled) for c in range(C)])
        logp[i] = joint - logsumexp(joint)
    return logp


def fda_directions(X, y, shrink=0.5):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    n, D = X.shape
    C = int(y.max()) + 1
    mu = X.mean(axis=0)
    Sw = np.zeros((D, D))
    Sb = np.zeros((D, D))
    for c in range(C):
        Xc = X[y == c]
        mc = Xc.mean(axis=0)
        for row in Xc:
            Sw += np.outer(row - mc, row - mc)
        Sb += len(Xc) * np.outer(mc - mu, mc - mu)
    Sw /= n
    Sb /= n
    tau = np.trace(Sw) / D
    reg = (1 - shrink) * Sw + shrink * tau * np.eye(D)
    L = np.linalg.cholesky(reg)
    Linv = np.linalg.inv(L)
    vals, vecs = np.linalg.eigh(Linv @ Sb @ Linv.T)
    W = Linv.T @ vecs[:, ::-1][:, : C - 1]
    return W.T


def sfda(X, y, shrink=0.5):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    W = fda_directions(X, y, shrink)
    Z = X @ W.T
    logp = lda_stage(Z, y)
    idx = np.arange(len(y))
    s1 = np.mean(logp[idx, y])
    conf = np.exp(logp[idx, y])
    C = int(y.max()) + 1
    mus = np.array([Z[y == c].mean(axis=0) for c in range(C)])
    mixed = (1 - conf)[:, None] * Z + conf[:, None] * mus[y]
    s2 = np.mean(lda_stage(mixed, y)[idx, y])
    return min(0.5 * (s1 + s2), 0.0)


def gmm_long_run(X, K, seed, iters=5000):
    """Diagonal EM from the package's k-means++ start, iterated to a fixed point."""
    from transferability.numerics import kmeans_plus_plus

    X = np.asarray(X, dtype=float)
    n, d = X.shape
    rng = np.random.default_rng(seed)
    centers = X[kmeans_plus_plus(X, K, rng)]
    assign = np.argmin(((X[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
    resp = np.eye(K)[assign]
    prev = -np.inf
    for _ in range(iters):
        nk = resp.sum(axis=0) + 1e-300
        w = nk / n
        mu = (resp.T @ X) / nk[:, None]
        var = np.maximum((resp.T @ X**2) / nk[:, None] - mu**2, 1e-6)
        logp = np.zeros((n, K))
        for k in range(K):
            logp[:, k] = np.log(w[k]) - 0.5 * np.sum(np.log(2 * np.pi * var[k]) + (X - mu[k]) ** 2 / var[k], axis=1)
        m = logp.max(axis=1, keepdims=True)
        ll = float(np.sum(m[:, 0] + np.log(np.exp(logp - m).sum(axis=1))))
        resp = np.exp(logp - m)
        resp /= resp.sum(axis=1, keepdims=True)
        if abs(ll - prev) < 1e-13 * abs(ll):
            break
        prev = ll
    return resp


def reg_h_score(X, y):
    """H-Score with sklearn's Ledoit-Wolf intensity applied to the unbiased covariance."""
    from sklearn.covariance import ledoit_wolf

    X = np.asarray(X, dtype=float)
    S = cov_unbiased(X)
    _, gamma = ledoit_wolf(X)
    d = S.shape[0]
    shrunk = (1 - gamma) * S + gamma * np.trace(S) / d * np.eye(d)
    means = {c: X[np.asarray(y) == c].mean(axis=0) for c in set(np.asarray(y).tolist())}
    G = np.array([means[label] for label in np.asarray(y).tolist()])
    return float(np.trace(np.linalg.inv(shrunk) @ cov_unbiased(G)))


def logistic_cv(X, y, folds):
    """Held-out accuracy of sklearn's L2 logistic regression over the given fold ids."""
    from sklearn.linear_model import LogisticRegression

    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    # sklearn fits one weight vector for two classes; the symmetric softmax optimum
    # w1 = -w2 halves the penalty on v = w1 - w2, which is C = 2 in sklearn's scale
    strength = 2.0 if len(set(y.tolist())) == 2 else 1.0
    hits = 0
    for f in sorted(set(folds.tolist())):
        test = folds == f
        model = LogisticRegression(C=strength, tol=1e-12, max_iter=100_000).fit(X[~test], y[~test])
        hits += int(np.sum(model.predict(X[test]) == y[test]))
    return hits / len(y)
