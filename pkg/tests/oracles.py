"""Independent reference implementations used as test oracles.

Deliberately naive: brute force, enumeration, or textbook iterations that share
no code with the package.
"""

import itertools

import numpy as np


def pairwise_auc(scores, labels):
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=bool)
    pos, neg = s[y], s[~y]
    num = 0.0
    for a in pos:
        for b in neg:
            num += 1.0 if a > b else 0.5 if a == b else 0.0
    return num / (len(pos) * len(neg))


def wilcoxon_enumerated(a, b):
    """Two-sided exact p by enumerating all 2^n sign assignments of the ranks."""
    d = np.asarray(a, float) - np.asarray(b, float)
    d = d[d != 0]
    absd = np.abs(d)
    # mid-ranks by direct counting
    ranks = np.array([np.sum(absd < v) + (np.sum(absd == v) + 1) / 2.0 for v in absd])
    w = ranks[d > 0].sum()
    mean = ranks.sum() / 2.0
    dev = abs(w - mean)
    hits = 0
    total = 0
    for signs in itertools.product((0, 1), repeat=len(ranks)):
        stat = float(np.dot(signs, ranks))
        total += 1
        if abs(stat - mean) >= dev - 1e-9:
            hits += 1
    return hits / total


def power_cca(R_xx, R_ss, R_xs, iters=5000):
    """Top canonical correlation by alternating least-squares updates."""
    e = np.ones(R_ss.shape[0])
    ix, is_ = np.linalg.inv(R_xx), np.linalg.inv(R_ss)
    for _ in range(iters):
        d = ix @ R_xs @ e
        d /= np.sqrt(d @ R_xx @ d)
        e = is_ @ R_xs.T @ d
        e /= np.sqrt(e @ R_ss @ e)
    return float(d @ R_xs @ e)


def feature_model(rng, N=400, K=2, q=0.75, alpha_pos=1.0, alpha_neg=0.2, noise=0.1):
    """Correlation features rho(n) = alpha(n) a + isotropic noise.

    Class means are alpha_pos a and alpha_neg a, hence proportional.
    """
    a = rng.uniform(0.05, 0.2, K)
    truth = rng.uniform(size=N) < q
    truth[:2] = (True, False)
    alpha = np.where(truth, alpha_pos, alpha_neg)
    F = alpha[:, None] * a[None, :] + noise * np.linalg.norm(a) * rng.standard_normal((N, K))
    return F, truth


def lda_direction(F, truth):
    Fp, Fn = F[truth], F[~truth]
    Sw = np.cov(Fp, rowvar=False, bias=True) + np.cov(Fn, rowvar=False, bias=True)
    return np.linalg.solve(np.atleast_2d(Sw), Fp.mean(0) - Fn.mean(0))


def mixture_loglik(y, mu_lo, mu_hi, sd_lo, sd_hi, q):
    def pdf(x, m, s):
        return np.exp(-0.5 * ((x - m) / s) ** 2) / (s * np.sqrt(2 * np.pi))
    return float(np.sum(np.log(q * pdf(y, mu_hi, sd_hi) + (1 - q) * pdf(y, mu_lo, sd_lo))))
