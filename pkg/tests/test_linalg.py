import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from uaad.errors import NoPositiveMass, NotPositiveDefinite
from uaad.linalg import CovarianceAccumulator, accumulate, finalize, gevd_topk


def rand_pair(r, n):
    M = r.standard_normal((n, n))
    A = M + M.T
    G = r.standard_normal((n, n))
    B = G @ G.T + n * np.eye(n)
    return A, B


def segs(r, n=4, dx=6, ds=3, T=30):
    return [(r.standard_normal((dx, T)), r.standard_normal((ds, T))) for _ in range(n)]


def test_diag_case():
    lam, V = gevd_topk(np.diag([1.0, 3.0]), np.eye(2), 2)
    np.testing.assert_allclose(lam, [3.0, 1.0])
    np.testing.assert_allclose(np.abs(V), [[0, 1], [1, 0]], atol=1e-15)


def test_a_equals_b():
    A = np.diag([2.0, 1.0])
    lam, V = gevd_topk(A, A, 2)
    np.testing.assert_allclose(lam, [1.0, 1.0])
    np.testing.assert_allclose(V.T @ A @ V, np.eye(2), atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(2, 20))
def test_residual_and_orthonormality(seed, n):
    r = np.random.default_rng(seed)
    A, B = rand_pair(r, n)
    lam, V = gevd_topk(A, B, n)
    for k in range(n):
        v = V[:, k]
        res = np.linalg.norm(A @ v - lam[k] * B @ v)
        assert res <= 1e-8 * (np.linalg.norm(A) + abs(lam[k]) * np.linalg.norm(B))
    assert np.max(np.abs(V.T @ B @ V - np.eye(n))) < 1e-8
    assert np.all(np.diff(lam) <= 0)


def test_matches_scipy_eigh(rng):
    A, B = rand_pair(rng, 12)
    lam, _ = gevd_topk(A, B, 4)
    ref = scipy.linalg.eigh(A, B, eigvals_only=True)[::-1][:4]
    np.testing.assert_allclose(lam, ref, rtol=1e-10)


@given(st.floats(0.1, 100.0))
def test_scaling(c):
    r = np.random.default_rng(1)
    A, B = rand_pair(r, 8)
    lam = gevd_topk(A, B, 3)[0]
    np.testing.assert_allclose(gevd_topk(c * A, c * B, 3)[0], lam, rtol=1e-9)
    np.testing.assert_allclose(gevd_topk(c * A, B, 3)[0], c * lam, rtol=1e-9)


def test_not_spd():
    with pytest.raises(NotPositiveDefinite):
        gevd_topk(np.eye(2), np.diag([1.0, -1.0]), 1)


def test_p_one_leaves_neg_untouched(rng):
    X, S = segs(rng, 1)[0]
    acc = CovarianceAccumulator(6, 3).add(X, S, 1.0)
    assert np.all(acc.sum_xs_neg == 0)


def test_half_label_splits_evenly(rng):
    X, S = segs(rng, 1)[0]
    acc = CovarianceAccumulator(6, 3).add(X, S, 0.5)
    np.testing.assert_array_equal(acc.sum_xs_pos, acc.sum_xs_neg)
    np.testing.assert_allclose(acc.sum_xs_pos, 0.5 * X @ S.T)


@given(st.integers(0, 10_000), st.integers(2, 8))
def test_order_and_merge(seed, n):
    r = np.random.default_rng(seed)
    data = segs(r, n)
    p = r.uniform(0, 1, n)
    whole = CovarianceAccumulator(6, 3)
    for (X, S), pi in zip(data, p):
        whole.add(X, S, pi)
    rev = CovarianceAccumulator(6, 3)
    for (X, S), pi in reversed(list(zip(data, p))):
        rev = accumulate(rev, X, S, pi)
    k = n // 2
    a, b = CovarianceAccumulator(6, 3), CovarianceAccumulator(6, 3)
    for i, ((X, S), pi) in enumerate(zip(data, p)):
        (a if i < k else b).add(X, S, pi)
    merged = a.merge(b)
    for other in (rev, merged):
        for name in ("sum_xx", "sum_ss", "sum_xs_pos", "sum_xs_neg"):
            w, o = getattr(whole, name), getattr(other, name)
            assert np.max(np.abs(w - o)) <= 1e-10 * np.max(np.abs(w))
        assert other.weight_pos == pytest.approx(whole.weight_pos, rel=1e-12)


def test_modes_agree_for_all_ones(rng):
    acc = CovarianceAccumulator(6, 3)
    for X, S in segs(rng):
        acc.add(X, S, 1.0)
    n = finalize(acc, "normal")
    d = finalize(acc, "discriminative") if acc.weight_neg > 1e-12 else None
    assert d is None  # no negative mass at all
    np.testing.assert_array_equal(n[2], acc.sum_xs_pos / 4)


def test_discriminative_formula(rng):
    acc = CovarianceAccumulator(6, 3)
    p = [0.9, 0.2, 0.7, 0.4]
    raw = segs(rng)
    for (X, S), pi in zip(raw, p):
        acc.add(X, S, pi)
    _, _, Rd = finalize(acc, "discriminative")
    want = sum((2 * pi - 1) * X @ S.T for (X, S), pi in zip(raw, p)) / sum(p)
    np.testing.assert_allclose(Rd, want, rtol=1e-12)


def test_random_labels_halve_class_cross_terms(small_segs):
    # E[p] = 1/2 independent of class, so the weighted R_xs tends to the pooled mean
    truth = small_segs.labels_true
    st_ = small_segs.stats()
    N = small_segs.N
    pos = st_.xs[truth].sum(0) / truth.sum()
    neg = st_.xs[~truth].sum(0) / (~truth).sum()
    pooled = (truth.sum() * pos + (~truth).sum() * neg) / N
    vals = []
    for seed in range(200):
        p = np.random.default_rng(seed).uniform(0, 1, N)
        vals.append(finalize(st_.accumulator(p), "normal")[2])
    avg = np.mean(vals, axis=0)
    assert np.linalg.norm(avg - pooled) < 0.05 * np.linalg.norm(pooled)


def test_ridge_shifts_spectrum(rng):
    acc = CovarianceAccumulator(6, 3)
    for X, S in segs(rng):
        acc.add(X, S, 1.0)
    R0 = finalize(acc, ridge=0.0)[0]
    R1 = finalize(acc, ridge=0.01)[0]
    shift = 0.01 * np.mean(np.diag(R0))
    np.testing.assert_allclose(np.linalg.eigvalsh(R1), np.linalg.eigvalsh(R0) + shift,
                               rtol=1e-10, atol=1e-12)


def test_empty_and_massless():
    acc = CovarianceAccumulator(2, 1)
    with pytest.raises(NoPositiveMass):
        finalize(acc)
    acc.add(np.ones((2, 3)), np.ones((1, 3)), 0.0)
    with pytest.raises(NoPositiveMass):
        finalize(acc)


def test_decay(rng):
    X, S = segs(rng, 1)[0]
    acc = CovarianceAccumulator(6, 3).add(X, S, 0.3).decay(0.5)
    np.testing.assert_allclose(acc.sum_xx, 0.5 * X @ X.T)
    assert acc.weight_pos == pytest.approx(0.15)


def test_window_stats_match_direct(small_segs):
    p = np.linspace(0, 1, small_segs.N)
    acc = small_segs.stats().accumulator(p)
    ref = CovarianceAccumulator(small_segs.dim_x, small_segs.dim_s)
    for n in range(small_segs.N):
        ref.add(small_segs.X[n], small_segs.S[n], p[n])
    for name in ("sum_xx", "sum_ss", "sum_xs_pos", "sum_xs_neg"):
        np.testing.assert_allclose(getattr(acc, name), getattr(ref, name), rtol=1e-10,
                                   atol=1e-9)
