import numpy as np
import pytest
from hypothesis import given, strategies as st

from uaad import cca
from uaad.core_io import LagConfig, SignalBuffer, segment
from uaad.errors import DegenerateLabels
from uaad.linalg import finalize
from uaad.synth import SynthConfig, generate

from oracles import power_cca


@pytest.fixture(scope="module")
def fitted(small_segs):
    return cca.fit(small_segs, small_segs.labels_true.astype(float))


def test_top_correlation_matches_oracle(small_segs, fitted):
    R = finalize(small_segs.stats().accumulator(small_segs.labels_true.astype(float)))
    rho = power_cca(*R)
    assert fitted.canonical_correlations[0] == pytest.approx(rho, rel=1e-6)


def test_encoder_solves_second_problem(small_segs, fitted):
    R_xx, R_ss, R_xs = finalize(small_segs.stats().accumulator(
        small_segs.labels_true.astype(float)))
    M = R_xs.T @ np.linalg.solve(R_xx, R_xs)
    for k in range(fitted.K):
        e = fitted.encoders[k]
        lhs = M @ e
        rhs = fitted.eigenvalues[k] * R_ss @ e
        assert np.linalg.norm(lhs - rhs) < 1e-8 * np.linalg.norm(lhs)
        assert e @ R_ss @ e == pytest.approx(1.0)
        assert fitted.decoders[k] @ R_xs @ e >= 0


def test_scale_invariance_of_labels(small_segs):
    p = small_segs.labels_true.astype(float)
    a = cca.fit(small_segs, p)
    b = cca.fit(small_segs, 0.37 * p)
    np.testing.assert_allclose(a.decoders, b.decoders, rtol=1e-8, atol=1e-12)
    np.testing.assert_allclose(a.eigenvalues, b.eigenvalues, rtol=1e-10)


def test_features_match_direct(small_segs, fitted):
    F = cca.features(fitted, small_segs)
    assert F.shape == (small_segs.N, 2)
    for n in (0, 7, small_segs.N - 1):
        np.testing.assert_allclose(
            F[n], cca.features_from_matrices(fitted, small_segs.X[n], small_segs.S[n]),
            rtol=1e-10, atol=1e-12)


@given(st.floats(0.01, 100), st.floats(0.01, 100))
def test_feature_rescaling(small_segs, fitted, c1, c2):
    scaled = cca.CcaModel(fitted.cfg, c1 * fitted.decoders, c2 * fitted.encoders,
                          fitted.eigenvalues)
    X, S = small_segs.X[3], small_segs.S[3]
    np.testing.assert_allclose(cca.features_from_matrices(scaled, X, S),
                               cca.features_from_matrices(fitted, X, S), rtol=1e-10)
    np.testing.assert_allclose(cca.features_from_matrices(fitted, 2.5 * X, 0.1 * S),
                               cca.features_from_matrices(fitted, X, S), rtol=1e-10)


def test_self_correlation_is_one(rng):
    cfg = LagConfig(L_x=1, L_s=1, S=0, K=1)
    model = cca.CcaModel(cfg, np.array([[1.0, 0.0]]), np.array([[1.0]]), np.array([1.0]))
    X = rng.standard_normal((2, 50))
    S = X[:1].copy()
    assert cca.features_from_matrices(model, X, S)[0] == pytest.approx(1.0)


def test_independent_envelope_null(small_data, small_lag):
    r = np.random.default_rng(9)
    env = SignalBuffer(r.standard_normal(small_data.eeg.n_samples), 64.0, "envelope")
    segs = segment(small_data.eeg, env, small_lag, 10.0)
    model = cca.fit(segs.subset(np.arange(0, segs.N, 2)), np.ones((segs.N + 1) // 2))
    F = cca.features(model, segs.subset(np.arange(1, segs.N, 2)))
    se = F.std(0) / np.sqrt(F.shape[0])
    assert np.all(np.abs(F.mean(0)) < 3 * se)


def test_components_uncorrelated(small_segs):
    model = cca.fit(small_segs, np.ones(small_segs.N), ridge=0.0)
    z, _ = cca.project(model, small_segs)
    idx = (small_segs.starts[:, None] + np.arange(small_segs.tau)).ravel()
    Z = z[:, idx]
    G = Z @ Z.T / small_segs.N
    assert abs(G[0, 1]) < 1e-6 * np.sqrt(G[0, 0] * G[1, 1])
    np.testing.assert_allclose(np.diag(G), 1.0, rtol=1e-8)


def test_mean_rho_tracks_eigenvalue():
    data = generate(SynthConfig(C=8, duration=1200.0, noise_power=20.0, alpha_neg=1.0, seed=5))
    segs = data.segments(LagConfig(L_x=5, L_s=5, S=2, K=2), 10.0)
    model = cca.fit(segs, np.ones(segs.N))
    rho = cca.features(model, segs)[:, 0].mean()
    assert rho == pytest.approx(model.canonical_correlations[0], rel=0.05)


def test_discriminative_widens_training_gap(small_segs):
    truth = small_segs.labels_true
    p = truth.astype(float)
    gaps = {}
    for mode in ("normal", "discriminative"):
        F = cca.features(cca.fit(small_segs, p, mode), small_segs)[:, 0]
        gaps[mode] = F[truth].mean() - F[~truth].mean()
    assert gaps["discriminative"] >= gaps["normal"]


def test_discriminative_needs_informative_labels(small_segs):
    with pytest.raises(DegenerateLabels):
        cca.fit(small_segs, np.full(small_segs.N, 0.5), "discriminative")
    with pytest.raises(DegenerateLabels):
        cca.fit(small_segs, np.ones(small_segs.N), "discriminative")

