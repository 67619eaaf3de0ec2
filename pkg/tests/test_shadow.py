import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bayesmia.attacks import gaussian_tau_closed_form
from bayesmia.core import Dataset, SplitSpec, draw_split, gen_gaussian_dataset, gen_two_class_features
from bayesmia.errors import CalibrationError, NumericalError, TrainingError
from bayesmia.evaluation import accuracy_at
from bayesmia.models import ModelParams, gaussian_posterior_sampler, per_sample_losses, train_gaussian_mean
from bayesmia.shadow import (
    ShadowEnsemble,
    estimate_tau_global,
    estimate_tau_per_sample,
    load_ensemble,
    logmeanexp,
    monte_carlo_tau,
    monte_carlo_tau_many,
    posterior_mean_loss,
    save_ensemble,
    train_shadows,
)


def _fake_ensemble(masks):
    masks = np.asarray(masks, dtype=bool)
    K, N = masks.shape
    pool = Dataset(np.zeros((N, 1)), np.zeros(N))
    models = [ModelParams([0.0], "gaussian_mean") for _ in range(K)]
    return ShadowEnsemble(models, masks, pool, list(range(K)))


@pytest.fixture(scope="module")
def gaussian_pool():
    return gen_gaussian_dataset(200, 2000, np.zeros(2000), 11)


# --- training --------------------------------------------------------------------------


def test_single_shadow():
    pool = gen_gaussian_dataset(10, 3, np.zeros(3), 1)
    ens = train_shadows(pool, 1, 0.5, 7, "gaussian_mean")
    assert ens.K == 1 and ens.masks.shape == (1, 10)
    np.testing.assert_array_equal(ens.models[0].theta, pool.X[ens.masks[0]].mean(axis=0))


def test_member_counts_exact_masks():
    pool = gen_two_class_features(200, 4, 2.0, 3)
    ens = train_shadows(pool, 30, 0.5, 9, "logistic_regression")
    counts = ens.member_counts()
    assert counts.mean() == 15.0
    assert counts.min() >= 5 and counts.max() <= 25
    for k in range(ens.K):
        assert ens.models[k].n_train == int(ens.masks[k].sum()) == 100


def test_member_counts_bernoulli_masks():
    pool = gen_gaussian_dataset(200, 2, np.zeros(2), 3)
    ens = train_shadows(pool, 30, 0.5, 9, "gaussian_mean", split_mode="bernoulli")
    counts = ens.member_counts()
    # each count ~ Binomial(30, 1/2); P(outside [5, 25]) < 3e-4 per sample
    assert counts.min() >= 5 and counts.max() <= 25
    assert abs(counts.mean() - 15) < 4 * math.sqrt(7.5 / 200)


def test_determinism_and_threads():
    pool = gen_two_class_features(120, 3, 2.0, 4)
    a = train_shadows(pool, 6, 0.5, 42, "logistic_regression")
    b = train_shadows(pool, 6, 0.5, 42, "logistic_regression", threads=3)
    np.testing.assert_array_equal(a.masks, b.masks)
    for ma, mb in zip(a.models, b.models):
        assert ma.theta.tobytes() == mb.theta.tobytes()
    c = train_shadows(pool, 6, 0.5, 43, "logistic_regression")
    assert not np.array_equal(a.masks, c.masks)


def test_trainer_failure_names_shadow():
    X = np.zeros((6, 1))
    pool = Dataset(X, [0, 0, 0, 0, 0, 1], 2)
    with pytest.raises(TrainingError, match="shadow"):
        train_shadows(pool, 20, 0.5, 0, "logistic_regression")


def test_ensemble_validation():
    with pytest.raises(CalibrationError):
        train_shadows(gen_gaussian_dataset(4, 1, np.zeros(1), 0), 0, 0.5, 0, "gaussian_mean")
    with pytest.raises(CalibrationError):
        _fake_ensemble(np.zeros((0, 3)))


def test_save_load_roundtrip(tmp_path):
    pool = gen_two_class_features(50, 3, 2.0, 4)
    ens = train_shadows(pool, 4, 0.5, 2**63 + 5, "logistic_regression")
    save_ensemble(ens, tmp_path / "sh")
    back = load_ensemble(tmp_path / "sh", pool)
    np.testing.assert_array_equal(back.masks, ens.masks)
    assert back.seeds == ens.seeds
    for a, b in zip(ens.models, back.models):
        assert a.theta.tobytes() == b.theta.tobytes()
    with pytest.raises(CalibrationError):
        load_ensemble(tmp_path / "missing", pool)


# --- global threshold ------------------------------------------------------------------


def test_global_tau_separable():
    masks = np.array([[1, 1, 0, 0], [0, 1, 1, 0]], dtype=bool)
    ens = _fake_ensemble(masks)
    losses = np.where(masks, 0.0, 1.0)
    tau = estimate_tau_global(ens, losses)
    assert tau.value == 0.5 and not tau.degenerate
    assert accuracy_at(-losses.ravel(), masks.ravel(), -tau.value) == 1.0


def test_global_tau_no_signal():
    masks = np.array([[1, 0, 1, 0], [0, 1, 0, 1]], dtype=bool)
    ens = _fake_ensemble(masks)
    losses = np.array([[0.2, 0.2, 0.7, 0.7], [0.2, 0.2, 0.7, 0.7]])
    tau = estimate_tau_global(ens, losses)
    acc = np.mean((losses.ravel() <= tau.value) == masks.ravel())
    assert acc == 0.5


def test_global_tau_degenerate_warns():
    ens = _fake_ensemble(np.array([[1, 0], [0, 1]], dtype=bool))
    with pytest.warns(UserWarning):
        tau = estimate_tau_global(ens, np.full((2, 2), 3.0))
    assert tau.degenerate and tau.value == 3.0


def test_global_tau_gaussian_accuracy_parity(gaussian_pool):
    d = 2000
    ens = train_shadows(gaussian_pool, 30, 0.5, 5, "gaussian_mean")
    tau = estimate_tau_global(ens).value
    # members have mean loss d(1 - 1/n')/2, non-members d(1 + 1/n')/2: the Bayes cut is d/2
    assert abs(tau - d / 2) < 0.1 * d / 2
    target = gen_gaussian_dataset(200, d, np.zeros(d), 99)
    split = draw_split(200, 0.5, 3, "exact")
    losses = per_sample_losses(train_gaussian_mean(target, split), target)
    acc_est = accuracy_at(-losses, split.mask, -tau)
    acc_ref = accuracy_at(-losses, split.mask, -d / 2)
    assert abs(acc_est - acc_ref) < 0.05


# --- per-sample threshold --------------------------------------------------------------


def test_per_sample_tau_midpoint():
    masks = np.array([[1], [1], [0], [0]], dtype=bool)
    losses = np.array([[0.1], [0.2], [0.9], [1.1]])
    tau = estimate_tau_per_sample(_fake_ensemble(masks), losses)
    assert tau.values.tolist() == [pytest.approx(0.55)]


def test_per_sample_tau_overlap():
    masks = np.array([[1], [0], [1], [0]], dtype=bool)
    losses = np.array([[0.5], [0.5], [0.5], [0.5]])
    t = estimate_tau_per_sample(_fake_ensemble(masks), losses).values[0]
    # every cut ties; the smallest wins and is clamped just below the common loss
    assert t == np.nextafter(0.5, -np.inf)
    pred = losses[:, 0] <= t
    m = masks[:, 0]
    balanced = 0.5 * (pred[m].mean() + (~pred[~m]).mean())
    assert balanced == 0.5


def test_per_sample_tau_balanced_objective():
    # three members with low loss, one non-member with lower loss than one member
    masks = np.array([[1], [1], [1], [0], [0]], dtype=bool)
    losses = np.array([[0.1], [0.2], [0.8], [0.5], [0.9]])
    t = estimate_tau_per_sample(_fake_ensemble(masks), losses).values[0]
    assert t == pytest.approx(0.35)


def test_per_sample_tau_errors_list_indices():
    masks = np.array([[1, 1, 0], [0, 1, 1]], dtype=bool)
    with pytest.raises(CalibrationError) as info:
        estimate_tau_per_sample(_fake_ensemble(masks), np.zeros((2, 3)))
    assert info.value.indices == [1]


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_per_sample_tau_is_optimal(K, N, seed):
    rng = np.random.default_rng(seed)
    masks = np.zeros((K, N), dtype=bool)
    for j in range(N):
        k_in = rng.integers(1, K)
        masks[rng.permutation(K)[:k_in], j] = True
    losses = rng.integers(0, 5, size=(K, N)).astype(float)
    ens = _fake_ensemble(masks)
    tau = estimate_tau_per_sample(ens, losses).values
    assert np.array_equal(tau, estimate_tau_per_sample(ens, losses).values)
    for j in range(N):
        m, l = masks[:, j], losses[:, j]

        def bal(t):
            p = l <= t
            return p[m].mean() + (~p[~m]).mean()

        cands = [l.min() - 1] + sorted(set(l)) + [l.max() + 1]
        best = max(bal(t) for t in cands)
        assert bal(tau[j]) == pytest.approx(best, abs=1e-12)
        assert np.nextafter(l.min(), -np.inf) <= tau[j] <= l.max()


def test_per_sample_tau_tracks_distance_on_gaussian_pool(gaussian_pool):
    ens = train_shadows(gaussian_pool, 30, 0.5, 5, "gaussian_mean")
    tau = estimate_tau_per_sample(ens).values
    closed = gaussian_tau_closed_form(gaussian_pool.X, np.zeros(2000), 100)
    r = np.corrcoef(tau, closed)[0, 1]
    assert r > 0.9
    assert r * r > 0.8


def test_per_sample_tau_concentrated_on_logistic_pool():
    pool = gen_two_class_features(200, 8, 4.0, 6)
    ens = train_shadows(pool, 30, 0.5, 8, "logistic_regression")
    L = ens.loss_matrix()
    tau = estimate_tau_per_sample(ens, L).values
    assert np.std(tau) < np.std(L)


# --- Monte-Carlo threshold -------------------------------------------------------------


def test_mc_tau_point_mass():
    t0 = np.array([1.0, -2.0])
    z = np.array([0.5, 0.5])
    draws = np.tile(t0, (50, 1))
    expected = 0.5 * float((t0 - z) @ (t0 - z))
    assert monte_carlo_tau(z, draws) == pytest.approx(expected, rel=1e-15)
    assert monte_carlo_tau(z, draws, temperature=3.0) == pytest.approx(expected, rel=1e-14)


def test_mc_tau_stable_for_huge_losses():
    draws = np.array([[1e3], [1e3 + 1.0]])
    tau = monte_carlo_tau(np.zeros(1), draws)
    # losses 5e5 and 5e5 + 1000.5: the second term underflows, leaving log 2
    assert tau == pytest.approx(5e5 + math.log(2), rel=1e-15)
    with pytest.raises(NumericalError):
        logmeanexp(np.array([-np.inf, -np.inf]))
    with pytest.raises(ValueError):
        monte_carlo_tau(np.zeros(1), draws, num_draws=0)


def test_mc_tau_jensen(rng):
    data = gen_gaussian_dataset(30, 3, np.zeros(3), 1)
    split = SplitSpec(np.ones(30, bool), 0.5)
    draws = gaussian_posterior_sampler(data, split, 4).draw(5000)
    for _ in range(20):
        z = rng.normal(size=3)
        assert monte_carlo_tau(z, draws) <= posterior_mean_loss(z, draws) + 1e-12


def test_mc_tau_variance_scaling():
    data = gen_gaussian_dataset(10, 3, np.zeros(3), 1)
    split = SplitSpec(np.ones(10, bool), 0.5)
    z = np.array([1.0, 0.0, -1.0])
    samp = gaussian_posterior_sampler(data, split, 21)
    small = [monte_carlo_tau(z, samp, num_draws=2000) for _ in range(400)]
    large = [monte_carlo_tau(z, samp, num_draws=4000) for _ in range(400)]
    ratio = np.var(small, ddof=1) / np.var(large, ddof=1)
    # ratio of two sample variances with 399 dof each; 2 * exp(+-4 * sqrt(2/399))
    assert 2 * math.exp(-0.3) < ratio < 2 * math.exp(0.3)


def test_mc_tau_many_matches_single(rng):
    draws = rng.normal(size=(300, 4))
    Z = rng.normal(size=(5, 4))
    many = monte_carlo_tau_many(Z, draws)
    single = [monte_carlo_tau(z, draws) for z in Z]
    np.testing.assert_allclose(many, single, rtol=1e-15)


def test_mc_tau_custom_loss():
    draws = np.array([[0.0], [1.0]])
    tau = monte_carlo_tau(0.0, draws, loss=lambda t, z: np.abs(t[:, 0] - z))
    assert tau == pytest.approx(-math.log(0.5 * (1 + math.exp(-1))))


def test_no_warnings_on_regular_input():
    ens = _fake_ensemble(np.array([[1, 0], [0, 1]], dtype=bool))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        estimate_tau_global(ens, np.array([[0.0, 1.0], [1.0, 0.0]]))
