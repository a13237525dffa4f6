import csv
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtgmm.channels import rademacher_bayes_risk
from mtgmm.model import EnsembleConfig, effective_matrices, equicorrelated, two_task, validate
from mtgmm.solver import risk_report, single_task
from mtgmm.synth import (
    ClassifierWeights,
    DimensionMismatchError,
    DimensionTooSmallError,
    InvalidSizeError,
    NoLabeledDataError,
    classify,
    dump_dataset,
    empirical_risk,
    estimate_parameters,
    fit_supervised,
    generate,
    mixing_matrix,
    predict,
    psd_sqrt,
)


def supervised_pair(c=0.7, sigma=(1.0, 1.0)):
    return validate(EnsembleConfig([[1, c], [c, 1]], sigma, [1, 1], [1, 1]))


def test_shapes_and_unit_mean():
    data = generate(single_task(1.0, 1.0, 1.0), D=3, N=[2], seed=0)
    assert data.Y[0].shape == (2, 3)
    assert np.linalg.norm(data.U[:, 0]) == pytest.approx(1.0, abs=1e-12)
    assert set(np.unique(data.V[0])) <= {-1, 1}


def test_means_have_exact_gram_matrix():
    data = generate(two_task(0.7, lam=(1, 1)), D=1000, N=5, seed=3)
    assert data.U[:, 0] @ data.U[:, 1] == pytest.approx(0.7, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_gram_matrix_exact_for_random_correlations(T, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((T, T))
    S = A @ A.T + 0.05 * np.eye(T)
    d = 1 / np.sqrt(np.diag(S))
    C = d[:, None] * S * d[None, :]
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 1.0)
    ens = validate(EnsembleConfig(C, np.ones(T), np.ones(T), np.ones(T)))
    data = generate(ens, D=T + 1 + int(rng.integers(0, 50)), N=2, seed=seed)
    np.testing.assert_allclose(data.U.T @ data.U, C, atol=1e-10)


def test_all_ones_correlation_gives_identical_means():
    data = generate(validate(equicorrelated(3, 1.0, 1.0).config.replace(eta=[1, 1, 1])), D=50, N=2, seed=1)
    np.testing.assert_allclose(data.U.T @ data.U, np.ones((3, 3)), atol=1e-10)


def test_generation_is_deterministic_and_read_only():
    ens = two_task(0.4, lam=(2, 1), eta=(0.5, 0.5))
    a, b = generate(ens, 40, [30, 20], 9), generate(ens, 40, [30, 20], 9)
    for t in range(2):
        assert np.array_equal(a.Y[t], b.Y[t])
        assert np.array_equal(a.labeled[t], b.labeled[t])
    assert np.array_equal(a.U, b.U)
    assert not a.Y[0].flags.writeable
    c = generate(ens, 40, [30, 20], 10)
    assert not np.array_equal(a.Y[0], c.Y[0])


def test_growing_N_keeps_earlier_points():
    ens = two_task(0.4, lam=(2, 1), eta=(1, 1))
    a, b = generate(ens, 20, 100, 5), generate(ens, 20, 5000, 5)
    np.testing.assert_array_equal(a.Y[0], b.Y[0][:100])


def test_labeled_fraction_concentrates():
    data = generate(two_task(0.4, eta=(0.3, 0.8)), 10, 20_000, 4)
    assert np.mean(data.labeled[0]) == pytest.approx(0.3, abs=0.02)
    assert np.mean(data.labeled[1]) == pytest.approx(0.8, abs=0.02)


def test_generation_errors():
    ens = two_task(0.4)
    with pytest.raises(DimensionTooSmallError):
        generate(ens, 2, 5, 0)
    with pytest.raises(InvalidSizeError):
        generate(ens, 10, [5, 0], 0)
    with pytest.raises(InvalidSizeError):
        generate(validate(EnsembleConfig.from_snr(np.eye(2), [0, 1], [1, 1], [1, 1])), 10, 5, 0)


def test_psd_sqrt_squares_back():
    C = np.array([[1, 0.5, 0.2], [0.5, 1, 0.3], [0.2, 0.3, 1]])
    R = psd_sqrt(C)
    np.testing.assert_allclose(R @ R, C, atol=1e-14)
    np.testing.assert_allclose(psd_sqrt(np.ones((2, 2))) @ psd_sqrt(np.ones((2, 2))), np.ones((2, 2)), atol=1e-14)


# -- classifier -------------------------------------------------------------------


def test_mixing_matrix_formula():
    ens = validate(EnsembleConfig([[1, 0.3], [0.3, 1]], [1, 0.5], [0.5, 2], [1, 1]))
    M = effective_matrices(ens).M
    MD = M @ np.diag(ens.alpha)
    np.testing.assert_allclose(mixing_matrix(M, ens.alpha), MD @ np.linalg.inv(np.eye(2) + MD), atol=1e-14)


def test_fused_directions_mix_class_means():
    ens = supervised_pair(0.5, (1, 0.5))
    w = fit_supervised(ens, generate(ens, 60, 40, 2))
    np.testing.assert_array_equal(w.Ytilde, w.A @ w.Ybar)


def test_single_task_classifier_is_mean_direction():
    ens = validate(EnsembleConfig([[1.0]], [1.2], [0.5], [1.0]))
    data = generate(ens, 80, 40, 6)
    w = fit_supervised(ens, data)
    assert w.A[0, 0] > 0
    Y = np.random.default_rng(0).standard_normal((500, 80))
    np.testing.assert_array_equal(predict(w, 0, Y), np.where(Y @ w.Ybar[0] >= 0, 1, -1))


def test_uncorrelated_tasks_use_their_own_means():
    ens = validate(EnsembleConfig(np.eye(3), [1, 2, 0.5], [1, 1, 1], [1, 1, 1]))
    w = fit_supervised(ens, generate(ens, 30, 20, 1))
    np.testing.assert_allclose(w.A, np.diag(np.diag(w.A)), atol=1e-15)
    assert np.all(np.diag(w.A) > 0)


def test_classify_signs_and_tie():
    d = np.array([[1.0, 2.0, 0.0]])
    w = ClassifierWeights(d, np.eye(1), d)
    assert classify(w, 0, d[0]) == 1
    assert classify(w, 0, -d[0]) == -1
    assert classify(w, 0, np.array([2.0, -1.0, 5.0])) == 1
    with pytest.raises(DimensionMismatchError):
        classify(w, 0, np.ones(4))
    with pytest.raises(IndexError):
        classify(w, 1, d[0])


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
def test_positive_rescaling_keeps_predictions(scale, seed):
    rng = np.random.default_rng(seed)
    Yt = rng.standard_normal((2, 15))
    Y = rng.standard_normal((50, 15))
    a = ClassifierWeights(Yt, np.eye(2), Yt)
    b = ClassifierWeights(Yt, np.eye(2), scale * Yt)
    for t in range(2):
        np.testing.assert_array_equal(predict(a, t, Y), predict(b, t, Y))


def test_oracle_direction_with_tiny_noise_is_perfect():
    ens = validate(EnsembleConfig([[1.0]], [1e-3], [1.0], [1.0]))
    data = generate(ens, 50, 5, 0)
    u = data.U[:, 0][None, :]
    p, se = empirical_risk(ens, data, 0, ClassifierWeights(u, np.eye(1), u), 5000, 1)
    assert p == 0.0 and se == 0.0


def test_random_direction_is_chance():
    ens = validate(EnsembleConfig([[1.0]], [1.0], [1.0], [1.0]))
    data = generate(ens, 400, 5, 0)
    r = np.random.default_rng(8).standard_normal((1, 400))
    p, se = empirical_risk(ens, data, 0, ClassifierWeights(r, np.eye(1), r), 20_000, 2)
    # exact risk of a fixed direction w: P(<Y, w> has the wrong sign) = 1 - Phi(<u, w> / (sigma ||w||))
    cos = float(r[0] @ data.U[:, 0]) / np.linalg.norm(r)
    exact = rademacher_bayes_risk(cos**2) if cos >= 0 else 1 - rademacher_bayes_risk(cos**2)
    assert abs(exact - 0.5) < 0.05
    assert abs(p - exact) < 3 * se
    with pytest.raises(InvalidSizeError):
        empirical_risk(ens, data, 0, ClassifierWeights(r, np.eye(1), r), 0, 2)


def test_classifier_tracks_theory_at_one_point():
    ens = supervised_pair(0.5, (1, 0.5))
    data = generate(ens, 500, 500, 11)
    w = fit_supervised(ens, data)
    theory = risk_report(ens).risk
    for t in range(2):
        p, se = empirical_risk(ens, data, t, w, 10_000, 11)
        assert abs(p - theory[t]) <= 3 * (se + 0.01)


# -- estimation -------------------------------------------------------------------


def test_noiseless_estimate_recovers_C():
    ens = validate(EnsembleConfig([[1, 0.7, 0.2], [0.7, 1, 0.4], [0.2, 0.4, 1]], [1e-9] * 3, [1] * 3, [1] * 3))
    with warnings.catch_warnings():
        # ||Ybar||^2 - 1 is rounding noise here and may come out negative
        warnings.simplefilter("ignore", RuntimeWarning)
        est = estimate_parameters(generate(ens, 100, 50, 3))
    np.testing.assert_allclose(est.C_hat, ens.C, atol=1e-8)
    np.testing.assert_allclose(est.sigma_hat, 0, atol=1e-3)


def test_estimates_are_close_at_D_1000():
    # sd of sigma_hat is about 0.04 here (calibrated over 400 seeds); 0.2 is five sd
    ens = supervised_pair()
    errs = []
    for seed in range(20):
        est = estimate_parameters(generate(ens, 1000, 1000, seed))
        errs.append(np.abs(est.sigma_hat - 1))
        assert est.C_hat[0, 0] == est.C_hat[1, 1] == 1.0
        assert est.C_hat[0, 1] == est.C_hat[1, 0]
    assert np.max(errs) < 0.2


def test_variance_estimate_is_unbiased_for_labeled_subset():
    # E ||Ybar||^2 = 1 + sigma^2 D / N_lab
    ens = validate(EnsembleConfig([[1.0]], [1.5], [2.0], [0.5]))
    est = [estimate_parameters(generate(ens, 200, 400, s)).sigma_hat[0] ** 2 for s in range(40)]
    assert np.mean(est) == pytest.approx(2.25, rel=0.05)


def test_estimation_needs_labels_and_flags_clamping():
    with pytest.raises(NoLabeledDataError):
        estimate_parameters(generate(two_task(0.3, eta=(1, 0)), 10, 5, 0))
    ens = validate(EnsembleConfig([[1.0]], [1e-3], [1.0], [1.0]))
    seen = False
    for seed in range(40):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            est = estimate_parameters(generate(ens, 500, 2, seed))
        if est.clamped[0]:
            seen = True
            assert est.sigma_hat[0] == 0.0
            assert any(issubclass(w.category, RuntimeWarning) for w in caught)
    assert seen


def test_dump_dataset(tmp_path):
    ens = two_task(0.4, lam=(1, 2), eta=(0.5, 1))
    data = generate(ens, 4, [3, 2], 0)
    paths = dump_dataset(data, tmp_path)
    assert [p.rsplit("/", 1)[-1] for p in paths] == ["task1.csv", "task2.csv"]
    with open(paths[0]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["label", "labeled_flag", "y_0", "y_1", "y_2", "y_3"]
    assert len(rows) == 4
    assert float(rows[1][2]) == data.Y[0][0, 0]
    assert not (tmp_path / "hidden_means.csv").exists()
    dump_dataset(data, tmp_path, dump_hidden=True)
    assert (tmp_path / "hidden_means.csv").exists()
