import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtgmm.model import EnsembleConfig, equicorrelated, two_task, validate
from mtgmm.phase import (
    Axis,
    NotUnsupervisedError,
    OutOfRangeError,
    apply_axis,
    equal_correlation_threshold,
    feasibility,
    grid_csv,
    scan,
    spectrum,
    two_task_boundary,
)
from mtgmm.solver import single_task, solve


def test_single_task_boundary_is_infeasible():
    ok, spec = feasibility(single_task(1.0, 1.0, 0.0))
    assert spec.max_eigenvalue == pytest.approx(1.0, abs=1e-15)
    assert not ok


def test_two_task_example_is_feasible():
    lam = 0.9
    assert (1 - lam**2) ** 2 < 0.7**4 * lam**4
    assert feasibility(two_task(0.7, lam=(lam, lam)))[0]


def test_three_tasks_straddle_threshold():
    assert equal_correlation_threshold(3, 0.7) == pytest.approx(1 / np.sqrt(1.98))
    assert not feasibility(equicorrelated(3, 0.7, 0.71))[0]
    assert feasibility(equicorrelated(3, 0.7, 0.72))[0]


def test_labeled_data_is_rejected():
    with pytest.raises(NotUnsupervisedError, match=r"eta\[1\]"):
        feasibility(two_task(0.5, eta=(0.0, 0.2)))


def test_two_task_boundary_examples():
    for l1 in (0.0, 0.3, 0.99):
        assert two_task_boundary(0.0, l1) == 1.0
    # c = 1 on the diagonal: (1 - l^2)^2 = l^4, so l^2 = 1/2
    lam = 2 ** -0.5
    assert two_task_boundary(1.0, lam) == pytest.approx(lam, abs=1e-15)
    assert two_task_boundary(0.7, 1.0) == 0.0
    with pytest.raises(OutOfRangeError):
        two_task_boundary(1.2, 0.5)
    with pytest.raises(OutOfRangeError):
        two_task_boundary(0.5, 1.5)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 1), st.floats(0.01, 0.999))
def test_two_task_boundary_is_on_the_spectral_boundary(c, l1):
    l2 = two_task_boundary(c, l1)
    assert 0 <= l2 <= 1
    assert spectrum(two_task(c, lam=(l1, l2), allow_semidefinite=True)).max_eigenvalue == pytest.approx(1.0, abs=1e-12)


def test_threshold_examples_and_monotonicity():
    assert equal_correlation_threshold(1, 0.4) == 1.0
    assert equal_correlation_threshold(2, 1.0) == pytest.approx(2**-0.5, abs=1e-15)
    cs = np.linspace(0.05, 1, 20)
    vals = np.array([[equal_correlation_threshold(T, c) for c in cs] for T in range(1, 8)])
    assert np.all(np.diff(vals[1:], axis=1) < 0)
    assert np.all(np.diff(vals, axis=0) <= 0)
    with pytest.raises(OutOfRangeError):
        equal_correlation_threshold(0, 0.5)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_determinant_sign_matches_closed_form(c, l1, l2):
    R = spectrum(two_task(c, lam=(l1, l2), allow_semidefinite=True)).R
    det = np.linalg.det(np.eye(2) - R)
    closed = (1 - l1**2) * (1 - l2**2) - c**4 * l1**2 * l2**2
    assert det == pytest.approx(closed, abs=1e-12)


def random_unsupervised(rng, T):
    A = rng.standard_normal((T, T + 1))
    S = A @ A.T
    d = 1 / np.sqrt(np.diag(S))
    C = d[:, None] * S * d[None, :]
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 1.0)
    return validate(EnsembleConfig.from_snr(C, rng.uniform(0.1, 2.5, T), rng.uniform(0.2, 2, T), np.zeros(T)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_R_is_symmetric_psd_and_permutation_invariant(T, seed):
    rng = np.random.default_rng(seed)
    ens = random_unsupervised(rng, T)
    spec = spectrum(ens)
    np.testing.assert_allclose(spec.R, spec.R.T, atol=1e-12)
    assert spec.eigenvalues[0] >= -1e-10 * spec.max_eigenvalue
    p = rng.permutation(T)
    cfg = ens.config
    perm = validate(EnsembleConfig(cfg.C[np.ix_(p, p)], cfg.sigma[p], cfg.alpha[p], cfg.eta[p]))
    assert spectrum(perm).max_eigenvalue == pytest.approx(spec.max_eigenvalue, rel=1e-12)


def test_spectrum_and_solver_agree():
    rng = np.random.default_rng(2024)
    n = 0
    while n < 200:
        ens = random_unsupervised(rng, int(rng.integers(1, 5)))
        ok, spec = feasibility(ens)
        if abs(spec.max_eigenvalue - 1) <= 1e-3:
            continue
        assert ok == bool(np.any(solve(ens).q_u > 0))
        n += 1


# -- scans ------------------------------------------------------------------------


def test_axis_names_and_application():
    cfg = equicorrelated(3, 0.2, 1.0).config
    assert apply_axis(cfg, "c", 0.5).C[0, 2] == 0.5
    out = apply_axis(cfg, "c13", 0.4)
    assert out.C[0, 2] == out.C[2, 0] == 0.4 and out.C[0, 1] == 0.2
    assert apply_axis(cfg, "lambda2", 4.0).sigma[1] == 0.5
    assert np.isinf(apply_axis(cfg, "lambda1", 0.0).sigma[0])
    assert apply_axis(cfg, "eta3", 0.5).eta[2] == 0.5
    assert apply_axis(cfg, "c", 1.0).allow_semidefinite
    for bad in ("lambda4", "c11", "gamma1", "c14"):
        with pytest.raises(OutOfRangeError):
            apply_axis(cfg, bad, 0.5)
    with pytest.raises(OutOfRangeError):
        Axis("lambda1", 0, 1, 0)


def test_pair_scan_shape_and_csv():
    grid = scan(two_task(0.7), [Axis("lambda1", 0, 3, 61), Axis("lambda2", 0, 3, 61)], threads=2)
    assert grid.shape == (61, 61) == grid.mu.shape == grid.feasible.shape
    lines = grid_csv(grid).splitlines()
    assert lines[0] == "axis1,axis2,mu,feasible"
    assert len(lines) == 1 + 61 * 61
    assert lines[2].startswith("0,0.050000000000000003,")
    # boundary inside the unit square follows the closed form
    vals = grid.axes[0].values
    for i, l1 in enumerate(vals):
        for j, l2 in enumerate(vals):
            if l1 <= 1 and l2 <= 1:
                closed = (1 - l1**2) * (1 - l2**2) - 0.7**4 * l1**2 * l2**2
                if abs(closed) > 1e-9:
                    assert grid.feasible[i, j] == (closed < 0)
            elif max(l1, l2) > 1:
                assert grid.feasible[i, j]


def test_scan_order_is_independent_of_threads():
    axes = [Axis("lambda1", 0, 2, 7), Axis("c", 0, 1, 5)]
    a = scan(two_task(0.5), axes, with_risk=True, threads=1)
    b = scan(two_task(0.5), axes, with_risk=True, threads=4)
    assert grid_csv(a) == grid_csv(b)
    assert a.risk.shape == (7, 5, 2)
    assert grid_csv(a).splitlines()[0] == "axis1,axis2,mu,feasible,risk_task1,risk_task2"


def test_impossible_region_shrinks_with_correlation():
    axes = [Axis("lambda1", 0, 1, 41), Axis("lambda2", 0, 1, 41)]
    masks = [scan(two_task(c), axes).feasible for c in (0, 0.25, 0.5, 0.75, 1.0)]
    assert not masks[0].any()
    for a, b in zip(masks, masks[1:]):
        assert np.all(b | ~a)
        assert b.sum() > a.sum()


def test_one_by_one_grid():
    grid = scan(two_task(0.7), [Axis("lambda1", 0.9, 0.9, 1)], threads=1)
    assert grid.shape == (1,)
    assert bool(grid.feasible[0]) == feasibility(two_task(0.7, lam=(0.9, 1.0)))[0]
    assert len(grid_csv(grid).splitlines()) == 2


@pytest.mark.parametrize("name, lo, hi", [("c", 0.0, 1.0), ("alpha2", 0.1, 3.0), ("c13", -0.5, 0.9)])
def test_batched_scan_matches_cell_by_cell(name, lo, hi):
    template = equicorrelated(3, 0.2, 0.9)
    axes = [Axis("lambda1", 0, 2, 9), Axis(name, lo, hi, 7)]
    fast = scan(template, axes)
    slow = scan(template, axes, with_risk=True, threads=1)
    np.testing.assert_allclose(fast.mu, slow.mu, rtol=1e-14, atol=0)
    np.testing.assert_array_equal(fast.feasible, slow.feasible)


def test_scan_rejects_labeled_cells():
    with pytest.raises(NotUnsupervisedError, match=r"eta\[1\]"):
        scan(two_task(0.5), [Axis("eta2", 0, 0.5, 3)])
