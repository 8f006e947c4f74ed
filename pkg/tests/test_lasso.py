import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import tehscreen as ts
from tehscreen.errors import DataError
from tehscreen.lasso import LassoPath


def orthonormal_dataset(c=(5.0, 3.0, 1.0), n=64, seed=0):
    """Candidates with mean 0 and x_j'x_k / n = 1{j=k}; y = sum c_j x_j / n-scale.

    Columns are built by orthonormalizing centered noise, so standardization
    inside fit_path is (numerically) the identity and x_j'y/n == c_j exactly
    up to rounding.
    """
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n, len(c)))
    raw = raw - raw.mean(axis=0)
    q, _ = np.linalg.qr(raw)
    x = np.sqrt(n) * q  # x_j'x_j == n, so x_j'y / n == c_j below
    y = x @ np.asarray(c)
    t = np.array([1, 0] * (n // 2))
    return ts.TrialDataset(y=y, treatment=t, x_candidates=x, x_adjust=np.empty((n, 0)))


def test_soft_threshold_values():
    assert ts.soft_threshold(0.0, 1.0) == 0.0
    assert ts.soft_threshold(3.0, 1.0) == 2.0
    assert ts.soft_threshold(-3.0, 1.0) == -2.0


@settings(max_examples=200, deadline=None)
@given(
    st.floats(allow_nan=False, allow_infinity=False, min_value=-1e6, max_value=1e6),
    st.floats(allow_nan=False, allow_infinity=False, min_value=0, max_value=1e6),
)
def test_soft_threshold_properties(z, lam):
    s = ts.soft_threshold(z, lam)
    assert abs(s) == max(abs(z) - lam, 0.0)
    assert s == 0.0 or np.sign(s) == np.sign(z)
    assert ts.soft_threshold(z, 0.0) == z


def test_soft_threshold_rejects_negative_lambda():
    with pytest.raises(DataError):
        ts.soft_threshold(1.0, -0.5)


def test_orthonormal_closed_form_along_path():
    c = (5.0, 3.0, 1.0)
    d = orthonormal_dataset(c)
    path = ts.fit_path(d, ts.GAUSSIAN, include_treatment=False, n_lambda=40)
    for lam, beta in zip(path.lambdas, path.coefficients_std_per_lambda):
        expected = [np.sign(cj) * max(abs(cj) - lam, 0.0) for cj in c]
        assert np.allclose(beta, expected, atol=1e-8)
    assert path.entry_order == (0, 1, 2)


def test_lambda_max_gives_unpenalized_only_fit():
    d = orthonormal_dataset((2.0, 1.0, 0.5), seed=3)
    path = ts.fit_path(d, ts.GAUSSIAN, include_treatment=True, n_lambda=10)
    assert np.all(path.coefficients_std_per_lambda[0] == 0.0)
    # unpenalized block at lambda_max must be the plain least-squares fit
    u = np.column_stack([np.ones(d.n), d.treatment, *[d.x_adjust[:, j] for j in range(d.p_c)]])
    direct, *_ = np.linalg.lstsq(u, d.y, rcond=None)
    assert np.allclose(path.unpenalized_per_lambda[0], direct, atol=1e-8)


def test_zero_outcome_keeps_path_empty():
    n = 30
    rng = np.random.default_rng(9)
    d = ts.TrialDataset(
        y=np.zeros(n),
        treatment=np.array([1, 0] * (n // 2)),
        x_candidates=rng.standard_normal((n, 4)),
        x_adjust=np.empty((n, 0)),
    )
    path = ts.fit_path(d, ts.GAUSSIAN, n_lambda=25)
    for beta in path.coefficients_per_lambda:
        assert np.all(beta == 0.0)
    assert path.entry_order == ()


def _kkt_violations(d, family, path):
    """Max KKT violation over the whole path, on the standardized scale."""
    xs = (d.x_candidates - path.center) / path.scale
    u_cols = [np.ones(d.n)]
    if path.include_treatment:
        u_cols.append(d.treatment.astype(float))
    u_cols += [d.x_adjust[:, j] for j in range(d.p_c)]
    u = np.column_stack(u_cols)
    worst = 0.0
    for lam, beta, alpha in zip(
        path.lambdas, path.coefficients_std_per_lambda, path.unpenalized_per_lambda
    ):
        eta = u @ alpha + xs @ beta
        mu = family.inverse_link(eta)
        g = xs.T @ (d.y - mu) / d.n
        for j in range(d.p):
            if beta[j] == 0.0:
                worst = max(worst, abs(g[j]) - lam)
            else:
                worst = max(worst, abs(abs(g[j]) - lam))
    return worst


@pytest.mark.parametrize("family,seed", [(ts.GAUSSIAN, 1), (ts.BINOMIAL, 2)])
def test_kkt_satisfied_pathwise(family, seed):
    spec = ts.SyntheticSpec(
        n=150, p=6, family=family, main_effects=(1.0, -0.6, 0.4, 0.0, 0.0, 0.0),
        treatment_effect=0.5, adjust_effects=(0.3,), seed=seed,
    )
    d = ts.generate_trial(spec)
    path = ts.fit_path(d, family, n_lambda=60)
    assert _kkt_violations(d, family, path) < 1e-6


def test_lambda_grid_shape():
    d = orthonormal_dataset(seed=4)
    path = ts.fit_path(d, ts.GAUSSIAN, n_lambda=30)
    assert len(path.lambdas) == 30
    assert np.all(np.diff(path.lambdas) < 0)
    assert np.all(path.lambdas > 0)
    with pytest.raises(DataError):
        ts.fit_path(d, ts.GAUSSIAN, n_lambda=1)


def _manual_path(entry_order, p):
    return LassoPath(
        lambdas=np.array([1.0, 0.5]),
        coefficients_per_lambda=(np.zeros(p), np.zeros(p)),
        coefficients_std_per_lambda=(np.zeros(p), np.zeros(p)),
        unpenalized_per_lambda=(np.zeros(1), np.zeros(1)),
        entry_order=tuple(entry_order),
        unpenalized_indices=(0,),
        include_treatment=False,
        center=np.zeros(p),
        scale=np.ones(p),
    )


def test_rank_by_entry_appends_missing_ascending():
    assert ts.rank_by_entry(_manual_path([2, 0], 4), 4) == [2, 0, 1, 3]


def test_rank_by_entry_full_entry():
    assert ts.rank_by_entry(_manual_path([3, 1, 0, 2], 4), 4) == [3, 1, 0, 2]


def test_entry_order_recovers_effect_strength():
    hits = 0
    seeds = 200
    for r in range(seeds):
        spec = ts.SyntheticSpec(
            n=250, p=3, family=ts.GAUSSIAN, main_effects=(1.0, 0.4, 0.0),
            treatment_effect=0.3, seed=ts.derive_seed(777, r),
        )
        d = ts.generate_trial(spec)
        path = ts.fit_path(d, ts.GAUSSIAN, n_lambda=50)
        if ts.rank_by_entry(path, 3) == [0, 1, 2]:
            hits += 1
    assert hits > seeds / 2


def test_path_continuity_smoke():
    # Adjacent-lambda solutions should move by an amount proportional to the
    # lambda gap on a well-conditioned design (loose smoke bound, not exact).
    d = orthonormal_dataset((4.0, 2.0, 1.0), seed=6)
    path = ts.fit_path(d, ts.GAUSSIAN, include_treatment=False, n_lambda=80)
    betas = np.vstack(path.coefficients_std_per_lambda)
    gaps = -np.diff(path.lambdas)
    jumps = np.max(np.abs(np.diff(betas, axis=0)), axis=1)
    assert np.all(jumps <= 10.0 * gaps + 1e-12)


def test_coefficients_reported_on_original_scale():
    rng = np.random.default_rng(11)
    n = 120
    x = rng.standard_normal((n, 2)) * np.array([10.0, 0.1])
    y = 0.5 * x[:, 0] + rng.standard_normal(n) * 0.1
    d = ts.TrialDataset(
        y=y, treatment=np.array([1, 0] * (n // 2)), x_candidates=x, x_adjust=np.empty((n, 0))
    )
    path = ts.fit_path(d, ts.GAUSSIAN, n_lambda=60)
    final = path.coefficients_per_lambda[-1]
    assert final[0] == pytest.approx(0.5, abs=0.02)
