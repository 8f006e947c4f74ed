import numpy as np
import pytest

import tehscreen as ts
from tehscreen import glm
from tehscreen.errors import (
    DataError,
    FitError,
    NestingError,
    SeparationError,
)

from _oracles import newton_logistic, ols_rss


def manual_design(columns, kinds=None):
    """Design matrix straight from columns, bypassing the trial builders."""
    matrix = np.column_stack(columns)
    q = matrix.shape[1]
    kinds = kinds or [("candidate", j) for j in range(q)]
    return glm.DesignMatrix(
        matrix=matrix, origin=tuple(kinds), names=tuple(f"v{j}" for j in range(q))
    )


def toy_dataset(n=60, p=3, p_c=0, family=ts.GAUSSIAN, seed=0, **kw):
    spec = ts.SyntheticSpec(
        n=n, p=p, family=family,
        main_effects=kw.pop("main_effects", tuple(0.5 / (j + 1) for j in range(p))),
        treatment_effect=kw.pop("treatment_effect", 0.4),
        adjust_effects=tuple(0.3 for _ in range(p_c)),
        seed=seed, **kw,
    )
    return ts.generate_trial(spec)


# ---------------------------------------------------------------------------
# design builders
# ---------------------------------------------------------------------------


def test_additive_design_layout():
    d = ts.TrialDataset(
        y=np.array([1.0, 2.0, 3.0, 4.0]),
        treatment=np.array([1, 0, 1, 0]),
        x_candidates=np.array([[1.0, 5.0], [2.0, 6.0], [3.0, 8.0], [4.0, 12.0]]),
        x_adjust=np.empty((4, 0)),
    )
    design = ts.build_additive_design(d)
    assert design.width == 4
    assert design.roles == ("candidate", "candidate", "arm_intercept", "arm_intercept")
    assert np.array_equal(design.matrix[:, 2], [1, 0, 1, 0])
    assert np.array_equal(design.matrix[:, 3], [0, 1, 0, 1])


def test_additive_design_drops_duplicate_candidate():
    x = np.array([[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]])
    d = ts.TrialDataset(
        y=np.arange(6.0),
        treatment=np.array([1, 0, 1, 0, 1, 0]),
        x_candidates=np.hstack([x, x]),
        x_adjust=np.empty((6, 0)),
    )
    design = ts.build_additive_design(d)
    assert design.width == 3
    assert design.dropped_columns == (1,)
    assert design.dropped_origin == (("candidate", 1),)


def test_additive_design_appends_adjusters():
    d = toy_dataset(n=40, p=2, p_c=1)
    design = ts.build_additive_design(d)
    assert design.width == 5
    assert design.roles[-1] == "adjust"


def test_interaction_design_masks_by_arm():
    a, b, c, e = 1.0, 2.0, 3.0, 4.0
    d = ts.TrialDataset(
        y=np.zeros(4),
        treatment=np.array([1, 1, 0, 0]),
        x_candidates=np.array([[a], [b], [c], [e]]),
        x_adjust=np.empty((4, 0)),
    )
    design = ts.build_interaction_design(d, selected=[0])
    assert np.array_equal(design.matrix[:, 0], [a, b, 0, 0])
    assert np.array_equal(design.matrix[:, 1], [0, 0, c, e])
    assert design.roles[:2] == ("arm_specific_candidate", "arm_specific_candidate")


def test_interaction_design_identity_projection_equals_select_all():
    d = toy_dataset(n=50, p=3)
    via_selected = ts.build_interaction_design(d, selected=[0, 1, 2])
    via_projection = ts.build_interaction_design(d, projection=np.eye(3))
    assert np.array_equal(via_selected.matrix, via_projection.matrix)


def test_interaction_design_pc1_loading_gives_pc1_scores():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((30, 3)) @ np.diag([3.0, 1.0, 0.5])
    x = x - x.mean(axis=0)  # centered, so X @ v equals the score column
    res = ts.compute_pca(x, standardize=False)
    d = ts.TrialDataset(
        y=np.zeros(30),
        treatment=np.array([1, 0] * 15),
        x_candidates=x,
        x_adjust=np.empty((30, 0)),
    )
    design = ts.build_interaction_design(d, projection=res.loadings[:, [0]])
    recovered = design.matrix[:, 0] + design.matrix[:, 1]  # unmask the two arm blocks
    assert np.allclose(recovered, res.scores[:, 0], atol=1e-10)


def test_interaction_design_empty_selection_rejected():
    d = toy_dataset()
    with pytest.raises(DataError, match="empty selection"):
        ts.build_interaction_design(d, selected=[])


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


def test_fit_gaussian_exact_interpolation():
    design = manual_design([np.array([1.0, 2.0, 3.0]), np.ones(3)])
    fit = ts.fit(design, np.array([1.0, 2.0, 3.0]), ts.GAUSSIAN)
    assert np.allclose(fit.coefficients, [1.0, 0.0], atol=1e-12)
    assert fit.deviance == pytest.approx(0.0, abs=1e-20)


def test_fit_binomial_symmetry():
    design = manual_design([np.array([1.0, -1.0, 1.0, -1.0]), np.ones(4)])
    fit = ts.fit(design, np.array([1.0, 1.0, 0.0, 0.0]), ts.BINOMIAL)
    assert abs(fit.coefficients[0]) < 1e-8
    assert abs(fit.coefficients[1]) < 1e-8


def test_fit_binomial_matches_newton_oracle():
    rng = np.random.default_rng(12)
    X = np.column_stack([rng.standard_normal((50, 2)), np.ones(50)])
    eta = X @ np.array([0.8, -0.5, 0.2])
    y = rng.binomial(1, 1 / (1 + np.exp(-eta))).astype(float)
    design = manual_design(list(X.T))
    fit = ts.fit(design, y, ts.BINOMIAL)
    beta_o, cov_o, ll_o = newton_logistic(X, y)
    assert fit.log_likelihood == pytest.approx(ll_o, abs=1e-6)
    assert np.allclose(fit.coefficients, beta_o, atol=1e-6)
    assert np.allclose(fit.covariance, cov_o, atol=1e-6)


def test_gaussian_irls_equals_normal_equations():
    d = toy_dataset(n=120, p=4, p_c=1, seed=3)
    design = ts.build_additive_design(d)
    fit = ts.fit(design, d.y, ts.GAUSSIAN)
    X = design.matrix
    direct = np.linalg.solve(X.T @ X, X.T @ d.y)
    assert np.max(np.abs(fit.coefficients - direct)) < 1e-10


def test_binomial_score_vector_vanishes():
    d = toy_dataset(n=200, p=4, family=ts.BINOMIAL, seed=4)
    design = ts.build_additive_design(d)
    fit = ts.fit(design, d.y, ts.BINOMIAL)
    mu = ts.BINOMIAL.inverse_link(design.matrix @ fit.coefficients)
    assert np.max(np.abs(design.matrix.T @ (d.y - mu))) < 1e-6


def test_covariance_is_inverse_fisher_information():
    for family, seed in ((ts.GAUSSIAN, 5), (ts.BINOMIAL, 6)):
        d = toy_dataset(n=150, p=3, family=family, seed=seed)
        design = ts.build_additive_design(d)
        fit = ts.fit(design, d.y, family)
        X = design.matrix
        mu = family.inverse_link(X @ fit.coefficients)
        w = family.irls_weights(mu) / family.dispersion(d.y, mu)
        fisher = X.T @ (X * w[:, None])
        assert np.allclose(fit.covariance @ fisher, np.eye(design.width), atol=1e-6)
        assert np.all(np.diag(fit.covariance) >= 0)
        assert np.allclose(fit.std_errors, np.sqrt(np.diag(fit.covariance)))


def test_fit_separation_detected():
    x = np.linspace(-2, 2, 20)
    y = (x > 0).astype(float)
    design = manual_design([x, np.ones(20)])
    with pytest.raises(SeparationError):
        ts.fit(design, y, ts.BINOMIAL)


def test_fit_nonconvergence_carries_last_iterate():
    d = toy_dataset(n=80, p=2, family=ts.BINOMIAL, seed=9)
    design = ts.build_additive_design(d)
    with pytest.raises(FitError) as err:
        ts.fit(design, d.y, ts.BINOMIAL, max_iter=1)
    assert err.value.last_coefficients is not None
    assert err.value.iterations == 1


def test_fit_rank_repair_inside_fit_reports_dropped():
    x = np.linspace(0.0, 1.0, 12)
    design = manual_design([x, 2.0 * x, np.ones(12)])
    fit = ts.fit(design, x * 3.0, ts.GAUSSIAN)
    assert fit.dropped_columns == (1,)
    assert fit.coefficients[1] == 0.0
    assert np.allclose(design.matrix @ fit.coefficients, 3.0 * x, atol=1e-10)


# ---------------------------------------------------------------------------
# log-likelihood
# ---------------------------------------------------------------------------


def test_loglik_all_half_probabilities():
    design = manual_design([np.ones(4)], kinds=[("intercept",)])
    y = np.array([1.0, 1.0, 0.0, 0.0])
    fit = ts.fit(design, y, ts.BINOMIAL)
    value = ts.log_likelihood(fit, design, y, ts.BINOMIAL)
    assert value == pytest.approx(4 * np.log(0.5), abs=1e-10)


def test_loglik_perfect_gaussian_fit_is_capped():
    design = manual_design([np.array([1.0, 2.0, 3.0]), np.ones(3)])
    y = np.array([1.0, 2.0, 3.0])
    fit = ts.fit(design, y, ts.GAUSSIAN)
    assert fit.deviance == pytest.approx(0.0, abs=1e-20)
    capped = -0.5 * 3 * (np.log(2 * np.pi) + np.log(1e-12) + 1.0)
    assert fit.log_likelihood == pytest.approx(capped)
    assert np.isfinite(fit.log_likelihood)


def test_loglik_matches_direct_summation():
    rng = np.random.default_rng(8)
    X = np.column_stack([rng.standard_normal(40), np.ones(40)])
    y = rng.binomial(1, 0.5, size=40).astype(float)
    design = manual_design(list(X.T))
    fit = ts.fit(design, y, ts.BINOMIAL)
    p = 1 / (1 + np.exp(-(X @ fit.coefficients)))
    direct = sum(
        float(yi * np.log(pi) + (1 - yi) * np.log(1 - pi)) for yi, pi in zip(y, p)
    )
    assert ts.log_likelihood(fit, design, y, ts.BINOMIAL) == pytest.approx(direct, abs=1e-10)


# ---------------------------------------------------------------------------
# likelihood-ratio test
# ---------------------------------------------------------------------------


def _fit_with_loglik(ll):
    return glm.GlmFit(
        coefficients=np.zeros(1), covariance=np.zeros((1, 1)), std_errors=np.zeros(1),
        log_likelihood=ll, deviance=0.0, iterations=1, converged=True,
    )


def test_lrt_identical_fits():
    fit = _fit_with_loglik(-12.5)
    statistic, p = ts.lrt(fit, fit, 1)
    assert statistic == 0.0
    assert p == 1.0


def test_lrt_chi_square_quantile():
    null, alt = _fit_with_loglik(0.0), _fit_with_loglik(3.841459 / 2)
    statistic, p = ts.lrt(null, alt, 1)
    assert statistic == pytest.approx(3.841459)
    assert p == pytest.approx(0.05, abs=1e-5)


def test_lrt_gaussian_closed_form():
    rng = np.random.default_rng(17)
    n = 40
    x = rng.standard_normal(n)
    y = 0.7 * x + rng.standard_normal(n)
    null_design = manual_design([np.ones(n)], kinds=[("intercept",)])
    alt_design = manual_design([x, np.ones(n)])
    null_fit = ts.fit(null_design, y, ts.GAUSSIAN)
    alt_fit = ts.fit(alt_design, y, ts.GAUSSIAN)
    statistic, _ = ts.lrt(null_fit, alt_fit, 1)
    rss0 = ols_rss(np.ones((n, 1)), y)
    rss1 = ols_rss(np.column_stack([x, np.ones(n)]), y)
    assert statistic == pytest.approx(n * np.log(rss0 / rss1), abs=1e-8)


def test_lrt_invariant_under_column_rescaling():
    for family, seed in ((ts.GAUSSIAN, 30), (ts.BINOMIAL, 31)):
        d = toy_dataset(n=150, p=3, family=family, seed=seed)
        scaled = d.with_candidates(
            d.x_candidates * np.array([10.0, 1.0, 1.0]), d.candidate_names
        )
        stats = []
        for data in (d, scaled):
            null_fit = ts.fit(ts.build_additive_design(data), data.y, family)
            alt_fit = ts.fit(ts.build_interaction_design(data), data.y, family)
            stats.append(ts.lrt(null_fit, alt_fit, data.p)[0])
        assert stats[0] == pytest.approx(stats[1], abs=1e-8)


def test_lrt_rejects_bad_df_and_non_nesting():
    fit = _fit_with_loglik(-3.0)
    with pytest.raises(NestingError):
        ts.lrt(fit, fit, 0)
    with pytest.raises(NestingError):
        ts.lrt(_fit_with_loglik(-1.0), _fit_with_loglik(-2.0), 1)


# ---------------------------------------------------------------------------
# standardized arm differences
# ---------------------------------------------------------------------------


def test_arm_difference_zero_for_mirrored_arms():
    rng = np.random.default_rng(44)
    x = rng.standard_normal((30, 2))
    y = rng.standard_normal(30)
    d = ts.TrialDataset(
        y=np.concatenate([y, y]),
        treatment=np.concatenate([np.ones(30, int), np.zeros(30, int)]),
        x_candidates=np.vstack([x, x]),
        x_adjust=np.empty((60, 0)),
    )
    fit = ts.fit(ts.build_interaction_design(d), d.y, ts.GAUSSIAN)
    diffs = ts.standardized_arm_difference(fit, 2)
    assert np.max(np.abs(diffs)) < 1e-10


def test_arm_difference_matches_per_arm_fits():
    d = toy_dataset(n=300, p=1, family=ts.BINOMIAL, seed=20, main_effects=(0.8,))
    fit = ts.fit(ts.build_interaction_design(d), d.y, ts.BINOMIAL)
    joint = ts.standardized_arm_difference(fit, 1)[0]

    t = d.treatment.astype(bool)
    per_arm = {}
    for arm, mask in (("A", t), ("B", ~t)):
        X = np.column_stack([d.x_candidates[mask, 0], np.ones(mask.sum())])
        beta, cov, _ = newton_logistic(X, d.y[mask])
        per_arm[arm] = (beta[0], cov[0, 0])
    oracle = (per_arm["A"][0] - per_arm["B"][0]) / np.sqrt(per_arm["A"][1] + per_arm["B"][1])
    assert joint == pytest.approx(oracle, abs=1e-6)


def test_arm_difference_h0_moments():
    reps = 2000
    values = np.empty((reps, 2))
    for r in range(reps):
        spec = ts.SyntheticSpec(
            n=300, p=2, family=ts.GAUSSIAN, main_effects=(0.5, 0.2),
            treatment_effect=0.3, seed=ts.derive_seed(2024, r),
        )
        d = ts.generate_trial(spec)
        fit = ts.fit(ts.build_interaction_design(d), d.y, ts.GAUSSIAN)
        values[r] = ts.standardized_arm_difference(fit, 2)
    assert np.all(np.abs(values.mean(axis=0)) < 0.07)
    assert np.all(np.abs(values.var(axis=0, ddof=1) - 1.0) < 0.1)
