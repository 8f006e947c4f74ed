"""Stage-2 interaction testing and all Monte Carlo validation machinery.

``test_interaction`` runs the likelihood-ratio test of the arm-specific
model against the additive model on the screened (or projected) covariates.
``simulate_null`` rebuilds the test's H0 distribution for the dataset at
hand by a parametric bootstrap from the fitted additive model (treatment
main effect retained, interactions zero, fresh re-randomized labels), or by
pure label permutation as a sensitivity variant; ``correct_pvalue`` maps a
raw p-value through that empirical distribution with the add-one convention.

``validate_theorem`` and ``power_study`` drive replicated synthetic trials.
Replicate r always uses a seed derived from the master seed by a counting
scheme, so results do not depend on scheduling or worker count.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import kstest

from . import glm, screening as scr
from .config import PipelineConfig
from .data_model import SyntheticSpec, TrialDataset, generate_trial
from .errors import DataError, NullSimulationError, TehScreenError
from .families import BINOMIAL, GAUSSIAN, Family


def derive_seed(master_seed: int, index: int) -> int:
    """Per-replicate seed from a master seed: SeedSequence(master, spawn_key=(index,))."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def _map_replicates(worker, reps, threads):
    threads = max(1, int(threads or 1))
    if threads == 1:
        return [worker(r) for r in range(reps)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, range(reps)))


@dataclass(frozen=True)
class InteractionTest:
    """One Stage-2 result: global LRT plus the per-coordinate decomposition."""

    statistic: float
    df: int
    p_raw: float
    standardized_differences: np.ndarray
    screening: scr.ScreeningResult
    p_corrected: float | None = None
    null_sim_size: int | None = None
    df_repaired: bool = False


@dataclass(frozen=True)
class NullDistribution:
    """Sorted raw p-values of the configured pipeline under the fitted H0."""

    p_values: np.ndarray
    reps: int
    generator_spec: dict
    seed: int
    failures: int = 0


@dataclass(frozen=True)
class SimulationReport:
    """Replicate-level records plus their summary statistics."""

    records: tuple
    summary: dict


def test_interaction(
    data: TrialDataset, family: Family, screen: scr.ScreeningResult
) -> InteractionTest:
    """Fit additive and arm-specific models on the screened covariates; LRT with df = K."""
    d2 = scr.stage2_dataset(data, screen)
    add_design = glm.build_additive_design(d2)
    int_design = glm.build_interaction_design(d2)
    null_fit = glm.fit(add_design, d2.y, family)
    alt_fit = glm.fit(int_design, d2.y, family)
    df = (int_design.width - len(alt_fit.dropped_columns)) - (
        add_design.width - len(null_fit.dropped_columns)
    )
    statistic, p_raw = glm.lrt(null_fit, alt_fit, df)
    diffs = glm.standardized_arm_difference(alt_fit, d2.p)
    return InteractionTest(
        statistic=statistic,
        df=df,
        p_raw=p_raw,
        standardized_differences=diffs,
        screening=screen,
        df_repaired=(df != screen.k_selected),
    )


def run_screening(data: TrialDataset, cfg: PipelineConfig, k: int, seed: int) -> scr.ScreeningResult:
    """Dispatch the configured Stage-1 engine with the pre-specified K."""
    family = cfg.family
    if cfg.method == "full_model":
        return scr.rank_full_model(data, family, k=k)
    if cfg.method == "univariate":
        return scr.rank_univariate(data, family, k=k)
    if cfg.method == "lasso":
        return scr.rank_lasso(
            data, family, k=k, include_treatment=cfg.include_treatment, n_lambda=cfg.n_lambda
        )
    if cfg.method == "pca":
        return scr.screen_pca_single_stage(
            data, family, supervised=cfg.supervised_pc, k=k,
            standardize=cfg.pca_standardize, n_lambda=cfg.n_lambda,
        )
    if cfg.method == "multi_stage":
        return scr.screen_multi_stage(
            data, family, ml=cfg.ml, pc_rank=cfg.pc_rank, k=k,
            ri_threshold=cfg.ri_threshold, n_trees=cfg.n_trees, shrinkage=cfg.shrinkage,
            seed=seed, n_lambda=cfg.n_lambda, standardize=cfg.pca_standardize,
            include_treatment=cfg.include_treatment,
        )
    if cfg.method == "irm":
        return scr.irm_risk_projection(data, family, include_treatment=cfg.include_treatment)
    raise DataError(f"unknown screening method {cfg.method!r}")


def run_pipeline(data: TrialDataset, cfg: PipelineConfig, seed: int | None = None) -> InteractionTest:
    """Stage-1 screening followed by the Stage-2 interaction test."""
    seed = cfg.seed if seed is None else seed
    k = cfg.resolve_k(data.n)
    screen = run_screening(data, cfg, k, seed)
    return test_interaction(data, cfg.family, screen)


def _additive_predictor_parts(data: TrialDataset, family: Family):
    """Fitted linear-predictor pieces of the full additive model.

    Returns (eta_without_arm, intercept_A, intercept_B, sigma) so a replicate
    with re-randomized labels t gets eta = eta_base + where(t, aA, aB).
    """
    design = glm.build_additive_design(data)
    fit = glm.fit(design, data.y, family)
    beta_cand = np.zeros(data.p)
    beta_adj = np.zeros(data.p_c)
    a_arm = {"A": 0.0, "B": 0.0}
    for idx, o in enumerate(fit.origin):
        if o[0] == "candidate":
            beta_cand[o[1]] = fit.coefficients[idx]
        elif o[0] == "adjust":
            beta_adj[o[1]] = fit.coefficients[idx]
        elif o[0] == "arm_intercept":
            a_arm[o[1]] = fit.coefficients[idx]
    eta_base = data.x_candidates @ beta_cand
    if data.p_c:
        eta_base = eta_base + data.x_adjust @ beta_adj
    sigma = np.sqrt(GAUSSIAN.dispersion(data.y, design.matrix @ fit.coefficients)) \
        if family is GAUSSIAN else 0.0
    return eta_base, a_arm["A"], a_arm["B"], sigma


def simulate_null(
    data: TrialDataset,
    family: Family,
    cfg: PipelineConfig,
    reps: int,
    seed: int,
    method: str = "parametric",
    threads: int = 1,
) -> NullDistribution:
    """Empirical H0 distribution of the configured pipeline's raw p-value.

    parametric: outcomes regenerated from the additive fit to the real data
    (treatment effect retained, interactions zero) with freshly permuted arm
    labels each replicate. permutation: labels permuted, outcomes untouched.
    Replicates whose fits fail are dropped; more than 5% failures aborts.
    """
    if reps < 100:
        raise DataError("null simulation needs reps >= 100")
    if method not in ("parametric", "permutation"):
        raise DataError(f"unknown null method {method!r}")
    if method == "parametric":
        eta_base, a_A, a_B, sigma = _additive_predictor_parts(data, family)

    def one(r):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
        t_new = rng.permutation(data.treatment)
        if method == "permutation":
            d_rep = data.with_treatment(t_new)
        else:
            eta = eta_base + np.where(t_new == 1, a_A, a_B)
            if family is GAUSSIAN:
                y_new = eta + sigma * rng.standard_normal(data.n)
            else:
                y_new = rng.binomial(1, BINOMIAL.inverse_link(eta)).astype(float)
            d_rep = data.with_outcome(y_new).with_treatment(t_new)
        try:
            return run_pipeline(d_rep, cfg, seed=derive_seed(seed, r))
        except TehScreenError as exc:
            return exc

    results = _map_replicates(one, reps, threads)
    pvals = [t.p_raw for t in results if isinstance(t, InteractionTest)]
    failures = reps - len(pvals)
    if failures > 0.05 * reps:
        raise NullSimulationError(
            f"{failures}/{reps} null replicates failed; distribution unreliable"
        )
    return NullDistribution(
        p_values=np.sort(np.asarray(pvals)),
        reps=len(pvals),
        generator_spec={
            "method": method,
            "requested_reps": reps,
            "family": family.name,
            "pipeline": cfg.label or cfg.method,
        },
        seed=seed,
        failures=failures,
    )


def correct_pvalue(p_raw: float, null: NullDistribution) -> float:
    """Add-one empirical p-value: (1 + #{null <= p_raw}) / (reps + 1)."""
    if null.reps < 1:
        raise DataError("null distribution is empty")
    count = int(np.searchsorted(null.p_values, p_raw, side="right"))
    return (1.0 + count) / (null.reps + 1.0)


def _standardized_candidates(fit: glm.GlmFit, p: int):
    out = np.full(p, np.nan)
    dropped = set(fit.dropped_columns)
    for idx, o in enumerate(fit.origin):
        if o[0] == "candidate" and idx not in dropped and fit.std_errors[idx] > 0:
            out[o[1]] = fit.coefficients[idx] / fit.std_errors[idx]
    return out


def _cross_correlation(a, b):
    """Column-by-column correlation between two replicate matrices."""
    az = (a - a.mean(axis=0)) / a.std(axis=0, ddof=1)
    bz = (b - b.mean(axis=0)) / b.std(axis=0, ddof=1)
    return az.T @ bz / (a.shape[0] - 1)


def uniform_ks_distance(pvalues) -> float:
    return float(kstest(np.asarray(pvalues), "uniform").statistic)


def validate_theorem(
    spec: SyntheticSpec,
    reps: int,
    seed: int,
    projection: np.ndarray | None = None,
    screen_k: int | None = None,
    threads: int = 1,
) -> SimulationReport:
    """Empirical independence check of screening statistics and arm differences.

    Per H0 replicate, collects the standardized additive coefficients and the
    standardized between-arm differences (through the fixed projection when
    one is given, exercising the linear-map extension), plus the Stage-2
    p-value after a full-model screen. Reports the cross-correlation matrix,
    its maximum absolute entry, and the KS distance of the screened p-values.
    """
    if any(v != 0.0 for v in spec.interaction_effects):
        raise DataError("theorem validation requires an H0 spec (zero interaction effects)")
    family = spec.family
    k_screen = screen_k or min(3, spec.p)

    def one(r):
        d = generate_trial(_respec(spec, derive_seed(seed, r)))
        if projection is not None:
            names = tuple(f"proj{i + 1}" for i in range(projection.shape[1]))
            d = d.with_candidates(d.x_candidates @ projection, names)
        add_fit = glm.fit(glm.build_additive_design(d), d.y, family)
        alt_fit = glm.fit(glm.build_interaction_design(d), d.y, family)
        betas = _standardized_candidates(add_fit, d.p)
        diffs = glm.standardized_arm_difference(alt_fit, d.p)
        screen = scr.rank_full_model(d, family, k=min(k_screen, d.p))
        p_screened = test_interaction(d, family, screen).p_raw
        return betas, diffs, p_screened

    rows = _map_replicates(one, reps, threads)
    betas = np.vstack([r[0] for r in rows])
    diffs = np.vstack([r[1] for r in rows])
    pvals = np.asarray([r[2] for r in rows])
    corr = _cross_correlation(betas, diffs)
    ks = uniform_ks_distance(pvals)
    records = tuple(
        {"replicate": r, "p_screened": float(pvals[r])} for r in range(reps)
    )
    return SimulationReport(
        records=records,
        summary={
            "reps": reps,
            "family": family.name,
            "projected": projection is not None,
            "cross_correlation": corr.tolist(),
            "max_abs_correlation": float(np.max(np.abs(corr))),
            "correlation_bound_3_over_sqrt_reps": 3.0 / np.sqrt(reps),
            "ks_distance_screened_pvalues": ks,
            "rejection_rate_0.05": float(np.mean(pvals <= 0.05)),
            "rejection_rate_0.1": float(np.mean(pvals <= 0.1)),
        },
    )


def power_study(
    h1_spec: SyntheticSpec,
    methods: list[PipelineConfig],
    reps: int,
    seed: int,
    alpha: float = 0.05,
    threads: int = 1,
) -> SimulationReport:
    """Paired rejection rates: every method sees the identical replicate data."""
    if all(v == 0.0 for v in h1_spec.interaction_effects):
        raise DataError("power study requires nonzero interaction effects")
    labels = [cfg.label or f"{cfg.method}[{i}]" for i, cfg in enumerate(methods)]

    def one(r):
        rs = derive_seed(seed, r)
        d = generate_trial(_respec(h1_spec, rs))
        row = {}
        for label, cfg in zip(labels, methods):
            try:
                row[label] = float(run_pipeline(d, cfg, seed=rs).p_raw)
            except TehScreenError:
                row[label] = np.nan
        return row

    rows = _map_replicates(one, reps, threads)
    reject = {label: np.asarray([r[label] <= alpha for r in rows], dtype=float) for label in labels}
    failures = {label: int(sum(np.isnan(r[label]) for r in rows)) for label in labels}
    rates = {label: float(np.mean(reject[label])) for label in labels}

    paired = {}
    for i, la in enumerate(labels):
        for lb in labels[i + 1 :]:
            diff = reject[la] - reject[lb]
            se = float(np.std(diff, ddof=1) / np.sqrt(reps))
            paired[f"{la} - {lb}"] = {
                "mean_difference": float(np.mean(diff)),
                "se": se,
                "z": float(np.mean(diff) / se) if se > 0 else np.inf,
            }

    records = tuple(
        {"replicate": r, **{label: rows[r][label] for label in labels}} for r in range(reps)
    )
    return SimulationReport(
        records=records,
        summary={
            "reps": reps,
            "alpha": alpha,
            "rejection_rates": rates,
            "paired_differences": paired,
            "failures": failures,
        },
    )


def _respec(spec: SyntheticSpec, new_seed: int) -> SyntheticSpec:
    from dataclasses import replace

    return replace(spec, seed=new_seed)
