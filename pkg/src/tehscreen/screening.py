"""Stage-1 screening engines.

Each screener returns a :class:`ScreeningResult`: an outcome-driven ranking
of the interaction candidates (or of principal components, together with the
projection that realizes them), truncated to the pre-specified dimension K.
K must be fixed before looking at the data -- it is the degrees of freedom
of the Stage-2 test -- so every entry point takes it as a plain argument and
``k_schedule`` converts a deterministic rule on n into a value.

Rankings are deterministic: p-value ties and influence ties break to the
lower covariate index.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from . import boosting, glm, lasso
from .data_model import TrialDataset
from .errors import ConfigError, DataError, TehScreenError
from .families import Family
from .pca import compute_pca, rank_pcs_by_variance


@dataclass(frozen=True)
class ScreeningResult:
    """Ranked candidates (or PCs) plus the optional linear projection.

    ``ranking`` orders candidate indices (or PC indices for projection
    methods) from most to least informative; ``projection``, when present,
    is the p x K map actually handed to Stage-2, its columns aligned with
    the first K ranking entries.
    """

    method: str
    ranking: tuple
    k_selected: int
    projection: np.ndarray | None = None
    substage_trace: dict = None

    def __post_init__(self):
        if self.substage_trace is None:
            object.__setattr__(self, "substage_trace", {})
        if len(set(self.ranking)) != len(self.ranking):
            raise DataError("ranking contains duplicate indices")
        if self.projection is not None and self.projection.shape[1] != self.k_selected:
            raise DataError("projection width must equal k_selected")

    @property
    def selected(self):
        return list(self.ranking[: self.k_selected])


def k_schedule(n: int, rule: str, params: dict | None = None) -> int:
    """Pre-specified Stage-2 dimension as a pure function of n.

    log:   max(1, floor(ln n)); power: max(1, floor(coef * n**exponent));
    fixed: the given constant. Data values never enter.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    params = params or {}
    if rule == "log":
        return max(1, math.floor(math.log(n)))
    if rule == "power":
        coef = params.get("coef")
        exponent = params.get("exponent")
        if not isinstance(coef, (int, float)) or not isinstance(exponent, (int, float)):
            raise ConfigError("power rule needs numeric 'coef' and 'exponent'")
        if coef <= 0 or exponent <= 0:
            raise ConfigError("power rule parameters must be positive")
        return max(1, math.floor(coef * n**exponent))
    if rule == "fixed":
        k = params.get("k")
        if not isinstance(k, int) or isinstance(k, bool) or k < 1:
            raise ConfigError("fixed rule needs a positive integer 'k'")
        return k
    raise ConfigError(f"unknown K rule {rule!r}; expected log, power, or fixed")


def _order_by_pvalue(pvalues):
    return tuple(sorted(range(len(pvalues)), key=lambda j: (pvalues[j], j)))


def _wald_pvalues(fit: glm.GlmFit):
    """Two-sided Wald p per candidate; rank-repaired candidates get p = 1."""
    pos = {o[1]: idx for idx, o in enumerate(fit.origin) if o[0] == "candidate"}
    dropped = set(fit.dropped_columns)
    out = {}
    for j, idx in pos.items():
        se = fit.std_errors[idx]
        if idx in dropped or se <= 0.0:
            out[j] = 1.0
        else:
            out[j] = float(2.0 * norm.sf(abs(fit.coefficients[idx] / se)))
    return out


def rank_full_model(data: TrialDataset, family: Family, k: int | None = None) -> ScreeningResult:
    """Order candidates by the Wald p-value of their pooled main effect."""
    design = glm.build_additive_design(data)
    fit = glm.fit(design, data.y, family)
    by_candidate = _wald_pvalues(fit)
    pvalues = [by_candidate.get(j, 1.0) for j in range(data.p)]
    ranking = _order_by_pvalue(pvalues)
    return ScreeningResult(
        method="full_model",
        ranking=ranking,
        k_selected=_clamp_k(k, data.p),
        substage_trace={"p_values": pvalues},
    )


def rank_univariate(data: TrialDataset, family: Family, k: int | None = None) -> ScreeningResult:
    """Order candidates by single-covariate fits (arm intercepts and adjusters kept).

    The candidate sits last in each design, so if it duplicates an a-priori
    adjuster, rank repair drops the candidate (p = 1, ranked last), never the
    adjuster.
    """
    t = data.treatment.astype(float)
    base_cols = [t, 1.0 - t] + [data.x_adjust[:, i] for i in range(data.p_c)]
    base_origin = [("arm_intercept", "A"), ("arm_intercept", "B")] + [
        ("adjust", i) for i in range(data.p_c)
    ]
    base_names = ["armA", "armB", *data.adjust_names]
    pvalues = []
    failures = []
    for j in range(data.p):
        design = glm.make_design(
            base_cols + [data.x_candidates[:, j]],
            base_origin + [("candidate", 0)],
            base_names + [data.candidate_names[j]],
        )
        try:
            fit = glm.fit(design, data.y, family)
            pvalues.append(_wald_pvalues(fit).get(0, 1.0))
        except TehScreenError as exc:
            pvalues.append(np.inf)  # fit failure ranks last
            failures.append({"candidate": j, "error": str(exc)})
    ranking = _order_by_pvalue(pvalues)
    return ScreeningResult(
        method="univariate",
        ranking=ranking,
        k_selected=_clamp_k(k, data.p),
        substage_trace={
            "p_values": [None if not np.isfinite(v) else v for v in pvalues],
            "failures": failures,
        },
    )


def rank_lasso(
    data: TrialDataset,
    family: Family,
    k: int | None = None,
    include_treatment: bool = True,
    n_lambda: int = 100,
) -> ScreeningResult:
    """Order candidates by first entry into the L1 path."""
    path = lasso.fit_path(data, family, include_treatment=include_treatment, n_lambda=n_lambda)
    ranking = tuple(lasso.rank_by_entry(path, data.p))
    return ScreeningResult(
        method="lasso",
        ranking=ranking,
        k_selected=_clamp_k(k, data.p),
        substage_trace={"entry_order": list(path.entry_order), "n_lambda": n_lambda},
    )


def screen_pca_single_stage(
    data: TrialDataset,
    family: Family,
    supervised: bool = False,
    k: int | None = None,
    standardize: bool = True,
    n_lambda: int = 100,
) -> ScreeningResult:
    """PCA of all candidates; rank PCs by variance or by outcome evidence.

    The returned projection folds the standardization into the loadings
    (columns of diag(1/scale) @ loadings), so Stage-2 applies it directly to
    the raw candidate matrix; the dropped centering only shifts columns by
    constants that the arm intercepts absorb.
    """
    res = compute_pca(data.x_candidates, standardize=standardize)
    raw_projection = res.loadings / res.scale[:, None]
    if supervised:
        pc_data = data.with_candidates(res.scores, tuple(f"PC{i + 1}" for i in range(res.m)))
        ranking = tuple(rank_lasso(pc_data, family, n_lambda=n_lambda).ranking)
    else:
        ranking = tuple(rank_pcs_by_variance(res))
    k_sel = _clamp_k(k, data.p)
    projection = raw_projection[:, list(ranking[:k_sel])]
    return ScreeningResult(
        method="pca_supervised" if supervised else "pca_variance",
        ranking=ranking,
        k_selected=k_sel,
        projection=projection,
        substage_trace={
            "score_variances": res.score_variances.tolist(),
            "loadings": res.loadings.tolist(),
            "standardize": standardize,
            "degenerate_pcs": list(res.degenerate),
        },
    )


def screen_multi_stage(
    data: TrialDataset,
    family: Family,
    ml: str = "boosting",
    pc_rank: str = "variance",
    k: int | None = None,
    ri_threshold: float = 1.0,
    n_trees: int = 500,
    shrinkage: float = 0.05,
    seed: int = 0,
    n_lambda: int = 100,
    standardize: bool = True,
    include_treatment: bool = True,
) -> ScreeningResult:
    """Substage-I: supervised variable subset; Substage-II: PCA of the subset.

    The subset size M may vary from sample to sample; K stays pre-specified.
    If K exceeds M it is capped at M (recorded); if the subset is empty the
    screen falls back to single-stage PCA of all candidates (recorded).
    """
    trace = {"ml": ml, "pc_rank": pc_rank}
    if ml == "boosting":
        model = boosting.fit_boost(
            data, family, n_trees=n_trees, shrinkage=shrinkage, seed=seed
        )
        selected = sorted(boosting.select_by_influence(model, ri_threshold))
        trace["relative_influence"] = model.relative_influence.tolist()
        trace["ri_threshold"] = ri_threshold
    elif ml == "lasso":
        path = lasso.fit_path(data, family, include_treatment=include_treatment, n_lambda=n_lambda)
        selected = sorted(path.entry_order)
        trace["entry_order"] = list(path.entry_order)
    else:
        raise ConfigError(f"unknown multi-stage ML method {ml!r}; expected boosting or lasso")

    if not selected:
        fallback = screen_pca_single_stage(
            data, family, supervised=(pc_rank == "supervised"), k=k,
            standardize=standardize, n_lambda=n_lambda,
        )
        trace.update(fallback.substage_trace)
        trace["warning"] = "substage-I selected no variables; fell back to single-stage PCA"
        trace["m_selected"] = 0
        return ScreeningResult(
            method="multi_stage",
            ranking=fallback.ranking,
            k_selected=fallback.k_selected,
            projection=fallback.projection,
            substage_trace=trace,
        )

    m = len(selected)
    trace["m_selected"] = m
    trace["selected_indices"] = selected
    trace["selected_names"] = [data.candidate_names[j] for j in selected]

    requested = k if k is not None else m
    if requested > m:
        trace["k_capped"] = {"requested": requested, "m": m}
    k_sel = min(requested, m)

    sub = compute_pca(data.x_candidates[:, selected], standardize=standardize)
    if pc_rank == "variance":
        pc_order = rank_pcs_by_variance(sub)
    elif pc_rank == "supervised":
        pc_data = data.with_candidates(sub.scores, tuple(f"PC{i + 1}" for i in range(sub.m)))
        pc_order = list(rank_lasso(pc_data, family, n_lambda=n_lambda).ranking)
    else:
        raise ConfigError(f"unknown PC ranking {pc_rank!r}; expected variance or supervised")

    chosen = pc_order[:k_sel]
    sub_projection = (sub.loadings / sub.scale[:, None])[:, chosen]
    projection = np.zeros((data.p, k_sel))
    projection[selected, :] = sub_projection  # zero rows for unselected variables
    trace["pc_order"] = list(pc_order)
    trace["score_variances"] = sub.score_variances.tolist()
    trace["loadings"] = sub.loadings.tolist()
    return ScreeningResult(
        method="multi_stage",
        ranking=tuple(pc_order),
        k_selected=k_sel,
        projection=projection,
        substage_trace=trace,
    )


def irm_risk_projection(
    data: TrialDataset, family: Family, include_treatment: bool = False
) -> ScreeningResult:
    """Internal-risk-model screen: the fitted baseline coefficient vector as a K=1 projection.

    Blinded (default) fits outcome ~ intercept + candidates; unblinded keeps
    the treatment main effect and adjusters in the risk model, which the
    randomization argument shows is safe.
    """
    if include_treatment:
        design = glm.build_additive_design(data)
    else:
        cols = [data.x_candidates[:, j] for j in range(data.p)] + [np.ones(data.n)]
        origin = [("candidate", j) for j in range(data.p)] + [("intercept",)]
        names = [*data.candidate_names, "intercept"]
        design = glm.make_design(cols, origin, names)
    fit = glm.fit(design, data.y, family)
    beta = np.zeros(data.p)
    for idx, o in enumerate(fit.origin):
        if o[0] == "candidate":
            beta[o[1]] = fit.coefficients[idx]
    return ScreeningResult(
        method="irm",
        ranking=(0,),
        k_selected=1,
        projection=beta[:, None],
        substage_trace={
            "risk_coefficients": beta.tolist(),
            "include_treatment": include_treatment,
        },
    )


def stage2_dataset(data: TrialDataset, screening: ScreeningResult) -> TrialDataset:
    """Dataset whose candidate block is what Stage-2 actually tests."""
    if screening.projection is not None:
        xk = data.x_candidates @ screening.projection
        names = tuple(f"{screening.method}_{i + 1}" for i in range(xk.shape[1]))
        return data.with_candidates(xk, names)
    chosen = screening.selected
    return data.with_candidates(
        data.x_candidates[:, chosen], tuple(data.candidate_names[j] for j in chosen)
    )


def _clamp_k(k, p):
    if k is None:
        return p
    if k < 1:
        raise ConfigError("K must be >= 1")
    return min(k, p)
