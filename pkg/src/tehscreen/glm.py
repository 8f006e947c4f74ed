"""GLM fitting by iteratively re-weighted least squares.

Builds the two trial designs (additive main-effects model and the
arm-specific interaction model), fits them by IRLS with step halving,
and exposes the nested-model likelihood-ratio test plus the standardized
between-arm coefficient differences used to decompose an interaction signal.

Both designs use the two-arm-intercept parameterization: columns are
[candidate block | arm-A indicator | arm-B indicator | adjusters], which is
equivalent to a single intercept plus a treatment main effect.

Rank repair: any Gram-matrix pivot below RANK_TOL times the largest diagonal
drops that column. Later columns lose to earlier ones, so duplicates are
removed deterministically; drops are recorded, never silent.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .data_model import TrialDataset
from .errors import (
    DataError,
    DegenerateVarianceError,
    FitError,
    NestingError,
    SeparationError,
)
from .families import GAUSSIAN, Family

RANK_TOL = 1e-10
MAX_ITER = 100
LOGLIK_RTOL = 1e-10
SEPARATION_NORM = 1e4
# Internal clip for IRLS weights / working response; likelihood evaluation
# uses the (tighter) clip in families.py.
_MU_EPS = 1e-10

# Origin keys: ("candidate", j), ("arm_candidate", "A"|"B", j),
# ("arm_intercept", "A"|"B"), ("intercept",), ("adjust", j).
_ROLE_OF = {
    "candidate": "candidate",
    "arm_candidate": "arm_specific_candidate",
    "arm_intercept": "arm_intercept",
    "intercept": "intercept",
    "adjust": "adjust",
}


@dataclass(frozen=True)
class DesignMatrix:
    """Full-column-rank design with per-column provenance.

    ``origin[k]`` identifies what retained column ``k`` is;
    ``dropped_columns`` indexes into the pre-repair column layout.
    """

    matrix: np.ndarray
    origin: tuple
    names: tuple
    dropped_columns: tuple = ()
    dropped_origin: tuple = ()

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def width(self):
        return self.matrix.shape[1]

    @property
    def roles(self):
        return tuple(_ROLE_OF[o[0]] for o in self.origin)

    def columns_of(self, kind):
        """Retained column indices whose origin starts with ``kind``."""
        return [k for k, o in enumerate(self.origin) if o[0] == kind]


@dataclass(frozen=True)
class GlmFit:
    """One converged (or diagnosed) GLM fit.

    ``coefficients`` has the design's width, with zeros at fit-time dropped
    columns; ``covariance`` is the inverse Fisher information on retained
    columns (zero rows/columns at drops) scaled by the dispersion
    (profiled RSS/n for gaussian, 1 for binomial).
    """

    coefficients: np.ndarray
    covariance: np.ndarray
    std_errors: np.ndarray
    log_likelihood: float
    deviance: float
    iterations: int
    converged: bool
    dropped_columns: tuple = ()
    origin: tuple = ()


def _rank_repair(matrix, tol=RANK_TOL):
    """Sequentially Cholesky the Gram matrix, dropping pivot-deficient columns.

    Returns (kept_indices, dropped_indices). Earlier columns win ties, so the
    later members of a collinear group are the ones removed.
    """
    gram = matrix.T @ matrix
    return _rank_repair_gram(gram, tol)


def _rank_repair_gram(gram, tol=RANK_TOL):
    q = gram.shape[0]
    max_diag = float(np.max(gram.diagonal(), initial=0.0))
    if max_diag <= 0.0:
        return [], list(range(q))
    threshold = tol * max_diag
    kept = []
    dropped = []
    L = np.zeros((q, q))
    for j in range(q):
        k = len(kept)
        if k:
            row = np.linalg.solve(L[:k, :k], gram[kept, j])
        else:
            row = np.empty(0)
        pivot = gram[j, j] - row @ row
        if pivot <= threshold:
            dropped.append(j)
            continue
        L[k, :k] = row
        L[k, k] = np.sqrt(pivot)
        kept.append(j)
    return kept, dropped


def _solve_gram(gram, rhs, tol=RANK_TOL):
    """Solve gram @ x = rhs with pivot-based column dropping.

    Returns (x with zeros at drops, kept index list). The fast path is a
    plain Cholesky; the sequential fallback runs only when a pivot fails.
    """
    q = gram.shape[0]
    try:
        L = np.linalg.cholesky(gram)
        pivots = np.diag(L) ** 2
        if np.min(pivots) > tol * np.max(gram.diagonal()):
            x = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
            return x, list(range(q))
    except np.linalg.LinAlgError:
        pass
    kept, _ = _rank_repair_gram(gram, tol)
    x = np.zeros(q)
    if kept:
        sub = gram[np.ix_(kept, kept)]
        x[kept] = np.linalg.solve(sub, rhs[kept])
    return x, kept


def make_design(columns, origin, names) -> DesignMatrix:
    """Assemble a design from columns and apply rank repair."""
    matrix = np.column_stack(columns) if columns else np.empty((0, 0))
    kept, dropped = _rank_repair(matrix)
    return DesignMatrix(
        matrix=np.ascontiguousarray(matrix[:, kept]),
        origin=tuple(origin[k] for k in kept),
        names=tuple(names[k] for k in kept),
        dropped_columns=tuple(dropped),
        dropped_origin=tuple(origin[k] for k in dropped),
    )


def build_additive_design(data: TrialDataset) -> DesignMatrix:
    """Main-effects design: [candidates | arm-A intercept | arm-B intercept | adjusters]."""
    if data.n < data.p + data.p_c + 2:
        raise DataError(f"n={data.n} too small for p={data.p}, p_c={data.p_c}")
    t = data.treatment.astype(float)
    columns = [data.x_candidates[:, j] for j in range(data.p)]
    origin = [("candidate", j) for j in range(data.p)]
    names = list(data.candidate_names)
    columns += [t, 1.0 - t]
    origin += [("arm_intercept", "A"), ("arm_intercept", "B")]
    names += ["armA", "armB"]
    columns += [data.x_adjust[:, j] for j in range(data.p_c)]
    origin += [("adjust", j) for j in range(data.p_c)]
    names += list(data.adjust_names)
    return make_design(columns, origin, names)


def build_interaction_design(data: TrialDataset, selected=None, projection=None) -> DesignMatrix:
    """Arm-specific design: [arm-A candidate block | arm-B block | arm intercepts | adjusters].

    ``selected`` restricts the candidate block to those column indices;
    ``projection`` (p x K) replaces it with the projected columns
    ``x_candidates @ projection``. At most one of the two may be given;
    neither means all candidates.
    """
    if selected is not None and projection is not None:
        raise DataError("pass either selected indices or a projection, not both")
    if projection is not None:
        v = np.asarray(projection, dtype=float)
        if v.ndim != 2 or v.shape[0] != data.p:
            raise DataError(f"projection must be {data.p} x K")
        xk = data.x_candidates @ v
        base_names = [f"proj{j + 1}" for j in range(xk.shape[1])]
    else:
        idx = list(range(data.p)) if selected is None else list(selected)
        if any(j < 0 or j >= data.p for j in idx):
            raise DataError("selected indices out of range")
        xk = data.x_candidates[:, idx]
        base_names = [data.candidate_names[j] for j in idx]
    k = xk.shape[1]
    if k == 0:
        raise DataError("empty selection: the interaction design needs K >= 1 candidates")
    if data.n < 2 * k + data.p_c + 2:
        raise DataError(f"n={data.n} too small for K={k} arm-specific blocks")

    t = data.treatment.astype(float)
    columns = [xk[:, j] * t for j in range(k)]
    origin = [("arm_candidate", "A", j) for j in range(k)]
    names = [f"{nm}:A" for nm in base_names]
    columns += [xk[:, j] * (1.0 - t) for j in range(k)]
    origin += [("arm_candidate", "B", j) for j in range(k)]
    names += [f"{nm}:B" for nm in base_names]
    columns += [t, 1.0 - t]
    origin += [("arm_intercept", "A"), ("arm_intercept", "B")]
    names += ["armA", "armB"]
    columns += [data.x_adjust[:, j] for j in range(data.p_c)]
    origin += [("adjust", j) for j in range(data.p_c)]
    names += list(data.adjust_names)
    return make_design(columns, origin, names)


def fit(design: DesignMatrix, y, family: Family, max_iter=MAX_ITER, tol=LOGLIK_RTOL) -> GlmFit:
    """Maximize the likelihood by IRLS with step halving.

    The gaussian-identity case is a single weighted-least-squares step and
    reproduces the normal-equations solution; the binomial case iterates to
    a relative log-likelihood change below ``tol``. Perfect separation is
    reported as an error rather than returned as a silently diverged fit.
    """
    X = design.matrix
    y = np.asarray(y, dtype=float)
    n, q = X.shape
    if y.shape != (n,):
        raise DataError("response length does not match the design")
    if n < q:
        raise DataError(f"n={n} < q={q}: more columns than observations")
    family.check_response(y)

    mu = family.initial_mu(y)
    eta = _safe_link(family, mu)
    beta = np.zeros(q)
    ll = family.log_likelihood(y, mu)
    converged = False
    iterations = 0
    dropped: set = set()

    for iterations in range(1, max_iter + 1):
        mu_safe = np.clip(mu, _MU_EPS, 1.0 - _MU_EPS) if family is not GAUSSIAN else mu
        w = family.irls_weights(mu_safe)
        if family is GAUSSIAN:
            z = y
        else:
            z = eta + (y - mu_safe) / w
        Xw = X * w[:, None]
        gram = X.T @ Xw
        rhs = Xw.T @ z
        if dropped:
            keep = [j for j in range(q) if j not in dropped]
            beta_new = np.zeros(q)
            sub, kept_sub = _solve_gram(gram[np.ix_(keep, keep)], rhs[keep])
            beta_new[keep] = sub
            dropped.update(j for i, j in enumerate(keep) if i not in kept_sub)
        else:
            beta_new, kept = _solve_gram(gram, rhs)
            dropped.update(j for j in range(q) if j not in kept)

        step = beta_new - beta
        scale = 1.0
        for _ in range(30):
            cand = beta + scale * step
            eta_cand = X @ cand
            mu_cand = family.inverse_link(eta_cand)
            ll_cand = family.log_likelihood(y, mu_cand)
            if ll_cand >= ll - 1e-12 or scale < 1e-8:
                break
            scale *= 0.5
        beta, eta, mu = cand, eta_cand, mu_cand
        if abs(ll_cand - ll) <= tol * (abs(ll) + 1.0):
            ll = ll_cand
            converged = True
            break
        ll = ll_cand

    if not converged:
        if float(np.max(np.abs(beta))) > SEPARATION_NORM:
            raise SeparationError(
                "perfect separation suspected: coefficients diverged during IRLS",
                last_coefficients=beta, iterations=iterations,
            )
        raise FitError(
            f"IRLS did not converge in {max_iter} iterations",
            last_coefficients=beta, iterations=iterations,
        )
    if family is not GAUSSIAN:
        # Probability clipping pins the likelihood before the coefficient norm
        # can blow up, so a separated fit surfaces as a saturated, perfectly
        # fitting model rather than a norm > SEPARATION_NORM stall.
        saturated = float(np.max(np.abs(eta))) > 30.0
        if saturated and family.deviance(y, mu) < 1e-6:
            raise SeparationError(
                "perfect separation: every observation fitted at a saturated probability",
                last_coefficients=beta, iterations=iterations,
            )

    w_final = family.irls_weights(np.clip(mu, _MU_EPS, 1.0 - _MU_EPS) if family is not GAUSSIAN else mu)
    gram = X.T @ (X * w_final[:, None])
    dispersion = family.dispersion(y, mu)
    keep = [j for j in range(q) if j not in dropped]
    covariance = np.zeros((q, q))
    if keep:
        sub = gram[np.ix_(keep, keep)]
        try:
            covariance[np.ix_(keep, keep)] = dispersion * np.linalg.inv(sub)
        except np.linalg.LinAlgError:
            raise FitError(
                "information matrix is singular at the optimum",
                last_coefficients=beta, iterations=iterations,
            ) from None
    std = np.sqrt(np.clip(np.diag(covariance), 0.0, None))
    return GlmFit(
        coefficients=beta,
        covariance=covariance,
        std_errors=std,
        log_likelihood=ll,
        deviance=family.deviance(y, mu),
        iterations=iterations,
        converged=converged,
        dropped_columns=tuple(sorted(dropped)),
        origin=design.origin,
    )


def _safe_link(family, mu):
    if family is GAUSSIAN:
        return mu
    p = np.clip(mu, _MU_EPS, 1.0 - _MU_EPS)
    return np.log(p / (1.0 - p))


def log_likelihood(fit: GlmFit, design: DesignMatrix, y, family: Family) -> float:
    """Exact family log-likelihood at the fitted coefficients."""
    eta = design.matrix @ fit.coefficients
    return family.log_likelihood(np.asarray(y, dtype=float), family.inverse_link(eta))


def lrt(null_fit: GlmFit, alt_fit: GlmFit, df: int):
    """Likelihood-ratio test of a nested pair: (statistic, upper-tail chi-square p)."""
    if df <= 0:
        raise NestingError(f"non-positive degrees of freedom: {df}")
    statistic = 2.0 * (alt_fit.log_likelihood - null_fit.log_likelihood)
    if statistic < -1e-5:
        raise NestingError(
            f"alternative log-likelihood below null by {-statistic / 2:.3g}: models are not nested"
        )
    statistic = max(statistic, 0.0)
    return statistic, float(chi2.sf(statistic, df))


def standardized_arm_difference(interaction_fit: GlmFit, k: int) -> np.ndarray:
    """Per-coordinate (betaA - betaB) / SE from the joint interaction-fit covariance.

    SE^2 = Var(A) + Var(B) - 2 Cov(A, B). Coordinates whose arm column was
    dropped by rank repair come back as NaN; an exactly zero SE on retained
    columns is an error.
    """
    origin = interaction_fit.origin
    pos = {}
    for idx, o in enumerate(origin):
        if o[0] == "arm_candidate":
            pos[(o[1], o[2])] = idx
    out = np.full(k, np.nan)
    coef = interaction_fit.coefficients
    cov = interaction_fit.covariance
    dropped = set(interaction_fit.dropped_columns)
    for j in range(k):
        ia, ib = pos.get(("A", j)), pos.get(("B", j))
        if ia is None or ib is None or ia in dropped or ib in dropped:
            continue
        se2 = cov[ia, ia] + cov[ib, ib] - 2.0 * cov[ia, ib]
        if se2 <= 0.0:
            raise DegenerateVarianceError(f"zero variance for arm difference at coordinate {j}")
        out[j] = (coef[ia] - coef[ib]) / np.sqrt(se2)
    return out
