"""L1-penalized GLM over a decreasing lambda path by cyclic coordinate descent.

The screening pipeline only consumes the order in which candidate covariates
first enter the path, so candidates are standardized internally (mean 0,
variance 1 with the 1/n convention) to make that order scale-invariant.
Intercept, treatment, and adjusters are never penalized.

Objective at one lambda (gaussian):
    (1/2n) * ||y - U a - X b||^2 + lambda * ||b||_1
with U the unpenalized block and X the standardized candidates. The binomial
case wraps the same inner solver in an outer IRLS quadratic approximation.
"""

from dataclasses import dataclass

import numpy as np

from .data_model import TrialDataset
from .errors import DataError, FitError
from .families import BINOMIAL, GAUSSIAN, Family
from . import glm

CD_TOL = 1e-11
CD_MAX_SWEEPS = 50_000
OUTER_TOL = 1e-10
OUTER_MAX = 100


def soft_threshold(z, lam):
    """sign(z) * max(|z| - lam, 0)."""
    if lam < 0:
        raise DataError("soft-threshold shrinkage must be nonnegative")
    return np.sign(z) * max(abs(z) - lam, 0.0)


@dataclass(frozen=True)
class LassoPath:
    """Solutions along a strictly decreasing lambda grid.

    ``coefficients_per_lambda`` holds candidate coefficients on the original
    covariate scale; ``coefficients_std_per_lambda`` the standardized-scale
    ones that define entry order; ``unpenalized_per_lambda`` the coefficients
    of the unpenalized block (intercept [, treatment], adjusters, raw scale).
    """

    lambdas: np.ndarray
    coefficients_per_lambda: tuple
    coefficients_std_per_lambda: tuple
    unpenalized_per_lambda: tuple
    entry_order: tuple
    unpenalized_indices: tuple
    include_treatment: bool
    center: np.ndarray
    scale: np.ndarray

    @property
    def p(self):
        return self.center.shape[0]


def _standardize(x):
    center = x.mean(axis=0)
    scale = x.std(axis=0)  # 1/n convention so that x_j'x_j / n == 1
    scale = np.where(scale > 0, scale, 1.0)
    return (x - center) / scale, center, scale


def _unpenalized_block(data, include_treatment):
    cols = [np.ones(data.n)]
    if include_treatment:
        cols.append(data.treatment.astype(float))
    for j in range(data.p_c):
        cols.append(data.x_adjust[:, j])
    return np.column_stack(cols)


def _cd_weighted(xs, u, w, z, beta, alpha, lam):
    """One lambda: cyclic coordinate descent on the weighted quadratic objective.

    Updates ``beta`` (penalized, standardized scale) and ``alpha`` (unpenalized)
    in place; returns the number of sweeps used.
    """
    n = xs.shape[0]
    resid = z - u @ alpha - xs @ beta
    wu = w[:, None] * u
    wxs = w[:, None] * xs
    u_norm = np.einsum("ij,ij->j", u, wu) / n
    x_norm = np.einsum("ij,ij->j", xs, wxs) / n
    for sweep in range(1, CD_MAX_SWEEPS + 1):
        delta = 0.0
        for k in range(u.shape[1]):
            if u_norm[k] <= 0:
                continue
            g = wu[:, k] @ resid / n
            step = g / u_norm[k]
            if step != 0.0:
                alpha[k] += step
                resid -= step * u[:, k]
                delta = max(delta, abs(step))
        for j in range(xs.shape[1]):
            if x_norm[j] <= 0:
                continue
            g = wxs[:, j] @ resid / n + x_norm[j] * beta[j]
            new = soft_threshold(g, lam) / x_norm[j]
            step = new - beta[j]
            if step != 0.0:
                beta[j] = new
                resid -= step * xs[:, j]
                delta = max(delta, abs(step))
        if delta < CD_TOL:
            return sweep
    raise FitError(f"coordinate descent failed to converge at lambda={lam:.3g}")


def fit_path(
    data: TrialDataset,
    family: Family,
    include_treatment: bool = True,
    n_lambda: int = 100,
    lambda_min_ratio: float | None = None,
) -> LassoPath:
    """Solve the path from lambda_max (all penalized coefficients zero) downward.

    lambda_max comes from the score of the penalized block at the
    unpenalized-only fit, so the first grid point is exactly the all-zero
    solution; subsequent lambdas warm-start from the previous one.
    """
    if n_lambda < 2:
        raise DataError("n_lambda must be >= 2")
    xs, center, scale = _standardize(data.x_candidates)
    u = _unpenalized_block(data, include_treatment)
    y = data.y
    n, p = xs.shape
    if lambda_min_ratio is None:
        lambda_min_ratio = 1e-3 if n > p else 1e-2

    # Gradient of the penalized block at the null (unpenalized-only) model.
    null_design = glm.DesignMatrix(
        matrix=u,
        origin=tuple(("intercept",) for _ in range(u.shape[1])),
        names=tuple(f"u{k}" for k in range(u.shape[1])),
    )
    null_fit = glm.fit(null_design, y, family)
    mu0 = family.inverse_link(u @ null_fit.coefficients)
    lam_max = float(np.max(np.abs(xs.T @ (y - mu0)) / n, initial=0.0))
    lam_max = max(lam_max, 1e-10)
    lambdas = np.geomspace(lam_max, lam_max * lambda_min_ratio, n_lambda)

    beta = np.zeros(p)
    alpha = null_fit.coefficients.copy()
    coefs, coefs_std, unpen = [], [], []
    entry_order: list[int] = []
    entered = np.zeros(p, dtype=bool)

    for lam in lambdas:
        if family is GAUSSIAN:
            _cd_weighted(xs, u, np.ones(n), y, beta, alpha, lam)
        elif family is BINOMIAL:
            _binomial_outer(xs, u, y, beta, alpha, lam)
        else:
            raise DataError(f"unsupported family {family!r}")
        newly = [j for j in range(p) if not entered[j] and beta[j] != 0.0]
        entry_order.extend(sorted(newly))  # ties at one grid point: ascending index
        entered[newly] = True
        coefs_std.append(beta.copy())
        coefs.append(beta / scale)
        unpen.append(alpha.copy())

    return LassoPath(
        lambdas=lambdas,
        coefficients_per_lambda=tuple(coefs),
        coefficients_std_per_lambda=tuple(coefs_std),
        unpenalized_per_lambda=tuple(unpen),
        entry_order=tuple(entry_order),
        unpenalized_indices=tuple(range(u.shape[1])),
        include_treatment=include_treatment,
        center=center,
        scale=scale,
    )


def _binomial_outer(xs, u, y, beta, alpha, lam):
    """Penalized IRLS: quadratic approximation outside, coordinate descent inside."""
    n = xs.shape[0]
    obj_old = np.inf
    for _ in range(OUTER_MAX):
        eta = u @ alpha + xs @ beta
        mu = np.clip(BINOMIAL.inverse_link(eta), 1e-10, 1.0 - 1e-10)
        w = mu * (1.0 - mu)
        z = eta + (y - mu) / w
        _cd_weighted(xs, u, w, z, beta, alpha, lam)
        eta = u @ alpha + xs @ beta
        obj = -BINOMIAL.log_likelihood(y, BINOMIAL.inverse_link(eta)) / n + lam * np.abs(beta).sum()
        if abs(obj_old - obj) <= OUTER_TOL * (abs(obj) + 1.0):
            return
        obj_old = obj
    raise FitError(f"penalized IRLS failed to converge at lambda={lam:.3g}")


def rank_by_entry(path: LassoPath, p: int):
    """Entry order first; covariates that never enter follow in ascending index order."""
    seen = set(path.entry_order)
    return list(path.entry_order) + [j for j in range(p) if j not in seen]
