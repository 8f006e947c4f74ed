"""Trial data representation, CSV ingestion, and synthetic RCT generation.

A :class:`TrialDataset` holds the outcome, the randomized arm indicator, the
interaction-candidate covariates, and any pre-declared adjustment covariates.
Missing data is rejected, never imputed: multiply-imputed workflows run the
pipeline once per complete input file.
"""

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import CsvParseError, DataError, DegenerateDesignError
from .families import BINOMIAL, GAUSSIAN, Family


def _freeze(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TrialDataset:
    """Immutable two-arm trial data.

    Attributes
    ----------
    y : (n,) float array
        Outcome; real-valued for gaussian, {0,1} for binomial analyses.
    treatment : (n,) int array
        Randomized arm indicator, 1 = treatment arm, 0 = control arm.
    x_candidates : (n, p) float array
        Interaction-candidate covariates.
    x_adjust : (n, p_c) float array
        Covariates adjusted for but never tested for interaction (p_c may be 0).
    """

    y: np.ndarray
    treatment: np.ndarray
    x_candidates: np.ndarray
    x_adjust: np.ndarray
    candidate_names: tuple = ()
    adjust_names: tuple = ()

    def __post_init__(self):
        y = _freeze(np.asarray(self.y, dtype=float))
        t = _freeze(np.asarray(self.treatment, dtype=int))
        xs = _freeze(np.atleast_2d(np.asarray(self.x_candidates, dtype=float)))
        xc = np.asarray(self.x_adjust, dtype=float)
        if xc.size == 0:
            xc = np.empty((y.shape[0], 0))
        xc = _freeze(np.atleast_2d(xc))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "treatment", t)
        object.__setattr__(self, "x_candidates", xs)
        object.__setattr__(self, "x_adjust", xc)

        n = y.shape[0]
        if t.shape != (n,) or xs.shape[0] != n or xc.shape[0] != n:
            raise DataError("y, treatment, and covariate matrices must share the row count")
        for name, arr in (("y", y), ("x_candidates", xs), ("x_adjust", xc)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains non-finite values")
        if not np.all(np.isin(t, (0, 1))):
            raise DataError("treatment indicator must contain only 0 and 1")
        if t.min() == t.max():
            raise DegenerateDesignError("treatment column is constant; both arms are required")

        cn = tuple(self.candidate_names) or tuple(f"x{j + 1}" for j in range(xs.shape[1]))
        an = tuple(self.adjust_names) or tuple(f"c{j + 1}" for j in range(xc.shape[1]))
        if len(cn) != xs.shape[1]:
            raise DataError("candidate_names length does not match x_candidates width")
        if len(an) != xc.shape[1]:
            raise DataError("adjust_names length does not match x_adjust width")
        object.__setattr__(self, "candidate_names", cn)
        object.__setattr__(self, "adjust_names", an)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.x_candidates.shape[1]

    @property
    def p_c(self):
        return self.x_adjust.shape[1]

    def with_candidates(self, x_new, names):
        """Derived dataset with the candidate block replaced (same y/arm/adjusters)."""
        return replace(self, x_candidates=x_new, candidate_names=tuple(names))

    def with_outcome(self, y_new):
        return replace(self, y=y_new)

    def with_treatment(self, t_new):
        return replace(self, treatment=t_new)


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator settings for one synthetic two-arm trial.

    ``interaction_effects`` is the per-covariate arm contrast added to the
    linear predictor on the treated arm; the zero vector encodes the global
    null of no treatment-covariate interaction.
    """

    n: int
    p: int
    family: Family = GAUSSIAN
    intercept: float = 0.0
    main_effects: tuple = ()
    treatment_effect: float = 0.0
    interaction_effects: tuple = ()
    adjust_effects: tuple = ()
    covariate_correlation: float = 0.0
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 4:
            raise DataError("need n >= 4")
        if self.p < 1:
            raise DataError("need p >= 1")
        object.__setattr__(self, "main_effects", _expand(self.main_effects, self.p, "main_effects"))
        object.__setattr__(
            self, "interaction_effects", _expand(self.interaction_effects, self.p, "interaction_effects")
        )
        object.__setattr__(self, "adjust_effects", tuple(float(v) for v in self.adjust_effects))
        if self.family is GAUSSIAN and not self.noise_sd > 0:
            raise DataError("noise_sd must be > 0")

    @property
    def p_c(self):
        return len(self.adjust_effects)

    def correlation_matrix(self):
        c = self.covariate_correlation
        if np.isscalar(c):
            m = np.full((self.p, self.p), float(c))
            np.fill_diagonal(m, 1.0)
            return m
        m = np.asarray(c, dtype=float)
        if m.shape != (self.p, self.p) or not np.allclose(m, m.T):
            raise DataError("covariate_correlation must be scalar or a symmetric p x p matrix")
        return m


def _expand(values, p, name):
    if values is None or (np.isscalar(values) and values == 0) or len(np.atleast_1d(values)) == 0:
        return tuple(0.0 for _ in range(p))
    arr = tuple(float(v) for v in np.atleast_1d(values))
    if len(arr) != p:
        raise DataError(f"{name} must have length p={p}")
    return arr


def balanced_assignment(n, rng):
    """Arm labels balanced to within one unit, in random order."""
    t = np.zeros(n, dtype=int)
    t[: n // 2] = 1
    return rng.permutation(t)


def generate_trial(spec: SyntheticSpec) -> TrialDataset:
    """Draw one synthetic trial from ``spec``.

    Covariates are multivariate normal with the requested correlation (unit
    variances); adjusters are independent standard normal; arms come from a
    balanced permutation. The linear predictor is
    ``intercept + x.beta + t*theta + t*(x.delta) + x_c.beta_c`` and the
    outcome is Normal(eta, noise_sd) or Bernoulli(logit^-1(eta)).
    Identical specs (including seed) produce identical datasets.
    """
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    corr = spec.correlation_matrix()
    try:
        chol = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError as exc:
        raise DataError("covariate correlation matrix is not positive definite") from exc

    x = rng.standard_normal((spec.n, spec.p)) @ chol.T
    x_adj = rng.standard_normal((spec.n, spec.p_c)) if spec.p_c else np.empty((spec.n, 0))
    t = balanced_assignment(spec.n, rng)

    eta = spec.intercept + x @ np.asarray(spec.main_effects) + t * spec.treatment_effect
    eta = eta + t * (x @ np.asarray(spec.interaction_effects))
    if spec.p_c:
        eta = eta + x_adj @ np.asarray(spec.adjust_effects)

    if spec.family is GAUSSIAN:
        y = eta + spec.noise_sd * rng.standard_normal(spec.n)
    elif spec.family is BINOMIAL:
        y = rng.binomial(1, BINOMIAL.inverse_link(eta)).astype(float)
    else:
        raise DataError(f"unsupported family {spec.family!r}")

    return TrialDataset(y=y, treatment=t, x_candidates=x, x_adjust=x_adj)


def load_csv(path, outcome_col, treatment_col, adjust_cols=()) -> TrialDataset:
    """Read a trial dataset from an RFC-4180 CSV with a header row.

    Every column other than the outcome, treatment, and adjustment columns
    becomes an interaction candidate, in file order. Any empty or non-numeric
    cell is an error naming its (1-based) row and column; non-finite values
    are rejected the same way.
    """
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read data file {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError(f"{path}: file is empty; a header row is required") from None
        rows = list(reader)

    header = [h.strip() for h in header]
    adjust_cols = list(adjust_cols)
    for col in [outcome_col, treatment_col, *adjust_cols]:
        if col not in header:
            raise DataError(f"column {col!r} not found in {path} (header: {header})")
    special = {outcome_col, treatment_col, *adjust_cols}
    candidate_names = [h for h in header if h not in special]

    index = {h: j for j, h in enumerate(header)}
    n = len(rows)
    if n == 0:
        raise CsvParseError(f"{path}: no data rows")

    def parse(row_cells, row_number, col_name):
        cell = row_cells[index[col_name]].strip()
        if cell == "":
            raise CsvParseError(
                f"{path}: empty cell at row {row_number}, column {col_name!r}",
                row=row_number, column=col_name,
            )
        try:
            value = float(cell)
        except ValueError:
            raise CsvParseError(
                f"{path}: cannot parse {cell!r} at row {row_number}, column {col_name!r}",
                row=row_number, column=col_name,
            ) from None
        if not np.isfinite(value):
            raise CsvParseError(
                f"{path}: non-finite value at row {row_number}, column {col_name!r}",
                row=row_number, column=col_name,
            )
        return value

    y = np.empty(n)
    t = np.empty(n)
    xs = np.empty((n, len(candidate_names)))
    xc = np.empty((n, len(adjust_cols)))
    for i, cells in enumerate(rows):
        row_number = i + 2  # 1-based, counting the header
        if len(cells) != len(header):
            raise CsvParseError(f"{path}: row {row_number} has {len(cells)} cells, expected {len(header)}")
        y[i] = parse(cells, row_number, outcome_col)
        t[i] = parse(cells, row_number, treatment_col)
        for j, name in enumerate(candidate_names):
            xs[i, j] = parse(cells, row_number, name)
        for j, name in enumerate(adjust_cols):
            xc[i, j] = parse(cells, row_number, name)

    if not np.all(np.isin(t, (0.0, 1.0))):
        raise DataError(f"{path}: treatment column {treatment_col!r} must contain only 0 and 1")
    return TrialDataset(
        y=y, treatment=t.astype(int), x_candidates=xs, x_adjust=xc,
        candidate_names=tuple(candidate_names), adjust_names=tuple(adjust_cols),
    )


def write_csv(data: TrialDataset, path, outcome_col="y", treatment_col="treatment"):
    """Write a dataset so that load_csv round-trips it bit-for-bit.

    Floats are serialized with repr(), the shortest string that parses back
    to the identical double.
    """
    header = [outcome_col, treatment_col, *data.candidate_names, *data.adjust_names]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n):
            row = [repr(float(data.y[i])), str(int(data.treatment[i]))]
            row += [repr(float(v)) for v in data.x_candidates[i]]
            row += [repr(float(v)) for v in data.x_adjust[i]]
            writer.writerow(row)
