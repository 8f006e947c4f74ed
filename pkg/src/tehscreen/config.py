"""Structured configuration: the pipeline's pre-registration record.

Config files are JSON. The parsed dict is kept verbatim and embedded in
every report so a run can be reproduced from its own output. K comes from a
deterministic rule on n (log / power / fixed) resolved before any data is
read; there is no way to express a data-adaptive K.
"""

import json
from dataclasses import dataclass, field

from .data_model import SyntheticSpec
from .errors import ConfigError
from .families import Family, family_from_name

SCREENING_METHODS = ("full_model", "univariate", "lasso", "pca", "multi_stage", "irm")
K_RULES = ("log", "power", "fixed")


def load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None


def _require(d, key, kind, where):
    if key not in d:
        raise ConfigError(f"missing config field {where}{key!r}")
    value = d[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"config field {where}{key!r} must be {kind.__name__}, got {value!r}")
    return value


def _optional(d, key, kind, default, where):
    if key not in d:
        return default
    return _require(d, key, kind, where)


@dataclass(frozen=True)
class PipelineConfig:
    """Everything needed to run Stage-1 + Stage-2 on one dataset."""

    family_name: str
    method: str
    k_rule: str
    k_params: dict
    supervised_pc: bool = False
    ml: str = "boosting"
    pc_rank: str = "variance"
    include_treatment: bool = True
    n_trees: int = 500
    shrinkage: float = 0.05
    ri_threshold: float = 1.0
    n_lambda: int = 100
    pca_standardize: bool = True
    null_reps: int = 0
    null_method: str = "parametric"
    seed: int = 0
    label: str = ""
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def family(self) -> Family:
        return family_from_name(self.family_name)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigError("pipeline config must be a JSON object")
        family_name = _require(d, "family", str, "")
        family_from_name(family_name)  # validate early

        screening = _require(d, "screening", dict, "")
        method = _require(screening, "method", str, "screening.")
        if method not in SCREENING_METHODS:
            raise ConfigError(
                f"screening.method must be one of {SCREENING_METHODS}, got {method!r}"
            )

        k_rule_block = _require(d, "k_rule", dict, "")
        rule = _require(k_rule_block, "rule", str, "k_rule.")
        if rule not in K_RULES:
            raise ConfigError(f"k_rule.rule must be one of {K_RULES}, got {rule!r}")
        k_params = {key: value for key, value in k_rule_block.items() if key != "rule"}
        for key, value in k_params.items():
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(
                    f"k_rule.{key} must be a number fixed ahead of the data, got {value!r}"
                )

        boost = screening.get("boosting", {})
        las = screening.get("lasso", {})
        pca_block = screening.get("pca", {})
        null_block = d.get("null_sim", {})
        if not isinstance(null_block, dict):
            raise ConfigError("null_sim must be an object")

        cfg = cls(
            family_name=family_name,
            method=method,
            k_rule=rule,
            k_params=k_params,
            supervised_pc=_optional(screening, "supervised", bool, False, "screening."),
            ml=_optional(screening, "ml", str, "boosting", "screening."),
            pc_rank=_optional(screening, "pc_rank", str, "variance", "screening."),
            include_treatment=_optional(
                screening, "include_treatment", bool, True, "screening."
            ),
            n_trees=_optional(boost, "n_trees", int, 500, "screening.boosting."),
            shrinkage=_optional(boost, "shrinkage", float, 0.05, "screening.boosting."),
            ri_threshold=_optional(boost, "ri_threshold", float, 1.0, "screening.boosting."),
            n_lambda=_optional(las, "n_lambda", int, 100, "screening.lasso."),
            pca_standardize=_optional(pca_block, "standardize", bool, True, "screening.pca."),
            null_reps=_optional(null_block, "reps", int, 0, "null_sim."),
            null_method=_optional(null_block, "method", str, "parametric", "null_sim."),
            seed=_optional(d, "seed", int, 0, ""),
            label=_optional(d, "label", str, method, ""),
            raw=d,
        )
        if cfg.ml not in ("boosting", "lasso"):
            raise ConfigError(f"screening.ml must be boosting or lasso, got {cfg.ml!r}")
        if cfg.pc_rank not in ("variance", "supervised"):
            raise ConfigError(f"screening.pc_rank must be variance or supervised, got {cfg.pc_rank!r}")
        if cfg.null_method not in ("parametric", "permutation"):
            raise ConfigError(
                f"null_sim.method must be parametric or permutation, got {cfg.null_method!r}"
            )
        if cfg.null_reps < 0:
            raise ConfigError("null_sim.reps must be >= 0")
        if cfg.n_trees < 1:
            raise ConfigError("screening.boosting.n_trees must be >= 1")
        if not 0.0 < cfg.shrinkage <= 1.0:
            raise ConfigError("screening.boosting.shrinkage must be in (0, 1]")
        if cfg.ri_threshold < 0.0:
            raise ConfigError("screening.boosting.ri_threshold must be >= 0")
        if cfg.n_lambda < 2:
            raise ConfigError("screening.lasso.n_lambda must be >= 2")
        return cfg

    def resolve_k(self, n: int) -> int:
        from .screening import k_schedule

        return k_schedule(n, self.k_rule, self.k_params)


def synthetic_spec_from_dict(d: dict) -> SyntheticSpec:
    """Parse the generator block used by generate / validate-theorem / power-study."""
    if not isinstance(d, dict):
        raise ConfigError("spec must be a JSON object")
    family = family_from_name(_require(d, "family", str, "spec."))
    n = _require(d, "n", int, "spec.")
    p = _require(d, "p", int, "spec.")
    return SyntheticSpec(
        n=n,
        p=p,
        family=family,
        intercept=_optional(d, "intercept", float, 0.0, "spec."),
        main_effects=tuple(d.get("main_effects", ())),
        treatment_effect=_optional(d, "treatment_effect", float, 0.0, "spec."),
        interaction_effects=tuple(d.get("interaction_effects", ())),
        adjust_effects=tuple(d.get("adjust_effects", ())),
        covariate_correlation=d.get("covariate_correlation", 0.0),
        noise_sd=_optional(d, "noise_sd", float, 1.0, "spec."),
        seed=_optional(d, "seed", int, 0, "spec."),
    )
