"""Design matrices and prior sets for the three model variants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .data import DESIGN_CONDITION_ORDER, Outcome, TrialSeries, WalkingCondition


class ModelVariant(Enum):
    BASIC = "basic"
    TIME_COVARIATE = "time"
    AR1 = "ar1"


class DesignError(ValueError):
    """Raised for invalid design or prior construction."""


# ---------------------------------------------------------------------------
# Priors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalPrior:
    mean: float
    sd: float

    def __post_init__(self):
        if self.sd <= 0:
            raise DesignError(f"normal prior sd must be > 0, got {self.sd}")

    def log_pdf(self, x: float) -> float:
        z = (x - self.mean) / self.sd
        return -0.5 * z * z - math.log(self.sd) - 0.5 * math.log(2 * math.pi)


@dataclass(frozen=True)
class UniformPrior:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DesignError(f"uniform prior requires lo < hi, got ({self.lo}, {self.hi})")

    def log_pdf(self, x: float) -> float:
        if self.lo < x < self.hi:
            return -math.log(self.hi - self.lo)
        return -math.inf


@dataclass(frozen=True)
class HalfCauchyPrior:
    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise DesignError(f"half-Cauchy scale must be > 0, got {self.scale}")

    def log_pdf(self, x: float) -> float:
        if x <= 0:
            return -math.inf
        return (
            math.log(2.0)
            - math.log(math.pi * self.scale)
            - math.log1p((x / self.scale) ** 2)
        )


@dataclass(frozen=True)
class TruncatedNormalPrior:
    mean: float
    sd: float
    lo: float

    def __post_init__(self):
        if self.sd <= 0:
            raise DesignError(f"truncated normal sd must be > 0, got {self.sd}")

    def log_pdf(self, x: float) -> float:
        if x < self.lo:
            return -math.inf
        z = (x - self.mean) / self.sd
        alpha = (self.lo - self.mean) / self.sd
        # normalizing constant: survival function of the standard normal at alpha
        log_tail = math.log(0.5 * math.erfc(alpha / math.sqrt(2)))
        return -0.5 * z * z - math.log(self.sd) - 0.5 * math.log(2 * math.pi) - log_tail


PriorSpec = NormalPrior | UniformPrior | HalfCauchyPrior | TruncatedNormalPrior


@dataclass(frozen=True)
class PriorSet:
    """Priors for the regression coefficients, error scale and AR coefficient."""

    beta: tuple[NormalPrior, ...]
    sigma: PriorSpec
    phi: Optional[PriorSpec] = None

    def __post_init__(self):
        for b in self.beta:
            if not isinstance(b, NormalPrior):
                raise DesignError("beta priors must be independent normals")
        if self.phi is not None and isinstance(self.phi, UniformPrior):
            if self.phi.lo < -1 or self.phi.hi > 1:
                raise DesignError("phi prior support must lie within (-1, 1)")


@dataclass(frozen=True)
class ModelSpec:
    variant: ModelVariant
    outcome: Outcome
    priors: PriorSet

    def __post_init__(self):
        p = len(self.priors.beta)
        expected = 5 if self.variant is ModelVariant.TIME_COVARIATE else 4
        if p != expected:
            raise DesignError(
                f"{self.variant.value} model needs {expected} beta priors, got {p}"
            )
        if (self.priors.phi is not None) != (self.variant is ModelVariant.AR1):
            raise DesignError("phi prior present iff variant is AR1")


# ---------------------------------------------------------------------------
# Design matrices
# ---------------------------------------------------------------------------

BASIC_COLUMN_LABELS = (
    "Intercept",
    "DTControlIndicator",
    "STFatigueIndicator",
    "DTFatigueIndicator",
)
TIME_COLUMN_LABEL = "TimeIndex"


@dataclass
class DesignMatrix:
    matrix: np.ndarray  # (n, p)
    column_semantics: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def p(self) -> int:
        return self.matrix.shape[1]


# one indicator per non-baseline condition, baseline = ST-Control
_INDICATOR_COLUMN = {
    WalkingCondition.ST_CONTROL: None,
    WalkingCondition.DT_CONTROL: 1,
    WalkingCondition.ST_FATIGUE: 2,
    WalkingCondition.DT_FATIGUE: 3,
}


def build_design_matrix(series: TrialSeries, variant: ModelVariant) -> DesignMatrix:
    """Cell-coded design matrix: intercept = ST-Control mean, the other
    coefficients = condition differences against ST-Control. The
    time-covariate variant appends an integer ramp restarting at 0 at each
    condition block."""
    present = {o.condition for o in series.observations}
    for cond in DESIGN_CONDITION_ORDER:
        if cond not in present:
            raise DesignError(f"series is missing condition {cond.value}")

    p = 5 if variant is ModelVariant.TIME_COVARIATE else 4
    X = np.zeros((len(series.observations), p))
    X[:, 0] = 1.0
    prev_cond = None
    ramp = 0
    for i, obs in enumerate(series.observations):
        col = _INDICATOR_COLUMN[obs.condition]
        if col is not None:
            X[i, col] = 1.0
        if variant is ModelVariant.TIME_COVARIATE:
            ramp = ramp + 1 if obs.condition is prev_cond else 0
            X[i, 4] = ramp
        prev_cond = obs.condition

    labels = BASIC_COLUMN_LABELS
    if variant is ModelVariant.TIME_COVARIATE:
        labels = labels + (TIME_COLUMN_LABEL,)
    return DesignMatrix(matrix=X, column_semantics=labels)


# ---------------------------------------------------------------------------
# Default priors
# ---------------------------------------------------------------------------

# sd implied by a normal prior with precision 1e-3
NONINFORMATIVE_BETA_SD = 1.0 / math.sqrt(1.0e-3)

# informative intercept priors: (mean, sd) per outcome.  NOTE: the source
# prior table writes these in the same "N(a, b)" notation used for the
# precision-parameterized non-informative prior, but the accompanying text
# states the values as standard deviations; we read them as (mean, sd).
INFORMATIVE_INTERCEPT = {
    Outcome.STRIDE_LENGTH: NormalPrior(1.36, 0.08),
    Outcome.STRIDE_TIME: NormalPrior(1.05, 0.06),
}


def default_priors(outcome: Outcome, informative: bool, variant: ModelVariant) -> PriorSet:
    p = 5 if variant is ModelVariant.TIME_COVARIATE else 4
    beta = [NormalPrior(0.0, NONINFORMATIVE_BETA_SD) for _ in range(p)]
    if informative:
        beta[0] = INFORMATIVE_INTERCEPT[outcome]
    if variant is ModelVariant.AR1:
        sigma: PriorSpec = HalfCauchyPrior(2.5)
        phi: Optional[PriorSpec] = UniformPrior(-1.0, 1.0)
    else:
        sigma = UniformPrior(0.0, 100.0)
        phi = None
    return PriorSet(beta=tuple(beta), sigma=sigma, phi=phi)


# ---------------------------------------------------------------------------
# Config-file prior overrides
# ---------------------------------------------------------------------------

_PRIOR_BUILDERS = {
    "normal": lambda kw: NormalPrior(float(kw["mean"]), float(kw["sd"])),
    "uniform": lambda kw: UniformPrior(float(kw["lo"]), float(kw["hi"])),
    "halfcauchy": lambda kw: HalfCauchyPrior(float(kw["scale"])),
    "truncatednormal": lambda kw: TruncatedNormalPrior(
        float(kw["mean"]), float(kw["sd"]), float(kw["lo"])
    ),
}


def _prior_from_fields(fields: dict) -> PriorSpec:
    dist = fields.get("dist", "").lower().replace("-", "").replace("_", "")
    builder = _PRIOR_BUILDERS.get(dist)
    if builder is None:
        raise DesignError(f"unknown prior distribution {fields.get('dist')!r}")
    try:
        return builder(fields)
    except KeyError as e:
        raise DesignError(f"prior {dist} missing field {e.args[0]!r}") from None


def apply_prior_overrides(base: PriorSet, overrides: dict[str, dict]) -> PriorSet:
    """Override individual priors from a config mapping keyed
    ``beta1..betaN, sigma, phi`` with ``dist`` plus the distribution's
    parameter fields."""
    beta = list(base.beta)
    sigma = base.sigma
    phi = base.phi
    for key, fields in overrides.items():
        key = key.lower()
        if key.startswith("beta"):
            idx = int(key[4:]) - 1
            if not 0 <= idx < len(beta):
                raise DesignError(f"prior key {key!r} out of range for {len(beta)} coefficients")
            spec = _prior_from_fields(fields)
            if not isinstance(spec, NormalPrior):
                raise DesignError("beta priors must be normal")
            beta[idx] = spec
        elif key == "sigma":
            sigma = _prior_from_fields(fields)
        elif key == "phi":
            if phi is None:
                raise DesignError("phi prior only applies to the AR1 variant")
            phi = _prior_from_fields(fields)
        else:
            raise DesignError(f"unknown prior key {key!r}")
    return PriorSet(beta=tuple(beta), sigma=sigma, phi=phi)
