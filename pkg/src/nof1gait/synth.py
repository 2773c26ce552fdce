"""Synthetic trial data with known ground truth, for recovery testing."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import (
    DESIGN_CONDITION_ORDER,
    Foot,
    Observation,
    Outcome,
    StrideRecord,
    TrialSeries,
    WalkingCondition,
)

# visit orders used in the study: half the participants walked the
# single-task visit first, half the dual-task visit first
ST_FIRST_ORDER = (
    WalkingCondition.ST_CONTROL,
    WalkingCondition.ST_FATIGUE,
    WalkingCondition.DT_CONTROL,
    WalkingCondition.DT_FATIGUE,
)
DT_FIRST_ORDER = (
    WalkingCondition.DT_CONTROL,
    WalkingCondition.DT_FATIGUE,
    WalkingCondition.ST_CONTROL,
    WalkingCondition.ST_FATIGUE,
)

_CONDITION_CONTRAST = {
    WalkingCondition.ST_CONTROL: 0,
    WalkingCondition.DT_CONTROL: 1,
    WalkingCondition.ST_FATIGUE: 2,
    WalkingCondition.DT_FATIGUE: 3,
}


@dataclass(frozen=True)
class SynthSpec:
    beta_true: tuple[float, float, float, float]
    phi_true: float
    sigma_true: float
    strides_per_condition: int
    condition_order: tuple[WalkingCondition, ...] = ST_FIRST_ORDER
    seed: int = 0
    outcome: Outcome = Outcome.STRIDE_LENGTH

    def __post_init__(self):
        if not abs(self.phi_true) < 1:
            raise ValueError(f"|phi_true| must be < 1, got {self.phi_true}")
        if self.sigma_true <= 0:
            raise ValueError(f"sigma_true must be > 0, got {self.sigma_true}")
        if self.strides_per_condition < 1:
            raise ValueError("strides_per_condition must be >= 1")
        if sorted(self.condition_order, key=lambda c: c.value) != sorted(
            WalkingCondition, key=lambda c: c.value
        ):
            raise ValueError("condition_order must be a permutation of the four conditions")


def _ar1_errors(rng: np.random.Generator, n: int, phi: float, sigma: float) -> np.ndarray:
    """Stationary AR(1) noise: the first draw comes from the marginal
    N(0, sigma^2/(1-phi^2)), so the covariance is exact at every lag."""
    eps = np.empty(n)
    eps[0] = rng.normal(0.0, sigma / math.sqrt(1 - phi**2))
    innovations = rng.normal(0.0, sigma, size=n - 1)
    for t in range(1, n):
        eps[t] = phi * eps[t - 1] + innovations[t - 1]
    return eps


def generate_series(spec: SynthSpec, participant_id: str = "synth") -> TrialSeries:
    """y = X beta_true + eps with AR(1) errors running continuously across
    condition blocks in visit order."""
    k = spec.strides_per_condition
    n = 4 * k
    rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed & (2**64 - 1)))
    eps = _ar1_errors(rng, n, spec.phi_true, spec.sigma_true)

    observations: list[Observation] = []
    i = 0
    for cond in spec.condition_order:
        contrast = _CONDITION_CONTRAST[cond]
        mean = spec.beta_true[0] + (spec.beta_true[contrast] if contrast else 0.0)
        for seq in range(k):
            observations.append(Observation(cond, seq, float(mean + eps[i])))
            i += 1
    return TrialSeries(
        participant_id=participant_id,
        outcome=spec.outcome,
        observations=observations,
        provenance={"synthetic": True, "seed": spec.seed},
    )


@dataclass(frozen=True)
class ParticipantTruth:
    participant_id: str
    beta: tuple[float, float, float, float]
    phi: float
    sigma: float


@dataclass
class SynthStudy:
    records: list[StrideRecord]
    truths: list[ParticipantTruth]


def generate_study(
    n_participants: int,
    specs: Optional[Sequence[SynthSpec]] = None,
    seed: int = 0,
    strides_per_condition: int = 50,
    base_spec: Optional[SynthSpec] = None,
) -> SynthStudy:
    """Compose per-participant synthetic series into a full study record set.

    Visit order alternates so that half the participants are ST-first and
    half DT-first. When ``specs`` is omitted, per-participant ground truth is
    drawn around ``base_spec`` (or stride-length-like defaults).
    """
    master = np.random.default_rng(np.random.SeedSequence(entropy=seed & (2**64 - 1)))
    if specs is not None and len(specs) != n_participants:
        raise ValueError("specs must have one entry per participant")

    records: list[StrideRecord] = []
    truths: list[ParticipantTruth] = []
    for idx in range(n_participants):
        pid = f"synth{idx + 1:02d}"
        order = ST_FIRST_ORDER if idx % 2 == 0 else DT_FIRST_ORDER
        if specs is not None:
            spec = specs[idx]
        else:
            base = base_spec or SynthSpec(
                beta_true=(1.4, -0.09, -0.03, -0.12),
                phi_true=0.5,
                sigma_true=0.05,
                strides_per_condition=strides_per_condition,
            )
            beta = (
                base.beta_true[0] + master.normal(0, 0.08),
                base.beta_true[1] + master.normal(0, 0.03),
                base.beta_true[2] + master.normal(0, 0.03),
                base.beta_true[3] + master.normal(0, 0.03),
            )
            spec = SynthSpec(
                beta_true=beta,
                phi_true=float(master.uniform(0.2, 0.8)),
                sigma_true=base.sigma_true,
                strides_per_condition=strides_per_condition,
                condition_order=order,
                seed=int(master.integers(0, 2**63)),
                outcome=base.outcome,
            )
        series = generate_series(spec, participant_id=pid)
        # the non-modeled outcome gets plausible independent noise so that
        # downstream analyses of either outcome stay non-degenerate
        filler_rng = np.random.default_rng(
            np.random.SeedSequence(entropy=spec.seed & (2**64 - 1), spawn_key=(1,))
        )
        for obs in series.observations:
            if spec.outcome is Outcome.STRIDE_LENGTH:
                sl, st = obs.value, float(filler_rng.normal(1.1, 0.05))
            else:
                sl, st = float(filler_rng.normal(1.4, 0.08)), obs.value
            records.append(
                StrideRecord(
                    participant_id=pid,
                    foot=Foot.LEFT,
                    condition=obs.condition,
                    sequence_index=obs.sequence_index,
                    stride_length=sl,
                    stride_time=st,
                )
            )
        truths.append(
            ParticipantTruth(
                participant_id=pid,
                beta=spec.beta_true,
                phi=spec.phi_true,
                sigma=spec.sigma_true,
            )
        )
    return SynthStudy(records=records, truths=truths)


def truth_csv(truths: Sequence[ParticipantTruth]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["participant_id", "beta1", "beta2", "beta3", "beta4", "phi", "sigma"])
    for t in truths:
        writer.writerow(
            [t.participant_id] + [repr(v) for v in (*t.beta, t.phi, t.sigma)]
        )
    return buf.getvalue()
