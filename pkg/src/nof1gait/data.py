"""Stride-level data ingestion, validation and preprocessing."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np


class Foot(Enum):
    LEFT = "left"
    RIGHT = "right"


class WalkingCondition(Enum):
    ST_CONTROL = "ST-Control"
    ST_FATIGUE = "ST-Fatigue"
    DT_CONTROL = "DT-Control"
    DT_FATIGUE = "DT-Fatigue"

    @property
    def fatigued(self) -> bool:
        return self in (WalkingCondition.ST_FATIGUE, WalkingCondition.DT_FATIGUE)

    @property
    def dual_task(self) -> bool:
        return self in (WalkingCondition.DT_CONTROL, WalkingCondition.DT_FATIGUE)


# Fixed ordering used for the regression coding: the intercept is the
# ST-Control mean and the remaining coefficients are contrasts against it,
# in this order.
DESIGN_CONDITION_ORDER = (
    WalkingCondition.ST_CONTROL,
    WalkingCondition.DT_CONTROL,
    WalkingCondition.ST_FATIGUE,
    WalkingCondition.DT_FATIGUE,
)


class Outcome(Enum):
    STRIDE_LENGTH = "stride_length"
    STRIDE_TIME = "stride_time"


class DataError(ValueError):
    """Raised for malformed input data."""


CSV_HEADER = [
    "participant_id",
    "foot",
    "condition",
    "sequence_index",
    "stride_length_m",
    "stride_time_s",
]

_FOOT_TOKENS = {"left": Foot.LEFT, "right": Foot.RIGHT}
_CONDITION_TOKENS = {c.value.lower(): c for c in WalkingCondition}


@dataclass(frozen=True)
class StrideRecord:
    """One stride observation from one foot under one walking condition."""

    participant_id: str
    foot: Foot
    condition: WalkingCondition
    sequence_index: int
    stride_length: float  # meters
    stride_time: float  # seconds

    def outcome_value(self, outcome: Outcome) -> float:
        if outcome is Outcome.STRIDE_LENGTH:
            return self.stride_length
        return self.stride_time


@dataclass(frozen=True)
class Observation:
    condition: WalkingCondition
    sequence_index: int
    value: float


@dataclass
class TrialSeries:
    """One participant's ordered analysis series for a single outcome.

    Observations are ordered by condition block (in the participant's actual
    visit order) then by within-condition sequence index.
    """

    participant_id: str
    outcome: Outcome
    observations: list[Observation]
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.observations)

    def values(self) -> np.ndarray:
        return np.array([o.value for o in self.observations], dtype=float)

    def conditions(self) -> list[WalkingCondition]:
        return [o.condition for o in self.observations]

    def condition_blocks(self) -> list[tuple[WalkingCondition, int]]:
        """Consecutive runs of the same condition, as (condition, length)."""
        blocks: list[tuple[WalkingCondition, int]] = []
        for obs in self.observations:
            if blocks and blocks[-1][0] is obs.condition:
                blocks[-1] = (obs.condition, blocks[-1][1] + 1)
            else:
                blocks.append((obs.condition, 1))
        return blocks

    def has_all_conditions(self) -> bool:
        present = {o.condition for o in self.observations}
        return present == set(WalkingCondition)

    def observed_condition_stats(self) -> dict[WalkingCondition, tuple[float, float, int]]:
        """Per-condition (mean, sample SD, n) of the observed values."""
        out = {}
        for cond in WalkingCondition:
            vals = np.array([o.value for o in self.observations if o.condition is cond])
            if vals.size == 0:
                continue
            sd = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
            out[cond] = (float(np.mean(vals)), sd, int(vals.size))
        return out


def _parse_positive_float(token: str, column: str, line_no: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"line {line_no}: {column} is not a number: {token!r}") from None
    if not math.isfinite(value):
        raise DataError(f"line {line_no}: {column} is non-finite: {token!r}")
    if value <= 0:
        raise DataError(f"line {line_no}: non-positive value for {column}: {token!r}")
    return value


def parse_stride_csv(source) -> list[StrideRecord]:
    """Parse the stride CSV format into records, preserving file order.

    Accepts bytes, text, or a readable file object. Condition and foot
    tokens are matched case-insensitively.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")

    # '#' lines are provenance comments emitted by this package's own tools
    numbered = [
        (i, line)
        for i, line in enumerate(text.splitlines(), start=1)
        if line.strip() and not line.startswith("#")
    ]
    if not numbered:
        raise DataError("empty input: missing header")
    header = next(csv.reader([numbered[0][1]]))
    if [h.strip() for h in header] != CSV_HEADER:
        raise DataError(f"unexpected header {header!r}; expected {CSV_HEADER!r}")

    records: list[StrideRecord] = []
    last_seq: dict[tuple[str, Foot, WalkingCondition], int] = {}
    for line_no, line in numbered[1:]:
        row = next(csv.reader([line]))
        if len(row) != len(CSV_HEADER):
            raise DataError(f"line {line_no}: expected {len(CSV_HEADER)} fields, got {len(row)}")
        pid, foot_tok, cond_tok, seq_tok, sl_tok, st_tok = (f.strip() for f in row)
        if not pid:
            raise DataError(f"line {line_no}: empty participant_id")
        foot = _FOOT_TOKENS.get(foot_tok.lower())
        if foot is None:
            raise DataError(f"line {line_no}: unknown foot token {foot_tok!r}")
        condition = _CONDITION_TOKENS.get(cond_tok.lower())
        if condition is None:
            raise DataError(f"line {line_no}: unknown condition token {cond_tok!r}")
        try:
            seq = int(seq_tok)
        except ValueError:
            raise DataError(f"line {line_no}: sequence_index is not an integer: {seq_tok!r}") from None
        if seq < 0:
            raise DataError(f"line {line_no}: negative sequence_index {seq}")
        key = (pid, foot, condition)
        if key in last_seq and seq <= last_seq[key]:
            raise DataError(
                f"line {line_no}: sequence_index {seq} not strictly increasing "
                f"within ({pid}, {foot.value}, {condition.value})"
            )
        last_seq[key] = seq
        records.append(
            StrideRecord(
                participant_id=pid,
                foot=foot,
                condition=condition,
                sequence_index=seq,
                stride_length=_parse_positive_float(sl_tok, "stride_length_m", line_no),
                stride_time=_parse_positive_float(st_tok, "stride_time_s", line_no),
            )
        )
    return records


def serialize_stride_csv(records: Iterable[StrideRecord]) -> str:
    """Inverse of parse_stride_csv (modulo float formatting)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow(
            [
                r.participant_id,
                r.foot.value,
                r.condition.value,
                r.sequence_index,
                repr(float(r.stride_length)),
                repr(float(r.stride_time)),
            ]
        )
    return buf.getvalue()


@dataclass
class PreprocessResult:
    series: dict[str, dict[Outcome, TrialSeries]]
    warnings: list[str]
    settings: dict


def preprocess(
    records: Sequence[StrideRecord],
    foot_filter: Foot = Foot.LEFT,
    downsample_factor: int = 5,
    outlier_sd: float = 3.0,
) -> PreprocessResult:
    """Apply the analysis preprocessing pipeline.

    Keeps only ``foot_filter`` strides, removes per-(participant, condition,
    outcome) outliers beyond ``outlier_sd`` sample SDs around the mean
    (statistics computed before downsampling), then keeps every
    ``downsample_factor``-th remaining stride of each condition block,
    starting at the block's first stride. Outlier removal is independent per
    outcome, so the two outcomes of one participant may keep different
    strides.
    """
    if downsample_factor < 1:
        raise ValueError(f"downsample_factor must be >= 1, got {downsample_factor}")
    if outlier_sd <= 0:
        raise ValueError(f"outlier_sd must be > 0, got {outlier_sd}")

    settings = {
        "foot_filter": foot_filter.value,
        "downsample_factor": downsample_factor,
        "outlier_sd": outlier_sd,
    }
    warnings: list[str] = []

    by_participant: dict[str, list[StrideRecord]] = {}
    for r in records:
        if r.foot is not foot_filter:
            continue
        by_participant.setdefault(r.participant_id, []).append(r)

    result: dict[str, dict[Outcome, TrialSeries]] = {}
    for pid, precs in by_participant.items():
        # condition blocks in the participant's recorded (visit) order
        cond_order: list[WalkingCondition] = []
        for r in precs:
            if r.condition not in cond_order:
                cond_order.append(r.condition)

        per_outcome: dict[Outcome, TrialSeries] = {}
        dropped_participant = False
        for outcome in Outcome:
            observations: list[Observation] = []
            for cond in cond_order:
                block = [r for r in precs if r.condition is cond]
                vals = np.array([r.outcome_value(outcome) for r in block])
                mean = float(np.mean(vals))
                sd = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
                kept = [
                    r
                    for r, v in zip(block, vals)
                    if abs(v - mean) <= outlier_sd * sd or sd == 0.0
                ]
                kept = kept[::downsample_factor]
                if not kept:
                    warnings.append(
                        f"participant {pid}: empty {cond.value} block for "
                        f"{outcome.value} after preprocessing; participant excluded"
                    )
                    dropped_participant = True
                    break
                observations.extend(
                    Observation(cond, r.sequence_index, r.outcome_value(outcome))
                    for r in kept
                )
            if dropped_participant:
                break
            per_outcome[outcome] = TrialSeries(
                participant_id=pid,
                outcome=outcome,
                observations=observations,
                provenance=dict(settings),
            )
        if not dropped_participant:
            result[pid] = per_outcome

    return PreprocessResult(series=result, warnings=warnings, settings=settings)


@dataclass(frozen=True)
class ConditionDescription:
    condition: WalkingCondition
    n: int
    stride_length_mean: float
    stride_length_sd: float
    stride_time_mean: float
    stride_time_sd: float


def describe(records: Sequence[StrideRecord]) -> list[ConditionDescription]:
    """Pooled per-condition stride counts and outcome mean/SD."""
    if not records:
        raise DataError("describe requires a non-empty record list")
    out = []
    for cond in DESIGN_CONDITION_ORDER:
        sub = [r for r in records if r.condition is cond]
        if not sub:
            continue
        sl = np.array([r.stride_length for r in sub])
        st = np.array([r.stride_time for r in sub])
        out.append(
            ConditionDescription(
                condition=cond,
                n=len(sub),
                stride_length_mean=float(np.mean(sl)),
                stride_length_sd=float(np.std(sl, ddof=1)) if len(sub) > 1 else 0.0,
                stride_time_mean=float(np.mean(st)),
                stride_time_sd=float(np.std(st, ddof=1)) if len(sub) > 1 else 0.0,
            )
        )
    return out


def describe_csv(descriptions: Sequence[ConditionDescription]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["condition", "n", "sl_mean", "sl_sd", "st_mean", "st_sd"])
    for d in descriptions:
        writer.writerow(
            [
                d.condition.value,
                d.n,
                f"{d.stride_length_mean:.6g}",
                f"{d.stride_length_sd:.6g}",
                f"{d.stride_time_mean:.6g}",
                f"{d.stride_time_sd:.6g}",
            ]
        )
    return buf.getvalue()
