"""Population-level reference analysis: two-way repeated-measures ANOVA."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import f as f_dist

from .data import Outcome, StrideRecord, WalkingCondition


class AnovaError(ValueError):
    """Raised for degenerate or insufficient ANOVA inputs."""


@dataclass
class CellMeans:
    """Per-participant mean outcome in each of the four cells.

    cells[participant] maps (fatigued, dual_task) -> mean value.
    """

    outcome: Outcome
    cells: dict[str, dict[tuple[bool, bool], float]]
    warnings: list[str]

    @property
    def participants(self) -> list[str]:
        return list(self.cells)


def cell_means(records: Sequence[StrideRecord], outcome: Outcome) -> CellMeans:
    """Arithmetic mean per participant per condition (complete cases only)."""
    sums: dict[str, dict[tuple[bool, bool], list[float]]] = {}
    for r in records:
        key = (r.condition.fatigued, r.condition.dual_task)
        sums.setdefault(r.participant_id, {}).setdefault(key, []).append(
            r.outcome_value(outcome)
        )
    cells: dict[str, dict[tuple[bool, bool], float]] = {}
    warns: list[str] = []
    all_keys = {(f, d) for f in (False, True) for d in (False, True)}
    for pid, per_cell in sums.items():
        if set(per_cell) != all_keys:
            missing = sorted(all_keys - set(per_cell))
            warns.append(f"participant {pid}: missing cells {missing}; excluded from ANOVA")
            continue
        cells[pid] = {k: float(np.mean(v)) for k, v in per_cell.items()}
    return CellMeans(outcome=outcome, cells=cells, warnings=warns)


@dataclass(frozen=True)
class EffectResult:
    name: str
    F: float
    df: tuple[int, int]
    p: float
    ges: float


@dataclass
class AnovaResult:
    outcome: Outcome
    n_participants: int
    effects: dict[str, EffectResult]  # keys: Fatigue, Task, Interaction


def _cell_array(cells: CellMeans) -> np.ndarray:
    """Shape (n_subjects, 2 fatigue levels, 2 task levels)."""
    pids = cells.participants
    y = np.empty((len(pids), 2, 2))
    for s, pid in enumerate(pids):
        for (fat, dt), v in cells.cells[pid].items():
            y[s, int(fat), int(dt)] = v
    return y


def rm_anova_2x2(cells: CellMeans) -> AnovaResult:
    """Fully-within 2x2 ANOVA on participant cell means.

    Each effect is tested against its own effect-by-subject interaction;
    generalized eta squared uses all error strata plus the subject sum of
    squares in the denominator.
    """
    y = _cell_array(cells)
    n = y.shape[0]
    if n < 3:
        raise AnovaError(f"need at least 3 complete-case participants, got {n}")
    if not np.all(np.isfinite(y)):
        raise AnovaError("non-finite cell means")

    gm = y.mean()
    subj = y.mean(axis=(1, 2))  # (n,)
    a_marg = y.mean(axis=(0, 2))  # fatigue levels (2,)
    b_marg = y.mean(axis=(0, 1))  # task levels (2,)
    ab = y.mean(axis=0)  # (2, 2)
    a_s = y.mean(axis=2)  # (n, 2)
    b_s = y.mean(axis=1)  # (n, 2)

    ss_subj = 4 * float(np.sum((subj - gm) ** 2))
    ss_a = 2 * n * float(np.sum((a_marg - gm) ** 2))
    ss_b = 2 * n * float(np.sum((b_marg - gm) ** 2))
    ss_ab = n * float(np.sum((ab - a_marg[:, None] - b_marg[None, :] + gm) ** 2))
    ss_as = 2 * float(np.sum((a_s - a_marg[None, :] - subj[:, None] + gm) ** 2))
    ss_bs = 2 * float(np.sum((b_s - b_marg[None, :] - subj[:, None] + gm) ** 2))
    ss_total = float(np.sum((y - gm) ** 2))
    ss_abs = ss_total - ss_subj - ss_a - ss_b - ss_ab - ss_as - ss_bs

    df_err = n - 1
    errors = {"Fatigue": ss_as, "Task": ss_bs, "Interaction": ss_abs}
    ss_eff = {"Fatigue": ss_a, "Task": ss_b, "Interaction": ss_ab}
    ges_denominator_err = ss_subj + ss_as + ss_bs + ss_abs

    effects: dict[str, EffectResult] = {}
    for name in ("Fatigue", "Task", "Interaction"):
        ms_err = errors[name] / df_err
        if ms_err <= 0:
            raise AnovaError(f"zero error variance for effect {name}")
        F = ss_eff[name] / ms_err
        p = float(f_dist.sf(F, 1, df_err))
        ges = ss_eff[name] / (ss_eff[name] + ges_denominator_err)
        effects[name] = EffectResult(name=name, F=float(F), df=(1, df_err), p=p, ges=float(ges))

    return AnovaResult(outcome=cells.outcome, n_participants=n, effects=effects)


def anova_csv(result: AnovaResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["effect", "F", "df1", "df2", "p", "ges"])
    for e in result.effects.values():
        writer.writerow([e.name, f"{e.F:.6g}", e.df[0], e.df[1], f"{e.p:.6g}", f"{e.ges:.6g}"])
    return buf.getvalue()
