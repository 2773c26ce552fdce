"""Convergence diagnostics, posterior summaries and predictive checks."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np
from scipy.stats import f as f_dist

from .data import DESIGN_CONDITION_ORDER, TrialSeries, WalkingCondition
from .design import ModelVariant
from .sampler import PosteriorChains

CONVERGENCE_PSRF_UPPER = 1.1


# ---------------------------------------------------------------------------
# Potential scale reduction factor
# ---------------------------------------------------------------------------


def psrf(chains: PosteriorChains, parameter: str, clamp: bool = True) -> tuple[float, float]:
    """Gelman-Rubin statistic (point estimate, 0.95 upper limit).

    Classical between/within variance-ratio construction with the
    degrees-of-freedom correction; the reported values are clamped to >= 1
    unless ``clamp=False``.
    """
    x = chains.per_chain(parameter)
    m, n = x.shape
    if m < 2:
        raise ValueError("PSRF requires at least 2 chains")
    if n < 10:
        raise ValueError("PSRF requires at least 10 draws per chain")

    s2 = np.var(x, axis=1, ddof=1)
    xbar = np.mean(x, axis=1)
    w = float(np.mean(s2))
    b = n * float(np.var(xbar, ddof=1))
    if w == 0.0:
        # degenerate constant chains: no within-chain variance to compare
        return (1.0, 1.0) if clamp else (float("nan"), float("nan"))

    r2_fixed = (n - 1) / n
    r2_random = (1 + 1 / m) * b / (n * w)

    # method-of-moments df correction on the pooled variance estimate
    muhat = float(np.mean(xbar))
    var_w = float(np.var(s2, ddof=1)) / m
    var_b = 2 * b**2 / (m - 1)
    cov_s2_xbar2 = float(np.cov(s2, xbar**2, ddof=1)[0, 1])
    cov_s2_xbar = float(np.cov(s2, xbar, ddof=1)[0, 1])
    cov_wb = (n / m) * (cov_s2_xbar2 - 2 * muhat * cov_s2_xbar)
    vhat = r2_fixed * w + (1 + 1 / m) * b / n
    var_v = (
        ((n - 1) ** 2) * var_w + ((1 + 1 / m) ** 2) * var_b + 2 * (n - 1) * (1 + 1 / m) * cov_wb
    ) / n**2
    if var_v > 0 and vhat > 0:
        df_v = 2 * vhat**2 / var_v
        df_adj = (df_v + 3) / (df_v + 1)
    else:
        df_adj = 1.0

    point = math.sqrt(df_adj * (r2_fixed + r2_random))
    if var_w > 0:
        w_df = 2 * w**2 / var_w
        q = float(f_dist.ppf(0.975, m - 1, w_df))
        upper = math.sqrt(df_adj * (r2_fixed + q * r2_random))
    else:
        upper = point
    if clamp:
        point = max(1.0, point)
        upper = max(1.0, upper)
    return point, upper


# ---------------------------------------------------------------------------
# Effective sample size
# ---------------------------------------------------------------------------


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased (1/n) autocovariance of a single chain, via FFT."""
    n = x.shape[0]
    xc = x - np.mean(x)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n].real / n
    return acov


def ess(chains: PosteriorChains, parameter: str) -> float:
    """Effective sample size pooled across chains.

    Autocorrelations are averaged across chains and summed under Geyer's
    initial monotone positive sequence truncation.
    """
    x = chains.per_chain(parameter)
    m, n = x.shape
    total = m * n
    if total < 100:
        raise ValueError("ESS requires at least 100 total draws")

    acov = np.mean([_autocovariance(x[c]) for c in range(m)], axis=0)
    if acov[0] <= 0:
        warnings.warn(
            f"degenerate (zero-variance) chain for {parameter!r}; reporting ESS = total draws",
            RuntimeWarning,
        )
        return float(total)
    rho = acov / acov[0]

    # Geyer: sum consecutive-lag pairs while positive, enforce monotonicity
    gamma_prev = math.inf
    tau = -1.0
    k = 0
    while 2 * k + 1 < n:
        gamma = rho[2 * k] + rho[2 * k + 1]
        if gamma <= 0:
            break
        gamma = min(gamma, gamma_prev)
        tau += 2 * gamma
        gamma_prev = gamma
        k += 1
    tau = max(tau, 1e-12)
    return float(min(total / tau, total))


# ---------------------------------------------------------------------------
# Posterior summary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParameterSummary:
    mean: float
    sd: float
    q2_5: float
    q25: float
    q50: float
    q75: float
    q97_5: float
    psrf_point: float
    psrf_upper95: float
    ess: float


@dataclass
class PosteriorSummary:
    participant_id: str
    outcome: str
    variant: str
    parameters: dict[str, ParameterSummary]

    @property
    def converged(self) -> bool:
        return all(
            p.psrf_upper95 < CONVERGENCE_PSRF_UPPER
            for p in self.parameters.values()
            if not math.isnan(p.psrf_upper95)
        )


def summarize(chains: PosteriorChains) -> PosteriorSummary:
    """Pool kept draws across chains; attach PSRF and ESS per parameter."""
    params: dict[str, ParameterSummary] = {}
    for name in chains.parameter_names:
        pooled = chains.pooled(name)
        qs = np.quantile(pooled, [0.025, 0.25, 0.5, 0.75, 0.975])
        if chains.n_chains >= 2 and chains.n_kept >= 10:
            point, upper = psrf(chains, name)
        else:
            point, upper = float("nan"), float("nan")
        if pooled.size >= 100:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                n_eff = ess(chains, name)
        else:
            n_eff = float("nan")
        params[name] = ParameterSummary(
            mean=float(np.mean(pooled)),
            sd=float(np.std(pooled, ddof=1)),
            q2_5=float(qs[0]),
            q25=float(qs[1]),
            q50=float(qs[2]),
            q75=float(qs[3]),
            q97_5=float(qs[4]),
            psrf_point=point,
            psrf_upper95=upper,
            ess=n_eff,
        )
    return PosteriorSummary(
        participant_id=chains.participant_id,
        outcome=chains.outcome.value,
        variant=chains.variant.value,
        parameters=params,
    )


def summary_csv(summary: PosteriorSummary) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["parameter", "mean", "sd", "q2.5", "q25", "q50", "q75", "q97.5", "psrf", "psrf_upper", "ess"]
    )
    for name, p in summary.parameters.items():
        writer.writerow(
            [name]
            + [
                f"{v:.8g}"
                for v in (
                    p.mean,
                    p.sd,
                    p.q2_5,
                    p.q25,
                    p.q50,
                    p.q75,
                    p.q97_5,
                    p.psrf_point,
                    p.psrf_upper95,
                    p.ess,
                )
            ]
        )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Posterior predictive check
# ---------------------------------------------------------------------------

_CONDITION_BETA = {
    WalkingCondition.ST_CONTROL: (0,),
    WalkingCondition.DT_CONTROL: (0, 1),
    WalkingCondition.ST_FATIGUE: (0, 2),
    WalkingCondition.DT_FATIGUE: (0, 3),
}


@dataclass(frozen=True)
class PpcEntry:
    condition: WalkingCondition
    modeled_mean: float
    modeled_sd: float
    observed_mean: float
    observed_sd: float

    @property
    def mean_discrepancy(self) -> float:
        return self.modeled_mean - self.observed_mean

    @property
    def sd_discrepancy(self) -> float:
        return self.modeled_sd - self.observed_sd


@dataclass
class PpcReport:
    participant_id: str
    outcome: str
    entries: list[PpcEntry]


def _condition_mean_draws(chains: PosteriorChains, condition: WalkingCondition) -> np.ndarray:
    cols = _CONDITION_BETA[condition]
    mean = chains.pooled("beta1").copy()
    for c in cols[1:]:
        mean += chains.pooled(f"beta{c + 1}")
    return mean


def posterior_predictive(chains: PosteriorChains, series: TrialSeries) -> PpcReport:
    """Contrast posterior-implied condition distributions with the data.

    Per draw, the condition means are the intercept plus the matching
    contrast coefficient; the modeled spread combines the error scale's
    marginal SD with posterior uncertainty in the condition mean.
    """
    if chains.participant_id != series.participant_id:
        raise ValueError(
            f"chains were fit to participant {chains.participant_id!r}, "
            f"series is {series.participant_id!r}"
        )
    if chains.outcome is not series.outcome:
        raise ValueError("chains and series outcome mismatch")
    if chains.n_obs != len(series):
        raise ValueError(
            f"chains were fit on {chains.n_obs} observations, series has {len(series)}"
        )

    sigma = chains.pooled("sigma")
    if chains.variant is ModelVariant.AR1:
        phi = chains.pooled("phi")
        err_var = sigma**2 / (1 - phi**2)
    else:
        err_var = sigma**2

    observed = series.observed_condition_stats()
    entries = []
    for cond in DESIGN_CONDITION_ORDER:
        mean_draws = _condition_mean_draws(chains, cond)
        obs_mean, obs_sd, _ = observed[cond]
        entries.append(
            PpcEntry(
                condition=cond,
                modeled_mean=float(np.mean(mean_draws)),
                modeled_sd=float(np.sqrt(np.mean(err_var) + np.var(mean_draws, ddof=1))),
                observed_mean=obs_mean,
                observed_sd=obs_sd,
            )
        )
    return PpcReport(
        participant_id=series.participant_id, outcome=series.outcome.value, entries=entries
    )


def ppc_csv(report: PpcReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "condition",
            "modeled_mean",
            "modeled_sd",
            "observed_mean",
            "observed_sd",
            "mean_discrepancy",
            "sd_discrepancy",
        ]
    )
    for e in report.entries:
        writer.writerow(
            [e.condition.value]
            + [
                f"{v:.8g}"
                for v in (
                    e.modeled_mean,
                    e.modeled_sd,
                    e.observed_mean,
                    e.observed_sd,
                    e.mean_discrepancy,
                    e.sd_discrepancy,
                )
            ]
        )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Condition-pair differences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairDifference:
    minuend: WalkingCondition
    subtrahend: WalkingCondition
    difference: float  # mean(minuend) - mean(subtrahend)


def condition_diff_matrix(summary: PosteriorSummary) -> list[PairDifference]:
    """All six pairwise differences of posterior-mean condition means."""
    b = {name: p.mean for name, p in summary.parameters.items()}
    means = {
        WalkingCondition.ST_CONTROL: b["beta1"],
        WalkingCondition.DT_CONTROL: b["beta1"] + b["beta2"],
        WalkingCondition.ST_FATIGUE: b["beta1"] + b["beta3"],
        WalkingCondition.DT_FATIGUE: b["beta1"] + b["beta4"],
    }
    return [
        PairDifference(minuend=second, subtrahend=first, difference=means[second] - means[first])
        for first, second in combinations(DESIGN_CONDITION_ORDER, 2)
    ]
