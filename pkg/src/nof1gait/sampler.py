"""Gibbs / Metropolis-within-Gibbs posterior sampler for the three models.

Each sweep draws the regression coefficients from their exact multivariate
normal full conditional, then updates the error scale (and, for the AR1
variant, the autocorrelation coefficient) with Jacobian-corrected
random-walk Metropolis steps on unconstrained transforms. Proposal scales
adapt toward a 0.44 acceptance rate during burn-in only, so kept draws come
from a fixed-kernel chain.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from .ar1 import ar1_log_det, ar1_quadratic_form, ar1_weighted_cross
from .data import Outcome, TrialSeries
from .design import (
    DesignError,
    ModelSpec,
    ModelVariant,
    NormalPrior,
    PriorSpec,
    build_design_matrix,
)

TARGET_ACCEPTANCE = 0.44
_ADAPT_BATCH = 50


class SamplerError(RuntimeError):
    """Raised when the sampler hits an invalid or non-finite state."""

    def __init__(self, message: str, state: Optional[dict] = None):
        super().__init__(message)
        self.state = state or {}


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 2
    n_iterations: int = 10000  # kept draws per chain, after burn-in/thinning
    burn_in: int = 5000
    thinning: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_chains < 1 or self.n_iterations < 1 or self.thinning < 1:
            raise ValueError("n_chains, n_iterations and thinning must be >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")


@dataclass
class PosteriorChains:
    """Raw kept MCMC draws: array of shape (n_chains, n_kept, n_params)."""

    parameter_names: tuple[str, ...]
    draws: np.ndarray
    config: SamplerConfig
    acceptance_rates: dict[str, float]
    variant: ModelVariant
    outcome: Outcome
    participant_id: str
    n_obs: int

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_kept(self) -> int:
        return self.draws.shape[1]

    def index_of(self, parameter: str) -> int:
        try:
            return self.parameter_names.index(parameter)
        except ValueError:
            raise KeyError(f"unknown parameter {parameter!r}") from None

    def per_chain(self, parameter: str) -> np.ndarray:
        """Draws for one parameter, shape (n_chains, n_kept)."""
        return self.draws[:, :, self.index_of(parameter)]

    def pooled(self, parameter: str) -> np.ndarray:
        return self.per_chain(parameter).reshape(-1)


# ---------------------------------------------------------------------------
# Likelihood
# ---------------------------------------------------------------------------


def log_likelihood(
    variant: ModelVariant,
    beta: np.ndarray,
    sigma: float,
    X: np.ndarray,
    y: np.ndarray,
    phi: Optional[float] = None,
) -> float:
    """Log-density of y under the given model parameters.

    Independent-error variants use a product of normal densities; the AR1
    variant evaluates the multivariate normal density in O(n) through the
    tridiagonal precision and closed-form log-determinant.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    n = y.shape[0]
    if n == 0:
        return 0.0
    resid = y - X @ beta
    if variant is ModelVariant.AR1:
        if phi is None:
            raise ValueError("AR1 likelihood requires phi")
        if not abs(phi) < 1:
            raise ValueError(f"|phi| must be < 1, got {phi}")
        q = ar1_quadratic_form(phi, sigma, resid)
        return -0.5 * (n * math.log(2 * math.pi) + ar1_log_det(phi, sigma, n) + q)
    rss = float(resid @ resid)
    return -0.5 * (n * math.log(2 * math.pi)) - n * math.log(sigma) - rss / (2 * sigma**2)


# ---------------------------------------------------------------------------
# Gibbs step for the regression coefficients
# ---------------------------------------------------------------------------


def _iid_weighted_cross(sigma: float, X: np.ndarray, y: np.ndarray):
    return (X.T @ X) / sigma**2, (X.T @ y) / sigma**2


def gibbs_step_beta(
    rng: np.random.Generator,
    X: np.ndarray,
    y: np.ndarray,
    sigma: float,
    beta_priors: tuple[NormalPrior, ...],
    phi: Optional[float] = None,
) -> np.ndarray:
    """Draw beta from its exact full conditional.

    The conditional is multivariate normal with precision X'OX + P0 and mean
    solving (X'OX + P0) m = X'Oy + P0 m0, where O is the error precision and
    (m0, P0) encode the independent normal priors.
    """
    p = X.shape[1] if X.ndim == 2 else len(beta_priors)
    if p != len(beta_priors):
        raise DesignError(f"{len(beta_priors)} beta priors for {p} design columns")
    if phi is not None:
        M, v = ar1_weighted_cross(phi, sigma, X, y)
    else:
        M, v = _iid_weighted_cross(sigma, X, y)
    prior_prec = np.array([1.0 / b.sd**2 for b in beta_priors])
    prior_mean = np.array([b.mean for b in beta_priors])
    A = M + np.diag(prior_prec)
    b = v + prior_prec * prior_mean
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise SamplerError("singular conditional precision for beta") from None
    # mean: A mu = b; draw: mu + L^-T z
    mu = np.linalg.solve(A, b)
    z = rng.standard_normal(p)
    return mu + solve_triangular(L.T, z, lower=False)


# ---------------------------------------------------------------------------
# Metropolis steps for sigma and phi
# ---------------------------------------------------------------------------


def mh_step_sigma(
    rng: np.random.Generator,
    sigma: float,
    scale: float,
    prior: PriorSpec,
    resid: np.ndarray,
    phi: Optional[float] = None,
) -> tuple[float, bool]:
    """Random-walk Metropolis on log(sigma), Jacobian-corrected.

    With an empty residual vector the step targets the prior alone.
    """
    n = resid.shape[0]
    if phi is not None:
        quad = ar1_quadratic_form(phi, 1.0, resid)  # sigma-free part of r'Or
    else:
        quad = float(resid @ resid)

    def log_target(s: float) -> float:
        lp = prior.log_pdf(s)
        if lp == -math.inf:
            return -math.inf
        ll = -n * math.log(s) - quad / (2 * s**2) if n else 0.0
        return ll + lp + math.log(s)  # + log s: Jacobian of the log transform

    proposal = sigma * math.exp(scale * rng.standard_normal())
    log_alpha = log_target(proposal) - log_target(sigma)
    if math.log(rng.uniform()) < log_alpha:
        return proposal, True
    return sigma, False


def mh_step_phi(
    rng: np.random.Generator,
    phi: float,
    scale: float,
    prior: PriorSpec,
    resid: np.ndarray,
    sigma: float,
) -> tuple[float, bool]:
    """Random-walk Metropolis on atanh(phi), Jacobian-corrected."""
    n = resid.shape[0]
    if n >= 2:
        s_all = float(resid @ resid)
        s_mid = float(resid[1:-1] @ resid[1:-1])
        s_lag = float(resid[:-1] @ resid[1:])
    elif n == 1:
        s_all, s_mid, s_lag = float(resid[0] ** 2), 0.0, 0.0
    else:
        s_all = s_mid = s_lag = 0.0

    def log_target(f: float) -> float:
        lp = prior.log_pdf(f)
        if lp == -math.inf or not abs(f) < 1:
            return -math.inf
        if n:
            quad = (s_all + f**2 * s_mid - 2 * f * s_lag) / sigma**2
            ll = 0.5 * math.log1p(-f**2) - quad / 2
        else:
            ll = 0.0
        return ll + lp + math.log1p(-f**2)  # Jacobian of the atanh transform

    z = math.atanh(phi) + scale * rng.standard_normal()
    proposal = math.tanh(z)
    log_alpha = log_target(proposal) - log_target(phi)
    if math.log(rng.uniform()) < log_alpha:
        return proposal, True
    return phi, False


class _AdaptiveScale:
    """Batch adaptation of a proposal scale toward TARGET_ACCEPTANCE."""

    def __init__(self, scale: float = 0.5):
        self.scale = scale
        self._accepted = 0
        self._count = 0

    def record(self, accepted: bool) -> None:
        self._accepted += accepted
        self._count += 1
        if self._count == _ADAPT_BATCH:
            rate = self._accepted / self._count
            self.scale *= math.exp(0.5 * (rate - TARGET_ACCEPTANCE))
            self._accepted = 0
            self._count = 0


# ---------------------------------------------------------------------------
# Full sampler
# ---------------------------------------------------------------------------


def _initial_state(X: np.ndarray, y: np.ndarray, ar1: bool):
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    dof = max(1, len(y) - X.shape[1])
    sigma = max(float(np.sqrt(resid @ resid / dof)), 1e-6)
    phi = 0.0
    if ar1 and len(resid) > 2:
        num = float(resid[:-1] @ resid[1:])
        den = float(resid @ resid)
        if den > 0:
            phi = float(np.clip(num / den, -0.95, 0.95))
    return beta, sigma, phi


def _run_chain(
    model: ModelSpec,
    X: np.ndarray,
    y: np.ndarray,
    config: SamplerConfig,
    chain_index: int,
    fix_sigma: Optional[float],
    fix_phi: Optional[float],
):
    ar1 = model.variant is ModelVariant.AR1
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=config.seed & (2**64 - 1), spawn_key=(chain_index,))
    )
    beta, sigma, phi = _initial_state(X, y, ar1)
    # overdispersed starts so the between-chain diagnostic has teeth
    beta = beta + 0.1 * sigma * rng.standard_normal(beta.shape)
    sigma = float(sigma * math.exp(0.2 * rng.standard_normal()))
    if fix_sigma is not None:
        sigma = fix_sigma
    if fix_phi is not None:
        phi = fix_phi
    elif ar1:
        phi = float(np.clip(phi + 0.1 * rng.standard_normal(), -0.9, 0.9))

    sample_sigma = fix_sigma is None
    sample_phi = ar1 and fix_phi is None
    sigma_scale = _AdaptiveScale()
    phi_scale = _AdaptiveScale()

    p = X.shape[1]
    names = [f"beta{i + 1}" for i in range(p)] + ["sigma"]
    if ar1:
        names.append("phi")
    kept = np.empty((config.n_iterations, len(names)))
    accept_counts = {"sigma": 0, "phi": 0}

    total = config.burn_in + config.n_iterations * config.thinning
    n_kept = 0
    for t in range(total):
        in_burn_in = t < config.burn_in
        beta = gibbs_step_beta(rng, X, y, sigma, model.priors.beta, phi if ar1 else None)
        resid = y - X @ beta
        if sample_sigma:
            sigma, acc = mh_step_sigma(
                rng, sigma, sigma_scale.scale, model.priors.sigma, resid, phi if ar1 else None
            )
            if in_burn_in:
                sigma_scale.record(acc)
            else:
                accept_counts["sigma"] += acc
        if sample_phi:
            phi, acc = mh_step_phi(rng, phi, phi_scale.scale, model.priors.phi, resid, sigma)
            if in_burn_in:
                phi_scale.record(acc)
            else:
                accept_counts["phi"] += acc
        if not in_burn_in and (t - config.burn_in) % config.thinning == 0:
            row = list(beta) + [sigma]
            if ar1:
                row.append(phi)
            kept[n_kept] = row
            n_kept += 1
    assert n_kept == config.n_iterations

    if not np.all(np.isfinite(kept)):
        raise SamplerError(
            "non-finite draws encountered",
            state={
                "chain": chain_index,
                "beta": beta.tolist(),
                "sigma": sigma,
                "phi": phi if ar1 else None,
                "first_bad_iteration": int(np.argmin(np.all(np.isfinite(kept), axis=1))),
            },
        )

    denom = config.n_iterations * config.thinning
    rates = {}
    if sample_sigma:
        rates["sigma"] = accept_counts["sigma"] / denom
    if sample_phi:
        rates["phi"] = accept_counts["phi"] / denom
    return tuple(names), kept, rates


def run_sampler(
    model: ModelSpec,
    series: TrialSeries,
    config: SamplerConfig,
    fix_sigma: Optional[float] = None,
    fix_phi: Optional[float] = None,
) -> PosteriorChains:
    """Run independent chains and merge kept draws by chain index.

    Each chain is seeded deterministically from (config.seed, chain index),
    so results are reproducible bit-for-bit. ``fix_sigma`` / ``fix_phi`` pin
    a parameter at a constant (used by equivalence and oracle checks).
    """
    if model.outcome is not series.outcome:
        raise DesignError(
            f"model outcome {model.outcome.value} does not match series outcome "
            f"{series.outcome.value}"
        )
    dm = build_design_matrix(series, model.variant)
    X = dm.matrix
    y = series.values()
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DesignError("design matrix is rank deficient")

    names = None
    per_chain = []
    rates_acc: dict[str, float] = {}
    for c in range(config.n_chains):
        chain_names, kept, rates = _run_chain(model, X, y, config, c, fix_sigma, fix_phi)
        names = chain_names
        per_chain.append(kept)
        for k, v in rates.items():
            rates_acc[k] = rates_acc.get(k, 0.0) + v / config.n_chains

    return PosteriorChains(
        parameter_names=names,
        draws=np.stack(per_chain),
        config=config,
        acceptance_rates=rates_acc,
        variant=model.variant,
        outcome=model.outcome,
        participant_id=series.participant_id,
        n_obs=len(series),
    )


# ---------------------------------------------------------------------------
# Chain CSV export / import
# ---------------------------------------------------------------------------


def chains_to_csv(chains: PosteriorChains) -> str:
    """Long-format draws CSV with a provenance comment header."""
    buf = io.StringIO()
    meta = {
        "participant_id": chains.participant_id,
        "outcome": chains.outcome.value,
        "variant": chains.variant.value,
        "n_obs": chains.n_obs,
        "n_chains": chains.config.n_chains,
        "n_iterations": chains.config.n_iterations,
        "burn_in": chains.config.burn_in,
        "thinning": chains.config.thinning,
        "seed": chains.config.seed,
    }
    for k, v in meta.items():
        buf.write(f"# {k}: {v}\n")
    for k, v in sorted(chains.acceptance_rates.items()):
        buf.write(f"# acceptance_{k}: {v:.6f}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["chain", "iteration", "parameter", "value"])
    for c in range(chains.n_chains):
        for j, name in enumerate(chains.parameter_names):
            col = chains.draws[c, :, j]
            for i in range(chains.n_kept):
                writer.writerow([c, i, name, repr(float(col[i]))])
    return buf.getvalue()


def chains_from_csv(text: str) -> PosteriorChains:
    meta: dict[str, str] = {}
    lines = text.splitlines()
    body_start = 0
    for i, line in enumerate(lines):
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
        else:
            body_start = i
            break
    reader = csv.reader(lines[body_start:])
    header = next(reader)
    if header != ["chain", "iteration", "parameter", "value"]:
        raise ValueError(f"unexpected chain CSV header {header!r}")

    values: dict[tuple[int, str], list[float]] = {}
    names: list[str] = []
    for row in reader:
        if not row:
            continue
        c, _, name, value = int(row[0]), int(row[1]), row[2], float(row[3])
        if name not in names:
            names.append(name)
        values.setdefault((c, name), []).append(value)

    n_chains = max(c for c, _ in values) + 1
    n_kept = len(values[(0, names[0])])
    draws = np.empty((n_chains, n_kept, len(names)))
    for (c, name), vals in values.items():
        draws[c, :, names.index(name)] = vals

    config = SamplerConfig(
        n_chains=n_chains,
        n_iterations=int(meta.get("n_iterations", n_kept)),
        burn_in=int(meta.get("burn_in", 0)),
        thinning=int(meta.get("thinning", 1)),
        seed=int(meta.get("seed", 0)),
    )
    rates = {
        k[len("acceptance_") :]: float(v)
        for k, v in meta.items()
        if k.startswith("acceptance_")
    }
    return PosteriorChains(
        parameter_names=tuple(names),
        draws=draws,
        config=config,
        acceptance_rates=rates,
        variant=ModelVariant(meta.get("variant", "basic")),
        outcome=Outcome(meta.get("outcome", "stride_length")),
        participant_id=meta.get("participant_id", ""),
        n_obs=int(meta.get("n_obs", 0)),
    )
