import numpy as np
import pytest

from nof1gait.data import Outcome
from nof1gait.design import ModelVariant
from nof1gait.sampler import PosteriorChains, SamplerConfig


def make_chains(
    draws,
    parameter_names=("x",),
    variant=ModelVariant.BASIC,
    outcome=Outcome.STRIDE_LENGTH,
    participant_id="p",
    n_obs=0,
    seed=0,
):
    """Wrap a (n_chains, n_kept, n_params) array as PosteriorChains."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 2:
        draws = draws[:, :, None]
    config = SamplerConfig(
        n_chains=draws.shape[0],
        n_iterations=draws.shape[1],
        burn_in=0,
        thinning=1,
        seed=seed,
    )
    return PosteriorChains(
        parameter_names=tuple(parameter_names),
        draws=draws,
        config=config,
        acceptance_rates={},
        variant=variant,
        outcome=outcome,
        participant_id=participant_id,
        n_obs=n_obs,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
