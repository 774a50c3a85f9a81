import numpy as np
import pytest

from nmts.core import Box, StepSchedule
from nmts.mle import MleConfig
from nmts.models import get_model, simulate_observations
from nmts.pde import PdeConfig

TABLE1_SCHEDULE = dict(kind="poly-log", alpha0=20.0, a=2.0 / 3.0, beta0=0.1, b=1.0)
TABLE2_SCHEDULE = dict(kind="poly-log", alpha0=10.0, a=2.0 / 3.0, beta0=1.0, b=1.0, start_index=20)


def mle_config(n_inner=100, iterations=200, seed=7, t_obs=20, obs_seed=101, model="linear-latent", **kw):
    obs = simulate_observations(get_model(model), 1.0, t_obs, obs_seed)
    defaults = dict(
        model=model,
        observations=obs,
        schedule=StepSchedule(**TABLE1_SCHEDULE),
        box=Box(lower=[0.5], upper=[2.0]),
        theta0=[0.8],
        n_inner=n_inner,
        iterations=iterations,
        seed=seed,
    )
    defaults.update(kw)
    return MleConfig(**defaults)


def pde_config(n_inner=50, iterations=200, seed=7, t_obs=10, obs_seed=404, m_outer=5, **kw):
    obs = simulate_observations(get_model("location"), 1.0, t_obs, obs_seed)
    defaults = dict(
        model="location",
        observations=obs,
        schedule=StepSchedule(**TABLE2_SCHEDULE),
        box=Box(lower=[-1.0, 0.01], upper=[10.0, 2.0]),
        lambda0=[0.0, 1.0],
        m_outer=m_outer,
        n_inner=n_inner,
        iterations=iterations,
        seed=seed,
    )
    defaults.update(kw)
    return PdeConfig(**defaults)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
