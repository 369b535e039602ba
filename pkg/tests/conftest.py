import numpy as np
import pytest

from swarmfl.resource import P3Instance

N0 = 10 ** -17.4 * 1e-3


def make_instance(rng, n, **over):
    """A P3 instance whose UAVs can all meet the deadline at share 1/n."""
    while True:
        kw = dict(workload=rng.uniform(1e8, 3e9, n), payload=rng.uniform(1e6, 8e6, n),
                  gain=1e-5 * rng.uniform(120, 600, n) ** -2.2, p_max=np.full(n, 0.2),
                  f_max=np.full(n, 2e9), q=rng.uniform(0, 5, n), bandwidth=10e6,
                  noise_psd=N0, deadline=3.0, energy_coeff=1e-28)
        kw.update(over)
        inst = P3Instance(**kw)
        rate = inst.rate(inst.p_max, np.full(n, 1.0 / n))
        if np.all(inst.payload / rate < inst.t_comm_budget()):
            return inst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
