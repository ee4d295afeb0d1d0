"""Random scheduling instances shared by the property tests."""
import numpy as np
from hypothesis import strategies as st

from sensor_scheduler.processing.state_space import random_spd

seeds = st.integers(0, 2**32 - 1)


def make_instance(seed, m: int, n: int, sigma: float = 1.0, condition: float = 10.0):
    rng = np.random.default_rng(seed)
    return random_spd(rng, m, condition), rng.normal(size=(n, m)), sigma


@st.composite
def instances(draw, max_m: int = 6, min_n: int = 2, max_n: int = 10):
    """(P_pred, A, sigma) with a random SPD prior and Gaussian measurement rows."""
    m = draw(st.integers(1, max_m))
    n = draw(st.integers(min_n, max_n))
    sigma = draw(st.sampled_from([0.3, 1.0, 2.5]))
    return make_instance(draw(seeds), m, n, sigma)


@st.composite
def chains(draw, max_m: int = 8, max_k: int = 8):
    """Instance plus an ordered selection of distinct sensors."""
    P_pred, A, sigma = draw(instances(max_m=max_m, min_n=2, max_n=max_k + 2))
    k = draw(st.integers(1, min(max_k, A.shape[0])))
    order = draw(st.permutations(range(A.shape[0])))
    return P_pred, A, sigma, list(order[:k])
