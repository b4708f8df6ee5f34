import numpy as np
import pytest

from resqfit.core import ComplexTrace
from resqfit.s21 import plan_hpd, s21_model


def sample_s21_params(rng, *, min_depth=0.015):
    """Draw a physically valid hanger parameter set with a visible dip.

    Q_l and |Q_c| are log-uniform over [1e3, 1e7], phi uniform over
    (-1.2, 1.2), tau uniform over [0, 100 ns]. Draws that violate the fit
    contract (overcoupled beyond physicality, or a dip shallower than the
    detection threshold) are resampled.
    """
    while True:
        q_l = 10 ** rng.uniform(3, 7)
        q_c = 10 ** rng.uniform(3, 7)
        phi = rng.uniform(-1.2, 1.2)
        if 1 / q_l - np.cos(phi) / q_c <= 0:
            continue
        f_r = rng.uniform(4e9, 8e9)
        tau = rng.uniform(0, 100e-9)
        a = rng.uniform(0.5, 2.0)
        bg = rng.uniform(-3, 3)
        plan = plan_hpd(f_r, q_l)
        z = s21_model(plan.freqs, a, bg, tau, q_l, q_c, phi, f_r)
        mag = np.abs(z)
        if 1 - mag.min() / np.median(mag) < min_depth:
            continue
        return (a, bg, tau, q_l, q_c, phi, f_r), plan, z


@pytest.fixture
def rng():
    return np.random.default_rng(20230817)


def make_trace(freqs, z, **meta):
    return ComplexTrace(freqs, z, **meta)
