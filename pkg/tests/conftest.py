"""Shared parameter sets of realistic magnitude used across the test modules."""

import numpy as np
import pytest

from volhedge.models import (
    BsParams, CgmyParams, JdParams, ModelParams, SvParams, SvcjParams,
    SvjParams, VgParams,
)


def make_model(params, r=0.0, s0=100.0):
    return ModelParams(params=params, r=r, s0=s0)


SV_TYPICAL = SvParams(kappa=1.60, theta=1.10, sigma_v=0.68, rho=0.17, v0=0.35)

SVCJ_SETS = (
    SvcjParams(kappa=0.51, theta=0.09, sigma_v=0.88, rho=0.14, v0=0.74,
               lam=0.31, mu_s=-0.04, sigma_s=0.0, mu_v=0.45),
    SvcjParams(kappa=0.75, theta=0.38, sigma_v=0.83, rho=0.28, v0=0.30,
               lam=0.85, mu_s=-0.30, sigma_s=0.0, mu_v=0.99),
    SvcjParams(kappa=0.61, theta=0.18, sigma_v=0.89, rho=0.22, v0=0.52,
               lam=1.04, mu_s=-0.35, sigma_s=0.0, mu_v=0.54),
)

CGMY_SETS = (
    CgmyParams(c=4.24, g=22.21, m=24.79, y=1.20),
    CgmyParams(c=10.37, g=7.67, m=9.30, y=0.14),
    CgmyParams(c=7.94, g=11.38, m=17.24, y=0.68),
)

JD_TYPICAL = JdParams(sigma=0.68, lam=0.5, mu_s=-0.10, delta_s=0.20)
VG_TYPICAL = VgParams(sigma=0.80, nu=0.50, theta=-0.30)
SVJ_TYPICAL = SvjParams(kappa=0.75, theta=0.38, sigma_v=0.83, rho=0.28, v0=0.30,
                        lam=0.85, mu_s=-0.30, sigma_s=0.15)


ALL_FAMILY_PARAMS = {
    "bs": BsParams(sigma=0.84),
    "jd": JD_TYPICAL,
    "sv": SV_TYPICAL,
    "svj": SVJ_TYPICAL,
    "svcj": SVCJ_SETS[0],
    "vg": VG_TYPICAL,
    "cgmy": CGMY_SETS[2],
}


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


# Frozen per-segment smile parameters (tau, a, b, rho, m, sigma) from fitted
# market surfaces, plus the matching spot references and the interpolated ATM
# call prices (1M, 3M) they are expected to reproduce.
SVI_SEGMENT_ROWS = {
    "bullish": (
        (0.01, 0.17, 0.10, 0.00, 0.00, 1.00),
        (0.03, 0.003, 0.01, 0.15, 0.01, 0.17),
        (0.07, 0.01, 0.04, 0.00, -0.01, 0.08),
        (0.24, 0.02, 0.10, -0.11, -0.01, 0.45),
        (0.49, 0.01, 0.17, -0.02, 0.04, 0.77),
        (0.74, 0.14, 0.09, 0.00, 0.01, 0.93),
    ),
    "calm": (
        (0.01, 0.001, 0.05, -0.13, 0.02, 0.08),
        (0.03, 0.01, 0.05, -0.39, 0.01, 0.16),
        (0.07, 0.01, 0.10, -0.02, 0.12, 0.32),
        (0.16, 0.06, 0.15, -0.50, -0.17, 0.54),
        (0.24, 0.04, 0.19, -0.27, -0.10, 0.76),
        (0.49, 0.18, 0.21, 0.23, 0.38, 1.00),
    ),
    "covid": (
        (0.02, 0.004, 0.02, 0.50, 0.02, 0.01),
        (0.04, 0.003, 0.05, -0.07, -0.03, 0.11),
        (0.07, 0.01, 0.08, -0.09, -0.05, 0.15),
        (0.15, 0.02, 0.13, 0.19, 0.07, 0.29),
        (0.40, 0.06, 0.20, -0.15, -0.21, 0.56),
        (0.65, 0.14, 0.18, 0.16, -0.12, 0.88),
    ),
}

SEGMENT_SPOT = {"bullish": 4088.16, "calm": 8367.51, "covid": 9804.85}

SEGMENT_ATM_CALLS = {
    "bullish": (206.38, 417.87),
    "calm": (838.01, 1449.82),
    "covid": (610.36, 1201.46),
}


def segment_surface(name):
    """Surface built from a segment's published smile rows; maturities under
    one week are dropped, as the fitting pipeline would drop them."""
    from volhedge.vol_surface import MIN_SURFACE_TAU, SviSlice, SviSurface

    slices = tuple(
        SviSlice(tau=t, a=a, b=b, rho=rho, m=m, sigma=sig)
        for t, a, b, rho, m, sig in SVI_SEGMENT_ROWS[name]
        if t >= MIN_SURFACE_TAU
    )
    return SviSurface(slices=slices, f0=SEGMENT_SPOT[name])
