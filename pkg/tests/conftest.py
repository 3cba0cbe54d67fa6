"""Shared parameter factories for the test suite.

Two families of parameter sets are used throughout:

* ``make_ocean_params`` -- wind-driven double-gyre numbers (SI units) where
  the interesting output is arithmetic on the derived constants, not time
  stepping (the implied time scales are far too slow to simulate).
* ``make_desk_params`` -- order-one parameters built by inverting the layer
  coupling and Ekman relations, so tests can pin exact values of F1, F2, r
  and friends while remaining cheap to integrate.
"""

import numpy as np

from stochqg import PhysicalParams, derive_params


RHO0 = 1000.0
GRAVITY = 9.81


def make_ocean_params(nu: float = 50.0) -> PhysicalParams:
    return PhysicalParams(
        nu=nu,
        beta=2.3e-11,
        f0=8.0e-5,
        g=GRAVITY,
        h1=500.0,
        h2=500.0,
        rho0=1025.0,
        rho1=1025.0,
        rho2=1050.0,
        L=1.0e6,
        tau0=0.1,
    )


def make_desk_params(
    nu: float = 0.2,
    r: float = 0.1,
    F1: float = 0.5,
    F2: float = 0.5,
    L: float = 2.0 * np.pi,
    h1: float = 1.0,
    beta: float = 0.0,
    tau0: float = 0.0,
) -> PhysicalParams:
    """Order-one parameters hitting requested (F1, F2, r) exactly.

    Inverts r = sqrt(2 nu f0) / (2 (h1 + h2)) for f0 and
    F1 = f0^2 rho0 / (g h1 drho) for the density jump.  The inversion is
    exact in floating point for the f0 relation (checked in the twolayer
    tests), so desk-scale expected values can be written down by hand.
    """
    h2 = h1 * F1 / F2
    f0 = 2.0 * r**2 * (h1 + h2) ** 2 / nu
    drho = f0**2 * RHO0 / (GRAVITY * h1 * F1)
    return PhysicalParams(
        nu=nu,
        beta=beta,
        f0=f0,
        g=GRAVITY,
        h1=h1,
        h2=h2,
        rho0=RHO0,
        rho1=RHO0,
        rho2=RHO0 + drho,
        L=L,
        tau0=tau0,
    )


def make_desk_derived(**kwargs):
    return derive_params(make_desk_params(**kwargs))
