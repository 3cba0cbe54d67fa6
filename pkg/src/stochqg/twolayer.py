"""Two-layer rotating flow: parameters, potential-vorticity inversion, and
the layer-weighted energy norm.

Potential vorticity and streamfunction are linked per wavevector by a 2x2
linear system,

    q1 = -(mu + F1) psi1 + F1 psi2
    q2 =   F2 psi1 - (mu + F2) psi2,      mu = lambda1 |j|^2,

whose determinant mu^2 + mu (F1 + F2) is positive away from the mean mode,
so inversion is exact mode-by-mode.  The energy ("star") norm is

    ||q||_*^2 = h1 ||grad psi1||^2 + h2 ||grad psi2||^2 + p ||psi1 - psi2||^2

with the interface weight p = F1 h1 = F2 h2.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, StratificationError
from .spectral import (
    Grid,
    SpectralField,
    _check_same_grid,
    field_from_coeffs,
    sobolev_norm,
)

#: exact key set for the [physical] table of a config file
PHYSICAL_KEYS = ("nu", "beta", "f0", "g", "h1", "h2", "rho0", "rho1", "rho2", "L", "tau0")


@dataclass(frozen=True)
class PhysicalParams:
    """Raw inputs, SI units throughout."""

    nu: float      # m^2/s, biharmonic-streamfunction viscosity
    beta: float    # 1/(m s), planetary vorticity gradient
    f0: float      # 1/s, Coriolis parameter
    g: float       # m/s^2
    h1: float      # m, upper-layer depth
    h2: float      # m, lower-layer depth
    rho0: float    # kg/m^3, reference density
    rho1: float    # kg/m^3, upper-layer density
    rho2: float    # kg/m^3, lower-layer density
    L: float       # m, box side
    tau0: float    # N/m^2, wind-stress scale

    def __post_init__(self):
        for name in ("f0", "g", "h1", "h2", "rho0", "L"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        # nu = 0 is admitted for inviscid conservation checks (r vanishes with it)
        if self.nu < 0 or self.beta < 0 or self.tau0 < 0:
            raise ConfigurationError("nu, beta, and tau0 must be nonnegative")
        if self.rho2 <= self.rho1:
            raise StratificationError(
                f"need rho2 > rho1 for stable stratification, got {self.rho1} >= {self.rho2}"
            )


@dataclass(frozen=True)
class DerivedParams:
    """Closed-form constants computed once from :class:`PhysicalParams`."""

    raw: PhysicalParams
    F1: float        # 1/m^2, upper stretching
    F2: float        # 1/m^2, lower stretching
    p: float         # 1/m, interface weight, p = F1 h1 = F2 h2
    lambda1: float   # 1/m^2, smallest positive eigenvalue of -Laplacian
    delta_e: float   # m, Ekman depth sqrt(2 nu / f0)
    r: float         # 1/s, bottom drag f0 delta_e / (2 (h1 + h2))
    a0: float        # norm-equivalence constant 1 + (2/lambda1) max(F1, F2)
    c0: float        # advective-estimate constant 2 + 1/(sqrt2 pi)
    c1: float        # c0 / sqrt(lambda1)
    b0: float        # (2 c0^2 / nu) (1 + F1 F2 / lambda1^2)

    @property
    def nu(self) -> float:
        return self.raw.nu

    @property
    def min_h(self) -> float:
        return min(self.raw.h1, self.raw.h2)


def derive_params(pp: PhysicalParams) -> DerivedParams:
    drho = pp.rho2 - pp.rho1
    F1 = pp.f0**2 * pp.rho0 / (pp.g * pp.h1 * drho)
    F2 = pp.f0**2 * pp.rho0 / (pp.g * pp.h2 * drho)
    p = pp.f0**2 * pp.rho0 / (pp.g * drho)
    lambda1 = (2.0 * np.pi / pp.L) ** 2
    delta_e = np.sqrt(2.0 * pp.nu / pp.f0)
    r = pp.f0 * delta_e / (2.0 * (pp.h1 + pp.h2))
    c0 = 2.0 + 1.0 / (np.sqrt(2.0) * np.pi)
    a0 = 1.0 + 2.0 * max(F1, F2) / lambda1
    b0 = np.inf if pp.nu == 0 else (2.0 * c0**2 / pp.nu) * (1.0 + F1 * F2 / lambda1**2)
    return DerivedParams(
        raw=pp,
        F1=F1,
        F2=F2,
        p=p,
        lambda1=lambda1,
        delta_e=delta_e,
        r=r,
        a0=a0,
        c0=c0,
        c1=c0 / np.sqrt(lambda1),
        b0=b0,
    )


def params_from_mapping(data: dict) -> PhysicalParams:
    """Build parameters from a config mapping with exactly the expected keys."""
    missing = [k for k in PHYSICAL_KEYS if k not in data]
    if missing:
        raise ConfigurationError(f"missing physical keys: {', '.join(missing)}")
    unknown = [k for k in data if k not in PHYSICAL_KEYS]
    if unknown:
        raise ConfigurationError(f"unknown physical keys: {', '.join(unknown)}")
    try:
        vals = {k: float(data[k]) for k in PHYSICAL_KEYS}
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"non-numeric physical value: {exc}") from exc
    return PhysicalParams(**vals)


@dataclass(frozen=True)
class LayerState:
    """Potential vorticity pair (q1, q2)."""

    q1: SpectralField
    q2: SpectralField

    def __post_init__(self):
        _check_same_grid(self.q1, self.q2)

    @property
    def grid(self) -> Grid:
        return self.q1.grid


@dataclass(frozen=True)
class StreamPair:
    """Streamfunction pair (psi1, psi2)."""

    psi1: SpectralField
    psi2: SpectralField

    def __post_init__(self):
        _check_same_grid(self.psi1, self.psi2)

    @property
    def grid(self) -> Grid:
        return self.psi1.grid


def pv_from_stream(psi: StreamPair, dp: DerivedParams) -> LayerState:
    g = psi.grid
    mu = g.lap_eig
    p1, p2 = psi.psi1.coeffs, psi.psi2.coeffs
    q1 = -(mu + dp.F1) * p1 + dp.F1 * p2
    q2 = dp.F2 * p1 - (mu + dp.F2) * p2
    return LayerState(field_from_coeffs(g, q1), field_from_coeffs(g, q2))


def stream_from_pv(q: LayerState, dp: DerivedParams) -> StreamPair:
    """Exact per-mode inversion of the coupling system (mean mode pinned)."""
    g = q.grid
    mu = g.lap_eig
    det = mu * mu + mu * (dp.F1 + dp.F2)
    safe = np.where(det > 0, det, 1.0)
    c1, c2 = q.q1.coeffs, q.q2.coeffs
    psi1 = (-(mu + dp.F2) * c1 - dp.F1 * c2) / safe
    psi2 = (-dp.F2 * c1 - (mu + dp.F1) * c2) / safe
    psi1[0, 0] = 0.0
    psi2[0, 0] = 0.0
    return StreamPair(field_from_coeffs(g, psi1), field_from_coeffs(g, psi2))


def star_norm_sq(q: LayerState, dp: DerivedParams) -> float:
    """Layer-weighted energy ||q||_*^2 (via the inverted streamfunctions)."""
    psi = stream_from_pv(q, dp)
    return star_norm_sq_of_stream(psi, dp)


def star_norm_sq_of_stream(psi: StreamPair, dp: DerivedParams) -> float:
    h1, h2 = dp.raw.h1, dp.raw.h2
    grad1 = sobolev_norm(psi.psi1, 1.0) ** 2
    grad2 = sobolev_norm(psi.psi2, 1.0) ** 2
    diff = float(np.sum(np.abs(psi.psi1.coeffs - psi.psi2.coeffs) ** 2))
    return h1 * grad1 + h2 * grad2 + dp.p * diff


def energy_components(q: LayerState, dp: DerivedParams) -> dict[str, float]:
    """The individual terms entering the energy identities.

    Keys: h1_grad_psi1_sq, h2_grad_psi2_sq, p_interface_sq, star_norm_sq,
    h1_lap_psi1_sq, h2_lap_psi2_sq.
    """
    psi = stream_from_pv(q, dp)
    h1, h2 = dp.raw.h1, dp.raw.h2
    g1 = h1 * sobolev_norm(psi.psi1, 1.0) ** 2
    g2 = h2 * sobolev_norm(psi.psi2, 1.0) ** 2
    pint = dp.p * float(np.sum(np.abs(psi.psi1.coeffs - psi.psi2.coeffs) ** 2))
    return {
        "h1_grad_psi1_sq": g1,
        "h2_grad_psi2_sq": g2,
        "p_interface_sq": pint,
        "star_norm_sq": g1 + g2 + pint,
        "h1_lap_psi1_sq": h1 * sobolev_norm(psi.psi1, 2.0) ** 2,
        "h2_lap_psi2_sq": h2 * sobolev_norm(psi.psi2, 2.0) ** 2,
    }


def state_from_arrays(grid: Grid, q1: np.ndarray, q2: np.ndarray) -> LayerState:
    return LayerState(field_from_coeffs(grid, q1), field_from_coeffs(grid, q2))


def state_difference(a: LayerState, b: LayerState) -> LayerState:
    _check_same_grid(a.q1, b.q1)
    return LayerState(
        field_from_coeffs(a.grid, a.q1.coeffs - b.q1.coeffs),
        field_from_coeffs(a.grid, a.q2.coeffs - b.q2.coeffs),
    )


def load_physical_table(path: str | Path) -> dict:
    """Read the [physical] table from a TOML config file."""
    from .config import load_toml

    doc = load_toml(path)
    if "physical" not in doc:
        raise ConfigurationError("config file lacks a [physical] table")
    return doc["physical"]
