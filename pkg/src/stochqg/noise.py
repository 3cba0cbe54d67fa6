"""Stochastic forcing: spectral Wiener increments, the auxiliary
Ornstein-Uhlenbeck field, and its elliptic correctors.

The auxiliary field eta solves ``d eta = nu (k+1) Laplacian eta dt + dW`` with
a diagonal, trace-class covariance: independent complex Brownian modes with
per-mode rate ``q_j`` (conjugate pairs mirrored).  Every mode is advanced by
the exact scalar OU transition, never by an Euler step.

Path coupling: each step draws the Wiener increment ``dW_j`` and one extra
unit Gaussian ``G_j`` from a counter-based stream keyed by
(base_seed, member) and indexed by the step, then forms the OU
stochastic-convolution increment conditionally,

    conv_j = alpha_j dW_j + beta_j G_j,
    alpha_j = (1 - e^{-a dt})/(a dt),
    beta_j^2 = q_j (1 - e^{-2 a dt})/(2 a) - alpha_j^2 q_j dt,

which has exactly the transition law while staying measurable with respect to
the same Brownian path that an unconverted integrator consumes.  Increments
are therefore deterministic in (base_seed, member, step) regardless of call
order, and refining the step subdivides rather than resamples the path.

Two correctors translate eta into streamfunction space:

    Laplacian xi1 - F1 (xi1 - xi2) = -eta,
    Laplacian xi2 - F2 (xi2 - xi1) = 0,

solved in closed form per mode; they gain two derivatives over eta.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .spectral import Grid, SpectralField, field_from_coeffs, zero_field
from .twolayer import DerivedParams

_MASK64 = (1 << 64) - 1

# member-index offsets keeping independent estimators on disjoint streams
MOMENT_MEMBER_BASE = 1_000_000
RADIUS_MEMBER_BASE = 2_000_000

_PURPOSE_INIT = 0
_PURPOSE_STEP = 1


@dataclass(frozen=True)
class NoiseSpec:
    """Diagonal covariance description plus the transformation gain k.

    The default spectrum is the power law ``q_j = sigma^2 (1 + |j|^2)^-gamma``
    (gamma > 2 so the trace stays bounded under grid refinement), truncated to
    the dealiased band; ``explicit`` rows (j1, j2, q) override it.
    """

    sigma: float
    gamma: float = 3.0
    k: float = 1.0
    base_seed: int = 0
    explicit: tuple[tuple[int, int, float], ...] | None = None

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigurationError(f"sigma must be nonnegative, got {self.sigma}")
        if self.explicit is None and self.gamma <= 2:
            raise ConfigurationError(
                f"power-law exponent gamma must exceed 2, got {self.gamma}"
            )
        if self.k <= 0:
            raise ConfigurationError(f"transformation gain k must be positive, got {self.k}")

    def spectrum_on(self, grid: Grid) -> np.ndarray:
        """Per-mode rates q_j >= 0 on the grid (zero mean mode, band-limited)."""
        if self.explicit is not None:
            q = np.zeros((grid.n, grid.n))
            cut = grid.dealias_cut
            for j1, j2, val in self.explicit:
                if val < 0:
                    raise ConfigurationError(f"negative spectrum entry at ({j1},{j2})")
                if (j1, j2) == (0, 0):
                    raise ConfigurationError("spectrum must not force the mean mode")
                if abs(j1) > cut or abs(j2) > cut:
                    raise ConfigurationError(
                        f"spectrum entry ({j1},{j2}) outside dealiased band (cut={cut})"
                    )
                q[j1 % grid.n, j2 % grid.n] = val
            mirrored = q[np.ix_((-np.arange(grid.n)) % grid.n, (-np.arange(grid.n)) % grid.n)]
            if not np.allclose(q, mirrored, rtol=1e-12, atol=0.0):
                raise ConfigurationError("spectrum must satisfy q(j) == q(-j)")
            return q
        q = self.sigma**2 * (1.0 + grid.jsq.astype(float)) ** (-self.gamma)
        q *= grid.dealias_mask
        q[0, 0] = 0.0
        return q

    def trace(self, grid: Grid) -> float:
        """tr_0 Q = sum_j q_j over the active band."""
        return float(np.sum(self.spectrum_on(grid)))


def spectrum_from_csv(path: str | Path) -> tuple[tuple[int, int, float], ...]:
    """Load explicit rows ``j1,j2,q``; missing mirror partners are filled in."""
    entries: dict[tuple[int, int], float] = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            if row[0].strip().lower() == "j1":  # optional header
                continue
            if len(row) != 3:
                raise ConfigurationError(f"spectrum row needs 3 columns, got {row}")
            try:
                j1, j2, q = int(row[0]), int(row[1]), float(row[2])
            except ValueError as exc:
                raise ConfigurationError(f"bad spectrum row {row}: {exc}") from exc
            key = (j1, j2)
            if key in entries and entries[key] != q:
                raise ConfigurationError(f"conflicting spectrum rows for {key}")
            entries[key] = q
    for (j1, j2), q in list(entries.items()):
        mirror = (-j1, -j2)
        if mirror not in entries:
            entries[mirror] = q
        elif entries[mirror] != q:
            raise ConfigurationError(f"asymmetric spectrum at ({j1},{j2})")
    return tuple(sorted((j1, j2, q) for (j1, j2), q in entries.items()))


@dataclass(frozen=True)
class NoiseState:
    """Auxiliary field eta, its correctors, and the stream position."""

    eta: SpectralField
    xi1: SpectralField
    xi2: SpectralField
    t: float
    step: int
    member: int

    @property
    def grid(self) -> Grid:
        return self.eta.grid


def decay_rates(spec: NoiseSpec, dp: DerivedParams, grid: Grid) -> np.ndarray:
    """Per-mode OU rates a_j = nu (k+1) lambda1 |j|^2."""
    return dp.nu * (spec.k + 1.0) * grid.lap_eig


def stationary_variance(spec: NoiseSpec, dp: DerivedParams, grid: Grid) -> np.ndarray:
    """Per-mode stationary variance q_j / (2 a_j)."""
    q = spec.spectrum_on(grid)
    a = decay_rates(spec, dp, grid)
    out = np.zeros_like(q)
    nz = a > 0
    out[nz] = q[nz] / (2.0 * a[nz])
    return out


def _philox(base_seed: int, member: int, index: int, purpose: int) -> np.random.Generator:
    key = np.array([base_seed & _MASK64, member & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, index & _MASK64, purpose & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def _white_coeffs(grid: Grid, rng: np.random.Generator) -> np.ndarray:
    # FFT of iid normals: conjugate-symmetric coefficients with unit
    # per-mode variance (self-conjugate modes come out real, as they must).
    w = rng.standard_normal((grid.n, grid.n))
    return np.fft.fft2(w) / grid.n


def sample_wiener_increments(
    spec: NoiseSpec, grid: Grid, dt: float, member: int, step: int
) -> SpectralField:
    """Spectral Wiener increment over one step: E|dW_j|^2 = q_j dt."""
    dW, _ = _step_gaussians(spec, grid, dt, member, step)
    return field_from_coeffs(grid, dW)


def _step_gaussians(
    spec: NoiseSpec, grid: Grid, dt: float, member: int, step: int
) -> tuple[np.ndarray, np.ndarray]:
    """(dW_j, unit aux G_j) for one step; deterministic in (seed, member, step)."""
    if dt <= 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    rng = _philox(spec.base_seed, member, step, _PURPOSE_STEP)
    q = spec.spectrum_on(grid)
    dW = _white_coeffs(grid, rng) * np.sqrt(q * dt)
    aux = _white_coeffs(grid, rng)
    return dW, aux


def xi_from_eta(eta: SpectralField, dp: DerivedParams) -> tuple[SpectralField, SpectralField]:
    """Closed-form correctors.

    Per mode (mu = lambda1 |j|^2, F = F1 + F2):
        xi1 = [F2/mu + F1/(mu + F)] eta / F
        xi2 = (F2/F) [1/mu - 1/(mu + F)] eta
    """
    g = eta.grid
    mu = g.lap_eig
    Fsum = dp.F1 + dp.F2
    inv_mu = np.zeros_like(mu)
    nz = mu > 0
    inv_mu[nz] = 1.0 / mu[nz]
    inv_shift = 1.0 / (mu + Fsum)
    g1 = (dp.F2 * inv_mu + dp.F1 * inv_shift) / Fsum
    g2 = (dp.F2 / Fsum) * (inv_mu - inv_shift)
    return (
        field_from_coeffs(g, eta.coeffs * g1),
        field_from_coeffs(g, eta.coeffs * g2),
    )


def ou_stationary_draw(
    spec: NoiseSpec, dp: DerivedParams, grid: Grid, member: int = 0, index: int = 0
) -> NoiseState:
    """Draw eta from its stationary law and attach the correctors."""
    rng = _philox(spec.base_seed, member, index, _PURPOSE_INIT)
    std = np.sqrt(stationary_variance(spec, dp, grid))
    eta = field_from_coeffs(grid, _white_coeffs(grid, rng) * std)
    xi1, xi2 = xi_from_eta(eta, dp)
    return NoiseState(eta=eta, xi1=xi1, xi2=xi2, t=0.0, step=0, member=member)


def zero_noise_state(grid: Grid, member: int = 0) -> NoiseState:
    z = zero_field(grid)
    return NoiseState(eta=z, xi1=z, xi2=z, t=0.0, step=0, member=member)


def _ou_transition(
    eta: np.ndarray,
    dW: np.ndarray,
    aux: np.ndarray,
    a: np.ndarray,
    q: np.ndarray,
    dt: float,
) -> np.ndarray:
    decay = np.exp(-a * dt)
    x = a * dt
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.where(x > 0, -np.expm1(-x) / np.where(x > 0, x, 1.0), 1.0)
        var_conv = np.where(a > 0, q * (-np.expm1(-2.0 * x)) / (2.0 * np.where(a > 0, a, 1.0)), q * dt)
    beta = np.sqrt(np.maximum(var_conv - alpha**2 * q * dt, 0.0))
    return decay * eta + alpha * dW + beta * aux


def ou_evolve(state: NoiseState, spec: NoiseSpec, dp: DerivedParams, dt: float) -> NoiseState:
    """Advance eta by one exact OU transition and refresh the correctors."""
    grid = state.grid
    dW, aux = _step_gaussians(spec, grid, dt, state.member, state.step)
    a = decay_rates(spec, dp, grid)
    q = spec.spectrum_on(grid)
    eta = field_from_coeffs(grid, _ou_transition(state.eta.coeffs, dW, aux, a, q, dt))
    xi1, xi2 = xi_from_eta(eta, dp)
    return NoiseState(
        eta=eta, xi1=xi1, xi2=xi2, t=state.t + dt, step=state.step + 1, member=state.member
    )


class NoiseDriver:
    """Per-trajectory noise source at step size dt, optionally refined.

    With ``refine > 1`` the Brownian path is generated on the fine lattice
    dt/refine and aggregated, so drivers built with (dt, refine) and
    (dt/2, refine/2) consume the *same* path — the coarse Wiener increment is
    the sum of the fine ones, and the coarse OU update is the composition of
    the fine exact transitions.
    """

    def __init__(
        self,
        spec: NoiseSpec,
        dp: DerivedParams,
        grid: Grid,
        dt: float,
        member: int = 0,
        refine: int = 1,
    ):
        if refine < 1:
            raise ConfigurationError(f"refine must be >= 1, got {refine}")
        self.spec = spec
        self.dp = dp
        self.grid = grid
        self.dt = float(dt)
        self.member = member
        self.refine = int(refine)
        self.fine_dt = self.dt / self.refine
        self._a = decay_rates(spec, dp, grid)
        self._q = spec.spectrum_on(grid)

    def initial_state(self) -> NoiseState:
        if self.spec.trace(self.grid) == 0.0:
            return zero_noise_state(self.grid, self.member)
        return ou_stationary_draw(self.spec, self.dp, self.grid, self.member)

    def increment(self, step: int) -> SpectralField:
        """Wiener increment over coarse step ``step`` (sum of fine draws)."""
        total = np.zeros((self.grid.n, self.grid.n), dtype=np.complex128)
        for i in range(self.refine):
            dW, _ = _step_gaussians(
                self.spec, self.grid, self.fine_dt, self.member, step * self.refine + i
            )
            total += dW
        return field_from_coeffs(self.grid, total)

    def advance(self, state: NoiseState) -> NoiseState:
        """Exact OU update over one coarse step on the shared fine path."""
        eta = state.eta.coeffs.copy()
        for i in range(self.refine):
            dW, aux = _step_gaussians(
                self.spec, self.grid, self.fine_dt, self.member, state.step * self.refine + i
            )
            eta = _ou_transition(eta, dW, aux, self._a, self._q, self.fine_dt)
        field = field_from_coeffs(self.grid, eta)
        xi1, xi2 = xi_from_eta(field, self.dp)
        return NoiseState(
            eta=field,
            xi1=xi1,
            xi2=xi2,
            t=state.t + self.dt,
            step=state.step + 1,
            member=state.member,
        )


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentReport:
    """Monte-Carlo stationary moments with closed-form references."""

    samples: int
    trace: float
    eta0_sq_mean: float
    eta0_sq_se: float
    eta0_4_mean: float
    eta0_4_se: float
    eta1_sq_mean: float
    eta1_sq_se: float
    eta1_4_mean: float
    eta1_4_se: float
    closed_eta0_sq: float
    closed_eta0_4: float
    closed_eta1_sq: float
    closed_eta1_4: float


def closed_moments(spec: NoiseSpec, dp: DerivedParams, grid: Grid) -> dict[str, float]:
    """Exact stationary moments for the diagonal Gaussian construction.

    ||eta||^2 is a sum of independent exponentials over conjugate pairs, so
    E||eta||_s^2 = sum w s_j and E||eta||_s^4 = (sum w s_j)^2 + 2 sum (w s_j)^2
    with weights w = mu^s.  In particular E||eta||_1^2 = tr_0 Q / (2 nu (k+1))
    holds with equality.
    """
    s = stationary_variance(spec, dp, grid)
    mu = grid.lap_eig
    e0 = float(np.sum(s))
    e1 = float(np.sum(mu * s))
    return {
        "eta0_sq": e0,
        "eta0_4": e0**2 + 2.0 * float(np.sum(s**2)),
        "eta1_sq": e1,
        "eta1_4": e1**2 + 2.0 * float(np.sum((mu * s) ** 2)),
    }


def sample_stationary_norms(
    spec: NoiseSpec,
    dp: DerivedParams,
    grid: Grid,
    samples: int,
    member: int = MOMENT_MEMBER_BASE,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-draw (||eta||_0^2, ||eta||_1^2) from independent stationary draws."""
    if samples < 1:
        raise ConfigurationError("need at least one sample")
    std = np.sqrt(stationary_variance(spec, dp, grid))
    mu = grid.lap_eig
    n0 = np.empty(samples)
    n1 = np.empty(samples)
    for i in range(samples):
        rng = _philox(spec.base_seed, member, i, _PURPOSE_INIT)
        c = _white_coeffs(grid, rng) * std
        mag = np.abs(c) ** 2
        n0[i] = np.sum(mag)
        n1[i] = np.sum(mu * mag)
    return n0, n1


def noise_moments(
    spec: NoiseSpec,
    dp: DerivedParams,
    grid: Grid,
    samples: int = 10_000,
    member: int = MOMENT_MEMBER_BASE,
) -> MomentReport:
    n0, n1 = sample_stationary_norms(spec, dp, grid, samples, member)
    closed = closed_moments(spec, dp, grid)

    def stats(x: np.ndarray) -> tuple[float, float]:
        return float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(len(x)))

    m0, se0 = stats(n0)
    m04, se04 = stats(n0**2)
    m1, se1 = stats(n1)
    m14, se14 = stats(n1**2)
    return MomentReport(
        samples=samples,
        trace=spec.trace(grid),
        eta0_sq_mean=m0,
        eta0_sq_se=se0,
        eta0_4_mean=m04,
        eta0_4_se=se04,
        eta1_sq_mean=m1,
        eta1_sq_se=se1,
        eta1_4_mean=m14,
        eta1_4_se=se14,
        closed_eta0_sq=closed["eta0_sq"],
        closed_eta0_4=closed["eta0_4"],
        closed_eta1_sq=closed["eta1_sq"],
        closed_eta1_4=closed["eta1_4"],
    )


def with_seed(spec: NoiseSpec, base_seed: int) -> NoiseSpec:
    return replace(spec, base_seed=base_seed)
