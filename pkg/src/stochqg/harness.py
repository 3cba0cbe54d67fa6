"""Desk-scale experiment drivers: absorbing-radius sampling, the scalar
comparison ODE that majorizes the weighted energy, twin-trajectory
synchronization runs, paired ensembles, and the per-step audit of the energy
inequality.

The absorbing level R0 of one noise path is the lookback integral

    R0 = int_{-inf}^{0} exp((nu lambda1 / a0) tau + d0 int_tau^0 ||eta||^2) m(eta(tau)) dtau,

truncated at a finite horizon (with a tail-contribution convergence check) and
discretized by the trapezoid rule on an exactly-simulated stationary OU path.
In the zero-noise limit R0 = d3 a0 / (nu lambda1) exactly and no sampling is
done.

Twin runs integrate two transformed trajectories against ONE noise path and
record V(t) = ||q_hat - q_bar||_*^2 together with the largest squared
determining-functional reading of the top-layer streamfunction difference.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .determining import ConditionCoefficients, FunctionalSet, eval_functionals
from .dynamics import TrajectoryConfig, TransformedStepper, _band_limit, _guard, make_forcing
from .errors import ConfigurationError, DivergenceError, StatisticsError
from .noise import RADIUS_MEMBER_BASE, NoiseDriver, NoiseSpec, ou_stationary_draw
from .spectral import Grid, field_from_coeffs, random_band_limited
from .twolayer import DerivedParams, LayerState, star_norm_sq, stream_from_pv

# ---------------------------------------------------------------------------
# Absorbing radius
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadiusEstimate:
    r0_samples: np.ndarray
    mean: float
    se: float
    horizon: float
    dtau: float
    tail_fraction: float       # worst-path share contributed by the oldest 10%
    converged: bool
    deterministic_value: float
    assumption_ok: bool        # noise-smallness admissibility held when sampling


def _noise_smallness_ok(coeffs: ConditionCoefficients, trace: float) -> bool:
    lam1, nu, k1 = coeffs.lambda1, coeffs._nu, coeffs.k + 1.0
    lhs1 = 2.0 * coeffs.d0 * coeffs.a0 * trace / (lam1**2 * nu**2 * k1)
    lhs2 = 16.0 * coeffs.d0 * trace / (lam1**2 * nu**2 * k1**2)
    return lhs1 < 1.0 and lhs2 < 1.0


def estimate_absorbing_radius(
    dp: DerivedParams,
    spec: NoiseSpec,
    grid: Grid,
    coeffs: ConditionCoefficients,
    paths: int = 48,
    horizon: float | None = None,
    dtau: float | None = None,
    member_base: int = RADIUS_MEMBER_BASE,
    require_convergence: bool = True,
) -> RadiusEstimate:
    """Sample the absorbing level R0 over independent stationary noise paths."""
    rate = coeffs.decay_rate
    det_value = coeffs.deterministic_radius
    if spec.trace(grid) == 0.0:
        return RadiusEstimate(
            r0_samples=np.array([det_value]),
            mean=det_value,
            se=0.0,
            horizon=0.0,
            dtau=0.0,
            tail_fraction=0.0,
            converged=True,
            deterministic_value=det_value,
            assumption_ok=True,
        )
    if paths < 2:
        raise ConfigurationError("radius sampling needs at least 2 paths")
    if horizon is None:
        horizon = 8.0 / rate
    if dtau is None:
        dtau = horizon / 800.0
    nsteps = max(16, int(round(horizon / dtau)))
    dtau = horizon / nsteps
    taus = -horizon + dtau * np.arange(nsteps + 1)

    d0, d1, d2, d3 = coeffs.d0, coeffs.d1, coeffs.d2, coeffs.d3
    r0 = np.empty(paths)
    worst_tail = 0.0
    tail_steps = max(1, nsteps // 10)
    for p in range(paths):
        driver = NoiseDriver(spec, dp, grid, dtau, member=member_base + p)
        state = ou_stationary_draw(spec, dp, grid, member=member_base + p)
        eta_sq = np.empty(nsteps + 1)
        eta_sq[0] = float(np.sum(np.abs(state.eta.coeffs) ** 2))
        for i in range(nsteps):
            state = driver.advance(state)
            eta_sq[i + 1] = float(np.sum(np.abs(state.eta.coeffs) ** 2))
        # C_i = int_{tau_i}^{0} ||eta||^2, accumulated from the right
        seg = 0.5 * dtau * (eta_sq[:-1] + eta_sq[1:])
        c = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
        m = d1 * eta_sq**2 + d2 * eta_sq + d3
        with np.errstate(over="ignore"):
            integrand = np.exp(rate * taus + d0 * c) * m
        r0[p] = float(np.trapezoid(integrand, dx=dtau))
        total = r0[p]
        tail = float(np.trapezoid(integrand[: tail_steps + 1], dx=dtau))
        if total > 0 and math.isfinite(total):
            worst_tail = max(worst_tail, tail / total)
        else:
            worst_tail = math.inf

    converged = bool(worst_tail <= 0.01 and np.all(np.isfinite(r0)))
    if require_convergence and not converged:
        raise StatisticsError(
            f"absorbing-radius integral not converged (oldest-decade share "
            f"{worst_tail:.3g} > 1% of the total at horizon {horizon:g}); "
            f"extend the horizon"
        )
    return RadiusEstimate(
        r0_samples=r0,
        mean=float(np.mean(r0)),
        se=float(np.std(r0, ddof=1) / np.sqrt(paths)),
        horizon=horizon,
        dtau=dtau,
        tail_fraction=worst_tail,
        converged=converged,
        deterministic_value=det_value,
        assumption_ok=_noise_smallness_ok(coeffs, spec.trace(grid)),
    )


# ---------------------------------------------------------------------------
# Scalar comparison ODE
# ---------------------------------------------------------------------------


def solve_comparison_ode(
    times: np.ndarray,
    eta0_sq: np.ndarray,
    coeffs: ConditionCoefficients,
    rho0: float,
) -> np.ndarray:
    """Majorant rho(t):  rho' = (-nu lambda1/a0 + d0 ||eta||^2) rho + m(eta).

    eta is held at its left value on each sample interval, for which the
    integrating factor is exact; rho then dominates the recorded energy up to
    time-discretization error.
    """
    times = np.asarray(times, dtype=float)
    eta0_sq = np.asarray(eta0_sq, dtype=float)
    if times.shape != eta0_sq.shape:
        raise ConfigurationError("times and eta0_sq must align")
    rho = np.empty_like(times)
    rho[0] = rho0
    base = -coeffs.decay_rate
    with np.errstate(over="ignore"):
        for i in range(len(times) - 1):
            dt = times[i + 1] - times[i]
            rate = base + coeffs.d0 * eta0_sq[i]
            m = float(coeffs.m_of_eta(eta0_sq[i]))
            x = rate * dt
            if x > 700.0:  # majorant saturates at +inf rather than overflowing
                rho[i + 1] = math.inf
            elif abs(x) > 1e-12:
                grow = math.exp(x)
                rho[i + 1] = rho[i] * grow + m * math.expm1(x) / rate
            else:
                rho[i + 1] = rho[i] * (1.0 + x) + m * dt * (1.0 + 0.5 * x)
    return rho


# ---------------------------------------------------------------------------
# Twin-trajectory comparison
# ---------------------------------------------------------------------------


@dataclass
class ComparisonRecord:
    times: np.ndarray
    v: np.ndarray                       # ||difference||_*^2
    functional_max_sq: np.ndarray       # max_j |l_j(psi1 difference)|^2
    eta_norm_sq: np.ndarray
    window: float | None = None
    v_window: np.ndarray | None = None  # int_t^{min(t+w, T)} V
    functional_window: np.ndarray | None = None
    final_a: LayerState | None = None
    final_b: LayerState | None = None
    diverged: bool = False
    divergence_time: float | None = None


def _windowed_integrals(times: np.ndarray, values: np.ndarray, window: float) -> np.ndarray:
    """int_{t_i}^{min(t_i + window, T)} values dt on the recorded grid."""
    if len(times) < 2:
        return np.zeros_like(values)
    seg = 0.5 * np.diff(times) * (values[:-1] + values[1:])
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    cadence = times[1] - times[0]
    span = max(1, int(round(window / cadence)))
    idx = np.minimum(np.arange(len(times)) + span, len(times) - 1)
    return cum[idx] - cum

def run_comparison(
    cfg: TrajectoryConfig,
    initial_a: LayerState,
    initial_b: LayerState,
    fset: FunctionalSet | None = None,
    window: float | None = None,
) -> ComparisonRecord:
    """Integrate two transformed trajectories against one shared noise path.

    The OU field cancels in every recorded difference, so V(t) and the
    functional read-offs are identical in transformed and original variables.
    """
    if cfg.formulation != "transformed":
        raise ConfigurationError("twin comparison requires the transformed formulation")
    grid, dp = cfg.grid, cfg.dp
    forcing = make_forcing(cfg.forcing, grid, dp).coeffs
    driver = NoiseDriver(cfg.noise, dp, grid, cfg.dt, member=cfg.member, refine=cfg.refine)
    noise = driver.initial_state()
    stepper_a = TransformedStepper(grid, dp, cfg.noise.k, forcing, cfg.dt, cfg.jacobian_enabled)
    stepper_b = TransformedStepper(grid, dp, cfg.noise.k, forcing, cfg.dt, cfg.jacobian_enabled)
    a1, a2 = _band_limit(grid, initial_a)
    b1, b2 = _band_limit(grid, initial_b)
    nsteps = cfg.nsteps

    times, v_l, nl_l, eta_l = [], [], [], []
    diverged = False
    divergence_time = None
    for step in range(nsteps + 1):
        t = step * cfg.dt
        if step % cfg.output_every == 0 or step == nsteps:
            diff = LayerState(
                field_from_coeffs(grid, a1 - b1), field_from_coeffs(grid, a2 - b2)
            )
            times.append(t)
            v_l.append(star_norm_sq(diff, dp))
            if fset is not None:
                psi = stream_from_pv(diff, dp)
                vals = eval_functionals(fset, psi.psi1)
                nl_l.append(float(np.max(np.abs(vals)) ** 2))
            else:
                nl_l.append(0.0)
            eta_l.append(float(np.sum(np.abs(noise.eta.coeffs) ** 2)))
        if step == nsteps:
            break
        a1, a2 = stepper_a.step(a1, a2, noise)
        b1, b2 = stepper_b.step(b1, b2, noise)
        noise = driver.advance(noise)
        try:
            _guard(grid, a1, a2, t + cfg.dt, cfg.overflow_guard)
            _guard(grid, b1, b2, t + cfg.dt, cfg.overflow_guard)
        except DivergenceError as exc:
            diverged = True
            divergence_time = exc.time
            break

    times_a = np.array(times)
    v_a = np.array(v_l)
    nl_a = np.array(nl_l)
    rec = ComparisonRecord(
        times=times_a,
        v=v_a,
        functional_max_sq=nl_a,
        eta_norm_sq=np.array(eta_l),
        window=window,
        final_a=LayerState(field_from_coeffs(grid, a1), field_from_coeffs(grid, a2)),
        final_b=LayerState(field_from_coeffs(grid, b1), field_from_coeffs(grid, b2)),
        diverged=diverged,
        divergence_time=divergence_time,
    )
    if window is not None:
        rec.v_window = _windowed_integrals(times_a, v_a, window)
        rec.functional_window = _windowed_integrals(times_a, nl_a, window)
    return rec


# ---------------------------------------------------------------------------
# Paired ensembles
# ---------------------------------------------------------------------------


@dataclass
class EnsembleSummary:
    times: np.ndarray
    members: int
    survivors: int                     # members that completed without divergence
    v_quantiles: np.ndarray            # rows: q05, q50, q95
    functional_quantiles: np.ndarray   # rows: q05, q50, q95
    v_final: np.ndarray                # per surviving member
    functional_final: np.ndarray
    v_threshold: float | None = None
    below_threshold_fraction: float | None = None
    records: list[ComparisonRecord] | None = None


def _ic_rng_seed(base: int, member: int, which: int) -> int:
    return (base * 1_000_003 + member) * 8 + which


def make_paired_states(
    grid: Grid,
    member: int,
    ic_amplitude: float,
    perturbation: float,
    ic_seed: int = 2026,
    jmin: int = 1,
    jmax: int | None = None,
) -> tuple[LayerState, LayerState]:
    """A random band-limited PV state and a slightly displaced twin."""
    fields = [
        random_band_limited(
            grid, _ic_rng_seed(ic_seed, member, w), amplitude=1.0, jmin=jmin, jmax=jmax
        ).coeffs
        for w in range(4)
    ]
    a = LayerState(
        field_from_coeffs(grid, ic_amplitude * fields[0]),
        field_from_coeffs(grid, ic_amplitude * fields[1]),
    )
    b = LayerState(
        field_from_coeffs(grid, ic_amplitude * fields[0] + perturbation * fields[2]),
        field_from_coeffs(grid, ic_amplitude * fields[1] + perturbation * fields[3]),
    )
    return a, b


def _comparison_task(args):
    member, cfg, qa, qb, fset, window = args
    return member, run_comparison(cfg, qa, qb, fset=fset, window=window)


def run_ensemble(
    cfg: TrajectoryConfig,
    initial_a: LayerState,
    initial_b: LayerState,
    fset: FunctionalSet | None = None,
    members: int = 20,
    window: float | None = None,
    v_threshold: float | None = None,
    workers: int | None = None,
    keep_records: bool = False,
) -> EnsembleSummary:
    """Twin-trajectory ensemble: one IC pair, M independent noise paths.

    Member m drives noise path cfg.member + m; with zero noise all members
    coincide.  Quantiles (5%, 50%, 95%) are taken across surviving members at
    each recorded time; diverged members are dropped with a warning.
    """
    if members < 1:
        raise ConfigurationError("ensemble needs at least one member")
    tasks = [
        (m, replace(cfg, member=cfg.member + m), initial_a, initial_b, fset, window)
        for m in range(members)
    ]
    if workers is not None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_comparison_task, tasks))
    else:
        results = [_comparison_task(t) for t in tasks]
    results.sort(key=lambda mr: mr[0])
    records = [rec for _, rec in results]

    alive = [rec for rec in records if not rec.diverged]
    if not alive:
        raise DivergenceError("every ensemble member diverged")
    if len(alive) < members:
        warnings.warn(
            f"{members - len(alive)} of {members} ensemble members diverged; "
            "summary covers the survivors",
            stacklevel=2,
        )
    times = alive[0].times
    v_all = np.stack([rec.v for rec in alive])
    nl_all = np.stack([rec.functional_max_sq for rec in alive])
    qs = (0.05, 0.50, 0.95)
    fraction = None
    if v_threshold is not None:
        fraction = float(np.mean(v_all[:, -1] <= v_threshold))
    return EnsembleSummary(
        times=times,
        members=members,
        survivors=len(alive),
        v_quantiles=np.quantile(v_all, qs, axis=0),
        functional_quantiles=np.quantile(nl_all, qs, axis=0),
        v_final=v_all[:, -1],
        functional_final=nl_all[:, -1],
        v_threshold=v_threshold,
        below_threshold_fraction=fraction,
        records=records if keep_records else None,
    )


# ---------------------------------------------------------------------------
# Energy-inequality audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyAuditReport:
    margins: np.ndarray    # rhs + slack - lhs per step; >= 0 means satisfied
    min_margin: float
    slack: float
    violations: int
    ok: bool


def audit_energy_inequality(audit, coeffs: ConditionCoefficients, dt: float) -> EnergyAuditReport:
    """Check each recorded step against the differential energy inequality.

    LHS is the forward difference of ||q||_*^2 over the step; RHS is the
    trapezoid average of  -nu lambda1/a0 V + d0 ||eta||^2 V + m(eta)  at the
    step endpoints.  The declared slack, dt * max|step change of RHS| plus a
    roundoff floor, covers the O(dt^2)-accurate midpoint comparison.
    """
    star = np.asarray(audit.star_sq, dtype=float)
    eta = np.asarray(audit.eta0_sq, dtype=float)
    if star.shape != eta.shape or len(star) < 2:
        raise ConfigurationError("audit needs matching star/eta histories of length >= 2")
    rhs_nodes = (-coeffs.decay_rate + coeffs.d0 * eta) * star + coeffs.m_of_eta(eta)
    lhs = np.diff(star) / dt
    rhs = 0.5 * (rhs_nodes[:-1] + rhs_nodes[1:])
    slack = dt * float(np.max(np.abs(np.diff(rhs_nodes)))) if len(rhs_nodes) > 1 else 0.0
    slack += 1e-12 * float(np.max(np.abs(rhs_nodes))) + 1e-300
    margins = rhs + slack - lhs
    violations = int(np.sum(margins < 0))
    return EnergyAuditReport(
        margins=margins,
        min_margin=float(np.min(margins)),
        slack=slack,
        violations=violations,
        ok=violations == 0,
    )
