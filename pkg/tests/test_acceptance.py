"""Acceptance gate: the ten release checks, each printing one verdict line.

Run with plain pytest; the [PASS]/[FAIL] lines bypass capture so they are
visible in any log.  Tolerances and runtime caps are part of the contract and
must not be loosened to make a red check green.
"""

import math
import time

import numpy as np
import pytest

from conftest import make_desk_params, make_ocean_params

from stochqg import (
    ForcingSpec,
    Grid,
    NoiseSpec,
    PhysicalParams,
    TrajectoryConfig,
    audit_energy_inequality,
    build_modes_set,
    check_conditions,
    compute_condition_coefficients,
    derive_params,
    energy_components,
    estimate_absorbing_radius,
    jacobian,
    laplacian,
    make_forcing,
    ou_stationary_draw,
    random_band_limited,
    run_ensemble,
    simulate,
    sobolev_norm,
    solve_comparison_ode,
    star_norm_sq,
    to_original_variables,
)
from stochqg.dynamics import from_original_variables
from stochqg.harness import make_paired_states
from stochqg.noise import NoiseDriver, closed_moments, noise_moments
from stochqg.spectral import field_from_coeffs, inner_product
from stochqg.twolayer import state_from_arrays

DESK = derive_params(make_desk_params(nu=0.2, r=0.1, tau0=0.01))
GRID16 = Grid(16, 2 * np.pi)
SINUSOID = ForcingSpec(mode="sinusoid")
COEFFS = compute_condition_coefficients(DESK, 1.0, make_forcing(SINUSOID, GRID16, DESK))


def _verdict(capsys, name: str, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


def _inviscid_params(beta: float) -> PhysicalParams:
    return PhysicalParams(
        nu=0.0,
        beta=beta,
        f0=0.4000000000000001,
        g=9.81,
        h1=1.0,
        h2=1.0,
        rho0=1000.0,
        rho1=1000.0,
        rho2=1032.6197757390419,
        L=2 * np.pi,
        tau0=0.0,
    )


def test_01_spectral_jacobian_identities(capsys):
    """200 random band-limited triples on 64^2: antisymmetry, null self-
    advection, cyclic permutation, all to relative 1e-10 in under 10 s."""
    t0 = time.perf_counter()
    grid = Grid(64, 2 * np.pi)
    worst = 0.0
    for i in range(200):
        u = random_band_limited(grid, 9000 + 3 * i)
        v = random_band_limited(grid, 9001 + 3 * i)
        w = random_band_limited(grid, 9002 + 3 * i)
        juv = jacobian(u, v)
        scale = sobolev_norm(juv, 0.0) + 1e-300
        anti = sobolev_norm(field_from_coeffs(grid, juv.coeffs + jacobian(v, u).coeffs), 0.0)
        self_adv = abs(inner_product(juv, v)) / (scale * sobolev_norm(v, 0.0))
        a = inner_product(juv, w)
        b = inner_product(jacobian(v, w), u)
        c = inner_product(jacobian(w, u), v)
        cyc = max(abs(a - b), abs(b - c)) / (scale * sobolev_norm(w, 0.0))
        worst = max(worst, anti / scale, self_adv, cyc)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 10.0
    _verdict(capsys, "01 spectral identities", ok, f"max rel defect {worst:.3g}, {elapsed:.1f} s")
    assert worst <= 1e-10
    assert elapsed < 10.0


def test_02_rossby_dispersion(capsys):
    """Barotropic mode (1,0) rotates at -beta kx/|k|^2 within 1e-4 relative
    over ten periods with nu = r = sigma = 0."""
    t0 = time.perf_counter()
    beta = 1.0
    dp = derive_params(_inviscid_params(beta))
    assert dp.r == 0.0
    grid = Grid(32, 2 * np.pi)
    c = np.zeros((32, 32), dtype=np.complex128)
    amp = 1e-4 * (1.0 + 0.5j)
    c[1, 0], c[-1, 0] = amp, np.conj(amp)
    initial = state_from_arrays(grid, c, c)  # equal layers: purely barotropic

    period = 2 * np.pi / beta
    cfg = TrajectoryConfig(
        grid=grid,
        dp=dp,
        noise=NoiseSpec(sigma=0.0),
        forcing=ForcingSpec(mode="zero"),
        dt=5e-3,
        T=10 * period,
        output_every=10,
        keep_states=True,
    )
    out = simulate(cfg, initial)
    # the coefficient of exp(i k.x) carries exp(-i omega t)
    phases = np.unwrap([np.angle(s.q1.coeffs[1, 0]) for s in out.states])
    omega = -(phases[-1] - phases[0]) / (out.times[-1] - out.times[0])
    expected = -beta * 1.0 / 1.0
    rel = abs(omega - expected) / abs(expected)
    elapsed = time.perf_counter() - t0
    ok = rel <= 1e-4 and elapsed < 30.0
    _verdict(
        capsys,
        "02 Rossby dispersion",
        ok,
        f"omega {omega:.6f} vs {expected:.6f} (rel {rel:.3g}), {elapsed:.1f} s",
    )
    assert rel <= 1e-4
    assert elapsed < 30.0


def test_03_inviscid_energy_conservation(capsys):
    """1000 steps with nu = r = sigma = f = 0: relative drift of the weighted
    enstrophy-energy norm stays below 1e-6."""
    dp = derive_params(_inviscid_params(0.0))
    grid = Grid(32, 2 * np.pi)
    initial = state_from_arrays(
        grid,
        random_band_limited(grid, 40, amplitude=0.05, jmax=5).coeffs,
        random_band_limited(grid, 41, amplitude=0.05, jmax=5).coeffs,
    )
    cfg = TrajectoryConfig(
        grid=grid,
        dp=dp,
        noise=NoiseSpec(sigma=0.0),
        forcing=ForcingSpec(mode="zero"),
        dt=0.01,
        T=10.0,
        output_every=20,
    )
    out = simulate(cfg, initial)
    assert len(out.times) == 51  # 1000 steps
    drift = float(np.max(np.abs(out.star_norm_sq - out.star_norm_sq[0]))) / out.star_norm_sq[0]
    ok = drift <= 1e-6
    _verdict(capsys, "03 inviscid conservation", ok, f"relative drift {drift:.3g} over 1000 steps")
    assert drift <= 1e-6


def test_04_norm_equivalence_sandwich(capsys):
    """grad part < ||q||_*^2 < a0 * grad part, strictly, on 100 random states
    for each of three parameter sets."""
    cases = [
        (make_desk_params(), Grid(24, 2 * np.pi)),
        (make_desk_params(nu=0.05, r=0.02, F1=1.5, F2=0.75, h1=0.4), Grid(24, 2 * np.pi)),
        (make_ocean_params(), Grid(24, 1e6)),
    ]
    rng = np.random.default_rng(777)
    strict = True
    worst_gap = math.inf
    for pp, grid in cases:
        dp = derive_params(pp)
        for _ in range(100):
            s = int(rng.integers(0, 2**31))
            q = state_from_arrays(
                grid,
                random_band_limited(grid, s).coeffs,
                random_band_limited(grid, s + 1).coeffs,
            )
            parts = energy_components(q, dp)
            grad = parts["h1_grad_psi1_sq"] + parts["h2_grad_psi2_sq"]
            star = parts["star_norm_sq"]
            strict = strict and (grad < star < dp.a0 * grad)
            worst_gap = min(worst_gap, (star - grad) / star, (dp.a0 * grad - star) / star)
    ok = strict
    _verdict(
        capsys,
        "04 norm equivalence",
        ok,
        f"300 states strict both sides, smallest relative gap {worst_gap:.3g}",
    )
    assert strict


def test_05_ou_moments_and_correctors(capsys):
    """E||eta||_1^2 within 3 SE of tr Q / (2 nu (k+1)) over 1e4 draws;
    corrector residuals <= 1e-12 and smoothing bounds on 100 draws."""
    spec = NoiseSpec(sigma=0.3)
    report = noise_moments(spec, DESK, GRID16, samples=10_000)
    exact = spec.trace(GRID16) / (2.0 * DESK.raw.nu * (spec.k + 1.0))
    dev = abs(report.eta1_sq_mean - exact) / report.eta1_sq_se

    worst_res = 0.0
    smooth = True
    for m in range(100):
        st = ou_stationary_draw(spec, DESK, GRID16, member=5000 + m)
        eta, xi1, xi2 = st.eta, st.xi1, st.xi2
        d12 = xi1.coeffs - xi2.coeffs
        res1 = laplacian(xi1).coeffs - DESK.F1 * d12 + eta.coeffs
        res2 = laplacian(xi2).coeffs + DESK.F2 * d12
        scale = sobolev_norm(eta, 0.0)
        worst_res = max(
            worst_res,
            sobolev_norm(field_from_coeffs(GRID16, res1), 0.0) / scale,
            sobolev_norm(field_from_coeffs(GRID16, res2), 0.0) / scale,
        )
        head = (1.0 + 1e-12) * scale
        smooth = smooth and sobolev_norm(xi1, 2.0) <= head
        smooth = smooth and sobolev_norm(xi2, 2.0) <= head
        smooth = smooth and sobolev_norm(field_from_coeffs(GRID16, d12), 2.0) <= head

    ok = dev <= 3.0 and worst_res <= 1e-12 and smooth
    _verdict(
        capsys,
        "05 OU moments and correctors",
        ok,
        f"|mean - exact| = {dev:.2f} SE; residual {worst_res:.3g}; smoothing "
        f"{'held' if smooth else 'violated'} on 100 draws",
    )
    assert dev <= 3.0
    assert worst_res <= 1e-12
    assert smooth


def test_06_transformation_fidelity(capsys):
    """Same-Wiener-path direct vs transformed integration: halving dt shrinks
    the sup-t weighted-norm gap by a factor in [1.5, 3] across three levels."""
    t0 = time.perf_counter()
    dp = derive_params(make_desk_params(nu=1e-3, r=0.01, beta=0.5, tau0=0.01))
    grid = Grid(32, 2 * np.pi)
    spec = NoiseSpec(sigma=0.05)
    x0 = state_from_arrays(
        grid,
        random_band_limited(grid, 300, amplitude=0.05, jmax=5).coeffs,
        random_band_limited(grid, 301, amplitude=0.05, jmax=5).coeffs,
    )

    errs = []
    for dt, refine in ((4e-3, 4), (2e-3, 2), (1e-3, 1)):
        base = dict(
            grid=grid,
            dp=dp,
            noise=spec,
            forcing=SINUSOID,
            dt=dt,
            T=0.2,
            output_every=int(round(0.02 / dt)),
            refine=refine,
            keep_states=True,
        )
        noise0 = NoiseDriver(spec, dp, grid, dt, member=0, refine=refine).initial_state()
        out_t = simulate(
            TrajectoryConfig(formulation="transformed", **base),
            from_original_variables(x0, noise0),
        )
        out_d = simulate(TrajectoryConfig(formulation="direct_spde", **base), x0)
        sup = 0.0
        for st, ns, sd in zip(out_t.states, out_t.noise_states, out_d.states):
            orig = to_original_variables(st, ns)
            diff = state_from_arrays(
                grid, orig.q1.coeffs - sd.q1.coeffs, orig.q2.coeffs - sd.q2.coeffs
            )
            sup = max(sup, math.sqrt(star_norm_sq(diff, dp)))
        errs.append(sup)

    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    elapsed = time.perf_counter() - t0
    ok = all(1.5 <= r <= 3.0 for r in ratios) and elapsed < 120.0
    _verdict(
        capsys,
        "06 transformation fidelity",
        ok,
        f"sup-gap halving ratios {ratios[0]:.3f}, {ratios[1]:.3f}, {elapsed:.1f} s",
    )
    for r in ratios:
        assert 1.5 <= r <= 3.0
    assert elapsed < 120.0


def test_07_oceanic_arithmetic(capsys):
    """Oceanic parameter set: bottom drag lands at order 1e-5 1/s, the
    zero-noise defect threshold sits within 10% of 1.35e-3 m, and the implied
    mode count is within one decade of 1e18; all in under a second."""
    t0 = time.perf_counter()
    dp = derive_params(make_ocean_params())
    grid = Grid(16, 1e6)
    forcing = make_forcing(SINUSOID, grid, dp)
    rep = check_conditions(dp, NoiseSpec(sigma=0.0), grid, forcing, deterministic_limit=True)
    elapsed = time.perf_counter() - t0

    r_ok = 1e-5 <= dp.r < 1e-4
    thr = rep.eps_det_limit_conservative
    thr_ok = abs(thr / 1.35e-3 - 1.0) <= 0.10
    n = rep.n_order_estimate
    n_ok = 0.1 <= n / 1e18 <= 10.0
    ok = r_ok and thr_ok and n_ok and elapsed < 1.0
    _verdict(
        capsys,
        "07 oceanic arithmetic",
        ok,
        f"r {dp.r:.3g} 1/s; threshold {thr:.4g} m; N ~ {n:.3g}; {elapsed * 1e3:.0f} ms",
    )
    assert r_ok
    assert thr_ok
    assert n_ok
    assert elapsed < 1.0


def test_08_dissipativity_majorant(capsys):
    """20 noise paths: the recorded energy never exceeds the scalar majorant
    by more than one step's worth of its right side; zero-noise absorbing
    level matches d3 a0 / (nu lambda1) within 1%."""
    est = estimate_absorbing_radius(DESK, NoiseSpec(sigma=0.0), GRID16, COEFFS)
    radius_rel = abs(est.mean / COEFFS.deterministic_radius - 1.0)

    spec = NoiseSpec(sigma=0.005)
    ic = state_from_arrays(
        GRID16,
        random_band_limited(GRID16, 70, amplitude=0.02, jmax=5).coeffs,
        random_band_limited(GRID16, 71, amplitude=0.02, jmax=5).coeffs,
    )
    worst = math.inf
    for member in range(20):
        cfg = TrajectoryConfig(
            grid=GRID16,
            dp=DESK,
            noise=spec,
            forcing=SINUSOID,
            dt=0.02,
            T=20.0,
            output_every=1,
            member=member,
        )
        out = simulate(cfg, ic)
        star, eta = out.star_norm_sq, out.eta_norm_sq
        rho = solve_comparison_ode(out.times, eta, COEFFS, star[0])
        rhs = (-COEFFS.decay_rate + COEFFS.d0 * eta) * star + COEFFS.m_of_eta(eta)
        slack = cfg.dt * float(np.max(np.abs(rhs))) + 1e-12 * float(np.max(star))
        worst = min(worst, float(np.min(rho + slack - star)))

    ok = worst >= 0.0 and radius_rel <= 0.01
    _verdict(
        capsys,
        "08 dissipativity majorant",
        ok,
        f"20 paths, min margin {worst:.3g}; zero-noise radius off by {radius_rel:.3g}",
    )
    assert worst >= 0.0
    assert radius_rel <= 0.01


def test_09_determining_functionals(capsys):
    """Paired 20-member ensembles at 32^2: under dominance the synchronization
    energy collapses (95% quantile of V(T)/V(0) <= 1e-6, functional readings
    decaying); a 100x dominance violation keeps the median above 1e-2."""
    t0 = time.perf_counter()
    grid = Grid(32, 2 * np.pi)
    fset = build_modes_set(grid, 8)
    a, b = make_paired_states(grid, 0, ic_amplitude=0.02, perturbation=1e-4, jmax=5)

    # dominance satisfied: strong drag, weak noise, weak forcing
    dp_d = derive_params(make_desk_params(nu=0.2, r=0.1, beta=0.02, tau0=0.01))
    spec_d = NoiseSpec(sigma=0.005)
    coeffs_d = compute_condition_coefficients(dp_d, 1.0, make_forcing(SINUSOID, grid, dp_d))
    pump_d = coeffs_d.d0 * closed_moments(spec_d, dp_d, grid)["eta0_sq"]
    cfg_d = TrajectoryConfig(
        grid=grid, dp=dp_d, noise=spec_d, forcing=SINUSOID, dt=0.02, T=80.0, output_every=50
    )
    summary_d = run_ensemble(cfg_d, a, b, fset=fset, members=20)
    v_ratio_95 = summary_d.v_quantiles[2, -1] / summary_d.v_quantiles[2, 0]
    nl_ratio = summary_d.functional_quantiles[1, -1] / summary_d.functional_quantiles[1, 0]

    # dominance violated >= 100x: weak drag, strong noise
    dp_c = derive_params(make_desk_params(nu=0.01, r=math.sqrt(5e-4), beta=0.02, tau0=0.01))
    spec_c = NoiseSpec(sigma=1.0)
    coeffs_c = compute_condition_coefficients(dp_c, 1.0, make_forcing(SINUSOID, grid, dp_c))
    pump_c = coeffs_c.d0 * closed_moments(spec_c, dp_c, grid)["eta0_sq"]
    violation = (pump_c / coeffs_c.decay_rate) / max(pump_d / coeffs_d.decay_rate, 1e-300)
    cfg_c = TrajectoryConfig(
        grid=grid, dp=dp_c, noise=spec_c, forcing=SINUSOID, dt=0.01, T=80.0, output_every=100
    )
    summary_c = run_ensemble(cfg_c, a, b, fset=fset, members=20)
    v_ratio_med = summary_c.v_quantiles[1, -1] / summary_c.v_quantiles[1, 0]

    elapsed = time.perf_counter() - t0
    ok = (
        pump_d < coeffs_d.decay_rate
        and v_ratio_95 <= 1e-6
        and nl_ratio <= 1e-3
        and violation >= 100.0
        and v_ratio_med >= 1e-2
        and elapsed < 600.0
    )
    _verdict(
        capsys,
        "09 determining functionals",
        ok,
        f"dissipative q95 V(T)/V(0) {v_ratio_95:.3g}, functional decay {nl_ratio:.3g}; "
        f"contrast ({violation:.3g}x violation) median {v_ratio_med:.3g}; {elapsed:.0f} s",
    )
    assert pump_d < coeffs_d.decay_rate
    assert v_ratio_95 <= 1e-6
    assert nl_ratio <= 1e-3
    assert violation >= 100.0
    assert v_ratio_med >= 1e-2
    assert elapsed < 600.0


def test_10_energy_inequality_audit(capsys):
    """Along 20 simulated paths the per-step energy increment never beats the
    differential inequality's right side plus the declared slack."""
    spec = NoiseSpec(sigma=0.005)
    ic = state_from_arrays(
        GRID16,
        random_band_limited(GRID16, 80, amplitude=0.02, jmax=5).coeffs,
        random_band_limited(GRID16, 81, amplitude=0.02, jmax=5).coeffs,
    )
    clean = True
    worst = math.inf
    for member in range(20):
        cfg = TrajectoryConfig(
            grid=GRID16,
            dp=DESK,
            noise=spec,
            forcing=SINUSOID,
            dt=0.02,
            T=10.0,
            output_every=50,
            member=member,
            audit_energy=True,
        )
        out = simulate(cfg, ic)
        report = audit_energy_inequality(out.audit, COEFFS, cfg.dt)
        clean = clean and report.ok
        worst = min(worst, report.min_margin)
    _verdict(
        capsys,
        "10 energy inequality audit",
        clean,
        f"20 paths x 500 steps, min margin {worst:.3g}, violations {'none' if clean else 'found'}",
    )
    assert clean
