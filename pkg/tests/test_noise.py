"""Noise layer: covariance spectrum, exact OU updates, correctors, moments."""

import numpy as np
import pytest

from conftest import make_desk_params

from stochqg import (
    ConfigurationError,
    Grid,
    NoiseDriver,
    NoiseSpec,
    PhysicalParams,
    closed_moments,
    derive_params,
    field_from_coeffs,
    laplacian,
    noise_moments,
    ou_stationary_draw,
    sobolev_norm,
)
from stochqg.noise import (
    decay_rates,
    ou_evolve,
    sample_stationary_norms,
    sample_wiener_increments,
    spectrum_from_csv,
    stationary_variance,
    with_seed,
    zero_noise_state,
)
from stochqg.spectral import is_conjugate_symmetric

GRID = Grid(16, 2 * np.pi)
DP = derive_params(make_desk_params())


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        NoiseSpec(sigma=-1.0)
    with pytest.raises(ConfigurationError):
        NoiseSpec(sigma=1.0, gamma=2.0)
    with pytest.raises(ConfigurationError):
        NoiseSpec(sigma=1.0, k=0.0)
    # explicit spectra skip the power-law constraint
    NoiseSpec(sigma=0.0, gamma=0.0, explicit=((1, 0, 0.5), (-1, 0, 0.5)))


def test_power_law_spectrum():
    spec = NoiseSpec(sigma=0.5, gamma=3.0)
    q = spec.spectrum_on(GRID)
    assert q[0, 0] == 0.0
    assert q[1, 0] == pytest.approx(0.25 * 2.0**-3, rel=1e-14)
    assert q[2, 1] == pytest.approx(0.25 * 6.0**-3, rel=1e-14)
    assert q[1, 0] == q[-1, 0]
    cut = GRID.dealias_cut
    assert np.all(q[cut + 1 : GRID.n - cut, :] == 0.0)
    assert spec.trace(GRID) == pytest.approx(np.sum(q), rel=1e-14)


def test_explicit_spectrum_rules():
    ok = NoiseSpec(sigma=0.0, explicit=((2, 1, 0.3), (-2, -1, 0.3)))
    q = ok.spectrum_on(GRID)
    assert q[2, 1] == 0.3 and q[-2, -1] == 0.3
    assert np.sum(q > 0) == 2

    with pytest.raises(ConfigurationError, match="q\\(j\\) == q\\(-j\\)"):
        NoiseSpec(sigma=0.0, explicit=((2, 1, 0.3),)).spectrum_on(GRID)
    with pytest.raises(ConfigurationError, match="mean mode"):
        NoiseSpec(sigma=0.0, explicit=((0, 0, 1.0),)).spectrum_on(GRID)
    with pytest.raises(ConfigurationError, match="band"):
        NoiseSpec(sigma=0.0, explicit=((7, 0, 1.0), (-7, 0, 1.0))).spectrum_on(GRID)
    with pytest.raises(ConfigurationError, match="negative"):
        NoiseSpec(sigma=0.0, explicit=((1, 0, -1.0), (-1, 0, -1.0))).spectrum_on(GRID)


def test_spectrum_csv(tmp_path):
    f = tmp_path / "spec.csv"
    f.write_text("j1,j2,q\n# comment row\n1,0,0.5\n2,1,0.125\n-2,-1,0.125\n")
    rows = spectrum_from_csv(f)
    # the (-1, 0) mirror of the first row is filled in automatically
    assert (-1, 0, 0.5) in rows and (1, 0, 0.5) in rows
    assert len(rows) == 4

    g = tmp_path / "conflict.csv"
    g.write_text("1,0,0.5\n1,0,0.25\n")
    with pytest.raises(ConfigurationError, match="conflicting"):
        spectrum_from_csv(g)

    h = tmp_path / "asym.csv"
    h.write_text("1,0,0.5\n-1,0,0.25\n")
    with pytest.raises(ConfigurationError, match="asymmetric"):
        spectrum_from_csv(h)

    i = tmp_path / "short.csv"
    i.write_text("1,0\n")
    with pytest.raises(ConfigurationError, match="3 columns"):
        spectrum_from_csv(i)


def test_stationary_variance_formula():
    spec = NoiseSpec(sigma=0.4, gamma=2.5, k=2.0)
    q = spec.spectrum_on(GRID)
    a = decay_rates(spec, DP, GRID)
    s = stationary_variance(spec, DP, GRID)
    nz = a > 0
    np.testing.assert_allclose(s[nz], q[nz] / (2 * a[nz]), rtol=1e-14)
    assert s[0, 0] == 0.0
    # rate really is nu (k+1) mu
    assert a[1, 0] == pytest.approx(DP.nu * 3.0 * GRID.lambda1, rel=1e-14)


def test_stationary_draw_properties():
    spec = NoiseSpec(sigma=1.0, base_seed=9)
    st = ou_stationary_draw(spec, DP, GRID, member=3)
    assert is_conjugate_symmetric(st.eta)
    assert st.t == 0.0 and st.step == 0 and st.member == 3
    # deterministic in (seed, member, index)
    st2 = ou_stationary_draw(spec, DP, GRID, member=3)
    np.testing.assert_array_equal(st.eta.coeffs, st2.eta.coeffs)
    other = ou_stationary_draw(with_seed(spec, 10), DP, GRID, member=3)
    assert np.any(other.eta.coeffs != st.eta.coeffs)


def test_xi_elliptic_residuals():
    """The correctors satisfy their defining elliptic system to roundoff."""
    spec = NoiseSpec(sigma=2.0, base_seed=1)
    for member in range(5):
        st = ou_stationary_draw(spec, DP, GRID, member=member)
        lhs1 = (
            laplacian(st.xi1).coeffs
            - DP.F1 * (st.xi1.coeffs - st.xi2.coeffs)
            + st.eta.coeffs
        )
        lhs2 = laplacian(st.xi2).coeffs - DP.F2 * (st.xi2.coeffs - st.xi1.coeffs)
        scale = max(np.max(np.abs(st.eta.coeffs)), 1e-30)
        assert np.max(np.abs(lhs1)) <= 1e-12 * scale
        assert np.max(np.abs(lhs2)) <= 1e-12 * scale


def test_xi_smoothing_bounds():
    # two derivatives gained: ||xi_i||_2 <= ||eta||_0, same for the difference
    spec = NoiseSpec(sigma=1.0, base_seed=4)
    dp = derive_params(make_desk_params(F1=1.2, F2=0.6, h1=0.5))
    for member in range(20):
        st = ou_stationary_draw(spec, dp, GRID, member=member)
        diff = field_from_coeffs(GRID, st.xi1.coeffs - st.xi2.coeffs)
        n_eta = sobolev_norm(st.eta)
        assert sobolev_norm(st.xi1, 2.0) <= n_eta * (1 + 1e-12)
        assert sobolev_norm(st.xi2, 2.0) <= n_eta * (1 + 1e-12)
        assert sobolev_norm(diff, 2.0) <= n_eta * (1 + 1e-12)


def test_wiener_increment_statistics():
    spec = NoiseSpec(sigma=0.0, explicit=((1, 0, 0.8), (-1, 0, 0.8)), base_seed=2)
    dt = 0.3
    vals = np.array(
        [
            sample_wiener_increments(spec, GRID, dt, member=m, step=0).coeffs[1, 0]
            for m in range(4000)
        ]
    )
    # E|dW|^2 = q dt for the forced mode
    assert np.mean(np.abs(vals) ** 2) == pytest.approx(0.8 * dt, rel=0.1)
    assert abs(np.mean(vals)) < 0.02


def test_ou_evolve_zero_rate_adds_increment():
    """With nu = 0 the exact transition degenerates to eta + dW."""
    pp = make_desk_params()
    pp = PhysicalParams(**{**{k: getattr(pp, k) for k in pp.__dataclass_fields__}, "nu": 0.0})
    dp = derive_params(pp)
    spec = NoiseSpec(sigma=0.7, base_seed=5)
    st = ou_stationary_draw(spec, dp, GRID, member=1)
    nxt = ou_evolve(st, spec, dp, dt=0.25)
    dW = sample_wiener_increments(spec, GRID, 0.25, member=1, step=0)
    np.testing.assert_allclose(nxt.eta.coeffs, st.eta.coeffs + dW.coeffs, atol=1e-14)
    assert nxt.step == 1 and nxt.t == 0.25


def test_ou_evolve_decay_and_determinism():
    spec = NoiseSpec(sigma=0.3, base_seed=6)
    st = ou_stationary_draw(spec, DP, GRID, member=2)
    a = ou_evolve(st, spec, DP, 0.1)
    b = ou_evolve(st, spec, DP, 0.1)
    np.testing.assert_array_equal(a.eta.coeffs, b.eta.coeffs)
    with pytest.raises(ConfigurationError):
        ou_evolve(st, spec, DP, dt=0.0)


def test_driver_refine_shares_path():
    """(dt, refine=2) and (dt/2, refine=1) consume the same Brownian path."""
    spec = NoiseSpec(sigma=0.9, base_seed=7)
    coarse = NoiseDriver(spec, DP, GRID, dt=0.2, member=4, refine=2)
    fine = NoiseDriver(spec, DP, GRID, dt=0.1, member=4, refine=1)

    s0 = coarse.initial_state()
    f0 = fine.initial_state()
    np.testing.assert_array_equal(s0.eta.coeffs, f0.eta.coeffs)

    one_coarse = coarse.advance(s0)
    two_fine = fine.advance(fine.advance(f0))
    np.testing.assert_array_equal(one_coarse.eta.coeffs, two_fine.eta.coeffs)

    dw_coarse = coarse.increment(0).coeffs
    dw_fine = fine.increment(0).coeffs + fine.increment(1).coeffs
    np.testing.assert_array_equal(dw_coarse, dw_fine)


def test_driver_zero_trace_initial_state():
    spec = NoiseSpec(sigma=0.0)
    drv = NoiseDriver(spec, DP, GRID, dt=0.1)
    st = drv.initial_state()
    assert np.all(st.eta.coeffs == 0.0)
    nxt = drv.advance(st)
    assert np.all(nxt.eta.coeffs == 0.0)
    z = zero_noise_state(GRID)
    assert np.all(z.xi1.coeffs == 0.0)
    with pytest.raises(ConfigurationError):
        NoiseDriver(spec, DP, GRID, dt=0.1, refine=0)


def test_closed_first_moment_identity():
    """E ||eta||_1^2 equals tr_0 Q / (2 nu (k+1)) exactly for this covariance."""
    for k in (1.0, 2.5):
        spec = NoiseSpec(sigma=1.3, gamma=2.7, k=k)
        closed = closed_moments(spec, DP, GRID)
        expect = spec.trace(GRID) / (2.0 * DP.nu * (k + 1.0))
        assert closed["eta1_sq"] == pytest.approx(expect, rel=1e-13)


def test_monte_carlo_moments_match_closed():
    spec = NoiseSpec(sigma=1.0, base_seed=12)
    rep = noise_moments(spec, DP, GRID, samples=600)
    assert abs(rep.eta0_sq_mean - rep.closed_eta0_sq) < 4 * rep.eta0_sq_se
    assert abs(rep.eta1_sq_mean - rep.closed_eta1_sq) < 4 * rep.eta1_sq_se
    assert abs(rep.eta0_4_mean - rep.closed_eta0_4) < 4 * rep.eta0_4_se
    assert abs(rep.eta1_4_mean - rep.closed_eta1_4) < 4 * rep.eta1_4_se


def test_sample_norms_deterministic():
    spec = NoiseSpec(sigma=0.8, base_seed=3)
    a0, a1 = sample_stationary_norms(spec, DP, GRID, samples=5)
    b0, b1 = sample_stationary_norms(spec, DP, GRID, samples=5)
    np.testing.assert_array_equal(a0, b0)
    np.testing.assert_array_equal(a1, b1)
    with pytest.raises(ConfigurationError):
        sample_stationary_norms(spec, DP, GRID, samples=0)
