"""Fluctuation diagnostics: estimators, pairings, and tail statistics."""

import numpy as np
import pytest

from phi4lab.lattice import ComplexField, TorusGrid, make_grid, mass_functional
from phi4lab.groundstate import solve_ground_state, profile_from_closed_form
from phi4lab.manifold import approximate_soliton
from phi4lab.sampler import ChainConfig, run_mcmc_chain, _free_field_batch
from phi4lab.schrodinger import build_operators, normal_projectors, projected_covariance
from phi4lab.fluctstats import (
    TestFunction,
    bump_test_function,
    effective_sample_size,
    block_jackknife_stderr,
    char_func_estimate,
    pairing_variance_estimate,
    white_noise_field,
    fluctuation_field,
    chain_fluctuation_pairings,
    concentration_report,
    gaussian_sector_tails,
    base_mass_log_prob,
    free_energy_estimate,
)


class TestBump:
    def test_normalized_continuum_norm(self):
        g = bump_test_function(width=2.0, center=3.0)
        assert g.l2_norm_sq == 1.0
        # Riemann sum on a fine grid agrees with the frozen quadrature value
        x = np.linspace(1.9, 4.1, 300_001)
        riemann = np.trapezoid(g.profile(x) ** 2, x)
        assert riemann == pytest.approx(1.0, rel=1e-6)

    def test_compact_support(self):
        g = bump_test_function(width=2.0, center=0.0)
        assert g.profile(np.array([-1.01, 1.01, 5.0])).tolist() == [0, 0, 0]
        assert g.support_interval == (-1.0, 1.0)

    def test_values_on_wraps_torus(self):
        grid = make_grid(256, 4.0)
        g = bump_test_function(width=2.0, center=3.9)
        vals = g.values_on(grid)
        # support crosses the seam at +-4, so both ends are populated
        assert vals[0] > 0.0
        assert vals[-1] > 0.0
        total = grid.spacing * np.sum(vals ** 2)
        assert total == pytest.approx(1.0, rel=1e-3)


class TestErrorBars:
    def test_ess_iid(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(20_000)
        assert effective_sample_size(x) == pytest.approx(20_000, rel=0.1)

    def test_ess_ar1(self):
        rho = 0.9
        rng = np.random.default_rng(1)
        n = 200_000
        eps = rng.standard_normal(n)
        x = np.empty(n)
        x[0] = eps[0]
        for i in range(1, n):
            x[i] = rho * x[i - 1] + eps[i]
        tau = (1 + rho) / (1 - rho)  # 19
        assert effective_sample_size(x) == pytest.approx(n / tau, rel=0.25)

    def test_ess_chain_major_blocks(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(8000)
        whole = effective_sample_size(x, n_chains=4)
        assert whole == pytest.approx(8000, rel=0.15)
        with pytest.raises(ValueError):
            effective_sample_size(x[:-1], n_chains=4)

    def test_jackknife_matches_iid_formula(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(10_000)
        se = block_jackknife_stderr(x)
        assert se == pytest.approx(np.std(x) / np.sqrt(x.size), rel=0.3)


class TestEstimatorCalibration:
    def _white_noise_pairings(self, n_draws=40_000, seed=4):
        grid = make_grid(256, 8.0)
        g = bump_test_function(width=2.0, center=0.0)
        gv = g.values_on(grid)
        rng = np.random.default_rng(seed)
        re = np.empty(n_draws)
        im = np.empty(n_draws)
        for i in range(n_draws):
            w = white_noise_field(grid, rng)
            re[i] = grid.spacing * np.sum(np.real(w.values) * gv)
            im[i] = grid.spacing * np.sum(np.imag(w.values) * gv)
        return grid, g, re, im

    def test_white_noise_surrogate_hits_targets(self):
        grid, g, re, im = self._white_noise_pairings()
        for series in (re, im):
            rep = char_func_estimate(series, g)
            assert rep.deviation < 3 * rep.stderr + 0.01
            var = pairing_variance_estimate(series)
            assert abs(var.variance - g.l2_norm_sq) < 3 * var.stderr + 0.01
            assert abs(var.mean) < 0.02

    def test_char_func_of_zero_pairings(self):
        g = bump_test_function()
        rep = char_func_estimate(np.zeros(100), g)
        assert rep.estimate == 1.0 + 0.0j
        assert rep.deviation == pytest.approx(1.0 - np.exp(-0.5), rel=1e-12)

    def test_empty_pairings_rejected(self):
        g = bump_test_function()
        with pytest.raises(ValueError):
            char_func_estimate(np.array([]), g)
        with pytest.raises(ValueError):
            pairing_variance_estimate(np.array([1.0, 2.0]))


class TestWhiteNoise:
    def test_per_site_variance(self):
        grid = make_grid(128, 4.0)
        rng = np.random.default_rng(5)
        draws = np.stack(
            [white_noise_field(grid, rng).values for _ in range(4000)]
        )
        var_re = np.var(np.real(draws))
        assert var_re == pytest.approx(1.0 / grid.spacing, rel=0.1)


@pytest.fixture(scope="module")
def small_gibbs():
    """Short condensed chain in a frame where samples hug the soliton."""
    big_l, mass_d = 4.0, 2.0
    n = 128  # dx = 1/16, sqrt(lam) dx = 1/8
    cfg = ChainConfig(
        big_l=big_l, mass_d=mass_d, n_points=n, n_steps=3000,
        n_chains=4, burn_in=600, thin=30, seed=21, init="soliton",
    )
    res = run_mcmc_chain(cfg)
    # closed-form profile at the torus-scaled multiplier (L D / 4)^2; the
    # solver's finer-resolution guard is not needed for pairing work
    prof = profile_from_closed_form((big_l * mass_d / 4.0) ** 2, res.grid)
    return res, prof


class TestFluctuationField:
    def test_exact_soliton_gives_zero_fluctuation(self, small_gibbs):
        res, prof = small_gibbs
        s = approximate_soliton(prof, 1.0, 0.5)
        out = fluctuation_field(s, prof)
        assert out is not None
        assert np.sqrt(mass_functional(out.field)) < 1e-5
        assert abs(out.chart.x0 - 1.0) < 1e-6

    def test_far_sample_returns_none(self, small_gibbs):
        res, prof = small_gibbs
        grid = res.grid
        rng = np.random.default_rng(6)
        tiny = ComplexField(grid, 0.01 * rng.standard_normal(grid.n_points) + 0j)
        assert fluctuation_field(tiny, prof, delta=0.1) is None

    def test_scale_matches_multiplier(self, small_gibbs):
        # fluctuation values are sqrt(lam) times the recentered remainder
        res, prof = small_gibbs
        f = ComplexField(res.grid, res.samples[-1, 0])
        out = fluctuation_field(f, prof)
        assert out is not None
        raw = f.values - out.chart.soliton.values
        expect_mass = prof.multiplier_lambda * mass_functional(
            ComplexField(res.grid, raw)
        )
        assert mass_functional(out.field) == pytest.approx(expect_mass, rel=1e-8)


class TestChainPairings:
    def test_methods_coincide_near_manifold(self, small_gibbs):
        # the batched matched-filter scan and the per-sample orthogonality
        # polish are distinct chart estimators; on near-manifold samples
        # they must coincide
        import dataclasses

        res, prof = small_gibbs
        grid = res.grid
        n = grid.n_points
        rng = np.random.default_rng(17)
        kept, chains = 40, 3
        samples = np.empty((kept, chains, n), dtype=complex)
        for c in range(chains):
            for t in range(kept):
                s = approximate_soliton(
                    prof, rng.uniform(-4, 4), rng.uniform(0, 2 * np.pi)
                )
                z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
                zh = np.fft.fft(z)
                zh[np.abs(grid.wavenumbers) > 4.0] = 0
                z = np.fft.ifft(zh)
                z *= 1e-3 / np.sqrt(mass_functional(ComplexField(grid, z)))
                samples[t, c] = s.values + z
        fake = dataclasses.replace(res)
        fake.samples = samples
        fake.config = dataclasses.replace(res.config, n_chains=chains)
        g = bump_test_function(width=2.0, center=2.0)
        scan = chain_fluctuation_pairings(fake, prof, g, method="scan")
        newton = chain_fluctuation_pairings(fake, prof, g, method="newton")
        assert scan.n_outside == newton.n_outside == 0
        assert np.max(np.abs(scan.re - newton.re)) < 1e-5
        assert np.max(np.abs(scan.im - newton.im)) < 1e-5

    def test_methods_agree_distributionally(self, small_gibbs):
        # on genuinely fat samples the two estimators pick slightly
        # different charts; the pairing law they induce must still match
        res, prof = small_gibbs
        g = bump_test_function(width=2.0, center=2.0)
        scan = chain_fluctuation_pairings(res, prof, g, method="scan")
        newton = chain_fluctuation_pairings(res, prof, g, method="newton")
        assert scan.n_total == newton.n_total
        for a, b in ((scan.re, newton.re), (scan.im, newton.im)):
            assert abs(np.mean(a) - np.mean(b)) < 0.1
            assert np.var(a) == pytest.approx(np.var(b), rel=0.25)

    def test_layout_and_counts(self, small_gibbs):
        res, prof = small_gibbs
        g = bump_test_function(width=2.0, center=2.0)
        series = chain_fluctuation_pairings(res, prof, g)
        kept, chains, _ = res.samples.shape
        assert series.n_total == kept * chains
        assert series.n_chains == chains
        assert series.chain_lengths.sum() == series.re.size
        assert series.re.size == series.n_total - series.n_outside
        assert series.ess() > 0

    def test_unknown_method_rejected(self, small_gibbs):
        res, prof = small_gibbs
        g = bump_test_function()
        with pytest.raises(ValueError):
            chain_fluctuation_pairings(res, prof, g, method="grid")


class TestConcentration:
    def test_report_fields(self, small_gibbs):
        res, prof = small_gibbs
        cap = res.config.big_l * res.config.mass_d
        rep = concentration_report(res, prof, cap)
        kept, chains, _ = res.samples.shape
        assert rep.n_samples == kept * chains
        assert 0.0 <= rep.outside_fraction <= 1.0
        assert 0.0 <= rep.shell_fraction <= 1.0
        assert rep.peak_median > 0.0
        assert rep.mean_distance_sq >= 0.0

    def test_soliton_only_run_is_fully_inside(self, small_gibbs):
        # synthetic result holding exact manifold points: zero distance,
        # full shell occupancy requires mass at the cap, peaks at sqrt(2 lam)
        res, prof = small_gibbs
        import dataclasses

        s = approximate_soliton(prof, -1.0, 0.3)
        fake_samples = np.broadcast_to(
            s.values, (3, 2, res.grid.n_points)
        ).copy()
        fake = dataclasses.replace(res)
        fake.samples = fake_samples
        cap = res.config.big_l * res.config.mass_d
        rep = concentration_report(fake, prof, cap)
        assert rep.outside_fraction == 0.0
        assert rep.mean_distance_sq < 1e-10
        peak = np.sqrt(2.0 * prof.multiplier_lambda)
        assert rep.peak_median == pytest.approx(peak, rel=1e-2)


class TestGaussianTails:
    def test_sector_variance_and_normality(self):
        big_l = 8.0
        grid = TorusGrid(4 * 64, 64.0)
        prof = profile_from_closed_form(1.0, grid)
        b1, _ = build_operators(prof, 1.0, grid)
        p_re, _ = normal_projectors(prof, 1.0)
        cov = projected_covariance(b1, p_re)
        g = bump_test_function(width=2.0, center=big_l / 2.0)
        rep = gaussian_sector_tails(cov, g, big_l, n_draws=4000, seed=7)
        assert rep.variance == pytest.approx(g.l2_norm_sq, rel=0.2)
        assert abs(rep.mean) < 4 * np.sqrt(rep.variance / rep.n_draws)
        assert rep.normality_pvalue > 1e-3
        again = gaussian_sector_tails(cov, g, big_l, n_draws=4000, seed=7)
        assert again.variance == rep.variance


class TestFreeEnergyPieces:
    def test_base_mass_log_prob_monotone_in_cap(self):
        grid = make_grid(32, 2.0)
        lo, _ = base_mass_log_prob(grid, 2.0, n_draws=40_000, seed=3)
        hi, _ = base_mass_log_prob(grid, 6.0, n_draws=40_000, seed=3)
        assert lo < hi < 0.0

    def test_free_energy_smoke(self):
        rep = free_energy_estimate(
            2.0, 1.0, 32, n_nodes=2, n_steps=600, burn_in=150,
            n_chains=4, thin=15, base_draws=20_000, seed=11,
        )
        assert rep.log_z == pytest.approx(
            rep.base_log_prob + rep.coupling_integral, abs=1e-12
        )
        assert rep.per_volume == pytest.approx(rep.log_z / 8.0, abs=1e-12)
        assert len(rep.nodes) == 2
        assert rep.stderr > 0.0
        for lam, mean_v, se, ess in rep.nodes:
            assert 0.0 < lam < 1.0
            assert mean_v > 0.0
            assert ess > 1.0
