"""Free-field draws, constrained chains, and the small-lattice oracle."""

import numpy as np
import pytest

from phi4lab.lattice import TorusGrid, make_grid
from phi4lab.sampler import (
    ChainConfig,
    UnreliableOracleError,
    sample_free_field,
    mass_of_rows,
    quartic_of_rows,
    potential_of_rows,
    soliton_start,
    free_start,
    run_mcmc_chain,
    smallscale_quadrature_oracle,
    _free_field_batch,
)
from phi4lab.fluctstats import effective_sample_size


OBS = {"mass": mass_of_rows, "potential": potential_of_rows}


class TestFreeField:
    def test_mode_variances(self):
        # E |a_k|^2 = 1/(k^2 + m) in the orthonormal-mode convention; the
        # FFT of the values carries n^2 / (2 l) times that
        g = make_grid(64, 4.0)
        rng = np.random.default_rng(10)
        draws = _free_field_batch(g, 2.0, rng, 10_000)
        fhat = np.fft.fft(draws, axis=-1)
        emp = np.mean(np.abs(fhat) ** 2, axis=0)
        order = np.argsort(np.abs(g.wavenumbers), kind="stable")[:10]
        for j in order:
            expect = g.n_points ** 2 / (
                g.circumference * (g.wavenumbers[j] ** 2 + 2.0)
            )
            assert emp[j] == pytest.approx(expect, rel=0.05)

    def test_mean_mass_matches_trace(self):
        g = make_grid(64, 4.0)
        rng = np.random.default_rng(11)
        draws = _free_field_batch(g, 2.0, rng, 20_000)
        m = mass_of_rows(draws, g)
        expect = float(np.sum(1.0 / (g.wavenumbers ** 2 + 2.0)))
        se = np.std(m) / np.sqrt(m.size)
        assert abs(np.mean(m) - expect) < 4 * se

    def test_single_draw_wrapper(self):
        g = make_grid(64, 4.0)
        f = sample_free_field(g, 2.0, np.random.default_rng(0))
        assert f.grid is g
        assert f.values.shape == (64,)
        with pytest.raises(ValueError):
            sample_free_field(g, 0.0, np.random.default_rng(0))


class TestStarts:
    def test_soliton_start_masses(self):
        g = make_grid(256, 8.0)
        rng = np.random.default_rng(1)
        v = soliton_start(g, 8.0, 1.0, 6, rng)
        m = mass_of_rows(v, g)
        assert np.allclose(m, 0.999 * 8.0, rtol=1e-10)

    def test_free_start_respects_cap(self):
        g = make_grid(256, 8.0)
        rng = np.random.default_rng(2)
        v = free_start(g, 8.0, 1.0, 32, rng)
        assert np.all(mass_of_rows(v, g) <= 8.0)


class TestChain:
    def test_cap_holds_on_every_kept_sample(self):
        cfg = ChainConfig(
            big_l=4.0, mass_d=1.0, n_points=128, n_steps=1500,
            n_chains=8, burn_in=300, thin=10, seed=3, init="free",
        )
        res = run_mcmc_chain(cfg, observables=OBS)
        cap = cfg.big_l * cfg.mass_d
        masses = mass_of_rows(res.samples.reshape(-1, cfg.n_points), res.grid)
        assert np.all(masses <= cap + 1e-12)
        assert np.max(res.observables["mass"]) <= cap + 1e-12

    def test_observables_match_recompute(self):
        cfg = ChainConfig(
            big_l=4.0, mass_d=1.0, n_points=128, n_steps=800,
            n_chains=4, burn_in=200, thin=20, seed=4, init="soliton",
        )
        res = run_mcmc_chain(cfg, observables=OBS)
        kept, chains, n = res.samples.shape
        again = np.array(
            [mass_of_rows(res.samples[t], res.grid) for t in range(kept)]
        )
        assert np.array_equal(again, res.observables["mass"])
        pot = np.array(
            [potential_of_rows(res.samples[t], res.grid) for t in range(kept)]
        )
        assert np.array_equal(pot, res.observables["potential"])

    def test_deterministic_given_seed(self):
        cfg = ChainConfig(
            big_l=4.0, mass_d=1.0, n_points=64, n_steps=500,
            n_chains=4, burn_in=100, thin=10, seed=7, init="free",
        )
        a = run_mcmc_chain(cfg, observables=OBS)
        b = run_mcmc_chain(cfg, observables=OBS)
        assert np.array_equal(a.samples, b.samples)
        assert a.acceptance_rate == b.acceptance_rate
        c = run_mcmc_chain(
            ChainConfig(**{**cfg.__dict__, "seed": 8}), observables=OBS
        )
        assert not np.array_equal(a.samples, c.samples)

    def test_acceptance_rate_adapts_into_band(self):
        cfg = ChainConfig(
            big_l=4.0, mass_d=1.0, n_points=128, n_steps=4000,
            n_chains=8, burn_in=2000, thin=10, seed=5, init="free",
            target_accept=0.3,
        )
        res = run_mcmc_chain(cfg)
        assert 0.0 < res.beta_final < 1.0
        assert 0.1 < res.acceptance_rate < 0.7

    def test_unknown_init_rejected(self):
        cfg = ChainConfig(
            big_l=4.0, mass_d=1.0, n_points=64, n_steps=100,
            n_chains=2, burn_in=10, thin=5, seed=0, init="warm",
        )
        with pytest.raises(ValueError, match="init"):
            run_mcmc_chain(cfg)

    def test_untilted_chain_matches_rejection_sampling(self):
        # tilt = 0 leaves the mass-capped free field invariant, which a
        # direct rejection sampler reproduces without any chain machinery
        big_l, mass_d, n = 4.0, 1.0, 64
        cfg = ChainConfig(
            big_l=big_l, mass_d=mass_d, n_points=n, n_steps=6000,
            n_chains=8, tilt=0.0, burn_in=1000, thin=5, seed=6, init="free",
        )
        res = run_mcmc_chain(cfg, observables=OBS)
        series = res.observables["mass"]
        chain_mean = float(np.mean(series))
        ess = effective_sample_size(series.ravel(order="F"), cfg.n_chains)
        chain_se = float(np.std(series)) / np.sqrt(max(ess, 1.0))

        grid = cfg.grid()
        rng = np.random.default_rng(123)
        v = _free_field_batch(grid, 2.0, rng, 100_000) * np.sqrt(2.0)
        m = mass_of_rows(v, grid)
        keep = m[m <= big_l * mass_d]
        ref_mean = float(np.mean(keep))
        ref_se = float(np.std(keep)) / np.sqrt(keep.size)

        z = abs(chain_mean - ref_mean) / np.hypot(chain_se, ref_se)
        assert z < 4.0


class TestConfig:
    def test_grid_allows_tiny_odd_lattices(self):
        cfg = ChainConfig(
            big_l=1.0, mass_d=2.0, n_points=3, n_steps=10,
            n_chains=2, burn_in=2, thin=2, seed=0,
        )
        g = cfg.grid()
        assert isinstance(g, TorusGrid)
        assert g.n_points == 3
        with pytest.raises(ValueError):
            ChainConfig(
                big_l=1.0, mass_d=2.0, n_points=1, n_steps=10,
                n_chains=2, burn_in=2, thin=2, seed=0,
            ).grid()


class TestOracle:
    def test_reference_moments_reproducible(self):
        g = TorusGrid(3, 1.0)
        a = smallscale_quadrature_oracle(g, 1.0, 2.0, n_draws=50_000, seed=1)
        b = smallscale_quadrature_oracle(g, 1.0, 2.0, n_draws=50_000, seed=1)
        assert a.mean_mass == b.mean_mass
        assert a.se_mass == b.se_mass
        assert a.ess > 1e3
        assert a.n_draws == 50_000

    def test_untilted_oracle_agrees_with_rejection(self):
        g = TorusGrid(3, 1.0)
        rep = smallscale_quadrature_oracle(g, 1.0, 2.0, tilt=0.0, n_draws=200_000, seed=2)
        rng = np.random.default_rng(77)
        v = _free_field_batch(g, 2.0, rng, 200_000) * np.sqrt(2.0)
        m = mass_of_rows(v, g)
        keep = m[m <= 2.0]
        z = abs(rep.mean_mass - np.mean(keep)) / np.hypot(
            rep.se_mass, np.std(keep) / np.sqrt(keep.size)
        )
        assert z < 4.0

    def test_degenerate_weights_raise(self):
        g = TorusGrid(3, 1.0)
        with pytest.raises(UnreliableOracleError):
            smallscale_quadrature_oracle(g, 1.0, 2.0, n_draws=200, seed=3)
