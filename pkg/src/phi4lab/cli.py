"""Command-line driver for the soliton Gibbs laboratory.

Subcommands cover the pipeline stages: ground states, linearized spectra,
Green diagnostics, Gaussian sector tails, chain sampling with checkpoints,
fluctuation statistics, and free-energy integration.  `run` drives any of
them from one JSON config; `resume` continues a checkpointed chain.

Exit codes: 0 success; 2 configuration or schema problems (including
malformed checkpoints headers and duplicate seeds); 3 numerical failures
(divergent chains, indefinite covariances, failed minimization, unreliable
oracles); 4 checkpoint format-version mismatch; 5 truncated checkpoint.

Reports are JSON files stamped with a canonical config hash and the seed
lineage; series data goes to CSV next to them.  The default output
directory comes from PHI4LAB_OUTDIR, falling back to the working
directory.
"""

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from .checkpoint import (
    CheckpointNumericalError,
    CheckpointSchemaError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    resume_chain,
    write_checkpoint,
)
from .fluctstats import (
    bump_test_function,
    chain_fluctuation_pairings,
    char_func_estimate,
    concentration_report,
    free_energy_estimate,
    gaussian_sector_tails,
)
from .groundstate import (
    ConvergenceFailure,
    DegenerateProfileError,
    SolverConfig,
    profile_from_closed_form,
    solve_ground_state,
)
from .lattice import ComplexField, TorusGrid, make_grid, spectral_derivative
from .manifold import make_chart
from .sampler import (
    ChainConfig,
    SamplerDivergence,
    UnreliableOracleError,
    mass_of_rows,
    potential_of_rows,
    run_mcmc_chain,
    smallscale_quadrature_oracle,
)
from .schrodinger import (
    PositivityViolation,
    build_operators,
    green_diagnostics,
    normal_projectors,
    projected_covariance,
    spectrum_and_zero_modes,
)


class ConfigError(ValueError):
    """Invalid run configuration; maps to exit code 2."""


def _outdir(args):
    out = getattr(args, "outdir", None) or os.environ.get("PHI4LAB_OUTDIR", ".")
    os.makedirs(out, exist_ok=True)
    return out


def _config_hash(config):
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _write_report(outdir, name, payload, config, seeds):
    payload = dict(payload)
    payload["config"] = config
    payload["config_sha256"] = _config_hash(config)
    payload["seed_lineage"] = seeds
    path = os.path.join(outdir, name + ".json")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_csv(outdir, name, header, rows):
    path = os.path.join(outdir, name + ".csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _check_seeds(seeds):
    if len(set(seeds)) != len(seeds):
        raise ConfigError("duplicate seeds in %r" % (seeds,))


# ---------------------------------------------------------------------------
# handlers


def _cmd_groundstate(args):
    grid = make_grid(args.n_points, args.half_length)
    profile = solve_ground_state(
        args.mass_d, grid, SolverConfig(tolerance=args.tolerance)
    )
    config = {
        "experiment": "groundstate",
        "mass_d": args.mass_d,
        "half_length": args.half_length,
        "n_points": args.n_points,
        "tolerance": args.tolerance,
    }
    out = _outdir(args)
    _write_csv(
        out,
        args.name + "_profile",
        ("x", "q"),
        zip(grid.points.tolist(), profile.values.tolist()),
    )
    path = _write_report(
        out,
        args.name,
        {
            "multiplier_lambda": profile.multiplier_lambda,
            "energy_i": profile.energy_i,
            "kinetic": profile.kinetic_k,
            "quartic": profile.quartic_u,
            "el_residual": profile.el_residual,
            "mass": profile.mass_d,
        },
        config,
        {},
    )
    print(path)
    return 0


def _cmd_spectrum(args):
    grid = make_grid(args.n_points, args.half_length)
    profile = solve_ground_state(args.mass_d, grid)
    lam = profile.multiplier_lambda
    b1, b2 = build_operators(profile, lam, grid)
    vals1, _ = spectrum_and_zero_modes(b1, args.n_eigs)
    vals2, _ = spectrum_and_zero_modes(b2, args.n_eigs)
    q = profile.values
    dq = spectral_derivative(ComplexField(grid, q.astype(complex))).values.real
    r2 = float(np.linalg.norm(b2.apply(q)) / np.linalg.norm(q))
    r1 = float(np.linalg.norm(b1.apply(dq)) / np.linalg.norm(dq))
    config = {
        "experiment": "spectrum",
        "mass_d": args.mass_d,
        "half_length": args.half_length,
        "n_points": args.n_points,
        "n_eigs": args.n_eigs,
    }
    path = _write_report(
        _outdir(args),
        args.name,
        {
            "eigs_shape_sector": vals1.tolist(),
            "eigs_phase_sector": vals2.tolist(),
            "phase_zero_mode_residual": r2,
            "shape_zero_mode_residual": r1,
            "multiplier_lambda": lam,
        },
        config,
        {},
    )
    print(path)
    return 0


def _cmd_green(args):
    grid = make_grid(args.n_points, args.half_length)
    profile = solve_ground_state(args.mass_d, grid)
    lam = profile.multiplier_lambda
    b1, _ = build_operators(profile, lam, grid)
    chart = make_chart(profile)
    sector_re, _ = normal_projectors(chart, lam)
    cov = projected_covariance(b1, sector_re)
    diag = green_diagnostics(cov)
    config = {
        "experiment": "green",
        "mass_d": args.mass_d,
        "half_length": args.half_length,
        "n_points": args.n_points,
    }
    j0 = int(np.argmin(np.abs(grid.points)))
    out = _outdir(args)
    _write_csv(
        out,
        args.name + "_column",
        ("x", "g"),
        zip(grid.points.tolist(), cov.green[:, j0].tolist()),
    )
    path = _write_report(
        out,
        args.name,
        {
            "decay_rate": diag.rate,
            "expected_rate": float(np.sqrt(lam)),
            "lipschitz": diag.lipschitz,
            "resolvent_residual": diag.resolvent_residual,
            "max_abs_green": diag.max_abs_green,
            "zeta": cov.zeta,
        },
        config,
        {},
    )
    print(path)
    return 0


def _cmd_gaussian_sector(args):
    big_l = args.big_l
    grid = make_grid(args.n_points, big_l ** 2)
    profile = profile_from_closed_form(1.0, grid)
    chart = make_chart(profile)
    b1, b2 = build_operators(profile, 1.0, grid)
    sector_re, sector_im = normal_projectors(chart, 1.0)
    cov_re = projected_covariance(b1, sector_re)
    cov_im = projected_covariance(b2, sector_im)
    g = bump_test_function(width=args.g_width, center=args.g_center)
    rep_re = gaussian_sector_tails(cov_re, g, big_l, args.n_draws, args.seed)
    rep_im = gaussian_sector_tails(
        cov_im, g, big_l, args.n_draws, args.seed + 1
    )
    config = {
        "experiment": "gaussian-sector",
        "big_l": big_l,
        "n_points": args.n_points,
        "g_width": args.g_width,
        "g_center": args.g_center,
        "n_draws": args.n_draws,
        "seed": args.seed,
    }
    path = _write_report(
        _outdir(args),
        args.name,
        {
            "shape_sector": {
                "variance": rep_re.variance,
                "target": rep_re.target,
                "normality_pvalue": rep_re.normality_pvalue,
                "zeta": cov_re.zeta,
            },
            "phase_sector": {
                "variance": rep_im.variance,
                "target": rep_im.target,
                "normality_pvalue": rep_im.normality_pvalue,
                "zeta": cov_im.zeta,
            },
        },
        config,
        {"draws": [args.seed, args.seed + 1]},
    )
    print(path)
    return 0


def _chain_config_from_args(args, seed):
    return ChainConfig(
        big_l=args.big_l,
        mass_d=args.mass_d,
        n_points=args.n_points,
        n_steps=args.steps,
        n_chains=args.chains,
        tilt=args.tilt,
        burn_in=args.burn_in,
        thin=args.thin,
        seed=seed,
        init=args.init,
        keep_samples=False,
    )


_CHAIN_OBSERVABLES = {
    "mass": lambda vals, grid: mass_of_rows(vals, grid),
    "potential": lambda vals, grid: potential_of_rows(vals, grid),
}


def _run_segmented(config, checkpoint_path, checkpoint_every):
    """Drive a chain in segments, checkpointing between them.

    Segment boundaries carry the generator state and adaptation counters,
    so the concatenated output is bit-identical to a single run.
    """
    obs_parts = {name: [] for name in _CHAIN_OBSERVABLES}
    rng_state = None
    start = None
    start_step = 0
    carry = None
    result = None
    while start_step < config.n_steps:
        stop = config.n_steps
        if checkpoint_every:
            stop = min(config.n_steps, start_step + checkpoint_every)
        seg_cfg = ChainConfig(**{**config.__dict__, "n_steps": stop})
        result = run_mcmc_chain(
            seg_cfg,
            observables=_CHAIN_OBSERVABLES,
            rng_state=rng_state,
            start=start,
            start_step=start_step,
            carry=carry,
        )
        for name in obs_parts:
            if result.observables[name].size:
                obs_parts[name].append(result.observables[name])
        rng_state = result.generator_state
        start = result.final_state
        carry = result.carry
        start_step = stop
        if checkpoint_path and start_step < config.n_steps:
            write_checkpoint(
                checkpoint_path,
                config,
                start_step,
                start,
                rng_state,
                carry,
            )
    observables = {
        name: np.concatenate(parts) if parts else np.empty((0, config.n_chains))
        for name, parts in obs_parts.items()
    }
    return result, observables


def _cmd_sample(args):
    seeds = args.seed or [0]
    _check_seeds(seeds)
    out = _outdir(args)
    paths = []
    for seed in seeds:
        config = _chain_config_from_args(args, seed)
        ckpt = None
        if args.checkpoint:
            ckpt = os.path.join(out, "%s_seed%d.ckpt" % (args.name, seed))
        result, observables = _run_segmented(config, ckpt, args.checkpoint_every)
        if ckpt:
            write_checkpoint(
                ckpt,
                config,
                config.n_steps,
                result.final_state,
                result.generator_state,
                result.carry,
            )
        name = "%s_seed%d" % (args.name, seed)
        rows = []
        for t in range(observables["mass"].shape[0]):
            for c in range(config.n_chains):
                rows.append(
                    (
                        t,
                        c,
                        observables["mass"][t, c],
                        observables["potential"][t, c],
                    )
                )
        _write_csv(out, name + "_series", ("kept", "chain", "mass", "potential"), rows)
        cfg_dict = dict(config.__dict__)
        paths.append(
            _write_report(
                out,
                name,
                {
                    "acceptance_rate": result.acceptance_rate,
                    "beta_final": result.beta_final,
                    "steps_done": result.steps_done,
                    "mean_mass": float(np.mean(observables["mass"]))
                    if observables["mass"].size
                    else None,
                    "mean_potential": float(np.mean(observables["potential"]))
                    if observables["potential"].size
                    else None,
                    "checkpoint": ckpt,
                },
                cfg_dict,
                {"chain": seed},
            )
        )
    for p in paths:
        print(p)
    return 0


def _cmd_resume(args):
    result = resume_chain(args.checkpoint, observables=_CHAIN_OBSERVABLES)
    out = _outdir(args)
    name = args.name
    rows = []
    for t in range(result.observables["mass"].shape[0]):
        for c in range(result.config.n_chains):
            rows.append(
                (
                    t,
                    c,
                    result.observables["mass"][t, c],
                    result.observables["potential"][t, c],
                )
            )
    _write_csv(out, name + "_series", ("kept", "chain", "mass", "potential"), rows)
    path = _write_report(
        out,
        name,
        {
            "acceptance_rate": result.acceptance_rate,
            "steps_done": result.steps_done,
            "resumed_from": args.checkpoint,
        },
        dict(result.config.__dict__),
        {"chain": result.config.seed},
    )
    print(path)
    return 0


def _cmd_fluct(args):
    config = _chain_config_from_args(args, args.seed)
    config.keep_samples = True
    result = run_mcmc_chain(config)
    lam_torus = (args.big_l * args.mass_d / 4.0) ** 2
    profile = profile_from_closed_form(lam_torus, result.grid)
    g = bump_test_function(width=args.g_width, center=args.g_center)
    series = chain_fluctuation_pairings(result, profile, g, delta=args.delta)
    rep_re = char_func_estimate(series.re, g)
    rep_im = char_func_estimate(series.im, g)
    conc = concentration_report(
        result, profile, config.big_l * config.mass_d, delta=args.tube_delta
    )
    cfg_dict = dict(config.__dict__)
    cfg_dict.update({"g_width": args.g_width, "g_center": args.g_center})
    path = _write_report(
        _outdir(args),
        args.name,
        {
            "re": {
                "estimate": [rep_re.estimate.real, rep_re.estimate.imag],
                "target": rep_re.target,
                "deviation": rep_re.deviation,
                "stderr": rep_re.stderr,
                "ess": rep_re.ess,
            },
            "im": {
                "estimate": [rep_im.estimate.real, rep_im.estimate.imag],
                "target": rep_im.target,
                "deviation": rep_im.deviation,
                "stderr": rep_im.stderr,
                "ess": rep_im.ess,
            },
            "outside_fraction": series.n_outside / max(series.n_total, 1),
            "concentration": {
                "outside_fraction": conc.outside_fraction,
                "shell_fraction": conc.shell_fraction,
                "peak_median": conc.peak_median,
                "mean_distance_sq": conc.mean_distance_sq,
            },
        },
        cfg_dict,
        {"chain": args.seed},
    )
    print(path)
    return 0


def _cmd_free_energy(args):
    report = free_energy_estimate(
        args.big_l,
        args.mass_d,
        args.n_points,
        n_nodes=args.nodes,
        n_steps=args.steps,
        burn_in=args.burn_in,
        n_chains=args.chains,
        thin=args.thin,
        base_draws=args.base_draws,
        seed=args.seed,
    )
    config = {
        "experiment": "free-energy",
        "big_l": args.big_l,
        "mass_d": args.mass_d,
        "n_points": args.n_points,
        "nodes": args.nodes,
        "steps": args.steps,
        "seed": args.seed,
    }
    path = _write_report(
        _outdir(args),
        args.name,
        {
            "log_z": report.log_z,
            "per_volume": report.per_volume,
            "coupling_integral": report.coupling_integral,
            "base_log_prob": report.base_log_prob,
            "stderr": report.stderr,
            "nodes": [list(row) for row in report.nodes],
        },
        config,
        {
            "root": args.seed,
            "nodes": [args.seed + 1000 * i for i in range(args.nodes)],
            "base": args.seed + 999,
        },
    )
    print(path)
    return 0


def _cmd_oracle(args):
    grid = TorusGrid(n_points=args.n_points, half_length=args.half_length)
    report = smallscale_quadrature_oracle(
        grid,
        args.big_l,
        args.mass_d,
        tilt=args.tilt,
        n_draws=args.n_draws,
        seed=args.seed,
    )
    config = {
        "experiment": "oracle",
        "n_points": args.n_points,
        "half_length": args.half_length,
        "big_l": args.big_l,
        "mass_d": args.mass_d,
        "tilt": args.tilt,
        "n_draws": args.n_draws,
        "seed": args.seed,
    }
    path = _write_report(
        _outdir(args),
        args.name,
        {
            "mean_mass": report.mean_mass,
            "se_mass": report.se_mass,
            "mean_quartic": report.mean_quartic,
            "se_quartic": report.se_quartic,
            "ess": report.ess,
        },
        config,
        {"oracle": args.seed},
    )
    print(path)
    return 0


# ---------------------------------------------------------------------------
# config-file driver


_EXPERIMENTS = {
    "groundstate": (
        "_cmd_groundstate",
        {"mass_d": 1.0, "half_length": 20.0, "n_points": 2048, "tolerance": 1e-8},
    ),
    "spectrum": (
        "_cmd_spectrum",
        {"mass_d": 1.0, "half_length": 20.0, "n_points": 1024, "n_eigs": 6},
    ),
    "green": (
        "_cmd_green",
        {"mass_d": 1.0, "half_length": 32.0, "n_points": 1024},
    ),
    "gaussian-sector": (
        "_cmd_gaussian_sector",
        {
            "big_l": 16.0,
            "n_points": 2048,
            "g_width": 2.0,
            "g_center": 8.0,
            "n_draws": 4000,
            "seed": 7,
        },
    ),
    "sample": (
        "_cmd_sample",
        {
            "big_l": 8.0,
            "mass_d": 1.0,
            "n_points": 256,
            "steps": 20_000,
            "chains": 16,
            "tilt": 1.0,
            "burn_in": 2000,
            "thin": 50,
            "init": "soliton",
            "seed": [0],
            "checkpoint": False,
            "checkpoint_every": 0,
        },
    ),
    "fluct": (
        "_cmd_fluct",
        {
            "big_l": 8.0,
            "mass_d": 1.0,
            "n_points": 256,
            "steps": 40_000,
            "chains": 32,
            "tilt": 1.0,
            "burn_in": 5000,
            "thin": 200,
            "init": "soliton",
            "seed": 0,
            "delta": 1.5,
            "tube_delta": 0.5,
            "g_width": 2.0,
            "g_center": 8.0,
        },
    ),
    "free-energy": (
        "_cmd_free_energy",
        {
            "big_l": 8.0,
            "mass_d": 1.0,
            "n_points": 256,
            "nodes": 8,
            "steps": 60_000,
            "burn_in": 10_000,
            "chains": 32,
            "thin": 100,
            "base_draws": 500_000,
            "seed": 11,
        },
    ),
    "oracle": (
        "_cmd_oracle",
        {
            "n_points": 3,
            "half_length": 1.0,
            "big_l": 2.0,
            "mass_d": 1.0,
            "tilt": 1.0,
            "n_draws": 200_000,
            "seed": 1,
        },
    ),
}


def run_experiment(config):
    """Dispatch one experiment described by a config mapping; returns 0.

    Raises ConfigError for unknown experiments or parameters, which the
    CLI maps to exit code 2.
    """
    if not isinstance(config, dict):
        raise ConfigError("experiment config must be a JSON object")
    kind = config.get("experiment")
    if kind not in _EXPERIMENTS:
        raise ConfigError(
            "unknown experiment %r; choose from %s"
            % (kind, sorted(_EXPERIMENTS))
        )
    handler_name, defaults = _EXPERIMENTS[kind]
    params = dict(defaults)
    extra = {
        k: v
        for k, v in config.items()
        if k not in ("experiment", "name", "outdir")
    }
    unknown = set(extra) - set(defaults)
    if unknown:
        raise ConfigError("unknown parameters %s for %r" % (sorted(unknown), kind))
    params.update(extra)
    params["name"] = config.get("name", kind.replace("-", "_"))
    params["outdir"] = config.get("outdir")
    handler = globals()[handler_name]
    return handler(argparse.Namespace(**params))


def _cmd_run(args):
    try:
        with open(args.config) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("cannot read config: %s" % exc)
    return run_experiment(config)


# ---------------------------------------------------------------------------
# parser


def _add_common(p):
    p.add_argument("--name", default=None, help="output file stem")
    p.add_argument("--outdir", default=None, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="phi4lab",
        description="soliton Gibbs measure laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("groundstate", help="constrained soliton ground state")
    p.add_argument("--mass-d", type=float, default=1.0)
    p.add_argument("--half-length", type=float, default=20.0)
    p.add_argument("--n-points", type=int, default=2048)
    p.add_argument("--tolerance", type=float, default=1e-8)
    _add_common(p)
    p.set_defaults(func=_cmd_groundstate, name_default="groundstate")

    p = sub.add_parser("spectrum", help="linearized operator spectra")
    p.add_argument("--mass-d", type=float, default=1.0)
    p.add_argument("--half-length", type=float, default=20.0)
    p.add_argument("--n-points", type=int, default=1024)
    p.add_argument("--n-eigs", type=int, default=6)
    _add_common(p)
    p.set_defaults(func=_cmd_spectrum, name_default="spectrum")

    p = sub.add_parser("green", help="restricted Green function diagnostics")
    p.add_argument("--mass-d", type=float, default=1.0)
    p.add_argument("--half-length", type=float, default=32.0)
    p.add_argument("--n-points", type=int, default=1024)
    _add_common(p)
    p.set_defaults(func=_cmd_green, name_default="green")

    p = sub.add_parser(
        "gaussian-sector", help="sector-restricted Gaussian pairing tails"
    )
    p.add_argument("--big-l", type=float, default=16.0)
    p.add_argument("--n-points", type=int, default=2048)
    p.add_argument("--g-width", type=float, default=2.0)
    p.add_argument("--g-center", type=float, default=8.0)
    p.add_argument("--n-draws", type=int, default=4000)
    p.add_argument("--seed", type=int, default=7)
    _add_common(p)
    p.set_defaults(func=_cmd_gaussian_sector, name_default="gaussian_sector")

    p = sub.add_parser("sample", help="batched constrained-Gibbs chains")
    p.add_argument("--big-l", type=float, default=8.0)
    p.add_argument("--mass-d", type=float, default=1.0)
    p.add_argument("--n-points", type=int, default=256)
    p.add_argument("--steps", type=int, default=20_000)
    p.add_argument("--chains", type=int, default=16)
    p.add_argument("--tilt", type=float, default=1.0)
    p.add_argument("--burn-in", type=int, default=2000)
    p.add_argument("--thin", type=int, default=50)
    p.add_argument("--init", choices=("soliton", "free"), default="soliton")
    p.add_argument("--seed", type=int, action="append")
    p.add_argument("--checkpoint", action="store_true")
    p.add_argument("--checkpoint-every", type=int, default=0)
    _add_common(p)
    p.set_defaults(func=_cmd_sample, name_default="sample")

    p = sub.add_parser("resume", help="continue a checkpointed chain")
    p.add_argument("--checkpoint", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_resume, name_default="resume")

    p = sub.add_parser("fluct", help="fluctuation statistics of chain output")
    p.add_argument("--big-l", type=float, default=8.0)
    p.add_argument("--mass-d", type=float, default=1.0)
    p.add_argument("--n-points", type=int, default=256)
    p.add_argument("--steps", type=int, default=40_000)
    p.add_argument("--chains", type=int, default=32)
    p.add_argument("--tilt", type=float, default=1.0)
    p.add_argument("--burn-in", type=int, default=5000)
    p.add_argument("--thin", type=int, default=200)
    p.add_argument("--init", choices=("soliton", "free"), default="soliton")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta", type=float, default=1.5)
    p.add_argument("--tube-delta", type=float, default=0.5)
    p.add_argument("--g-width", type=float, default=2.0)
    p.add_argument("--g-center", type=float, default=8.0)
    _add_common(p)
    p.set_defaults(func=_cmd_fluct, name_default="fluct")

    p = sub.add_parser("free-energy", help="thermodynamic integration")
    p.add_argument("--big-l", type=float, default=8.0)
    p.add_argument("--mass-d", type=float, default=1.0)
    p.add_argument("--n-points", type=int, default=256)
    p.add_argument("--nodes", type=int, default=8)
    p.add_argument("--steps", type=int, default=60_000)
    p.add_argument("--burn-in", type=int, default=10_000)
    p.add_argument("--chains", type=int, default=32)
    p.add_argument("--thin", type=int, default=100)
    p.add_argument("--base-draws", type=int, default=500_000)
    p.add_argument("--seed", type=int, default=11)
    _add_common(p)
    p.set_defaults(func=_cmd_free_energy, name_default="free_energy")

    p = sub.add_parser("oracle", help="small-lattice importance-sampling reference")
    p.add_argument("--n-points", type=int, default=3)
    p.add_argument("--half-length", type=float, default=1.0)
    p.add_argument("--big-l", type=float, default=2.0)
    p.add_argument("--mass-d", type=float, default=1.0)
    p.add_argument("--tilt", type=float, default=1.0)
    p.add_argument("--n-draws", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=_cmd_oracle, name_default="oracle")

    p = sub.add_parser("run", help="drive any experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_run, name_default="run")

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "name", None) is None and hasattr(args, "name_default"):
        args.name = args.name_default
    try:
        return args.func(args)
    except ConfigError as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return 2
    except CheckpointSchemaError as exc:
        print("checkpoint schema error: %s" % exc, file=sys.stderr)
        return 2
    except CheckpointVersionError as exc:
        print("checkpoint version error: %s" % exc, file=sys.stderr)
        return 4
    except CheckpointTruncatedError as exc:
        print("checkpoint truncated: %s" % exc, file=sys.stderr)
        return 5
    except (
        SamplerDivergence,
        PositivityViolation,
        ConvergenceFailure,
        DegenerateProfileError,
        CheckpointNumericalError,
        UnreliableOracleError,
    ) as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
