"""Experiment runner: every acceptance study as one reproducible command.

Commands: simulate, bessel-scan, collision-scan, drift-bound, meanfield,
weakform.  Each takes --config <toml>, --out <dir>, --jobs <n>, --seed <u64>;
outputs are CSV/JSON with a header comment carrying the config hash and
generator/backend versions.  Exit codes: 0 ok, 2 config error, 3 runtime
error, with a machine-readable error JSON on stdout.  Log level comes from
COULOMB_LAB_LOG.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import bessel as bes
from . import estimators as est
from . import meanfield as mf
from .config import ConfigError, ExperimentConfig
from .meanfield import CFLError, OutOfDomainError
from .model import DistanceMode, SystemParams
from .noise import NoiseStream
from .samplers import IIDGaussianNeutral
from .sde import NonFiniteStateError, simulate

logger = logging.getLogger("coulomb_lab")

_MODE = {"all": DistanceMode.All, "same": DistanceMode.SameSign, "opp": DistanceMode.OppositeSign}


def _write_csv(path, header_lines, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        w.writerows(rows)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(cfg: ExperimentConfig, outdir: Path, jobs: int, seed: int) -> None:
    params = cfg.system_params()
    sampler = cfg.initial_sampler()
    base_seed = int(cfg.get("estimators", "base_seed", 0))
    record_every = int(cfg.get("estimators", "record_every", 1))
    alphas = tuple(cfg.get("estimators", "alphas", []))
    stream = NoiseStream(seed, base_seed)
    initial = sampler.sample(stream.generator(0))
    traj = simulate(initial, params, stream, record_every, alphas=alphas)
    hdr = cfg.header_lines()
    traj.to_csv(outdir / "trajectory.csv", hdr)
    traj.diagnostics_to_csv(outdir / "diagnostics.csv", hdr)
    logger.info("wrote %s and %s", outdir / "trajectory.csv", outdir / "diagnostics.csv")


def _dedupe(points: list, label: str) -> list:
    seen = set()
    out = []
    for p in points:
        if p in seen:
            warnings.warn(f"duplicate {label} scan point {p!r} dropped", RuntimeWarning)
            continue
        seen.add(p)
        out.append(p)
    return out


def cmd_bessel_scan(cfg: ExperimentConfig, outdir: Path, jobs: int, seed: int) -> None:
    deltas = list(cfg.get("scan", "deltas", []))
    xs = cfg.get("scan", "x", 1.0)
    xs = list(xs) if isinstance(xs, list) else [xs]
    thresholds = list(cfg.get("scan", "thresholds", []))
    horizon = float(cfg.get("scan", "horizon", 1.0))
    dt = cfg.get("scan", "dt", None)
    n_paths = int(cfg.get("scan", "n_paths"))
    base_seed = int(cfg.get("estimators", "base_seed", 0))
    if n_paths < 100 and (deltas and thresholds):
        raise ConfigError("scan.n_paths must be >= 100", key="scan.n_paths")

    points = _dedupe([(d, x, thr) for d in deltas for x in xs for thr in thresholds],
                     "bessel")
    rows = []
    for k, (d, x, thr) in enumerate(points):
        stream = NoiseStream(seed, base_seed + k)
        r = bes.zero_hit_probability(
            bes.BesselSpec(d, x), horizon, thr, n_paths, stream,
            dt=None if dt is None else float(dt),
        )
        rows.append([_fmt(d), _fmt(x), _fmt(thr), _fmt(r.estimate), _fmt(r.ci)])
    _write_csv(outdir / "hits.csv", cfg.header_lines(),
               ["delta", "x", "threshold", "estimate", "ci"], rows)

    times = cfg.get("scan", "moment_times", [])
    if times:
        n_draws = int(cfg.get("scan", "moment_draws", 100_000))
        mrows = []
        for k, (d, x) in enumerate(_dedupe([(d, x) for d in deltas for x in xs], "moment")):
            if d <= 0:
                continue
            spec = bes.BesselSpec(d, x)
            for t in times:
                draws = bes.sample_besq_exact(spec, float(t), NoiseStream(seed, 10_000 + k),
                                              size=n_draws)
                mean_t, var_t = bes.besq_mean_var(spec, float(t))
                m, mci = est.confidence_interval(draws)
                # CI for the variance via the delta method on 2nd/4th moments
                c = draws - draws.mean()
                var = float(np.mean(c * c) * n_draws / (n_draws - 1))
                var_se = float(np.sqrt(max(np.mean(c**4) - np.mean(c * c) ** 2, 0.0) / n_draws))
                mrows.append([_fmt(d), _fmt(x), _fmt(float(t)), n_draws,
                              _fmt(m), _fmt(mci), _fmt(var), _fmt(1.96 * var_se),
                              _fmt(mean_t), _fmt(var_t)])
        _write_csv(outdir / "moments.csv", cfg.header_lines(),
                   ["delta", "x", "t", "n_draws", "mean", "mean_ci",
                    "var", "var_ci", "mean_theory", "var_theory"], mrows)


_COLLISION_COLS = [
    "engine", "gamma_over_sigma2", "epsilon", "mode", "threshold",
    "estimate", "ci_lo", "ci_hi",
    "frozen_fraction", "frozen_lo", "frozen_hi",
    "separation_fraction", "separation_lo", "separation_hi", "n_paths",
]


def cmd_collision_scan(cfg: ExperimentConfig, outdir: Path, jobs: int, seed: int) -> None:
    engine = cfg.get("scan", "engine", "bessel")
    ratios = _dedupe(list(cfg.get("scan", "gamma_over_sigma2")), "gamma/sigma^2")
    thresholds = list(cfg.get("scan", "thresholds"))
    n_paths = int(cfg.get("scan", "n_paths"))
    base_seed = int(cfg.get("estimators", "base_seed", 0))
    params = cfg.system_params()
    hdr = cfg.header_lines()
    rows = []

    if engine == "bessel":
        distance = float(cfg.get("scan", "start_distance", 0.2))
        release = float(cfg.get("scan", "release_factor", 4.0))
        dt = float(cfg.get("scan", "dt", params.dt))
        for k, g in enumerate(ratios):
            gamma = g * params.sigma**2
            for thr in thresholds:
                r_thr = thr * thr / (2.0 * params.sigma**2)  # distance -> R units
                batch = bes.two_particle_batch(
                    params.sigma, gamma, np.array([distance, 0.0]),
                    params.horizon, dt, n_paths, NoiseStream(seed, base_seed + k),
                    hit_threshold=r_thr, release_factor=release,
                )
                sep = batch.separated_given_hit
                rows.append([
                    "bessel", _fmt(g), "", "opp", _fmt(thr),
                    _fmt(batch.hit.estimate), _fmt(batch.hit.lo), _fmt(batch.hit.hi),
                    _fmt(batch.frozen.estimate), _fmt(batch.frozen.lo), _fmt(batch.frozen.hi),
                    _fmt(sep.estimate if sep else None),
                    _fmt(sep.lo if sep else None), _fmt(sep.hi if sep else None),
                    n_paths,
                ])
    elif engine == "sde":
        epsilons = list(cfg.get("scan", "epsilons", [params.epsilon]))
        modes = list(cfg.get("scan", "modes", ["opp", "same"]))
        sampler = cfg.initial_sampler()
        ks_times = list(cfg.get("scan", "ks_times", []))
        ks_rows = []
        run = 0
        for g in ratios:
            for eps in epsilons:
                p = SystemParams(
                    sigma=params.sigma, gamma=g * params.sigma**2,
                    n_particles=params.n_particles, epsilon=float(eps),
                    ell=params.ell, dt=params.dt, horizon=params.horizon,
                )
                batch = est.run_batch(
                    sampler, p, n_paths, base_seed + 100_000 * run, seed=seed, jobs=jobs
                )
                run += 1
                for mode in modes:
                    for thr in thresholds:
                        r = est.collision_probability(batch, _MODE[mode], float(thr))
                        rows.append(["sde", _fmt(g), _fmt(float(eps)), mode, _fmt(thr),
                                     _fmt(r.estimate), _fmt(r.lo), _fmt(r.hi),
                                     "", "", "", "", "", "", n_paths])
                if ks_times and p.n_particles == 2:
                    delta = bes.dimension_from_params(p.sigma, p.gamma)
                    d0 = batch.positions[0, 0, 0] - batch.positions[0, 0, 1]
                    r0 = float(np.sum(d0 * d0)) / (2 * p.sigma**2)
                    from scipy.stats import ks_2samp

                    for t in ks_times:
                        k_t = batch.time_index(float(t))
                        diff = batch.positions[:, k_t, 0] - batch.positions[:, k_t, 1]
                        R = np.sum(diff * diff, axis=1) / (2 * p.sigma**2)
                        exact = bes.sample_besq_exact(
                            bes.BesselSpec(delta, r0), float(t),
                            NoiseStream(seed, 77_000 + run), size=2 * n_paths,
                        )
                        ks_rows.append([_fmt(float(t)), _fmt(delta),
                                        _fmt(float(ks_2samp(R, exact).statistic)), n_paths])
        if ks_rows:
            _write_csv(outdir / "ks.csv", hdr, ["t", "delta", "ks_distance", "n_paths"], ks_rows)
    else:
        raise ConfigError("scan.engine must be 'bessel' or 'sde'", key="scan.engine")

    _write_csv(outdir / "collisions.csv", hdr, _COLLISION_COLS, rows)


def cmd_drift_bound(cfg: ExperimentConfig, outdir: Path, jobs: int, seed: int) -> None:
    params = cfg.system_params()
    sampler = cfg.initial_sampler()
    alphas = tuple(float(a) for a in cfg.get("estimators", "alphas"))
    n_paths = int(cfg.get("estimators", "n_paths"))
    base_seed = int(cfg.get("estimators", "base_seed", 0))
    beta0 = float(cfg.get("estimators", "beta0", 0.5))
    e_abs_x0 = float(cfg.get("estimators", "e_abs_x0_bound", 1.0))
    bound_times = list(cfg.get("estimators", "bound_times", [0.5, 1.0]))
    record_every = cfg.get("estimators", "record_every", None)

    n, s2, T = params.n_particles, params.sigma**2, params.horizon
    if min(getattr(sampler, "n_particles", n), n) != n:
        raise ConfigError("sampler N differs from params.n_particles")
    for a in alphas:
        if not (2 * params.gamma * (n - 1) / s2 < a < 1):
            raise ConfigError(
                f"alpha={a:g} outside (2*gamma*(N-1)/sigma^2, 1) = "
                f"({2 * params.gamma * (n - 1) / s2:g}, 1)"
            )

    batch = est.run_batch(
        sampler, params, n_paths, base_seed, seed=seed, alphas=alphas,
        record_every=None if record_every is None else int(record_every), jobs=jobs,
    )
    hdr = cfg.header_lines()
    phash = cfg.config_hash()
    rows = []
    summary = {"passes": {}, "values": {}}

    for a in alphas:
        estm = est.pairwise_moment(batch, a)
        delta = a * s2 - 2 * params.gamma * (n - 1)
        rhs = (2 * np.sqrt(2.0) / (a * delta * beta0)) * (1 + 1.25 * s2 * T + e_abs_x0)
        ok = estm.hi <= rhs
        rows.append([f"pairwise_moment_a{a:g}", _fmt(estm.estimate), _fmt(estm.lo),
                     _fmt(estm.hi), n_paths, phash])
        rows.append([f"moment_bound_rhs_a{a:g}", _fmt(rhs), _fmt(rhs), _fmt(rhs), 0, phash])
        summary["passes"][f"moment_bound_a{a:g}"] = bool(ok)
        summary["values"][f"moment_a{a:g}"] = {"estimate": estm.estimate, "hi": estm.hi,
                                               "rhs": rhs}

    n_minus = int(np.sum(batch.signs < 0))
    phi0 = est.mean_abs_position(batch, 0.0)
    for t in bound_times:
        et = est.mean_abs_position(batch, float(t))
        bound = (n / n_minus) * phi0.hi + (n / n_minus) * (
            s2 + params.gamma * (n - 1) / 2.0
        ) * float(t)
        ok = et.hi <= bound
        rows.append([f"mean_abs_position_t{t:g}", _fmt(et.estimate), _fmt(et.lo),
                     _fmt(et.hi), n_paths, phash])
        rows.append([f"apriori_bound_t{t:g}", _fmt(bound), _fmt(bound), _fmt(bound), 0, phash])
        summary["passes"][f"apriori_bound_t{t:g}"] = bool(ok)
        summary["values"][f"mean_abs_t{t:g}"] = {"estimate": et.estimate, "hi": et.hi,
                                                 "bound": bound}

    _write_csv(outdir / "estimates.csv", hdr,
               ["name", "estimate", "ci_lo", "ci_hi", "n_paths", "params_hash"], rows)
    batch.to_paths_csv(outdir / "paths.csv", hdr)
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)


def _meanfield_common(cfg: ExperimentConfig):
    sigma = float(cfg.get("params", "sigma"))
    gammabar = float(cfg.get("meanfield", "gammabar"))
    nu = float(cfg.get("meanfield", "nu", sigma * sigma / 2.0))
    grid = mf.Grid2D(float(cfg.get("meanfield", "grid_halfwidth")),
                     int(cfg.get("meanfield", "grid_m")))
    return sigma, gammabar, nu, grid


def cmd_meanfield(cfg: ExperimentConfig, outdir: Path, jobs: int, seed: int) -> None:
    sigma, gammabar, nu, grid = _meanfield_common(cfg)
    if not sigma * sigma > 2.0 * gammabar:
        raise ConfigError(
            f"mean-field limit needs sigma^2 > 2*gammabar "
            f"(got sigma^2={sigma * sigma:g}, 2*gammabar={2 * gammabar:g})"
        )
    schedule = [int(v) for v in cfg.get("meanfield", "n_schedule")]
    if any(b <= a for a, b in zip(schedule, schedule[1:])) or not schedule:
        raise ConfigError("meanfield.n_schedule must be strictly increasing and nonempty")
    if any(v % 2 for v in schedule):
        raise ConfigError("meanfield.n_schedule entries must be even (neutral system)")
    n_paths = int(cfg.get("meanfield", "n_paths"))
    bandwidth = float(cfg.get("meanfield", "bandwidth"))
    scale = float(cfg.get("initial", "scale", 0.5))
    pde_dt = float(cfg.get("meanfield", "pde_dt", 2e-3))
    base = cfg.system_params()
    pseed = int(cfg.get("estimators", "base_seed", 0))
    horizon = base.horizon
    fam = mf.weakform_family()
    hdr = cfg.header_lines()

    pde = mf.solve_pde(
        mf.gaussian_pair(grid, scale * scale), gammabar, nu, pde_dt, horizon,
        record_every=max(1, int(round(horizon / pde_dt)) // 50),
    )
    target = mf.smooth_pair(pde.states[-1], bandwidth)
    pde.summary_to_csv(outdir / "pde_summary.csv", hdr)
    for species in ("plus", "minus"):
        mf.save_density_snapshot(outdir / f"rho_{species}_final.bin",
                                 pde.states[-1], horizon, species)

    conv_rows = []
    res_rows = []
    for j, n in enumerate(schedule):
        params = SystemParams(
            sigma=sigma, gamma=gammabar / n, n_particles=n,
            epsilon=base.epsilon, ell=None, dt=base.dt, horizon=horizon,
        )
        sampler = IIDGaussianNeutral(n, scale)
        batch = est.run_batch(
            sampler, params, n_paths, pseed + 1_000_000 * j, seed=seed,
            track_distances=False, jobs=jobs,
        )
        acc_p = np.zeros((grid.resolution, grid.resolution))
        acc_m = np.zeros_like(acc_p)
        for p in range(n_paths):
            dp = mf.empirical_density(batch.final_config(p), grid, bandwidth)
            acc_p += dp.rho_plus
            acc_m += dp.rho_minus
        avg = mf.GridDensityPair(grid, acc_p / n_paths, acc_m / n_paths)
        bl = mf.bl_distance(avg, target, grid)

        absres = np.empty((n_paths, len(fam)))
        for p in range(n_paths):
            path = mf.EmpiricalPath.from_batch(batch, p)
            absres[p] = np.abs(mf.weak_form_residuals(path, horizon, fam, gammabar, nu))
        w_mean = float(absres.mean())
        conv_rows.append([n, _fmt(bl), _fmt(w_mean)])
        for k, phi in enumerate(fam):
            res_rows.append([n, phi.id, _fmt(horizon), _fmt(float(absres[:, k].mean()))])
        logger.info("N=%d: bl=%.5g w=%.5g", n, bl, w_mean)

    _write_csv(outdir / "convergence.csv", hdr, ["N", "bl_distance", "w_residual"], conv_rows)
    _write_csv(outdir / "residuals.csv", hdr, ["N", "phi_id", "T", "residual"], res_rows)

    ns = np.array([r[0] for r in conv_rows], dtype=float)
    ws = np.array([float(r[2]) for r in conv_rows])
    slope = float(np.polyfit(np.log(ns), np.log(ws), 1)[0]) if len(ns) >= 2 else float("nan")
    with open(outdir / "summary.json", "w") as fh:
        json.dump({"w_slope": slope,
                   "bl": {str(int(a)): float(b) for a, b, _ in conv_rows}}, fh, indent=2)


def cmd_weakform(cfg: ExperimentConfig, outdir: Path, jobs: int, seed: int) -> None:
    sigma, gammabar, nu, grid = _meanfield_common(cfg)
    variance = float(cfg.get("meanfield", "initial_variance", 0.04))
    offset = float(cfg.get("meanfield", "species_offset", 0.0))
    pde_dt = float(cfg.get("meanfield", "pde_dt", 2e-3))
    horizon = float(cfg.get("params", "horizon"))
    init = mf.gaussian_pair(
        grid, variance, center=(-offset / 2, 0.0), center_minus=(offset / 2, 0.0)
    )
    path = mf.solve_pde(init, gammabar, nu, pde_dt, horizon,
                        record_every=max(1, int(round(horizon / pde_dt)) // 100))
    hdr = cfg.header_lines()
    path.summary_to_csv(outdir / "pde_summary.csv", hdr)
    for species in ("plus", "minus"):
        mf.save_density_snapshot(outdir / f"rho_{species}_final.bin",
                                 path.states[-1], horizon, species)

    fam = tuple(
        mf.TestFunction(p, s)
        for p in mf.spatial_profiles()
        for s in ((1.0, 0.0), (0.0, 1.0))
    )
    res = mf.weak_form_residuals(path, horizon, fam, gammabar, nu)
    _write_csv(outdir / "residuals.csv", hdr, ["N", "phi_id", "T", "residual"],
               [["pde", phi.id, _fmt(horizon), _fmt(float(r))] for phi, r in zip(fam, res)])

    summary = {"max_abs_residual": float(np.max(np.abs(res)))}
    if gammabar == 0.0:
        vT = variance + 2 * nu * horizon
        exact = mf.gaussian_pair(grid, vT)
        l1 = float(np.abs(path.states[-1].total - exact.total).sum() * grid.cell_area)
        summary["heat_l1_error"] = l1
        summary["mass_drift"] = float(
            abs(path.states[-1].mass_plus - path.states[0].mass_plus)
            + abs(path.states[-1].mass_minus - path.states[0].mass_minus)
        )
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)


_COMMANDS = {
    "simulate": cmd_simulate,
    "bessel-scan": cmd_bessel_scan,
    "collision-scan": cmd_collision_scan,
    "drift-bound": cmd_drift_bound,
    "meanfield": cmd_meanfield,
    "weakform": cmd_weakform,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coulomb-lab",
        description="Signed 2D Coulomb particle laboratory: simulation, "
                    "Bessel references, collision/moment scans, mean-field studies.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--out", default=None, help="output directory (default from config)")
        p.add_argument("--jobs", type=int, default=1, help="path-level parallelism")
        p.add_argument("--seed", type=int, default=0, help="global noise seed (u64)")
    return parser


def _emit_error(code: int, exc: Exception) -> None:
    payload = {"error": {"type": type(exc).__name__, "message": str(exc), "exit_code": code}}
    key = getattr(exc, "key", None)
    if key:
        payload["error"]["key"] = key
    print(json.dumps(payload))
    print(f"error: {exc}", file=sys.stderr)


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("COULOMB_LAB_LOG", "WARNING").upper())
    args = _build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.from_path(args.config)
        declared = cfg.command()
        if declared is not None and declared != args.cmd:
            raise ConfigError(f"config declares command={declared!r}, invoked {args.cmd!r}",
                              key="command")
        outdir = Path(cfg.output_dir(args.out))
        outdir.mkdir(parents=True, exist_ok=True)
        _COMMANDS[args.cmd](cfg, outdir, jobs=max(1, args.jobs), seed=args.seed)
        return 0
    except OSError as exc:
        _emit_error(2, exc)
        return 2
    except (ConfigError, ValueError) as exc:
        _emit_error(2, exc)
        return 2
    except (NonFiniteStateError, CFLError, OutOfDomainError, RuntimeError) as exc:
        _emit_error(3, exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
