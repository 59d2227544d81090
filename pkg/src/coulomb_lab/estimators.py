"""Batch Monte Carlo orchestration and the statistical estimators.

A batch is n_paths independent simulate() calls on consecutive stream ids;
per-path summaries (distance minima over the whole path, pairwise-moment
integrals, snapshot positions) are reduced in path order, so results are
bit-identical for any --jobs value.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import backend
from ._stats import DegenerateError, Estimate, binomial_ci, mean_ci
from .model import DistanceMode, SignedConfiguration, SystemParams
from .noise import NoiseStream
from .sde import NonFiniteStateError, _record_indices, n_steps_for

__all__ = [
    "BatchResult",
    "ConfigError",
    "DegenerateError",
    "run_batch",
    "pairwise_moment",
    "collision_probability",
    "mean_abs_position",
    "confidence_interval",
]

_MIN_COL = {DistanceMode.All: 0, DistanceMode.SameSign: 1, DistanceMode.OppositeSign: 2}


class ConfigError(ValueError):
    """Requested quantity was not recorded during the batch run."""


@dataclass(frozen=True)
class BatchResult:
    """Per-path summaries of a batch, with everything needed downstream.

    ``positions`` holds snapshots (n_paths, n_times, N, 2) on the recording
    grid ``times``; minima and moment integrals are accumulated at full dt
    resolution inside the path kernel.  Moment integrals are the ordered-pair
    sums int_0^T sum_{i != j} |x_i - x_j|^{alpha-2} dt.
    """

    params: SystemParams = field(repr=False)
    signs: np.ndarray
    times: np.ndarray
    positions: np.ndarray
    min_d: np.ndarray            # (n_paths, 3): all / same / opp
    moments: dict                # alpha -> (n_paths,)
    force_integrals: np.ndarray  # (n_paths,)
    singular_counts: np.ndarray  # (n_paths,)
    seed: int
    base_seed: int

    @property
    def n_paths(self) -> int:
        return self.positions.shape[0]

    def terminal_mean_abs_position(self) -> np.ndarray:
        """Per-path mean over particles of |x_i(T)|."""
        return np.linalg.norm(self.positions[:, -1], axis=-1).mean(axis=-1)

    def final_config(self, path_index: int) -> SignedConfiguration:
        return SignedConfiguration(self.positions[path_index, -1], self.signs)

    def phi_sqrt1x2(self, time_index: int) -> np.ndarray:
        """Per-path particle average of sqrt(1 + |x|^2) at one snapshot."""
        p = self.positions[:, time_index]
        return np.sqrt(1.0 + np.sum(p * p, axis=-1)).mean(axis=-1)

    def time_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 0.5 * self.params.dt + 1e-12:
            raise ConfigError(f"t={t:g} is not on the recorded grid")
        return k

    def to_paths_csv(self, path, header_lines: tuple[str, ...] = ()) -> None:
        """Per-path summary CSV."""
        alphas = sorted(self.moments)
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(
                ["path", "min_d_all", "min_d_same", "min_d_opp", "force_integral",
                 "singular_events", "terminal_mean_abs"]
                + [f"moment_a{a:g}" for a in alphas]
            )
            term = self.terminal_mean_abs_position()
            for p in range(self.n_paths):
                row = [p]
                row += [f"{v:.12g}" for v in self.min_d[p]]
                row += [f"{self.force_integrals[p]:.12g}", int(self.singular_counts[p]),
                        f"{term[p]:.12g}"]
                row += [f"{self.moments[a][p]:.12g}" for a in alphas]
                w.writerow(row)


def _simulate_summary(args) -> dict:
    """One path worker; returns the raw kernel summary dict."""
    (initial, params, stream, record_idx, n_steps, alphas, track_distances) = args
    n = initial.n_particles
    order = np.argsort(stream.particle_labels(n), kind="stable").astype(np.intp)
    noise_arr = stream.block_normals(n, 0, n_steps)
    return backend.sde_path(
        initial.positions, initial.signs, order,
        params.sigma, params.gamma, params.epsilon,
        0.0 if params.ell is None else float(params.ell),
        params.dt, n_steps, noise_arr, record_idx,
        np.asarray(alphas, dtype=np.float64), track_distances, True,
    )


def run_batch(
    initial_sampler,
    params: SystemParams,
    n_paths: int,
    base_seed: int,
    *,
    seed: int = 0,
    record_every: int | None = None,
    alphas: tuple[float, ...] = (),
    track_distances: bool = True,
    jobs: int = 1,
) -> BatchResult:
    """n_paths independent paths on stream ids base_seed .. base_seed+n_paths-1.

    Deterministic given all inputs (including across ``jobs`` values: path
    summaries are reduced in path order).  Initial conditions are drawn from
    each path's own reserved generator segment.  ``record_every`` defaults to
    ~100 snapshots over the horizon.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    n_steps = n_steps_for(params)
    if record_every is None:
        record_every = max(1, n_steps // 100)
    record_idx = _record_indices(n_steps, record_every)
    params.warn_if_dt_coarse()

    streams = [NoiseStream(seed, base_seed + p) for p in range(n_paths)]
    initials = []
    for s in streams:
        cfg = initial_sampler.sample(s.generator(0))
        if cfg.n_particles != params.n_particles:
            raise ValueError("sampler N differs from params.n_particles")
        initials.append(cfg)

    work = [
        (initials[p], params, streams[p], record_idx, n_steps, alphas, track_distances)
        for p in range(n_paths)
    ]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_simulate_summary, work))
    else:
        results = [_simulate_summary(w) for w in work]

    for p, res in enumerate(results):
        if res["status"] != 0:
            raise NonFiniteStateError(res["fail_step"], res["fail_step"] * params.dt, p)

    signs = initials[0].signs.copy()
    return BatchResult(
        params=params,
        signs=signs,
        times=record_idx * params.dt,
        positions=np.stack([r["positions"] for r in results]),
        min_d=np.stack([r["min_d"] for r in results]),
        moments={a: np.array([r["moments"][k] for r in results])
                 for k, a in enumerate(alphas)},
        force_integrals=np.array([r["force_integral"] for r in results]),
        singular_counts=np.array([r["singular_count"] for r in results]),
        seed=seed,
        base_seed=base_seed,
    )


def pairwise_moment(batch: BatchResult, alpha: float) -> Estimate:
    """Monte Carlo estimate of (1/(N(N-1))) sum_{i != j} E int_0^T |X^i - X^j|^{alpha-2} dt."""
    if alpha not in batch.moments:
        raise ConfigError(f"alpha={alpha:g} was not recorded; available: {sorted(batch.moments)}")
    n = batch.params.n_particles
    return mean_ci(batch.moments[alpha] / (n * (n - 1)))


def collision_probability(batch: BatchResult, mode: DistanceMode, threshold: float) -> Estimate:
    """Fraction of paths whose running mode-distance minimum is <= threshold."""
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    if threshold <= batch.params.epsilon:
        import warnings

        warnings.warn(
            f"collision threshold {threshold:g} is at or below the regularization "
            f"scale epsilon={batch.params.epsilon:g}; estimates there are unreliable",
            RuntimeWarning,
            stacklevel=2,
        )
    col = batch.min_d[:, _MIN_COL[mode]]
    if np.all(np.isinf(col)):
        from .model import NoPairError

        raise NoPairError(f"no particle pair with mode {mode.name}")
    hits = int(np.count_nonzero(col <= threshold))
    return binomial_ci(hits, batch.n_paths)


def mean_abs_position(batch: BatchResult, t: float) -> Estimate:
    """Estimate of E sqrt(1 + |X_t^1|^2), averaged over particles per path.

    Exchangeability makes any particle representative; the particle average
    only reduces variance.
    """
    return mean_ci(batch.phi_sqrt1x2(batch.time_index(t)))


def confidence_interval(samples: np.ndarray) -> tuple[float, float]:
    """Sample mean and 1.96*std/sqrt(n) halfwidth; DegenerateError if n < 2."""
    est = mean_ci(samples)
    return est.estimate, est.ci
