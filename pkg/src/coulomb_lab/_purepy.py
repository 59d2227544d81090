"""Pure-numpy backend for the hot kernels.

The compiled twin (coulomb_lab._core) implements the same four entry points
with identical floating-point semantics: partner sums accumulate in ascending
``order`` position per particle, updates use the same expression shapes, and
the extension is compiled with -ffp-contract=off, so trajectories agree
bitwise across backends (scalar reductions agree to roundoff).
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def sde_path(
    pos0: np.ndarray,
    signs: np.ndarray,
    order: np.ndarray,
    sigma: float,
    gamma: float,
    eps: float,
    ell: float,
    dt: float,
    n_steps: int,
    noise: np.ndarray,
    record_idx: np.ndarray,
    alphas: np.ndarray,
    track_distances: bool,
    track_force: bool,
) -> dict:
    """Euler-Maruyama path of the (eps, ell)-regularized signed system.

    ``noise`` holds standard normals of shape (n_steps, N, 2); ``ell <= 0``
    disables the cutoff; ``record_idx`` is a sorted array of step indices in
    [0, n_steps] at which state and diagnostics are stored.  Pairwise moment
    integrands |x_i - x_j|^{alpha-2} (ordered-pair sum) and the force-field
    l1 norm are accumulated by the trapezoidal rule at full dt resolution.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        return _sde_path(
            pos0, signs, order, sigma, gamma, eps, ell, dt, n_steps, noise,
            record_idx, alphas, track_distances, track_force,
        )


def _sde_path(
    pos0, signs, order, sigma, gamma, eps, ell, dt, n_steps, noise,
    record_idx, alphas, track_distances, track_force,
) -> dict:
    n = pos0.shape[0]
    x = pos0.copy()
    use_phi = ell > 0.0
    n_alpha = len(alphas)
    need_pass1 = track_distances or use_phi or n_alpha > 0
    expo = (np.asarray(alphas, dtype=np.float64) - 2.0) / 2.0

    sig_sqdt = sigma * np.sqrt(dt)
    eps2 = eps * eps

    iu_i, iu_j = np.triu_indices(n, k=1)
    same_pair = signs[iu_i] == signs[iu_j]
    opp_pair = ~same_pair
    has_same = bool(same_pair.any())
    has_opp = bool(opp_pair.any())
    has_pair = iu_i.size > 0

    n_rec = len(record_idx)
    rec_pos = np.empty((n_rec, n, 2))
    rec_diag = np.full((n_rec, 6), np.nan)
    rec_sing = np.zeros(n_rec, dtype=np.int64)

    min_d2 = np.full(3, np.inf)
    moments = np.zeros(n_alpha)
    force_integral = 0.0
    singular_count = 0
    sing_since_rec = 0
    status = 0
    fail_step = -1

    F = np.zeros((n, 2))
    rec_cursor = 0

    for m in range(n_steps + 1):
        # pass 1: pairwise distances (minima, cutoff input, moment integrands)
        d2_all = d2_same = d2_opp = np.inf
        sing_step = 0
        mom_f = None
        if need_pass1 and has_pair:
            diff = x[iu_i] - x[iu_j]
            d2 = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1]
            d2_all = float(d2.min())
            if has_same:
                d2_same = float(d2[same_pair].min())
            if has_opp:
                d2_opp = float(d2[opp_pair].min())
            sing_step = int(np.count_nonzero(d2 == 0.0))
            if n_alpha:
                mom_f = 2.0 * np.array([np.sum(d2**e) for e in expo])
        if track_distances:
            min_d2[0] = min(min_d2[0], d2_all)
            min_d2[1] = min(min_d2[1], d2_same)
            min_d2[2] = min(min_d2[2], d2_opp)
        singular_count += sing_step
        sing_since_rec += sing_step

        if use_phi and np.isfinite(d2_same):
            v = 2.0 * ell * np.sqrt(d2_same) - 1.0
            phi = 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)
        else:
            phi = 1.0

        # pass 2: signed force field, partner sums in canonical label order
        F[:] = 0.0
        for jj in range(n):
            j = order[jj]
            dx = x[:, 0] - x[j, 0]
            dy = x[:, 1] - x[j, 1]
            den = dx * dx + dy * dy + eps2
            w = np.where(den > 0.0, (signs * signs[j]) / den, 0.0)
            w[j] = 0.0
            F[:, 0] += dx * w
            F[:, 1] += dy * w
        force_l1 = float(np.sum(np.sqrt(F[:, 0] ** 2 + F[:, 1] ** 2)))

        w_t = dt * (0.5 if (m == 0 or m == n_steps) else 1.0)
        if track_force:
            force_integral += w_t * force_l1
        if mom_f is not None:
            moments += w_t * mom_f

        if rec_cursor < n_rec and record_idx[rec_cursor] == m:
            rec_pos[rec_cursor] = x
            rec_diag[rec_cursor] = (
                np.sqrt(d2_all) if np.isfinite(d2_all) else np.nan,
                np.sqrt(d2_same) if np.isfinite(d2_same) else np.nan,
                np.sqrt(d2_opp) if np.isfinite(d2_opp) else np.nan,
                phi,
                gamma * phi * force_l1,
                force_integral,
            )
            rec_sing[rec_cursor] = sing_since_rec
            sing_since_rec = 0
            rec_cursor += 1

        if m == n_steps:
            break

        drift_scale = gamma * phi * dt
        x = x + sig_sqdt * noise[m] + drift_scale * F
        if not np.all(np.isfinite(x)):
            status = 1
            fail_step = m
            break

    return {
        "positions": rec_pos[:rec_cursor],
        "diag": rec_diag[:rec_cursor],
        "singular_events": rec_sing[:rec_cursor],
        "n_recorded": rec_cursor,
        "min_d": np.sqrt(min_d2),
        "moments": moments,
        "force_integral": force_integral,
        "singular_count": singular_count,
        "final_positions": x.copy(),
        "status": status,
        "fail_step": fail_step,
    }


def besq_em_batch(
    x0: float,
    delta: float,
    dt: float,
    n_steps: int,
    noise: np.ndarray,
    freeze: bool,
    hit_threshold: float,
    release_level: float,
) -> dict:
    """Clamped EM paths of dR = 2 sqrt(R) dbeta + delta dt, batched over rows.

    Returns per-path minima, terminal values, freeze step (first touch of 0,
    only when ``freeze``; -1 otherwise), first sub-``hit_threshold`` step and
    whether the path later reached ``release_level`` (post-hit separation).
    """
    n_paths = noise.shape[0]
    R = np.full(n_paths, float(x0))
    min_R = R.copy()
    frozen_step = np.full(n_paths, -1, dtype=np.int64)
    first_hit = np.full(n_paths, -1, dtype=np.int64)
    separated = np.zeros(n_paths, dtype=np.int64)
    if x0 <= hit_threshold:
        first_hit[:] = 0
    sq = np.sqrt(dt)
    delta_dt = delta * dt

    for m in range(n_steps):
        R = R + (2.0 * np.sqrt(R)) * (sq * noise[:, m]) + delta_dt
        nonpos = R <= 0.0
        if freeze:
            newly = nonpos & (frozen_step < 0)
            frozen_step[newly] = m + 1
        R = np.where(nonpos, 0.0, R)
        np.minimum(min_R, R, out=min_R)
        hit_now = (R <= hit_threshold) & (first_hit < 0)
        first_hit[hit_now] = m + 1
        separated[(first_hit >= 0) & (first_hit <= m) & (R >= release_level)] = 1

    return {
        "min_R": min_R,
        "final_R": R,
        "frozen_step": frozen_step,
        "first_hit_step": first_hit,
        "separated": separated,
    }


def besq_em_path(
    x0: float, delta: float, dt: float, n_steps: int, noise: np.ndarray, freeze: bool
) -> tuple[np.ndarray, int]:
    """Single clamped EM path; returns (values of length n_steps+1, freeze step)."""
    values = np.empty(n_steps + 1)
    values[0] = x0
    R = float(x0)
    frozen_step = -1
    sq = np.sqrt(dt)
    delta_dt = delta * dt
    for m in range(n_steps):
        if frozen_step >= 0:
            values[m + 1] = 0.0
            continue
        R = R + (2.0 * np.sqrt(R)) * (sq * noise[m]) + delta_dt
        if R <= 0.0:
            R = 0.0
            if freeze:
                frozen_step = m + 1
        values[m + 1] = R
    return values, frozen_step


def signed_force_fields(positions: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """F_i = sum_j b_j K(x_i - x_j) with the exact kernel, batched over axis 0.

    ``positions`` has shape (B, N, 2); the b_i factor is left to the caller
    (weak-form sums need b_i grad(phi) dot F_i).
    """
    B, n, _ = positions.shape
    out = np.empty((B, n, 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        for b in range(B):
            x = positions[b]
            diff = x[:, None, :] - x[None, :, :]
            r2 = diff[:, :, 0] ** 2 + diff[:, :, 1] ** 2
            w = np.where(r2 > 0.0, signs[None, :] / r2, 0.0)
            out[b, :, 0] = np.sum(diff[:, :, 0] * w, axis=1)
            out[b, :, 1] = np.sum(diff[:, :, 1] * w, axis=1)
    return out
