# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled backend for the hot kernels.

Twin of coulomb_lab._purepy: same entry points, same floating-point
expression order (force sums accumulate partner terms in ascending ``order``
position; compiled with -ffp-contract=off), so trajectories match the
fallback bitwise.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, NAN, isfinite, pow, sqrt

cnp.import_array()

BACKEND_NAME = "cython"


def sde_path(
    double[:, ::1] pos0,
    double[::1] signs,
    cnp.intp_t[::1] order,
    double sigma,
    double gamma,
    double eps,
    double ell,
    double dt,
    Py_ssize_t n_steps,
    double[:, :, ::1] noise,
    cnp.int64_t[::1] record_idx,
    double[::1] alphas,
    bint track_distances,
    bint track_force,
):
    """See coulomb_lab._purepy.sde_path."""
    cdef Py_ssize_t n = pos0.shape[0]
    cdef Py_ssize_t n_alpha = alphas.shape[0]
    cdef Py_ssize_t n_rec = record_idx.shape[0]
    cdef bint use_phi = ell > 0.0
    cdef bint need_pass1 = track_distances or use_phi or n_alpha > 0

    cdef double sig_sqdt = sigma * sqrt(dt)
    cdef double eps2 = eps * eps

    x_arr = np.array(pos0, dtype=np.float64, copy=True)
    F_arr = np.zeros((n, 2))
    rec_pos_arr = np.empty((n_rec, n, 2))
    rec_diag_arr = np.full((n_rec, 6), np.nan)
    rec_sing_arr = np.zeros(n_rec, dtype=np.int64)
    mom_arr = np.zeros(max(n_alpha, 1))
    mom_f_arr = np.zeros(max(n_alpha, 1))
    expo_arr = (np.asarray(alphas, dtype=np.float64) - 2.0) / 2.0
    if n_alpha == 0:
        expo_arr = np.zeros(1)

    cdef double[:, ::1] x = x_arr
    cdef double[:, ::1] F = F_arr
    cdef double[:, :, ::1] rec_pos = rec_pos_arr
    cdef double[:, ::1] rec_diag = rec_diag_arr
    cdef cnp.int64_t[::1] rec_sing = rec_sing_arr
    cdef double[::1] moments = mom_arr
    cdef double[::1] mom_f = mom_f_arr
    cdef double[::1] expo = expo_arr

    cdef double min_d2_all = INFINITY, min_d2_same = INFINITY, min_d2_opp = INFINITY
    cdef double d2_all, d2_same, d2_opp
    cdef double force_integral = 0.0, force_l1, phi, v, w_t, drift_scale
    cdef double dx, dy, d2, den, w, fx, fy
    cdef Py_ssize_t m, i, j, jj, a, rec_cursor = 0
    cdef Py_ssize_t singular_count = 0, sing_since_rec = 0, sing_step
    cdef int status = 0
    cdef Py_ssize_t fail_step = -1
    cdef bint same, nonfinite

    with nogil:
        for m in range(n_steps + 1):
            d2_all = INFINITY
            d2_same = INFINITY
            d2_opp = INFINITY
            sing_step = 0
            for a in range(n_alpha):
                mom_f[a] = 0.0
            if need_pass1:
                for i in range(n):
                    for j in range(i + 1, n):
                        dx = x[i, 0] - x[j, 0]
                        dy = x[i, 1] - x[j, 1]
                        d2 = dx * dx + dy * dy
                        same = signs[i] == signs[j]
                        if d2 < d2_all:
                            d2_all = d2
                        if same:
                            if d2 < d2_same:
                                d2_same = d2
                        else:
                            if d2 < d2_opp:
                                d2_opp = d2
                        if d2 == 0.0:
                            sing_step += 1
                        for a in range(n_alpha):
                            mom_f[a] += 2.0 * pow(d2, expo[a])
            if track_distances:
                if d2_all < min_d2_all:
                    min_d2_all = d2_all
                if d2_same < min_d2_same:
                    min_d2_same = d2_same
                if d2_opp < min_d2_opp:
                    min_d2_opp = d2_opp
            singular_count += sing_step
            sing_since_rec += sing_step

            if use_phi and d2_same != INFINITY:
                v = 2.0 * ell * sqrt(d2_same) - 1.0
                phi = 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)
            else:
                phi = 1.0

            force_l1 = 0.0
            for i in range(n):
                fx = 0.0
                fy = 0.0
                for jj in range(n):
                    j = order[jj]
                    if j == i:
                        continue
                    dx = x[i, 0] - x[j, 0]
                    dy = x[i, 1] - x[j, 1]
                    den = dx * dx + dy * dy + eps2
                    if den > 0.0:
                        w = (signs[i] * signs[j]) / den
                        fx += dx * w
                        fy += dy * w
                F[i, 0] = fx
                F[i, 1] = fy
                force_l1 += sqrt(fx * fx + fy * fy)

            w_t = dt * (0.5 if (m == 0 or m == n_steps) else 1.0)
            if track_force:
                force_integral += w_t * force_l1
            for a in range(n_alpha):
                moments[a] += w_t * mom_f[a]

            if rec_cursor < n_rec and record_idx[rec_cursor] == m:
                for i in range(n):
                    rec_pos[rec_cursor, i, 0] = x[i, 0]
                    rec_pos[rec_cursor, i, 1] = x[i, 1]
                rec_diag[rec_cursor, 0] = sqrt(d2_all) if d2_all != INFINITY else NAN
                rec_diag[rec_cursor, 1] = sqrt(d2_same) if d2_same != INFINITY else NAN
                rec_diag[rec_cursor, 2] = sqrt(d2_opp) if d2_opp != INFINITY else NAN
                rec_diag[rec_cursor, 3] = phi
                rec_diag[rec_cursor, 4] = gamma * phi * force_l1
                rec_diag[rec_cursor, 5] = force_integral
                rec_sing[rec_cursor] = sing_since_rec
                sing_since_rec = 0
                rec_cursor += 1

            if m == n_steps:
                break

            drift_scale = gamma * phi * dt
            nonfinite = False
            for i in range(n):
                x[i, 0] = x[i, 0] + sig_sqdt * noise[m, i, 0] + drift_scale * F[i, 0]
                x[i, 1] = x[i, 1] + sig_sqdt * noise[m, i, 1] + drift_scale * F[i, 1]
                if not (isfinite(x[i, 0]) and isfinite(x[i, 1])):
                    nonfinite = True
            if nonfinite:
                status = 1
                fail_step = m
                break

    return {
        "positions": rec_pos_arr[:rec_cursor],
        "diag": rec_diag_arr[:rec_cursor],
        "singular_events": rec_sing_arr[:rec_cursor],
        "n_recorded": rec_cursor,
        "min_d": np.sqrt(np.array([min_d2_all, min_d2_same, min_d2_opp])),
        "moments": mom_arr[:n_alpha],
        "force_integral": force_integral,
        "singular_count": singular_count,
        "final_positions": x_arr.copy(),
        "status": status,
        "fail_step": fail_step,
    }


def besq_em_batch(
    double x0,
    double delta,
    double dt,
    Py_ssize_t n_steps,
    double[:, ::1] noise,
    bint freeze,
    double hit_threshold,
    double release_level,
):
    """See coulomb_lab._purepy.besq_em_batch."""
    cdef Py_ssize_t n_paths = noise.shape[0]
    min_arr = np.empty(n_paths)
    fin_arr = np.empty(n_paths)
    frz_arr = np.full(n_paths, -1, dtype=np.int64)
    hit_arr = np.full(n_paths, -1, dtype=np.int64)
    sep_arr = np.zeros(n_paths, dtype=np.int64)
    cdef double[::1] min_R = min_arr
    cdef double[::1] final_R = fin_arr
    cdef cnp.int64_t[::1] frozen_step = frz_arr
    cdef cnp.int64_t[::1] first_hit = hit_arr
    cdef cnp.int64_t[::1] separated = sep_arr

    cdef double sq = sqrt(dt)
    cdef double delta_dt = delta * dt
    cdef double R, mn
    cdef Py_ssize_t p, m
    cdef cnp.int64_t fh, fz, sep

    with nogil:
        for p in range(n_paths):
            R = x0
            mn = x0
            fh = 0 if x0 <= hit_threshold else -1
            fz = -1
            sep = 0
            for m in range(n_steps):
                if fz >= 0:
                    break
                R = R + (2.0 * sqrt(R)) * (sq * noise[p, m]) + delta_dt
                if R <= 0.0:
                    if freeze and fz < 0:
                        fz = m + 1
                    R = 0.0
                if R < mn:
                    mn = R
                if fh < 0:
                    if R <= hit_threshold:
                        fh = m + 1
                elif fh <= m and R >= release_level:
                    sep = 1
            min_R[p] = mn
            final_R[p] = 0.0 if fz >= 0 else R
            frozen_step[p] = fz
            first_hit[p] = fh
            separated[p] = sep

    return {
        "min_R": min_arr,
        "final_R": fin_arr,
        "frozen_step": frz_arr,
        "first_hit_step": hit_arr,
        "separated": sep_arr,
    }


def besq_em_path(
    double x0, double delta, double dt, Py_ssize_t n_steps, double[::1] noise, bint freeze
):
    """See coulomb_lab._purepy.besq_em_path."""
    values_arr = np.empty(n_steps + 1)
    cdef double[::1] values = values_arr
    cdef double R = x0
    cdef double sq = sqrt(dt)
    cdef double delta_dt = delta * dt
    cdef Py_ssize_t m, frozen_step = -1
    values[0] = x0
    with nogil:
        for m in range(n_steps):
            if frozen_step >= 0:
                values[m + 1] = 0.0
                continue
            R = R + (2.0 * sqrt(R)) * (sq * noise[m]) + delta_dt
            if R <= 0.0:
                R = 0.0
                if freeze:
                    frozen_step = m + 1
            values[m + 1] = R
    return values_arr, int(frozen_step)


def signed_force_fields(double[:, :, ::1] positions, double[::1] signs):
    """See coulomb_lab._purepy.signed_force_fields."""
    cdef Py_ssize_t B = positions.shape[0]
    cdef Py_ssize_t n = positions.shape[1]
    out_arr = np.empty((B, n, 2))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t b, i, j
    cdef double dx, dy, r2, w, fx, fy
    with nogil:
        for b in range(B):
            for i in range(n):
                fx = 0.0
                fy = 0.0
                for j in range(n):
                    dx = positions[b, i, 0] - positions[b, j, 0]
                    dy = positions[b, i, 1] - positions[b, j, 1]
                    r2 = dx * dx + dy * dy
                    if r2 > 0.0:
                        w = signs[j] / r2
                        fx += dx * w
                        fy += dy * w
                out[b, i, 0] = fx
                out[b, i, 1] = fy
    return out_arr
