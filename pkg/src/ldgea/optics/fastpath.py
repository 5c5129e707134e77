"""Compiled value-only merit kernel.

Same mathematics as :mod:`ldgea.optics.trace` / :mod:`ldgea.merit` written as
scalar loops for numba.  The optimizers spend almost all their time here; the
array/dual implementation stays the reference (and the gradient path), and the
test-suite checks that both agree.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# columns of the output array
TOTAL, MS, P1, P2, P3, P4, P5, EFL, IMAGE, ALIVE, POWER = range(11)
N_OUT = 11


@njit(cache=True)
def _paraxial(curv, thick, n, y, u, upto):
    for s in range(upto):
        u = (n[s] * u - y * curv[s] * (n[s + 1] - n[s])) / n[s + 1]
        if s < curv.shape[0] - 1:
            y = y + u * thick[s]
    return y, u


@njit(cache=True, nogil=True)
def merit_batch(
    curv, thick, n_rays, n_prim, image_distance, use_image,
    apert, is_stop, stop_index, gap_idx, gap_glass,
    px, py, sin_t, cos_t, field_id, n_fields, epd, params,
):
    """Evaluate ``P`` designs; see module docstring.

    ``n_rays`` is ``(P|1, S+1, R)`` and ``n_prim`` ``(P|1, S+1)``.  ``params``
    holds ``w1..w5, target_efl, t_min, g_min, wd_min, vignetting, dead_zone``.
    """
    P, S = curv.shape
    R = px.shape[0]
    out = np.empty((P, N_OUT))
    lx = np.empty(R)
    ly = np.empty(R)
    ok = np.empty(R, dtype=np.bool_)
    neg = np.empty(R)
    h = 0.5 * epd
    w1, w2, w3, w4, w5 = params[0], params[1], params[2], params[3], params[4]
    target, tmin, gmin, wdmin, vig, dead = params[5], params[6], params[7], params[8], params[9], params[10]
    for p in range(P):
        c = curv[p]
        t = thick[p]
        nr = n_rays[p if n_rays.shape[0] > 1 else 0]
        npr = n_prim[p if n_prim.shape[0] > 1 else 0]
        yl, u = _paraxial(c, t, npr, 1.0, 0.0, S)
        if abs(u) < 1e-12 or not math.isfinite(u):
            out[p, :] = np.inf
            out[p, POWER] = 0.0
            continue
        efl = -1.0 / u
        d_img = -yl / u if not use_image else image_distance[p]
        if stop_index == 0:
            zp = 0.0
        else:
            a, _ = _paraxial(c, t, npr, 1.0, 0.0, stop_index)
            b, _ = _paraxial(c, t, npr, 0.0, 1.0, stop_index)
            zp = b / a
        for r in range(R):
            x = px[r] * h
            y = py[r] * h
            z = zp
            dx = 0.0
            dy = sin_t[r]
            dz = cos_t[r]
            alive = True
            negsum = 0.0
            zv = 0.0
            for s in range(S):
                if s > 0:
                    zv += t[s - 1]
                cs = c[s]
                zl = z - zv
                F = cs * (x * x + y * y + zl * zl) - 2.0 * zl
                G = dz - cs * (x * dx + y * dy + zl * dz)
                disc = G * G - cs * F
                if disc < 0.0:
                    alive = False
                    break
                den = G + math.sqrt(disc)
                if not den > 0.0:
                    alive = False
                    break
                tt = F / den
                x += tt * dx
                y += tt * dy
                z += tt * dz
                if s > 0 and tt < 0.0:
                    negsum -= tt
                if x * x + y * y > apert[s] * apert[s]:
                    alive = False
                    break
                if is_stop[s]:
                    continue
                zl = z - zv
                nx = -cs * x
                ny = -cs * y
                nz = 1.0 - cs * zl
                nn = math.sqrt(nx * nx + ny * ny + nz * nz)
                nx /= nn
                ny /= nn
                nz /= nn
                mu = nr[s, r] / nr[s + 1, r]
                ci = dx * nx + dy * ny + dz * nz
                if ci < 0.0:
                    nx, ny, nz, ci = -nx, -ny, -nz, -ci
                k = 1.0 - mu * mu * (1.0 - ci * ci)
                if k < 0.0:
                    alive = False
                    break
                g = math.sqrt(k) - mu * ci
                dx = mu * dx + g * nx
                dy = mu * dy + g * ny
                dz = mu * dz + g * nz
            if alive and not dz > 0.0:
                alive = False
            if alive:
                zi = zv + d_img
                ti = (zi - z) / dz
                lx[r] = x + ti * dx
                ly[r] = y + ti * dy
            else:
                lx[r] = 0.0
                ly[r] = 0.0
            ok[r] = alive
            neg[r] = negsum if alive else 0.0
        # centroid-referenced mean square per field
        ms = 0.0
        n_alive = 0
        for f in range(n_fields):
            sx = 0.0
            sy = 0.0
            cnt = 0
            for r in range(R):
                if field_id[r] == f and ok[r]:
                    sx += lx[r]
                    sy += ly[r]
                    cnt += 1
            if cnt == 0:
                continue
            n_alive += cnt
            cx = sx / cnt
            cy = sy / cnt
            acc = 0.0
            for r in range(R):
                if field_id[r] == f and ok[r]:
                    ex = lx[r] - cx
                    ey = ly[r] - cy
                    acc += ex * ex + ey * ey
            ms += acc / cnt
        ms /= n_fields
        p1 = vig * (1.0 - n_alive / R)
        p2 = 0.0
        for r in range(R):
            p2 += neg[r]
        p2 /= R * tmin
        p3 = 0.0
        for j in range(gap_idx.shape[0]):
            lim = tmin if gap_glass[j] else gmin
            v = lim - t[gap_idx[j]]
            if v > 0.0:
                p3 += v / lim
        p4 = max(wdmin - d_img, 0.0) / wdmin
        p5 = max(abs((efl - target) / target) - dead, 0.0)
        out[p, TOTAL] = ms + w1 * p1 * p1 + w2 * p2 * p2 + w3 * p3 * p3 + w4 * p4 * p4 + w5 * p5 * p5
        out[p, MS] = ms
        out[p, P1] = p1
        out[p, P2] = p2
        out[p, P3] = p3
        out[p, P4] = p4
        out[p, P5] = p5
        out[p, EFL] = efl
        out[p, IMAGE] = d_img
        out[p, ALIVE] = n_alive
        out[p, POWER] = 1.0
    return out
