"""Numba render kernels: forward path tracing and gradient replay.

Estimator layout per camera path: at every surface vertex the tracer does
next-event estimation toward each analytic light (deterministically, one
shadow ray per light) and one importance sample of the environment map;
cosine-sampled rays carry indirect light, and rays escaping the scene pick
up environment radiance weighted by the power heuristic against env
sampling. The final scattering vertex casts a cosine ray purely to resolve
that escape, so env NEE and escape stay complementary MIS strategies at
every depth.

Sample addressing is stateless (rng.rand_u01), so the adjoint pass replays
the exact light paths of the forward pass and accumulates, per emission
parameter, the transport coefficient scaled by the pixel's loss weight.
For fixed geometry, light positions, and a frozen ("detached") env sampling
distribution the image is exactly linear in emission, which makes those
gradients exact up to float round-off. Point-light position gradients
differentiate the cos/r^2 kernel analytically while holding visibility
binary (shadow rays aimed at `lvis`, which equals the light position unless
a finite-difference oracle freezes it).

Determinism: pixels are partitioned into row blocks; every pixel's samples
are consumed in a fixed order and each block owns a private gradient slice,
reduced afterwards in fixed block order. Output therefore does not depend
on the thread schedule.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from .bvh import bvh_any_hit, bvh_closest
from .envmap import sample_env_texel, texel_of_direction
from .rng import rand_u01

INV_PI = 1.0 / np.pi
TWO_PI = 2.0 * np.pi

# Light kind codes (match lights.KIND_*).
_POINT = 0
_SPOT = 1
_DIRECTIONAL = 2
_AREA = 3

# Sample-dimension layout: 0,1 pixel jitter; per-vertex block of 6.
_DIM_VERTEX_BASE = 2
_DIMS_PER_VERTEX = 6

ADJOINT_BLOCKS = 32


@njit(cache=True, inline="always")
def _cosine_sample(nx, ny, nz, u1, u2):
    """Cosine-weighted hemisphere direction around n; returns (d, pdf)."""
    if abs(nz) < 0.9:
        ax, ay, az = 0.0, 0.0, 1.0
    else:
        ax, ay, az = 1.0, 0.0, 0.0
    t1x = ay * nz - az * ny
    t1y = az * nx - ax * nz
    t1z = ax * ny - ay * nx
    inv = 1.0 / np.sqrt(t1x * t1x + t1y * t1y + t1z * t1z)
    t1x *= inv; t1y *= inv; t1z *= inv
    t2x = ny * t1z - nz * t1y
    t2y = nz * t1x - nx * t1z
    t2z = nx * t1y - ny * t1x
    r = np.sqrt(u2)
    phi = TWO_PI * u1
    lx = r * np.cos(phi)
    ly = r * np.sin(phi)
    lz = np.sqrt(max(0.0, 1.0 - u2))
    dx = lx * t1x + ly * t2x + lz * nx
    dy = lx * t1y + ly * t2y + lz * ny
    dz = lx * t1z + ly * t2z + lz * nz
    return dx, dy, dz, lz * INV_PI


@njit(cache=True, parallel=True)
def trace_image(
    # geometry, BVH triangle order
    tv0, te1, te2, tri_n, tri_c0, tri_c1, tri_c2,
    node_bmin, node_bmax, node_left, node_right, node_start, node_count,
    # camera
    fx, fy, cx, cy, cam_ox, cam_oy, cam_oz,
    # environment radiance + detached sampling distribution
    env, env_on, row_cdf, col_cdf, env_pdf, env_sample_on, env_rows,
    # analytic lights, SoA
    lkind, lpos, lvis, lint, ldir, lcos_in, lcos_out, ledge_u, ledge_v, lnrm, larea,
    # config
    width, height, spp, max_depth, seed, shadow_eps, clamp,
    # adjoint inputs
    adjoint, weight, g_env, g_lint, g_lpos,
    n_blocks,
    # outputs
    img, hit_mask,
):
    rows_per_block = (height + n_blocks - 1) // n_blocks
    n_lights = lkind.shape[0]
    inv_spp = 1.0 / spp
    for b in prange(n_blocks):
        stack = np.empty(96, dtype=np.int32)
        y_end = min(height, (b + 1) * rows_per_block)
        for y in range(b * rows_per_block, y_end):
            for x in range(width):
                pix = y * width + x

                # Validity comes from the unjittered center ray so the pixel
                # set V is stable across seeds and sample counts.
                cdx = (x - cx) / fx
                cdy = (y - cy) / fy
                cinv = 1.0 / np.sqrt(cdx * cdx + cdy * cdy + 1.0)
                _, chit, _, _ = bvh_closest(
                    tv0, te1, te2, node_bmin, node_bmax, node_left, node_right,
                    node_start, node_count, stack,
                    cam_ox, cam_oy, cam_oz, cdx * cinv, cdy * cinv, cinv, 1e-12, np.inf)
                hit_mask[y, x] = 1 if chit >= 0 else 0

                acc_r = 0.0
                acc_g = 0.0
                acc_b = 0.0
                for s in range(spp):
                    jx = rand_u01(seed, pix, s, 0, 0) - 0.5
                    jy = rand_u01(seed, pix, s, 1, 0) - 0.5
                    dx = (x + jx - cx) / fx
                    dy = (y + jy - cy) / fy
                    dz = 1.0
                    inv = 1.0 / np.sqrt(dx * dx + dy * dy + 1.0)
                    dx *= inv; dy *= inv; dz *= inv
                    ox, oy, oz = cam_ox, cam_oy, cam_oz
                    beta_r = 1.0
                    beta_g = 1.0
                    beta_b = 1.0
                    prev_pdf = 0.0
                    # Vertices 0..max_depth-1 scatter; iteration max_depth
                    # only resolves the final cosine ray's env escape (the
                    # MIS partner of the last vertex's env NEE).
                    for depth in range(max_depth + 1):
                        t, ti, u, v = bvh_closest(
                            tv0, te1, te2, node_bmin, node_bmax, node_left, node_right,
                            node_start, node_count, stack,
                            ox, oy, oz, dx, dy, dz, 1e-12, np.inf)
                        if ti < 0:
                            if env_on:
                                er, ec = texel_of_direction(dx, dy, dz, env_rows)
                                if depth == 0 or not env_sample_on:
                                    w = 1.0
                                else:
                                    pe = env_pdf[er, ec]
                                    w = prev_pdf * prev_pdf / (prev_pdf * prev_pdf + pe * pe)
                                acc_r += beta_r * env[er, ec, 0] * w
                                acc_g += beta_g * env[er, ec, 1] * w
                                acc_b += beta_b * env[er, ec, 2] * w
                                if adjoint:
                                    g_env[b, er, ec, 0] += np.float32(weight[y, x, 0] * beta_r * w * inv_spp)
                                    g_env[b, er, ec, 1] += np.float32(weight[y, x, 1] * beta_g * w * inv_spp)
                                    g_env[b, er, ec, 2] += np.float32(weight[y, x, 2] * beta_b * w * inv_spp)
                            break
                        if depth == max_depth:
                            break

                        hx = ox + t * dx
                        hy = oy + t * dy
                        hz = oz + t * dz
                        nx = tri_n[ti, 0]
                        ny = tri_n[ti, 1]
                        nz = tri_n[ti, 2]
                        if nx * dx + ny * dy + nz * dz > 0.0:
                            nx = -nx; ny = -ny; nz = -nz
                        w0 = 1.0 - u - v
                        rho_r = w0 * tri_c0[ti, 0] + u * tri_c1[ti, 0] + v * tri_c2[ti, 0]
                        rho_g = w0 * tri_c0[ti, 1] + u * tri_c1[ti, 1] + v * tri_c2[ti, 1]
                        rho_b = w0 * tri_c0[ti, 2] + u * tri_c1[ti, 2] + v * tri_c2[ti, 2]
                        sox = hx + shadow_eps * nx
                        soy = hy + shadow_eps * ny
                        soz = hz + shadow_eps * nz

                        for j in range(n_lights):
                            kind = lkind[j]
                            if kind == _DIRECTIONAL:
                                wix = -ldir[j, 0]
                                wiy = -ldir[j, 1]
                                wiz = -ldir[j, 2]
                                cos_s = nx * wix + ny * wiy + nz * wiz
                                if cos_s <= 0.0:
                                    continue
                                if bvh_any_hit(tv0, te1, te2, node_bmin, node_bmax, node_left,
                                               node_right, node_start, node_count, stack,
                                               sox, soy, soz, wix, wiy, wiz, 1e-12, np.inf):
                                    continue
                                k = cos_s
                                f_r = beta_r * rho_r * INV_PI * k
                                f_g = beta_g * rho_g * INV_PI * k
                                f_b = beta_b * rho_b * INV_PI * k
                                acc_r += f_r * lint[j, 0]
                                acc_g += f_g * lint[j, 1]
                                acc_b += f_b * lint[j, 2]
                                if adjoint:
                                    g_lint[b, j, 0] += weight[y, x, 0] * f_r * inv_spp
                                    g_lint[b, j, 1] += weight[y, x, 1] * f_g * inv_spp
                                    g_lint[b, j, 2] += weight[y, x, 2] * f_b * inv_spp
                                continue

                            if kind == _AREA:
                                u1 = rand_u01(seed, pix, s, _DIM_VERTEX_BASE + depth * _DIMS_PER_VERTEX + 4, j + 1)
                                u2 = rand_u01(seed, pix, s, _DIM_VERTEX_BASE + depth * _DIMS_PER_VERTEX + 5, j + 1)
                                qx = lpos[j, 0] + u1 * ledge_u[j, 0] + u2 * ledge_v[j, 0]
                                qy = lpos[j, 1] + u1 * ledge_u[j, 1] + u2 * ledge_v[j, 1]
                                qz = lpos[j, 2] + u1 * ledge_u[j, 2] + u2 * ledge_v[j, 2]
                                dlx = qx - sox
                                dly = qy - soy
                                dlz = qz - soz
                                r2 = dlx * dlx + dly * dly + dlz * dlz
                                if r2 < 1e-24:
                                    continue
                                r = np.sqrt(r2)
                                wix = dlx / r; wiy = dly / r; wiz = dlz / r
                                cos_s = nx * wix + ny * wiy + nz * wiz
                                if cos_s <= 0.0:
                                    continue
                                cos_l = -(lnrm[j, 0] * wix + lnrm[j, 1] * wiy + lnrm[j, 2] * wiz)
                                if cos_l <= 0.0:
                                    continue
                                if bvh_any_hit(tv0, te1, te2, node_bmin, node_bmax, node_left,
                                               node_right, node_start, node_count, stack,
                                               sox, soy, soz, wix, wiy, wiz, 1e-12, r - shadow_eps):
                                    continue
                                k = cos_s * cos_l / r2 * larea[j]
                                f_r = beta_r * rho_r * INV_PI * k
                                f_g = beta_g * rho_g * INV_PI * k
                                f_b = beta_b * rho_b * INV_PI * k
                                acc_r += f_r * lint[j, 0]
                                acc_g += f_g * lint[j, 1]
                                acc_b += f_b * lint[j, 2]
                                if adjoint:
                                    g_lint[b, j, 0] += weight[y, x, 0] * f_r * inv_spp
                                    g_lint[b, j, 1] += weight[y, x, 1] * f_g * inv_spp
                                    g_lint[b, j, 2] += weight[y, x, 2] * f_b * inv_spp
                                continue

                            # point / spot: kernel from lpos, occlusion toward lvis
                            dlx = lpos[j, 0] - hx
                            dly = lpos[j, 1] - hy
                            dlz = lpos[j, 2] - hz
                            r2 = dlx * dlx + dly * dly + dlz * dlz
                            if r2 < 1e-24:
                                continue
                            r = np.sqrt(r2)
                            wix = dlx / r; wiy = dly / r; wiz = dlz / r
                            cos_s = nx * wix + ny * wiy + nz * wiz
                            if cos_s <= 0.0:
                                continue
                            k = cos_s / r2
                            if kind == _SPOT:
                                cos_a = -(ldir[j, 0] * wix + ldir[j, 1] * wiy + ldir[j, 2] * wiz)
                                ci = lcos_in[j]
                                co = lcos_out[j]
                                if ci - co < 1e-12:
                                    fall = 1.0 if cos_a >= ci else 0.0
                                else:
                                    tt = (cos_a - co) / (ci - co)
                                    if tt < 0.0:
                                        tt = 0.0
                                    elif tt > 1.0:
                                        tt = 1.0
                                    fall = tt * tt * (3.0 - 2.0 * tt)
                                k *= fall
                                if k <= 0.0:
                                    continue
                            vx = lvis[j, 0] - sox
                            vy = lvis[j, 1] - soy
                            vz = lvis[j, 2] - soz
                            rv = np.sqrt(vx * vx + vy * vy + vz * vz)
                            if rv > shadow_eps:
                                if bvh_any_hit(tv0, te1, te2, node_bmin, node_bmax, node_left,
                                               node_right, node_start, node_count, stack,
                                               sox, soy, soz, vx / rv, vy / rv, vz / rv,
                                               1e-12, rv - shadow_eps):
                                    continue
                            f_r = beta_r * rho_r * INV_PI * k
                            f_g = beta_g * rho_g * INV_PI * k
                            f_b = beta_b * rho_b * INV_PI * k
                            acc_r += f_r * lint[j, 0]
                            acc_g += f_g * lint[j, 1]
                            acc_b += f_b * lint[j, 2]
                            if adjoint:
                                g_lint[b, j, 0] += weight[y, x, 0] * f_r * inv_spp
                                g_lint[b, j, 1] += weight[y, x, 1] * f_g * inv_spp
                                g_lint[b, j, 2] += weight[y, x, 2] * f_b * inv_spp
                                if kind == _POINT:
                                    # d/dq of max(n.d, 0)/r^3 with d = q - h
                                    n_dot_d = nx * dlx + ny * dly + nz * dlz
                                    inv_r3 = 1.0 / (r2 * r)
                                    inv_r5 = inv_r3 / r2
                                    gs = (weight[y, x, 0] * beta_r * rho_r * lint[j, 0]
                                          + weight[y, x, 1] * beta_g * rho_g * lint[j, 1]
                                          + weight[y, x, 2] * beta_b * rho_b * lint[j, 2]) * INV_PI * inv_spp
                                    g_lpos[b, j, 0] += gs * (nx * inv_r3 - 3.0 * n_dot_d * dlx * inv_r5)
                                    g_lpos[b, j, 1] += gs * (ny * inv_r3 - 3.0 * n_dot_d * dly * inv_r5)
                                    g_lpos[b, j, 2] += gs * (nz * inv_r3 - 3.0 * n_dot_d * dlz * inv_r5)

                        if env_sample_on:
                            u1 = rand_u01(seed, pix, s, _DIM_VERTEX_BASE + depth * _DIMS_PER_VERTEX + 0, 0)
                            u2 = rand_u01(seed, pix, s, _DIM_VERTEX_BASE + depth * _DIMS_PER_VERTEX + 1, 0)
                            ex, ey, ez, pe, er, ec = sample_env_texel(row_cdf, col_cdf, env_pdf, env_rows, u1, u2)
                            cos_s = nx * ex + ny * ey + nz * ez
                            if cos_s > 0.0 and pe > 0.0:
                                if not bvh_any_hit(tv0, te1, te2, node_bmin, node_bmax, node_left,
                                                   node_right, node_start, node_count, stack,
                                                   sox, soy, soz, ex, ey, ez, 1e-12, np.inf):
                                    pc = cos_s * INV_PI
                                    w = pe * pe / (pe * pe + pc * pc)
                                    scale = cos_s / pe * w
                                    f_r = beta_r * rho_r * INV_PI * scale
                                    f_g = beta_g * rho_g * INV_PI * scale
                                    f_b = beta_b * rho_b * INV_PI * scale
                                    acc_r += f_r * env[er, ec, 0]
                                    acc_g += f_g * env[er, ec, 1]
                                    acc_b += f_b * env[er, ec, 2]
                                    if adjoint:
                                        g_env[b, er, ec, 0] += np.float32(weight[y, x, 0] * f_r * inv_spp)
                                        g_env[b, er, ec, 1] += np.float32(weight[y, x, 1] * f_g * inv_spp)
                                        g_env[b, er, ec, 2] += np.float32(weight[y, x, 2] * f_b * inv_spp)

                        if depth + 1 == max_depth and not env_on:
                            break  # terminal cosine ray could only fetch env radiance
                        u3 = rand_u01(seed, pix, s, _DIM_VERTEX_BASE + depth * _DIMS_PER_VERTEX + 2, 0)
                        u4 = rand_u01(seed, pix, s, _DIM_VERTEX_BASE + depth * _DIMS_PER_VERTEX + 3, 0)
                        dx, dy, dz, prev_pdf = _cosine_sample(nx, ny, nz, u3, u4)
                        beta_r *= rho_r
                        beta_g *= rho_g
                        beta_b *= rho_b
                        ox, oy, oz = sox, soy, soz

                if clamp:
                    acc_r = max(acc_r, 0.0)
                    acc_g = max(acc_g, 0.0)
                    acc_b = max(acc_b, 0.0)
                img[y, x, 0] = acc_r * inv_spp
                img[y, x, 1] = acc_g * inv_spp
                img[y, x, 2] = acc_b * inv_spp
