"""Lat-long environment map sampling.

Mapping convention (camera space is X right, Y down, Z forward, so "up" is
-Y): row r spans polar angle theta in [pi*r/R, pi*(r+1)/R] measured from up,
column c spans azimuth phi in [2*pi*c/C, 2*pi*(c+1)/C] measured from +Z
toward +X. Texels are piecewise-constant in direction; evaluation and the
sampling pdf use the same nearest-texel rule so multiple importance
sampling stays consistent.

Importance sampling draws texels proportionally to luminance x solid angle,
then places the direction uniformly (in solid angle) inside the texel. The
distribution is built separately from the map values so an optimizer can
freeze ("detach") it while emission values change, keeping the rendered
image exactly linear in emission.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .color import luminance


def texel_solid_angles(rows: int) -> np.ndarray:
    """Solid angle of one texel in each row, (rows,) ; sums to 4*pi over the map."""
    edges = np.cos(np.linspace(0.0, np.pi, rows + 1))
    band = edges[:-1] - edges[1:]
    return band * (np.pi / rows)


@dataclass(frozen=True)
class EnvDistribution:
    """Frozen importance distribution over env texels.

    pdf is the solid-angle density of the sampled direction inside each
    texel; rows with zero weight are never sampled. enabled is False for an
    all-black map (callers must then skip env sampling entirely).
    """

    row_cdf: np.ndarray   # (R,)
    col_cdf: np.ndarray   # (R, C)
    pdf: np.ndarray       # (R, C)
    rows: int
    enabled: bool


def build_env_distribution(env: np.ndarray, uniform_fraction: float = 0.0) -> EnvDistribution:
    """Texel distribution ~ luminance x solid angle, optionally blended with
    a uniform (solid-angle) component.

    uniform_fraction > 0 is defensive sampling for the optimizer: texels the
    current env drives to zero keep nonzero sampling probability, so their
    gradients survive and they can recover. Plain rendering uses 0.
    """
    if not 0.0 <= uniform_fraction <= 1.0:
        raise ValueError("uniform_fraction must lie in [0, 1]")
    env = np.asarray(env, dtype=np.float64)
    rows, cols = env.shape[0], env.shape[1]
    omega = texel_solid_angles(rows)
    lum_weight = luminance(env) * omega[:, None]
    total = lum_weight.sum()
    if total <= 0.0 and uniform_fraction <= 0.0:
        return EnvDistribution(
            row_cdf=np.zeros(rows), col_cdf=np.zeros((rows, cols)),
            pdf=np.zeros((rows, cols)), rows=rows, enabled=False,
        )
    if total > 0.0:
        prob = (1.0 - uniform_fraction) * lum_weight / total
        prob += uniform_fraction * np.broadcast_to(omega[:, None], prob.shape) / (4.0 * np.pi)
    else:
        prob = np.broadcast_to(omega[:, None] / (4.0 * np.pi), lum_weight.shape).copy()
    row_w = prob.sum(axis=1)
    row_cdf = np.cumsum(row_w)
    row_cdf /= row_cdf[-1]
    row_cdf[-1] = 1.0
    with np.errstate(invalid="ignore", divide="ignore"):
        col_cdf = np.cumsum(prob, axis=1) / np.where(row_w > 0, row_w, 1.0)[:, None]
    col_cdf[row_w > 0, -1] = 1.0
    pdf = prob / omega[:, None]
    return EnvDistribution(
        row_cdf=np.ascontiguousarray(row_cdf), col_cdf=np.ascontiguousarray(col_cdf),
        pdf=np.ascontiguousarray(pdf), rows=rows, enabled=True,
    )


@njit(cache=True, inline="always")
def dir_from_angles(cos_theta, phi):
    sin_theta = np.sqrt(max(0.0, 1.0 - cos_theta * cos_theta))
    # up = (0, -1, 0); phi measured from +Z toward +X
    return np.sin(phi) * sin_theta, -cos_theta, np.cos(phi) * sin_theta


@njit(cache=True, inline="always")
def texel_of_direction(dx, dy, dz, rows):
    """Nearest texel (row, col) containing a unit direction."""
    cos_theta = min(1.0, max(-1.0, -dy))
    theta = np.arccos(cos_theta)
    r = int(theta * (rows / np.pi))
    if r > rows - 1:
        r = rows - 1
    phi = np.arctan2(dx, dz)
    if phi < 0.0:
        phi += 2.0 * np.pi
    c = int(phi * (rows / np.pi))  # cols = 2*rows, so cols/(2*pi) = rows/pi
    if c > 2 * rows - 1:
        c = 2 * rows - 1
    return r, c


@njit(cache=True, inline="always")
def sample_env_texel(row_cdf, col_cdf, pdf, rows, u1, u2):
    """Draw a direction ~ luminance x solid angle; returns (dx,dy,dz,pdf,r,c).

    The fractional CDF position re-parameterizes into the texel so the
    direction is uniform (in solid angle) within it.
    """
    r = np.searchsorted(row_cdf, u1, side="right")
    if r > rows - 1:
        r = rows - 1
    lo = row_cdf[r - 1] if r > 0 else 0.0
    span = row_cdf[r] - lo
    fr = (u1 - lo) / span if span > 0 else 0.5

    cols = 2 * rows
    c = np.searchsorted(col_cdf[r], u2, side="right")
    if c > cols - 1:
        c = cols - 1
    clo = col_cdf[r, c - 1] if c > 0 else 0.0
    cspan = col_cdf[r, c] - clo
    fc = (u2 - clo) / cspan if cspan > 0 else 0.5

    cos0 = np.cos(np.pi * r / rows)
    cos1 = np.cos(np.pi * (r + 1) / rows)
    cos_theta = cos0 + fr * (cos1 - cos0)  # uniform in cos(theta) within the band
    phi = 2.0 * np.pi * (c + fc) / cols
    dx, dy, dz = dir_from_angles(cos_theta, phi)
    return dx, dy, dz, pdf[r, c], r, c


class EnvironmentSampler:
    """Importance sampler over one environment map (testing/analysis API).

    The render kernels call the njit helpers directly; this wrapper exposes
    the identical math for oracles and notebooks.
    """

    def __init__(self, env: np.ndarray):
        env = np.asarray(env, dtype=np.float64)
        if env.ndim != 3 or env.shape[2] != 3 or env.shape[1] != 2 * env.shape[0]:
            raise ValueError("environment map must be (rows, 2*rows, 3)")
        if env.min() < 0 or not np.isfinite(env).all():
            raise ValueError("environment map must be finite and non-negative")
        self.env = env
        self.dist = build_env_distribution(env)
        if not self.dist.enabled:
            raise ValueError("cannot importance-sample an all-zero environment")

    def sample(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map unit-square samples (N, 2) to (directions (N, 3), pdfs (N,))."""
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        out_d = np.empty((u.shape[0], 3))
        out_p = np.empty(u.shape[0])
        d = self.dist
        for i in range(u.shape[0]):
            dx, dy, dz, p, _, _ = sample_env_texel(d.row_cdf, d.col_cdf, d.pdf, d.rows, u[i, 0], u[i, 1])
            out_d[i] = (dx, dy, dz)
            out_p[i] = p
        return out_d, out_p

    def pdf(self, directions: np.ndarray) -> np.ndarray:
        dirs = np.atleast_2d(np.asarray(directions, dtype=np.float64))
        out = np.empty(dirs.shape[0])
        for i, (dx, dy, dz) in enumerate(dirs):
            r, c = texel_of_direction(dx, dy, dz, self.dist.rows)
            out[i] = self.dist.pdf[r, c]
        return out

    def radiance(self, directions: np.ndarray) -> np.ndarray:
        dirs = np.atleast_2d(np.asarray(directions, dtype=np.float64))
        out = np.empty((dirs.shape[0], 3))
        for i, (dx, dy, dz) in enumerate(dirs):
            r, c = texel_of_direction(dx, dy, dz, self.dist.rows)
            out[i] = self.env[r, c]
        return out


def sample_env(env: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One-shot convenience wrapper over EnvironmentSampler.sample."""
    return EnvironmentSampler(env).sample(u)
