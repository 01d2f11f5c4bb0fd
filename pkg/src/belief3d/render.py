"""Forward splatting renderer.

Projects 3D Gaussian primitives to screen-space ellipses and alpha-composites
them front-to-back into RGB, depth, semantic-feature, and alpha images.  The
composite order is a global per-image depth sort with the primitive index as
tie-break, so output is deterministic and (absent exact depth ties) invariant
to permutation of the input primitives.  Forward-only: no gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .belief import CameraPose, Observation, SceneBelief

ZNEAR = 0.05

# Anti-aliasing floor added to the projected covariance diagonal (px^2).
LOWPASS_DILATION = 0.3

# Below this accumulated weight a pixel has no meaningful surface estimate.
MIN_ACCUM = 1e-4

DEFAULT_BACKGROUND = (0.5, 0.5, 0.5)


class _CulledType:
    """Sentinel for primitives that do not reach the image."""

    __slots__ = ()

    def __repr__(self):
        return "CULLED"


CULLED = _CulledType()


@dataclass(frozen=True)
class Splat2D:
    mean2d: np.ndarray  # (2,) pixels
    cov2d: np.ndarray   # (2,2) symmetric PSD, pixels^2
    depth: float        # camera-space z, meters
    index: int


def project(primitive, camera: CameraPose, znear: float = ZNEAR):
    """Project one primitive; returns a Splat2D or the CULLED sentinel."""
    means2d, covs2d, depths, keep = project_batch(
        primitive.mean[None], primitive.covariance[None], camera, znear)
    if not keep[0]:
        return CULLED
    return Splat2D(means2d[0], covs2d[0], float(depths[0]), 0)


def project_batch(means: np.ndarray, covariances: np.ndarray,
                  camera: CameraPose, znear: float = ZNEAR):
    """Vectorized projection of N primitives.

    Returns (means2d (N,2), covs2d (N,2,2), depths (N,), keep (N,)) where
    ``keep`` is False for primitives behind the near plane or whose 3-sigma
    ellipse misses the image entirely.
    """
    n = means.shape[0]
    if n == 0:
        return (np.zeros((0, 2)), np.zeros((0, 2, 2)), np.zeros(0),
                np.zeros(0, dtype=bool))
    R = camera.rotation
    x_cam = (means - camera.position) @ R.T
    z = x_cam[:, 2]
    keep = z > znear
    zs = np.where(keep, z, 1.0)

    u = camera.fx * x_cam[:, 0] / zs + camera.cx
    v = camera.fy * x_cam[:, 1] / zs + camera.cy
    means2d = np.stack([u, v], axis=1)

    # cov2d = J W Sigma W^T J^T with W the world->camera rotation and J the
    # perspective Jacobian at the mean.  Isotropic covariances (both lifted
    # observations and imagined cells) commute with W, so J sigma^2 J^T has a
    # closed form that skips the rotation products.
    sig2 = covariances[:, 0, 0]
    iso = (covariances == sig2[:, None, None] * np.eye(3)).all(axis=(1, 2))
    covs2d = np.empty((n, 2, 2))
    if np.all(iso):
        xn = x_cam[:, 0] / zs
        yn = x_cam[:, 1] / zs
        f2 = sig2 / (zs * zs)
        covs2d[:, 0, 0] = camera.fx ** 2 * f2 * (1.0 + xn * xn)
        covs2d[:, 1, 1] = camera.fy ** 2 * f2 * (1.0 + yn * yn)
        covs2d[:, 0, 1] = covs2d[:, 1, 0] = camera.fx * camera.fy * f2 * xn * yn
    else:
        cov_cam = np.einsum("ij,njk,lk->nil", R, covariances, R)
        J = np.zeros((n, 2, 3))
        J[:, 0, 0] = camera.fx / zs
        J[:, 0, 2] = -camera.fx * x_cam[:, 0] / (zs * zs)
        J[:, 1, 1] = camera.fy / zs
        J[:, 1, 2] = -camera.fy * x_cam[:, 1] / (zs * zs)
        covs2d = np.einsum("nij,njk,nlk->nil", J, cov_cam, J)
    covs2d[:, 0, 0] += LOWPASS_DILATION
    covs2d[:, 1, 1] += LOWPASS_DILATION

    a = covs2d[:, 0, 0]
    b = 0.5 * (covs2d[:, 0, 1] + covs2d[:, 1, 0])
    c = covs2d[:, 1, 1]
    covs2d[:, 0, 1] = b
    covs2d[:, 1, 0] = b
    half_trace = 0.5 * (a + c)
    gap = np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    lam_min = half_trace - gap
    lam_max = half_trace + gap
    lift = np.maximum(1e-8 - lam_min, 0.0)
    covs2d[:, 0, 0] += lift
    covs2d[:, 1, 1] += lift

    radius = 3.0 * np.sqrt(np.maximum(lam_max, 1e-8))
    on_image = ((means2d[:, 0] + radius >= 0)
                & (means2d[:, 0] - radius <= camera.width - 1)
                & (means2d[:, 1] + radius >= 0)
                & (means2d[:, 1] - radius <= camera.height - 1))
    keep &= on_image
    return means2d, covs2d, z, keep


def render(belief: SceneBelief, camera: CameraPose,
           background=DEFAULT_BACKGROUND) -> Observation:
    """Render the belief from ``camera``.

    Per pixel, splats are composited front-to-back with transmittance
    T_k = prod_{j<k} (1 - alpha_j g_j); depth is the weight-averaged camera z,
    the semantic image is the weight sum of embeddings renormalized to unit
    length, and the validity mask records accumulated weight >= 0.5.
    """
    H, W = camera.height, camera.width
    d = belief.embed_dim
    bg = np.asarray(background, dtype=np.float64)

    means2d, covs2d, depths, keep = project_batch(
        belief.means, belief.covariances, camera)
    idx = np.flatnonzero(keep)
    out_rgb = np.tile(bg, (H, W, 1))
    out_depth = np.zeros((H, W))
    out_sem = np.zeros((H, W, d))
    out_alpha = np.zeros((H, W))
    if len(idx) > 0:
        # Stable front-to-back order: (depth, original index).
        order = idx[np.lexsort((idx, depths[idx]))]
        m2d = np.ascontiguousarray(means2d[order])
        c2d = covs2d[order]
        det = c2d[:, 0, 0] * c2d[:, 1, 1] - c2d[:, 0, 1] ** 2
        det = np.maximum(det, 1e-16)
        inv = np.stack([c2d[:, 1, 1] / det, -c2d[:, 0, 1] / det,
                        c2d[:, 0, 0] / det], axis=1)
        lam_max = 0.5 * (c2d[:, 0, 0] + c2d[:, 1, 1]) + np.sqrt(np.maximum(
            0.25 * (c2d[:, 0, 0] - c2d[:, 1, 1]) ** 2 + c2d[:, 0, 1] ** 2, 0.0))
        radius = 3.0 * np.sqrt(lam_max)
        _composite(m2d, np.ascontiguousarray(inv), radius,
                   np.ascontiguousarray(depths[order]),
                   np.ascontiguousarray(belief.opacities[order]),
                   np.ascontiguousarray(belief.colors[order]),
                   np.ascontiguousarray(belief.embeddings[order]),
                   bg, out_rgb, out_depth, out_sem, out_alpha)

    np.clip(out_alpha, 0.0, 1.0, out=out_alpha)
    sem_norm = np.linalg.norm(out_sem, axis=2, keepdims=True)
    good = (out_alpha >= MIN_ACCUM) & (sem_norm[:, :, 0] > 1e-12)
    out_sem = np.where(good[:, :, None], out_sem / np.maximum(sem_norm, 1e-300), 0.0)
    mask = (out_alpha >= 0.5).astype(np.uint8)
    return Observation(rgb=out_rgb.astype(np.float32),
                       depth=out_depth.astype(np.float32),
                       semantic=out_sem.astype(np.float32),
                       validity_mask=mask, pose=camera)


@njit(cache=True)
def _composite(means2d, cov_inv, radius, depths, opacities, colors, embeddings,
               background, out_rgb, out_depth, out_sem, out_alpha):
    H, W = out_depth.shape
    d = embeddings.shape[1]
    n = means2d.shape[0]
    trans = np.ones((H, W))
    acc_rgb = np.zeros((H, W, 3))
    acc_z = np.zeros((H, W))
    acc_sem = np.zeros((H, W, d))
    for k in range(n):
        mx = means2d[k, 0]
        my = means2d[k, 1]
        r = radius[k]
        u0 = max(int(np.floor(mx - r)), 0)
        u1 = min(int(np.ceil(mx + r)), W - 1)
        v0 = max(int(np.floor(my - r)), 0)
        v1 = min(int(np.ceil(my + r)), H - 1)
        if u1 < u0 or v1 < v0:
            continue
        a = cov_inv[k, 0]
        b = cov_inv[k, 1]
        c = cov_inv[k, 2]
        alpha = opacities[k]
        z = depths[k]
        for v in range(v0, v1 + 1):
            dy = v - my
            for u in range(u0, u1 + 1):
                t = trans[v, u]
                if t < 1e-4:
                    continue
                dx = u - mx
                q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
                if q > 18.0:
                    continue
                g = np.exp(-0.5 * q)
                eff = alpha * g
                if eff < 1e-10:
                    continue
                w = eff * t
                acc_rgb[v, u, 0] += w * colors[k, 0]
                acc_rgb[v, u, 1] += w * colors[k, 1]
                acc_rgb[v, u, 2] += w * colors[k, 2]
                acc_z[v, u] += w * z
                for j in range(d):
                    acc_sem[v, u, j] += w * embeddings[k, j]
                trans[v, u] = t * (1.0 - eff)
    for v in range(H):
        for u in range(W):
            acc = 1.0 - trans[v, u]
            out_alpha[v, u] = acc
            for j in range(3):
                out_rgb[v, u, j] = acc_rgb[v, u, j] + trans[v, u] * background[j]
            if acc >= 1e-4:
                out_depth[v, u] = acc_z[v, u] / acc
                for j in range(d):
                    out_sem[v, u, j] = acc_sem[v, u, j]
