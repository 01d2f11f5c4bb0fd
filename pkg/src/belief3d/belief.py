"""Explicit Gaussian-primitive scene belief.

The belief is a set of 3D Gaussian primitives split into an *observed* part
(backed by sensor evidence, permanent) and an *imagined* part (generated
completions of unseen space, discarded and resampled on every update).
``SceneBelief`` stores the primitives as packed arrays; ``GaussianPrimitive``
is the per-primitive record view used at API boundaries.

Sequential update contract:
  * ``incorporate_observation`` unprojects a new RGB-D-semantic frame into
    observed primitives (voxel-hash deduplicated) and drops all imagination.
  * ``replace_imagination`` swaps in a freshly sampled imagined set.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from .errors import (
    EmptyObservation,
    NonSymmetricCovariance,
    NoValidOverlap,
    OpacityOutOfRange,
    OriginMismatch,
)

# Eigenvalue floor applied to every covariance at construction (m^2).
COV_EIG_FLOOR = 1e-8

DEFAULT_EMBED_DIM = 16

# Voxel side used to deduplicate observed primitives (m).
DEDUP_CELL = 0.10

# Scale factor relating unprojected-point covariance to pixel footprint.
UNPROJECT_SIGMA_SCALE = 0.5


class Origin(IntEnum):
    OBSERVED = 0
    IMAGINED = 1


@dataclass(frozen=True, eq=False)
class GaussianPrimitive:
    """One belief atom: anisotropic Gaussian with color and a semantic vector."""

    mean: np.ndarray        # (3,) world frame, meters
    covariance: np.ndarray  # (3,3) symmetric, eigenvalues >= COV_EIG_FLOOR
    opacity: float          # in [0, 1]
    appearance: np.ndarray  # (3,) RGB in [0, 1], flat (degree-0) color
    embedding: np.ndarray   # (d,) unit l2 norm
    origin: Origin


def make_primitive(mean, covariance, opacity, appearance, embedding,
                   origin: Origin) -> GaussianPrimitive:
    """Validate and normalize raw parameters into a GaussianPrimitive.

    The covariance must be symmetric within 1e-9; its eigenvalues are clamped
    to ``COV_EIG_FLOOR`` and the matrix reassembled symmetric.  Opacity may
    carry float noise of up to 1e-9 outside [0, 1] and is clamped; anything
    further out raises ``OpacityOutOfRange``.  The embedding is renormalized
    to unit length.
    """
    mean = np.asarray(mean, dtype=np.float64).reshape(3)
    cov = np.asarray(covariance, dtype=np.float64).reshape(3, 3)
    if not np.all(np.abs(cov - cov.T) <= 1e-9):
        raise NonSymmetricCovariance(
            f"covariance asymmetry {np.abs(cov - cov.T).max():.3e} exceeds 1e-9")
    opacity = float(opacity)
    if opacity < -1e-9 or opacity > 1.0 + 1e-9:
        raise OpacityOutOfRange(f"opacity {opacity} outside [0, 1]")
    opacity = min(max(opacity, 0.0), 1.0)

    cov = 0.5 * (cov + cov.T)
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals[0] < COV_EIG_FLOOR:
        eigvals = np.maximum(eigvals, COV_EIG_FLOOR)
        cov = (eigvecs * eigvals) @ eigvecs.T
        cov = 0.5 * (cov + cov.T)

    appearance = np.clip(np.asarray(appearance, dtype=np.float64).reshape(3), 0.0, 1.0)
    embedding = np.asarray(embedding, dtype=np.float64).ravel()
    norm = float(np.linalg.norm(embedding))
    if norm < 1e-12:
        raise ValueError("embedding must be nonzero")
    embedding = embedding / norm
    return GaussianPrimitive(mean, cov, opacity, appearance, embedding, Origin(origin))


@dataclass(frozen=True, eq=False)
class SceneBelief:
    """A sampled world hypothesis: packed primitive arrays plus provenance.

    Values are immutable snapshots; every update returns a new instance,
    so beliefs can be shared read-only across parallel workers.
    """

    means: np.ndarray        # (N,3) float64
    covariances: np.ndarray  # (N,3,3) float64
    opacities: np.ndarray    # (N,) float64
    colors: np.ndarray       # (N,3) float64
    embeddings: np.ndarray   # (N,d) float64
    origins: np.ndarray      # (N,) uint8, values from Origin
    step: int = 0
    hypothesis_id: int = 0
    rng_seed: int = 0

    @staticmethod
    def empty(embed_dim: int = DEFAULT_EMBED_DIM, step: int = 0,
              hypothesis_id: int = 0, rng_seed: int = 0) -> "SceneBelief":
        return SceneBelief(
            means=np.zeros((0, 3)),
            covariances=np.zeros((0, 3, 3)),
            opacities=np.zeros(0),
            colors=np.zeros((0, 3)),
            embeddings=np.zeros((0, embed_dim)),
            origins=np.zeros(0, dtype=np.uint8),
            step=step, hypothesis_id=hypothesis_id, rng_seed=rng_seed)

    @staticmethod
    def from_primitives(prims, step: int = 0, hypothesis_id: int = 0,
                        rng_seed: int = 0,
                        embed_dim: int | None = None) -> "SceneBelief":
        if not prims:
            return SceneBelief.empty(embed_dim or DEFAULT_EMBED_DIM, step,
                                     hypothesis_id, rng_seed)
        return SceneBelief(
            means=np.stack([p.mean for p in prims]),
            covariances=np.stack([p.covariance for p in prims]),
            opacities=np.array([p.opacity for p in prims]),
            colors=np.stack([p.appearance for p in prims]),
            embeddings=np.stack([p.embedding for p in prims]),
            origins=np.array([int(p.origin) for p in prims], dtype=np.uint8),
            step=step, hypothesis_id=hypothesis_id, rng_seed=rng_seed)

    @property
    def n(self) -> int:
        return self.means.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def primitives(self) -> list:
        """Materialize the per-primitive record view."""
        return [GaussianPrimitive(self.means[i], self.covariances[i],
                                  float(self.opacities[i]), self.colors[i],
                                  self.embeddings[i], Origin(self.origins[i]))
                for i in range(self.n)]

    def select(self, mask: np.ndarray, **overrides) -> "SceneBelief":
        kw = dict(means=self.means[mask], covariances=self.covariances[mask],
                  opacities=self.opacities[mask], colors=self.colors[mask],
                  embeddings=self.embeddings[mask], origins=self.origins[mask],
                  step=self.step, hypothesis_id=self.hypothesis_id,
                  rng_seed=self.rng_seed)
        kw.update(overrides)
        return SceneBelief(**kw)

    def observed_mask(self) -> np.ndarray:
        return self.origins == Origin.OBSERVED

    def observed_part(self) -> "SceneBelief":
        return self.select(self.observed_mask())


@dataclass(frozen=True)
class CameraPose:
    """Pinhole camera: world->camera rotation, +z forward, +y down in image."""

    position: np.ndarray  # (3,) camera center, world frame
    rotation: np.ndarray  # (3,3) world->camera, orthonormal
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, "position",
                           np.asarray(self.position, dtype=np.float64).reshape(3))
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6):
            raise ValueError("rotation must be orthonormal within 1e-6")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        object.__setattr__(self, "rotation", R)

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(points) - self.position) @ self.rotation.T

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        return np.atleast_2d(points) @ self.rotation + self.position

    def ray_directions(self, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
        """World-frame unit directions through the given pixel coordinates."""
        d = np.stack([(us - self.cx) / self.fx,
                      (vs - self.cy) / self.fy,
                      np.ones_like(us, dtype=np.float64)], axis=-1)
        d_world = d @ self.rotation
        return d_world / np.linalg.norm(d_world, axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class Observation:
    """Egocentric frame: RGB, planar depth (0 = invalid), semantic features."""

    rgb: np.ndarray            # (H,W,3) in [0,1]
    depth: np.ndarray          # (H,W) meters, camera z, 0 where invalid
    semantic: np.ndarray       # (H,W,d)
    validity_mask: np.ndarray  # (H,W) {0,1}
    pose: CameraPose

    @property
    def shape(self):
        return self.rgb.shape[:2]


def partition(belief: SceneBelief):
    """Split into (observed, imagined) primitive lists, order preserved."""
    prims = belief.primitives
    observed = [p for p in prims if p.origin == Origin.OBSERVED]
    imagined = [p for p in prims if p.origin == Origin.IMAGINED]
    return observed, imagined


def incorporate_observation(belief: SceneBelief, obs: Observation,
                            stride: int = 1,
                            dedup_cell: float = DEDUP_CELL) -> SceneBelief:
    """Expand the observed part with a new frame; drop all imagination.

    Every valid pixel on the stride-subsampled lattice is unprojected through
    the observation's pose into a new observed primitive with an isotropic
    covariance proportional to its depth and pixel footprint.  A voxel hash
    of side ``dedup_cell`` suppresses duplicates of already-observed cells,
    which makes repeated identical observations idempotent in count.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    H, W = obs.shape
    vs, us = np.mgrid[0:H:stride, 0:W:stride]
    us = us.ravel()
    vs = vs.ravel()
    valid = (obs.validity_mask[vs, us] > 0) & (obs.depth[vs, us] > 0)
    if not np.any(valid):
        raise EmptyObservation("no valid pixels in sampled observation")
    us, vs = us[valid], vs[valid]
    z = obs.depth[vs, us].astype(np.float64)

    pose = obs.pose
    x_cam = np.stack([(us - pose.cx) / pose.fx * z,
                      (vs - pose.cy) / pose.fy * z,
                      z], axis=1)
    means = pose.camera_to_world(x_cam)

    keys = _voxel_keys(means, dedup_cell)
    obs_mask = belief.observed_mask()
    occupied = set(map(tuple, _voxel_keys(belief.means[obs_mask], dedup_cell)))
    keep = np.zeros(len(keys), dtype=bool)
    for i, k in enumerate(map(tuple, keys)):
        if k not in occupied:
            occupied.add(k)
            keep[i] = True

    sigma = UNPROJECT_SIGMA_SCALE * z[keep] * (stride / pose.fx)
    sigma2 = np.maximum(sigma * sigma, COV_EIG_FLOOR)
    covs = np.einsum("n,ij->nij", sigma2, np.eye(3))
    emb = obs.semantic[vs[keep], us[keep]].astype(np.float64)
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    small = norms[:, 0] < 1e-12
    if np.any(small):
        emb[small] = 0.0
        emb[small, 0] = 1.0
        norms[small] = 1.0
    emb = emb / norms

    observed = belief.select(obs_mask)
    return SceneBelief(
        means=np.concatenate([observed.means, means[keep]]),
        covariances=np.concatenate([observed.covariances, covs]),
        opacities=np.concatenate([observed.opacities, np.ones(int(keep.sum()))]),
        colors=np.concatenate([observed.colors,
                               obs.rgb[vs[keep], us[keep]].astype(np.float64)]),
        embeddings=np.concatenate([observed.embeddings, emb]),
        origins=np.concatenate([observed.origins,
                                np.full(int(keep.sum()), Origin.OBSERVED,
                                        dtype=np.uint8)]),
        step=belief.step + 1, hypothesis_id=belief.hypothesis_id,
        rng_seed=belief.rng_seed)


def replace_imagination(belief: SceneBelief, imagined) -> SceneBelief:
    """Return observed part of ``belief`` plus the given imagined primitives.

    ``imagined`` may be a list of GaussianPrimitive or another SceneBelief
    whose primitives are all imagined.  Step is unchanged.
    """
    if isinstance(imagined, SceneBelief):
        extra = imagined
    else:
        extra = SceneBelief.from_primitives(list(imagined),
                                            embed_dim=belief.embed_dim)
    if np.any(extra.origins != Origin.IMAGINED):
        raise OriginMismatch("replacement primitives must all be imagined")
    observed = belief.select(belief.observed_mask())
    return SceneBelief(
        means=np.concatenate([observed.means, extra.means]),
        covariances=np.concatenate([observed.covariances, extra.covariances]),
        opacities=np.concatenate([observed.opacities, extra.opacities]),
        colors=np.concatenate([observed.colors, extra.colors]),
        embeddings=np.concatenate([observed.embeddings, extra.embeddings]),
        origins=np.concatenate([observed.origins, extra.origins]),
        step=belief.step, hypothesis_id=belief.hypothesis_id,
        rng_seed=belief.rng_seed)


def align_depth_scale(predicted: np.ndarray, sensed: np.ndarray,
                      mask: np.ndarray) -> float:
    """Median per-pixel ratio sensed/predicted over jointly valid pixels.

    Robust scalar scale for non-metric predicted depth; breakdown point 50%.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    sensed = np.asarray(sensed, dtype=np.float64)
    valid = (np.asarray(mask) > 0) & (predicted > 1e-6) & (sensed > 0)
    if not np.any(valid):
        raise NoValidOverlap("no pixel valid in both depth images")
    return float(np.median(sensed[valid] / predicted[valid]))


def _voxel_keys(points: np.ndarray, cell: float) -> np.ndarray:
    if len(points) == 0:
        return np.zeros((0, 3), dtype=np.int64)
    return np.floor(points / cell).astype(np.int64)
