"""Multi-hypothesis imagination over voxel beliefs.

The diffusion sampler's state space is a coarse occupancy grid with one
embedding channel per semantic dimension.  Observed structure conditions the
reverse chain by replacement guidance: cells with ``known_mask`` set are
overwritten with their conditioned values at every step, so every sampled
hypothesis agrees exactly with the evidence.  Sampled grids are lifted back
into imagined Gaussian primitives for rendering and planning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import ndimage

from .belief import COV_EIG_FLOOR, GaussianPrimitive, Origin, SceneBelief
from .denoiser import (
    AdamState,
    DenoiserParams,
    adam_step,
    init_denoiser,
    loss_and_grads,
    net_forward,
    prototype_basis,
)
from .diffusion import NoiseSchedule, forward_noise, reverse_step
from .errors import EmptyGrid, InsufficientData
from .semantics import EmbeddingProvider, class_prototypes, default_provider, nearest_class
from .vocab import CLASS_NAMES, class_color

DEFAULT_CELL = 0.25
IMAGINED_OPACITY = 0.8


@dataclass(frozen=True)
class GridSpec:
    origin: np.ndarray  # (3,) world position of cell (0,0,0) corner
    cell: float
    dims: tuple        # (nx, ny, nz)

    def __post_init__(self):
        object.__setattr__(self, "origin",
                           np.asarray(self.origin, dtype=np.float64).reshape(3))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.dims))

    def to_cell(self, points: np.ndarray) -> np.ndarray:
        return np.floor((np.atleast_2d(points) - self.origin) / self.cell).astype(np.int64)

    def in_bounds(self, cells: np.ndarray) -> np.ndarray:
        return np.all((cells >= 0) & (cells < np.array(self.dims)), axis=-1)

    def centers(self, cells: np.ndarray) -> np.ndarray:
        return self.origin + (cells + 0.5) * self.cell

    @staticmethod
    def for_bounds(lo, hi, cell: float = DEFAULT_CELL,
                   z_top: float | None = 1.5) -> "GridSpec":
        lo = np.asarray(lo, dtype=np.float64).copy()
        hi = np.asarray(hi, dtype=np.float64).copy()
        lo[2] = min(lo[2], 0.0)
        if z_top is not None:
            hi = hi.copy()
            hi[2] = min(hi[2], z_top)
        dims = np.maximum(np.ceil((hi - lo) / cell - 1e-9), 1).astype(int)
        return GridSpec(lo, cell, tuple(dims))


@dataclass(eq=False)
class VoxelBelief:
    """Coarse occupancy + semantic-class grid with an evidence mask."""

    grid: GridSpec
    occupancy: np.ndarray   # (nx,ny,nz) float32 in [0,1]
    semantics: np.ndarray   # (nx,ny,nz) int16, 0 = none
    known_mask: np.ndarray  # (nx,ny,nz) uint8
    warnings: int = 0

    @staticmethod
    def unknown(grid: GridSpec) -> "VoxelBelief":
        return VoxelBelief(grid,
                           np.full(grid.dims, 0.5, dtype=np.float32),
                           np.zeros(grid.dims, dtype=np.int16),
                           np.zeros(grid.dims, dtype=np.uint8))

    def copy(self) -> "VoxelBelief":
        return VoxelBelief(self.grid, self.occupancy.copy(),
                           self.semantics.copy(), self.known_mask.copy(),
                           self.warnings)

    def crop(self, lo, hi) -> "VoxelBelief":
        """Sub-grid view [lo, hi) in cell coordinates, clipped to bounds."""
        lo = np.maximum(np.asarray(lo, dtype=int), 0)
        hi = np.minimum(np.asarray(hi, dtype=int), self.grid.dims)
        sl = tuple(slice(a, b) for a, b in zip(lo, hi))
        sub = GridSpec(self.grid.origin + lo * self.grid.cell, self.grid.cell,
                       tuple(hi - lo))
        return VoxelBelief(sub, self.occupancy[sl].copy(),
                           self.semantics[sl].copy(),
                           self.known_mask[sl].copy(), self.warnings)


@njit(cache=True)
def _carve_kernel(origin, dirs, t_end, g_origin, cell, nx, ny, nz, carved):
    """3D DDA: mark every cell strictly traversed by each ray segment."""
    for k in range(dirs.shape[0]):
        t_stop = t_end[k]
        if t_stop <= 0:
            continue
        ox = (origin[0] - g_origin[0]) / cell
        oy = (origin[1] - g_origin[1]) / cell
        oz = (origin[2] - g_origin[2]) / cell
        dx, dy, dz = dirs[k, 0], dirs[k, 1], dirs[k, 2]
        ix, iy, iz = int(math.floor(ox)), int(math.floor(oy)), int(math.floor(oz))
        sx = 1 if dx > 0 else -1
        sy = 1 if dy > 0 else -1
        sz = 1 if dz > 0 else -1
        big = 1e30
        tdx = abs(cell / dx) if dx != 0 else big
        tdy = abs(cell / dy) if dy != 0 else big
        tdz = abs(cell / dz) if dz != 0 else big
        nxt_x = ((ix + (sx > 0)) - ox) * cell / dx if dx != 0 else big
        nxt_y = ((iy + (sy > 0)) - oy) * cell / dy if dy != 0 else big
        nxt_z = ((iz + (sz > 0)) - oz) * cell / dz if dz != 0 else big
        t = 0.0
        while t < t_stop:
            if 0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz:
                carved[ix, iy, iz] = 1
            if nxt_x <= nxt_y and nxt_x <= nxt_z:
                t = nxt_x
                nxt_x += tdx
                ix += sx
            elif nxt_y <= nxt_z:
                t = nxt_y
                nxt_y += tdy
                iy += sy
            else:
                t = nxt_z
                nxt_z += tdz
                iz += sz


def carve_rays(carved: np.ndarray, grid: GridSpec, ray_log,
               backoff: float | None = None):
    """Accumulate free-space evidence from a RayLog into ``carved`` (uint8).

    Rays stop one cell short of their hit point so surface cells stay
    uncarved; ``backoff`` defaults to the grid cell size.
    """
    if backoff is None:
        backoff = grid.cell
    t_end = np.maximum(ray_log.t_hit - backoff, 0.0)
    _carve_kernel(ray_log.origin.astype(np.float64),
                  np.ascontiguousarray(ray_log.dirs, dtype=np.float64),
                  t_end.astype(np.float64),
                  grid.origin, grid.cell,
                  grid.dims[0], grid.dims[1], grid.dims[2], carved)


def rasterize_observed(observed, grid: GridSpec, rays=None,
                       carved: np.ndarray | None = None,
                       prototypes: np.ndarray | None = None) -> VoxelBelief:
    """Build the conditioned voxel belief from observed primitives.

    Cells holding at least one observed primitive mean become known-occupied;
    cells traversed by observation rays (``rays`` is a RayLog or list of
    them, or pass a precomputed ``carved`` grid) become known-free; all other
    cells stay unknown at occupancy 0.5.  Out-of-bounds primitives are
    ignored and counted in ``warnings``.  With ``prototypes`` given, each
    known-occupied cell is labeled with the majority nearest-prototype class
    of its primitives.
    """
    if min(grid.dims) < 1 or grid.n_cells == 0:
        raise EmptyGrid(f"degenerate grid dims {grid.dims}")
    vb = VoxelBelief.unknown(grid)

    if carved is None:
        carved = np.zeros(grid.dims, dtype=np.uint8)
        if rays is not None:
            for log in ([rays] if not isinstance(rays, (list, tuple)) else rays):
                carve_rays(carved, grid, log)
    free = carved > 0
    vb.known_mask[free] = 1
    vb.occupancy[free] = 0.0

    if isinstance(observed, SceneBelief):
        means, embs = observed.means, observed.embeddings
    else:
        observed = list(observed)
        means = np.array([p.mean for p in observed]).reshape(-1, 3)
        embs = (np.array([p.embedding for p in observed])
                if observed else np.zeros((0, 1)))
    cells = grid.to_cell(means) if len(means) else np.zeros((0, 3), dtype=np.int64)
    ok = grid.in_bounds(cells) if len(cells) else np.zeros(0, dtype=bool)
    vb.warnings = int(len(cells) - ok.sum())
    cells = cells[ok]
    if len(cells):
        vb.occupancy[cells[:, 0], cells[:, 1], cells[:, 2]] = 1.0
        vb.known_mask[cells[:, 0], cells[:, 1], cells[:, 2]] = 1
        if prototypes is not None:
            cls = nearest_class(embs[ok], prototypes).astype(np.int64)
            flat = np.ravel_multi_index(cells.T, grid.dims)
            # majority class per cell: count (cell, class) pairs
            pair = flat * len(prototypes) + cls
            uniq, counts = np.unique(pair, return_counts=True)
            order = np.lexsort((-counts, uniq // len(prototypes)))
            uniq, counts = uniq[order], counts[order]
            cell_ids = uniq // len(prototypes)
            first = np.ones(len(uniq), dtype=bool)
            first[1:] = cell_ids[1:] != cell_ids[:-1]
            win_cells = cell_ids[first]
            win_cls = (uniq % len(prototypes))[first]
            vb.semantics.ravel()[win_cells] = win_cls.astype(np.int16)
    return vb


def _state_tensor(vb: VoxelBelief, proj_prototypes: np.ndarray) -> np.ndarray:
    """Conditioned diffusion state: occupancy in [-1,1] plus semantic channels."""
    d = proj_prototypes.shape[1]
    x = np.zeros(vb.grid.dims + (1 + d,), dtype=np.float32)
    x[..., 0] = 2.0 * vb.occupancy - 1.0
    occ_known = (vb.known_mask > 0) & (vb.occupancy >= 0.5)
    x[occ_known, 1:] = proj_prototypes[vb.semantics[occ_known]].astype(np.float32)
    return x


def sample_hypotheses(conditioned: VoxelBelief, K: int,
                      denoiser: DenoiserParams, schedule: NoiseSchedule,
                      seed: int) -> list:
    """Draw K conditional reverse-diffusion samples of the full grid.

    All K chains are batched through the denoiser with independent noise
    streams seeded by ``seed ^ hypothesis_id``.  Occupancy is thresholded at
    0.5; semantics are assigned per occupied connected component by nearest
    prototype of the component's mean predicted embedding; known cells are
    restored exactly from the conditioning.
    """
    denoiser.require_trained()
    if K < 1:
        raise ValueError("K must be >= 1")
    prototypes = denoiser.proj_prototypes
    grid = conditioned.grid
    d = prototypes.shape[1]
    c_state = 1 + d
    x_cond = _state_tensor(conditioned, prototypes)
    mask = conditioned.known_mask > 0
    mask_channel = mask.astype(np.float32)[..., None]

    rngs = [np.random.default_rng(seed ^ h) for h in range(K)]
    shape = grid.dims + (c_state,)
    x = np.stack([r.standard_normal(shape).astype(np.float32) for r in rngs])
    x[:, mask] = x_cond[mask]

    T = schedule.T
    for tau in range(T, 0, -1):
        tau_channel = np.full(grid.dims + (1,), tau / T, dtype=np.float32)
        net_in = np.concatenate(
            [x, np.broadcast_to(mask_channel, (K,) + mask_channel.shape),
             np.broadcast_to(tau_channel, (K,) + tau_channel.shape)], axis=-1)
        x0_hat = np.clip(net_forward(denoiser, net_in), -1.0, 1.0)
        if tau > 1:
            noise = np.stack([r.standard_normal(shape).astype(np.float32)
                              for r in rngs])
        else:
            noise = np.zeros_like(x)
        x = reverse_step(x, x0_hat, tau, schedule, noise).astype(np.float32)
        x[:, mask] = x_cond[mask]

    out = []
    for h in range(K):
        occ = (x[h, ..., 0] >= 0.0)
        occ[mask] = conditioned.occupancy[mask] >= 0.5
        sem = _component_semantics(occ, x[h, ..., 1:], prototypes)
        sem[mask] = conditioned.semantics[mask]
        sem[mask & ~occ] = 0
        vb = VoxelBelief(grid, occ.astype(np.float32), sem,
                         conditioned.known_mask.copy())
        out.append(vb)
    return out


def _component_semantics(occ: np.ndarray, emb: np.ndarray,
                         prototypes: np.ndarray) -> np.ndarray:
    """Label occupied components and classify each by its mean embedding.

    In furnished rooms the raw occupied set is one blob (floor touches
    everything), so components are refined by the per-cell nearest-prototype
    class before the per-component assignment.
    """
    sem = np.zeros(occ.shape, dtype=np.int16)
    if not occ.any():
        return sem
    d = emb.shape[-1]
    cell_cls = np.zeros(occ.shape, dtype=np.int16)
    cell_cls[occ] = nearest_class(emb[occ], prototypes).astype(np.int16)
    for c in np.unique(cell_cls[occ]):
        labels, n_comp = ndimage.label(cell_cls == c)
        if not n_comp:
            continue
        flat = labels.ravel()
        sums = np.zeros((n_comp + 1, d))
        np.add.at(sums, flat, emb.reshape(-1, d))
        counts = np.bincount(flat, minlength=n_comp + 1)
        means = sums[1:] / np.maximum(counts[1:, None], 1)
        comp_cls = nearest_class(means, prototypes).astype(np.int16)
        region = cell_cls == c
        sem[region] = comp_cls[labels[region] - 1]
    return sem


def lift_to_gaussians(voxels: VoxelBelief, embed) -> list:
    """One imagined primitive per occupied cell outside the evidence mask.

    ``embed`` maps a class label to its embedding.  Cell centers become
    means with isotropic covariance (cell/2)^2, opacity 0.8, and the class
    color as appearance; known cells produce nothing.
    """
    grid = voxels.grid
    occ = voxels.occupancy >= 0.5
    new = occ & (voxels.known_mask == 0)
    cells = np.argwhere(new)
    if len(cells) == 0:
        return []
    centers = grid.centers(cells)
    cov = np.eye(3) * max((grid.cell / 2.0) ** 2, COV_EIG_FLOOR)
    prims = []
    emb_cache = {}
    for cell, center in zip(cells, centers):
        cls_id = int(voxels.semantics[tuple(cell)])
        name = CLASS_NAMES[cls_id] if cls_id > 0 else "wall"
        if name not in emb_cache:
            e = np.asarray(embed(name), dtype=np.float64)
            emb_cache[name] = (e / np.linalg.norm(e), class_color(name))
        e, color = emb_cache[name]
        prims.append(GaussianPrimitive(center, cov, IMAGINED_OPACITY,
                                       color, e, Origin.IMAGINED))
    return prims


@dataclass(frozen=True)
class TrainConfig:
    batch: int = 3
    lr: float = 1e-3
    mask_free_prob: float = 0.15
    crop: tuple = (24, 24, 7)


def train_denoiser(worlds: list, schedule: NoiseSchedule, steps: int,
                   seed: int, prototypes: np.ndarray | None = None,
                   config: TrainConfig = TrainConfig()) -> DenoiserParams:
    """Train the voxel denoiser to predict clean grids from noised ones.

    ``worlds`` is a corpus of ground-truth VoxelBelief grids (dims may vary;
    training draws fixed-size random crops, zero-padded where a grid is
    smaller).  Each step noises a batch at a random tau, replaces a random
    "observed" region with clean values (matching inference-time replacement
    guidance), and regresses the clean state under MSE with Adam.  With
    steps = 0 the initialization is returned with its probe loss recorded
    (and stays flagged untrained).
    """
    if len(worlds) < 100:
        raise InsufficientData(f"{len(worlds)} training grids < 100")
    if prototypes is None:
        prototypes = class_prototypes(default_provider())
    basis = prototype_basis(prototypes)
    proj = prototypes @ basis.T
    r = basis.shape[0]
    states = [_gt_state(v, proj) for v in worlds]
    rng = np.random.default_rng(seed)

    params = init_denoiser(r, seed=seed)
    params.prototypes = prototypes.copy()
    params.basis = basis
    adam = AdamState.for_params(params)
    losses = np.zeros(max(steps, 1))
    for it in range(max(steps, 1)):
        x, target = _training_batch(states, schedule, config, rng, r)
        loss, gw, gb = loss_and_grads(params, x, target)
        losses[it] = loss
        if steps == 0:
            break
        adam_step(params, gw, gb, adam, lr=config.lr)
    params.steps = steps
    params.loss_history = losses
    tail = losses[max(0, steps - 20):max(steps, 1)]
    params.final_loss = float(tail.mean())
    return params


def _gt_state(vb: VoxelBelief, proj_prototypes: np.ndarray) -> np.ndarray:
    d = proj_prototypes.shape[1]
    x = np.zeros(vb.grid.dims + (1 + d,), dtype=np.float32)
    x[..., 0] = 2.0 * (vb.occupancy >= 0.5) - 1.0
    occ = vb.occupancy >= 0.5
    x[occ, 1:] = proj_prototypes[vb.semantics[occ]].astype(np.float32)
    return x


def _random_known_mask(dims, rng, free_prob: float) -> np.ndarray:
    """Observation-like evidence masks: nothing, random boxes, or a half-space."""
    mask = np.zeros(dims, dtype=bool)
    u = rng.random()
    if u < free_prob:
        return mask
    if u < 0.55:
        for _ in range(int(rng.integers(1, 4))):
            lo = [int(rng.integers(0, max(1, s - 1))) for s in dims]
            hi = [int(min(s, l + rng.integers(2, max(3, s)))) for l, s in zip(lo, dims)]
            mask[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] = True
    else:
        axis = int(rng.integers(2))
        cut = int(rng.integers(1, dims[axis]))
        sl = [slice(None)] * 3
        sl[axis] = slice(0, cut) if rng.random() < 0.5 else slice(cut, None)
        mask[tuple(sl)] = True
    return mask


def _random_crop(state: np.ndarray, crop, rng) -> np.ndarray:
    """Fixed-size crop; grids smaller than the crop are zero-padded (empty)."""
    out = np.zeros(tuple(crop) + state.shape[-1:], dtype=state.dtype)
    out[..., 0] = -1.0  # empty space, occupancy 0
    src_lo, dst_lo, span = [], [], []
    for axis in range(3):
        s = state.shape[axis]
        c = crop[axis]
        if s > c:
            start = int(rng.integers(0, s - c + 1))
            src_lo.append(start)
            dst_lo.append(0)
            span.append(c)
        else:
            src_lo.append(0)
            dst_lo.append(0)
            span.append(s)
    src = tuple(slice(a, a + n) for a, n in zip(src_lo, span))
    dst = tuple(slice(a, a + n) for a, n in zip(dst_lo, span))
    out[dst] = state[src]
    return out


def _training_batch(states: list, schedule, config, rng, d):
    dims = tuple(config.crop)
    batch_in = np.zeros((config.batch,) + dims + (1 + d + 2,), dtype=np.float32)
    target = np.zeros((config.batch,) + dims + (1 + d,), dtype=np.float32)
    for b in range(config.batch):
        x0 = _random_crop(states[int(rng.integers(len(states)))], dims, rng)
        tau = int(rng.integers(1, schedule.T + 1))
        noise = rng.standard_normal(x0.shape).astype(np.float32)
        x_tau = forward_noise(x0, tau, noise, schedule).astype(np.float32)
        mask = _random_known_mask(dims, rng, config.mask_free_prob)
        x_tau[mask] = x0[mask]
        batch_in[b, ..., :1 + d] = x_tau
        batch_in[b, ..., 1 + d] = mask
        batch_in[b, ..., 2 + d] = tau / schedule.T
        target[b] = x0
    return batch_in, target


def denoising_mse(params: DenoiserParams, grids: list,
                  schedule: NoiseSchedule, seed: int,
                  n_draws: int = 64, baseline: bool = False,
                  config: TrainConfig = TrainConfig()) -> float:
    """Held-out denoising MSE; with baseline=True score predict-0.5-everywhere."""
    proj = params.proj_prototypes
    states = [_gt_state(v, proj) for v in grids]
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(n_draws):
        x, target = _training_batch(states, schedule, config, rng,
                                    proj.shape[1])
        if baseline:
            pred = np.zeros_like(target)
        else:
            pred = net_forward(params, x)
        total += float(np.mean((pred - target) ** 2))
    return total / n_draws
