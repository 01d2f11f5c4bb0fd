"""Procedural multi-room ground-truth environment.

Worlds are axis-aligned: rectangular rooms chained through door openings,
box furniture, slab floors, and walls of finite thickness.  Observations
come from exact ray/box intersection, so depth images are noise-free and
the ground-truth occupancy grid is analytic.  Everything is deterministic
per seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .belief import CameraPose, Observation
from .errors import GenerationFailed, PoseOutOfBounds, UnknownTarget
from .semantics import EmbeddingProvider, default_provider
from .vocab import CLASS_ID, CLASS_NAMES, DEFAULT_TARGETS, class_color

WALL_HEIGHT = 2.0
WALL_THICKNESS = 0.10
DOOR_WIDTH = 1.0
FLOOR_DEPTH = 0.05
CAMERA_HEIGHT = 1.2
MAX_RANGE = 10.0

AGENT_RADIUS = 0.2
FORWARD_STEP = 0.25
TURN_STEP = math.pi / 6  # 30 degrees

# Egocentric camera: 90 degree horizontal FOV, pitched down so nearby
# low furniture enters the frame.
CAM_WIDTH = 48
CAM_HEIGHT = 36
CAM_PITCH = 0.35  # radians below horizontal

# Success test: distance threshold and central window fraction of image width.
SUCCESS_DIST = 1.5
CENTRAL_FRACTION = 0.4

FURNITURE_DIMS = {
    # class: (width, depth, height) nominal footprint in meters
    "table": (1.2, 0.8, 0.75),
    "chair": (0.5, 0.5, 0.9),
    "sofa": (1.8, 0.85, 0.8),
    "bed": (1.9, 1.5, 0.6),
    "shelf": (0.9, 0.35, 1.7),
    "lamp": (0.35, 0.35, 1.5),
    "plant": (0.4, 0.4, 1.1),
}

ACTIONS = ("forward", "left", "right", "done")


@dataclass(frozen=True)
class Rect:
    lo: np.ndarray  # (2,)
    hi: np.ndarray  # (2,)

    def contains(self, p, margin: float = 0.0) -> bool:
        return bool(np.all(p >= self.lo + margin) and np.all(p <= self.hi - margin))

    @property
    def size(self):
        return self.hi - self.lo

    @property
    def area(self) -> float:
        return float(np.prod(self.size))


@dataclass(frozen=True)
class Door:
    room_a: int
    room_b: int
    center: np.ndarray  # (2,) point on the shared wall line
    along_axis: int     # axis the opening spans (0 = x, 1 = y)
    width: float = DOOR_WIDTH


@dataclass(frozen=True)
class Furniture:
    lo: np.ndarray  # (3,)
    hi: np.ndarray  # (3,)
    cls: str
    color: np.ndarray
    room: int

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)


@dataclass(eq=False)
class World:
    seed: int
    rooms: list
    doors: list
    furniture: list
    bounds_lo: np.ndarray  # (3,)
    bounds_hi: np.ndarray  # (3,)
    _geom: dict = field(default=None, repr=False)

    def geometry(self) -> dict:
        """Packed box arrays for raycasting: walls, floors, furniture."""
        if self._geom is None:
            self._geom = _build_geometry(self)
        return self._geom

    def furniture_of(self, cls: str) -> list:
        return [f for f in self.furniture if f.cls == cls]


@dataclass(frozen=True)
class AgentState:
    position: np.ndarray  # (2,)
    heading: float        # radians, 0 = +x, counterclockwise


@dataclass(frozen=True, eq=False)
class RayLog:
    """Free-space evidence from one observation: rays and hit distances."""

    origin: np.ndarray  # (3,)
    dirs: np.ndarray    # (K,3) unit, world frame
    t_hit: np.ndarray   # (K,) distance along dir; capped at max range


@dataclass(frozen=True)
class WorldConfig:
    rooms_min: int = 2
    rooms_max: int = 3
    room_size_min: float = 3.5
    room_size_max: float = 5.5
    furniture_density: float = 0.15  # items per square meter
    ensure_classes: tuple = DEFAULT_TARGETS
    max_retries: int = 60


def generate_world(seed: int, config: WorldConfig = WorldConfig()) -> World:
    """Deterministically generate a connected furnished world.

    Rooms are attached one by one to a random existing room along +/-x or
    +/-y with a door on every shared wall, which keeps the room graph a
    connected tree by construction; a flood fill re-checks connectivity.
    """
    if config.rooms_min < 1 or config.rooms_max < config.rooms_min:
        raise GenerationFailed("invalid room count range")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    for attempt in range(config.max_retries):
        world = _try_generate(seed, config, rng)
        if world is not None and _connected(world):
            return world
    raise GenerationFailed(f"could not generate world for seed {seed}")


def _try_generate(seed, config, rng):
    n_rooms = int(rng.integers(config.rooms_min, config.rooms_max + 1))
    size = lambda: rng.uniform(config.room_size_min, config.room_size_max, 2)
    rooms = [Rect(np.zeros(2), size())]
    doors = []
    for _ in range(1, n_rooms):
        placed = False
        for _ in range(40):
            base_idx = int(rng.integers(len(rooms)))
            base = rooms[base_idx]
            direction = int(rng.integers(4))  # 0:+x 1:-x 2:+y 3:-y
            axis = 0 if direction < 2 else 1
            other = 1 - axis
            s = size()
            # Slide the new room along the shared wall; keep enough overlap
            # for a door plus margins.
            overlap_needed = DOOR_WIDTH + 0.8
            min_lo = base.lo[other] - s[other] + overlap_needed
            max_lo = base.hi[other] - overlap_needed
            if max_lo < min_lo:
                continue
            lo = np.zeros(2)
            lo[other] = rng.uniform(min_lo, max_lo)
            if direction % 2 == 0:
                lo[axis] = base.hi[axis]
            else:
                lo[axis] = base.lo[axis] - s[axis]
            cand = Rect(lo, lo + s)
            if any(_rects_overlap(cand, r) for r in rooms):
                continue
            span_lo = max(base.lo[other], cand.lo[other])
            span_hi = min(base.hi[other], cand.hi[other])
            pos = rng.uniform(span_lo + 0.2 + DOOR_WIDTH / 2,
                              span_hi - 0.2 - DOOR_WIDTH / 2)
            center = np.zeros(2)
            center[axis] = base.hi[axis] if direction % 2 == 0 else base.lo[axis]
            center[other] = pos
            doors.append(Door(base_idx, len(rooms), center, other))
            rooms.append(cand)
            placed = True
            break
        if not placed:
            return None

    furniture = _place_furniture(rooms, doors, config, rng)
    if furniture is None:
        return None
    lo = np.min([r.lo for r in rooms], axis=0) - WALL_THICKNESS
    hi = np.max([r.hi for r in rooms], axis=0) + WALL_THICKNESS
    return World(seed=seed, rooms=rooms, doors=doors, furniture=furniture,
                 bounds_lo=np.array([lo[0], lo[1], -FLOOR_DEPTH]),
                 bounds_hi=np.array([hi[0], hi[1], WALL_HEIGHT]))


def _rects_overlap(a: Rect, b: Rect, eps: float = 1e-9) -> bool:
    return bool(np.all(a.lo < b.hi - eps) and np.all(b.lo < a.hi - eps))


def _place_furniture(rooms, doors, config, rng):
    furniture = []

    def try_place(cls, room_idx, tries=120):
        room = rooms[room_idx]
        w, d, h = FURNITURE_DIMS[cls]
        for _ in range(tries):
            if rng.random() < 0.5:
                w2, d2 = d, w  # rotate 90 degrees
            else:
                w2, d2 = w, d
            half = np.array([w2, d2]) / 2
            margin = WALL_THICKNESS / 2 + 0.08
            lo_lim = room.lo + half + margin
            hi_lim = room.hi - half - margin
            if np.any(hi_lim <= lo_lim):
                continue
            c = rng.uniform(lo_lim, hi_lim)
            lo2, hi2 = c - half, c + half
            clear = True
            for f in furniture:
                if (np.all(lo2 < f.hi[:2] + 0.15) and np.all(f.lo[:2] - 0.15 < hi2)):
                    clear = False
                    break
            if not clear:
                continue
            # keep doorways passable
            for door in doors:
                if np.all(np.abs(c - door.center) < half + DOOR_WIDTH):
                    dmin = _point_rect_distance(door.center, lo2, hi2)
                    if dmin < DOOR_WIDTH / 2 + 2 * AGENT_RADIUS + 0.1:
                        clear = False
                        break
            if not clear:
                continue
            color = np.clip(class_color(cls) + rng.uniform(-0.04, 0.04, 3), 0, 1)
            furniture.append(Furniture(
                lo=np.array([lo2[0], lo2[1], 0.0]),
                hi=np.array([hi2[0], hi2[1], h]), cls=cls,
                color=color, room=room_idx))
            return True
        return False

    for cls in config.ensure_classes:
        order = rng.permutation(len(rooms))
        if not any(try_place(cls, int(r)) for r in order):
            return None
    extra_classes = list(FURNITURE_DIMS)
    for ri, room in enumerate(rooms):
        n = int(round(config.furniture_density * room.area))
        for _ in range(n):
            cls = extra_classes[int(rng.integers(len(extra_classes)))]
            try_place(cls, ri)
    return furniture


def _point_rect_distance(p, lo, hi) -> float:
    d = np.maximum(np.maximum(lo - p, p - hi), 0.0)
    return float(np.linalg.norm(d))


def _connected(world: World) -> bool:
    n = len(world.rooms)
    adj = {i: set() for i in range(n)}
    for d in world.doors:
        adj[d.room_a].add(d.room_b)
        adj[d.room_b].add(d.room_a)
    seen = {0}
    stack = [0]
    while stack:
        for j in adj[stack.pop()]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return len(seen) == n


def _build_geometry(world: World) -> dict:
    """Decompose the world into class-tagged AABBs for raycasting."""
    boxes, classes, colors = [], [], []

    def add(lo, hi, cls, color=None):
        boxes.append((np.asarray(lo, float), np.asarray(hi, float)))
        classes.append(CLASS_ID[cls] if isinstance(cls, str) else cls)
        colors.append(class_color(cls) if color is None else np.asarray(color))

    ht = WALL_THICKNESS / 2
    for ri, room in enumerate(world.rooms):
        add((room.lo[0], room.lo[1], -FLOOR_DEPTH),
            (room.hi[0], room.hi[1], 0.0), "floor")
        for axis in range(2):
            other = 1 - axis
            for side_hi in (False, True):
                line = room.hi[axis] if side_hi else room.lo[axis]
                spans = [(room.lo[other] - ht, room.hi[other] + ht)]
                for door in world.doors:
                    if ri not in (door.room_a, door.room_b):
                        continue
                    if door.along_axis != other:
                        continue
                    if abs(door.center[axis] - line) > 1e-6:
                        continue
                    spans = _cut_spans(spans, door.center[other] - door.width / 2,
                                       door.center[other] + door.width / 2)
                for s_lo, s_hi in spans:
                    if s_hi - s_lo < 1e-6:
                        continue
                    lo = np.zeros(3)
                    hi = np.zeros(3)
                    lo[axis], hi[axis] = line - ht, line + ht
                    lo[other], hi[other] = s_lo, s_hi
                    lo[2], hi[2] = 0.0, WALL_HEIGHT
                    add(lo, hi, "wall")
    for f in world.furniture:
        add(f.lo, f.hi, f.cls, f.color)

    lo = np.array([b[0] for b in boxes])
    hi = np.array([b[1] for b in boxes])
    return {"lo": lo, "hi": hi,
            "cls": np.array(classes, dtype=np.int32),
            "color": np.array(colors, dtype=np.float64)}


def _cut_spans(spans, cut_lo, cut_hi):
    out = []
    for lo, hi in spans:
        if cut_hi <= lo or cut_lo >= hi:
            out.append((lo, hi))
            continue
        if cut_lo > lo:
            out.append((lo, cut_lo))
        if cut_hi < hi:
            out.append((cut_hi, hi))
    return out


def default_intrinsics(width: int = CAM_WIDTH, height: int = CAM_HEIGHT):
    fx = width / 2.0  # 90 degree horizontal FOV
    return dict(fx=fx, fy=fx, cx=width / 2.0, cy=height / 2.0,
                width=width, height=height)


def heading_rotation(heading: float, pitch: float = CAM_PITCH) -> np.ndarray:
    """World->camera rotation facing ``heading``, pitched ``pitch`` rad down."""
    ch, sh = math.cos(heading), math.sin(heading)
    cp, sp = math.cos(pitch), math.sin(pitch)
    f = np.array([cp * ch, cp * sh, -sp])
    r = np.array([sh, -ch, 0.0])
    d = np.array([-sp * ch, -sp * sh, -cp])
    return np.stack([r, d, f])


def camera_pose(state: AgentState, intrinsics: dict | None = None,
                pitch: float = CAM_PITCH) -> CameraPose:
    intr = intrinsics or default_intrinsics()
    pos = np.array([state.position[0], state.position[1], CAMERA_HEIGHT])
    return CameraPose(position=pos,
                      rotation=heading_rotation(state.heading, pitch), **intr)


def raycast(world: World, origin: np.ndarray, dirs: np.ndarray,
            exclude: int = -1):
    """First-hit query for a bundle of rays.

    Returns (t, box_index) with t = inf and index = -1 for misses.  ``exclude``
    removes one box from consideration (for line-of-sight tests).
    """
    geom = world.geometry()
    lo, hi = geom["lo"], geom["hi"]
    o = origin.reshape(1, 1, 3)
    d = dirs.reshape(-1, 1, 3)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (lo[None] - o) * inv
        t2 = (hi[None] - o) * inv
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    tnear = np.nanmax(tmin, axis=2)
    tfar = np.nanmin(tmax, axis=2)
    hit = (tnear <= tfar) & (tnear > 1e-6)
    t = np.where(hit, tnear, np.inf)
    if exclude >= 0:
        t[:, exclude] = np.inf
    idx = np.argmin(t, axis=1)
    tbest = t[np.arange(t.shape[0]), idx]
    idx = np.where(np.isfinite(tbest), idx, -1)
    return tbest, idx


def observe(world: World, pose: CameraPose,
            provider: EmbeddingProvider | None = None,
            ray_log_stride: int = 2):
    """Egocentric RGB-D-semantic observation by exact raycasting.

    Returns (Observation, RayLog).  Depth is planar (camera z), zero beyond
    MAX_RANGE with the validity mask cleared.  The semantic image carries the
    hit class's label embedding; RGB applies simple distance shading to the
    surface color.  The ray log records the subsampled ray bundle with hit
    distances (capped at max range) for free-space carving.
    """
    if not (np.all(pose.position >= world.bounds_lo - 2.0)
            and np.all(pose.position <= world.bounds_hi + 2.0)):
        raise PoseOutOfBounds(f"camera at {pose.position} far outside world")
    provider = provider or default_provider()
    H, W = pose.height, pose.width
    vs, us = np.mgrid[0:H, 0:W]
    dirs = pose.ray_directions(us.astype(np.float64), vs.astype(np.float64))
    dirs_flat = dirs.reshape(-1, 3)
    t, idx = raycast(world, pose.position, dirs_flat)

    forward = pose.rotation[2]
    z = t * (dirs_flat @ forward)
    valid = np.isfinite(t) & (z <= MAX_RANGE) & (z > 0)

    geom = world.geometry()
    shade = np.clip(1.0 - 0.05 * np.where(np.isfinite(t), t, 0.0), 0.45, 1.0)
    rgb = np.full((H * W, 3), 0.5)
    sem = np.zeros((H * W, provider.dim), dtype=np.float64)
    classes = geom["cls"]
    proto = np.zeros((len(CLASS_NAMES), provider.dim))
    hit_classes = np.unique(classes[idx[valid]])
    for c in hit_classes:
        proto[c] = provider.embed(CLASS_NAMES[c])
    vi = np.flatnonzero(valid)
    rgb[vi] = geom["color"][idx[vi]] * shade[vi, None]
    sem[vi] = proto[classes[idx[vi]]]

    depth = np.where(valid, z, 0.0).reshape(H, W).astype(np.float32)
    obs = Observation(rgb=rgb.reshape(H, W, 3).astype(np.float32),
                      depth=depth,
                      semantic=sem.reshape(H, W, provider.dim).astype(np.float32),
                      validity_mask=valid.reshape(H, W).astype(np.uint8),
                      pose=pose)

    sel = (vs % ray_log_stride == 0) & (us % ray_log_stride == 0)
    sel = sel.ravel()
    t_log = np.minimum(t[sel], MAX_RANGE / np.maximum(dirs_flat[sel] @ forward, 1e-9))
    log = RayLog(origin=pose.position.copy(),
                 dirs=dirs_flat[sel].copy(),
                 t_hit=t_log.astype(np.float64))
    return obs, log


def _collides(world: World, p: np.ndarray) -> bool:
    """Disc of AGENT_RADIUS at p against walls and furniture footprints."""
    geom = world.geometry()
    lo, hi = geom["lo"], geom["hi"]
    solid = geom["cls"] != CLASS_ID["floor"]
    d = np.maximum(np.maximum(lo[solid, :2] - p, p - hi[solid, :2]), 0.0)
    if np.any(np.einsum("ij,ij->i", d, d) < AGENT_RADIUS ** 2):
        return True
    return not any(r.contains(p) for r in world.rooms)


def step(world: World, state: AgentState, action: str):
    """Apply one discrete action; returns (new_state, collided)."""
    if action == "forward":
        new_p = state.position + FORWARD_STEP * np.array(
            [math.cos(state.heading), math.sin(state.heading)])
        if _collides(world, new_p):
            return state, True
        return AgentState(new_p, state.heading), False
    if action == "left":
        return AgentState(state.position, _wrap(state.heading + TURN_STEP)), False
    if action == "right":
        return AgentState(state.position, _wrap(state.heading - TURN_STEP)), False
    if action == "done":
        return state, False
    raise ValueError(f"unknown action {action!r}")


def _wrap(h: float) -> float:
    return (h + math.pi) % (2 * math.pi) - math.pi


def check_success(world: World, state: AgentState, target_class: str,
                  dist_threshold: float = SUCCESS_DIST,
                  central_fraction: float = CENTRAL_FRACTION) -> bool:
    """True iff some target instance is near, centered in view, and visible."""
    targets = world.furniture_of(target_class)
    if not targets:
        raise UnknownTarget(f"no {target_class!r} in world")
    pose = camera_pose(state)
    geom = world.geometry()
    n_static = len(geom["cls"]) - len(world.furniture)
    for fi, f in enumerate(world.furniture):
        if f.cls != target_class:
            continue
        d2 = _point_rect_distance(state.position, f.lo[:2], f.hi[:2])
        if d2 > dist_threshold:
            continue
        center = f.center
        cam = pose.world_to_camera(center)[0]
        if cam[2] <= 0:
            continue
        u = pose.fx * cam[0] / cam[2] + pose.cx
        half_win = central_fraction / 2 * pose.width
        if not (pose.cx - half_win <= u <= pose.cx + half_win):
            continue
        to_center = center - pose.position
        dist = np.linalg.norm(to_center)
        t, idx = raycast(world, pose.position, to_center[None] / dist)
        if idx[0] == n_static + fi or t[0] >= dist - 1e-6:
            return True
    return False


def random_free_state(world: World, rng: np.random.Generator,
                      clear_of: str | None = None,
                      min_clear_dist: float = 2.0) -> AgentState:
    """Sample a collision-free agent state; heading on the 30-degree lattice."""
    lo = world.bounds_lo[:2] + 0.3
    hi = world.bounds_hi[:2] - 0.3
    clear_boxes = world.furniture_of(clear_of) if clear_of else []
    for _ in range(400):
        p = rng.uniform(lo, hi)
        if _collides(world, p):
            continue
        if clear_boxes and min(
                _point_rect_distance(p, f.lo[:2], f.hi[:2]) for f in clear_boxes
        ) < min_clear_dist:
            continue
        heading = TURN_STEP * int(rng.integers(12))
        return AgentState(p, _wrap(heading))
    raise GenerationFailed("no free agent position found")


def gt_voxel_grid(world: World, grid=None, cell: float = 0.25,
                  z_top: float = 1.5):
    """Analytic ground-truth voxel belief of the whole world.

    Every cell is known; a cell is occupied (with the box's class) when any
    geometry box intersects its cube.  Furniture overrides walls and floor
    where boxes overlap a cell.
    """
    from .sampler import GridSpec, VoxelBelief

    if grid is None:
        grid = GridSpec.for_bounds(world.bounds_lo, world.bounds_hi,
                                   cell=cell, z_top=z_top)
    geom = world.geometry()
    nx, ny, nz = grid.dims
    occ = np.zeros(grid.dims, dtype=np.float32)
    sem = np.zeros(grid.dims, dtype=np.int16)
    axes = [grid.origin[a] + (np.arange(grid.dims[a]) + 0.5) * grid.cell
            for a in range(3)]
    cx, cy, cz = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([cx, cy, cz], axis=-1)
    half = grid.cell / 2
    for b_lo, b_hi, cls in zip(geom["lo"], geom["hi"], geom["cls"]):
        inside = np.all(centers + half > b_lo, axis=-1) \
            & np.all(centers - half < b_hi, axis=-1)
        occ[inside] = 1.0
        sem[inside] = cls
    return VoxelBelief(grid, occ, sem, np.ones(grid.dims, dtype=np.uint8))


def gt_occupancy(world: World, origin: np.ndarray, cell: float,
                 dims: tuple, z_band=(0.2, 1.4)) -> np.ndarray:
    """Analytic 2D planning grid: 0 = free, 1 = occupied (walls/furniture).

    Cells outside every room count as occupied.  A cell is occupied when any
    solid box whose z-extent overlaps ``z_band`` intersects the cell square.
    """
    nx, ny = dims
    geom = world.geometry()
    grid = np.ones((nx, ny), dtype=np.int8)
    xs = origin[0] + (np.arange(nx) + 0.5) * cell
    ys = origin[1] + (np.arange(ny) + 0.5) * cell
    cx, cy = np.meshgrid(xs, ys, indexing="ij")
    centers = np.stack([cx.ravel(), cy.ravel()], axis=1)
    inside = np.zeros(len(centers), dtype=bool)
    for r in world.rooms:
        inside |= np.all((centers >= r.lo) & (centers <= r.hi), axis=1)
    grid.ravel()[inside] = 0
    lo, hi = geom["lo"], geom["hi"]
    solid = (geom["cls"] != CLASS_ID["floor"]) & (lo[:, 2] < z_band[1]) & (hi[:, 2] > z_band[0])
    half = cell / 2
    for b_lo, b_hi in zip(lo[solid], hi[solid]):
        overlap = (np.all(centers + half > b_lo[:2], axis=1)
                   & np.all(centers - half < b_hi[:2], axis=1))
        grid.ravel()[overlap] = 1
    return grid
