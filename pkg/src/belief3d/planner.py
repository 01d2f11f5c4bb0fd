"""Belief-guided navigation.

The decision loop: sense, expand the observed belief, sample K imagined
completions, localize the goal in observed semantics, propose waypoints
(goal-directed or frontier), plan with A*, mentally simulate each candidate
path by rendering the hypotheses along it, score with semantic queries plus
an information-gain term, execute a short prefix of the best plan, repeat.

Ablations: ``single_hypothesis`` forces K = 1; ``no_geometry`` skips
imagination entirely and explores frontier-only on observed occupancy.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .belief import CameraPose, SceneBelief, incorporate_observation, replace_imagination
from .denoiser import DenoiserParams
from .diffusion import NoiseSchedule
from .errors import EmptyResultSet, NoFrontier
from .render import render
from .sampler import (
    GridSpec,
    VoxelBelief,
    carve_rays,
    lift_to_gaussians,
    rasterize_observed,
    sample_hypotheses,
)
from .semantics import EmbeddingProvider, class_prototypes, localize, nearest_class, query_heatmap
from .vocab import CLASS_ID
from . import worldsim
from .worldsim import (
    CAMERA_HEIGHT,
    FORWARD_STEP,
    TURN_STEP,
    AgentState,
    World,
    camera_pose,
    check_success,
    default_intrinsics,
    heading_rotation,
    observe,
    random_free_state,
    step,
)

FREE, OCCUPIED, UNKNOWN = 0, 1, 2

OPACITY_OCCUPANCY_MIN = 0.3
DEFAULT_HEIGHT_BAND = (0.2, 1.4)
INFO_RADIUS = 1.0  # meters around the path counted for information gain


@dataclass(eq=False)
class OccupancyGrid:
    origin: np.ndarray  # (2,) world xy of cell (0,0) corner
    cell: float
    states: np.ndarray  # (nx,ny) int8 of FREE/OCCUPIED/UNKNOWN

    @property
    def dims(self):
        return self.states.shape

    def to_cell(self, xy) -> tuple:
        c = np.floor((np.asarray(xy)[:2] - self.origin) / self.cell).astype(int)
        return int(c[0]), int(c[1])

    def center(self, cell) -> np.ndarray:
        return self.origin + (np.asarray(cell) + 0.5) * self.cell

    def in_bounds(self, cell) -> bool:
        return 0 <= cell[0] < self.dims[0] and 0 <= cell[1] < self.dims[1]


@dataclass(frozen=True)
class CameraTemplate:
    """Pose factory for mental simulation along grid paths."""

    grid: OccupancyGrid
    intrinsics: dict
    height: float = CAMERA_HEIGHT
    fallback_heading: float = 0.0

    def pose_at(self, cell, heading: float) -> CameraPose:
        xy = self.grid.center(cell)
        pos = np.array([xy[0], xy[1], self.height])
        return CameraPose(position=pos, rotation=heading_rotation(heading),
                          **self.intrinsics)


def belief_occupancy(belief: SceneBelief, grid: GridSpec,
                     height_band=DEFAULT_HEIGHT_BAND,
                     carved: np.ndarray | None = None,
                     prototypes: np.ndarray | None = None) -> OccupancyGrid:
    """Project a belief onto the navigation plane.

    A cell is Occupied when any primitive with opacity >= 0.3 and mean z in
    the height band lands in it; Free when an observation ray carved the
    cell's column inside the band or a floor-class primitive covers it;
    Unknown otherwise.
    """
    nx, ny, nz = grid.dims
    states = np.full((nx, ny), UNKNOWN, dtype=np.int8)

    free2d = np.zeros((nx, ny), dtype=bool)
    if carved is not None:
        z_lo = max(int((height_band[0] - grid.origin[2]) / grid.cell), 0)
        z_hi = min(int(np.ceil((height_band[1] - grid.origin[2]) / grid.cell)), nz)
        if z_hi > z_lo:
            free2d |= np.any(carved[:, :, z_lo:z_hi] > 0, axis=2)

    if belief.n:
        z = belief.means[:, 2]
        cells = np.floor((belief.means[:, :2] - grid.origin[:2]) / grid.cell).astype(int)
        ok = (cells[:, 0] >= 0) & (cells[:, 0] < nx) & (cells[:, 1] >= 0) & (cells[:, 1] < ny)
        if prototypes is not None:
            cls = nearest_class(belief.embeddings, prototypes)
            floor_sel = ok & (cls == CLASS_ID["floor"])
            free2d[cells[floor_sel, 0], cells[floor_sel, 1]] = True
        occ_sel = ok & (belief.opacities >= OPACITY_OCCUPANCY_MIN) \
            & (z >= height_band[0]) & (z <= height_band[1])
        states[free2d] = FREE
        states[cells[occ_sel, 0], cells[occ_sel, 1]] = OCCUPIED
    else:
        states[free2d] = FREE
    return OccupancyGrid(grid.origin[:2].copy(), grid.cell, states)


def inflate_occupied(grid: OccupancyGrid) -> OccupancyGrid:
    """One-cell dilation of Occupied so paths keep agent-radius clearance."""
    occ = grid.states == OCCUPIED
    grown = occ.copy()
    grown[1:] |= occ[:-1]
    grown[:-1] |= occ[1:]
    grown[:, 1:] |= occ[:, :-1]
    grown[:, :-1] |= occ[:, 1:]
    grown[1:, 1:] |= occ[:-1, :-1]
    grown[1:, :-1] |= occ[:-1, 1:]
    grown[:-1, 1:] |= occ[1:, :-1]
    grown[:-1, :-1] |= occ[1:, 1:]
    states = grid.states.copy()
    states[grown] = OCCUPIED
    return OccupancyGrid(grid.origin, grid.cell, states)


def sample_waypoints(grid: OccupancyGrid, agent_cell, localized_goal,
                     k_waypoints: int, radius: float) -> list:
    """Goal waypoint when localized, else spread frontier cells.

    Frontier = Free cell 4-adjacent to Unknown, within ``radius`` meters of
    the agent.  Candidates are farthest-point-sampled starting from the
    frontier nearest the agent; raises NoFrontier when none exist.
    """
    if localized_goal is not None:
        return [tuple(localized_goal)]
    if k_waypoints < 1:
        raise ValueError("k_waypoints must be >= 1")
    s = grid.states
    free = s == FREE
    unk = s == UNKNOWN
    adj = np.zeros_like(unk)
    adj[:-1] |= unk[1:]
    adj[1:] |= unk[:-1]
    adj[:, :-1] |= unk[:, 1:]
    adj[:, 1:] |= unk[:, :-1]
    frontier = np.argwhere(free & adj)
    if len(frontier) == 0:
        raise NoFrontier("no frontier cells")
    d_agent = np.linalg.norm((frontier - np.asarray(agent_cell)) * grid.cell, axis=1)
    within = d_agent <= radius
    if not np.any(within):
        raise NoFrontier(f"no frontier within {radius} m")
    frontier = frontier[within]
    d_agent = d_agent[within]

    chosen = [int(np.lexsort((frontier[:, 1], frontier[:, 0], d_agent))[0])]
    min_d = np.linalg.norm(frontier - frontier[chosen[0]], axis=1)
    while len(chosen) < min(k_waypoints, len(frontier)):
        nxt = int(np.lexsort((frontier[:, 1], frontier[:, 0], -min_d))[0])
        if nxt in chosen:
            break
        chosen.append(nxt)
        min_d = np.minimum(min_d, np.linalg.norm(frontier - frontier[nxt], axis=1))
    return [tuple(frontier[i]) for i in chosen]


def astar(grid: OccupancyGrid, start, goal,
          unknown_cost_multiplier: float = 2.0):
    """4-connected minimal-cost path.

    Entering a Free cell costs 1, an Unknown cell ``unknown_cost_multiplier``
    (>= 1 so the Manhattan heuristic stays admissible); Occupied cells are
    impassable.  The caller guarantees the start cell is Free.  Returns the
    cell list start..goal inclusive, or None when unreachable.
    """
    if unknown_cost_multiplier < 1.0:
        raise ValueError("unknown cost multiplier must be >= 1")
    start = tuple(start)
    goal = tuple(goal)
    if not (grid.in_bounds(start) and grid.in_bounds(goal)):
        return None
    if grid.states[goal] == OCCUPIED:
        return None
    nx, ny = grid.dims
    g = np.full((nx, ny), np.inf)
    g[start] = 0.0
    parent = {}
    counter = 0
    h0 = abs(start[0] - goal[0]) + abs(start[1] - goal[1])
    heap = [(float(h0), counter, start)]
    closed = np.zeros((nx, ny), dtype=bool)
    while heap:
        f, _, cur = heapq.heappop(heap)
        if closed[cur]:
            continue
        closed[cur] = True
        if cur == goal:
            path = [cur]
            while cur != start:
                cur = parent[cur]
                path.append(cur)
            return path[::-1]
        cx, cy = cur
        base = g[cur]
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nxt = (cx + dx, cy + dy)
            if not (0 <= nxt[0] < nx and 0 <= nxt[1] < ny) or closed[nxt]:
                continue
            s = grid.states[nxt]
            if s == OCCUPIED:
                continue
            cost = 1.0 if s == FREE else unknown_cost_multiplier
            ng = base + cost
            if ng < g[nxt]:
                g[nxt] = ng
                parent[nxt] = cur
                counter += 1
                h = abs(nxt[0] - goal[0]) + abs(nxt[1] - goal[1])
                heapq.heappush(heap, (ng + h, counter, nxt))
    return None


def path_cost(grid: OccupancyGrid, path, unknown_cost_multiplier: float = 2.0) -> float:
    total = 0.0
    for cell in path[1:]:
        total += 1.0 if grid.states[tuple(cell)] == FREE else unknown_cost_multiplier
    return total


def mental_simulate(hypotheses: list, path, camera_template: CameraTemplate,
                    stride: int) -> list:
    """Render every stride-th pose along the path in every hypothesis.

    The final path pose is always rendered; a stride beyond the path length
    therefore produces exactly one render per hypothesis.  Headings follow
    the path tangent.
    """
    if not path:
        raise ValueError("path must be non-empty")
    stride = max(int(stride), 1)
    idxs = list(range(0, len(path) - 1, stride))
    if not idxs or idxs[-1] != len(path) - 1:
        idxs.append(len(path) - 1)
    headings = []
    for i in idxs:
        j = min(i, len(path) - 2)
        if len(path) >= 2:
            d = np.asarray(path[j + 1]) - np.asarray(path[j])
            headings.append(math.atan2(d[1], d[0]))
        else:
            headings.append(camera_template.fallback_heading)
    out = []
    for hyp in hypotheses:
        frames = [render(hyp, camera_template.pose_at(path[i], h))
                  for i, h in zip(idxs, headings)]
        out.append(frames)
    return out


def _unknown_near_path(grid: OccupancyGrid, path, radius_m: float = INFO_RADIUS) -> float:
    r = int(math.ceil(radius_m / grid.cell))
    offsets = [(dx, dy) for dx in range(-r, r + 1) for dy in range(-r, r + 1)
               if (dx * dx + dy * dy) * grid.cell ** 2 <= radius_m ** 2 + 1e-9]
    seen = set()
    nx, ny = grid.dims
    for cx, cy in path:
        for dx, dy in offsets:
            c = (cx + dx, cy + dy)
            if 0 <= c[0] < nx and 0 <= c[1] < ny and c not in seen \
                    and grid.states[c] == UNKNOWN:
                seen.add(c)
    return len(seen) / max(len(path), 1)


def score_path(rollout_obs: list, query: np.ndarray, grid: OccupancyGrid,
               path, w_sem: float = 1.0, w_info: float = 0.3) -> float:
    """Semantic promise plus information gain.

    Semantic term: mean over hypotheses of the maximum per-pixel query
    similarity across that hypothesis's rollout frames.  Information term:
    Unknown cells within 1 m of the path, normalized by path length.
    """
    sem = 0.0
    if rollout_obs:
        per_hyp = []
        for frames in rollout_obs:
            best = -1.0
            for obs in frames:
                best = max(best, float(query_heatmap(obs.semantic, query).max()))
            per_hyp.append(best)
        sem = float(np.mean(per_hyp))
    return w_sem * sem + w_info * _unknown_near_path(grid, path)


@dataclass(frozen=True)
class NavComponents:
    """Everything navigate needs besides the world itself."""

    provider: EmbeddingProvider
    denoiser: DenoiserParams
    schedule: NoiseSchedule
    cell: float = 0.25
    z_top: float = 1.75


@dataclass(frozen=True)
class NavConfig:
    K: int = 3
    T_exec: int = 4
    w_sem: float = 1.0
    w_info: float = 0.3
    unknown_cost: float = 2.0
    n_waypoints: int = 3
    sim_stride: int = 4
    min_score: float = 0.6
    exploration_radius: float = 4.5
    obs_stride: int = 2
    height_band: tuple = DEFAULT_HEIGHT_BAND
    window_cells: int = 22
    sim_width: int = 32
    sim_height: int = 24
    min_start_clearance: float = 2.0
    single_hypothesis: bool = False
    no_geometry: bool = False


@dataclass(eq=False)
class EpisodeResult:
    success: bool
    steps_taken: int
    path_length: float
    shortest_path_length: float
    oracle_steps: int
    collisions: int
    target: str
    world_seed: int
    episode_seed: int
    trace: list = field(default_factory=list)


def _snap_plannable(grid: OccupancyGrid, cell, max_rings: int = 8):
    """Nearest non-Occupied cell by expanding rings; None if all blocked."""
    if grid.in_bounds(cell) and grid.states[tuple(cell)] != OCCUPIED:
        return tuple(cell)
    cx, cy = cell
    for r in range(1, max_rings + 1):
        ring = []
        for dx in range(-r, r + 1):
            for dy in range(-r, r + 1):
                if max(abs(dx), abs(dy)) != r:
                    continue
                c = (cx + dx, cy + dy)
                if grid.in_bounds(c) and grid.states[c] != OCCUPIED:
                    ring.append((dx * dx + dy * dy, c))
        if ring:
            return min(ring)[1]
    return None


def _heading_actions(current: float, target: float) -> list:
    diff = (target - current + math.pi) % (2 * math.pi) - math.pi
    n = int(round(diff / TURN_STEP))
    return ["left"] * n if n >= 0 else ["right"] * (-n)


def path_to_actions(path, state: AgentState, grid: OccupancyGrid) -> list:
    """Greedy rotate-to-face-then-forward conversion of a grid path."""
    actions = []
    heading = state.heading
    for a, b in zip(path[:-1], path[1:]):
        d = (b[0] - a[0], b[1] - a[1])
        target = math.atan2(d[1], d[0])
        actions.extend(_heading_actions(heading, target))
        heading = target
        actions.append("forward")
    return actions


def gt_planning_grid(world: World, grid: GridSpec,
                     height_band=DEFAULT_HEIGHT_BAND) -> OccupancyGrid:
    states = worldsim.gt_occupancy(world, grid.origin, grid.cell,
                                   grid.dims[:2], z_band=height_band)
    out = np.where(states > 0, OCCUPIED, FREE).astype(np.int8)
    return OccupancyGrid(grid.origin[:2].copy(), grid.cell, out)


def shortest_path_info(world: World, grid: OccupancyGrid, start_cell,
                       start_heading: float, target_class: str):
    """GT shortest path to any free cell within success range of the target.

    Returns (length_m, oracle_steps, reachable).  Oracle steps count the
    forwards plus the minimal rotations of the greedy action conversion.
    """
    targets = world.furniture_of(target_class)
    nx, ny = grid.dims
    free = grid.states == FREE
    cand = np.zeros((nx, ny), dtype=bool)
    xs = grid.origin[0] + (np.arange(nx) + 0.5) * grid.cell
    ys = grid.origin[1] + (np.arange(ny) + 0.5) * grid.cell
    cx, cy = np.meshgrid(xs, ys, indexing="ij")
    for f in targets:
        d = np.maximum(np.maximum(f.lo[0] - cx, cx - f.hi[0]), 0.0) ** 2 \
            + np.maximum(np.maximum(f.lo[1] - cy, cy - f.hi[1]), 0.0) ** 2
        cand |= d <= worldsim.SUCCESS_DIST ** 2
    cand &= free
    if not cand.any():
        return 0.0, 0, False
    if cand[tuple(start_cell)]:
        return 0.0, 0, True
    # Dijkstra from start over free cells
    dist = np.full((nx, ny), np.inf)
    dist[tuple(start_cell)] = 0
    heap = [(0.0, 0, tuple(start_cell))]
    counter = 0
    best = None
    while heap:
        d0, _, cur = heapq.heappop(heap)
        if d0 > dist[cur]:
            continue
        if cand[cur]:
            best = cur
            break
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nxt = (cur[0] + dx, cur[1] + dy)
            if 0 <= nxt[0] < nx and 0 <= nxt[1] < ny and free[nxt]:
                nd = d0 + 1.0
                if nd < dist[nxt]:
                    dist[nxt] = nd
                    counter += 1
                    heapq.heappush(heap, (nd, counter, nxt))
    if best is None:
        return 0.0, 0, False
    path = astar(grid, tuple(start_cell), best, 1.0)
    length = (len(path) - 1) * grid.cell
    actions = path_to_actions(path, AgentState(grid.center(start_cell),
                                               start_heading), grid)
    return length, len(actions), True


def navigate(world: World, components: NavComponents, target_label: str,
             budget_steps: int, config: NavConfig = NavConfig(),
             episode_seed: int = 0) -> EpisodeResult:
    """Run one belief-guided object-navigation episode.

    Fully deterministic per (world.seed, episode_seed).  Terminates on
    success, step-budget exhaustion, or frontier exhaustion; failures are
    recorded in the result, never raised.
    """
    cfg = config
    provider = components.provider
    rng = np.random.default_rng(np.random.SeedSequence(
        [world.seed & 0x7FFFFFFF, episode_seed & 0x7FFFFFFF]))
    grid3 = GridSpec.for_bounds(world.bounds_lo, world.bounds_hi,
                                cell=components.cell, z_top=components.z_top)
    carved = np.zeros(grid3.dims, dtype=np.uint8)
    belief = SceneBelief.empty(provider.dim)
    query = provider.embed(target_label)
    protos = class_prototypes(provider)
    intr = default_intrinsics()
    sim_intr = default_intrinsics(cfg.sim_width, cfg.sim_height)

    # Spawn somewhere the target is actually reachable under inflated
    # clearance, so every episode is solvable by construction.
    gt_base = inflate_occupied(gt_planning_grid(world, grid3, cfg.height_band))
    for _ in range(30):
        state = random_free_state(world, rng, clear_of=target_label,
                                  min_clear_dist=cfg.min_start_clearance)
        gt_grid = OccupancyGrid(gt_base.origin, gt_base.cell,
                                gt_base.states.copy())
        start_cell = gt_grid.to_cell(state.position)
        if gt_grid.states[start_cell] == OCCUPIED:
            gt_grid.states[start_cell] = FREE
        shortest, oracle_steps, reachable = shortest_path_info(
            world, gt_grid, start_cell, state.heading, target_label)
        if reachable:
            break

    steps = 0
    collisions = 0
    traveled = 0.0
    trace = []
    bumped = set()  # cells a blocked forward ran into

    def sense(bel):
        obs, log = observe(world, camera_pose(state, intr), provider)
        carve_rays(carved, grid3, log)
        return incorporate_observation(bel, obs, cfg.obs_stride)

    belief = sense(belief)
    success = check_success(world, state, target_label)
    replan = 0
    while not success and steps < budget_steps:
        replan += 1
        observed = belief.observed_part()
        occ2 = belief_occupancy(observed, grid3, cfg.height_band,
                                carved=carved, prototypes=protos)
        for cell in bumped:
            if occ2.in_bounds(cell):
                occ2.states[cell] = OCCUPIED
        occ2 = inflate_occupied(occ2)
        agent_cell = occ2.to_cell(state.position)
        if occ2.in_bounds(agent_cell):
            occ2.states[agent_cell] = FREE

        hyp_beliefs = []
        if not cfg.no_geometry:
            cond = rasterize_observed(observed, grid3, carved=carved,
                                      prototypes=protos)
            half = cfg.window_cells // 2
            lo = (agent_cell[0] - half, agent_cell[1] - half, 0)
            hi = (agent_cell[0] + half, agent_cell[1] + half, grid3.dims[2])
            window = cond.crop(lo, hi)
            k_eff = 1 if cfg.single_hypothesis else cfg.K
            samp_seed = int(np.random.SeedSequence(
                [world.seed & 0x7FFFFFFF, episode_seed & 0x7FFFFFFF,
                 replan]).generate_state(1)[0])
            for i, vh in enumerate(sample_hypotheses(
                    window, k_eff, components.denoiser, components.schedule,
                    samp_seed)):
                prims = lift_to_gaussians(vh, provider.embed)
                hyp = replace_imagination(belief, prims)
                hyp_beliefs.append(replace(hyp, hypothesis_id=i))

        goal_cell = None
        if not cfg.no_geometry:
            hit = localize(observed, query, cfg.min_score)
            if hit is not None:
                goal_cell = _snap_plannable(occ2, occ2.to_cell(hit[0]))

        template = CameraTemplate(occ2, sim_intr,
                                  fallback_heading=state.heading)
        rounds = []
        if goal_cell is not None:
            rounds.append(sample_waypoints(occ2, agent_cell, goal_cell, 1,
                                           cfg.exploration_radius))
        frontier_exhausted = False
        try:
            rounds.append(sample_waypoints(occ2, agent_cell, None,
                                           cfg.n_waypoints,
                                           cfg.exploration_radius))
        except NoFrontier:
            try:
                rounds.append(sample_waypoints(occ2, agent_cell, None,
                                               cfg.n_waypoints, float("inf")))
            except NoFrontier:
                frontier_exhausted = True

        plans = []
        for wps in rounds:
            for wi, wp in enumerate(wps):
                path = astar(occ2, agent_cell, wp, cfg.unknown_cost)
                if path is None or len(path) < 2:
                    continue
                if cfg.no_geometry:
                    score = cfg.w_info * _unknown_near_path(occ2, path)
                else:
                    rollouts = mental_simulate(hyp_beliefs, path, template,
                                               cfg.sim_stride)
                    score = score_path(rollouts, query, occ2, path,
                                       cfg.w_sem, cfg.w_info)
                plans.append((score, -wi, path))
            if plans:
                break
        if plans:
            plans.sort(key=lambda p: (p[0], p[1]), reverse=True)
            actions = path_to_actions(plans[0][2], state, occ2)
        elif frontier_exhausted and goal_cell is None:
            break  # exploration exhausted
        else:
            actions = ["left"] * cfg.T_exec  # blocked: look around
        for action in actions[:cfg.T_exec]:
            if steps >= budget_steps:
                break
            new_state, collided = step(world, state, action)
            steps += 1
            collisions += int(collided)
            if action == "forward" and not collided:
                traveled += FORWARD_STEP
            if collided:
                fwd = np.array([math.cos(state.heading), math.sin(state.heading)])
                for reach in (FORWARD_STEP, FORWARD_STEP + 0.2):
                    bumped.add(occ2.to_cell(state.position + reach * fwd))
            state = new_state
            trace.append({"step": steps, "action": action,
                          "pose": [float(state.position[0]),
                                   float(state.position[1]),
                                   float(state.heading)],
                          "collided": bool(collided)})
            belief = sense(belief)
            if check_success(world, state, target_label):
                success = True
                trace.append({"step": steps, "action": "done",
                              "pose": trace[-1]["pose"], "collided": False})
                break
            if collided:
                break

    return EpisodeResult(
        success=bool(success), steps_taken=steps, path_length=traveled,
        shortest_path_length=shortest, oracle_steps=oracle_steps,
        collisions=collisions, target=target_label,
        world_seed=world.seed, episode_seed=episode_seed, trace=trace)


def sr(results: list) -> float:
    if not results:
        raise EmptyResultSet("no episode results")
    return float(np.mean([r.success for r in results]))


def spl(results: list) -> float:
    """Success weighted by (GT shortest / max(traveled, shortest))."""
    if not results:
        raise EmptyResultSet("no episode results")
    total = 0.0
    for r in results:
        if not r.success:
            continue
        denom = max(r.path_length, r.shortest_path_length)
        total += 1.0 if denom <= 0 else r.shortest_path_length / denom
    return total / len(results)


def sel(results: list, budget: int | None = None) -> float:
    """Success weighted by (oracle steps / max(steps taken, oracle steps))."""
    if not results:
        raise EmptyResultSet("no episode results")
    total = 0.0
    for r in results:
        if not r.success:
            continue
        steps = r.steps_taken if budget is None else min(r.steps_taken, budget)
        denom = max(steps, r.oracle_steps)
        total += 1.0 if denom <= 0 else r.oracle_steps / denom
    return total / len(results)
