"""Resource gridworld driven by control-flow instructions.

A 6x6 grid holds resources (iron, gold, wood), merchants, walls and an
optional straight water line.  A worker executes verb-resource commands:
it routes to the nearest matching cell (breadth-first, row-major ties),
interacts on arrival, and may bridge water cells by spending wood.  The
world tracks the instruction's required-subtask stream; completing the
stream ends the episode with reward 1, a mine or sell outside the stream
ends it with reward 0, and episodes time out at 30 steps per line.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from .errors import EpisodeDone, SpawnInfeasible, StructuralError
from .instructions import COMPARANDS, RESOURCES, VERBS, CfLine, Instruction
from .interpreter import _block_map, cf_step, eval_condition

GRID = 6
CELLS = tuple((r, c) for r in range(GRID) for c in range(GRID))
ENTITY_TYPES = ("iron", "gold", "wood", "merchant")
ENTITY_CHARS = {"iron": "i", "gold": "g", "wood": "w", "merchant": "m"}
CHANNELS = ("iron", "gold", "wood", "merchant", "wall", "water", "worker")
_CHANNEL_INDEX = {name: i for i, name in enumerate(CHANNELS)}
# placement cap from the sampling recipe: water lines appear only when the
# entity count leaves room for one
WATER_MAX_ENTITIES = 30
TIME_LIMIT_FACTOR = 30


@dataclass(frozen=True)
class Command:
    """A verb applied to a resource, e.g. mine iron."""

    verb: str
    target: str

    def __post_init__(self):
        if self.verb not in VERBS:
            raise ValueError(f"unknown verb {self.verb!r}")
        if self.target not in RESOURCES:
            raise ValueError(f"unknown resource {self.target!r}")

    def as_dict(self) -> dict:
        return {"verb": self.verb, "target": self.target}


@dataclass
class Observation:
    """Agent-visible state.  Carries no task-progress information."""

    channels: np.ndarray  # (7, 6, 6) boolean, see CHANNELS
    inventory: Tuple[int, int, int]  # iron, gold, wood
    instruction: tuple  # encoded instruction triples

    channel_names = CHANNELS


@dataclass
class SpawnAttempt:
    n: int
    stage: str  # static_reject | placement_reject | gate_reject | accepted
    water_placed: bool = False
    water_removed: bool = False


@dataclass
class SpawnStats:
    n: int
    resamples: int
    water_placed: bool
    water_removed: bool
    attempts: List[SpawnAttempt] = field(default_factory=list)


@dataclass(eq=False)
class MinecraftWorld:
    instruction: Instruction
    entities: Dict[tuple, str]
    water: Set[tuple]
    walls: frozenset
    worker: tuple
    inventory: Dict[str, int]
    pc: int = 0
    step_count: int = 0
    done: bool = False
    reward: int = 0
    cause: Optional[str] = None
    seed: Optional[int] = None
    spawn_stats: Optional[SpawnStats] = None
    _route: Optional[list] = field(default=None, repr=False)
    _route_key: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        self.time_limit = TIME_LIMIT_FACTOR * len(self.instruction)
        self._peers = _block_map(self.instruction)

    # -- queries ---------------------------------------------------------

    def counts(self) -> Dict[str, int]:
        out = {name: 0 for name in COMPARANDS}
        for kind in self.entities.values():
            out[kind] += 1
        return out

    def required_subtask(self) -> Optional[CfLine]:
        """The subtask the instruction currently demands, or None when done."""
        if self.done:
            return None
        return self.instruction.lines[self.pc]

    def observe(self) -> Observation:
        grid = np.zeros((len(CHANNELS), GRID, GRID), dtype=bool)
        for (r, c), kind in self.entities.items():
            grid[_CHANNEL_INDEX[kind], r, c] = True
        for r, c in self.walls:
            grid[_CHANNEL_INDEX["wall"], r, c] = True
        for r, c in self.water:
            grid[_CHANNEL_INDEX["water"], r, c] = True
        grid[_CHANNEL_INDEX["worker"], self.worker[0], self.worker[1]] = True
        inv = tuple(self.inventory[r] for r in RESOURCES)
        return Observation(
            channels=grid,
            inventory=inv,
            instruction=tuple(tuple(t) for t in self.instruction.encoded()),
        )

    def snapshot(self) -> dict:
        rows = []
        for r in range(GRID):
            chars = []
            for c in range(GRID):
                cell = (r, c)
                if cell in self.walls:
                    chars.append("#")
                elif cell in self.water:
                    chars.append("~")
                elif cell in self.entities:
                    chars.append(ENTITY_CHARS[self.entities[cell]])
                else:
                    chars.append(".")
            rows.append("".join(chars))
        return {
            "grid": rows,
            "worker": list(self.worker),
            "inventory": {r: self.inventory[r] for r in RESOURCES},
            "step": self.step_count,
            "seed": self.seed,
        }

    def digest(self) -> str:
        blob = json.dumps(self.snapshot(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def render(self) -> str:
        snap = self.snapshot()
        rows = [list(row) for row in snap["grid"]]
        rows[self.worker[0]][self.worker[1]] = "@"
        inv = " ".join(f"{r}:{self.inventory[r]}" for r in RESOURCES)
        status = self.cause if self.done else "running"
        lines = ["".join(row) for row in rows]
        lines.append(f"step {self.step_count} inv {inv} [{status}]")
        return "\n".join(lines)

    def clone(self) -> "MinecraftWorld":
        world = MinecraftWorld(
            instruction=self.instruction,
            entities=dict(self.entities),
            water=set(self.water),
            walls=self.walls,
            worker=self.worker,
            inventory=dict(self.inventory),
            pc=self.pc,
            step_count=self.step_count,
            done=self.done,
            reward=self.reward,
            cause=self.cause,
            seed=self.seed,
        )
        return world

    # -- control flow ------------------------------------------------------

    def _cond_eval(self, condition) -> bool:
        return eval_condition(condition, self.counts())

    def normalize(self) -> None:
        """Rest the program counter on a subtask, finishing if none remain."""
        self.pc = cf_step(self.instruction, self.pc, self._cond_eval, self._peers)
        if self.pc == len(self.instruction) and not self.done:
            self.done = True
            self.cause = "success"
            self.reward = 1

    # -- stepping ----------------------------------------------------------

    def step(self, command: Command):
        """Advance one time step under ``command``.

        Returns (observation, reward, done, cause).  Raises EpisodeDone if
        the episode already ended.
        """
        if self.done:
            raise EpisodeDone("episode is over; build a new world")
        verb, target = command.verb, command.target
        if verb == "sell" and self.inventory[target] > 0:
            goal_kind, fire = "merchant", ("sell", target)
        elif verb == "sell":
            goal_kind, fire = target, ("auto_mine", target)
        else:
            goal_kind, fire = target, (verb, target)
        goals = {cell for cell, kind in self.entities.items() if kind == goal_kind}
        interaction = None
        if goals:
            if self.worker in goals:
                interaction = fire
            else:
                path = self._route_to(goals, key=(verb, target, goal_kind))
                if path:
                    nxt = path.pop(0)
                    if nxt in self.water:
                        # bridging: spend one wood, the cell opens for good
                        self.inventory["wood"] -= 1
                        self.water.discard(nxt)
                    self.worker = nxt
                    if nxt in goals:
                        interaction = fire
                # unreachable or absent goal: the command stalls, time passes
        self.step_count += 1
        reward = 0
        if interaction is not None:
            reward = self._apply_interaction(*interaction)
        if not self.done and self.step_count >= self.time_limit:
            self.done = True
            self.cause = "timeout"
        return self.observe(), reward, self.done, self.cause

    def _mine_here(self, resource: str) -> None:
        assert self.entities.get(self.worker) == resource
        del self.entities[self.worker]
        self.inventory[resource] += 1
        self._drop_route()

    def _apply_interaction(self, kind: str, resource: str) -> int:
        required = self.instruction.lines[self.pc]
        self._drop_route()
        if kind == "mine":
            self._mine_here(resource)
            if required.verb == "mine" and required.target == resource:
                return self._advance()
            self._terminate("out_of_order")
            return 0
        if kind == "auto_mine":
            # collection leg of a sell command; in order only while the
            # stream actually demands selling this resource
            self._mine_here(resource)
            if required.verb == "sell" and required.target == resource:
                return 0
            self._terminate("out_of_order")
            return 0
        if kind == "sell":
            if self.inventory[resource] == 0:
                return 0  # wood spent on bridging en route; retry next step
            self.inventory[resource] -= 1
            if required.verb == "sell" and required.target == resource:
                return self._advance()
            self._terminate("out_of_order")
            return 0
        # inspect: no mutation, never terminates, advances only when demanded
        if required.verb == "inspect" and required.target == resource:
            return self._advance()
        return 0

    def _advance(self) -> int:
        self.pc += 1
        self.normalize()
        return 1 if self.done else 0

    def _terminate(self, cause: str) -> None:
        self.done = True
        self.cause = cause

    # -- routing -----------------------------------------------------------

    def _drop_route(self) -> None:
        self._route = None
        self._route_key = None

    def _route_to(self, goals: set, key: tuple) -> Optional[list]:
        if self._route_key == key and self._route:
            return self._route
        self._route = self._bfs(goals)
        self._route_key = key if self._route else None
        return self._route

    def _bfs(self, goals: set) -> Optional[list]:
        """Shortest route to the best goal cell, honouring the wood budget.

        States are (cell, water-cells-used); a path may enter water only
        while its water count stays within the current wood inventory.
        Equidistant goals resolve row-major; the move sequence is fixed by
        the row-major neighbour expansion order.
        """
        start = self.worker
        budget = self.inventory["wood"]
        start_state = (start, 0)
        dist = {start_state: 0}
        parent = {}
        queue = deque([start_state])
        while queue:
            state = queue.popleft()
            (r, c), used = state
            d = dist[state]
            for nb in ((r - 1, c), (r, c - 1), (r, c + 1), (r + 1, c)):
                if not (0 <= nb[0] < GRID and 0 <= nb[1] < GRID):
                    continue
                if nb in self.walls:
                    continue
                nused = used + (1 if nb in self.water else 0)
                if nused > budget:
                    continue
                nstate = (nb, nused)
                if nstate in dist:
                    continue
                dist[nstate] = d + 1
                parent[nstate] = state
                queue.append(nstate)
        best = None  # (dist, cell, used); bridged entries can be shorter,
        # so every used level competes
        for cell in sorted(goals):
            for used in range(budget + 1):
                state = (cell, used)
                if state in dist:
                    cand = (dist[state], cell, used)
                    if best is None or cand < best:
                        best = cand
        if best is None:
            return None
        path = []
        state = (best[1], best[2])
        while state != start_state:
            path.append(state[0])
            state = parent[state]
        path.reverse()
        return path


# --- spawning -------------------------------------------------------------------


def required_stream_feasible(instruction: Instruction, type_counts) -> bool:
    """Can the demanded subtask stream be satisfied from these entity counts?

    Simulates the stream on counts alone: mining consumes a map entity,
    selling needs a merchant and consumes one unit (auto-mining first on an
    empty inventory), inspecting needs a live target.  The stream must also
    finish within the episode step budget, which bounds degenerate loops.
    """
    counts = {kind: 0 for kind in COMPARANDS}
    for kind, value in dict(type_counts).items():
        counts[kind] = value
    inventory = {r: 0 for r in RESOURCES}
    try:
        peers = _block_map(instruction)
    except StructuralError:
        return False
    limit = TIME_LIMIT_FACTOR * len(instruction)
    pc = 0
    emitted = 0
    while True:
        try:
            pc = cf_step(
                instruction, pc, lambda cond: eval_condition(cond, counts), peers
            )
        except StructuralError:
            return False
        if pc == len(instruction):
            return True
        emitted += 1
        if emitted > limit:
            return False
        line = instruction.lines[pc]
        verb, resource = line.verb, line.target
        if verb == "mine":
            if counts[resource] < 1:
                return False
            counts[resource] -= 1
            inventory[resource] += 1
        elif verb == "sell":
            if counts["merchant"] < 1:
                return False
            if inventory[resource] == 0:
                if counts[resource] < 1:
                    return False
                counts[resource] -= 1
            else:
                inventory[resource] -= 1
        else:  # inspect
            if counts[resource] < 1:
                return False
        pc += 1


def oracle_completes(world: MinecraftWorld) -> bool:
    """Dry-run the ground-truth policy on a copy; True iff it succeeds."""
    sim = world.clone()
    while not sim.done:
        line = sim.required_subtask()
        sim.step(Command(line.verb, line.target))
    return sim.cause == "success"


def _wood_reachable(entities: dict, worker: tuple, water: set) -> bool:
    woods = {cell for cell, kind in entities.items() if kind == "wood"}
    if not woods:
        return False
    seen = {worker}
    queue = deque([worker])
    while queue:
        r, c = queue.popleft()
        if (r, c) in woods:
            return True
        for nb in ((r - 1, c), (r, c - 1), (r, c + 1), (r + 1, c)):
            if (
                0 <= nb[0] < GRID
                and 0 <= nb[1] < GRID
                and nb not in water
                and nb not in seen
            ):
                seen.add(nb)
                queue.append(nb)
    return False


def _wall_cells(occupied: set) -> frozenset:
    # walls fill open cells whose row and column indices are both even;
    # such cells never disconnect the remaining grid
    return frozenset(
        (r, c)
        for r in range(0, GRID, 2)
        for c in range(0, GRID, 2)
        if (r, c) not in occupied
    )


def spawn(
    rng: np.random.Generator,
    instruction: Instruction,
    max_resamples: int = 50,
    feasibility_gate: bool = True,
    seed: Optional[int] = None,
) -> MinecraftWorld:
    """Populate a world for ``instruction``.

    Entity count n is drawn once per call (uniform 0..36).  Each attempt
    draws entity types, places a water line when n leaves room for one,
    scatters entities and the worker over unique open cells, removes the
    water again if it cuts the worker off from every wood cell, fills the
    even-even open cells with walls, and finally dry-runs the ground-truth
    policy.  Any failed stage resamples, up to ``max_resamples`` times;
    exhaustion raises SpawnInfeasible so the caller can regenerate the
    instruction.
    """
    n = int(rng.integers(0, 37))
    attempts: List[SpawnAttempt] = []
    for resample in range(max_resamples + 1):
        kinds = [ENTITY_TYPES[i] for i in rng.integers(0, len(ENTITY_TYPES), size=n)]
        type_counts = {kind: kinds.count(kind) for kind in ENTITY_TYPES}
        if not required_stream_feasible(instruction, type_counts):
            attempts.append(SpawnAttempt(n, "static_reject"))
            continue
        water_placed = n <= WATER_MAX_ENTITIES
        water: Set[tuple] = set()
        if water_placed:
            index = int(rng.integers(GRID))
            if int(rng.integers(2)) == 0:
                water = {(index, c) for c in range(GRID)}
            else:
                water = {(r, index) for r in range(GRID)}
        open_cells = [cell for cell in CELLS if cell not in water]
        if len(open_cells) < n + 1:
            attempts.append(SpawnAttempt(n, "placement_reject", water_placed))
            continue
        order = rng.permutation(len(open_cells))
        chosen = [open_cells[i] for i in order[: n + 1]]
        entities = dict(zip(chosen[:n], kinds))
        worker = chosen[n]
        water_removed = False
        if water and not _wood_reachable(entities, worker, water):
            water = set()
            water_removed = True
        occupied = set(entities) | set(water) | {worker}
        world = MinecraftWorld(
            instruction=instruction,
            entities=entities,
            water=water,
            walls=_wall_cells(occupied),
            worker=worker,
            inventory={r: 0 for r in RESOURCES},
            seed=seed,
        )
        world.normalize()
        if feasibility_gate and not oracle_completes(world):
            attempts.append(
                SpawnAttempt(n, "gate_reject", water_placed, water_removed)
            )
            continue
        attempts.append(SpawnAttempt(n, "accepted", water_placed, water_removed))
        world.spawn_stats = SpawnStats(
            n=n,
            resamples=resample,
            water_placed=water_placed,
            water_removed=water_removed,
            attempts=attempts,
        )
        return world
    raise SpawnInfeasible(
        f"no feasible placement for n={n} in {max_resamples} resamples",
        attempts=attempts,
    )


def spawn_longjump(
    rng: np.random.Generator, instruction: Instruction, seed: Optional[int] = None
) -> MinecraftWorld:
    """World for a long-jump instruction: the guard comparand stays absent.

    Places one entity of the guard's right-hand comparand, one of the final
    subtask's target, and a merchant when the final subtask sells; no water.
    """
    a, b = instruction.lines[0].condition
    final = instruction.lines[-1]
    need = {b: 1}
    need[final.target] = max(need.get(final.target, 0), 1)
    if final.verb == "sell":
        need["merchant"] = max(need.get("merchant", 0), 1)
    if a in need:
        raise ValueError("guard comparand must stay off the map")
    order = rng.permutation(len(CELLS))
    entities = {}
    idx = 0
    for kind in sorted(need):
        for _ in range(need[kind]):
            entities[CELLS[order[idx]]] = kind
            idx += 1
    worker = CELLS[order[idx]]
    occupied = set(entities) | {worker}
    world = MinecraftWorld(
        instruction=instruction,
        entities=entities,
        water=set(),
        walls=_wall_cells(occupied),
        worker=worker,
        inventory={r: 0 for r in RESOURCES},
        seed=seed,
    )
    world.normalize()
    return world
