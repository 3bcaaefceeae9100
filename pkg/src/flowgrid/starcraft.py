"""Build-order gridworld with an autoregressive command assembly.

Commands are assembled from typed tokens (probe, coordinate, building,
unit selections plus an explicit pass).  A finished assembly resolves into
a build, go-to or train command, or into a no-op when any token is illegal
in context; every resolution advances world time by one step.  Probes walk
one cell per step; a build completes when its probe reaches the chosen
cell.  Each step may independently bring an attack (destroys a uniformly
chosen non-empty subset of non-root buildings) and an ambush (removes one
produced unit and reports its type).  The episode succeeds the moment all
required unit types are alive simultaneously and times out at 30 steps per
instruction line.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import EpisodeDone, SpawnInfeasible
from .instructions import (
    NEXUS,
    N_BUILDINGS,
    N_UNITS,
    UNIT_NAMES,
    BuildTree,
    Instruction,
)
from .interpreter import sc_plan

GRID = 6
CELLS = tuple((r, c) for r in range(GRID) for c in range(GRID))
CELL_INDEX = {cell: i for i, cell in enumerate(CELLS)}
N_PROBES = 3
ATTACK_RATE = 0.1
AMBUSH_RATE = 0.1
TIME_LIMIT_FACTOR = 30
MAX_ENDOWMENT = 36  # sampled upper bound; placement caps at the 35 free cells

TOKEN_KINDS = ("select_probe", "select_coord", "select_building", "select_unit", "commit")


@dataclass(frozen=True)
class ActionToken:
    """One autoregressive selection.  ``commit`` is an explicit pass."""

    kind: str
    value: Optional[int] = None

    def __post_init__(self):
        if self.kind not in TOKEN_KINDS:
            raise ValueError(f"unknown token kind {self.kind!r}")
        limits = {
            "select_probe": N_PROBES,
            "select_coord": GRID * GRID,
            "select_building": N_BUILDINGS,
            "select_unit": N_UNITS,
        }
        if self.kind == "commit":
            if self.value is not None:
                raise ValueError("commit carries no value")
        else:
            if self.value is None or not 0 <= self.value < limits[self.kind]:
                raise ValueError(f"bad value {self.value!r} for {self.kind}")

    @classmethod
    def probe(cls, i: int) -> "ActionToken":
        return cls("select_probe", i)

    @classmethod
    def coord(cls, i: int) -> "ActionToken":
        return cls("select_coord", i)

    @classmethod
    def building(cls, b: int) -> "ActionToken":
        return cls("select_building", b)

    @classmethod
    def unit(cls, u: int) -> "ActionToken":
        return cls("select_unit", u)

    @classmethod
    def commit(cls) -> "ActionToken":
        return cls("commit")

    def as_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value}


@dataclass
class ScObservation:
    """Agent-visible state.  The technology tree is never included."""

    building_grid: np.ndarray  # (6, 6) int8, -1 empty else building type
    probes: tuple  # three (row, col) pairs
    unit_counts: np.ndarray  # (16,) int64
    ambush_message: Optional[int]  # unit type lost last step, if any
    instruction: tuple  # encoded symbol codes


@dataclass
class DisruptionReport:
    attack: bool = False
    destroyed: tuple = ()
    ambush: bool = False
    ambushed: Optional[int] = None


@dataclass
class StepOutcome:
    """Returned when a token resolves a command and time advances."""

    observation: "ScObservation"
    reward: int
    done: bool
    cause: Optional[str]
    command: Optional[dict]  # resolved command, None for a no-op
    noop: bool


@dataclass(eq=False)
class StarcraftWorld:
    tree: BuildTree
    instruction: Instruction
    grid: Dict[tuple, int]
    probes: List[tuple]
    disruptions_enabled: bool = True
    rng: Optional[np.random.Generator] = None
    seed: Optional[int] = None
    probe_dest: List[Optional[tuple]] = field(default_factory=lambda: [None] * N_PROBES)
    pending_build: Dict[int, tuple] = field(default_factory=dict)
    pending_train: List[int] = field(default_factory=list)
    units: Dict[int, int] = field(default_factory=dict)
    ambush_message: Optional[int] = None
    assembly: tuple = ("start",)
    step_count: int = 0
    done: bool = False
    reward: int = 0
    cause: Optional[str] = None
    last_disruption: Optional[DisruptionReport] = None
    endowment: int = 0

    def __post_init__(self):
        self.required = tuple(
            line.ident for line in self.instruction.lines if line.is_unit
        )
        self.time_limit = TIME_LIMIT_FACTOR * len(self.instruction)
        self._refresh_done()

    # -- queries -----------------------------------------------------------

    def alive(self, building: int) -> bool:
        return building in self.grid.values()

    def building_cells(self, building: int) -> list:
        return sorted(cell for cell, b in self.grid.items() if b == building)

    def observe(self) -> ScObservation:
        grid = np.full((GRID, GRID), -1, dtype=np.int8)
        for (r, c), b in self.grid.items():
            grid[r, c] = b
        counts = np.zeros(N_UNITS, dtype=np.int64)
        for unit, count in self.units.items():
            counts[unit] = count
        return ScObservation(
            building_grid=grid,
            probes=tuple(self.probes),
            unit_counts=counts,
            ambush_message=self.ambush_message,
            instruction=tuple(self.instruction.encoded()),
        )

    def snapshot(self) -> dict:
        rows = []
        for r in range(GRID):
            chars = []
            for c in range(GRID):
                b = self.grid.get((r, c))
                chars.append("." if b is None else format(b, "x"))
            rows.append("".join(chars))
        return {
            "grid": rows,
            "probes": [list(p) for p in self.probes],
            "units": {
                UNIT_NAMES[u]: count
                for u, count in sorted(self.units.items())
                if count > 0
            },
            "tree": {
                "prerequisite": {str(k): v for k, v in sorted(self.tree.prerequisite.items())},
                "producer": {str(k): v for k, v in sorted(self.tree.producer.items())},
                "hidden": True,
            },
            "step": self.step_count,
            "seed": self.seed,
        }

    def digest(self) -> str:
        blob = json.dumps(self.snapshot(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def render(self) -> str:
        snap = self.snapshot()
        rows = [list(row) for row in snap["grid"]]
        for r, c in self.probes:
            if rows[r][c] == ".":
                rows[r][c] = "p"
        units = " ".join(f"{name}:{n}" for name, n in snap["units"].items()) or "-"
        status = self.cause if self.done else "running"
        lines = ["".join(row) for row in rows]
        lines.append(f"step {self.step_count} units {units} [{status}]")
        return "\n".join(lines)

    # -- token stepping ------------------------------------------------------

    def step_token(self, token: ActionToken) -> Optional[StepOutcome]:
        """Feed one token; returns None while the assembly is still open.

        A resolving token (legal command completion, explicit pass, or any
        token illegal in its context) applies the command, advances time
        one step, and returns the outcome.
        """
        if self.done:
            raise EpisodeDone("episode is over; build a new world")
        state = self.assembly
        kind = token.kind
        resolved: tuple
        if state[0] == "start":
            if kind == "select_probe":
                self.assembly = ("probe", token.value)
                return None
            if kind == "select_coord":
                cell = CELLS[token.value]
                if cell in self.grid:
                    self.assembly = ("train_from", cell)
                    return None
                resolved = ("noop", "coordinate holds no building")
            else:
                resolved = ("noop", f"{kind} opens nothing")
        elif state[0] == "probe":
            i = state[1]
            if kind == "select_building":
                self.assembly = ("build", i, token.value)
                return None
            if kind == "select_coord":
                resolved = ("goto", i, CELLS[token.value])
            else:
                resolved = ("noop", f"{kind} after a probe")
        elif state[0] == "build":
            _, i, b = state
            if kind == "select_coord":
                cell = CELLS[token.value]
                prereq = self.tree.prerequisite.get(b)
                if cell in self.grid:
                    resolved = ("noop", "target cell occupied")
                elif prereq is not None and not self.alive(prereq):
                    resolved = ("noop", "prerequisite not alive")
                else:
                    resolved = ("build", i, b, cell)
            else:
                resolved = ("noop", f"{kind} closes no build")
        else:  # train_from
            cell = state[1]
            if kind == "select_unit":
                producer = self.grid.get(cell)
                if producer is not None and self.tree.producer.get(token.value) == producer:
                    resolved = ("train", token.value)
                else:
                    resolved = ("noop", "building does not train that unit")
            else:
                resolved = ("noop", f"{kind} closes no train")
        self.assembly = ("start",)
        command = None
        if resolved[0] == "goto":
            _, i, cell = resolved
            self.probe_dest[i] = cell
            self.pending_build.pop(i, None)  # redirecting abandons the build
            command = {"op": "goto", "probe": i, "cell": list(cell)}
        elif resolved[0] == "build":
            _, i, b, cell = resolved
            self.pending_build[i] = (b, cell)
            self.probe_dest[i] = cell
            command = {"op": "build", "probe": i, "building": b, "cell": list(cell)}
        elif resolved[0] == "train":
            self.pending_train.append(resolved[1])
            command = {"op": "train", "unit": resolved[1]}
        self._advance()
        return StepOutcome(
            observation=self.observe(),
            reward=1 if (self.done and self.cause == "success") else 0,
            done=self.done,
            cause=self.cause,
            command=command,
            noop=command is None,
        )

    def _advance(self) -> None:
        self.step_count += 1
        for i in range(N_PROBES):
            dest = self.probe_dest[i]
            if dest is None:
                continue
            if self.probes[i] != dest:
                self.probes[i] = _step_toward(self.probes[i], dest)
            if self.probes[i] == dest:
                job = self.pending_build.pop(i, None)
                if job is not None:
                    b, cell = job
                    if cell not in self.grid:
                        self.grid[cell] = b
                    # an occupied cell at arrival cancels the construction
                self.probe_dest[i] = None
        for unit in self.pending_train:
            self.units[unit] = self.units.get(unit, 0) + 1
        self.pending_train = []
        self.ambush_message = None
        self.last_disruption = (
            self.roll_disruptions() if self.disruptions_enabled else None
        )
        self._refresh_done()

    def roll_disruptions(self) -> DisruptionReport:
        """Independent per-step attack and ambush events.

        An attack destroys a uniformly chosen non-empty subset of the
        non-root buildings (vacuous when there are none).  An ambush
        removes one uniformly chosen produced unit and posts its type as
        the message for the next observation.
        """
        rng = self.rng
        if rng is None:
            raise ValueError("world has no disruption stream")
        report = DisruptionReport()
        if rng.random() < ATTACK_RATE:
            report.attack = True
            targets = sorted(cell for cell, b in self.grid.items() if b != NEXUS)
            if targets:
                mask = int(rng.integers(1, 1 << len(targets)))
                chosen = [
                    targets[j] for j in range(len(targets)) if (mask >> j) & 1
                ]
                for cell in chosen:
                    del self.grid[cell]
                report.destroyed = tuple(chosen)
        if rng.random() < AMBUSH_RATE:
            report.ambush = True
            pool = [u for u in sorted(self.units) for _ in range(self.units[u])]
            if pool:
                victim = pool[int(rng.integers(len(pool)))]
                self.units[victim] -= 1
                if self.units[victim] == 0:
                    del self.units[victim]
                self.ambush_message = victim
                report.ambushed = victim
        return report

    def _refresh_done(self) -> None:
        if self.done:
            return
        reward, done, cause = check_done(self)
        if done:
            self.done, self.cause = True, cause
            self.reward = reward


def check_done(world: StarcraftWorld) -> Tuple[int, bool, Optional[str]]:
    """(reward, done, cause) for the world's current state.

    Success takes precedence over the step limit when both hold.
    """
    if all(world.units.get(u, 0) > 0 for u in world.required):
        return 1, True, "success"
    if world.step_count >= world.time_limit:
        return 0, True, "timeout"
    return 0, False, None


def _step_toward(cell: tuple, dest: tuple) -> tuple:
    r, c = cell
    dr, dc = dest[0] - r, dest[1] - c
    if abs(dr) >= abs(dc) and dr != 0:
        return (r + (1 if dr > 0 else -1), c)
    if dc != 0:
        return (r, c + (1 if dc > 0 else -1))
    return cell


def spawn(
    rng: np.random.Generator,
    tree: BuildTree,
    instruction: Instruction,
    disruptions: bool = True,
    disruption_rng: Optional[np.random.Generator] = None,
    seed: Optional[int] = None,
    max_resamples: int = 50,
) -> StarcraftWorld:
    """Place the root building, three probes and a random endowment.

    The endowment count is uniform on 0..36 with uniform building types on
    unique free cells (capped by the 35 cells the root leaves open).  A
    placement is resampled when the free cells could not hold the builds
    the ground-truth plan needs from a fresh start.
    """
    required = tuple(line.ident for line in instruction.lines if line.is_unit)
    for _ in range(max_resamples + 1):
        nexus_cell = CELLS[int(rng.integers(len(CELLS)))]
        endowment = int(rng.integers(0, MAX_ENDOWMENT + 1))
        count = min(endowment, len(CELLS) - 1)
        others = [cell for cell in CELLS if cell != nexus_cell]
        order = rng.permutation(len(others))
        grid = {nexus_cell: NEXUS}
        for slot in range(count):
            grid[others[order[slot]]] = int(rng.integers(N_BUILDINGS))
        plan = sc_plan(tree, required, set(grid.values()), {})
        builds_needed = sum(1 for cmd in plan if cmd.op == "build")
        if len(CELLS) - len(grid) < builds_needed:
            continue
        return StarcraftWorld(
            tree=tree,
            instruction=instruction,
            grid=grid,
            probes=[nexus_cell] * N_PROBES,
            disruptions_enabled=disruptions,
            rng=disruption_rng if disruption_rng is not None else rng,
            seed=seed,
            endowment=endowment,
        )
    raise SpawnInfeasible("endowment left no room for required construction")


# --- command space audit ----------------------------------------------------------


def classify_assembly(tokens) -> Optional[str]:
    """Grammar-level command type of a token sequence, ignoring world state.

    Returns "build", "goto" or "train" when the sequence forms that
    command shape, None otherwise.  Coordinate legality (occupancy,
    prerequisites, producers) is the world's concern, not the grammar's.
    """
    state = "start"
    for pos, token in enumerate(tokens):
        last = pos == len(tokens) - 1
        if state == "start":
            if token.kind == "select_probe":
                state = "probe"
            elif token.kind == "select_coord":
                state = "train_from"
            else:
                return None
        elif state == "probe":
            if token.kind == "select_building":
                state = "build"
            elif token.kind == "select_coord":
                return "goto" if last else None
            else:
                return None
        elif state == "build":
            if token.kind == "select_coord":
                return "build" if last else None
            return None
        elif state == "train_from":
            if token.kind == "select_unit":
                return "train" if last else None
            return None
    return None


def enumerate_command_space() -> dict:
    """Count the grammar's complete command shapes by exhaustive walk."""
    counts = {"build": 0, "goto": 0, "train": 0}
    for i in range(N_PROBES):
        for b in range(N_BUILDINGS):
            for c in range(len(CELLS)):
                shape = classify_assembly(
                    [ActionToken.probe(i), ActionToken.building(b), ActionToken.coord(c)]
                )
                if shape == "build":
                    counts["build"] += 1
    for i in range(N_PROBES):
        for c in range(len(CELLS)):
            if classify_assembly([ActionToken.probe(i), ActionToken.coord(c)]) == "goto":
                counts["goto"] += 1
    for c in range(len(CELLS)):
        for u in range(N_UNITS):
            if classify_assembly([ActionToken.coord(c), ActionToken.unit(u)]) == "train":
                counts["train"] += 1
    return counts


def legal_train_commands(world: StarcraftWorld) -> int:
    """Runtime-legal (coordinate, unit) train pairs in ``world``."""
    producible = {}
    for unit, building in world.tree.producer.items():
        producible.setdefault(building, 0)
        producible[building] += 1
    return sum(producible.get(b, 0) for b in world.grid.values())
