"""Episode orchestration: policies, deterministic runs, traces, retry buffer.

An episode is fully determined by (config, policy name, seed).  The seed
fans out into independent named substreams for instruction generation,
world placement, disruptions and policy randomness, so runs replay
byte-identically and parallel execution cannot reorder randomness.
"""

from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass, field
from typing import IO, List, Optional

import numpy as np

from . import minecraft, starcraft
from .errors import (
    GenerationError,
    SpawnInfeasible,
    TraceFormatError,
    ReplayMismatch,
)
from .generators import gen_minecraft, gen_starcraft
from .instructions import MINECRAFT, RESOURCES, STARCRAFT, VERBS
from .interpreter import sc_plan
from .minecraft import Command
from .rngtools import substream
from .starcraft import ActionToken

TRACE_VERSION = 1
MAX_REGENERATIONS = 1000


@dataclass(frozen=True)
class EpisodeSpec:
    """Parameters that define an episode distribution."""

    domain: str
    min_len: int = 1
    max_len: int = 10
    flow: str = "any"  # minecraft flow filter
    max_depth: Optional[int] = None  # starcraft tree depth cap
    disruptions: bool = True  # starcraft only

    def __post_init__(self):
        if self.domain not in (MINECRAFT, STARCRAFT):
            raise ValueError(f"unknown domain {self.domain!r}")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")


@dataclass
class StepRecord:
    t: int
    command: dict
    reward: int
    done: bool
    cause: Optional[str]
    pc: Optional[int] = None
    digest: Optional[str] = None
    resolved: bool = True
    noop: bool = False


@dataclass
class EpisodeTrace:
    seed: int
    domain: str
    policy: str
    spec: dict
    instruction_text: list
    instruction_encoded: list
    outcome: str
    reward: int
    steps: List[StepRecord] = field(default_factory=list)


# --- policies --------------------------------------------------------------------


class Policy:
    """Per-episode behaviour: observe, then emit the next command token.

    ``reset`` receives the freshly spawned world.  ``act`` receives the
    current observation plus the world handle; ground-truth policies may
    read privileged world state, learned-agent stand-ins should not.
    """

    name = "policy"

    def reset(self, world) -> None:  # pragma: no cover - trivial default
        pass

    def act(self, observation, world):
        raise NotImplementedError


class OracleMinecraftPolicy(Policy):
    """Issues exactly the subtask the instruction currently demands."""

    name = "oracle"

    def act(self, observation, world) -> Command:
        line = world.required_subtask()
        return Command(line.verb, line.target)


class OracleStarcraftPolicy(Policy):
    """Plans from the world's true technology tree and never emits no-ops.

    Builds are serial: while a construction is in flight the policy walks
    a spare probe in place, which is always a legal command.  Training
    runs as soon as the producer is alive.
    """

    name = "oracle"

    def __init__(self):
        self.queue: List[ActionToken] = []

    def reset(self, world) -> None:
        self.queue = []

    def act(self, observation, world) -> ActionToken:
        if not self.queue:
            self.queue = self._decide(world)
        return self.queue.pop(0)

    def _decide(self, world) -> List[ActionToken]:
        plan = sc_plan(
            world.tree, world.required, set(world.grid.values()), world.units
        )
        if plan:
            head = plan[0]
            if head.op == "build":
                if not world.pending_build:
                    empties = [i for i, cell in enumerate(starcraft.CELLS)
                               if cell not in world.grid]
                    if empties:
                        return [
                            ActionToken.probe(0),
                            ActionToken.building(head.ident),
                            ActionToken.coord(empties[0]),
                        ]
                # construction in flight or no room: wait
            else:  # train
                producer = world.tree.producer[head.ident]
                cells = world.building_cells(producer)
                if cells:
                    return [
                        ActionToken.coord(starcraft.CELL_INDEX[cells[0]]),
                        ActionToken.unit(head.ident),
                    ]
                # producer still under construction: wait
        # waiting is a go-to of a spare probe onto its own cell
        idle_cell = world.probes[1]
        return [
            ActionToken.probe(1),
            ActionToken.coord(starcraft.CELL_INDEX[idle_cell]),
        ]


class RandomMinecraftPolicy(Policy):
    name = "random"

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def act(self, observation, world) -> Command:
        verb = VERBS[int(self.rng.integers(len(VERBS)))]
        target = RESOURCES[int(self.rng.integers(len(RESOURCES)))]
        return Command(verb, target)


class RandomStarcraftPolicy(Policy):
    name = "random"

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def act(self, observation, world) -> ActionToken:
        kind = starcraft.TOKEN_KINDS[int(self.rng.integers(len(starcraft.TOKEN_KINDS)))]
        if kind == "commit":
            return ActionToken.commit()
        limits = {
            "select_probe": starcraft.N_PROBES,
            "select_coord": len(starcraft.CELLS),
            "select_building": 14,
            "select_unit": 16,
        }
        return ActionToken(kind, int(self.rng.integers(limits[kind])))


class ScriptedPointerPolicy(Policy):
    """A stand-in for pointer agents with a bounded movement range.

    Keeps its own pointer over the instruction.  Each step it tries to
    move the pointer to the line the world currently demands: with
    ``walk`` it steps at most ``max_jump`` lines per world step and idles
    while in transit; without ``walk`` it refuses any move larger than
    ``max_jump`` outright, so demands beyond its range strand it.  Idle
    steps issue an inspect that cannot complete the demanded subtask.
    """

    name = "scripted"

    def __init__(self, max_jump: int = 1, walk: bool = False):
        if max_jump < 1:
            raise ValueError("max_jump must be positive")
        self.max_jump = max_jump
        self.walk = walk
        self.pointer = 0

    def reset(self, world) -> None:
        self.pointer = 0

    def act(self, observation, world) -> Command:
        line = world.required_subtask()
        desired = world.pc
        if self.pointer != desired:
            gap = desired - self.pointer
            if abs(gap) <= self.max_jump:
                self.pointer = desired
            elif self.walk:
                step = self.max_jump if gap > 0 else -self.max_jump
                self.pointer += step
        if self.pointer == desired:
            return Command(line.verb, line.target)
        for resource in RESOURCES:
            if not (line.verb == "inspect" and line.target == resource):
                return Command("inspect", resource)
        raise AssertionError("unreachable: three resources, one exclusion")


def make_policy(name: str, domain: str, rng: np.random.Generator) -> Policy:
    """Build a fresh policy instance from its CLI name."""
    if name == "oracle":
        return OracleMinecraftPolicy() if domain == MINECRAFT else OracleStarcraftPolicy()
    if name == "random":
        return (
            RandomMinecraftPolicy(rng) if domain == MINECRAFT else RandomStarcraftPolicy(rng)
        )
    if name.startswith("scripted:"):
        if domain != MINECRAFT:
            raise ValueError("scripted pointer policies drive the minecraft domain")
        path = name.split(":", 1)[1]
        with open(path, "r", encoding="utf-8") as handle:
            params = json.load(handle)
        return ScriptedPointerPolicy(
            max_jump=int(params.get("max_jump", 1)), walk=bool(params.get("walk", False))
        )
    raise ValueError(f"unknown policy {name!r}")


# --- episode running -----------------------------------------------------------


def _generate_minecraft_episode(spec: EpisodeSpec, seed: int):
    gen_rng = substream(seed, "generation")
    spawn_rng = substream(seed, "spawning")
    for _ in range(MAX_REGENERATIONS):
        instruction = gen_minecraft(gen_rng, (spec.min_len, spec.max_len), spec.flow)
        try:
            return minecraft.spawn(spawn_rng, instruction, seed=seed)
        except SpawnInfeasible:
            continue
    raise GenerationError("no feasible (instruction, world) pair for this seed")


def _generate_starcraft_episode(spec: EpisodeSpec, seed: int):
    gen_rng = substream(seed, "generation")
    spawn_rng = substream(seed, "spawning")
    disruption_rng = substream(seed, "disruptions")
    for _ in range(MAX_REGENERATIONS):
        target = int(gen_rng.integers(spec.min_len, spec.max_len + 1))
        tree, instruction = gen_starcraft(gen_rng, target, spec.max_depth)
        if len(instruction) < spec.min_len:
            continue
        try:
            return starcraft.spawn(
                spawn_rng,
                tree,
                instruction,
                disruptions=spec.disruptions,
                disruption_rng=disruption_rng,
                seed=seed,
            )
        except SpawnInfeasible:
            continue
    raise GenerationError("no instruction of the requested length for this seed")


def spawn_episode_world(spec: EpisodeSpec, seed: int):
    """Instruction plus placed world for (spec, seed), after retries."""
    if spec.domain == MINECRAFT:
        return _generate_minecraft_episode(spec, seed)
    return _generate_starcraft_episode(spec, seed)


def drive_world(world, policy: Policy, record_digests: bool = True) -> List[StepRecord]:
    """Run ``policy`` on ``world`` until the episode ends."""
    policy.reset(world)
    steps: List[StepRecord] = []
    while not world.done:
        action = policy.act(world.observe(), world)
        if isinstance(action, Command):
            _, reward, done, cause = world.step(action)
            steps.append(
                StepRecord(
                    t=world.step_count,
                    command=action.as_dict(),
                    reward=reward,
                    done=done,
                    cause=cause,
                    pc=world.pc,
                    digest=world.digest() if record_digests else None,
                )
            )
        else:
            outcome = world.step_token(action)
            resolved = outcome is not None
            steps.append(
                StepRecord(
                    t=world.step_count,
                    command=action.as_dict(),
                    reward=outcome.reward if resolved else 0,
                    done=world.done,
                    cause=world.cause,
                    digest=world.digest() if (record_digests and resolved) else None,
                    resolved=resolved,
                    noop=bool(resolved and outcome.noop),
                )
            )
    return steps


def run_episode(
    spec: EpisodeSpec,
    policy_name: str,
    seed: int,
    record_digests: bool = True,
) -> EpisodeTrace:
    """Deterministically generate, spawn and play one episode."""
    world = spawn_episode_world(spec, seed)
    policy = make_policy(policy_name, spec.domain, substream(seed, "policy"))
    steps = drive_world(world, policy, record_digests)
    return EpisodeTrace(
        seed=seed,
        domain=spec.domain,
        policy=policy_name,
        spec=asdict(spec),
        instruction_text=world.instruction.text(),
        instruction_encoded=world.instruction.encoded(),
        outcome=world.cause,
        reward=world.reward,
        steps=steps,
    )


# --- trace files ------------------------------------------------------------------


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_traces(handle: IO, traces) -> None:
    """Write episodes as JSON lines: header record, step records, end record."""
    for index, trace in enumerate(traces):
        handle.write(
            _dumps(
                {
                    "v": TRACE_VERSION,
                    "kind": "header",
                    "episode": index,
                    "seed": trace.seed,
                    "domain": trace.domain,
                    "policy": trace.policy,
                    "spec": trace.spec,
                    "instruction": {
                        "text": trace.instruction_text,
                        "encoded": trace.instruction_encoded,
                    },
                }
            )
            + "\n"
        )
        for step in trace.steps:
            record = {"kind": "step"}
            record.update(asdict(step))
            handle.write(_dumps(record) + "\n")
        handle.write(
            _dumps(
                {
                    "kind": "end",
                    "episode": index,
                    "outcome": trace.outcome,
                    "reward": trace.reward,
                    "steps": len(trace.steps),
                }
            )
            + "\n"
        )


def read_trace_records(handle: IO) -> list:
    records = []
    for line_number, line in enumerate(handle, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise TraceFormatError(
                f"line {line_number}: invalid JSON ({exc.msg})", line_number
            ) from None
    return records


def split_episodes(records: list) -> list:
    """Group raw trace records into (header, steps, end) bundles."""
    episodes = []
    current = None
    for record in records:
        kind = record.get("kind")
        if kind == "header":
            if record.get("v") != TRACE_VERSION:
                raise TraceFormatError(f"unsupported trace version {record.get('v')!r}")
            current = {"header": record, "steps": [], "end": None}
            episodes.append(current)
        elif kind == "step":
            if current is None:
                raise TraceFormatError("step record before any header")
            current["steps"].append(record)
        elif kind == "end":
            if current is None:
                raise TraceFormatError("end record before any header")
            current["end"] = record
        else:
            raise TraceFormatError(f"unknown record kind {kind!r}")
    return episodes


def replay_episode(episode: dict, check_digests: bool = True):
    """Re-simulate a recorded episode, yielding an ASCII frame per record.

    Digest mismatches raise ReplayMismatch; they mean the recorded run and
    this build disagree about world evolution.
    """
    header = episode["header"]
    spec = EpisodeSpec(**header["spec"])
    world = spawn_episode_world(spec, header["seed"])
    yield world.render()
    for position, record in enumerate(episode["steps"]):
        command = record["command"]
        if spec.domain == MINECRAFT:
            world.step(Command(command["verb"], command["target"]))
        else:
            world.step_token(ActionToken(command["kind"], command["value"]))
        recorded = record.get("digest")
        if check_digests and recorded is not None:
            actual = world.digest()
            if actual != recorded:
                raise ReplayMismatch(
                    f"step {position}: digest {actual} != recorded {recorded}"
                )
        if record.get("resolved", True):
            yield world.render()
    end = episode.get("end")
    if end is not None and end.get("outcome") != world.cause:
        raise ReplayMismatch(
            f"outcome {world.cause!r} != recorded {end.get('outcome')!r}"
        )


# --- failure buffer ------------------------------------------------------------------


class FailureBuffer:
    """Seeds of failed episodes plus a success-rate tracker.

    ``update`` always folds the episode result into an exponential moving
    average of success and appends the seed on failure.  ``sample`` offers
    a buffered seed with probability scale * average (clipped to 1) when
    the buffer is non-empty.  Thread-safe; operations appear atomic.
    """

    def __init__(self, beta: float = 0.01, scale: float = 1.0):
        if not 0.0 < beta <= 1.0:
            raise ValueError("beta must be in (0, 1]")
        if scale < 0.0:
            raise ValueError("scale must be non-negative")
        self.beta = beta
        self.scale = scale
        self.seeds: List[int] = []
        self.success_average = 0.0
        self._lock = threading.Lock()

    def update(self, seed: int, success: bool) -> None:
        with self._lock:
            self.success_average = (
                (1.0 - self.beta) * self.success_average + self.beta * (1.0 if success else 0.0)
            )
            if not success:
                self.seeds.append(seed)

    def retry_probability(self) -> float:
        with self._lock:
            if not self.seeds:
                return 0.0
            return min(1.0, self.scale * self.success_average)

    def sample(self, rng: np.random.Generator) -> Optional[int]:
        """A buffered seed to retry, or None to draw a fresh episode."""
        with self._lock:
            if self.seeds and float(rng.random()) < min(
                1.0, self.scale * self.success_average
            ):
                return self.seeds[int(rng.integers(len(self.seeds)))]
        return None
