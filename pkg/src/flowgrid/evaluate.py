"""Binned policy evaluation with reproducible per-episode seeds."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import IO, List, Optional, Sequence, Tuple

from .harness import EpisodeSpec, drive_world, make_policy, run_episode
from .instructions import MINECRAFT
from .generators import gen_longjump
from .minecraft import spawn_longjump
from .rngtools import derived_seed, substream

DEFAULT_BINS: Tuple[Tuple[int, int], ...] = tuple(
    (lo, lo + 9) for lo in range(1, 51, 10)
)

CSV_FIELDS = (
    "bin_lo",
    "bin_hi",
    "episodes",
    "success_rate",
    "stderr",
    "timeouts",
    "out_of_order",
)


@dataclass(frozen=True)
class BinResult:
    lo: int
    hi: int
    episodes: int
    success_rate: Optional[float]
    stderr: Optional[float]
    timeouts: int
    out_of_order: int

    def row(self) -> dict:
        fmt = lambda x: "" if x is None else f"{x:.6f}"
        return {
            "bin_lo": self.lo,
            "bin_hi": self.hi,
            "episodes": self.episodes,
            "success_rate": fmt(self.success_rate),
            "stderr": fmt(self.stderr),
            "timeouts": self.timeouts,
            "out_of_order": self.out_of_order,
        }


def _summarize(lo: int, hi: int, outcomes: Sequence[Tuple[str, int]]) -> BinResult:
    n = len(outcomes)
    if n == 0:
        return BinResult(lo, hi, 0, None, None, 0, 0)
    wins = sum(reward for _, reward in outcomes)
    rate = wins / n
    stderr = math.sqrt(rate * (1.0 - rate) / n)
    return BinResult(
        lo,
        hi,
        n,
        rate,
        stderr,
        sum(1 for cause, _ in outcomes if cause == "timeout"),
        sum(1 for cause, _ in outcomes if cause == "out_of_order"),
    )


def evaluate(
    spec: EpisodeSpec,
    policy_name: str,
    bins: Sequence[Tuple[int, int]] = DEFAULT_BINS,
    episodes_per_bin: int = 100,
    base_seed: int = 0,
    jobs: int = 1,
) -> List[BinResult]:
    """Success statistics per instruction-length bin.

    Episode seeds derive from (base_seed, bin index, episode index), so
    results do not depend on scheduling; jobs > 1 only adds threads.
    """
    if jobs < 1:
        raise ValueError("jobs must be >= 1")

    def one(bin_index: int, episode_index: int) -> Tuple[str, int]:
        lo, hi = bins[bin_index]
        episode_spec = replace(spec, min_len=lo, max_len=hi)
        seed = derived_seed(base_seed, f"bin{bin_index}", f"ep{episode_index}")
        trace = run_episode(episode_spec, policy_name, seed, record_digests=False)
        return trace.outcome, trace.reward

    results = []
    if jobs == 1:
        for b in range(len(bins)):
            outcomes = [one(b, e) for e in range(episodes_per_bin)]
            results.append(_summarize(*bins[b], outcomes))
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for b in range(len(bins)):
                futures = [pool.submit(one, b, e) for e in range(episodes_per_bin)]
                outcomes = [f.result() for f in futures]  # episode order, not finish order
                results.append(_summarize(*bins[b], outcomes))
    return results


def write_csv(handle: IO, results: Sequence[BinResult]) -> None:
    writer = csv.DictWriter(handle, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for result in results:
        writer.writerow(result.row())


def longjump_sweep(
    policy_name: str,
    block_lens: Sequence[int] = tuple(range(1, 41)),
    episodes_each: int = 20,
    base_seed: int = 0,
) -> List[BinResult]:
    """Success rate on two-branch skip instructions versus block length.

    Each episode is a single conditional over a block of repeated
    subtasks whose guard is false, so the only correct behaviour is one
    long forward jump.  Policies with a bounded pointer range fall off
    beyond their reach.
    """
    results = []
    for block_len in block_lens:
        if not 1 <= block_len <= 40:
            raise ValueError("block lengths must lie in 1..40")
        outcomes = []
        for episode_index in range(episodes_each):
            seed = derived_seed(base_seed, f"jump{block_len}", f"ep{episode_index}")
            gen_rng = substream(seed, "generation")
            spawn_rng = substream(seed, "spawning")
            instruction = gen_longjump(gen_rng, block_len)
            world = spawn_longjump(spawn_rng, instruction, seed=seed)
            policy = make_policy(policy_name, MINECRAFT, substream(seed, "policy"))
            drive_world(world, policy, record_digests=False)
            outcomes.append((world.cause, world.reward))
        results.append(_summarize(block_len, block_len, outcomes))
    return results
