"""Command-line entry point.

Subcommands: gen (sample instructions), run (play episodes to a JSONL
trace), eval (binned success rates to CSV), replay (re-simulate a trace
and verify it), scan-check (numeric kernel self-test).

Exit codes: 0 success, 1 usage error, 2 verification failure,
3 input/output error.  FLOWGRID_LOG sets the logging level.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
from typing import List, Optional, Sequence, Tuple

from . import evaluate as evaluate_mod
from . import pointer
from .errors import FlowgridError, ReplayMismatch, TraceFormatError
from .generators import FLOW_FILTERS, gen_minecraft, gen_starcraft
from .harness import (
    EpisodeSpec,
    FailureBuffer,
    read_trace_records,
    replay_episode,
    run_episode,
    split_episodes,
    write_traces,
)
from .instructions import MINECRAFT, STARCRAFT
from .rngtools import derived_seed, substream

log = logging.getLogger("flowgrid")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_IO = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse, but usage problems raise instead of exiting with code 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _setup_logging() -> None:
    name = os.environ.get("FLOWGRID_LOG", "warning").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@contextlib.contextmanager
def _open_out(path: Optional[str]):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            yield handle


def _parse_bins(text: str) -> List[Tuple[int, int]]:
    bins = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo_s, hi_s = part.split("-", 1)
            lo, hi = int(lo_s), int(hi_s)
        else:
            lo = hi = int(part)
        if not 1 <= lo <= hi:
            raise UsageError(f"bad bin {part!r}: need 1 <= lo <= hi")
        bins.append((lo, hi))
    if not bins:
        raise UsageError("no bins given")
    return bins


def _episode_spec(args) -> EpisodeSpec:
    return EpisodeSpec(
        domain=args.domain,
        min_len=args.min_len,
        max_len=args.max_len,
        flow=args.flow,
        max_depth=args.max_depth,
        disruptions=not args.no_disruptions,
    )


# --- subcommands ------------------------------------------------------------------


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise UsageError(message)


def cmd_gen(args) -> int:
    _require(args.count >= 1, "--count must be at least 1")
    _require(1 <= args.min_len <= args.max_len, "need 1 <= --min-len <= --max-len")
    rng = substream(args.seed, "generation")
    rows = []
    for index in range(args.count):
        if args.domain == MINECRAFT:
            instruction = gen_minecraft(rng, (args.min_len, args.max_len), args.flow)
            row = {
                "domain": MINECRAFT,
                "index": index,
                "text": instruction.text(),
                "encoded": instruction.encoded(),
            }
        else:
            while True:
                target = int(rng.integers(args.min_len, args.max_len + 1))
                tree, instruction = gen_starcraft(rng, target, args.max_depth)
                if len(instruction) >= args.min_len:
                    break
            row = {
                "domain": STARCRAFT,
                "index": index,
                "text": instruction.text(),
                "encoded": instruction.encoded(),
                "tree": {
                    "prerequisite": {str(k): v for k, v in sorted(tree.prerequisite.items())},
                    "producer": {str(k): v for k, v in sorted(tree.producer.items())},
                },
            }
        rows.append(row)
    with _open_out(args.out) as handle:
        for row in rows:
            handle.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")
    log.info("generated %d %s instructions", args.count, args.domain)
    return EXIT_OK


def _run_sequential(args, spec: EpisodeSpec) -> list:
    traces = []
    buffer = None
    buffer_rng = None
    if args.failure_buffer:
        buffer = FailureBuffer(beta=args.buffer_beta, scale=args.buffer_scale)
        buffer_rng = substream(args.seed, "buffer")
    for index in range(args.episodes):
        seed = None
        if buffer is not None:
            seed = buffer.sample(buffer_rng)
            if seed is not None:
                log.debug("episode %d retries buffered seed %d", index, seed)
        if seed is None:
            seed = derived_seed(args.seed, f"ep{index}")
        trace = run_episode(spec, args.policy, seed, record_digests=not args.no_digests)
        if buffer is not None:
            buffer.update(seed, trace.outcome == "success")
        traces.append(trace)
    return traces


def _run_parallel(args, spec: EpisodeSpec) -> list:
    from concurrent.futures import ThreadPoolExecutor

    seeds = [derived_seed(args.seed, f"ep{i}") for i in range(args.episodes)]
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        futures = [
            pool.submit(run_episode, spec, args.policy, seed, not args.no_digests)
            for seed in seeds
        ]
        return [f.result() for f in futures]  # submission order


def cmd_run(args) -> int:
    _require(args.episodes >= 1, "--episodes must be at least 1")
    _require(args.jobs >= 1, "--jobs must be at least 1")
    if args.failure_buffer and args.jobs > 1:
        raise UsageError("--failure-buffer requires sequential execution (--jobs 1)")
    spec = _episode_spec(args)
    traces = _run_sequential(args, spec) if args.jobs == 1 else _run_parallel(args, spec)
    with _open_out(args.out) as handle:
        write_traces(handle, traces)
    wins = sum(1 for t in traces if t.outcome == "success")
    print(f"episodes={len(traces)} successes={wins} rate={wins / len(traces):.4f}",
          file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    _require(args.episodes_per_bin >= 1, "--episodes-per-bin must be at least 1")
    _require(args.jobs >= 1, "--jobs must be at least 1")
    if args.longjump:
        if args.domain != MINECRAFT:
            raise UsageError("--longjump applies to the minecraft domain")
        _require(
            1 <= args.block_min <= args.block_max <= 40,
            "need 1 <= --block-min <= --block-max <= 40",
        )
        blocks = range(args.block_min, args.block_max + 1)
        results = evaluate_mod.longjump_sweep(
            args.policy, blocks, args.episodes_per_bin, args.seed
        )
    else:
        bins = _parse_bins(args.bins) if args.bins else list(evaluate_mod.DEFAULT_BINS)
        spec = _episode_spec(args)
        results = evaluate_mod.evaluate(
            spec, args.policy, bins, args.episodes_per_bin, args.seed, args.jobs
        )
    with _open_out(args.out) as handle:
        evaluate_mod.write_csv(handle, results)
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        with open(args.trace, "r", encoding="utf-8") as handle:
            episodes = split_episodes(read_trace_records(handle))
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if not episodes:
        print("error: trace holds no episodes", file=sys.stderr)
        return EXIT_IO
    for number, episode in enumerate(episodes):
        for frame in replay_episode(episode, check_digests=not args.no_check_digests):
            if not args.quiet:
                print(frame)
                print()
        log.info("episode %d replayed: %s", number, episode["header"]["seed"])
    print(f"replay ok: {len(episodes)} episode(s) verified", file=sys.stderr)
    return EXIT_OK


def _write_dict_rows(path: str, fields: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def cmd_scan_check(args) -> int:
    _require(args.trials >= 1, "--trials must be at least 1")
    _require(args.max_len >= 1, "--max-len must be at least 1")
    _require(args.grad_trials >= 0, "--grad-trials must be non-negative")
    rng = substream(args.seed, "scan-check")
    oracle = pointer.oracle_sweep(rng, args.trials, args.max_len, args.mode)
    report = [
        f"mode={args.mode} trials={args.trials} max_len={args.max_len}",
        f"oracle max abs diff      : {oracle['max_abs_diff']:.3e} (tolerance {pointer.ORACLE_TOL:.0e})",
        f"normalization max error  : {oracle['max_norm_err']:.3e}",
    ]
    ok = (
        oracle["max_abs_diff"] < pointer.ORACLE_TOL
        and oracle["max_norm_err"] < pointer.ORACLE_TOL
    )
    if args.mode == pointer.STOP_PROCESS:
        report.append(f"residual max error       : {oracle['max_residual_err']:.3e}")
        ok = ok and oracle["max_residual_err"] < pointer.ORACLE_TOL

    gradient = None
    if args.mode == pointer.STOP_PROCESS:
        gradient = pointer.gradient_sweep(rng, args.grad_trials, args.max_len)
        report.append(
            f"gradient max rel err     : {gradient['max_rel_err']:.3e} (tolerance {pointer.GRADIENT_TOL:.0e})"
        )
        ok = ok and gradient["max_rel_err"] < pointer.GRADIENT_TOL
    else:
        report.append("gradient check           : skipped (analytic form covers stop-process only)")

    if args.out_dir is not None:
        os.makedirs(args.out_dir, exist_ok=True)
        columns_path = os.path.join(args.out_dir, "columns.csv")
        _write_dict_rows(
            columns_path,
            ("trial", "length", "max_abs_diff", "norm_err", "residual_err"),
            oracle["rows"],
        )
        report.append(f"wrote {columns_path}")
        if gradient is not None:
            gradients_path = os.path.join(args.out_dir, "gradients.csv")
            _write_dict_rows(
                gradients_path, ("trial", "length", "max_rel_err"), gradient["rows"]
            )
            report.append(f"wrote {gradients_path}")

    report.append("PASS" if ok else "FAIL")
    print("\n".join(report))
    return EXIT_OK if ok else EXIT_VERIFY


# --- parser -----------------------------------------------------------------------


def _add_instruction_opts(sub, domain_required=True):
    sub.add_argument("--domain", choices=(MINECRAFT, STARCRAFT),
                     required=domain_required, help="instruction domain")
    sub.add_argument("--min-len", type=int, default=1)
    sub.add_argument("--max-len", type=int, default=10)
    sub.add_argument("--flow", choices=FLOW_FILTERS, default="any",
                     help="minecraft control-flow filter")
    sub.add_argument("--max-depth", type=int, default=None,
                     help="starcraft technology-tree depth cap")


def build_parser(defaults: Optional[dict] = None) -> argparse.ArgumentParser:
    parser = _Parser(prog="flowgrid", description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=None,
                        help="JSON file of option defaults (dest names as keys)")
    commands = parser.add_subparsers(dest="command", metavar="command")

    gen = commands.add_parser("gen", parents=[], help="sample instructions to JSONL")
    _add_instruction_opts(gen)
    gen.add_argument("--count", type=int, default=10)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default="-")
    gen.set_defaults(func=cmd_gen)

    run = commands.add_parser("run", help="play episodes, write a JSONL trace")
    _add_instruction_opts(run)
    run.add_argument("--episodes", type=int, default=10)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--policy", default="oracle",
                     help="oracle | random | scripted:<params.json>")
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--no-disruptions", action="store_true")
    run.add_argument("--no-digests", action="store_true",
                     help="omit per-step world digests from the trace")
    run.add_argument("--failure-buffer", action="store_true",
                     help="retry failed seeds (sequential only)")
    run.add_argument("--buffer-beta", type=float, default=0.01)
    run.add_argument("--buffer-scale", type=float, default=1.0)
    run.add_argument("--out", default="-")
    run.set_defaults(func=cmd_run)

    ev = commands.add_parser("eval", help="binned success rates to CSV")
    _add_instruction_opts(ev)
    ev.add_argument("--episodes-per-bin", type=int, default=100)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--policy", default="oracle")
    ev.add_argument("--jobs", type=int, default=1)
    ev.add_argument("--bins", default=None,
                    help='comma list of lo-hi length ranges, e.g. "1-10,11-20"')
    ev.add_argument("--no-disruptions", action="store_true")
    ev.add_argument("--longjump", action="store_true",
                    help="sweep two-branch skip instructions by block length")
    ev.add_argument("--block-min", type=int, default=1)
    ev.add_argument("--block-max", type=int, default=40)
    ev.add_argument("--out", default="-")
    ev.set_defaults(func=cmd_eval)

    rp = commands.add_parser("replay", help="re-simulate and verify a trace")
    rp.add_argument("--trace", required=True)
    rp.add_argument("--no-check-digests", action="store_true")
    rp.add_argument("--quiet", action="store_true", help="suppress frame output")
    rp.set_defaults(func=cmd_replay)

    sc = commands.add_parser("scan-check", help="verify the movement kernel")
    sc.add_argument("--trials", type=int, default=1000)
    sc.add_argument("--max-len", type=int, default=25)
    sc.add_argument("--grad-trials", type=int, default=100)
    sc.add_argument("--mode", choices=pointer.MODES, default=pointer.STOP_PROCESS)
    sc.add_argument("--seed", type=int, default=0)
    sc.add_argument("--out-dir", default=None,
                    help="directory for columns.csv / gradients.csv")
    sc.set_defaults(func=cmd_scan_check)

    if defaults:
        # Subcommands parse into their own namespace, so the overrides must
        # land on every subparser, not just the root.
        parser.set_defaults(**defaults)
        for sub in (gen, run, ev, rp, sc):
            sub.set_defaults(**defaults)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config", default=None)
        known, _ = pre.parse_known_args(argv)
        defaults = {}
        if known.config:
            try:
                with open(known.config, "r", encoding="utf-8") as handle:
                    defaults = json.load(handle)
            except (OSError, json.JSONDecodeError) as exc:
                print(f"error: cannot read config: {exc}", file=sys.stderr)
                return EXIT_IO
            if not isinstance(defaults, dict):
                raise UsageError("config must be a JSON object")
        parser = build_parser(defaults)
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TraceFormatError as exc:
        print(f"error: malformed trace: {exc}", file=sys.stderr)
        return EXIT_IO
    except ReplayMismatch as exc:
        print(f"replay mismatch: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except FlowgridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
