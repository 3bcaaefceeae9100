"""Episode orchestration: determinism, traces, replay, the failure buffer."""

import io
import json

import pytest

from flowgrid.errors import ReplayMismatch, TraceFormatError
from flowgrid.harness import (
    EpisodeSpec,
    FailureBuffer,
    OracleStarcraftPolicy,
    ScriptedPointerPolicy,
    drive_world,
    make_policy,
    read_trace_records,
    replay_episode,
    run_episode,
    split_episodes,
    write_traces,
)
from flowgrid.evaluate import longjump_sweep
from flowgrid.generators import gen_longjump
from flowgrid.minecraft import spawn_longjump
from flowgrid.rngtools import substream


def trace_bytes(traces) -> bytes:
    buf = io.StringIO()
    write_traces(buf, traces)
    return buf.getvalue().encode("utf-8")


MC_SPEC = EpisodeSpec(domain="minecraft", min_len=2, max_len=8)
SC_SPEC = EpisodeSpec(domain="starcraft", min_len=2, max_len=8)


# --- determinism --------------------------------------------------------------------


def test_same_seed_same_trace_bytes():
    for spec in (MC_SPEC, SC_SPEC):
        first = [run_episode(spec, "oracle", seed) for seed in (3, 4)]
        second = [run_episode(spec, "oracle", seed) for seed in (3, 4)]
        assert trace_bytes(first) == trace_bytes(second)


def test_different_streams_are_isolated():
    # drawing policy randomness must not perturb the generated world
    a = run_episode(MC_SPEC, "oracle", 77)
    b = run_episode(MC_SPEC, "random", 77)
    assert a.instruction_text == b.instruction_text


def test_random_policy_is_seeded_by_policy_stream():
    a = run_episode(SC_SPEC, "random", 5)
    b = run_episode(SC_SPEC, "random", 5)
    assert trace_bytes([a]) == trace_bytes([b])


def test_outcomes_and_rewards_recorded():
    trace = run_episode(MC_SPEC, "oracle", 12)
    assert trace.outcome == "success" and trace.reward == 1
    if trace.steps:
        assert trace.steps[-1].done
        assert sum(s.reward for s in trace.steps) == 1


# --- trace files --------------------------------------------------------------------


def test_trace_round_trip():
    traces = [run_episode(MC_SPEC, "oracle", 21), run_episode(MC_SPEC, "oracle", 22)]
    blob = trace_bytes(traces).decode("utf-8")
    episodes = split_episodes(read_trace_records(io.StringIO(blob)))
    assert len(episodes) == 2
    for original, episode in zip(traces, episodes):
        assert episode["header"]["seed"] == original.seed
        assert episode["header"]["instruction"]["text"] == original.instruction_text
        assert episode["end"]["outcome"] == original.outcome
        assert len(episode["steps"]) == len(original.steps)


def test_read_trace_reports_bad_line_number():
    with pytest.raises(TraceFormatError) as err:
        read_trace_records(io.StringIO('{"kind":"header"}\nnot json\n'))
    assert err.value.line_number == 2


def test_split_rejects_orphan_records():
    with pytest.raises(TraceFormatError):
        split_episodes([{"kind": "step"}])
    with pytest.raises(TraceFormatError):
        split_episodes([{"kind": "mystery"}])
    with pytest.raises(TraceFormatError):
        split_episodes([{"kind": "header", "v": 99}])


def test_replay_verifies_recorded_episodes():
    for spec, seed in ((MC_SPEC, 31), (SC_SPEC, 32)):
        trace = run_episode(spec, "oracle", seed)
        blob = trace_bytes([trace]).decode("utf-8")
        episode = split_episodes(read_trace_records(io.StringIO(blob)))[0]
        frames = list(replay_episode(episode))
        assert len(frames) >= 1


def test_replay_detects_tampering():
    trace = run_episode(MC_SPEC, "oracle", 33)
    if not trace.steps:
        trace = run_episode(MC_SPEC, "oracle", 34)
    assert trace.steps
    blob = trace_bytes([trace]).decode("utf-8")
    lines = blob.splitlines()
    tampered = []
    for line in lines:
        record = json.loads(line)
        if record.get("kind") == "step" and record.get("digest"):
            record["digest"] = "0" * 16
            tampered.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
        else:
            tampered.append(line)
    episode = split_episodes(read_trace_records(io.StringIO("\n".join(tampered))))[0]
    with pytest.raises(ReplayMismatch):
        list(replay_episode(episode))


def test_replay_flags_outcome_divergence():
    trace = run_episode(MC_SPEC, "oracle", 35)
    blob = trace_bytes([trace]).decode("utf-8")
    lines = blob.splitlines()
    swapped = []
    for line in lines:
        record = json.loads(line)
        if record.get("kind") == "end":
            record["outcome"] = "timeout"
        if record.get("kind") == "step":
            record["digest"] = None
        swapped.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
    episode = split_episodes(read_trace_records(io.StringIO("\n".join(swapped))))[0]
    with pytest.raises(ReplayMismatch):
        list(replay_episode(episode))


# --- policies -----------------------------------------------------------------------


def test_make_policy_names():
    assert make_policy("oracle", "minecraft", substream(0, "p")).name == "oracle"
    assert isinstance(
        make_policy("oracle", "starcraft", substream(0, "p")), OracleStarcraftPolicy
    )
    with pytest.raises(ValueError):
        make_policy("clairvoyant", "minecraft", substream(0, "p"))


def test_scripted_policy_stuck_beyond_reach():
    rng = substream(41, "scripted")
    instruction = gen_longjump(rng, block_len=12)
    world = spawn_longjump(rng, instruction, seed=41)
    policy = ScriptedPointerPolicy(max_jump=3, walk=False)
    drive_world(world, policy, record_digests=False)
    assert world.cause == "timeout"


def test_scripted_policy_walks_into_reach():
    rng = substream(42, "scripted-walk")
    instruction = gen_longjump(rng, block_len=12)
    world = spawn_longjump(rng, instruction, seed=42)
    policy = ScriptedPointerPolicy(max_jump=3, walk=True)
    drive_world(world, policy, record_digests=False)
    assert world.cause == "success"


def test_scripted_policy_large_jump_succeeds_directly():
    results = longjump_sweep("oracle", block_lens=(5,), episodes_each=4, base_seed=9)
    assert results[0].success_rate == 1.0


def test_random_policies_emit_valid_actions():
    trace = run_episode(SC_SPEC, "random", 50)
    assert trace.outcome in ("success", "timeout")
    mc_trace = run_episode(MC_SPEC, "random", 51)
    assert mc_trace.outcome in ("success", "timeout", "out_of_order")


# --- failure buffer -----------------------------------------------------------------


def test_failure_buffer_ema_closed_form():
    buffer = FailureBuffer(beta=0.25)
    outcomes = [True, False, True, True]
    for i, success in enumerate(outcomes):
        buffer.update(seed=i, success=success)
    expected = 0.0
    for success in outcomes:
        expected = 0.75 * expected + 0.25 * (1.0 if success else 0.0)
    assert buffer.success_average == pytest.approx(expected, abs=1e-15)
    assert buffer.seeds == [1]


def test_failure_buffer_empty_never_retries():
    buffer = FailureBuffer()
    buffer.success_average = 0.9
    rng = substream(0, "buffer")
    assert buffer.retry_probability() == 0.0
    assert all(buffer.sample(rng) is None for _ in range(100))


def test_failure_buffer_retry_rate_tracks_average():
    buffer = FailureBuffer(beta=0.01, scale=1.0)
    buffer.seeds = [7, 8, 9]
    buffer.success_average = 0.6
    rng = substream(1, "buffer-rate")
    n = 20_000
    hits = sum(buffer.sample(rng) is not None for _ in range(n))
    assert abs(hits / n - 0.6) < 4 * (0.6 * 0.4 / n) ** 0.5


def test_failure_buffer_scale_clips_to_one():
    buffer = FailureBuffer(scale=5.0)
    buffer.seeds = [1]
    buffer.success_average = 0.5
    assert buffer.retry_probability() == 1.0
    rng = substream(2, "buffer-clip")
    assert all(buffer.sample(rng) == 1 for _ in range(50))


def test_failure_buffer_samples_only_buffered_seeds():
    buffer = FailureBuffer(scale=10.0)
    for seed in (11, 12, 13):
        buffer.update(seed, success=False)
    buffer.update(99, success=True)
    rng = substream(3, "buffer-members")
    drawn = {buffer.sample(rng) for _ in range(200)}
    drawn.discard(None)
    assert drawn <= {11, 12, 13} and drawn


def test_failure_buffer_validation():
    with pytest.raises(ValueError):
        FailureBuffer(beta=0.0)
    with pytest.raises(ValueError):
        FailureBuffer(scale=-1.0)


# --- spec validation ----------------------------------------------------------------


def test_episode_spec_validation():
    with pytest.raises(ValueError):
        EpisodeSpec(domain="chess")
    with pytest.raises(ValueError):
        EpisodeSpec(domain="minecraft", min_len=5, max_len=2)
