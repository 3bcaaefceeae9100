"""Instruction generators: lengths, filters, budgets, and determinism."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowgrid.errors import GenerationError
from flowgrid.generators import (
    assemble_starcraft,
    gen_build_tree,
    gen_longjump,
    gen_minecraft,
    gen_starcraft,
)
from flowgrid.instructions import (
    ENDIF,
    ENDWHILE,
    IF,
    NEXUS,
    SUBTASK,
    WHILE,
    Instruction,
    flow_kinds,
    validate,
)
from flowgrid.interpreter import sc_decode
from flowgrid.rngtools import substream


def rng_for(name, seed=0):
    return substream(seed, name)


# --- minecraft ----------------------------------------------------------------------


def test_lengths_stay_in_range():
    rng = rng_for("lens")
    for _ in range(200):
        ins = gen_minecraft(rng, (3, 9))
        assert 3 <= len(ins) <= 9
        assert validate(ins).ok


def test_exact_length_is_attainable():
    rng = rng_for("exact")
    for target in (1, 2, 6, 13):
        for _ in range(20):
            assert len(gen_minecraft(rng, (target, target))) == target


def test_single_filter_never_mixes_flow():
    rng = rng_for("single")
    for _ in range(150):
        ins = gen_minecraft(rng, (1, 12), "single")
        assert len(flow_kinds(ins)) <= 1


def test_multi_filter_always_mixes_flow():
    rng = rng_for("multi")
    for _ in range(60):
        ins = gen_minecraft(rng, (6, 12), "multi")
        assert flow_kinds(ins) == {IF, WHILE}


def test_multi_filter_impossible_below_six_lines():
    # one if-block plus one while-block cannot fit in five lines
    rng = rng_for("toosmall")
    with pytest.raises(GenerationError):
        gen_minecraft(rng, (1, 5), "multi", max_attempts=50)


def test_bad_arguments_rejected():
    rng = rng_for("args")
    with pytest.raises(ValueError):
        gen_minecraft(rng, (0, 4))
    with pytest.raises(ValueError):
        gen_minecraft(rng, (5, 2))
    with pytest.raises(ValueError):
        gen_minecraft(rng, (1, 4), "sideways")


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_generation_is_a_pure_function_of_the_stream(seed):
    a = gen_minecraft(substream(seed, "g"), (1, 10))
    b = gen_minecraft(substream(seed, "g"), (1, 10))
    assert a.lines == b.lines


# --- longjump -----------------------------------------------------------------------


def test_longjump_shape():
    rng = rng_for("jump")
    for block in (1, 7, 40):
        ins = gen_longjump(rng, block)
        assert len(ins) == block + 3
        assert validate(ins).ok
        opener, closer = ins[0], ins[-2]
        assert opener.kind in (IF, WHILE)
        assert closer.kind == (ENDIF if opener.kind == IF else ENDWHILE)
        assert all(line.kind == SUBTASK for line in ins[1:-2])
        assert ins[-1].kind == SUBTASK


def test_longjump_guard_is_satisfiable_by_omission():
    # the left comparand must be omittable without touching the final subtask
    rng = rng_for("guard")
    for _ in range(300):
        ins = gen_longjump(rng, 5)
        a, b = ins[0].condition
        final = ins[-1]
        assert a != b
        assert a != final.target
        if final.verb == "sell":
            assert a != "merchant"


def test_longjump_block_bounds():
    rng = rng_for("bounds")
    with pytest.raises(ValueError):
        gen_longjump(rng, 0)
    with pytest.raises(ValueError):
        gen_longjump(rng, 41)


# --- build trees --------------------------------------------------------------------


def test_tree_roots_at_nexus():
    rng = rng_for("tree")
    for _ in range(100):
        tree = gen_build_tree(rng)
        assert NEXUS not in tree.prerequisite
        assert set(tree.producer) == set(range(16))
        assert all(0 <= b < 14 for b in tree.producer.values())
        for building in range(14):
            chain = tree.chain(building)
            assert chain[0] == NEXUS or tree.prerequisite.get(chain[0]) is None
            assert chain[-1] == building


def test_max_depth_caps_chains():
    rng = rng_for("depth")
    for cap in (1, 2, 3):
        for _ in range(40):
            tree = gen_build_tree(rng, max_depth=cap)
            assert tree.max_depth() <= cap
    flat = gen_build_tree(rng_for("flat"), max_depth=1)
    assert flat.prerequisite == {}


def test_max_depth_validation():
    with pytest.raises(ValueError):
        gen_build_tree(rng_for("bad"), max_depth=0)


# --- starcraft assembly -------------------------------------------------------------


def test_assembly_respects_budget():
    rng = rng_for("budget")
    for max_len in (1, 2, 5, 9, 30):
        tree = gen_build_tree(rng)
        lines, fragment, required = assemble_starcraft(rng, tree, max_len)
        assert len(lines) <= max_len
        assert [line.ident for line in lines if line.is_unit] == required
        assert set(fragment.producer) == set(required)


def test_assembly_round_trips_through_decode():
    rng = rng_for("roundtrip")
    for _ in range(150):
        tree = gen_build_tree(rng)
        max_len = int(rng.integers(1, 31))
        lines, fragment, required = assemble_starcraft(rng, tree, max_len)
        if not lines:
            continue
        decoded, decoded_required = sc_decode(Instruction(lines))
        assert decoded.prerequisite == fragment.prerequisite
        assert decoded.producer == fragment.producer
        assert decoded_required == required


def test_conveyed_fragment_agrees_with_truth():
    rng = rng_for("truth")
    for _ in range(150):
        tree = gen_build_tree(rng)
        _, fragment, required = assemble_starcraft(rng, tree, 20)
        for building, prereq in fragment.prerequisite.items():
            assert tree.prerequisite.get(building) == prereq
        for unit in required:
            assert fragment.producer[unit] == tree.producer[unit]


def test_gen_starcraft_lengths_and_validity():
    rng = rng_for("sc")
    for max_len in (1, 3, 8, 25):
        tree, ins = gen_starcraft(rng, max_len)
        assert 1 <= len(ins) <= max_len
        assert validate(ins).ok
        sc_decode(ins)  # must stay decodable


def test_gen_starcraft_rejects_bad_budget():
    with pytest.raises(ValueError):
        gen_starcraft(rng_for("zero"), 0)


@given(st.integers(0, 2**32 - 1), st.integers(1, 20))
@settings(max_examples=40, deadline=None)
def test_starcraft_generation_deterministic(seed, max_len):
    t1, i1 = gen_starcraft(substream(seed, "sc"), max_len)
    t2, i2 = gen_starcraft(substream(seed, "sc"), max_len)
    assert t1.prerequisite == t2.prerequisite
    assert t1.producer == t2.producer
    assert i1.lines == i2.lines
