import numpy as np
import pytest

from p300bench.rng import SeededRng, ensure_rng


def test_same_seed_same_stream():
    a = SeededRng(123).generator.random(100)
    b = SeededRng(123).generator.random(100)
    assert np.array_equal(a, b)


def test_different_seeds_differ():
    a = SeededRng(123).generator.random(100)
    b = SeededRng(124).generator.random(100)
    assert not np.array_equal(a, b)


def test_children_are_deterministic_and_distinct():
    root = SeededRng(42)
    seeds = [root.child(i).seed for i in range(50)]
    assert seeds == [SeededRng(42).child(i).seed for i in range(50)]
    assert len(set(seeds)) == 50
    assert root.seed not in seeds


def test_child_streams_independent_of_parent_use():
    root = SeededRng(7)
    root.generator.random(1000)  # consume the parent
    assert root.child(3).seed == SeededRng(7).child(3).seed


def test_nested_children():
    assert SeededRng(1).child(2).child(3).seed == SeededRng(1).child(2).child(3).seed
    assert SeededRng(1).child(2).child(3).seed != SeededRng(1).child(3).child(2).seed


def test_seed_range_enforced():
    SeededRng(2**64 - 1)
    with pytest.raises(ValueError):
        SeededRng(-1)
    with pytest.raises(ValueError):
        SeededRng(2**64)
    with pytest.raises(ValueError):
        SeededRng(0).child(-1)


def test_ensure_rng():
    assert ensure_rng(None).seed == 0
    assert ensure_rng(9).seed == 9
    existing = SeededRng(5)
    assert ensure_rng(existing) is existing
