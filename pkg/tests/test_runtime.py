"""Tests for seeded sub-stream derivation."""

import numpy as np

from hybridnas.runtime import RandomStream


def test_same_seed_same_stream():
    a = RandomStream(5).substream("swarm").generator.random(8)
    b = RandomStream(5).substream("swarm").generator.random(8)
    assert np.array_equal(a, b)


def test_named_substreams_are_independent():
    a = RandomStream(5).substream("swarm").generator.random(8)
    b = RandomStream(5).substream("batches").generator.random(8)
    assert not np.array_equal(a, b)


def test_different_seeds_differ():
    a = RandomStream(5).substream("swarm").generator.random(8)
    b = RandomStream(6).substream("swarm").generator.random(8)
    assert not np.array_equal(a, b)


def test_nested_substreams():
    a = RandomStream(0).substream("x").substream("y").generator.random(4)
    b = RandomStream(0).substream("x").substream("y").generator.random(4)
    c = RandomStream(0).substream("y").substream("x").generator.random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
