import numpy as np
import pytest

from mestim.streams import as_stream, derive_seed, make_stream, open_uniform


def test_same_key_same_stream():
    a = make_stream(7, 100, 3).random(5)
    b = make_stream(7, 100, 3).random(5)
    assert np.array_equal(a, b)


def test_keys_give_distinct_streams():
    draws = [make_stream(7, *k).random(4).tobytes() for k in [(), (0,), (1,), (0, 1), (1, 0)]]
    assert len(set(draws)) == len(draws)


def test_seed_required():
    with pytest.raises(ValueError):
        make_stream(None)
    with pytest.raises(ValueError):
        derive_seed(None, 1)


def test_as_stream_passes_generators_through():
    g = make_stream(1)
    assert as_stream(g) is g
    assert np.array_equal(as_stream(3).random(3), make_stream(3).random(3))


def test_open_uniform_excludes_endpoints():
    u = open_uniform(make_stream(0), 1_000_000)
    assert u.min() > 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 3 * (1 / np.sqrt(12)) / 1000


def test_derive_seed_stable_and_in_range():
    s = derive_seed(20240501, 200, 3)
    assert s == derive_seed(20240501, 200, 3)
    assert 0 <= s < 2**63
    assert s != derive_seed(20240501, 200, 4) != derive_seed(20240501, 800, 3)
