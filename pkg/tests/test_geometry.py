import json

import numpy as np
import pytest

from kllab.errors import EmptySlit, NonpositiveHeight, OverlapAtEqualHeight
from kllab.geometry import SlitVector, contains, distance_R, from_json, scale, slit_distance, translate, validate


def test_flat_and_split_forms_agree():
    a = validate([1.0, 2.0, -1.0, 0.0, 1.0, 0.5])
    b = validate([1.0, 2.0], [-1.0, 0.0], [1.0, 0.5])
    assert a == b and a.N == 2
    assert np.array_equal(a.vector, [1.0, 2.0, -1.0, 0.0, 1.0, 0.5])


@pytest.mark.parametrize("args, exc, idx", [
    (([1.0, -0.1], [0, 2], [1, 3]), NonpositiveHeight, 2),
    (([1.0], [1.0], [1.0]), EmptySlit, 1),
    (([1.0, 1.0], [0.0, 0.5], [1.0, 2.0]), OverlapAtEqualHeight, (1, 2)),
])
def test_invalid_configurations(args, exc, idx):
    with pytest.raises(exc) as info:
        validate(*args)
    got = (info.value.j, info.value.k) if exc is OverlapAtEqualHeight else info.value.j
    assert got == idx


def test_touching_slits_at_equal_height_rejected():
    with pytest.raises(OverlapAtEqualHeight):
        validate([1.0, 1.0], [0.0, 1.0], [1.0, 2.0])
    validate([1.0, 1.0], [0.0, 1.0 + 1e-9], [1.0, 2.0])


def test_distance_R(one_slit):
    assert distance_R(0.0, one_slit) == pytest.approx(1.0)
    assert distance_R(4.0, one_slit) == pytest.approx(np.hypot(3.0, 1.0))
    assert distance_R(0.0, SlitVector.empty()) == np.inf


def test_translate_scale(two_slits):
    t = translate(two_slits, 0.7)
    assert distance_R(0.7, t) == pytest.approx(distance_R(0.0, two_slits))
    s = scale(two_slits, 3.0)
    assert distance_R(0.0, s) == pytest.approx(3.0 * distance_R(0.0, two_slits))
    assert np.allclose(s.y, 3.0 * two_slits.y)


def test_contains(one_slit):
    assert contains(one_slit, 0.3 + 2.0j)
    assert not contains(one_slit, 0.3 + 1.0j)
    assert not contains(one_slit, 0.3 - 0.2j)
    assert contains(one_slit, 1.5 + 1.0j)


def test_slit_distance(one_slit):
    d = slit_distance(np.array([0.0 + 1.5j, 2.0 + 1.0j]), one_slit)
    assert np.allclose(d, [0.5, 1.0])


def test_json_round_trip(two_slits):
    text = two_slits.to_json()
    assert from_json(text) == two_slits
    assert json.loads(text)[1] == {"y": 0.5, "x": 0.5, "xr": 1.5}


def test_immutable(one_slit):
    with pytest.raises(ValueError):
        one_slit.y[0] = 2.0
