import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from intervals import Interval
from lattice import SiteSet
from utils_serialization import dumps, serialize_result


class Colour(enum.Enum):
    RED = "red"


@dataclass(frozen=True)
class Holder:
    name: str
    window: dict
    cache: list = field(default_factory=list, metadata={"serialize": False})


def test_scalars():
    assert serialize_result(np.int64(3)) == 3
    assert serialize_result(np.float32(0.5)) == 0.5
    assert serialize_result(np.bool_(True)) is True
    assert serialize_result(Colour.RED) == "red"
    assert serialize_result(None) is None


def test_non_finite_floats_become_strings():
    assert serialize_result(math.inf) == "inf"
    assert serialize_result(-math.inf) == "-inf"
    assert serialize_result(float("nan")) == "nan"
    assert serialize_result(Interval(0.0, math.inf)) == [0.0, "inf"]


def test_sites_and_windows():
    assert serialize_result((1, -2)) == [1, -2]
    assert serialize_result(SiteSet([(1,), (0,)])) == [[0], [1]]
    assert serialize_result({(1,): -1, (0,): 1}) == [[[0], 1], [[1], -1]]
    assert serialize_result({"a": (0, 0)}) == {"a": [0, 0]}


def test_dataclass_skips_unserialized_fields():
    out = serialize_result(Holder("x", {(0,): 1}, [1, 2, 3]))
    assert out == {"name": "x", "window": [[[0], 1]]}


def test_dumps_is_canonical():
    a = dumps({"b": 1, "a": [1.5, np.int32(2)]})
    assert a == '{"a":[1.5,2],"b":1}'
    assert json.loads(a) == {"a": [1.5, 2], "b": 1}
