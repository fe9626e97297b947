from __future__ import annotations

from fractions import Fraction

import pytest

from binsub.interproc import infer
from binsub.ir import parse_ir
from binsub.lowering import CPtr, Func, Named, Prim, Struct, StructField, Unknown
from binsub.metrics import (
    GroundSignature,
    compare,
    ctype_from_json,
    filter_padding,
    load_signatures,
    signature_distance,
    type_distance,
)

I32 = Prim("int32", 32)


def test_filter_padding_drops_non_overlapping_fields():
    inf = Struct(None, (StructField(0, 32, I32), StructField(8, 32, I32), StructField(18, 8, I32)))
    gr = Struct(None, (StructField(0, 64, I32), StructField(16, 32, I32)))
    assert [f.offset for f in filter_padding(inf, gr).fields] == [0, 18]


def test_named_types_resolve_through_env():
    env = {"s": Struct("s", (StructField(0, 32, I32),))}
    assert type_distance(Named("s"), Struct(None, (StructField(0, 32, I32),)), inferred_env=env) == 0


def test_recursive_pointers_terminate():
    env = {"n": Struct("n", (StructField(0, 32, CPtr(Named("n"))),))}
    assert type_distance(CPtr(Named("n")), CPtr(Named("n")), inferred_env=env, ground_env=env) == 0


def test_unknown_is_top():
    assert type_distance(Unknown(), I32) == Fraction(1, 2)
    assert type_distance(Unknown(), CPtr(I32)) == 2


def test_ctype_from_json():
    t = ctype_from_json({"kind": "func", "params": [{"kind": "ptr", "pointee": {"kind": "unknown"}}],
                         "returns": [{"kind": "prim", "name": "int8", "width": 8}]})
    assert t == Func(((0, CPtr(Unknown())),), ((0, Prim("int8", 8)),))
    with pytest.raises(ValueError):
        ctype_from_json({"kind": "array"})


def test_ground_signature_validation():
    with pytest.raises(ValueError):
        GroundSignature({-1: I32})
    with pytest.raises(ValueError):
        GroundSignature.from_ctype(I32)


def test_compare_reports_missing_functions():
    a = {"f": GroundSignature({0: I32})}
    b = {"f": GroundSignature({0: I32}), "g": GroundSignature()}
    rows, mean, warnings = compare(a, b)
    assert rows == {"f": 0, "g": 2}
    assert mean == 1
    assert warnings == ["g: missing from inferred file"]


def test_running_example_against_ground_truth(samples):
    res = infer(parse_ir((samples / "fig4.ir").read_text()))
    inferred = load_signatures(res.to_json())
    ground = load_signatures((samples / "fig4.ground.json").read_text())
    d = signature_distance(inferred["list_inc"], ground["list_inc"])
    assert d == Fraction(1, 2)
    rows, mean, warnings = compare(inferred, ground)
    assert mean == d and not warnings
