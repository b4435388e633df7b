import numpy as np
import pytest

from higgsflow import (MatrixFormField, TorusBase, build_scenario, load_field,
                       load_state, save_field, save_state)
from higgsflow.scenarios import random_valid_state


def test_field_roundtrip(tmp_path):
    base = TorusBase(1, 16)
    rng = np.random.default_rng(0)
    f = MatrixFormField(base, 1, 1,
                        rng.standard_normal((1, 1) + base.shape + (3, 3))
                        + 1j * rng.standard_normal((1, 1) + base.shape + (3, 3)))
    path = tmp_path / "field.snap"
    save_field(f, path)
    g = load_field(path)
    assert (g.p, g.q, g.rows) == (1, 1, 3)
    assert g.base == base
    assert np.array_equal(f.comps, g.comps)


def test_state_roundtrip(tmp_path):
    st = random_valid_state(TorusBase(1, 16), 2, seed=7)
    path = tmp_path / "state.snap"
    save_state(st, path)
    st2 = load_state(path)
    assert np.array_equal(st.metric.mat, st2.metric.mat)
    assert np.array_equal(st.structure.a.comps, st2.structure.a.comps)
    assert np.array_equal(st.structure.phi.comps, st2.structure.phi.comps)


def test_state_roundtrip_n2(tmp_path):
    st = build_scenario("t4-commuting", N=8)
    path = tmp_path / "state.snap"
    save_state(st, path)
    st2 = load_state(path)
    assert np.array_equal(st.metric.mat, st2.metric.mat)


def test_header_is_self_describing(tmp_path):
    st = build_scenario("nilpotent-r2", N=16)
    path = tmp_path / "state.snap"
    save_state(st, path)
    raw = path.read_bytes()
    assert raw[:8] == b"HBSNAP01"
    # little-endian section count then named sections
    assert int.from_bytes(raw[8:12], "little") == 3


def test_corrupt_magic_rejected(tmp_path):
    path = tmp_path / "bad.snap"
    path.write_bytes(b"NOTASNAP" + b"\0" * 64)
    with pytest.raises(ValueError, match="snapshot"):
        load_state(path)


def test_deterministic_bytes(tmp_path):
    st = build_scenario("nilpotent-r2", N=16)
    p1, p2 = tmp_path / "a.snap", tmp_path / "b.snap"
    save_state(st, p1)
    save_state(st, p2)
    assert p1.read_bytes() == p2.read_bytes()
