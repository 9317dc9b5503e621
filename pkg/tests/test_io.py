import json

import numpy as np
import pytest

from conftest import harmonic
from wormhole_waves.errors import InvalidArgument
from wormhole_waves.io import (
    config_hash, read_harmonic_table, read_state, write_harmonic, write_json, write_state,
    write_table,
)
from wormhole_waves.model import FieldState, Form, ModelParams, make_grid


@pytest.mark.parametrize("mode", ["csv", "binary"])
def test_state_round_trip(tmp_path, mode):
    g = make_grid(4.0, 65)
    st = FieldState(np.exp(-g.r**2), np.sin(g.x) * np.exp(-g.r**2), 1.25, Form.LINEAR,
                    ModelParams(2, 1), g)
    path = write_state(tmp_path / "s.dat", st, mode)
    back = read_state(path)
    np.testing.assert_array_equal(back.f, st.f)
    np.testing.assert_array_equal(back.g, st.g)
    assert back.time == 1.25 and back.form is Form.LINEAR and back.params == st.params
    assert back.grid.same_as(g)


def test_state_errors(tmp_path):
    g = make_grid(4.0, 65)
    st = FieldState(0 * g.r, 0 * g.r, 0.0, Form.U, ModelParams(1, 1), g)
    with pytest.raises(InvalidArgument):
        write_state(tmp_path / "x", st, "hdf5")
    (tmp_path / "bad").write_text('{"format": "other"}\n')
    with pytest.raises(InvalidArgument):
        read_state(tmp_path / "bad")


def test_config_hash_is_order_independent():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_json_and_tables(tmp_path):
    write_json(tmp_path / "m.json", {"x": np.float64(1.5), "y": float("nan")})
    assert json.loads((tmp_path / "m.json").read_text()) == {"x": 1.5, "y": "nan"}
    write_table(tmp_path / "t.csv", ["a", "b"], [])
    assert (tmp_path / "t.csv").read_text() == "a,b\n"


def test_harmonic_files(tmp_path):
    Q = harmonic(1, 1, 6.0, 601)
    write_harmonic(tmp_path, Q)
    man, cols = read_harmonic_table(tmp_path)
    assert man["alpha"] == Q.alpha and cols.shape == (601, 4)
    np.testing.assert_array_equal(cols[:, 2], Q.Q)
