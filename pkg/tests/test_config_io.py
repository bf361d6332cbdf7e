import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ogttsde import config, io
from ogttsde.config import ConfigError
from ogttsde.simulate import PathRecord


def drop_key(text, key):
    return "\n".join(l for l in text.splitlines() if not l.split("#")[0].strip().startswith(key + " "))


def test_default_file_loads(default_cfg):
    assert default_cfg.model == "ogtt"
    assert default_cfg["alpha1"] == 0.12
    assert len(default_cfg.digest) == 64
    assert default_cfg.theta().alpha1 == 0.12
    assert default_cfg.protocol().values == (0.0, 250.0, 180.0, 0.0)


def test_unknown_key_reports_line():
    text = config.default_text() + "\nbogus = 1\n"
    line = text.count("\n")
    with pytest.raises(ConfigError, match=rf":{line}: unknown key 'bogus'") as info:
        config.load_text(text, "p.params")
    assert info.value.line == line


def test_missing_key_named():
    with pytest.raises(ConfigError, match="E_G0"):
        config.load_text(drop_key(config.default_text(), "E_G0"))


def test_duplicate_and_malformed_lines():
    with pytest.raises(ConfigError, match=r":2: duplicate key 'dt' \(first on line 1\)"):
        config.load_text("dt = 1\ndt = 2\n", "x", None)
    with pytest.raises(ConfigError, match=":1: expected 'name = value'"):
        config.load_text("just words\n")
    with pytest.raises(ConfigError, match=":1: empty name or value"):
        config.load_text("dt =\n")


def test_bad_values_carry_line_numbers():
    text = config.default_text().replace("dt = 0.1", "dt = fast")
    line = next(i for i, l in enumerate(text.splitlines(), 1) if l.startswith("dt ="))
    with pytest.raises(ConfigError, match=rf":{line}: bad value for 'dt'"):
        config.load_text(text, "p")
    with pytest.raises(ConfigError, match="scheme"):
        config.load_text("model = gbm\nscheme = rk4\n")
    with pytest.raises(ConfigError, match="seed"):
        config.load_text("model = gbm\nseed = -1\n")


def test_semantic_errors_point_at_the_key():
    text = config.default_text().replace("alpha_P = 0.2", "alpha_P = -0.2")
    cfg = config.load_text(text, "p")
    with pytest.raises(ConfigError, match="alpha_P"):
        cfg.theta()
    cfg = config.load_text(config.default_text().replace("G0 = 94.0288907", "G0 = 0"), "p")
    with pytest.raises(ConfigError, match="G0"):
        cfg.y0()


def test_overrides_take_precedence():
    cfg = config.load_default(overrides={"seed": "7", "alpha1": "0.3", "bound_alpha1": "0.1, 1"})
    assert cfg["seed"] == 7 and cfg.theta().alpha1 == 0.3
    assert cfg.bounds() == {"alpha1": (0.1, 1.0)}
    with pytest.raises(ConfigError, match="unknown override"):
        config.load_default(overrides={"nope": "1"})
    with pytest.raises(ConfigError, match="command line"):
        config.load_default(overrides={"dt": "x"})


def test_scalar_models_need_no_ogtt_keys():
    cfg = config.load_text("model = linear1d\nlin_b = 2\n")
    sys = cfg.system()
    assert (sys.source, sys.rate, sys.noise[0]) == (1.0, -2.0, 0.5)
    np.testing.assert_array_equal(cfg.y0(), [1.0])


def test_load_from_disk(tmp_path):
    p = tmp_path / "g.params"
    p.write_bytes(config.default_text("gbm.params").encode())
    cfg = config.load(p)
    assert cfg.model == "gbm" and cfg.source == str(p)
    with pytest.raises(ConfigError, match="cannot read"):
        config.load(tmp_path / "missing.params")


# --------------------------------------------------------------------- io

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=1, max_size=20))
def test_fmt_round_trips(values):
    for v in values:
        assert float(io.fmt(v)) == v


def test_path_csv_round_trip(tmp_path, rng):
    times = np.cumsum(rng.uniform(0.01, 1.0, 50))
    states = rng.lognormal(size=(50, 5))
    rec = PathRecord(times, states, seed=1, path_index=0)
    io.write_path(tmp_path / "p.csv", rec)
    t, s = io.read_path(tmp_path / "p.csv")
    np.testing.assert_array_equal(t, times)
    np.testing.assert_array_equal(s, states)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "t,G,I,beta,gamma,sigma"
    obs = io.read_observations(tmp_path / "p.csv")
    np.testing.assert_array_equal(obs.states, states)


def write(tmp_path, text):
    p = tmp_path / "obs.csv"
    p.write_text(text)
    return p


@pytest.mark.parametrize("body, pattern", [
    ("t,G,I,beta,gamma,sigma\n0,1,1,1,1,1\n", "at least 2"),
    ("t,G,I,beta,gamma,sigma\n0,1,1,1,1,1\n1,1,-1,1,1,1\n", "row 3: non-positive state I"),
    ("t,G,I,beta,gamma,sigma\n0,1,1,1,1,1\n1,1,1,1\n", "row 3: expected 6 fields"),
    ("t,G,I,beta,gamma,sigma\n0,1,1,1,1,1\n1,1,x,1,1,1\n", "row 3: non-numeric"),
    ("t,G,I,beta,gamma,sigma\n0,1,1,1,1,1\n1,1,nan,1,1,1\n", "row 3: non-finite"),
    ("t,G,I,beta,gamma,sigma\n1,1,1,1,1,1\n1,1,1,1,1,1\n", "row 3: times must be strictly"),
    ("time,x\n0,1\n1,2\n", "row 1: header"),
    ("t,G,I,b,gamma,sigma\n0,1,1,1,1,1\n1,1,1,1,1,1\n", "row 1: expected header"),
    ("", "empty"),
])
def test_observation_reader_errors(tmp_path, body, pattern):
    with pytest.raises(io.ObservationFormatError, match=pattern):
        io.read_observations(write(tmp_path, body))


def test_atomic_write_leaves_no_temporaries(tmp_path):
    io.write_json(tmp_path / "a" / "x.json", {"b": 1, "a": [1.5]})
    assert sorted(p.name for p in (tmp_path / "a").iterdir()) == ["x.json"]
    assert (tmp_path / "a" / "x.json").read_text() == '{\n  "a": [\n    1.5\n  ],\n  "b": 1\n}\n'
