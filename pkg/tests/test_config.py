import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from muskat_lab.config import ConfigError, RunConfig, load_config, parse_config, parse_params


def test_defaults_round_trip():
    cfg = RunConfig()
    assert parse_config(cfg.to_text()) == cfg


def test_comments_and_blank_lines():
    text = """
    # a comment line
    n = 32   # trailing comment
    scheme = rk4
    quadrature.rho0 = auto
    quadrature.R = 3.5
    monitors.stop_on_crossing = off
    initial.kind = mode
    initial.params = k1=2; amp=1e-3
    """
    cfg = parse_config(text)
    assert cfg.n == 32 and cfg.scheme == "rk4"
    assert cfg.quadrature_rho0 is None and cfg.quadrature_R == 3.5
    assert cfg.monitors_stop_on_crossing is False
    assert cfg.initial_param_dict() == {"k1": 2.0, "amp": 1e-3}
    q = cfg.quadrature()
    assert q.R == 3.5 and q.rings == cfg.quadrature_rings


@pytest.mark.parametrize(
    "text",
    [
        "bogus = 1",
        "n 32",
        "n = many",
        "L = 0.5",
        "scheme = euler",
        "initial.kind = square",
        "checkpoint_every = 0",
        "horizon = 0",
        "seed = -1",
        "monitors.modulus = maybe",
        "initial.params = k1",
        "initial.params = k1=x",
    ],
)
def test_rejects_bad_text(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_steps_alone_is_enough():
    cfg = parse_config("horizon = 0\nsteps = 5\n")
    assert cfg.steps == 5


def test_parse_params():
    assert parse_params("") == {}
    assert parse_params(" a = 1 ;; b=2.5 ") == {"a": 1.0, "b": 2.5}


def test_load_config(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("n = 16\n")
    cfg, text = load_config(p)
    assert cfg.n == 16 and text == "n = 16\n"
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


finite = st.floats(1e-6, 1e6, allow_nan=False)


@given(
    n=st.integers(4, 512),
    L=st.floats(1.0, 1e3),
    dt=finite,
    horizon=finite,
    seed=st.integers(0, 2**64 - 1),
    scheme=st.sampled_from(["rk4", "ifrk4"]),
    kind=st.sampled_from(["mode", "random-lipschitz", "fixture-crossing"]),
    rho0=st.none() | finite,
    cap=st.just(math.inf) | finite,
    det=st.booleans(),
)
@settings(max_examples=100)
def test_text_round_trip(n, L, dt, horizon, seed, scheme, kind, rho0, cap, det):
    cfg = RunConfig(
        n=n,
        L=L,
        dt_max=dt,
        horizon=horizon,
        seed=seed,
        scheme=scheme,
        initial_kind=kind,
        quadrature_rho0=rho0,
        monitors_radius_cap=cap,
        deterministic=det,
    )
    assert parse_config(cfg.to_text()) == cfg
