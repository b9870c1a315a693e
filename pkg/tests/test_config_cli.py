import json

import pytest
from click.testing import CliRunner
from hypothesis import given
from hypothesis import strategies as st

from schnull import config
from schnull.cli import main
from schnull.config import ConfigError, RunConfig

FAST = ["N=8", "depth=1", "substeps=1", "ensemble=3", "eps_levels=2", "table_nt=5", "table_nx=5",
        "identity_cases=bubble_exp", "identity_grids=16,32,64", "picard_max_iter=10"]


def invoke(tmp_path, cmd, *sets, extra=()):
    args = [cmd, "--out", str(tmp_path / cmd)]
    for s in FAST + list(sets):
        args += ["--set", s]
    return CliRunner().invoke(main, args + list(extra))


def test_defaults_roundtrip():
    cfg = RunConfig()
    assert config.load(None, []) == cfg
    raw = config.parse_text(cfg.dump())
    assert set(raw) == set(config.keys())
    assert RunConfig().with_overrides(raw) == cfg


@given(st.floats(1e-6, 0.2, allow_nan=False), st.integers(1, 64), st.sampled_from(["clamped", "simply_supported"]))
def test_dump_is_exact_for_floats(eps, N, bc):
    cfg = RunConfig(eps=eps, N=N, bc=bc)
    assert RunConfig().with_overrides(config.parse_text(cfg.dump())) == cfg


def test_parse_text_comments_and_errors(tmp_path):
    raw = config.parse_text("# header\nlam = 3  # trailing\n\nsigma = none\n")
    cfg = RunConfig().with_overrides(raw)
    assert cfg.lam == 3.0 and cfg.sigma is None
    with pytest.raises(ConfigError, match="unknown"):
        config.parse_text("lamda = 3\n")
    with pytest.raises(ConfigError, match="key = value"):
        config.parse_text("lam 3\n")
    with pytest.raises(ConfigError):
        config.parse_value("N", "eight")
    with pytest.raises(ConfigError):
        config.parse_override("N8")
    p = tmp_path / "a.cfg"
    p.write_text("N = 16\n")
    assert config.load(p, ["N=12"]).N == 12


@pytest.mark.parametrize(
    "kw",
    [dict(bc="free"), dict(scaling="x"), dict(G0_left=0.8), dict(N=0), dict(depth=-1),
     dict(sweep_key="nope"), dict(sweep_key="sweep_values"), dict(initial="sawtooth")],
)
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        RunConfig(**kw)


@pytest.mark.parametrize("cmd", ["weights", "identity-check", "carleman", "hum", "semilinear"])
def test_subcommands_write_run_directory(tmp_path, cmd):
    res = invoke(tmp_path, cmd)
    assert res.exit_code == 0, res.output
    out = tmp_path / cmd
    assert {"resolved.cfg", "summary.json", "plot.gp"} <= {p.name for p in out.iterdir()}
    assert any(p.suffix == ".csv" for p in out.iterdir())
    json.loads((out / "summary.json").read_text())
    assert config.load(out / "resolved.cfg").N == 8


def test_invalid_input_exit_code(tmp_path):
    assert invoke(tmp_path, "hum", "lamda=2").exit_code == 2
    assert invoke(tmp_path, "hum", "eps=0.2").exit_code == 2  # eps must stay below T/4
    res = CliRunner().invoke(main, ["weights", "--config", str(tmp_path / "missing.cfg")])
    assert res.exit_code == 2


def test_divergence_exit_code(tmp_path):
    # with one substep per interval and one interval, f only sees y0; use more steps
    res = invoke(tmp_path, "semilinear", "kappa=1e5", "nonlinearity=mixed", "depth=2", "substeps=2")
    assert res.exit_code == 3


def test_not_converged_exit_code(tmp_path):
    res = invoke(tmp_path, "hum", "cg_max_iter=1", "cg_tol=1e-14")
    assert res.exit_code == 4
    assert (tmp_path / "hum" / "summary.json").exists()


def test_zero_initial_state_needs_no_control(tmp_path):
    assert invoke(tmp_path, "hum", "initial=zero").exit_code == 0
    s = json.loads((tmp_path / "hum" / "summary.json").read_text())
    assert s["levels"][0]["terminal_norm_sq"] == 0.0


def test_threads_do_not_change_results(tmp_path):
    a = invoke(tmp_path / "a", "carleman", extra=["--threads", "1"])
    b = invoke(tmp_path / "b", "carleman", extra=["--threads", "3"])
    assert a.exit_code == b.exit_code == 0
    csv_a = (tmp_path / "a" / "carleman" / "carleman.csv").read_text()
    assert csv_a == (tmp_path / "b" / "carleman" / "carleman.csv").read_text()


def test_sweep_reproducible_from_resolved_config(tmp_path):
    res = invoke(tmp_path, "sweep", "sweep_target=hum", "sweep_key=eps", "sweep_values=0.05,0.025")
    assert res.exit_code == 0, res.output
    first = tmp_path / "sweep"
    assert (first / "point_001" / "summary.json").exists()
    again = CliRunner().invoke(main, ["sweep", "--config", str(first / "resolved.cfg"), "--out", str(tmp_path / "again")])
    assert again.exit_code == 0
    for p in first.rglob("*"):
        if p.is_file():
            assert p.read_bytes() == (tmp_path / "again" / p.relative_to(first)).read_bytes(), p


def test_seed_option_overrides_key(tmp_path):
    invoke(tmp_path, "weights", extra=["--seed", "17"])
    assert config.load(tmp_path / "weights" / "resolved.cfg").seed == 17
