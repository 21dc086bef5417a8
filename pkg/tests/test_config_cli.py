import json
import math

import pytest

from resonance_lab import PipelineAbort, load_config, run_experiment
from resonance_lab.cli import build_parser, main
from resonance_lab.config import SCHEMA, bundled_configs, flag_name, parse_float_list
from resonance_lab.errors import PreconditionError
from resonance_lab.pipeline import STAGES, emit_report

FAST = ["--lambda-theta", "0.05", "--lambda-certify", "0.95", "--graph-invariance-points", "1"]


def test_bundled_configs_load():
    names = bundled_configs()
    assert {"interval-k1-tanh02", "interval-k1-dual", "interval-k3-tanh025", "square-mu5-tanh02"} <= set(names)
    for n in names:
        cfg = load_config(n)
        assert cfg.source == f"bundled:{n}"
    assert load_config("interval-k1-dual").get("nonlinearity", "orientation") == "dual"


def test_config_file_and_errors(tmp_path):
    p = tmp_path / "a.ini"
    p.write_text("[nonlinearity]\nc = 0.1\n[lambda]\ntheta = auto\n")
    cfg = load_config(p)
    assert cfg.get("nonlinearity", "c") == 0.1 and cfg.get("lambda", "theta") is None
    p.write_text("[bogus]\nx = 1\n")
    with pytest.raises(PreconditionError):
        load_config(p)
    p.write_text("[problem]\nk = two\n")
    with pytest.raises(PreconditionError):
        load_config(p)
    p.write_text("[nonlinearity]\nname = cubic\n")
    with pytest.raises(PreconditionError):
        load_config(p)
    with pytest.raises(PreconditionError):
        load_config("no-such-config")
    with pytest.raises(PreconditionError):
        parse_float_list("0.9, x")


def test_every_key_has_a_flag():
    sub = build_parser()._subparsers._group_actions[0].choices["check"]
    flags = {s for a in sub._actions for s in a.option_strings}
    for section, keys in SCHEMA.items():
        for key in keys:
            if (section, key) == ("lambda", "grid"):
                assert "--lambda-grid" in flags
            else:
                assert flag_name(section, key) in flags


def test_check_passes(tmp_path, capsys):
    assert main(["check", "--config", "interval-k1-tanh02", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "PASS smallness_condition" in out
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["status"] == "complete" and rep["stages_run"] == ["check"]
    assert rep["constants"]["M_beta"] == pytest.approx(4.71332008255964, rel=1e-9)


def test_large_lipschitz_constant_aborts_with_margin(tmp_path, capsys):
    rc = main(["check", "--config", "interval-k1-tanh02", "--nonlinearity-c", "0.25", "--out", str(tmp_path)])
    assert rc == 2
    err = capsys.readouterr().err
    assert "M_beta * L_f / sqrt(mu_1) < 1" in err and "margin=-0.17" in err
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["status"] == "aborted" and rep["abort"]["stage"] == "check"
    assert rep["claims"]["smallness_condition"] is False


def test_zero_nonlinearity_rejected(tmp_path, capsys):
    assert main(["check", "--nonlinearity-name", "zero", "--out", str(tmp_path)]) == 2
    assert "must be positive" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["check", "--problem-k", "0", "--out", str(tmp_path)]) == 2
    assert "configuration error" in capsys.readouterr().err
    assert not (tmp_path / "report.json").exists()


def test_stage_isolation():
    cfg = load_config("interval-k1-tanh02")
    rep = run_experiment(cfg, "check")
    assert rep.data["stages_run"] == ["check"]
    assert "theta" not in rep.data["constants"] and not rep.files
    with pytest.raises(ValueError):
        run_experiment(cfg, "nonsense")


def test_abort_keeps_partial_report():
    cfg = load_config("interval-k1-tanh02")
    cfg.set("nonlinearity", "c", 0.3)
    with pytest.raises(PipelineAbort) as info:
        run_experiment(cfg)
    assert info.value.stage == "check"
    assert info.value.report.data["constants"]["margin"] < 0


@pytest.fixture(scope="module")
def annulus_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ann")
    rc = main(["annulus", "--config", "interval-k1-tanh02", "--out", str(out), *FAST])
    return rc, out


@pytest.mark.slow
def test_annulus_outputs(annulus_run):
    rc, out = annulus_run
    assert rc == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["stages_run"] == list(STAGES[:3])
    c = rep["constants"]
    assert c["r"] == pytest.approx(2 * math.sqrt(2 / math.pi), rel=1e-10)
    assert c["c0"] == pytest.approx(c["r"] * c["delta"] / 2, rel=1e-12)
    assert c["a"] < c["b"]
    assert (out / "annulus.csv").read_text().splitlines()[0].startswith("lambda,")
    assert (out / "manifold_0.csv").read_text().splitlines()[0].split(",")[0] == "y_1"
    assert (out / "claims.csv").read_text().splitlines()[0] == "claim,passed"
    assert (out / "constants.csv").read_text().splitlines()[0] == "name,value"


@pytest.mark.slow
def test_same_seed_is_byte_identical(tmp_path):
    outs = []
    d = tmp_path / "run"  # same directory: the report records the output path
    for _ in range(2):
        assert main(["manifold", "--config", "interval-k1-tanh02", "--seed", "7", "--out", str(d), *FAST]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outs[0] == outs[1]


def test_emit_report_without_csv(tmp_path):
    rep = run_experiment(load_config("interval-k1-tanh02"), "check")
    written = emit_report(rep, tmp_path, formats=("structured-text",))
    assert [p.name for p in written] == ["report.json"]
