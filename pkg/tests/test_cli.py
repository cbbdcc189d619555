import json
import subprocess
import sys

import pytest
from jsonschema import Draft202012Validator

from eisenlift.cli import COMMANDS, apply_override, load_schema, main, read_config, ConfigError

CONFIGS = {
    "flatness": {"potential": {"V": "0.5*x^2"}, "omega": "1/cos(t)^2"},
    "curvature": {"potential": {"V": "t*x^2 + x"}, "samples": 3},
    "hill-solve": {"omega": "1+0.3*sin(t)"},
    "map-build": {"map": {"family": "ho_const", "parameters": {"omega0": 1.0}}},
    "map-verify": {"map": {"family": "linear_galilean", "parameters": {"B": "sin(t)", "h1": 1.0}}},
    "classical-sim": {"potential": {"V": "0.5*x^2"}},
    "quantum-sim": {"map": {"family": "linear_galilean", "parameters": {"B": "1"}},
                    "grid": {"n": 512}, "time": {"t1": 0.2, "steps": 200}},
    "action-check": {"map": {"family": "linear_galilean", "parameters": {"B": "1"}},
                     "time": {"t0": 0.0, "t1": 1.0}},
}


def run(tmp_path, command, cfg, *extra, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return main([command, str(path), *extra])


def output(capsys):
    return json.loads(capsys.readouterr().out)


def error(capsys):
    err = json.loads(capsys.readouterr().err)
    Draft202012Validator(load_schema("error")).validate(err)
    return err["error"]


@pytest.mark.parametrize("command", COMMANDS)
def test_output_validates_against_schema(tmp_path, capsys, command):
    code = run(tmp_path, command, CONFIGS[command])
    assert code == 0
    Draft202012Validator(load_schema(command)).validate(output(capsys))


def test_flat_potential_exits_zero(tmp_path, capsys):
    assert run(tmp_path, "flatness", CONFIGS["flatness"]) == 0
    assert output(capsys)["verdict"] == "flat"


def test_cubic_potential_exits_one(tmp_path, capsys):
    assert run(tmp_path, "flatness", {"potential": {"V": "x^3"}}) == 1
    assert output(capsys)["verdict"] == "not_conformally_flat"


def test_conformally_flat_but_curved(tmp_path, capsys):
    assert run(tmp_path, "flatness", {"potential": {"V": "0.5*x^2"}}) == 1
    out = output(capsys)
    assert out["verdict"] == "conformally_flat"
    assert {"d3V/dx3", "cotton", "flatness", "riemann"} <= {c["name"] for c in out["conditions"]}


def test_malformed_expression_exits_two_with_position(tmp_path, capsys):
    assert run(tmp_path, "flatness", {"potential": {"V": "x^^2"}}) == 2
    err = error(capsys)
    assert err["position"] == 2
    assert err["type"] == "ExprSyntaxError"
    assert "^" in err["message"].splitlines()[-1]


@pytest.mark.parametrize("cfg", [
    {"potential": {"V": "x"}, "bogus": 1},
    {"potential": {"V": "x"}, "output": {"format": "xml"}},
    {"map": {"family": "linear_mobius", "parameters": {"k": -1}}},
])
def test_schema_violations_exit_two(tmp_path, capsys, cfg):
    assert run(tmp_path, "flatness" if "potential" in cfg else "map-build", cfg) == 2
    assert error(capsys)["type"] == "ConfigError"


def test_missing_section_and_bad_format_exit_two(tmp_path, capsys):
    assert run(tmp_path, "map-build", {}) == 2
    error(capsys)
    assert run(tmp_path, "flatness", {"potential": {"V": "x"}, "output": {"format": "csv"}}) == 2
    error(capsys)
    assert run(tmp_path, "flatness", {"potential": {"V": "x"}, "output": {"figure": True}}) == 2
    error(capsys)


def test_unknown_command_is_a_usage_error(capsys):
    assert main(["warp-drive"]) == 2
    error(capsys)


def test_runtime_domain_error_exits_three(tmp_path, capsys):
    cfg = {"potential": {"V": "x"}, "omega": "-1"}
    assert run(tmp_path, "classical-sim", cfg) == 3
    assert error(capsys)["type"] == "DegenerateMetric"


def test_oscillator_descriptor_verifies(tmp_path, capsys):
    assert run(tmp_path, "map-build", CONFIGS["map-build"]) == 0
    out = output(capsys)
    assert out["family"] == "ho_const"
    assert out["verification"]["max_residual"] < 1e-9


def test_classical_csv_summary(tmp_path):
    cfg = {**CONFIGS["classical-sim"], "output": {"format": "csv", "path": str(tmp_path / "traj.csv")}}
    assert run(tmp_path, "classical-sim", cfg) == 0
    lines = (tmp_path / "traj.csv").read_text().splitlines()
    assert lines[0] == "t,x_newton,x_projected,null_norm"
    assert len(lines) == 1 + 201 + 1
    summary = dict(item.split("=") for item in lines[-1].removeprefix("# summary: ").split(", "))
    assert float(summary["max_abs_dx"]) < 1e-6
    assert float(summary["max_abs_null_norm"]) < 1e-8


def test_hill_csv_columns(tmp_path, capsys):
    cfg = {"omega": "1", "time": {"t0": -2, "t1": 2, "steps": 50}, "output": {"format": "csv"}}
    assert run(tmp_path, "hill-solve", cfg) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,u1,u2,W,phi,omega"
    ts = [float(line.split(",")[0]) for line in lines[1:-1]]
    # samples stay strictly inside the patch bounded by the zeros of cos
    assert -1.5708 < min(ts) and max(ts) < 1.5708


def test_quantum_galilean_residual_under_gate(tmp_path, capsys):
    cfg = {"map": {"family": "linear_galilean", "parameters": {"B": "1"}}}
    assert run(tmp_path, "quantum-sim", cfg) == 0
    diag = output(capsys)["diagnostics"]
    assert diag["residual"] < 1e-2
    assert diag["oracle_l2_error"] < 1e-3
    assert diag["norm"] == pytest.approx(1.0, abs=1e-6)


def test_action_check_report(tmp_path, capsys):
    assert run(tmp_path, "action-check", CONFIGS["action-check"]) == 0
    out = output(capsys)
    assert out["residual"] < 1e-6 and out["passed"]


def test_yaml_config(tmp_path, capsys):
    path = tmp_path / "cfg.yaml"
    path.write_text("potential:\n  V: 0.5*x^2\nomega: 1/cos(t)^2\n")
    assert main(["flatness", str(path)]) == 0
    assert output(capsys)["flat"]


def test_set_override_and_seed(tmp_path, capsys):
    code = run(tmp_path, "flatness", {"potential": {"V": "x^3"}},
               "--set", "potential.V=0.5*x^2", "--set", "omega=\"1/cos(t)^2\"", "--seed", "5")
    assert code == 0
    out = output(capsys)
    assert out["seed"] == 5 and out["potential"] == "0.5*x^2"


def test_apply_override_parses_json_values():
    cfg = {}
    apply_override(cfg, "grid.n=64")
    apply_override(cfg, "map.family=ho_const")
    assert cfg == {"grid": {"n": 64}, "map": {"family": "ho_const"}}
    with pytest.raises(ConfigError):
        apply_override(cfg, "no-equals-sign")


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        read_config(str(bad))
    with pytest.raises(ConfigError):
        read_config(str(tmp_path / "missing.json"))


@pytest.mark.parametrize("command", ["classical-sim", "quantum-sim", "hill-solve", "map-build"])
def test_figure_written_next_to_output(tmp_path, command):
    out = tmp_path / "result.json"
    cfg = {**CONFIGS[command], "output": {"path": str(out), "figure": True}}
    assert run(tmp_path, command, cfg) == 0
    png = tmp_path / "result.png"
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_no_figure_unless_requested(tmp_path):
    out = tmp_path / "result.json"
    assert run(tmp_path, "map-build", {**CONFIGS["map-build"], "output": {"path": str(out)}}) == 0
    assert not (tmp_path / "result.png").exists()


def test_module_entry_point(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"potential": {"V": "x^3"}}))
    proc = subprocess.run([sys.executable, "-m", "eisenlift", "flatness", str(path)],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert json.loads(proc.stdout)["verdict"] == "not_conformally_flat"
