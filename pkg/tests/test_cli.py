import json
from importlib import resources
from pathlib import Path

import pytest

from bpre import cli
from bpre.errors import ConfigError

CONFIGS = Path(resources.files("bpre") / "configs")


def _write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _main(tmp_path, experiment, text, *extra):
    cfg = _write(tmp_path, text)
    return cli.main([experiment, "--config", str(cfg), "--out", str(tmp_path / "out"), *extra])


EDGEWORTH = """
seed = 1
[model]
reference = "{model}"
[sim]
n = [10]
trajectories = 2000
[edgeworth]
r = {r}
q = {q}
p = 2.0
"""


def test_order_outside_range_is_config_error(tmp_path, capsys):
    assert _main(tmp_path, "edgeworth", EDGEWORTH.format(model="M0", r=5, q=4)) == 1
    assert "[3, q-1]" in capsys.readouterr().err


def test_renewal_on_lattice_is_hypothesis_error(tmp_path, capsys):
    text = """
seed = 1
[model]
reference = "dirac2"
[sim]
trajectories = 100
[renewal]
B = 0.0
C = 1.0
y_list = [10.0]
"""
    assert _main(tmp_path, "renewal", text) == 2
    assert "nonlattice required" in capsys.readouterr().err


def test_high_order_without_cramer_is_hypothesis_error(tmp_path, capsys):
    assert _main(tmp_path, "edgeworth", EDGEWORTH.format(model="M0", r=4, q=6)) == 2
    assert "cramer" in capsys.readouterr().err.lower()


@pytest.mark.parametrize("text", [
    "seed = 1\nbogus = 3\n[model]\nreference = \"M0\"\n[sim]\nn = [3]\ntrajectories = 10\n",
    "[model]\nreference = \"M0\"\n[sim]\nn = [3]\ntrajectories = 10\n",
    "seed = 1\n[model\n",
    "seed = 1\n[model]\nreference = \"M0\"\n[sim]\nn = [3]\ntrajectories = 10\nwarp = 2\n",
    "seed = 1\n[model]\nreference = \"nope\"\n[sim]\nn = [3]\ntrajectories = 10\n",
    "seed = -1\n[model]\nreference = \"M0\"\n[sim]\nn = [3]\ntrajectories = 10\n",
])
def test_invalid_configs_exit_1(tmp_path, text):
    assert _main(tmp_path, "simulate", text) == 1


def test_missing_config_file_exit_1(tmp_path):
    assert cli.main(["simulate", "--config", str(tmp_path / "absent.toml")]) == 1


def test_budget_failure_exit_3(tmp_path, capsys):
    pmf = "[0.9995" + ", 0.0" * 2999 + ", 0.0005]"
    text = f"""
seed = 1
[model]
kind = "finite_mixture"
weights = [1.0]
[[model.laws]]
kind = "explicit"
pmf = {pmf}
[sim]
n = [3]
trajectories = 10
"""
    assert _main(tmp_path, "simulate", text) == 3
    assert "survivors" in capsys.readouterr().err


def test_report_ordering_and_codes():
    rows = [cli.row("a", "x", 1.0, 2.0, True), cli.row("b", "y", 3.0, 2.0, False)]
    table, code = cli.report(rows)
    lines = table.splitlines()
    assert code == 3 and lines[1].startswith("b") and lines[1].rstrip().endswith("FAIL")
    assert cli.report(rows[:1])[1] == 0
    assert cli.report([]) == ("", 0)


def test_config_parse_errors():
    with pytest.raises(ConfigError):
        cli.parse_config({"seed": 1}, "no-such-experiment")
    with pytest.raises(ConfigError):
        cli.parse_config({"seed": 1, "experiment": "clt"}, "simulate")
    cfg = cli.parse_config({"seed": 1, "model": {"reference": "M0"},
                            "sim": {"n": [3], "trajectories": 5}}, "simulate", seed=9)
    assert cfg.seed == 9 and cfg.n_values == [3]


def test_all_shipped_configs_parse():
    for path in sorted(CONFIGS.glob("*.toml")):
        text = path.read_text()
        exp = next(l.split("=")[1].strip().strip('"') for l in text.splitlines()
                   if l.startswith("experiment"))
        cli.load_config(path, exp)


def test_quick_acceptance_config(tmp_path, capsys):
    out = tmp_path / "acc"
    code = cli.main(["full-acceptance", "--config", str(CONFIGS / "acceptance_quick.toml"),
                     "--out", str(out)])
    assert code == 0
    rows = json.loads((out / "summary.json").read_text())
    assert [r["criterion"].split(".")[0] for r in rows] == ["1", "5"]
    assert all(set(r) == {"criterion", "anchor", "value", "threshold", "pass"} for r in rows)
    assert "PASS" in capsys.readouterr().out


SIM = """
seed = 7
[model]
reference = "M0"
[sim]
n = [4, 8]
trajectories = 20000
"""


def _tree(d):
    return {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_reruns_byte_identical_across_threads(tmp_path):
    cfg = _write(tmp_path, SIM)
    outs = []
    for k, threads in enumerate((1, 1, 8)):
        out = tmp_path / f"o{k}"
        assert cli.main(["simulate", "--config", str(cfg), "--out", str(out),
                         "--threads", str(threads)]) == 0
        outs.append(_tree(out))
    assert outs[0] == outs[1] == outs[2]


def test_seed_override_changes_output(tmp_path):
    cfg = _write(tmp_path, SIM)
    trees = []
    for seed in ("7", "8"):
        out = tmp_path / seed
        cli.main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", seed])
        trees.append(_tree(out))
    assert trees[0] != trees[1]
    override = tmp_path / "o7"
    cli.main(["simulate", "--config", str(cfg), "--out", str(override), "--seed", "7"])
    assert _tree(override) == trees[0]


def test_charfn_and_figures(tmp_path):
    pytest.importorskip("matplotlib")
    text = """
seed = 3
[model]
reference = "M0"
[sim]
n = [2, 3, 4, 5, 6]
trajectories = 5000
survival_margin = 0
[grid]
s_max = 0.5
points = 21
"""
    _main(tmp_path, "charfn", text, "--figures")
    out = tmp_path / "out"
    assert (out / "charfn.csv").exists() and (out / "charfn.png").exists()


def test_clt_and_diagnostics_run(tmp_path):
    clt = """
seed = 3
[model]
reference = "d23_half"
[sim]
n = [10, 40]
trajectories = 20000
"""
    assert _main(tmp_path, "clt", clt) in (0, 3)
    rows = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert rows and all("pass" in r for r in rows)
