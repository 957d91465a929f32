import csv
import io
import json

import pytest

from ahm.cli import ConfigError, builtin_specs, parse_grid, parse_int_range, parse_s_range, run
from ahm.fixtures import background, random_perturbation
from ahm.metric import Grid
from ahm.specio import dump_spec


def call(capsys, *argv):
    code = run(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_list(capsys):
    code, out, _ = call(capsys, "list")
    assert code == 0
    assert set(out.split()) == {f"builtin:{n}" for n in builtin_specs()}
    assert "hm_n3" in builtin_specs()


@pytest.mark.parametrize("name", ["hm_n3", "hat_n3_a1", "hat_n4_a07"])
@pytest.mark.parametrize("cmd", ["validate", "energy", "gauge"])
def test_builtin_commands_pass(capsys, name, cmd):
    code, out, err = call(capsys, cmd, "--config", f"builtin:{name}")
    assert code == 0, err
    doc = json.loads(out)
    assert doc["meta"]["command"] == cmd
    assert all(c["passed"] for c in doc["checks"].values())


def test_curvature_csv(capsys):
    code, out, err = call(capsys, "curvature", "--config", "builtin:hat_n3_a1", "--format", "csv",
                          "--grid", "8,8,8", "--oracle-points", "4")
    assert code == 0, err
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0][0] == "r"
    assert len(rows) > 1


@pytest.mark.parametrize("name,verdict", [("hm_n3", "equality"), ("hat_n3_a1", "strict")])
def test_verify(capsys, name, verdict):
    code, out, err = call(capsys, "verify", "--config", f"builtin:{name}")
    assert code == 0, err
    assert json.loads(out)["report"]["equality_verdict"] == verdict


def test_verify_names_failed_hypothesis(capsys, tmp_path, rng):
    path = tmp_path / "p.yaml"
    dump_spec(random_perturbation(background(3, 0.5), rng, 1e-3), path)
    code, out, err = call(capsys, "verify", "--config", str(path))
    doc = json.loads(out)
    assert doc["report"]["equality_verdict"] == "hypothesis_failed"
    assert "lower_bound_ordering" not in doc["checks"]
    assert code == 1 and "hypothesis_scalar_curvature_sign" in err


def test_gauge_fails_without_l1(capsys, tmp_path):
    path = tmp_path / "u.yaml"
    path.write_text("n: 3\nr0: 1.0\na: 0.5\nexp_u_hat: {terms: {2: 0.1}}\n")
    code, out, err = call(capsys, "gauge", "--config", str(path))
    assert code == 1
    assert "check failed" in err


def test_sweep(capsys, tmp_path):
    target = tmp_path / "sweep.json"
    code, _, err = call(capsys, "sweep", "--n", "3..5", "--s", "0:2:0.01", "--out", str(target))
    assert code == 0, err
    doc = json.loads(target.read_text())
    assert doc["report"]["min_value"] == pytest.approx(0.0, abs=1e-12)
    assert all(row["argmin_s"] == pytest.approx(1.0) for row in doc["report"]["summary"])


def test_fuzz_is_deterministic(capsys):
    args = ("fuzz", "--n", "3", "--a", "0.5", "--seed", "7", "--samples", "2")
    first = call(capsys, *args)
    second = call(capsys, *args)
    assert first[0] == 0 and first[1] == second[1]


@pytest.mark.parametrize("argv", [
    ("energy", "--config", "/nonexistent.yaml"),
    ("energy", "--config", "builtin:nope"),
    ("energy",),
    ("energy", "--config", "builtin:hm_n3", "--grid", "4,4,4"),
    ("sweep", "--s", "1:0:0.1"),
    ("nosuchcommand",),
])
def test_config_errors(capsys, argv):
    assert call(capsys, *argv)[0] == 2


def test_malformed_yaml(capsys, tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("n: 3\n")
    assert call(capsys, "validate", "--config", str(p))[0] == 2


def test_parsers():
    assert parse_grid(None, Grid()) == Grid()
    assert parse_grid("8,9,10", Grid()) == Grid(nr=8, nxi=9, nphi=10)
    assert parse_int_range("3..5") == [3, 4, 5]
    assert parse_int_range("3,7") == [3, 7]
    s = parse_s_range("0:1:0.25")
    assert list(s) == [0.25, 0.5, 0.75, 1.0]
    for bad in ("x", "1,2"):
        with pytest.raises(ConfigError):
            parse_grid(bad, Grid())
    with pytest.raises(ConfigError):
        parse_s_range("0:1")
