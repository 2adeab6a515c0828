import json
import time

import jsonschema
import pytest

from nlsqi import cli, reports
from nlsqi.config import ConfigError, parse
from nlsqi.gauss import GaussianSpec, sample
from nlsqi.transport import McReport


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run(tmp_path, sub, text, *extra, out="out"):
    cfg = write(tmp_path, text)
    return cli.main([sub, "--config", cfg, "--out-dir", str(tmp_path / out), *extra])


def manifest(tmp_path, out="out"):
    return json.loads((tmp_path / out / "manifest.json").read_text())


QI = """subcommand = "qi-test"
N = 4
t = 0.01
seed = 5
n_samples = 12
[qi-test]
[[qi-test.observables]]
kind = "cylinder"
modes = [[1, 0]]
a = [2.0]
"""


# configuration errors ----------------------------------------------------------

def test_empty_observables_names_field_and_line():
    text = 'subcommand = "qi-test"\nN = 4\n[qi-test]\nobservables = []\n'
    with pytest.raises(ConfigError) as e:
        parse(text, "x.toml")
    assert e.value.line == 4 and "observables" in str(e.value) and str(e.value).startswith("x.toml:4:")


def test_unknown_key_rejected_with_line():
    with pytest.raises(ConfigError) as e:
        parse('subcommand = "sample"\nN = 4\nsigma_typo = 1\n', "y.toml")
    assert e.value.line == 3 and "sigma_typo" in str(e.value)
    with pytest.raises(ConfigError) as e:
        parse('subcommand = "sample"\n[sample]\n\nbogus = 2\n')
    assert e.value.line == 4


@pytest.mark.parametrize("text,key", [
    ('subcommand = "sample"\nN = 3\n', "N"),
    ('subcommand = "sample"\ns = 2.0\n', "s"),
    ('subcommand = "sample"\nk = 0\n', "k"),
    ('subcommand = "sample"\nn_samples = 0\n', "n_samples"),
    ('subcommand = "moments"\n[moments]\nkind = "X"\n', "kind"),
    ('subcommand = "qi-test"\n[qi-test]\n[[qi-test.observables]]\nkind = "moment"\nmode = [1, 0]\n',
     "observables"),
    ('subcommand = "counting"\n[counting]\nNs = [4]\n', "Ns"),
    ('subcommand = "nope"\n', "subcommand"),
])
def test_invalid_values_name_the_field(text, key):
    with pytest.raises(ConfigError) as e:
        parse(text)
    assert f"'{key}'" in str(e.value)
    assert e.value.line is not None


def test_toml_syntax_error_has_line():
    with pytest.raises(ConfigError) as e:
        parse('subcommand = "sample"\nN = = 4\n')
    assert e.value.line == 2


def test_subcommand_mismatch(tmp_path):
    assert run(tmp_path, "sample", QI) == cli.EXIT_CONFIG


def test_seed_override():
    cfg = parse(QI, seed_override=99)
    assert cfg.seed == 99


# exit codes ----------------------------------------------------------------------

def test_exit_config_error(tmp_path, capsys):
    assert run(tmp_path, "sample", 'subcommand = "sample"\nN = 5\n') == cli.EXIT_CONFIG
    assert "'N'" in capsys.readouterr().err


def test_exit_pass_and_fail_counting(tmp_path):
    ok = 'subcommand = "counting"\n[counting]\nNs = [2, 4]\n'
    assert run(tmp_path, "counting", ok, out="a") == cli.EXIT_PASS
    bad = 'subcommand = "counting"\n[counting]\nNs = [2, 4]\nmax_exponent = 0.1\n'
    assert run(tmp_path, "counting", bad, out="b") == cli.EXIT_FAIL
    assert manifest(tmp_path, "b")["exit_code"] == cli.EXIT_FAIL


def test_exit_resource_guard(tmp_path):
    text = 'subcommand = "counting"\n[counting]\nset = "E"\nNs = [2, 4]\nmax_search = 10\n'
    assert run(tmp_path, "counting", text) == cli.EXIT_GUARD
    assert manifest(tmp_path)["exit_code"] == cli.EXIT_GUARD


# outputs -------------------------------------------------------------------------

def test_determinism_across_runs_and_workers(tmp_path):
    assert run(tmp_path, "qi-test", QI, "--workers", "1", out="w1") == cli.EXIT_PASS
    run(tmp_path, "qi-test", QI, "--workers", "1", out="w1b")
    run(tmp_path, "qi-test", QI, "--workers", "2", out="w2")
    sums = [manifest(tmp_path, o)["outputs"] for o in ("w1", "w1b", "w2")]
    assert sums[0] == sums[1] == sums[2]


def test_reports_validate_against_schema(tmp_path):
    run(tmp_path, "qi-test", QI)
    docs = json.loads((tmp_path / "out" / "reports.json").read_text())
    fields = set(McReport.__dataclass_fields__)
    for d in docs:
        reports.validate(d, "mc_report")
        assert set(d) == fields
    m = manifest(tmp_path)
    reports.validate(m, "manifest")
    assert m["schema_version"] == reports.SCHEMA_VERSION
    assert m["config"]["seed"] == 5
    header = (tmp_path / "out" / "qi.csv").read_text().splitlines()[0]
    assert header.split(",") == reports.CSV_COLUMNS["qi-test"]


def test_schema_rejects_malformed_report():
    bad = {"name": "x", "estimate": 1.0, "stderr": -1.0, "n_samples": 1, "bound": 0.0, "verdict": "pass",
           "details": {}}
    with pytest.raises(jsonschema.ValidationError):
        reports.validate(bad, "mc_report")
    with pytest.raises(jsonschema.ValidationError):
        reports.validate({**bad, "stderr": 0.1, "verdict": "maybe"}, "mc_report")


def test_schema_subcommand(tmp_path, capsys):
    assert cli.main(["schema", "--out-dir", str(tmp_path)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["schema_version"] == reports.SCHEMA_VERSION
    assert set(doc["reports"]) >= {"mc_report", "snapshot", "manifest"}
    assert json.loads((tmp_path / "schema.json").read_text()) == doc


def test_snapshot_round_trip_is_exact():
    u = sample(GaussianSpec(2.5, 6, 17), 3)
    doc = json.loads(reports.dumps(reports.snapshot(u)))
    v = reports.from_snapshot(doc)
    assert v.cutoff == u.cutoff and (v.coeffs == u.coeffs).all()


def test_csv_floats_round_trip():
    x = 0.1 + 0.2
    text = reports.csv_text("moments", [("m", x, 1e-300, 2.0 / 3.0, "pass")])
    row = text.splitlines()[1].split(",")
    assert float(row[1]) == x and float(row[3]) == 2.0 / 3.0


def test_evolve_from_snapshot(tmp_path):
    u = sample(GaussianSpec(2.5, 4, 1), 0)
    snap = tmp_path / "u.json"
    snap.write_text(reports.dumps(reports.snapshot(u)))
    text = f'subcommand = "evolve"\nN = 4\nt = 0.02\n[evolve]\nsnapshot = "{snap}"\ncheckpoints = 2\n'
    assert run(tmp_path, "evolve", text) == cli.EXIT_PASS
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["relative_drift"]["mass"] < 1e-10
    final = reports.from_snapshot(json.loads((tmp_path / "out" / "final.json").read_text()))
    assert final.cutoff == 4


@pytest.mark.parametrize("sub,text", [
    ("sample", 'subcommand = "sample"\nN = 4\nn_samples = 5\n'),
    ("energy-audit", 'subcommand = "energy-audit"\nN = 4\nn_samples = 2\n[energy-audit]\ndt_fd = [1e-3, 5e-4]\n'),
    ("moments", 'subcommand = "moments"\nN = 4\nn_samples = 20\n[moments]\nR = 10.0\n'),
])
def test_other_subcommands_write_manifest(tmp_path, sub, text):
    code = run(tmp_path, sub, text)
    m = manifest(tmp_path)
    assert m["exit_code"] == code and code in (cli.EXIT_PASS, cli.EXIT_FAIL)
    for name in m["outputs"]:
        data = (tmp_path / "out" / name).read_bytes()
        assert reports.sha256(data) == m["outputs"][name]


def test_smoke_config_under_a_minute(tmp_path):
    t0 = time.perf_counter()
    code = cli.main(["qi-test", "--config", "smoke", "--out-dir", str(tmp_path / "smoke")])
    assert time.perf_counter() - t0 < 60
    assert code == cli.EXIT_PASS
