import csv
import io
import json
from importlib.resources import files

import jsonschema
import pytest

from loglin.cli import run
from loglin.table import load_czech

CZECH_DECOMP = "freq ~ a*c*e + b*c + d*e + f"


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def schema(name):
    return json.loads(files("loglin").joinpath("schemas", name).read_text())


@pytest.fixture(scope="module")
def czech_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "czech.csv"
    path.write_text(load_czech().to_csv())
    return str(path)


@pytest.fixture
def small_csv(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a,b,freq\n0,0,1\n0,1,2\n1,0,3\n1,1,4\n")
    return str(path)


@pytest.fixture
def four_csv(tmp_path):
    rows = ["a,b,c,d,freq"]
    for k in range(16):
        rows.append(",".join(str(k >> s & 1) for s in (3, 2, 1, 0)) + f",{k + 1}")
    path = tmp_path / "four.csv"
    path.write_text("\n".join(rows) + "\n")
    return str(path)


def test_mc3_decomposable_top_model(czech_csv):
    code, out, err = cli("mc3", "--data", czech_csv, "--mode", "decomposable",
                         "--iterations", "5000", "--seed", "7", "--format", "csv")
    assert code == 0, err
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["rank", "formula", "logPostProb", "visits"]
    assert rows[1][1] == "[a,c,e][b,c][d,e][f]"
    assert len(rows) == 11
    manifest = json.loads(err)
    assert manifest["seed"] == 7 and manifest["command"] == "mc3"


def test_mc3_graphical_top_model_json(czech_csv):
    code, out, _ = cli("mc3", "--data", czech_csv, "--mode", "graphical", "--seed", "3",
                       "--iterations", "3000", "--format", "json", "--top", "5")
    assert code == 0
    doc = json.loads(out)
    jsonschema.validate(doc, schema("mc3.schema.json"))
    assert len(doc) == 5
    assert doc[0]["model"] == "[a,c][a,d,e][b,c][b,e][f]"


def test_mc3_table_format_and_visited_only(czech_csv):
    code, out, _ = cli("mc3", "--data", czech_csv, "--iterations", "300", "--seed", "1",
                       "--visited-only", "--top", "3")
    assert code == 0
    header, *rows = out.splitlines()
    assert header.split() == ["rank", "formula", "logPostProb", "visits"]
    assert len(rows) <= 3 and all(int(r.split()[-1]) >= 1 for r in rows)


@pytest.mark.parametrize("argv", [
    ["mc3", "--iterations", "0"], ["mc3", "--replicates", "0"], ["mc3", "--top", "0"],
    ["mc3", "--mode", "bogus"], ["mc3", "--alpha", "-1"], ["gibbs", "--samples", "10",
                                                          "--burnin", "10", "--model", "[a,b]"],
    ["gibbs", "--model", "[a,b]", "--samples", "x"], ["exact"],
])
def test_usage_errors_exit_2(argv, small_csv):
    code, _, err = cli(*argv[:1], "--data", small_csv, *argv[1:])
    assert code == 2
    assert err


def test_usage_error_names_flag(small_csv):
    code, _, err = cli("mc3", "--data", small_csv, "--iterations", "0")
    assert code == 2 and "--iterations" in err


def test_data_errors_exit_3(tmp_path):
    missing = str(tmp_path / "nope.csv")
    code, _, err = cli("mc3", "--data", missing)
    assert code == 3 and "--data" in err
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,freq\n0,0,1\n0,1,-2\n1,0,3\n1,1,4\n")
    assert cli("exact", "--data", str(bad), "--model", "[a][b]")[0] == 3
    bad.write_text("a,b\n0,0\n")
    assert cli("gibbs", "--data", str(bad), "--model", "[a][b]")[0] == 3


def test_model_errors_exit_4(small_csv, czech_csv):
    code, _, err = cli("mc3", "--data", small_csv, "--init", "[a,z]")
    assert code == 4 and "--init" in err
    code, _, err = cli("mc3", "--data", czech_csv, "--init", "[a,b][b,c][c,d][a,d][e][f]")
    assert code == 4 and "--init" in err
    code, _, err = cli("exact", "--data", small_csv, "--formula", "freq ~ a ^ b")
    assert code == 4 and "--formula" in err
    # a formula that omits factors of the table is not a valid model for it
    assert cli("exact", "--data", czech_csv, "--formula", "freq ~ a*b + b*c")[0] == 4


def test_exact_not_decomposable_exit_5(four_csv, czech_csv):
    code, _, err = cli("exact", "--data", four_csv, "--formula", "freq ~ a*b + b*c + c*d + a*d")
    assert code == 5
    assert "chordless cycle" in err
    code, _, err = cli("exact", "--data", czech_csv,
                       "--formula", "freq ~ a*b + b*c + a*c + d + e + f")
    assert code == 5 and "cliques [a,b,c]" in err


def test_exact_czech_values(czech_csv):
    code, out, _ = cli("exact", "--data", czech_csv, "--formula", CZECH_DECOMP, "--format", "csv")
    assert code == 0
    rows = {r.split(",")[0]: r.split(",")[1:] for r in out.splitlines()[1:]}
    assert rows["d1:e1"] == ["0.3412027", "0.009099995"]
    assert len(rows) == 13


def test_exact_json_and_bracket_equivalence(czech_csv):
    code, out, _ = cli("exact", "--data", czech_csv, "--formula", CZECH_DECOMP,
                       "--format", "json", "--cov")
    assert code == 0
    doc = json.loads(out)
    jsonschema.validate(doc, schema("moments.schema.json"))
    assert len(doc["covariance"]) == 13
    assert doc["model"] == "[a,c,e][b,c][d,e][f]"
    _, out2, _ = cli("exact", "--data", czech_csv, "--model", "[a,c,e][b,c][d,e][f]",
                     "--format", "json", "--cov")
    assert out2 == out


def test_exact_table_with_covariance(small_csv):
    code, out, _ = cli("exact", "--data", small_csv, "--model", "[a][b]", "--cov")
    assert code == 0
    blocks = out.split("\n\n")
    assert len(blocks) == 2
    assert blocks[1].splitlines()[0].split() == ["term", "(Intercept)", "a1", "b1"]


def test_gibbs_smoke_and_determinism(small_csv, tmp_path):
    paths = [tmp_path / "s1.csv", tmp_path / "s2.csv"]
    for p in paths:
        code, out, err = cli("gibbs", "--data", small_csv, "--model", "[a,b]",
                             "--samples", "10", "--burnin", "0", "--seed", "4", "--out", str(p))
        assert code == 0, err
    lines = paths[0].read_text().splitlines()
    assert lines[0] == "(Intercept),a1,b1,a1:b1"
    assert len(lines) == 11 and all(len(r.split(",")) == 4 for r in lines[1:])
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_gibbs_json_summary(small_csv):
    code, out, _ = cli("gibbs", "--data", small_csv, "--formula", "freq ~ a + b",
                       "--samples", "200", "--burnin", "50", "--seed", "1", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    jsonschema.validate(doc, schema("moments.schema.json"))
    assert doc["terms"] == ["(Intercept)", "a1", "b1"]


def test_seed_from_environment(small_csv, monkeypatch):
    monkeypatch.setenv("LOGLIN_SEED", "123")
    a = cli("gibbs", "--data", small_csv, "--model", "[a,b]", "--samples", "20", "--burnin", "0")
    b = cli("gibbs", "--data", small_csv, "--model", "[a,b]", "--samples", "20",
            "--burnin", "0", "--seed", "123")
    assert a[1] == b[1]
    assert json.loads(a[2])["seed"] == 123
    monkeypatch.setenv("LOGLIN_SEED", "x")
    assert cli("gibbs", "--data", small_csv, "--model", "[a,b]")[0] == 2


def test_fresh_seed_is_recorded(small_csv):
    _, _, err = cli("gibbs", "--data", small_csv, "--model", "[a,b]", "--samples", "5",
                    "--burnin", "0")
    assert isinstance(json.loads(err)["seed"], int)


@pytest.mark.parametrize("argv", [
    ["mc3", "--iterations", "200", "--replicates", "2"],
    ["gibbs", "--model", "[a,b]", "--samples", "30", "--burnin", "5"],
    ["exact", "--model", "[a][b]", "--cov"],
])
def test_manifest_replay(argv, small_csv, tmp_path):
    manifest = tmp_path / "m.json"
    code, out, _ = cli(argv[0], "--data", small_csv, *argv[1:], "--manifest", str(manifest))
    assert code == 0
    doc = json.loads(manifest.read_text())
    assert set(doc) == {"command", "config", "seed", "dataset_sha256", "tool_version",
                        "wall_seconds"}
    code, replay_out, _ = cli("replay", str(manifest))
    assert code == 0
    assert replay_out == out


def test_replay_detects_changed_data(small_csv, tmp_path):
    manifest = tmp_path / "m.json"
    cli("exact", "--data", small_csv, "--model", "[a][b]", "--manifest", str(manifest))
    with open(small_csv, "a") as fh:
        fh.write("\n")
    code, _, err = cli("replay", str(manifest))
    assert code == 3 and "manifest" in err
