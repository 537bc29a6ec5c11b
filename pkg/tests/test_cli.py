import csv
import json

import pytest

from walsh_lab import cli
from walsh_lab.errors import ConfigError, ConvergenceError


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


BASE = """
precision_bits = 128
m = {m}
R_list = {R_list}
experiments = {experiments}

[function]
catalog = "{catalog}"

[n_range]
start = {start}
stop = {stop}
step = {step}

[output]
dir = "{out}"
digits = {digits}
"""


def config(tmp_path, m=1, R_list="[1.0]", experiments='["products"]', catalog="two-pole-exp", start=8, stop=16, step=4, digits=20, extra=""):
    out = tmp_path / "out"
    text = BASE.format(
        m=m, R_list=R_list, experiments=experiments, catalog=catalog, start=start, stop=stop, step=step, out=out, digits=digits
    )
    return write(tmp_path, text + extra), out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_catalog_lists_specs_and_maps(capsys):
    assert cli.main(["catalog"]) == 0
    out = capsys.readouterr().out
    assert "three-pole" in out and "interval" in out and "subsequence" in out


def test_validate_ok(tmp_path, capsys):
    p, _ = config(tmp_path)
    assert cli.main(["validate", str(p)]) == 0
    assert "ok" in capsys.readouterr().out


def test_radius_at_or_beyond_R0_names_the_field(tmp_path, capsys):
    p, _ = config(tmp_path, R_list="[1.0, 2.0]")
    assert cli.main(["validate", str(p)]) == 2
    err = capsys.readouterr().err
    assert "R_list[1]" in err and "line 4" in err


def test_empty_experiment_list(tmp_path, capsys):
    p, _ = config(tmp_path, experiments="[]")
    assert cli.main(["run", str(p)]) == 2
    assert "experiments" in capsys.readouterr().err


@pytest.mark.parametrize(
    "text,field",
    [
        ('bogus = 1\n[function]\ncatalog = "exp"\nexperiments = ["radii"]\n', "bogus"),
        ('experiments = ["radii", "nope"]\n[function]\ncatalog = "exp"\n', "experiments"),
        ('experiments = ["radii"]\ninvariants = ["nope"]\n[function]\ncatalog = "exp"\n', "invariants"),
        ('experiments = ["radii"]\n[function]\ncatalog = "missing"\n', "function.catalog"),
        ('experiments = ["radii"]\nm = -1\n[function]\ncatalog = "exp"\n', "m"),
        ('experiments = ["radii"\n', "toml"),
    ],
)
def test_schema_errors(tmp_path, text, field):
    p = write(tmp_path, text)
    with pytest.raises(ConfigError) as info:
        cli.load_config(p)
    assert info.value.field == field
    assert str(info.value).startswith("line ")


def test_json_config_and_echo_round_trip(tmp_path):
    raw = {
        "function": {"poles": [{"location": "2", "coefficients": ["1"]}, {"location": "0.5+2j", "order": 2, "coefficients": ["0", "1/3"]}], "entire": "cos"},
        "m": 2,
        "R_list": ["1", 1.5],
        "experiments": ["radii", "products"],
        "n_range": {"start": 8, "stop": 20, "step": 1},
        "two_circle": {"r": 1.0, "rho": 0.9},
    }
    p = write(tmp_path, json.dumps(raw), "run.json")
    cfg = cli.load_config(p)
    assert cfg.R_list == (1.0, 1.5)
    again = cli.config_from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


def test_single_pole_radii_report(tmp_path):
    p, out = config(tmp_path, m=0, catalog="single-pole", experiments='["radii"]', start=8, stop=24, step=1)
    assert cli.main(["run", str(p)]) == 0
    report = json.loads((out / "report.json").read_text())
    (exp,) = report["experiments"]
    assert exp["experiment"] == "radii"
    est = exp["results"][0]["summary"]["estimates"]
    assert float(est[0]["value"]) == pytest.approx(2.0, rel=1e-6)
    assert est[1]["value"] == "inf"


def test_products_csv_schema_and_rows(tmp_path):
    p, out = config(tmp_path, digits=5)
    assert cli.main(["run", str(p), "--format", "csv"]) == 0
    rows = read_csv(out / "products.csv")
    assert rows[0] == ["n", "delta_0", "delta_1", "product", "nth_root", "target", "gap"]
    assert [r[0] for r in rows[1:]] == ["8", "12", "16"]
    mantissa = rows[1][1].split("e")[0]
    assert len(mantissa.replace(".", "").lstrip("-")) == 5
    assert not (out / "report.json").exists() and not (out / "products.svg").exists()


def test_subsequence_has_in_lambda_column(tmp_path):
    p, out = config(tmp_path, experiments='["subsequence"]', start=6, stop=14, step=1)
    assert cli.main(["run", str(p), "--format", "csv,json"]) == 0
    rows = read_csv(out / "subsequence.csv")
    assert rows[0][-1] == "in_lambda"
    assert {r[-1] for r in rows[1:]} <= {"true", "false"} and "true" in {r[-1] for r in rows[1:]}


def test_svg_target_line_and_decay_only_annotation(tmp_path):
    p, out = config(tmp_path)
    assert cli.main(["run", str(p), "--format", "svg"]) == 0
    svg = (out / "products.svg").read_text()
    assert svg.count("<polyline") == 1 and svg.count("stroke-dasharray") == 1
    entire = tmp_path / "entire"
    entire.mkdir()
    q, out2 = config(entire, catalog="exp")
    assert cli.main(["run", str(q), "--format", "svg"]) == 0
    svg = (out2 / "products.svg").read_text()
    assert "R = &#8734;" in svg and "stroke-dasharray" not in svg


def test_invariants_reported(tmp_path):
    p, out = config(tmp_path, experiments='["products"]\ninvariants = ["det-product", "row-order", "bracket"]')
    assert cli.main(["run", str(p), "--format", "json"]) == 0
    report = json.loads((out / "report.json").read_text())
    names = [c["name"] for c in report["invariants"]]
    assert names == ["det-product", "row-order", "bracket"]
    assert all(c["passed"] and c["failures"] == [] for c in report["invariants"])
    assert report["config"]["precision_bits"] == 128


def test_precision_override_and_timing_kept_apart(tmp_path):
    p, out = config(tmp_path)
    assert cli.main(["run", str(p), "--precision-bits", "160", "--format", "json"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["metadata"]["precision_bits"] == 160
    assert "total" in json.loads((out / "timing.json").read_text())
    assert "total" not in json.dumps(report["metadata"])


def test_domain_error_names_experiment(tmp_path, capsys):
    p, _ = config(tmp_path, catalog="geometric", experiments='["hankel-quotient"]')
    assert cli.main(["run", str(p)]) == 3
    assert "hankel-quotient" in capsys.readouterr().err


def test_numeric_error_exit_code(tmp_path, monkeypatch, capsys):
    p, _ = config(tmp_path)

    def boom(*args, **kwargs):
        raise ConvergenceError("no convergence", residual=1.0)

    monkeypatch.setattr(cli.walsh, "walsh_grid", boom)
    assert cli.main(["run", str(p)]) == 4
    assert "products" in capsys.readouterr().err


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    p, _ = config(tmp_path)
    assert cli.main(["run", str(p), "--out-dir", str(blocker / "sub")]) == 5


def test_bad_format_flag(tmp_path):
    p, _ = config(tmp_path)
    assert cli.main(["validate", str(p), "--format", "png"]) == 2
