import csv
import io
import json

import numpy as np
import pytest

from andersonlab.harness import cli, experiments
from andersonlab.harness.config import EXPERIMENTS, OUTPUT_ENV, ConfigError, build_config
from andersonlab.harness.output import format_value, render_csv

# a cheap configuration per experiment
SMALL = {
    "ids": ["--L", "16", "--samples", "5", "--npoints", "7"],
    "dos": ["--L", "16", "--samples", "5", "--bins", "20"],
    "wegner": ["--L", "16", "--samples", "5", "--energies", "0.4,0.2"],
    "spectral-averaging": ["--L", "8", "--samples", "3", "--nodes", "8"],
    "lifshitz-fit": ["--L", "32", "--samples", "20", "--emin", "0.2", "--emax", "0.9", "--npoints", "8",
                     "--window", "0.2,0.9"],
    "minami": ["--L", "64", "--samples", "40", "--dist", "uniform:0,5"],
    "probe-lemma": ["--cases", "20"],
    "probe-cutoff": [],
    "probe-decay": ["--L", "32", "--samples", "3"],
    "probe-heat": ["--L", "16", "--cases", "3"],
    "probe-decoupling": ["--L", "16", "--samples", "3"],
}


def run(tmp_path, name, *extra, out="out.csv"):
    path = tmp_path / out
    code = cli.main([name, *SMALL[name], "--seed", "7", "--output", str(path), *extra])
    return code, path


def read_csv(path):
    rows = list(csv.reader(io.StringIO(path.read_text())))
    return rows[0], rows[1:]


def test_every_experiment_is_covered():
    assert set(SMALL) == set(EXPERIMENTS) == set(experiments.SCHEMAS)


@pytest.mark.parametrize("name", EXPERIMENTS)
def test_schema_and_manifest(tmp_path, name):
    code, path = run(tmp_path, name)
    assert code in (0, 1)
    header, rows = read_csv(path)
    assert header == experiments.SCHEMAS[name]
    assert rows and all(len(r) == len(header) for r in rows)
    manifest = json.loads(path.with_suffix(".manifest.json").read_text())
    assert manifest["seed"] == 7
    assert manifest["config"]["experiment"] == name
    assert len(manifest["config_hash"]) == 64
    assert manifest["results"][0]["columns"] == header
    assert (code == 1) == bool(manifest["flags"])


@pytest.mark.parametrize("name", EXPERIMENTS)
def test_byte_identical_reruns(tmp_path, name):
    _, a = run(tmp_path, name, out="a.csv")
    _, b = run(tmp_path, name, out="b.csv")
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("name", ["ids", "wegner", "spectral-averaging", "probe-heat", "probe-decoupling"])
def test_worker_count_does_not_change_output(tmp_path, name):
    _, a = run(tmp_path, name, "--workers", "1", out="a.csv")
    _, b = run(tmp_path, name, "--workers", "4", out="b.csv")
    assert a.read_bytes() == b.read_bytes()
    ma = json.loads(a.with_suffix(".manifest.json").read_text())
    mb = json.loads(b.with_suffix(".manifest.json").read_text())
    assert ma["config_hash"] == mb["config_hash"]


def test_ids_values(tmp_path):
    code, path = run(tmp_path, "ids")
    assert code == 0
    _, rows = read_csv(path)
    assert [r[0] for r in rows][:2] == ["0", "0.16666666666666666"]
    n = [float(r[1]) for r in rows]
    assert n == sorted(n)
    assert all(r[3] == "5" and r[4] == "16" for r in rows)


@pytest.mark.parametrize("argv, field", [
    (["ids", "--dist", "uniform:0.5,1"], "support infimum must be 0"),
    (["probe-decoupling", "--L", "30"], "divisible by 4"),
    (["ids", "--L", "7"], "even"),
    (["nonsense"], ""),
    ([], ""),
    (["ids", "--samples", "zero"], "samples"),
    (["lifshitz-fit", "--window", "0.5,1.5"], "window"),
    (["probe-decoupling", "--eps", "0.6"], "eps"),
    (["wegner", "--interval", "0.1,0.1"], "positive width"),
])
def test_invalid_configuration_exits_2(tmp_path, caplog, argv, field):
    assert cli.main(argv + ["--output", str(tmp_path)] if argv and argv[0] != "nonsense" else argv) == 2
    assert field in caplog.text


def test_resource_cap_exits_3(tmp_path):
    assert cli.main(["ids", "--dim", "2", "--L", "128", "--samples", "1", "--output", str(tmp_path)]) == 3


def test_unwritable_output_exits_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["probe-cutoff", "--output", str(blocker / "out.csv")]) == 3


def test_flagged_run_exits_1(tmp_path, monkeypatch):
    from andersonlab import estimators as est

    real = est.wegner_from_spectra

    def inflated(spectra, dist, interval):
        rep = real(spectra, dist, interval)
        rep.ratio, rep.ratio_stderr = 2.0, 0.1
        return rep

    monkeypatch.setattr(est, "wegner_from_spectra", inflated)
    code, path = run(tmp_path, "wegner")
    assert code == 1
    _, rows = read_csv(path)
    assert all(r[-1] == "true" for r in rows)


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        "[experiment]\nname = ids\n\n[lattice]\ndim = 1\nL = 16\ndist = uniform:0,1\n\n"
        "[run]\nsamples = 4\nseed = 7\n\n[ids]\nemin = 0\nemax = 1\nnpoints = 7\n"
    )
    a = tmp_path / "a.csv"
    assert cli.main(["ids", "--config", str(cfg), "--output", str(a)]) == 0
    b = tmp_path / "b.csv"
    assert cli.main(["ids", "--config", str(cfg), "--samples", "5", "--output", str(b)]) == 0
    c = tmp_path / "c.csv"
    assert cli.main(["ids", "--L", "16", "--samples", "5", "--seed", "7", "--npoints", "7", "--output", str(c)]) == 0
    assert b.read_bytes() == c.read_bytes() != a.read_bytes()
    other = tmp_path / "other.ini"
    other.write_text("[experiment]\nname = dos\n")
    assert cli.main(["ids", "--config", str(other)]) == 2


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "envdir"))
    assert cli.main(["probe-cutoff"]) == 0
    files = sorted(p.name for p in (tmp_path / "envdir").iterdir())
    assert len(files) == 2 and files[0].startswith("probe-cutoff-") and files[0].endswith(".csv")


def test_config_hash_ignores_workers_and_output():
    a = build_config({"experiment": "ids", "workers": 1, "output": "x"})
    b = build_config({"experiment": "ids", "workers": 8, "output": "y"})
    c = build_config({"experiment": "ids", "seed": 1})
    assert a.hash == b.hash != c.hash


def test_unknown_option_rejected():
    with pytest.raises(ConfigError) as err:
        build_config({"experiment": "ids", "bins": 10})
    assert err.value.field == "bins"


def test_csv_formatting():
    assert format_value(True) == "true" and format_value(np.bool_(False)) == "false"
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(np.int64(3)) == "3"
    assert render_csv(["a", "b"], [[1, "x"]]) == b"a,b\n1,x\n"
    with pytest.raises(ValueError):
        render_csv(["a"], [[1, 2]])
