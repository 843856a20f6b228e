import json
import math
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ofdm_mi import cli
from ofdm_mi import exact_moments as em
from ofdm_mi.channel import SystemConfig, correlation_profile, uniform_pdp
from ofdm_mi.errors import NonConvergenceError

SCHEMA = json.loads((Path(__file__).resolve().parents[1] / "docs" / "output.schema.json").read_text())


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    doc = json.loads(out)
    jsonschema.validate(doc, SCHEMA)
    return doc, err


def test_variance_passthrough(capsys):
    doc, _ = run_json(capsys, "variance", "--nt", "2", "--nr", "2", "--n", "8", "--snr-db", "10",
                      "--pdp", "uniform:L=4", "--regime", "exact")
    cfg = SystemConfig.from_db(2, 2, 8, 10)
    ref = em.variance_exact(cfg, correlation_profile(uniform_pdp(4), 8))
    assert doc["results"]["variance_bits2"] == ref.variance_bits2
    assert doc["results"]["series_truncation_error"] == ref.series_truncation_error
    assert doc["inputs"]["pdp"] == "uniform:L=4"


def test_mean_regimes(capsys):
    doc, _ = run_json(capsys, "mean", "--nt", "1", "--nr", "1", "--snr-db", "0")
    assert doc["results"]["mean_bits"] == pytest.approx(0.8603473822708860, rel=1e-12)
    doc, _ = run_json(capsys, "mean", "--snr-db", "40", "--regime", "high")
    assert doc["results"]["regime"] == "high_snr"


def test_auto_regime_advisories(capsys):
    base = ("variance", "--nt", "1", "--nr", "2", "--n", "8", "--pdp", "uniform:L=2", "--regime", "auto")
    doc, _ = run_json(capsys, *base, "--snr-db", "30")
    assert doc["results"]["regime"] == "exact"
    assert set(doc["results"]["advisory"]) == {"high_snr"}
    doc, _ = run_json(capsys, *base, "--snr-db", "-15")
    assert set(doc["results"]["advisory"]) == {"low_snr"}
    doc, _ = run_json(capsys, *base, "--snr-db", "10")
    assert doc["results"]["advisory"] == {}


def test_low_snr_caveat(capsys):
    doc, err = run_json(capsys, "variance", "--snr-db", "0", "--regime", "low")
    assert doc["warnings"] and "low SNR" in err
    doc, err = run_json(capsys, "variance", "--snr-db", "-20", "--regime", "low")
    assert "warnings" not in doc and err == ""


def test_sweep_csv(capsys):
    code, out, _ = run(capsys, "sweep", "--nt", "2", "--nr", "2", "--n", "8", "--snr-db", "10",
                       "--param", "L", "--values", "1..8", "--out", "csv")
    assert code == 0
    lines = out.splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if not ln.startswith("#")]
    assert comments[0] == "# command: sweep"
    header = body[0].split(",")
    assert header[:4] == ["nt", "nr", "n", "snr_db"] and header[-1] == "series_truncation_error"
    rows = body[1:]
    assert len(rows) == 8
    var = [float(r.split(",")[header.index("variance_bits2")]) for r in rows]
    assert all(a >= b for a, b in zip(var, var[1:]))


def test_sweep_other_params(capsys):
    doc, _ = run_json(capsys, "sweep", "--n", "16", "--pdp", "exp:L=8,K=2", "--param", "K", "--values", "1,4")
    assert [r["pdp"] for r in doc["rows"]] == ["exp:L=8,K=1.0", "exp:L=8,K=4.0"]
    doc, _ = run_json(capsys, "sweep", "--n", "16", "--pdp", "uniform:L=4", "--param", "snr-db", "--values", "0,10")
    assert doc["rows"][0]["mean_bits"] < doc["rows"][1]["mean_bits"]
    assert cli.parse_values(["1..3", "7"]) == ["1", "2", "3", "7"]


def test_roundtrip_from_json(capsys, tmp_path):
    code, out, _ = run(capsys, "outage", "--nt", "2", "--nr", "2", "--n", "16", "--snr-db", "20",
                       "--pdp", "exp:L=8,K=4", "--q", "0.01", "0.1", "--trials", "3000", "--seed", "9")
    assert code == 0
    f = tmp_path / "o.json"
    f.write_text(out)
    code, again, _ = run(capsys, "--from-json", str(f))
    assert code == 0 and again == out


@given(st.sampled_from(cli.COMMANDS), st.integers(1, 8), st.integers(1, 8), st.floats(-30, 50),
       st.integers(0, 2**64 - 1), st.lists(st.floats(0.001, 0.999), min_size=1, max_size=4))
def test_runspec_roundtrip(command, nt, nr, snr_db, seed, qs):
    spec = cli.RunSpec(command=command, nt=nt, nr=nr, snr_db=snr_db, seed=seed, q=tuple(qs))
    assert cli.RunSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec


def test_distribution(capsys):
    doc, _ = run_json(capsys, "distribution", "--n", "8", "--pdp", "uniform:L=2", "--points", "11",
                      "--trials", "2000")
    assert len(doc["rows"]) == 11
    assert doc["results"]["gamma"]["shape"] > 0
    assert 0 <= doc["results"]["ks_gaussian"] <= 1


def test_simulate_raw(capsys, tmp_path):
    raw = tmp_path / "s.f64"
    doc, _ = run_json(capsys, "simulate", "--nt", "1", "--nr", "1", "--n", "4", "--pdp", "uniform:L=2",
                      "--trials", "500", "--seed", "5", "--raw", str(raw))
    data = np.fromfile(raw, dtype="<f8")
    assert data.size == 500 and doc["results"]["raw_bytes"] == 4000
    assert doc["results"]["mean_bits"] == pytest.approx(data.mean(), rel=1e-13)


def test_threads_do_not_change_output(capsys, monkeypatch):
    args = ("simulate", "--n", "8", "--pdp", "uniform:L=3", "--trials", "3000", "--seed", "4")
    _, one, _ = run(capsys, "--threads", "1", *args)
    monkeypatch.setenv(cli.THREADS_ENV, "4")
    _, four, _ = run(capsys, *args)
    assert one == four


def test_validate_cross_moment(capsys):
    doc, _ = run_json(capsys, "validate", "--suite", "cross-moment", "--trials", "2000")
    assert len(doc["rows"]) == 18
    assert doc["results"]["max_rel_deviation"] < 1e-6


def test_validate_siso_anchors(capsys):
    doc, _ = run_json(capsys, "validate", "--suite", "siso-anchors")
    assert doc["results"]["passed"] is True


class TestErrors:
    def test_usage(self, capsys):
        code, _, err = run(capsys, "variance", "--nt", "zero")
        assert code == 2 and json.loads(err)["error"]["kind"] == "usage"
        code, _, _ = run(capsys, "variance", "--regime", "medium")
        assert code == 2
        code, _, _ = run(capsys)
        assert code == 2

    def test_domain_error_is_usage(self, capsys):
        code, _, err = run(capsys, "variance", "--n", "4", "--pdp", "uniform:L=8")
        assert code == 2 and "exceed" in json.loads(err)["error"]["message"]

    def test_non_convergence(self, capsys, monkeypatch):
        def boom(*a, **k):
            raise NonConvergenceError("diagonal series", 1e-3)

        monkeypatch.setattr(em, "variance_exact", boom)
        code, out, err = run(capsys, "variance")
        assert code == 3 and out == ""
        assert json.loads(err)["error"]["kind"] == "non_convergence"

    def test_internal(self, capsys, monkeypatch):
        monkeypatch.setattr(em, "mean_flat", lambda cfg: 1 / 0)
        code, _, err = run(capsys, "mean")
        assert code == 1 and json.loads(err)["error"]["kind"] == "internal"

    def test_bad_env(self, capsys, monkeypatch):
        monkeypatch.setenv(cli.THREADS_ENV, "lots")
        code, _, _ = run(capsys, "mean")
        assert code == 2

    def test_simulate_needs_trials(self, capsys):
        code, _, _ = run(capsys, "simulate")
        assert code == 2


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "ofdm_mi", "mean", "--nt", "1", "--nr", "1", "--snr-db", "0"],
                         capture_output=True, text=True, check=True)
    assert math.isclose(json.loads(res.stdout)["results"]["mean_bits"], 0.860347382270886, rel_tol=1e-12)
