import json
import textwrap

import pytest

from quanta.cli import main
from quanta.config import load_experiment, load_theory
from quanta.errors import ConfigurationError

SMALL = textwrap.dedent("""\
    name: small
    target:
      family: gaussian_mixture
      dimension: 1
      means: [-4, 4]
      sigmas: [0.5]
    schedule:
      type: geometric
      ratio: 0.1
      levels: 3
    algorithm: [pt, quanta]
    N: 6
    k: 2
    T: 80
    K: 2
    start: -4
    seed: 7
    repeats: 2
    """)


def write(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_line_precise_error(tmp_path):
    bad = SMALL.replace("ratio: 0.1", "ratio: 1.5")
    with pytest.raises(ConfigurationError, match=r"c\.yaml:9:"):
        load_experiment(write(tmp_path, bad))


def test_unknown_key_reports_its_line(tmp_path):
    with pytest.raises(ConfigurationError, match=r":19: unknown key 'bogus'"):
        load_experiment(write(tmp_path, SMALL + "bogus: 1\n"))


def test_negative_T_rejected(tmp_path, capsys):
    code = main(["run", "--config", write(tmp_path, SMALL.replace("T: 80", "T: -5"))])
    assert code == 2
    assert "c.yaml:14:" in capsys.readouterr().err


def test_bad_composite_points_at_segments(tmp_path):
    text = SMALL.replace("type: geometric\n  ratio: 0.1\n  levels: 3", "type: composite\n  segments: [[0.08, 4], [0.4, 8, 2]]")
    with pytest.raises(ConfigurationError, match=r":9:"):
        load_experiment(write(tmp_path, text))


def test_unknown_marginal_lists_catalogue(tmp_path):
    text = "theory:\n  marginals: [gaussian, laplace]\n"
    with pytest.raises(ConfigurationError) as exc:
        load_theory(write(tmp_path, text))
    msg = str(exc.value)
    assert ":2:" in msg and "student_t" in msg and "gamma" in msg


def test_run_outputs_and_determinism(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "a"), "--threads", "2"]) == 0
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    for rel in ("summary.json", "pt/run_00/summary.json", "quanta/run_01/trace.csv", "quanta/run_01/weights.csv"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel
    agg = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert agg["algorithms"]["quanta"]["runs"] == 2
    assert len(agg["algorithms"]["pt"]["swap_rates_mean"]) == 2
    cost = json.loads((tmp_path / "a" / "cost_report.json").read_text())
    assert "quanta_over_pt" in cost
    assert "swap rates" in capsys.readouterr().out


def test_seed_override_changes_output(tmp_path):
    cfg = write(tmp_path, SMALL)
    main(["run", "--config", cfg, "--out", str(tmp_path / "a"), "--repeats", "1"])
    main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--repeats", "1", "--seed", "8"])
    a = (tmp_path / "a" / "quanta/run_00/trace.csv").read_bytes()
    b = (tmp_path / "b" / "quanta/run_00/trace.csv").read_bytes()
    assert a != b


def test_verify_theory_gaussian_skip(tmp_path):
    text = textwrap.dedent("""\
        theory:
          marginals: [gaussian, "student_t(10)"]
          betas: [1, 10]
          cold_betas: [10, 100, 1000]
          brackets: [1.0]
        """)
    out = tmp_path / "th"
    assert main(["verify-theory", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    rep = json.loads((out / "theory_report.json").read_text())
    gauss = [e for e in rep["functionals"] if e["marginal"] == "gaussian"]
    assert all("skipped" in e["optimal_ell"] for e in gauss)
    t10 = [e for e in rep["functionals"] if e["marginal"] == "student_t(10)"]
    assert all(e["optimal_ell"]["acceptance_3sf"] == 0.234 for e in t10)
    assert rep["optimal_ell"][0]["acceptance"] == pytest.approx(0.2338, abs=1e-4)


def test_tune_schedule(tmp_path, capsys):
    text = textwrap.dedent("""\
        target:
          family: gaussian_mixture
          dimension: 1
          means: [0]
          sigmas: [1]
        tune:
          hottest_beta: 0.001
          algorithm: pt
          n_chains: 32
          burn_in: 100
          n_samples: 100
        """)
    out = tmp_path / "tune"
    assert main(["tune-schedule", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    s = json.loads((out / "schedule.json").read_text())
    assert s["betas"][0] == 1.0 and s["betas"][-1] == 0.001
    assert s["levels"] == len(s["betas"]) >= 3
    assert "levels" in capsys.readouterr().out


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.yaml")]) == 2
    assert "error" in capsys.readouterr().err
