import csv
import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gwtail import cli
from gwtail.errors import ConfigError


def _rows(text):
    lines = text.splitlines()
    assert lines[0].startswith("# gwtail ")
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def _write_cfg(tmp_path, body, name="c.yaml"):
    p = tmp_path / name
    p.write_text(body)
    return str(p)


@given(st.lists(st.floats(1e-9, 0.99), min_size=1, max_size=6))
def test_eps_grid_validation(grid):
    ok = all(b < a for a, b in zip(grid, grid[1:]))
    if ok:
        assert cli.load_config(None, {"eps_grid": grid}).eps_grid == grid
    else:
        with pytest.raises(ConfigError):
            cli.load_config(None, {"eps_grid": grid})


def test_geometric_grid():
    cfg = cli.load_config(None, {"eps_grid": {"start": 1e-2, "stop": 1e-4, "num": 3}})
    assert cfg.eps_grid == pytest.approx([1e-2, 1e-3, 1e-4])


def test_bad_law_is_config_error(tmp_path, capsys):
    path = _write_cfg(tmp_path, "offspring: {2: 0.5, 3: 0.4}\n")
    out = tmp_path / "report.txt"
    assert cli.main(["verify", "--config", path, "--out", str(out)]) == 2
    assert not out.exists()
    assert "config error" in capsys.readouterr().err


def test_unknown_key(tmp_path):
    path = _write_cfg(tmp_path, "offsprng: {2: 1.0}\n")
    with pytest.raises(ConfigError):
        cli.load_config(path)


def test_scales_table(tmp_path):
    path = _write_cfg(tmp_path, "eps_grid: [1.0e-3, 8.0e-4, 4.0e-4, 1.0e-5]\n")
    out = tmp_path / "s.csv"
    assert cli.main(["scales-table", "--config", path, "--out", str(out), "--seed", "3"]) == 0
    text = out.read_text()
    assert "seed=3" in text.splitlines()[0]
    rows = _rows(text)
    # 1e-3 and 8e-4 are one period a/mu = 1.25 apart
    assert float(rows[0]["H"]) == pytest.approx(float(rows[1]["H"]), abs=1e-8)
    assert float(rows[0]["y"]) == pytest.approx(float(rows[1]["y"]), rel=1e-12)
    k = [int(r["kappa"]) for r in rows]
    assert k == sorted(k)
    assert {r["regime"] for r in rows} <= {"OMEGA_LARGE", "OMEGA_ORDER_ONE", "OMEGA_SMALL"}
    # byte-identical rerun
    out2 = tmp_path / "s2.csv"
    cli.main(["scales-table", "--config", path, "--out", str(out2), "--seed", "3"])
    assert out2.read_bytes() == out.read_bytes()


def test_tail_compare(tmp_path):
    path = _write_cfg(tmp_path, "eps_grid: [0.6, 0.2, 0.1, 0.05, 0.02]\ntrials: 20000\n")
    out = tmp_path / "t.csv"
    assert cli.main(["tail-compare", "--config", path, "--out", str(out)]) == 0
    rows = _rows(out.read_text())
    gaps = [float(r["rel_gap"]) for r in rows]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    for r in rows:
        assert float(r["err_inv"]) < 1e-3
        assert (r["log_mc"] != "") == (float(r["mc_expected_accepts"]) >= 100)


def test_k_distribution(tmp_path):
    path = _write_cfg(tmp_path, "eps_grid: [1.0e-2, 1.0e-3, 1.0e-4]\n")
    out = tmp_path / "k.csv"
    assert cli.main(["k-distribution", "--config", path, "--out", str(out)]) == 0
    rows = _rows(out.read_text())
    by_eps = {}
    for r in rows:
        by_eps.setdefault(float(r["eps"]), []).append(r)
    smallest = by_eps[min(by_eps)]
    assert float(smallest[0]["mass_two"]) >= 0.9
    for eps, rs in by_eps.items():
        assert sum(float(r["pmf"]) for r in rs) == pytest.approx(1.0, abs=1e-3)
        if rs[0]["regime"] == "OMEGA_LARGE":
            cg = int(rs[0]["ceil_gamma"])
            pm = {int(r["k"]): float(r["pmf"]) for r in rs}
            assert pm[cg] > pm[cg + 1]


def test_condition_sim(tmp_path):
    out = tmp_path / "run.json"
    args = ["condition-sim", "--eps", "0.7", "--depth", "15", "--trials", "20000", "--seed", "5", "--out", str(out)]
    assert cli.main(args) == 0
    rec = json.loads(out.read_text())
    assert rec["comment"].startswith("# gwtail ") and rec["seed"] == 5
    assert rec["accepted"] > 0 and rec["config"]["eps"] == 0.7
    exc = (tmp_path / "run_excess.csv").read_text().splitlines()
    assert exc[0].startswith("# gwtail ") and exc[1] == "excess"
    assert len(exc) - 2 == len(rec["excess_samples"])
    first = out.read_bytes()
    cli.main(args)
    assert out.read_bytes() == first
