import csv
import json

import numpy as np
import pytest
import yaml

from codedcache import cli, delivery
from codedcache.cli import ANALYZE_COLUMNS, SIMULATE_COLUMNS, main


def _write(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


SMALL = {"system": {"n": 3, "m": 3, "M": 1, "seed": 0},
         "popularity": {"q": [0.7, 0.21, 0.09]},
         "policy": {"name": "rap"}}


def test_analyze_three_file_sweep(tmp_path):
    cfg = dict(SMALL, sweep={"axis": "n", "values": [3, 15]}, output={"name": "rap"})
    assert main(["analyze", "-c", _write(tmp_path, cfg), "-o", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "rap.csv")
    assert list(rows[0]) == ANALYZE_COLUMNS
    assert [r["value"] for r in rows] == ["3", "15"]
    assert float(rows[0]["rub"]) == pytest.approx(0.9, abs=1e-6)
    p = _rows(tmp_path / "rap_p.csv")
    p3 = [float(r["p"]) for r in p if r["value"] == "3"]
    p15 = [float(r["p"]) for r in p if r["value"] == "15"]
    assert p3[0] >= 0.8
    assert max(abs(v - 1 / 3) for v in p15) <= 0.1
    doc = json.loads((tmp_path / "rap.json").read_text())
    assert doc["rows"][0]["rub"] == pytest.approx(0.9, abs=1e-12)


def test_analyze_large_library_ratio(tmp_path):
    cfg = {"system": {"n": 5000, "m": 500, "M": 20},
           "popularity": {"alpha": 1.6},
           "policy": {"name": "random_lfu", "m_tilde": "auto"}}
    assert main(["analyze", "-c", _write(tmp_path, cfg), "-o", str(tmp_path)]) == 0
    row = json.loads((tmp_path / "analyze.json").read_text())["rows"][0]
    assert 4 <= row["lfu_rate"] / row["rub"] <= 16


def test_empty_sweep_writes_header_only(tmp_path):
    cfg = dict(SMALL, sweep={"axis": "M", "values": []})
    assert main(["analyze", "-c", _write(tmp_path, cfg), "-o", str(tmp_path)]) == 0
    assert (tmp_path / "analyze.csv").read_text() == ",".join(ANALYZE_COLUMNS) + "\n"


def test_simulate_is_byte_reproducible(tmp_path):
    cfg = {"system": {"n": 4, "m": 6, "M": 2, "B": 3, "seed": 5},
           "popularity": {"alpha": 0.8},
           "sweep": {"axis": "M", "values": [0, 2, 6]},
           "simulation": {"trials": 10}}
    path = _write(tmp_path, cfg)
    for d in ("a", "b"):
        assert main(["simulate", "-c", path, "-o", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "simulate.csv").read_bytes()
    assert a == (tmp_path / "b" / "simulate.csv").read_bytes()
    rows = _rows(tmp_path / "a" / "simulate.csv")
    assert list(rows[0]) == SIMULATE_COLUMNS
    assert all(r["decode_pass_rate"] == "1" for r in rows)
    assert float(rows[-1]["mean_rate"]) == 0.0
    # seed override changes the draw
    assert main(["simulate", "-c", path, "-o", str(tmp_path / "c"), "--seed", "6"]) == 0
    assert (tmp_path / "c" / "simulate.csv").read_bytes() != a


def test_threads_flag_keeps_output(tmp_path):
    cfg = {"system": {"n": 4, "m": 6, "M": 2, "B": 3}, "simulation": {"trials": 6}}
    path = _write(tmp_path, cfg)
    assert main(["simulate", "-c", path, "-o", str(tmp_path / "a")]) == 0
    assert main(["simulate", "-c", path, "-o", str(tmp_path / "b"), "-j", "3"]) == 0
    assert (tmp_path / "a" / "simulate.csv").read_bytes() == \
        (tmp_path / "b" / "simulate.csv").read_bytes()


@pytest.mark.parametrize("cfg", [
    {"system": {"n": 3, "m": 3, "M": 1}, "bogus": 1},
    {"system": {"n": 0, "m": 3, "M": 1}},
    {"system": {"n": 3, "m": 3, "M": 1}, "popularity": {"alpha": 1, "q": [1, 0, 0]}},
    {"system": {"n": 3, "m": 3, "M": 5}},
    {"system": {"n": 3, "m": 3, "M": 1}, "popularity": {"q": [0.5, 0.5, 0.5]}},
])
def test_config_errors_exit_2(tmp_path, cfg, capsys):
    assert main(["analyze", "-c", _write(tmp_path, cfg), "-o", str(tmp_path)]) == 2
    assert "codedcache:" in capsys.readouterr().err
    assert not list(tmp_path.glob("*.csv"))


def test_unreadable_config_exit_2(tmp_path):
    assert main(["analyze", "-c", str(tmp_path / "missing.yaml")]) == 2


def test_resource_guard_exit_4(tmp_path, monkeypatch):
    monkeypatch.setenv("CODEDCACHE_MAX_VERTICES", "50")
    cfg = {"system": {"n": 10, "m": 5, "M": 1, "B": 10}, "simulation": {"trials": 1},
           "sweep": {"axis": "B", "values": [2, 10]}}
    assert main(["simulate", "-c", _write(tmp_path, cfg), "-o", str(tmp_path)]) == 4
    assert not (tmp_path / "simulate.csv").exists()


def test_verify_passes(tmp_path, capsys):
    cfg = {"system": {"n": 1, "m": 1, "M": 0}, "verify": {"seeds": 20, "rho_samples": 20000}}
    assert main(["verify", "-c", _write(tmp_path, cfg), "-o", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5 and "FAIL" not in out
    assert len(json.loads((tmp_path / "verify_verify.json").read_text())) == 5


def test_verify_catches_flipped_edge(capsys):
    def faulty(caches, demands, max_vertices=None):
        g = delivery.build_conflict_graph(caches, demands, max_vertices)
        adj = g.adj.copy()
        if g.n_vertices >= 2:
            adj[0, 1] = adj[1, 0] = not adj[0, 1]
        return delivery.ConflictGraph(g.file, g.packet, g.user, adj, g.B)

    cfg = {"verify": {"seeds": 30, "rho_samples": 10000}}
    assert cli.cmd_verify(cfg, None, seed=0, builder=faulty) == cli.EXIT_VERIFY
    out = capsys.readouterr().out
    assert "FAIL edge_rule" in out and "counterexample" in out


def test_module_entry_point(tmp_path):
    import subprocess
    import sys
    cfg = _write(tmp_path, SMALL)
    r = subprocess.run([sys.executable, "-m", "codedcache", "analyze", "-c", cfg,
                        "-o", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert np.isclose(float(_rows(tmp_path / "analyze.csv")[0]["rub"]), 0.9)
