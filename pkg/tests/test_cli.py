import csv
import hashlib
import io
import json
import math

import pytest

from wonhamsplit import ConfigError
from wonhamsplit.cli import load_config, main, run_experiment


def minimal(**engine):
    return {
        "model": {"d": 1, "m": 1},
        "levels": {"thresholds": [1.0, 2.0], "horizon_T": 1.0},
        "engine": {"seed": 5, "n_particles": 200, "replicates": 3, "step_h": 0.01, **engine},
    }


def two_mode(**engine):
    cfg = minimal(**engine)
    cfg["model"] = {"d": 1, "m": 2,
                    "drift": {"family": "constant", "c": [[-0.5], [1.5]]},
                    "rates": {"family": "constant", "lambda_bar": [[0, 0.1], [1.0, 0]]},
                    "initial": {"x0": [0.0], "theta_probs": [1.0, 0.0]}}
    return cfg


def read_report(path):
    data, summary = path.read_text().split("\n# summary\n")
    return list(csv.DictReader(io.StringIO(data.strip() + "\n"))), \
        list(csv.DictReader(io.StringIO(summary)))


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


# -- loading ----------------------------------------------------------------------

def test_minimal_config_gets_defaults():
    cfg = load_config(json.dumps(minimal()))
    assert cfg.engine.scheme == "both" and cfg.engine.dynamics == "both"
    assert cfg.output.format == "csv" and cfg.output.path is None
    assert cfg.levels.phi == "coordinate"
    assert cfg.model.drift.family == "affine"


def test_load_from_path(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(minimal()))
    assert load_config(str(p)) == load_config(minimal())


def test_decreasing_thresholds_named():
    cfg = minimal()
    cfg["levels"]["thresholds"] = [2, 1]
    with pytest.raises(ConfigError) as err:
        load_config(cfg)
    assert "levels.thresholds" in err.value.paths


def test_off_simplex_mode_law_named():
    cfg = two_mode()
    cfg["model"]["initial"]["theta_probs"] = [0.5, 0.6]
    with pytest.raises(ConfigError) as err:
        load_config(cfg)
    assert "model.initial.theta_probs" in err.value.paths


def test_all_violations_reported_together():
    cfg = two_mode()
    cfg["model"]["initial"]["theta_probs"] = [0.5, 0.6]
    cfg["levels"]["thresholds"] = [2, 1]
    cfg["levels"]["phi"] = {"kind": "coordinate", "coord_index": 3}
    del cfg["engine"]["seed"]
    cfg["engine"]["scheme"] = "clever"
    with pytest.raises(ConfigError) as err:
        load_config(cfg)
    assert {"model.initial.theta_probs", "levels.thresholds", "engine.seed",
            "engine.scheme"} <= set(err.value.paths)


def test_cross_field_checks():
    cfg = minimal()
    cfg["levels"]["phi"] = {"kind": "coordinate", "coord_index": 1}
    with pytest.raises(ConfigError) as err:
        load_config(cfg)
    assert err.value.paths == ["levels.phi.coord_index"]
    cfg = two_mode(step_h=1.0)
    with pytest.raises(ConfigError) as err:
        load_config(cfg)
    assert "engine.step_h" in err.value.paths


def test_seed_is_required():
    cfg = minimal()
    del cfg["engine"]["seed"]
    with pytest.raises(ConfigError) as err:
        load_config(cfg)
    assert err.value.paths == ["engine.seed"]


def test_parse_error():
    with pytest.raises(ConfigError):
        load_config("{not json")


def test_round_trip():
    cfg = load_config(two_mode(scheme="resampled"))
    again = load_config(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()
    assert again.engine == cfg.engine and again.levels == cfg.levels


# -- running ----------------------------------------------------------------------

def test_one_cell_three_replicates(tmp_path):
    out = tmp_path / "r.csv"
    run_experiment(load_config(two_mode(scheme="weighted", dynamics="marginal")), str(out))
    rows, summary = read_report(out)
    assert len(rows) == 3 and len(summary) == 1
    assert list(rows[0]) == ["scheme", "dynamics", "replicate", "seed", "estimate",
                             "log_estimate", "p_hat_1", "p_hat_2", "extinct_at"]
    assert [r["seed"] for r in rows] == ["5", "6", "7"]


def test_four_cells(tmp_path):
    out = tmp_path / "r.csv"
    run_experiment(load_config(two_mode()), str(out))
    rows, summary = read_report(out)
    assert len(rows) == 12 and len(summary) == 4
    assert (out.parent / "r.csv.timing.json").exists()


def test_rows_hold_exact_products(tmp_path):
    out = tmp_path / "r.csv"
    run_experiment(load_config(two_mode()), str(out))
    rows, summary = read_report(out)
    for r in rows:
        p = [float(r["p_hat_1"]), float(r["p_hat_2"])]
        assert float(r["estimate"]) == math.prod(p)
    for s in summary:
        est = [float(r["estimate"]) for r in rows
               if (r["scheme"], r["dynamics"]) == (s["scheme"], s["dynamics"])]
        assert float(s["mean"]) == pytest.approx(sum(est) / 3, rel=1e-15)


def test_rerun_is_byte_identical(tmp_path):
    cfg = load_config(two_mode())
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    run_experiment(cfg, str(a))
    run_experiment(cfg, str(b))
    run_experiment(cfg, str(c), threads=3)
    assert digest(a) == digest(b) == digest(c)


def test_total_extinction_is_success(tmp_path, capsys):
    cfg = minimal()
    cfg["levels"]["thresholds"] = [0.5, 40.0]
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    out = tmp_path / "r.csv"
    assert main(["run", str(p), "--output", str(out)]) == 0
    rows, summary = read_report(out)
    assert all(r["estimate"] == "0" and r["extinct_at"] == "2" for r in rows)
    assert all(r["log_estimate"] == "-inf" and r["p_hat_2"] == "0" for r in rows)
    assert all(float(s["mean"]) == 0.0 for s in summary)


def test_json_output_and_survivor_dump(tmp_path):
    cfg = two_mode(scheme="weighted")
    cfg["output"] = {"format": "json", "dump_survivor_paths": True}
    out = tmp_path / "r.json"
    _, written = run_experiment(load_config(cfg), str(out))
    doc = json.loads(out.read_text())
    assert len(doc["rows"]) == 6 and len(doc["summary"]) == 2
    assert doc["config"]["engine"]["seed"] == 5
    dump = json.loads((tmp_path / "r.json.survivors.json").read_text())
    assert dump and all(p["x"][-1][0] >= 2.0 for p in dump)
    assert {"filter", "mode"} == {k for p in dump for k in p if k in ("filter", "mode")}


def test_cli_seed_override_and_threads(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(two_mode()))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", str(p), "--output", str(a), "--seed", "11"]) == 0
    assert main(["run", str(p), "--output", str(b), "--seed", "11", "--threads", "4"]) == 0
    assert digest(a) == digest(b)
    rows, _ = read_report(a)
    assert rows[0]["seed"] == "11"


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    cfg = minimal()
    cfg["levels"]["thresholds"] = [2, 1]
    bad.write_text(json.dumps(cfg))
    assert main(["validate", str(bad)]) == 2
    assert "levels.thresholds" in capsys.readouterr().err
    good = tmp_path / "good.json"
    good.write_text(json.dumps(minimal()))
    assert main(["validate", str(good)]) == 0
    assert main(["run", str(tmp_path / "missing.json")]) == 3
    assert main(["run", str(good), "--output", str(tmp_path / "no" / "dir.csv")]) == 3


def test_stdout_report(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(minimal(scheme="resampled", dynamics="joint")))
    assert main(["run", str(p)]) == 0
    assert capsys.readouterr().out.startswith("scheme,dynamics,replicate")
