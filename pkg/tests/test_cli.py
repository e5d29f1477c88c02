import json
import math

import numpy as np
import pytest

from marlpower.cli import main, parse_doppler
from marlpower.config import RunConfig
from marlpower.experiment import emit_cdf, moving_average, read_csv, run_experiment
from marlpower.simcore import Network


def test_emit_cdf_examples(tmp_path):
    assert emit_cdf([2, 1, 3]).tolist() == [[1, 1 / 3], [2, 2 / 3], [3, 1]]
    table = emit_cdf([4.0] * 5)
    assert np.all(table[:, 0] == 4.0) and table[-1, 1] == 1.0
    with pytest.raises(ValueError):
        emit_cdf([])
    emit_cdf([3, 1], tmp_path / "c.csv", ["seed: 1"])
    cols, body = read_csv(tmp_path / "c.csv")
    assert cols == ["value", "quantile"] and body.tolist() == [[1, 0.5], [3, 1]]
    assert open(tmp_path / "c.csv").readline() == "# seed: 1\n"


def test_emit_cdf_uniform_dkw():
    x = np.random.default_rng(0).uniform(size=10**4)
    table = emit_cdf(x)
    assert np.abs(table[:, 1] - table[:, 0]).max() < 0.03


def test_moving_average():
    assert np.allclose(moving_average([1, 2, 3, 4], 2), [1, 1.5, 2.5, 3.5])
    assert np.allclose(moving_average(np.ones(600), 250), 1.0)
    with pytest.raises(ValueError):
        moving_average([1], 0)


def test_parse_doppler():
    assert parse_doppler("10") == 10.0
    assert parse_doppler("uncorrelated") == math.inf
    assert parse_doppler("random") == "random"


def small(tmp_path, **kw):
    base = dict(n_cells=1, train_slots=0, test_slots=30, seeds=[0], out_dir=str(tmp_path / "out"),
                allocators=["full-power"])
    return RunConfig(**{**base, **kw})


def test_full_power_single_link_constant(tmp_path):
    cfg = small(tmp_path, per_slot_log=True)
    summary = run_experiment(cfg)
    sc = cfg.sim_config(0)
    net = Network(sc)
    st = net.reset(cfg.train_slots)
    expected = []
    for _ in range(cfg.test_slots):
        snr = st.g_now[0, 0] * sc.P_max / sc.sigma2
        expected.append(math.log2(1 + min(snr, 1e3)))
        st, _ = net.step([sc.P_max])
    assert summary["allocators"]["full-power"]["average_mean"] == pytest.approx(np.mean(expected))
    cols, body = read_csv(tmp_path / "out/seed_0/full-power/per_slot.csv")
    assert cols == ["slot", "link", "power", "sinr_db", "C", "w", "reward"]
    assert np.allclose(body[:, 4], expected)
    header = open(tmp_path / "out/seed_0/full-power/per_slot.csv").readline()
    assert json.loads(header.split("config: ", 1)[1])["test_slots"] == 30


def test_summary_deterministic_and_complete(tmp_path):
    cfg = small(tmp_path, n_cells=3, allocators=["wmmse", "fp", "central", "random", "full-power"],
                test_slots=10, solver_max_iter=50, seeds=[0, 1])
    run_experiment(cfg)
    first = (tmp_path / "out/summary.json").read_bytes()
    run_experiment(cfg)
    assert (tmp_path / "out/summary.json").read_bytes() == first
    summary = json.loads(first)
    assert set(summary["allocators"]) == set(cfg.allocators)
    fp = summary["allocators"]["fp"]
    vals = [v["average"] for v in fp["per_seed"].values()]
    assert fp["average_mean"] == pytest.approx(np.mean(vals))
    assert fp["average_std"] == pytest.approx(np.std(vals))


def test_all_allocators_with_training(tmp_path):
    ck_cfg = small(tmp_path, n_cells=3, train_slots=60, test_slots=5, batch_size=16,
                   allocators=["dqn-matched"], mode="pf", out_dir=str(tmp_path / "a"))
    run_experiment(ck_cfg)
    ck = tmp_path / "a/seed_0/dqn-matched/checkpoint.json"
    cols, body = read_csv(tmp_path / "a/seed_0/dqn-matched/learning_curve.csv")
    assert len(body) == 60 and "mean_rate_ma" in cols
    cfg = ck_cfg.replace(allocators=["dqn-matched", "dqn-unmatched", "wmmse", "fp", "central", "random",
                                     "full-power"], checkpoint=str(ck), seeds=[1], solver_max_iter=30,
                         out_dir=str(tmp_path / "b"))
    summary = run_experiment(cfg)
    assert len(summary["allocators"]) == 7
    assert "sum_log_rate_end_mean" in summary["allocators"]["fp"]


def test_checkpoint_reuse(tmp_path):
    cfg = small(tmp_path, n_cells=2, train_slots=40, batch_size=8, allocators=["dqn-matched"])
    run_experiment(cfg)
    ck = tmp_path / "out/seed_0/dqn-matched/checkpoint.json"
    stamp = ck.stat().st_mtime_ns
    run_experiment(cfg)
    assert ck.stat().st_mtime_ns == stamp
    run_experiment(cfg.replace(train_slots=41))
    assert ck.stat().st_mtime_ns != stamp


def test_invalid_unmatched_checkpoint(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"format": "something-else"}')
    cfg = small(tmp_path, allocators=["dqn-unmatched"], checkpoint=str(bad))
    with pytest.raises(ValueError):
        run_experiment(cfg)
    with pytest.raises(ValueError):
        RunConfig(allocators=["dqn-unmatched"])


def test_cli_verbs(tmp_path, capsys):
    out = str(tmp_path / "cli")
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"n_cells": 2, "test_slots": 50, "seeds": [0]}))
    assert main(["bench", "--config", str(conf), "--test-slots", "4", "--solver_max_iter", "20",
                 "--out-dir", out]) == 0
    summary = json.loads((tmp_path / "cli/summary.json").read_text())
    assert summary["config"]["test_slots"] == 4 and summary["config"]["n_cells"] == 2
    assert summary["overrides"]["test_slots"] == 4
    assert set(summary["allocators"]) == {"wmmse", "fp", "central", "random", "full-power"}
    assert main(["train", "--n-cells", "2", "--train-slots", "20", "--batch-size", "4", "--seeds", "3",
                 "--out-dir", out]) == 0
    assert (tmp_path / "cli/seed_3/dqn-matched/checkpoint.json").exists()
    assert main(["test", "--n-cells", "2", "--train-slots", "20", "--batch-size", "4", "--seeds", "3",
                 "--test-slots", "3", "--allocators", "dqn-matched", "--out-dir", out]) == 0
    assert main(["oracle", "--n-cells", "2", "--seeds", "0", "--out-dir", out]) == 0
    res = json.loads((tmp_path / "cli/oracle.json").read_text())["results"]["0"]
    assert res["fp_ratio"] == pytest.approx(res["fp"] / res["grid"])
    assert len(res["grid_p"]) == 2
    capsys.readouterr()


def test_cli_errors(tmp_path, capsys):
    assert main(["test", "--allocators", "dqn-unmatched", "--checkpoint", str(tmp_path / "none.json"),
                 "--out-dir", str(tmp_path)]) == 1
    assert main(["bench", "--r", "0", "--out-dir", str(tmp_path)]) == 1
    assert main(["bench", "--config", str(tmp_path / "missing.json")]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["bench", "--n-cells", "x"])
    assert exc.value.code != 0
    assert "error" in capsys.readouterr().err
