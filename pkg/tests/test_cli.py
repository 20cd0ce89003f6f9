import os

import pytest

from navisim import data
from navisim.cli import group_seed, main, run_sweep, sim_params
from navisim.config import (ConfigError, ScenarioConfig, dump_config, load_config, parse_config, parse_int_list)
from navisim.metrics import read_csv
from navisim.trace import Rect, load_ns2_trace

SMALL = """\
[trace]
vehicles = 10
[simulation]
duration = 10
seed = 3
"""


def _write(tmp_path, text, name="scenario.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_parse_config_sections():
    cfg = parse_config(SMALL + "[radio]\ntx_powers = 16, 23\n[dissemination]\nk_values = 1..3, 7\n")
    assert (cfg.vehicles, cfg.duration, cfg.seed) == (10, 10.0, 3)
    assert cfg.tx_powers == (16.0, 23.0) and cfg.k_values == (1, 2, 3, 7)


@pytest.mark.parametrize("text", [
    "[radio]\ntx_power = 16\n",
    "[nonsense]\nx = 1\n",
    "[dissemination]\nstrategies = navi, flood\n",
    "[simulation]\ncam_jitter = maybe\n",
    "[dissemination]\nk_values = 0\n",
    "[trace]\narea = 600\n",
])
def test_bad_config_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_int_list_syntax():
    assert parse_int_list("1..5, 8") == (1, 2, 3, 4, 5, 8)
    with pytest.raises(ConfigError):
        parse_int_list("5..1")


def test_dump_config_round_trips():
    cfg = ScenarioConfig(seed=9, k_values=(1, 4), tx_powers=(21.0,), dissemination_area=(0.0, 0.0, 10.0, 20.0))
    assert parse_config(dump_config(cfg)) == cfg


def test_relative_trace_path_resolves_next_to_config(tmp_path):
    p = _write(tmp_path, "[trace]\nsource = traces/x.tcl\n")
    assert load_config(p).trace_source == os.path.join(str(tmp_path), "traces", "x.tcl")


def test_group_seed_depends_only_on_master_and_power():
    assert group_seed(1, 16.0) == group_seed(1, 16.0)
    assert len({group_seed(1, 16.0), group_seed(1, 21.0), group_seed(2, 16.0)}) == 3


def test_request_offset_is_a_fraction_of_the_period():
    p = sim_params(ScenarioConfig(request_frequency=2.0), 16.0, Rect.from_size(10, 10))
    assert p.request_offset == 0.25


def test_reference_bundle():
    cfg = data.reference_config()
    tr = load_ns2_trace(cfg.trace_source)
    assert len(tr) == 45
    assert cfg.k_values == tuple(range(1, 46)) and cfg.tx_powers == (16.0, 21.0, 23.0)
    w, h = cfg.dissemination_area[2], cfg.dissemination_area[3]
    assert w * h == pytest.approx(440_000)


def test_sweep_cardinality(tmp_path):
    cfg = parse_config(SMALL)
    res = run_sweep(cfg, k_values=range(1, 11), tx_powers=(16, 21, 23))
    assert res.ok and len(res.reports) == 60
    assert [r.config_id for r in res.reports[:4]] == ["navi-k1-tx16", "navi-k1-tx21", "navi-k1-tx23",
                                                      "navi-k2-tx16"]


def test_cli_sweep_writes_csvs(tmp_path):
    cfg = _write(tmp_path, SMALL)
    out = tmp_path / "out"
    rc = main(["sweep", "--config", cfg, "--k", "1,2", "--tx", "16", "--strategy", "navi", "--out", str(out)])
    assert rc == 0
    rows = read_csv(out / "metrics_requests.csv")
    assert {r["config_id"] for r in rows} == {"navi-k1-tx16", "navi-k2-tx16"}
    assert len(rows) == 2 * 10
    assert sorted(os.listdir(out)) == ["degree_cdf.csv", "metrics_aggregate.csv", "metrics_requests.csv"]


def test_cli_errors_exit_nonzero(tmp_path, capsys):
    bad = _write(tmp_path, "[radio]\ntx_power = 16\n")
    assert main(["run", "--config", bad, "--out", str(tmp_path / "o")]) == 2
    assert "tx_power" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path / "o")]) == 2
    cfg = _write(tmp_path, SMALL, "ok.cfg")
    assert main(["sweep", "--config", cfg, "--strategy", "flood", "--out", str(tmp_path / "o")]) == 2
    with pytest.raises(SystemExit):
        main(["launch"])


def test_cli_gen_trace(tmp_path):
    out = tmp_path / "t.tcl"
    assert main(["gen-trace", "--seed", "4", "--vehicles", "6", "--duration", "30", "--area", "300x200",
                 "--out", str(out)]) == 0
    tr = load_ns2_trace(str(out))
    assert len(tr) == 6
    box = tr.bounds()
    assert box.max.x <= 300 and box.max.y <= 200
    out2 = tmp_path / "t2.tcl"
    main(["gen-trace", "--seed", "4", "--vehicles", "6", "--duration", "30", "--area", "300x200",
          "--out", str(out2)])
    assert out.read_bytes() == out2.read_bytes()


def test_default_run_seed_7(tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--seed", "7", "--out", str(out)]) == 0
    rows = read_csv(out / "metrics_requests.csv")
    per_config = {}
    for r in rows:
        per_config[r["config_id"]] = per_config.get(r["config_id"], 0) + 1
    assert len(per_config) == 60 and set(per_config.values()) == {180}
