import os
import shutil
import subprocess
import sys

import numpy as np
import pytest

from liqswitch.book import read_series, write_series
from liqswitch.cli import main
from liqswitch.regime import (RegressionData, SwitchingParams, canonicalize, coefficient_table,
                              load_model, ols, save_model)
from liqswitch.signal import SignalConfig, SignalReport, batch_signal, count_rising_edges

DATA = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture
def feed500(tmp_path):
    path = tmp_path / "feed_500.csv"
    shutil.copy(os.path.join(DATA, "feed_500.csv"), path)
    return path


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_extract_matches_golden(feed500, tmp_path, capsys):
    out = tmp_path / "series_500.csv"
    assert main(["extract", str(feed500), "-o", str(out)]) == 0
    for side in ("bid", "ask"):
        assert read(tmp_path / f"series_500.{side}.csv") == \
            read(os.path.join(DATA, f"series_500.{side}.golden"))
    assert "bid: 100 observations" in capsys.readouterr().out


def test_extract_single_side_and_ts_ranges(feed500, tmp_path):
    assert main(["extract", str(feed500), "-o", str(tmp_path / "s.csv")]) == 0
    bid = read_series(tmp_path / "s.bid.csv")
    ask = read_series(tmp_path / "s.ask.csv")
    for key in ("feed_first_ts_ns", "feed_last_ts_ns", "messages", "feed"):
        assert bid.meta[key] == ask.meta[key]
    lo, hi = int(bid.meta["feed_first_ts_ns"]), int(bid.meta["feed_last_ts_ns"])
    for s in (bid, ask):
        assert lo <= s.ts_ns.min() and s.ts_ns.max() <= hi
    assert main(["extract", str(feed500), "--side", "ask", "-o", str(tmp_path / "a.csv")]) == 0
    only = read_series(tmp_path / "a.csv")
    assert only.ts_ns.tolist() == ask.ts_ns.tolist()
    assert only.liq.tolist() == ask.liq.tolist()


def test_extract_empty_feed(tmp_path, capsys):
    feed = tmp_path / "empty.csv"
    feed.write_text("# seq,ts_ns,side,kind,action,price_ticks,qty,level,aggressor\n")
    assert main(["extract", str(feed), "-o", str(tmp_path / "x.csv")]) == 2
    assert "no observations" in capsys.readouterr().err


def test_extract_bad_feed_strict_vs_lenient(feed500, tmp_path, capsys):
    lines = feed500.read_text().splitlines()
    lines.insert(5, "this,is,not,a,record")
    feed500.write_text("\n".join(lines) + "\n")
    assert main(["extract", str(feed500), "-o", str(tmp_path / "x.csv")]) == 2
    assert "MalformedRecord" in capsys.readouterr().err
    assert main(["extract", str(feed500), "--lenient", "-o", str(tmp_path / "x.csv")]) == 0


def test_unknown_config_key(feed500, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("side = bid\nbandwidth = 4\n")
    assert main(["extract", str(feed500), "--config", str(cfg), "-o", str(tmp_path / "x")]) == 2
    assert "unknown key 'bandwidth'" in capsys.readouterr().err


def test_config_file_then_flags(feed500, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sweep\nside = bid\ntransform = raw\n")
    out = tmp_path / "x.csv"
    assert main(["extract", str(feed500), "--config", str(cfg), "--band-ticks", "8",
                 "-o", str(out)]) == 0
    s = read_series(out)
    assert (s.meta["side"], s.meta["transform"], s.meta["band_ticks"]) == ("bid", "raw", "8")
    assert np.all(s.liq == np.round(s.liq))


@pytest.fixture(scope="module")
def two_state(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    out = d / "two.csv"
    assert main(["simulate", os.path.join(DATA, "two_state.spec"), "-o", str(out),
                 "--states", str(d / "two.states")]) == 0
    return d, out


def test_simulate_writes_states(two_state):
    d, out = two_state
    s = read_series(out)
    assert len(s.liq) == 30000 and set(np.unique(s.states)) == {1, 2}
    assert np.all(np.diff(s.ts_ns) == 2_500_000)
    states = np.loadtxt(d / "two.states", delimiter=",", comments="#", dtype=np.int64)
    assert states[:, 1].tolist() == s.states.tolist()


def test_simulate_is_deterministic(two_state, tmp_path):
    _, out = two_state
    again = tmp_path / "again.csv"
    assert main(["simulate", os.path.join(DATA, "two_state.spec"), "-o", str(again)]) == 0
    assert read(again) == read(out)
    assert main(["simulate", os.path.join(DATA, "two_state.spec"), "-o", str(again),
                 "--seed", "5"]) == 0
    assert read(again) != read(out)


def test_simulate_noiseless_spec(tmp_path):
    out = tmp_path / "flat.csv"
    assert main(["simulate", os.path.join(DATA, "flat.spec"), "-o", str(out)]) == 0
    s = read_series(out)
    assert np.all(s.liq == 4.5) and np.all(s.liq_lag == 4.5)


def test_fit_recovers_generator(two_state, tmp_path, capsys):
    _, series = two_state
    model = tmp_path / "m.model"
    assert main(["fit", str(series), "--k", "2", "--restarts", "2", "-o", str(model)]) == 0
    p, extra = load_model(model)
    truth = canonicalize(SwitchingParams([0.05, -0.4], [0.95, 0.3], [0.2, 0.8], [0.05, 0.5],
                                         [[0.97, 0.03], [0.05, 0.95]], [0.5, 0.5]))
    for name in ("alpha", "beta_lag", "beta_dbam"):
        np.testing.assert_allclose(getattr(p, name), getattr(truth, name), atol=0.05)
    np.testing.assert_allclose(p.sigma, truth.sigma, atol=0.02)
    assert extra["meta.transform"] == "simulated"
    assert extra["fit.converged"] == "1"
    assert "fit.restart.1" in extra
    out = capsys.readouterr().out
    assert out.splitlines()[1].split()[0] == "alpha_1"
    assert "loglik:" in out


def test_fit_same_seed_same_bytes(two_state, tmp_path):
    _, series = two_state
    a, b = tmp_path / "a.model", tmp_path / "b.model"
    args = ["--k", "2", "--restarts", "3", "--seed", "11", "--max-iter", "40"]
    main(["fit", str(series), *args, "-o", str(a)])
    main(["fit", str(series), *args, "-o", str(b)])
    assert read(a) == read(b)


def test_fit_k1_prints_ols(two_state, tmp_path, capsys):
    _, series = two_state
    assert main(["fit", str(series), "--k", "1", "-o", str(tmp_path / "k1.model")]) == 0
    printed = capsys.readouterr().out
    s = read_series(series)
    coef, sig = ols(RegressionData(s.liq, s.liq_lag, s.dbam))
    want = coefficient_table([("K=1", SwitchingParams.from_regressions(
        [coef[0]], [coef[1]], [coef[2]], [sig]))])
    assert printed.startswith(want + "\n")


def test_fit_no_convergence_exit_code(two_state, tmp_path):
    _, series = two_state
    model = tmp_path / "m.model"
    assert main(["fit", str(series), "--k", "2", "--restarts", "1", "--max-iter", "2",
                 "-o", str(model)]) == 3
    assert model.exists()


def test_fit_starvation_exit_code(tmp_path, capsys):
    # 200 points of white noise cannot feed four states in any restart
    y = np.random.default_rng(0).normal(size=200)
    rows = zip(range(200), y.tolist(), [0.0] + y[:-1].tolist(), [0.0] * 200)
    path = tmp_path / "noise.csv"
    with open(path, "w") as fh:
        write_series(rows, fh)
    assert main(["fit", str(path), "--k", "4", "--restarts", "2", "-o", str(tmp_path / "m")]) == 4
    assert "effective weight" in capsys.readouterr().err


# --- detect ----------------------------------------------------------------

SIGNAL_MODEL = SwitchingParams.from_regressions([0.0, 0.0], [1.0, 1.0], [0.0, 0.0], [0.05, 1.0],
                                                stay=0.95)


def bursty_series(path, n_bursts, span_ns, gap=10, seed=0):
    rng = np.random.default_rng(seed)
    n = n_bursts * gap + gap
    steps = rng.normal(0, 0.02, n)
    steps[gap::gap][:n_bursts] = 3.0
    y = np.cumsum(steps)
    lag = np.concatenate([[0.0], y[:-1]])
    ts = (np.arange(n, dtype=np.int64) * span_ns) // (n - 1)
    with open(path, "w") as fh:
        write_series(zip(ts.tolist(), y.tolist(), lag.tolist(), [0.0] * n), fh,
                     {"transform": "raw", "series_side": "bid"})
    return ts, RegressionData(y, lag, np.zeros(n))


def test_detect_scripted_stream(tmp_path, capsys):
    model = tmp_path / "sig.model"
    save_model(model, SIGNAL_MODEL)
    ts, d = bursty_series(tmp_path / "s.csv", 40, 60 * 10**9)
    events, rep_json = tmp_path / "ev.csv", tmp_path / "rep.json"
    assert main(["detect", str(tmp_path / "s.csv"), str(model), "--events", str(events),
                 "--report-json", str(rep_json), "--report", str(tmp_path / "rep.txt")]) == 0
    rep = SignalReport.from_json(rep_json.read_text())
    assert rep == batch_signal(SIGNAL_MODEL, d, ts, SignalConfig())
    assert rep.fires == 40
    rows = [ln.split(",") for ln in events.read_text().splitlines() if not ln.startswith("#")]
    probs = [float(r[1]) for r in rows]
    assert sum(int(r[2]) for r in rows) == count_rising_edges(probs, 0.2) == 40
    out = capsys.readouterr().out
    assert "fires: 40" in out and "duration_raw:" in out


def test_detect_threshold_never_reached(tmp_path, capsys):
    model = tmp_path / "sig.model"
    save_model(model, SIGNAL_MODEL)
    _, d = bursty_series(tmp_path / "s.csv", 0, 10**9, gap=300)
    rep_json = tmp_path / "rep.json"
    from liqswitch.regime import hamilton_filter
    assert hamilton_filter(SIGNAL_MODEL, d).filtered[:, 1].max() < 0.999
    assert main(["detect", str(tmp_path / "s.csv"), str(model), "--threshold", "0.999",
                 "--report-json", str(rep_json)]) == 0
    rep = SignalReport.from_json(rep_json.read_text())
    assert rep.fires == 0 and rep.duration_raw_pct == 0 and rep.duration_merged_pct == 0


def test_detect_636_per_second_prints_0636(tmp_path, capsys):
    model = tmp_path / "sig.model"
    save_model(model, SIGNAL_MODEL)
    bursty_series(tmp_path / "s.csv", 636, 1000 * 10**9)
    assert main(["detect", str(tmp_path / "s.csv"), str(model)]) == 0
    out = capsys.readouterr().out
    assert "fires: 636" in out
    assert "duration_raw: 0.636%" in out


def test_detect_bad_state_index(tmp_path, capsys):
    model = tmp_path / "sig.model"
    save_model(model, SIGNAL_MODEL)
    bursty_series(tmp_path / "s.csv", 3, 10**9)
    assert main(["detect", str(tmp_path / "s.csv"), str(model), "--state-index", "3"]) == 2


def test_report_table(tmp_path, capsys):
    model = tmp_path / "sig.model"
    save_model(model, SIGNAL_MODEL)
    bursty_series(tmp_path / "s.csv", 40, 60 * 10**9)
    rep = tmp_path / "rep.json"
    main(["detect", str(tmp_path / "s.csv"), str(model), "--report-json", str(rep)])
    capsys.readouterr()
    assert main(["report", str(model), str(model), "--signal", str(rep),
                 "--signal", str(rep)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ["Coefficient", "sig", "sig"]
    assert lines[-1].startswith("Sig. Dur. merged")
    assert any(ln.startswith("Sig. Dur. ") and ln.split()[-1].endswith("%") for ln in lines)


def test_console_script_version():
    exe = shutil.which("liqswitch")
    cmd = [exe] if exe else [sys.executable, "-m", "liqswitch.cli"]
    out = subprocess.run(cmd + ["--version"], capture_output=True, text=True, check=True)
    assert out.stdout.startswith("liqswitch ")
