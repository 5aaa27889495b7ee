"""Command-line entry point.

Commands: ``extract``, ``fit``, ``detect``, ``simulate``, ``report``.
Settings come from built-in defaults, then an optional ``--config`` file of
``key=value`` lines, then command-line flags.

Exit codes: 0 success, 1 unexpected failure, 2 bad input (feed, book,
config, empty series), 3 EM did not converge (model still written),
4 state starvation, 5 numerical degeneracy or empty signal stream.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import os
import sys
import warnings
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .book import BookError, Transform, extract_series, read_series, write_series
from .feed import FeedError, Side, read_feed
from .regime import (FitConfig, NoConvergence, NumericalDegeneracy, RegimeError,
                     RegressionData, StateStarvation, SwitchingParams, coefficient_rows,
                     coefficient_table, render_table,
                     diagonal_transition, fit, load_model, save_model)
from .signal import Detector, EmptyStream, SignalConfig, SignalReport, run_detector
from .synth import DbamModel, SimSpec, simulate

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_CONVERGENCE = 3
EXIT_STARVATION = 4
EXIT_NUMERIC = 5


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class RunConfig:
    side: str = "both"
    transform: str = "log1p"
    band_ticks: int = 4
    k: int = 4
    max_iter: int = 500
    tol: float = 1e-8
    restarts: int = 8
    seed: int = 0
    sigma_floor: float = 1e-6
    threshold: float = 0.2
    delay_ms: float = 10.0
    state_index: Optional[int] = None
    strict: bool = True

    def validate(self) -> "RunConfig":
        if self.side not in ("bid", "ask", "both"):
            raise ConfigError(f"side must be bid, ask or both, got {self.side!r}")
        try:
            Transform(self.transform)
        except ValueError:
            raise ConfigError(f"unknown transform {self.transform!r}") from None
        if self.band_ticks < 1:
            raise ConfigError("band_ticks must be >= 1")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        try:
            self.fit_config()
            self.signal_config()
        except (ValueError, RegimeError) as exc:
            raise ConfigError(str(exc)) from None
        return self

    def sides(self):
        return {"bid": [Side.BID], "ask": [Side.ASK], "both": [Side.BID, Side.ASK]}[self.side]

    def fit_config(self) -> FitConfig:
        return FitConfig(max_iter=self.max_iter, tol=self.tol, restarts=self.restarts,
                         seed=self.seed, sigma_floor=self.sigma_floor)

    def signal_config(self) -> SignalConfig:
        return SignalConfig(self.state_index, self.threshold, int(round(self.delay_ms * 1e6)))


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, text):
    if not isinstance(text, str):
        return text
    default = getattr(RunConfig(), name)
    if name == "state_index":
        return None if text.lower() in ("", "none") else int(text)
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: not a boolean: {text!r}")
    try:
        return type(default)(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r}") from None


def read_config_file(path) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key = key.strip().replace("-", "_")
            if key not in _FIELDS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _coerce(key, value.strip())
    return values


def build_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for name in _FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = _coerce(name, v)
    return RunConfig(**values).validate()


def _header(command: str, cfg: RunConfig, **extra) -> dict:
    meta = {"tool": "liqswitch", "version": __version__, "command": command}
    meta.update({k: v for k, v in dataclasses.asdict(cfg).items()})
    meta.update(extra)
    return meta


def _side_path(path: str, side: Side, both: bool) -> str:
    if not both:
        return path
    root, ext = os.path.splitext(path)
    return f"{root}.{side.name.lower()}{ext}"


def _err(msg: str) -> None:
    print(f"liqswitch: {msg}", file=sys.stderr)


# ---------------------------------------------------------------------------
# commands

def cmd_extract(args) -> int:
    cfg = build_config(args)
    messages = read_feed(args.feed, strict=cfg.strict)
    sides = cfg.sides()
    both = len(sides) > 1
    first_ts = messages[0].ts_ns if messages else 0
    last_ts = messages[-1].ts_ns if messages else 0

    def run(side):
        return side, extract_series(messages, side, cfg.transform, cfg.band_ticks, strict=cfg.strict)

    # Per-side pipelines are independent single-writer books over the same
    # immutable message list.
    with concurrent.futures.ThreadPoolExecutor(max_workers=len(sides)) as pool:
        results = list(pool.map(run, sides))
    if all(not obs for _, obs in results):
        _err("no observations")
        return EXIT_INPUT
    for side, obs in results:
        path = _side_path(args.output, side, both)
        meta = _header("extract", cfg, feed=os.path.basename(args.feed), series_side=side.name.lower(),
                       messages=len(messages), feed_first_ts_ns=first_ts, feed_last_ts_ns=last_ts,
                       observations=len(obs))
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            write_series(obs, fh, meta)
        print(f"{side.name.lower()}: {len(obs)} observations -> {path}")
    return EXIT_OK


def _load_data(path):
    series = read_series(path)
    if len(series.liq) < 2:
        raise RegimeError(f"{path}: no observations")
    return series, RegressionData.from_series(series)


def cmd_fit(args) -> int:
    cfg = build_config(args)
    series, data = _load_data(args.series)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoConvergence)
        result = fit(data, cfg.k, cfg.fit_config())
    meta = {
        "series": os.path.basename(args.series),
        "transform": series.meta.get("transform", "unknown"),
        "side": series.meta.get("series_side", series.meta.get("side", "unknown")),
        "band_ticks": series.meta.get("band_ticks", "unknown"),
        "observations": data.T, "seed": cfg.seed, "restarts": cfg.restarts,
        "max_iter": cfg.max_iter, "tol": cfg.tol, "sigma_floor": cfg.sigma_floor,
    }
    save_model(args.output, result.params, meta, result.diagnostics)
    name = f"K={cfg.k}"
    print(coefficient_table([(name, result.params)]))
    print(f"loglik: {result.diagnostics.loglik:.6f}")
    if not result.diagnostics.converged:
        _err(f"EM did not converge in {cfg.max_iter} iterations; best-effort model written")
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = build_config(args)
    series, data = _load_data(args.series)
    params, _ = load_model(args.model)
    det = Detector(params, cfg.signal_config())
    if args.events:
        with open(args.events, "w", encoding="ascii", newline="\n") as fh:
            meta = _header("detect", cfg, series=os.path.basename(args.series),
                           model=os.path.basename(args.model))
            for k, v in meta.items():
                fh.write(f"# {k}={v}\n")
            run_detector(det, series.ts_ns, data, fh)
    else:
        run_detector(det, series.ts_ns, data)
    report = det.report()
    if args.report:
        with open(args.report, "w", encoding="ascii", newline="\n") as fh:
            fh.write(report.to_text())
    if args.report_json:
        with open(args.report_json, "w", encoding="ascii", newline="\n") as fh:
            fh.write(report.to_json())
    sys.stdout.write(report.to_text())
    print(f"duration_raw: {report.duration_raw_pct:.3f}%")
    print(f"duration_merged: {report.duration_merged_pct:.3f}%")
    return EXIT_OK


def _floats(text: str):
    return [float(x) for x in text.replace(",", " ").split()]


SIGMA_FLOOR = 1e-6

SPEC_KEYS = {"alpha", "beta_lag", "beta_dbam", "sigma", "trans", "stay", "init_dist", "T",
             "dbam_model", "p_move", "y0", "seed", "t0_ns", "step_ns"}


def read_sim_spec(path):
    """``key=value`` simulation spec. ``trans`` rows are separated by ``;``."""
    fields = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or key not in SPEC_KEYS:
                raise ConfigError(f"{path}:{lineno}: bad or unknown entry {line!r}")
            fields[key] = value.strip()
    try:
        alpha = _floats(fields["alpha"])
        K = len(alpha)
        trans = ([_floats(r) for r in fields["trans"].split(";")] if "trans" in fields
                 else diagonal_transition(K, float(fields.get("stay", 0.95))))
        init = _floats(fields["init_dist"]) if "init_dist" in fields else None
        sigma = _floats(fields["sigma"])
        # sigma = 0 means a noiseless generator; the attached model gets the floor
        params = SwitchingParams.from_regressions(
            alpha, _floats(fields["beta_lag"]), _floats(fields["beta_dbam"]),
            [s if s > 0 else SIGMA_FLOOR for s in sigma], trans, init)
        spec = SimSpec(params, int(fields["T"]), DbamModel(fields.get("dbam_model", "iid_ticks")),
                       float(fields.get("p_move", 0.1)), float(fields.get("y0", 0.0)),
                       int(fields.get("seed", 0)), noise=sigma if min(sigma) <= 0 else None)
    except KeyError as exc:
        raise ConfigError(f"{path}: missing key {exc.args[0]}") from None
    except (ValueError, RegimeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return spec, int(fields.get("t0_ns", 0)), int(fields.get("step_ns", 1_000_000))


def cmd_simulate(args) -> int:
    spec, t0, step = read_sim_spec(args.spec)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=int(args.seed))
    states, data = simulate(spec)
    ts = t0 + step * np.arange(spec.T, dtype=np.int64)
    p = spec.params
    meta = {"tool": "liqswitch", "version": __version__, "command": "simulate",
            "spec": os.path.basename(args.spec), "K": p.K, "T": spec.T, "seed": spec.seed,
            "dbam_model": spec.dbam_model.value, "p_move": spec.p_move, "y0": spec.y0,
            "transform": "simulated"}
    rows = zip(ts.tolist(), data.y.tolist(), data.y_lag.tolist(), data.dbam.tolist())
    with open(args.output, "w", encoding="ascii", newline="\n") as fh:
        write_series(rows, fh, meta, states=(s + 1 for s in states.tolist()))
    if args.states:
        with open(args.states, "w", encoding="ascii", newline="\n") as fh:
            fh.write("# columns=ts_ns,state\n")
            for t, s in zip(ts.tolist(), states.tolist()):
                fh.write(f"{t},{s + 1}\n")
    print(f"simulated {spec.T} observations -> {args.output}")
    return EXIT_OK


def cmd_report(args) -> int:
    models, extras = [], []
    for path in args.models:
        params, extra = load_model(path)
        models.append((os.path.splitext(os.path.basename(path))[0], params))
        extras.append(extra)
    rows = coefficient_rows(models)
    rows.append(("Log Lik.", [f"{float(e['fit.loglik']):.1f}" if "fit.loglik" in e else ""
                              for e in extras]))
    if args.signal:
        if len(args.signal) != len(models):
            raise ConfigError("give one --signal report per model")
        reps = []
        for path in args.signal:
            with open(path, "r", encoding="ascii") as fh:
                reps.append(SignalReport.from_json(fh.read()))
        rows.append(("Fires/sec", [f"{r.fires_per_sec:.4f}" for r in reps]))
        rows.append(("Sig. Dur.", [f"{r.duration_raw_pct:.3f}%" for r in reps]))
        rows.append(("Sig. Dur. merged", [f"{r.duration_merged_pct:.3f}%" for r in reps]))
    print(render_table(rows))
    return EXIT_OK


# ---------------------------------------------------------------------------

def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--side", choices=["bid", "ask", "both"])
    p.add_argument("--transform", choices=[t.value for t in Transform])
    p.add_argument("--band-ticks", dest="band_ticks", type=int)
    p.add_argument("--k", type=int, help="number of states")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--restarts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--sigma-floor", dest="sigma_floor", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--delay-ms", dest="delay_ms", type=float)
    p.add_argument("--state-index", dest="state_index", type=int)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--strict", dest="strict", action="store_const", const=True)
    g.add_argument("--lenient", dest="strict", action="store_const", const=False)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="liqswitch", description="Order-book liquidity regimes and an order-delay signal.",
        epilog="exit codes: 0 ok, 2 bad input, 3 EM not converged (model written), "
               "4 state starvation, 5 numerical degeneracy or empty signal stream")
    parser.add_argument("--version", action="version", version=f"liqswitch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="feed -> per-side liquidity series")
    p.add_argument("feed")
    p.add_argument("-o", "--output", required=True,
                   help="series path; with --side both, .bid/.ask is inserted before the extension")
    _shared(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fit", help="series -> K-state model file")
    p.add_argument("series")
    p.add_argument("-o", "--output", required=True)
    _shared(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("detect", help="series + model -> events and signal report")
    p.add_argument("series")
    p.add_argument("model")
    p.add_argument("--events")
    p.add_argument("--report")
    p.add_argument("--report-json", dest="report_json")
    _shared(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("simulate", help="simulation spec -> series with states column")
    p.add_argument("spec")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--states")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="coefficient table across model files")
    p.add_argument("models", nargs="+")
    p.add_argument("--signal", action="append", help="signal report JSON, one per model")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except StateStarvation as exc:
        _err(str(exc))
        return EXIT_STARVATION
    except (NumericalDegeneracy, EmptyStream) as exc:
        _err(str(exc))
        return EXIT_NUMERIC
    except (FeedError, BookError, ConfigError, RegimeError, OSError, ValueError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
