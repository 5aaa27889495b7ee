"""Real-time delay signal.

A detector runs the filter forward one observation at a time and fires on
each rising edge of the target state's filtered probability through the
threshold.  Every fire opens a delay window of ``delay_ns``; orders arriving
inside an open window are delayed until it closes.
"""

from __future__ import annotations

import dataclasses
import json
from typing import IO, Iterable, List, NamedTuple, Optional

import numpy as np

from .feed import TimestampRegression
from .regime import OnlineFilter, RegressionData, SwitchingParams, hamilton_filter

NS_PER_SEC = 1_000_000_000


class EmptyStream(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class SignalConfig:
    state_index: Optional[int] = None  # 1-based; None means the last (max-sigma) state
    threshold: float = 0.2
    delay_ns: int = 10_000_000

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.delay_ns <= 0:
            raise ValueError("delay_ns must be positive")
        if self.state_index is not None and self.state_index < 1:
            raise ValueError("state_index is 1-based")

    def resolve_state(self, K: int) -> int:
        j = K if self.state_index is None else self.state_index
        if not 1 <= j <= K:
            raise ValueError(f"state_index {j} outside 1..{K}")
        return j


class Decision(NamedTuple):
    delay: bool
    until_ns: Optional[int] = None

    def __str__(self):
        return f"Delay({self.until_ns})" if self.delay else "Pass"


PASS = Decision(False, None)


def duration_percent(fires_per_sec: float, delay_ns: int) -> float:
    """Share of the day covered when each fire holds orders for ``delay_ns``."""
    if fires_per_sec < 0 or delay_ns < 0:
        raise ValueError("inputs must be non-negative")
    # fires/s * (delay_ns / 1e9) * 100, folded into one division
    return fires_per_sec * delay_ns / 1e7


@dataclasses.dataclass(frozen=True)
class SignalReport:
    fires: int
    fires_per_sec: float
    duration_raw_pct: float
    duration_merged_pct: float
    span_ns: int = 0
    threshold: float = 0.2
    delay_ns: int = 10_000_000
    state_index: int = 0
    observations: int = 0

    def to_text(self) -> str:
        return "".join(f"{k}: {v}\n" for k, v in dataclasses.asdict(self).items())

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SignalReport":
        return cls(**json.loads(text))


class Detector:
    """Online detector; single writer, observations in non-decreasing time."""

    def __init__(self, params: SwitchingParams, config: SignalConfig = SignalConfig()):
        self.params = params
        self.config = config
        self.state_index = config.resolve_state(params.K)
        self.filter = OnlineFilter(params)
        self.above = False
        self.fires = 0
        self.window_end_ns = 0
        self.merged_busy_ns = 0
        self.first_ts_ns: Optional[int] = None
        self.last_ts_ns: Optional[int] = None
        self.observations = 0
        self.last_prob = 0.0
        self.last_fire = False

    @property
    def prob(self) -> Optional[np.ndarray]:
        return self.filter.prob

    def on_observation(self, ts_ns: int, obs) -> Decision:
        """Filter ``obs = (y, y_lag, dbam)`` and update the signal."""
        self._check_time(ts_ns)
        prob = self.filter.update(obs[0], obs[1], obs[2])
        return self.on_probability(ts_ns, float(prob[self.state_index - 1]))

    def on_probability(self, ts_ns: int, p: float) -> Decision:
        """Update the signal from an externally computed probability."""
        self._check_time(ts_ns)
        cfg = self.config
        if self.first_ts_ns is None:
            self.first_ts_ns = ts_ns
        self.last_ts_ns = ts_ns
        self.observations += 1
        now_above = p > cfg.threshold
        fire = now_above and not self.above
        self.above = now_above
        if fire:
            self.fires += 1
            end = ts_ns + cfg.delay_ns
            if ts_ns < self.window_end_ns:
                self.merged_busy_ns += end - self.window_end_ns
            else:
                self.merged_busy_ns += cfg.delay_ns
            self.window_end_ns = end
        self.last_prob = p
        self.last_fire = fire
        if ts_ns < self.window_end_ns:
            return Decision(True, self.window_end_ns)
        return PASS

    def _check_time(self, ts_ns: int) -> None:
        if self.last_ts_ns is not None and ts_ns < self.last_ts_ns:
            raise TimestampRegression(self.observations + 1, self.last_ts_ns, ts_ns)

    def report(self) -> SignalReport:
        if self.observations == 0:
            raise EmptyStream("no observations consumed")
        span = self.last_ts_ns - self.first_ts_ns
        if span <= 0:
            raise EmptyStream("observations span zero wall-clock time")
        fps = self.fires / (span / NS_PER_SEC)
        overhang = max(0, self.window_end_ns - self.last_ts_ns)
        merged = (self.merged_busy_ns - overhang) / span * 100.0
        return SignalReport(self.fires, fps, duration_percent(fps, self.config.delay_ns),
                            merged, span, self.config.threshold, self.config.delay_ns,
                            self.state_index, self.observations)


def count_rising_edges(probs: Iterable[float], threshold: float) -> int:
    """Offline count of upward threshold crossings; the path starts below."""
    above = np.asarray(list(probs), dtype=float) > threshold
    if above.size == 0:
        return 0
    return int(above[0]) + int(np.count_nonzero(above[1:] & ~above[:-1]))


def batch_signal(params: SwitchingParams, data: RegressionData, ts_ns,
                 config: SignalConfig = SignalConfig()) -> SignalReport:
    """Same report as feeding a :class:`Detector`, computed from one batch
    filter pass and an offline edge count."""
    ts = np.asarray(ts_ns, dtype=np.int64)
    j = config.resolve_state(params.K)
    probs = hamilton_filter(params, data).filtered[:, j - 1]
    above = probs > config.threshold
    rising = above.copy()
    rising[1:] &= ~above[:-1]
    fire_ts = ts[rising]
    span = int(ts[-1] - ts[0]) if len(ts) else 0
    if len(ts) == 0 or span <= 0:
        raise EmptyStream("need observations spanning positive time")
    fps = len(fire_ts) / (span / NS_PER_SEC)
    merged = 0
    end = None
    for t in fire_ts.tolist():
        stop = t + config.delay_ns
        merged += stop - end if end is not None and t < end else config.delay_ns
        end = stop
    if end is not None:
        merged -= max(0, end - int(ts[-1]))
    return SignalReport(len(fire_ts), fps, duration_percent(fps, config.delay_ns),
                        merged / span * 100.0, span, config.threshold, config.delay_ns, j, len(ts))


EVENT_COLUMNS = "ts_ns,prob_state,fire,decision,window_end_ns"


def write_event(out: IO[str], ts_ns: int, det: Detector, decision: Decision) -> None:
    out.write(f"{ts_ns},{det.last_prob!r},{int(det.last_fire)},"
              f"{'D' if decision.delay else 'P'},{det.window_end_ns}\n")


def run_detector(det: Detector, ts_ns, data: RegressionData,
                 events: Optional[IO[str]] = None) -> List[Decision]:
    """Feed a whole series through ``det``, optionally writing the event stream."""
    if events is not None:
        events.write(f"# columns={EVENT_COLUMNS}\n")
    decisions = []
    for ts, y, lag, db in zip(np.asarray(ts_ns).tolist(), data.y.tolist(),
                              data.y_lag.tolist(), data.dbam.tolist()):
        dec = det.on_observation(ts, (y, lag, db))
        decisions.append(dec)
        if events is not None:
            write_event(events, ts, det, dec)
    return decisions
