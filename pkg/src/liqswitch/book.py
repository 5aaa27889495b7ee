"""Ten-level order book and market-time liquidity series.

The ladder is level-relative, as in aggregated depth feeds: ``New`` inserts at
a level and pushes deeper levels down (level 11 falls off), ``Change``
replaces the quantity at a level, ``Delete`` removes a level and pulls deeper
levels up.  Trades never touch the ladder.

Liquidity on a side is the quantity resting within ``band_ticks`` of the
bid/ask midpoint.  The midpoint is kept in half-ticks so all comparisons are
exact integer arithmetic.
"""

from __future__ import annotations

import enum
import math
from typing import IO, Iterable, Iterator, List, NamedTuple, Optional

import numpy as np

from .feed import MAX_LEVEL, Action, Kind, MarketMessage, Side

DEFAULT_BAND_TICKS = 4
POINTS_PER_HALFTICK = 0.125


class BookError(ValueError):
    pass


class MissingLevel(BookError):
    pass


class LevelOrderError(BookError):
    """Update would break strict price ordering within a side."""


class CrossedBookError(BookError):
    pass


class EmptySide(BookError):
    pass


class TransformUnavailable(ValueError):
    pass


class Transform(str, enum.Enum):
    RAW = "raw"
    LOG1P = "log1p"
    ZSCORE = "zscore"


class PriceLevel(NamedTuple):
    price_ticks: int
    qty: int


class OrderBook:
    """Mutable per-side price/quantity ladders.

    Bids are kept strictly descending and asks strictly ascending, each as a
    pair of parallel lists (prices, quantities) of length at most 10.

    With ``strict=True`` an update that would cross the book raises
    :class:`CrossedBookError` and leaves the book untouched; otherwise it is
    applied and :attr:`crossed` is set.
    """

    __slots__ = ("bid_px", "bid_qty", "ask_px", "ask_qty", "ts_ns", "strict", "crossed")

    def __init__(self, strict: bool = True):
        self.bid_px: List[int] = []
        self.bid_qty: List[int] = []
        self.ask_px: List[int] = []
        self.ask_qty: List[int] = []
        self.ts_ns = 0
        self.strict = strict
        self.crossed = False

    @property
    def bids(self) -> List[PriceLevel]:
        return [PriceLevel(p, q) for p, q in zip(self.bid_px, self.bid_qty)]

    @property
    def asks(self) -> List[PriceLevel]:
        return [PriceLevel(p, q) for p, q in zip(self.ask_px, self.ask_qty)]

    def copy(self) -> "OrderBook":
        other = OrderBook(self.strict)
        other.bid_px = self.bid_px[:]
        other.bid_qty = self.bid_qty[:]
        other.ask_px = self.ask_px[:]
        other.ask_qty = self.ask_qty[:]
        other.ts_ns = self.ts_ns
        other.crossed = self.crossed
        return other

    def snapshot(self) -> tuple:
        return (tuple(self.bid_px), tuple(self.bid_qty),
                tuple(self.ask_px), tuple(self.ask_qty))

    def apply(self, msg: MarketMessage) -> bool:
        """Apply one message in place; return True iff the ladder changed."""
        self.ts_ns = msg.ts_ns
        if msg.kind is Kind.TRADE:
            return False
        if msg.side is Side.BID:
            px, qty, other, desc = self.bid_px, self.bid_qty, self.ask_px, True
        else:
            px, qty, other, desc = self.ask_px, self.ask_qty, self.bid_px, False
        level = msg.level
        i = level - 1
        n = len(px)
        action = msg.action
        price = msg.price_ticks

        if action is Action.NEW:
            if i > n:
                raise MissingLevel(f"seq {msg.seq}: New at level {level} but side has {n} levels")
            if desc:
                ok = (i == 0 or px[i - 1] > price) and (i == n or price > px[i])
            else:
                ok = (i == 0 or px[i - 1] < price) and (i == n or price < px[i])
            if not ok:
                raise LevelOrderError(f"seq {msg.seq}: price {price} out of order at level {level}")
            if i == 0 and other and self.strict:
                if (price >= other[0]) if desc else (price <= other[0]):
                    raise CrossedBookError(
                        f"seq {msg.seq}: {msg.side.name} {price} crosses {other[0]}")
            px.insert(i, price)
            qty.insert(i, msg.qty)
            if n == MAX_LEVEL:
                px.pop()
                qty.pop()
            if i == 0 and not self.strict:
                self._update_crossed()
            return True

        if i >= n:
            raise MissingLevel(f"seq {msg.seq}: {action.name} at empty level {level}")
        if px[i] != price:
            raise LevelOrderError(
                f"seq {msg.seq}: {action.name} price {price} != level {level} price {px[i]}")
        if action is Action.CHANGE:
            if qty[i] == msg.qty:
                return False
            qty[i] = msg.qty
            return True
        del px[i]
        del qty[i]
        if i == 0 and not self.strict:
            self._update_crossed()
        return True

    def _update_crossed(self) -> None:
        self.crossed = bool(self.bid_px and self.ask_px and self.bid_px[0] >= self.ask_px[0])

    def midpoint_halfticks(self) -> int:
        if not self.bid_px or not self.ask_px:
            raise EmptySide("midpoint needs both sides")
        return self.bid_px[0] + self.ask_px[0]

    def band_liquidity(self, side: Side, band_ticks: int = DEFAULT_BAND_TICKS) -> int:
        """Contracts on ``side`` priced within ``band_ticks`` of the midpoint."""
        if band_ticks < 1:
            raise ValueError("band_ticks must be >= 1")
        mid = self.midpoint_halfticks()
        total = 0
        if side is Side.BID:
            edge = mid - 2 * band_ticks
            for p, q in zip(self.bid_px, self.bid_qty):
                if 2 * p < edge:
                    break
                total += q
        else:
            edge = mid + 2 * band_ticks
            for p, q in zip(self.ask_px, self.ask_qty):
                if 2 * p > edge:
                    break
                total += q
        return total

    def check_invariants(self) -> None:
        """Raise BookError if a ladder invariant is violated."""
        for name, px, qty, sign in (("bid", self.bid_px, self.bid_qty, -1),
                                    ("ask", self.ask_px, self.ask_qty, 1)):
            if len(px) != len(qty):
                raise BookError(f"{name} ladder lists out of sync")
            if len(px) > MAX_LEVEL:
                raise BookError(f"{name} side deeper than {MAX_LEVEL}")
            for a, b in zip(px, px[1:]):
                if (b - a) * sign <= 0:
                    raise BookError(f"{name} prices not strictly ordered: {px}")
            if any(q <= 0 for q in qty):
                raise BookError(f"{name} has non-positive quantity: {qty}")
        if not self.crossed and self.bid_px and self.ask_px and self.bid_px[0] >= self.ask_px[0]:
            raise BookError(f"crossed book: bid {self.bid_px[0]} >= ask {self.ask_px[0]}")


def apply_message(book: OrderBook, msg: MarketMessage):
    """Functional-style wrapper: returns ``(book, changed)``."""
    changed = book.apply(msg)
    return book, changed


def midpoint_halfticks(book: OrderBook) -> int:
    return book.midpoint_halfticks()


def band_liquidity(book: OrderBook, side: Side, band_ticks: int = DEFAULT_BAND_TICKS) -> int:
    return book.band_liquidity(side, band_ticks)


class LiquidityObservation(NamedTuple):
    ts_ns: int
    side: Side
    liq: float
    liq_lag: float
    dbam: float
    crossed: bool = False


def iter_series(messages: Iterable[MarketMessage], side: Side,
                transform: Transform = Transform.LOG1P,
                band_ticks: int = DEFAULT_BAND_TICKS,
                book: Optional[OrderBook] = None,
                strict: bool = True) -> Iterator[LiquidityObservation]:
    """Streaming extraction: one observation per ladder change that moves the
    side's band liquidity or the midpoint.

    The first such event only seeds the lag and is not emitted.
    """
    side = Side(side)
    transform = Transform(transform)
    if transform is Transform.ZSCORE:
        raise TransformUnavailable("zscore needs two passes; use extract_series")
    if band_ticks < 1:
        raise ValueError("band_ticks must be >= 1")
    f = math.log1p if transform is Transform.LOG1P else float
    if book is None:
        book = OrderBook(strict=strict)
    apply = book.apply
    bid_px, bid_qty, ask_px, ask_qty = book.bid_px, book.bid_qty, book.ask_px, book.ask_qty
    is_bid = side is Side.BID
    two_band = 2 * band_ticks
    prev_liq = prev_mid = None
    for msg in messages:
        if not apply(msg):
            continue
        if not bid_px or not ask_px:
            continue
        mid = bid_px[0] + ask_px[0]
        liq = 0
        if is_bid:
            edge = mid - two_band
            for p, q in zip(bid_px, bid_qty):
                if 2 * p < edge:
                    break
                liq += q
        else:
            edge = mid + two_band
            for p, q in zip(ask_px, ask_qty):
                if 2 * p > edge:
                    break
                liq += q
        if prev_mid is None:
            prev_liq, prev_mid = liq, mid
            continue
        if liq == prev_liq and mid == prev_mid:
            continue
        yield LiquidityObservation(msg.ts_ns, side, f(liq), f(prev_liq),
                                   (mid - prev_mid) * POINTS_PER_HALFTICK, book.crossed)
        prev_liq, prev_mid = liq, mid


def extract_series(messages: Iterable[MarketMessage], side: Side,
                   transform: Transform = Transform.LOG1P,
                   band_ticks: int = DEFAULT_BAND_TICKS,
                   strict: bool = True) -> List[LiquidityObservation]:
    """Batch extraction; supports the two-pass ``zscore`` transform."""
    transform = Transform(transform)
    if transform is not Transform.ZSCORE:
        return list(iter_series(messages, side, transform, band_ticks, strict=strict))
    raw = list(iter_series(messages, side, Transform.RAW, band_ticks, strict=strict))
    if not raw:
        return raw
    values = np.array([o.liq for o in raw])
    mean = float(values.mean())
    scale = float(values.std()) or 1.0
    return [o._replace(liq=(o.liq - mean) / scale, liq_lag=(o.liq_lag - mean) / scale)
            for o in raw]


SERIES_COLUMNS = ("ts_ns", "liq", "liq_lag", "dbam")


class SeriesFile(NamedTuple):
    meta: dict
    ts_ns: np.ndarray
    liq: np.ndarray
    liq_lag: np.ndarray
    dbam: np.ndarray
    states: Optional[np.ndarray] = None


def write_series(observations, out: IO[str], meta: Optional[dict] = None,
                 states: Optional[Iterable[int]] = None) -> int:
    """Write ``ts_ns,liq,liq_lag,dbam[,state]`` rows under a ``#`` header.

    ``observations`` yields objects with ``ts_ns, liq, liq_lag, dbam``
    attributes or plain 4-tuples.
    """
    for key, value in (meta or {}).items():
        out.write(f"# {key}={value}\n")
    cols = SERIES_COLUMNS + (("state",) if states is not None else ())
    out.write("# columns=" + ",".join(cols) + "\n")
    n = 0
    state_iter = iter(states) if states is not None else None
    for obs in observations:
        if hasattr(obs, "liq_lag"):
            ts, liq, lag, dbam = obs.ts_ns, obs.liq, obs.liq_lag, obs.dbam
        else:
            ts, liq, lag, dbam = obs[:4]
        row = f"{int(ts)},{float(liq)!r},{float(lag)!r},{float(dbam)!r}"
        if state_iter is not None:
            row += f",{int(next(state_iter))}"
        out.write(row + "\n")
        n += 1
    return n


def read_series(path_or_file) -> SeriesFile:
    if hasattr(path_or_file, "read"):
        lines = path_or_file.read().splitlines()
    else:
        with open(path_or_file, "r", encoding="ascii") as fh:
            lines = fh.read().splitlines()
    meta = {}
    rows = []
    for line in lines:
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        rows.append(line.split(","))
    ncol = len(rows[0]) if rows else 4
    if any(len(r) != ncol for r in rows) or ncol not in (4, 5):
        raise ValueError("series rows must all have 4 or 5 columns")
    ts = np.array([int(r[0]) for r in rows], dtype=np.int64)
    vals = np.array([[float(x) for x in r[1:4]] for r in rows], dtype=float).reshape(-1, 3)
    states = np.array([int(r[4]) for r in rows], dtype=np.int64) if ncol == 5 else None
    return SeriesFile(meta, ts, vals[:, 0].copy(), vals[:, 1].copy(), vals[:, 2].copy(), states)
