"""Normalized market-message feed.

Each record is one line of comma-delimited text::

    seq,ts_ns,side,kind,action,price_ticks,qty,level,aggressor

``side`` is ``B``/``A``, ``kind`` is ``U`` (book update) or ``T`` (trade),
``action`` is ``N``/``C``/``D`` (empty for trades), ``level`` is 1..10
(empty for trades) and ``aggressor`` is ``B``/``S`` (empty for updates; the
trailing empty column may be omitted).  Lines starting with ``#`` are
headers/comments.  Prices are integer ticks (1 tick = 0.25 index points).

A fixed-width little-endian binary twin of the same record is provided by
:func:`pack_message` / :func:`iter_binary`.
"""

from __future__ import annotations

import enum
import io
import struct
from typing import IO, Iterable, Iterator, NamedTuple, Optional, Union

MAX_LEVEL = 10
TICKS_PER_POINT = 4


class Side(str, enum.Enum):
    BID = "B"
    ASK = "A"


class Kind(str, enum.Enum):
    BOOK_UPDATE = "U"
    TRADE = "T"


class Action(str, enum.Enum):
    NEW = "N"
    CHANGE = "C"
    DELETE = "D"


class Aggressor(str, enum.Enum):
    BUY = "B"
    SELL = "S"
    NONE = ""


class FeedError(ValueError):
    """Base class for feed parsing and ordering errors."""


class MalformedRecord(FeedError):
    def __init__(self, message: str, field: str = "", lineno: Optional[int] = None):
        self.field = field
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(f"{where}{message}")


class DomainError(FeedError):
    def __init__(self, message: str, field: str = "", lineno: Optional[int] = None):
        self.field = field
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(f"{where}{field}: {message}")


class TimestampRegression(FeedError):
    def __init__(self, seq: int, ts_prev: int, ts_now: int):
        self.seq = seq
        self.ts_prev = ts_prev
        self.ts_now = ts_now
        super().__init__(f"seq {seq}: timestamp went backwards ({ts_prev} -> {ts_now})")


class MarketMessage(NamedTuple):
    """One normalized feed event. Immutable."""

    seq: int
    ts_ns: int
    kind: Kind
    side: Side
    price_ticks: int
    qty: int
    action: Optional[Action] = None
    level: Optional[int] = None
    aggressor: Aggressor = Aggressor.NONE

    @property
    def is_trade(self) -> bool:
        return self.kind is Kind.TRADE


def book_update(seq, ts_ns, side, action, price_ticks, qty, level) -> MarketMessage:
    return MarketMessage(seq, ts_ns, Kind.BOOK_UPDATE, Side(side), price_ticks, qty,
                         Action(action), level, Aggressor.NONE)


def trade(seq, ts_ns, side, price_ticks, qty, aggressor) -> MarketMessage:
    return MarketMessage(seq, ts_ns, Kind.TRADE, Side(side), price_ticks, qty,
                         None, None, Aggressor(aggressor))


# Plain dict lookups; Enum.__call__ is too slow on the hot path.
_SIDES = {m.value: m for m in Side}
_KINDS = {m.value: m for m in Kind}
_ACTIONS = {m.value: m for m in Action}
_AGGRESSORS = {m.value: m for m in Aggressor}

_UPDATE = Kind.BOOK_UPDATE
_TRADE = Kind.TRADE
_DELETE = Action.DELETE


def _int(text: str, field: str, lineno) -> int:
    try:
        return int(text)
    except ValueError:
        raise MalformedRecord(f"{field}: not an integer: {text!r}", field, lineno) from None


def parse_line(line: str, lineno: Optional[int] = None) -> MarketMessage:
    """Parse and validate one text record."""
    parts = line.rstrip("\r\n").split(",")
    n = len(parts)
    if n == 8:
        parts.append("")
    elif n != 9:
        raise MalformedRecord(f"expected 8 or 9 fields, got {n}", "record", lineno)
    s_seq, s_ts, s_side, s_kind, s_action, s_price, s_qty, s_level, s_aggr = parts

    seq = _int(s_seq, "seq", lineno)
    ts_ns = _int(s_ts, "ts_ns", lineno)
    price = _int(s_price, "price_ticks", lineno)
    qty = _int(s_qty, "qty", lineno)

    side = _SIDES.get(s_side)
    if side is None:
        raise MalformedRecord(f"side: unknown code {s_side!r}", "side", lineno)
    kind = _KINDS.get(s_kind)
    if kind is None:
        raise MalformedRecord(f"kind: unknown code {s_kind!r}", "kind", lineno)
    if price <= 0:
        raise DomainError(f"must be positive, got {price}", "price_ticks", lineno)
    if qty < 0:
        raise DomainError(f"must be non-negative, got {qty}", "qty", lineno)

    if kind is _UPDATE:
        action = _ACTIONS.get(s_action)
        if action is None:
            raise MalformedRecord(f"action: unknown code {s_action!r}", "action", lineno)
        if not s_level:
            raise MalformedRecord("level: missing for book update", "level", lineno)
        level = _int(s_level, "level", lineno)
        if level < 1 or level > MAX_LEVEL:
            raise DomainError(f"must be in 1..{MAX_LEVEL}, got {level}", "level", lineno)
        if qty == 0 and action is not _DELETE:
            raise DomainError(f"must be positive for {action.name}", "qty", lineno)
        if s_aggr:
            raise MalformedRecord("aggressor: must be empty for book update", "aggressor", lineno)
        return MarketMessage(seq, ts_ns, kind, side, price, qty, action, level, Aggressor.NONE)

    if s_action:
        raise MalformedRecord("action: must be empty for trade", "action", lineno)
    if s_level:
        raise MalformedRecord("level: must be empty for trade", "level", lineno)
    aggressor = _AGGRESSORS.get(s_aggr)
    if aggressor is None or aggressor is Aggressor.NONE:
        raise DomainError(f"trade needs B or S, got {s_aggr!r}", "aggressor", lineno)
    return MarketMessage(seq, ts_ns, kind, side, price, qty, None, None, aggressor)


def format_line(msg: MarketMessage) -> str:
    """Inverse of :func:`parse_line` (no trailing newline)."""
    if msg.kind is Kind.BOOK_UPDATE:
        return (f"{msg.seq},{msg.ts_ns},{msg.side.value},U,{msg.action.value},"
                f"{msg.price_ticks},{msg.qty},{msg.level}")
    return (f"{msg.seq},{msg.ts_ns},{msg.side.value},T,,"
            f"{msg.price_ticks},{msg.qty},,{msg.aggressor.value}")


def write_messages(messages: Iterable[MarketMessage], out: IO[str], header: bool = True) -> int:
    n = 0
    if header:
        out.write("# seq,ts_ns,side,kind,action,price_ticks,qty,level,aggressor\n")
    for msg in messages:
        out.write(format_line(msg))
        out.write("\n")
        n += 1
    return n


class FeedReader:
    """Iterate validated messages from a line source.

    In strict mode (the default) the first malformed line or timestamp
    regression raises.  In lenient mode such lines are skipped and counted
    in :attr:`skipped`.
    """

    def __init__(self, source: Union[IO, Iterable], strict: bool = True):
        self.source = source
        self.strict = strict
        self.count = 0
        self.skipped = 0
        self.lines = 0

    def __iter__(self) -> Iterator[MarketMessage]:
        strict = self.strict
        last_ts = None
        for lineno, raw in enumerate(self.source, 1):
            line = raw.decode("ascii") if isinstance(raw, (bytes, bytearray)) else raw
            if not line or line[0] == "#" or not line.strip():
                continue
            self.lines += 1
            try:
                msg = parse_line(line, lineno)
                if last_ts is not None and msg.ts_ns < last_ts:
                    raise TimestampRegression(msg.seq, last_ts, msg.ts_ns)
            except FeedError:
                if strict:
                    raise
                self.skipped += 1
                continue
            last_ts = msg.ts_ns
            self.count += 1
            yield msg


def stream_messages(source, strict: bool = True) -> FeedReader:
    """Return an iterable reader over ``source`` (file object, bytes stream or
    iterable of lines). Skips are reported on the returned reader."""
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    elif isinstance(source, str):
        source = io.StringIO(source)
    return FeedReader(source, strict=strict)


def read_feed(path, strict: bool = True) -> list:
    with open(path, "r", encoding="ascii") as fh:
        return list(stream_messages(fh, strict=strict))


# Binary twin: seq u64, ts i64, side, kind, action (ASCII byte or 0),
# price i32, qty u32, level u8 (0 for trades), aggressor (ASCII byte or 0).
_BIN = struct.Struct("<QqccciIBc")
RECORD_SIZE = _BIN.size


def pack_message(msg: MarketMessage) -> bytes:
    action = msg.action.value.encode() if msg.action is not None else b"\0"
    aggr = msg.aggressor.value.encode() if msg.aggressor.value else b"\0"
    return _BIN.pack(msg.seq, msg.ts_ns, msg.side.value.encode(), msg.kind.value.encode(),
                     action, msg.price_ticks, msg.qty, msg.level or 0, aggr)


def unpack_message(buf: bytes) -> MarketMessage:
    seq, ts, side, kind, action, price, qty, level, aggr = _BIN.unpack(buf)
    dec = lambda b: "" if b == b"\0" else b.decode("ascii")
    line = f"{seq},{ts},{dec(side)},{dec(kind)},{dec(action)},{price},{qty},{level or ''},{dec(aggr)}"
    return parse_line(line)


def iter_binary(stream: IO[bytes]) -> Iterator[MarketMessage]:
    while True:
        buf = stream.read(RECORD_SIZE)
        if not buf:
            return
        if len(buf) != RECORD_SIZE:
            raise MalformedRecord(f"truncated binary record ({len(buf)} bytes)", "record")
        yield unpack_message(buf)
