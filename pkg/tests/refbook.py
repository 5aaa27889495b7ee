"""Naive reference book built only from the documented text format.

Deliberately slow and independent of ``liqswitch.book``: levels are stored
as a dict ``level -> (price, qty)`` that is rebuilt on every insert/delete,
prices are handled as Fractions of index points.
"""

import csv
import math
from fractions import Fraction

TICK = Fraction(1, 4)


class RefBook:
    def __init__(self):
        self.sides = {"B": {}, "A": {}}

    def ladder(self, side):
        levels = self.sides[side]
        return [levels[k] for k in sorted(levels)]

    def apply(self, row):
        """Return True iff a ladder changed."""
        _, _, side, kind, action, price, qty, level = row[:8]
        if kind == "T":
            return False
        price, qty, level = int(price), int(qty), int(level)
        before = self.ladder(side)
        book = before[:]
        if action == "N":
            book = book[:level - 1] + [(price, qty)] + book[level - 1:]
            book = book[:10]
        elif action == "C":
            book[level - 1] = (price, qty)
        elif action == "D":
            book = book[:level - 1] + book[level:]
        self.sides[side] = {i + 1: lv for i, lv in enumerate(book)}
        return book != before

    def midpoint_points(self):
        bids, asks = self.ladder("B"), self.ladder("A")
        if not bids or not asks:
            return None
        return (bids[0][0] * TICK + asks[0][0] * TICK) / 2

    def band(self, side, band_points=Fraction(1)):
        mid = self.midpoint_points()
        total = 0
        for price, qty in self.ladder(side):
            p = price * TICK
            if (side == "B" and p >= mid - band_points) or (side == "A" and p <= mid + band_points):
                total += qty
        return total


def read_rows(path):
    with open(path, newline="") as fh:
        return [r for r in csv.reader(fh) if r and not r[0].startswith("#")]


def reference_series(rows, side, transform="log1p", band_points=Fraction(1)):
    """List of (ts_ns, liq, liq_lag, dbam) computed the slow way."""
    book = RefBook()
    f = math.log1p if transform == "log1p" else float
    out = []
    prev = None
    for row in rows:
        if not book.apply(row):
            continue
        mid = book.midpoint_points()
        if mid is None:
            continue
        liq = book.band(side, band_points)
        if prev is not None and (liq, mid) == prev:
            continue
        if prev is not None:
            out.append((int(row[1]), f(liq), f(prev[0]), float(mid - prev[1])))
        prev = (liq, mid)
    return out
