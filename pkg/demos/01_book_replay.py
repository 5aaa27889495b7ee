"""
Replaying a feed into band liquidity
====================================

A synthetic E-mini style feed goes through the 10-deep book and comes out
as the per-side liquidity series the regime model is fitted on.
"""

import io
import time

import numpy as np

from liqswitch.book import OrderBook, Transform, extract_series
from liqswitch.feed import Side, stream_messages, write_messages
from liqswitch.synth import random_feed

# 200k messages, written out and parsed back like a real capture file
buf = io.StringIO()
write_messages(random_feed(200_000, seed=3), buf)
raw = buf.getvalue().encode("ascii")
print(f"feed: {len(raw) / 1e6:.1f} MB of text")
print(raw.decode().splitlines()[1])

t0 = time.perf_counter()
messages = list(stream_messages(raw))
print(f"parsed {len(messages)} messages in {time.perf_counter() - t0:.2f}s")

# peek at the book part way through
book = OrderBook()
for m in messages[:5000]:
    book.apply(m)
print("\nbest 3 bids:", book.bids[:3])
print("best 3 asks:", book.asks[:3])
print("midpoint (half ticks):", book.midpoint_halfticks())
print("bid liquidity within one point:", book.band_liquidity(Side.BID))

# the series only advances when band liquidity or the midpoint changes
for side in (Side.BID, Side.ASK):
    obs = extract_series(messages, side, Transform.RAW)
    liq = np.array([o.liq for o in obs])
    moves = np.array([o.dbam for o in obs])
    print(f"\n{side.name.lower()}: {len(obs)} observations "
          f"({len(obs) / len(messages):.1%} of messages)")
    print(f"  liquidity mean {liq.mean():.0f}, min {liq.min():.0f}, max {liq.max():.0f}")
    # the generator's spread wanders much more than a real ES book
    print(f"  midpoint moved on {np.mean(moves != 0):.1%} of observations, "
          f"largest jump {np.abs(moves).max()} points, all multiples of 0.125: "
          f"{bool(np.all(moves * 8 == np.round(moves * 8)))}")

# log1p is what the fits below use
logs = extract_series(messages[:20_000], Side.BID, "log1p")
print("\nfirst log1p rows:")
for o in logs[:4]:
    print(f"  {o.ts_ns}  liq={o.liq:.4f}  lag={o.liq_lag:.4f}  dbam={o.dbam:+.3f}")
