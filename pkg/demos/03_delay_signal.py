"""
The delay signal
================

Run the detector over a simulated day, then check the firing-rate arithmetic
behind the published 0.636% and 10.59% signal durations.
"""

import numpy as np

from liqswitch import published
from liqswitch.signal import Detector, SignalConfig, batch_signal, duration_percent, run_detector
from liqswitch.synth import SimSpec, philox, simulate

params = published.as_params(published.BID_FOUR_STATE["2016-11-09"], stay=0.98)
_, data = simulate(SimSpec(params, T=50_000, seed=11))

# irregular arrival times, about 2 ms apart on average
ts = np.cumsum(philox(11).exponential(2e6, data.T)).astype(np.int64)

det = Detector(params, SignalConfig(threshold=0.2, delay_ns=10_000_000))
decisions = run_detector(det, ts, data)
rep = det.report()
print(rep.to_text())
print(f"orders that would be held back: {np.mean([d.delay for d in decisions]):.1%}")

# the batch pass sees the same stream and must agree exactly
assert batch_signal(params, data, ts, det.config) == rep

# overlapping windows are why the merged duration can be lower than fires x delay.
# Note the fire count is not monotone in the threshold: a high threshold
# splits one long excursion into several short crossings.
for thr in (0.1, 0.2, 0.5, 0.9):
    r = batch_signal(params, data, ts, SignalConfig(threshold=thr))
    print(f"threshold {thr}: {r.fires:5d} fires, raw {r.duration_raw_pct:6.2f}%, "
          f"merged {r.duration_merged_pct:6.2f}%")

print()
for side, fps in published.FIRES_PER_SEC.items():
    print(f"{side}: {fps} fires/s at 10 ms each -> {duration_percent(fps, 10_000_000)}% of the day")
