"""Published coefficient estimates for E-mini S&P 500 futures, Nov 7-11 2016.

Four-state fits per trading day for each side of the book, plus the two- and
three-state Nov 9 fits.  States are listed in the order they were published,
which is not canonical.  Reported values of 0.0000 for sigma are rounding
artifacts; :func:`as_params` floors them.  Transition matrices were never
published, so :func:`as_params` supplies a diagonal-dominant stand-in.
"""

from __future__ import annotations

from typing import Dict, NamedTuple, Optional, Tuple

from .regime import SwitchingParams, diagonal_transition, stationary_distribution


class PublishedFit(NamedTuple):
    alpha: Tuple[float, ...]
    beta_lag: Tuple[float, ...]
    beta_dbam: Tuple[float, ...]
    sigma: Tuple[float, ...]
    loglik: Optional[float] = None
    signal_duration_pct: Optional[float] = None
    book_entries: Optional[int] = None


def as_params(fit: PublishedFit, sigma_floor: float = 1e-6, stay: float = 0.95) -> SwitchingParams:
    K = len(fit.alpha)
    trans = diagonal_transition(K, stay)
    sigma = [max(s, sigma_floor) for s in fit.sigma]
    return SwitchingParams(fit.alpha, fit.beta_lag, fit.beta_dbam, sigma, trans,
                           stationary_distribution(trans))


BOOK_ENTRIES = {"2016-11-07": 2_917_466, "2016-11-08": 3_502_097, "2016-11-09": 9_965_673,
                "2016-11-10": 7_346_604, "2016-11-11": 4_905_882}

DAYS = tuple(BOOK_ENTRIES)


def _columns(alpha, b1, b2, sigma, loglik, sigdur):
    out = {}
    for i, day in enumerate(DAYS):
        out[day] = PublishedFit(tuple(a[i] for a in alpha), tuple(b[i] for b in b1),
                                tuple(b[i] for b in b2), tuple(s[i] for s in sigma),
                                loglik[i], sigdur[i], BOOK_ENTRIES[day])
    return out


# Rows are states 1..4, columns are Nov 7..11.
BID_FOUR_STATE: Dict[str, PublishedFit] = _columns(
    alpha=[(0.0065, 0.0431, 0.0024, -0.0656, -0.0010),
           (-0.1132, -0.1694, -0.0594, -0.4849, -0.4917),
           (0.1121, 0.3509, 0.3796, 0.3917, 0.2975),
           (-0.2210, -0.1783, -0.1626, -0.2966, -0.3563)],
    b1=[(1.0004, 0.8102, 0.9983, 0.9500, 1.0057),
        (0.1741, 0.0168, -0.3211, 0.2004, 0.2565),
        (0.0628, 0.1031, -0.0636, 0.0132, 0.0101),
        (0.6621, 0.6239, 0.9469, 0.4445, 1.1467)],
    b2=[(-0.1579, 0.0754, 0.1319, 0.0174, 0.2716),
        (0.9270, 0.8738, 0.8524, 0.8375, 0.4647),
        (-0.1324, -0.1707, -0.1802, -0.1676, -0.3864),
        (0.1151, 0.0910, 0.0791, -0.0752, -0.2919)],
    sigma=[(0.0221, 0.0912, 0.0077, 0.0109, 0.0219),
           (0.0920, 0.1716, 0.2901, 0.4268, 0.6963),
           (0.1701, 0.0787, 0.2409, 0.0769, 0.1083),
           (0.6386, 0.6873, 0.6580, 0.4252, 0.3709)],
    loglik=(4880164, 117503.2, 16693395, 20395.45, 249944.1),
    sigdur=(0.736, 0.020, 0.636, 0.000, 0.000),
)

ASK_FOUR_STATE: Dict[str, PublishedFit] = _columns(
    alpha=[(0.0000, 0.0000, 0.0000, 0.0000, 0.0000),
           (-0.0007, 0.0008, -0.0055, 0.0011, -0.0051),
           (-1.1325, -1.1374, -1.1325, -0.1314, -1.1329),
           (-0.0042, 0.0052, -0.0048, -0.0060, 0.0015)],
    b1=[(1.0054, 1.0051, 1.0049, 1.0059, 0.9979),
        (0.9960, 0.9977, 0.9949, 0.9991, 0.9955),
        (0.3465, 0.3481, 0.3480, 0.3487, 0.3414),
        (1.2411, 1.2369, 1.0086, 1.2357, 1.0148)],
    b2=[(-0.2681, -0.2707, -0.2681, -0.2643, -0.0033),
        (-1.1161, -1.1034, -1.1200, -1.1195, -1.291),
        (-0.0121, -0.0153, -0.0122, -0.0082, -0.0064),
        (-0.5031, -0.5057, -0.5034, -0.5006, -0.5136)],
    sigma=[(0.0000, 0.0000, 0.0000, 0.0000, 0.0000),
           (0.0016, 0.0018, 0.0153, 0.0030, 0.0039),
           (0.1400, 0.1400, 0.1400, 0.1400, 0.1400),
           (0.6217, 0.6369, 0.6207, 0.6316, 0.6165)],
    loglik=(841089.4, 5872364, 45918365, 5637773, 839429.5),
    sigdur=(0.403, 0.797, 10.59, 0.704, 1.206),
)

# Nov 9 two- and three-state fits, as tabulated (two decimals).
BID_TWO_STATE = PublishedFit((0.00, -0.83), (1.00, 0.49), (0.09, -0.06), (0.00, 0.47))
ASK_TWO_STATE = PublishedFit((0.42, 0.00), (1.33, 1.00), (-0.12, 0.16), (0.42, 0.00))
BID_THREE_STATE = PublishedFit((-0.00, -0.09, -0.01), (1.00, 0.22, 0.32), (-0.12, 1.02, 0.00),
                               (0.00, 0.29, 0.40))
ASK_THREE_STATE = PublishedFit((-0.00, 0.38, 0.12), (1.00, -0.03, 0.25), (-0.10, 0.81, 0.01),
                               (0.00, 0.07, 0.90))

SIGNAL_THRESHOLD = 0.2
SIGNAL_DELAY_NS = 10_000_000
# Nov 9 firing rates (fires per second) and the durations they imply.
FIRES_PER_SEC = {"bid": 0.636, "ask": 10.59}
DURATION_PCT = {"bid": 0.636, "ask": 10.59}
