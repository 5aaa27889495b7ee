"""Synthetic data with known ground truth, and brute-force oracles.

``simulate`` draws from the switching regression itself; the oracles
enumerate every hidden-state path, which is only feasible for tiny
instances but is independent of the forward/backward recursions.
``random_feed`` produces valid depth-feed scripts for book testing.
"""

from __future__ import annotations

import dataclasses
import enum
import itertools
import random
from typing import Iterator, List, Optional, Tuple

import numba
import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .feed import MAX_LEVEL, Action, Aggressor, Kind, MarketMessage, Side
from .regime import RegressionData, SwitchingParams

MAX_PATHS = 10 ** 6
HALF_TICK_POINTS = 0.125


class InstanceTooLarge(ValueError):
    pass


class DbamModel(str, enum.Enum):
    ZEROS = "zeros"
    IID_TICKS = "iid_ticks"


@dataclasses.dataclass(frozen=True)
class SimSpec:
    params: SwitchingParams
    T: int
    dbam_model: DbamModel = DbamModel.IID_TICKS
    p_move: float = 0.1
    y0: float = 0.0
    seed: int = 0
    # Noise scales for drawing, if they differ from params.sigma.  Zeros are
    # allowed here (a noiseless generator) even though a model needs sigma > 0.
    noise: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "dbam_model", DbamModel(self.dbam_model))
        if self.noise is not None:
            noise = tuple(float(x) for x in self.noise)
            if len(noise) != self.params.K or any(not (x >= 0) for x in noise):
                raise ValueError("noise must hold K non-negative scales")
            object.__setattr__(self, "noise", noise)
        if self.T < 2:
            raise ValueError("T must be >= 2")
        if not 0.0 <= self.p_move <= 1.0:
            raise ValueError("p_move must be in [0, 1]")


def philox(seed, *keys) -> np.random.Generator:
    """Counter-based generator keyed by ``seed`` (bit-reproducible across platforms)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *keys])))


@numba.njit(cache=True)
def _simulate_kernel(u_state, z, dbam, alpha, bl, bd, sigma, cum_trans, cum_init, y0,
                     states, y, ylag):
    T = z.shape[0]
    K = alpha.shape[0]
    prev = y0
    s = 0
    for t in range(T):
        u = u_state[t]
        row = cum_init if t == 0 else cum_trans[s]
        s = K - 1
        for k in range(K):
            if u < row[k]:
                s = k
                break
        val = alpha[s] + bl[s] * prev + bd[s] * dbam[t] + sigma[s] * z[t]
        states[t] = s
        ylag[t] = prev
        y[t] = val
        prev = val


def simulate(spec: SimSpec) -> Tuple[np.ndarray, RegressionData]:
    """Draw ``(states, data)``; states are 0-based indices."""
    p = spec.params
    rng = philox(spec.seed)
    T = spec.T
    u_state = rng.random(T)
    z = rng.standard_normal(T)
    if spec.dbam_model is DbamModel.ZEROS:
        dbam = np.zeros(T)
    else:
        u = rng.random(T)
        half = spec.p_move / 2.0
        dbam = np.where(u < half, HALF_TICK_POINTS, np.where(u < spec.p_move, -HALF_TICK_POINTS, 0.0))
    states = np.empty(T, dtype=np.int64)
    y = np.empty(T)
    ylag = np.empty(T)
    # Exclusive upper edge of the last bucket so rounding can never skip a state.
    cum_trans = np.cumsum(p.trans, axis=1)
    cum_trans[:, -1] = np.inf
    cum_init = np.cumsum(p.init_dist)
    cum_init[-1] = np.inf
    sigma = p.sigma if spec.noise is None else np.array(spec.noise)
    _simulate_kernel(u_state, z, dbam, p.alpha, p.beta_lag, p.beta_dbam, sigma,
                     cum_trans, cum_init, float(spec.y0), states, y, ylag)
    return states, RegressionData(y, ylag, dbam)


def _paths(K: int, T: int) -> np.ndarray:
    if K ** T > MAX_PATHS:
        raise InstanceTooLarge(f"{K}^{T} paths exceeds {MAX_PATHS}")
    return np.array(list(itertools.product(range(K), repeat=T)), dtype=np.int64).reshape(-1, T)


def _path_logjoint(p: SwitchingParams, d: RegressionData) -> Tuple[np.ndarray, np.ndarray]:
    paths = _paths(p.K, d.T)
    mu = p.alpha[paths] + p.beta_lag[paths] * d.y_lag + p.beta_dbam[paths] * d.dbam
    with np.errstate(divide="ignore"):
        logemit = norm.logpdf(d.y, loc=mu, scale=p.sigma[paths]).sum(axis=1)
        logprior = np.log(p.init_dist[paths[:, 0]])
        if d.T > 1:
            logprior = logprior + np.log(p.trans[paths[:, :-1], paths[:, 1:]]).sum(axis=1)
    return paths, logprior + logemit


def brute_force_loglik(p: SwitchingParams, d: RegressionData) -> float:
    """Log of the sum over all K^T state paths of prior x emission density."""
    _, lj = _path_logjoint(p, d)
    return float(logsumexp(lj))


def brute_force_smoothed(p: SwitchingParams, d: RegressionData) -> np.ndarray:
    """``P(s_t = j | all data)`` by path enumeration, shape ``T x K``."""
    paths, lj = _path_logjoint(p, d)
    w = np.exp(lj - logsumexp(lj))
    out = np.zeros((d.T, p.K))
    for t in range(d.T):
        out[t] = np.bincount(paths[:, t], weights=w, minlength=p.K)
    return out


def random_params(rng: np.random.Generator, K: int, stay=(0.6, 0.99)) -> SwitchingParams:
    """Random but well-posed parameters for property tests."""
    alpha = rng.normal(0.0, 1.0, K)
    bl = rng.uniform(-0.9, 0.9, K)
    bd = rng.normal(0.0, 1.0, K)
    sigma = rng.uniform(0.2, 2.0, K)
    trans = rng.dirichlet(np.ones(K), size=K) if K > 1 else np.ones((1, 1))
    if K > 1:
        diag = rng.uniform(*stay, K)
        trans = trans * (1 - diag)[:, None] / (trans.sum(axis=1) - np.diag(trans))[:, None]
        np.fill_diagonal(trans, diag)
        trans = trans / trans.sum(axis=1, keepdims=True)
    init = rng.dirichlet(np.ones(K))
    return SwitchingParams(alpha, bl, bd, sigma, trans, init)


def random_data(rng: np.random.Generator, T: int, scale: float = 2.0) -> RegressionData:
    """Arbitrary (not model-generated) regression data."""
    y = rng.normal(0.0, scale, T)
    y_lag = np.concatenate([[rng.normal(0.0, scale)], y[:-1]])
    dbam = rng.choice([-0.125, 0.0, 0.125], size=T)
    return RegressionData(y, y_lag, dbam)


# ---------------------------------------------------------------------------
# feed scripts

def random_feed(n: int, seed: int = 0, center: int = 9000, depth: int = 5,
                t0: int = 1478692800000000000) -> Iterator[MarketMessage]:
    """Yield ``n`` valid messages against a level-relative 10-deep book.

    The generator keeps its own copy of the ladder so every Change/Delete
    references an existing level with its current price, every New keeps
    strict price ordering and the book never crosses.
    """
    rnd = random.Random(seed)
    bids: List[List[int]] = []
    asks: List[List[int]] = []
    ts = t0
    seq = 0

    def emit(kind, side, price, qty, action=None, level=None, aggr=Aggressor.NONE):
        nonlocal seq
        seq += 1
        return MarketMessage(seq, ts, kind, side, price, qty, action, level, aggr)

    # Opening ladder.
    for i in range(depth):
        if seq >= n:
            return
        bids.append([center - i, rnd.randint(1, 300)])
        yield emit(Kind.BOOK_UPDATE, Side.BID, center - i, bids[-1][1], Action.NEW, i + 1)
        if seq >= n:
            return
        asks.append([center + 1 + i, rnd.randint(1, 300)])
        yield emit(Kind.BOOK_UPDATE, Side.ASK, center + 1 + i, asks[-1][1], Action.NEW, i + 1)

    while seq < n:
        gap = rnd.random()
        ts += 0 if gap < 0.15 else rnd.randint(1, 5000) if gap < 0.9 else rnd.randint(5000, 2_000_000)
        u = rnd.random()
        side = Side.BID if rnd.random() < 0.5 else Side.ASK
        ladder, other = (bids, asks) if side is Side.BID else (asks, bids)
        sgn = -1 if side is Side.BID else 1  # direction of deeper levels
        if u < 0.1:
            price = ladder[0][0] if ladder else center
            aggr = Aggressor.SELL if side is Side.BID else Aggressor.BUY
            yield emit(Kind.TRADE, side, price, rnd.randint(1, 20), aggr=aggr)
            continue
        nlev = len(ladder)
        if u < 0.45 or nlev == 0:
            level = rnd.randint(1, min(nlev + 1, MAX_LEVEL))
            i = level - 1
            # inner/outer: price bounds toward the spread / deeper into the book.
            if i > 0:
                inner = ladder[i - 1][0] + sgn
            elif other:
                inner = other[0][0] + sgn
            else:
                inner = ladder[0][0] - 3 * sgn if ladder else center
            outer = ladder[i][0] - sgn if i < nlev else inner + 4 * sgn
            lo, hi = min(inner, outer), max(inner, outer)
            if (inner - outer) * sgn > 0 or hi < 1:
                if nlev == 0:
                    continue
                level = rnd.randint(1, nlev)
                qty = rnd.randint(1, 500)
                ladder[level - 1][1] = qty
                yield emit(Kind.BOOK_UPDATE, side, ladder[level - 1][0], qty, Action.CHANGE, level)
                continue
            lo = max(lo, 1)
            price = rnd.randint(lo, hi)
            qty = rnd.randint(1, 500)
            ladder.insert(i, [price, qty])
            if len(ladder) > MAX_LEVEL:
                ladder.pop()
            yield emit(Kind.BOOK_UPDATE, side, price, qty, Action.NEW, level)
        elif u < 0.8 or nlev <= 1:
            level = rnd.randint(1, nlev)
            qty = rnd.randint(1, 500)
            ladder[level - 1][1] = qty
            yield emit(Kind.BOOK_UPDATE, side, ladder[level - 1][0], qty, Action.CHANGE, level)
        else:
            level = rnd.randint(1, nlev)
            price = ladder[level - 1][0]
            del ladder[level - 1]
            yield emit(Kind.BOOK_UPDATE, side, price, 0, Action.DELETE, level)
