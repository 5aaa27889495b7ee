"""K-state Markov-switching Gaussian regression.

Each state ``j`` has its own regression of liquidity on lagged liquidity and
the latest midpoint change::

    y_t = alpha_j + beta_lag_j * y_{t-1} + beta_dbam_j * dbam_t + sigma_j * z_t

and the hidden state follows a first-order Markov chain with
``trans[i, j] = P(s_t = j | s_{t-1} = i)``.

The forward (Hamilton) recursion, the backward (Kim) recursion and the EM
sufficient statistics are compiled with numba; everything else is plain
numpy.  Densities are evaluated in the log domain and every step is
renormalized, so long series and tiny scales do not underflow.
"""

from __future__ import annotations

import dataclasses
import enum
import math
import warnings
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numba
import numpy as np

from . import __version__

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_TINY = np.finfo(float).tiny
_ROW_TOL = 1e-12


class RegimeError(ValueError):
    pass


class NumericalDegeneracy(ArithmeticError):
    def __init__(self, t: int, what: str = "likelihood underflow"):
        self.t = t
        super().__init__(f"{what} at observation {t}")


class StateStarvation(RegimeError):
    def __init__(self, state: int, weight: float, needed: float):
        self.state = state
        self.weight = weight
        super().__init__(f"state {state} has effective weight {weight:.3g} < {needed:g}")


class NoConvergence(UserWarning):
    """No EM restart met the tolerance; the best-effort fit is still returned."""


class LabelRule(str, enum.Enum):
    SIGMA_ASCENDING = "sigma_ascending"


@dataclasses.dataclass(frozen=True)
class SwitchingParams:
    alpha: np.ndarray
    beta_lag: np.ndarray
    beta_dbam: np.ndarray
    sigma: np.ndarray
    trans: np.ndarray
    init_dist: np.ndarray

    def __post_init__(self):
        for name in ("alpha", "beta_lag", "beta_dbam", "sigma", "init_dist"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        trans = np.array(self.trans, dtype=float)
        trans = trans.reshape(len(self.alpha), -1) if trans.size else trans
        trans.setflags(write=False)
        object.__setattr__(self, "trans", trans)
        K = len(self.alpha)
        if K < 1:
            raise RegimeError("need at least one state")
        for name in ("beta_lag", "beta_dbam", "sigma", "init_dist"):
            if len(getattr(self, name)) != K:
                raise RegimeError(f"{name} must have {K} entries")
        if trans.shape != (K, K):
            raise RegimeError(f"trans must be {K}x{K}")
        if not np.all(np.isfinite(self.alpha)) or not np.all(np.isfinite(self.beta_lag)) \
                or not np.all(np.isfinite(self.beta_dbam)):
            raise RegimeError("regression coefficients must be finite")
        if not np.all(self.sigma > 0) or not np.all(np.isfinite(self.sigma)):
            raise RegimeError(f"sigma must be positive and finite: {self.sigma}")
        if np.any(trans < 0) or np.any(trans > 1) or \
                np.any(np.abs(trans.sum(axis=1) - 1) > _ROW_TOL):
            raise RegimeError("trans rows must be probability vectors")
        if np.any(self.init_dist < 0) or abs(self.init_dist.sum() - 1) > _ROW_TOL:
            raise RegimeError("init_dist must lie on the simplex")

    @property
    def K(self) -> int:
        return len(self.alpha)

    @classmethod
    def from_regressions(cls, alpha, beta_lag, beta_dbam, sigma,
                         trans=None, init_dist=None, stay: float = 0.95) -> "SwitchingParams":
        """Build params from per-state coefficients.

        Missing ``trans`` defaults to ``stay`` on the diagonal with the rest
        spread evenly; missing ``init_dist`` defaults to the chain's
        stationary distribution.
        """
        K = len(alpha)
        if trans is None:
            trans = diagonal_transition(K, stay)
        trans = np.asarray(trans, dtype=float)
        if init_dist is None:
            init_dist = stationary_distribution(trans)
        return cls(alpha, beta_lag, beta_dbam, sigma, trans, init_dist)

    def permuted(self, perm: Sequence[int]) -> "SwitchingParams":
        perm = np.asarray(perm)
        return SwitchingParams(self.alpha[perm], self.beta_lag[perm], self.beta_dbam[perm],
                               self.sigma[perm], self.trans[np.ix_(perm, perm)],
                               self.init_dist[perm])

    def replace(self, **changes) -> "SwitchingParams":
        return dataclasses.replace(self, **changes)

    def allclose(self, other: "SwitchingParams", atol: float = 0.0, rtol: float = 0.0) -> bool:
        return all(np.allclose(getattr(self, f.name), getattr(other, f.name), atol=atol, rtol=rtol)
                   for f in dataclasses.fields(self))


def diagonal_transition(K: int, stay: float = 0.95) -> np.ndarray:
    if K == 1:
        return np.ones((1, 1))
    trans = np.full((K, K), (1.0 - stay) / (K - 1))
    np.fill_diagonal(trans, stay)
    return trans


def stationary_distribution(trans: np.ndarray) -> np.ndarray:
    """Solve ``pi = pi @ trans`` with ``sum(pi) = 1``."""
    trans = np.asarray(trans, dtype=float)
    K = trans.shape[0]
    A = np.vstack([trans.T - np.eye(K), np.ones(K)])
    b = np.zeros(K + 1)
    b[-1] = 1.0
    pi = np.linalg.lstsq(A, b, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclasses.dataclass(frozen=True)
class RegressionData:
    """``y`` is liquidity, ``y_lag`` its previous value, ``dbam`` the midpoint change."""

    y: np.ndarray
    y_lag: np.ndarray
    dbam: np.ndarray

    def __post_init__(self):
        for name in ("y", "y_lag", "dbam"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=float).reshape(-1))
            object.__setattr__(self, name, arr)
        if not (len(self.y) == len(self.y_lag) == len(self.dbam)):
            raise RegimeError("y, y_lag and dbam must have equal length")
        if len(self.y) < 2:
            raise RegimeError("need at least two observations")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.y_lag))
                and np.all(np.isfinite(self.dbam))):
            raise RegimeError("observations must be finite")

    @property
    def T(self) -> int:
        return len(self.y)

    def __len__(self):
        return len(self.y)

    def __getitem__(self, idx):
        return RegressionData(self.y[idx], self.y_lag[idx], self.dbam[idx])

    @property
    def design(self) -> np.ndarray:
        return np.column_stack([np.ones(self.T), self.y_lag, self.dbam])

    @classmethod
    def from_series(cls, series) -> "RegressionData":
        return cls(series.liq, series.liq_lag, series.dbam)


class FilterResult(NamedTuple):
    predicted: np.ndarray
    filtered: np.ndarray
    loglik: float


class SmoothResult(NamedTuple):
    smoothed: np.ndarray
    pairwise: np.ndarray


def state_mean(p: SwitchingParams, j: int, y_lag: float, dbam: float) -> float:
    """Conditional mean of state ``j`` (1-based, as in the model tables)."""
    if not 1 <= j <= p.K:
        raise IndexError(f"state {j} outside 1..{p.K}")
    i = j - 1
    return p.alpha[i] + p.beta_lag[i] * y_lag + p.beta_dbam[i] * dbam


# ---------------------------------------------------------------------------
# compiled kernels

@numba.njit(cache=True, nogil=True)
def _update(pred, y, ylag, dbam, alpha, bl, bd, logsig, invsig, scratch, out):
    # One filter step from predicted probabilities; returns the loglik
    # increment, or -inf if every state with prior mass has zero density.
    K = pred.shape[0]
    m = -np.inf
    for j in range(K):
        if pred[j] > 0.0:
            z = (y - (alpha[j] + bl[j] * ylag + bd[j] * dbam)) * invsig[j]
            ld = -0.5 * z * z - logsig[j] - HALF_LOG_2PI
            scratch[j] = ld
            if ld > m:
                m = ld
    if m == -np.inf:
        return -np.inf
    s = 0.0
    for j in range(K):
        if pred[j] > 0.0:
            w = pred[j] * np.exp(scratch[j] - m)
        else:
            w = 0.0
        out[j] = w
        s += w
    for j in range(K):
        out[j] /= s
    return m + np.log(s)


@numba.njit(cache=True, nogil=True)
def _predict(prob, trans, out):
    K = prob.shape[0]
    for k in range(K):
        acc = 0.0
        for j in range(K):
            acc += prob[j] * trans[j, k]
        out[k] = acc


@numba.njit(cache=True, nogil=True)
def _filter_kernel(y, ylag, dbam, alpha, bl, bd, sigma, trans, init, predicted, filtered):
    T = y.shape[0]
    K = alpha.shape[0]
    logsig = np.log(sigma)
    invsig = 1.0 / sigma
    scratch = np.empty(K)
    ll = 0.0
    for t in range(T):
        if t == 0:
            for k in range(K):
                predicted[0, k] = init[k]
        else:
            _predict(filtered[t - 1], trans, predicted[t])
        inc = _update(predicted[t], y[t], ylag[t], dbam[t], alpha, bl, bd,
                      logsig, invsig, scratch, filtered[t])
        if inc == -np.inf:
            return ll, t
        ll += inc
    return ll, -1


@numba.njit(cache=True, nogil=True)
def _smooth_kernel(predicted, filtered, trans, smoothed, pairwise, store_pairs, pairsum):
    T, K = filtered.shape
    ratio = np.empty(K)
    for k in range(K):
        smoothed[T - 1, k] = filtered[T - 1, k]
    for t in range(T - 2, -1, -1):
        for k in range(K):
            p = predicted[t + 1, k]
            if p < _TINY:
                p = _TINY
            ratio[k] = smoothed[t + 1, k] / p
        for j in range(K):
            fj = filtered[t, j]
            acc = 0.0
            for k in range(K):
                v = fj * trans[j, k] * ratio[k]
                acc += v
                pairsum[j, k] += v
                if store_pairs:
                    pairwise[t, j, k] = v
            smoothed[t, j] = acc


@numba.njit(cache=True, nogil=True)
def _wls_stats(y, ylag, dbam, weights, sw, xtwx, xtwy):
    T, K = weights.shape
    for t in range(T):
        x1 = ylag[t]
        x2 = dbam[t]
        yt = y[t]
        for j in range(K):
            w = weights[t, j]
            sw[j] += w
            xtwx[j, 0, 1] += w * x1
            xtwx[j, 0, 2] += w * x2
            xtwx[j, 1, 1] += w * x1 * x1
            xtwx[j, 1, 2] += w * x1 * x2
            xtwx[j, 2, 2] += w * x2 * x2
            xtwy[j, 0] += w * yt
            xtwy[j, 1] += w * x1 * yt
            xtwy[j, 2] += w * x2 * yt
    for j in range(K):
        xtwx[j, 0, 0] = sw[j]
        xtwx[j, 1, 0] = xtwx[j, 0, 1]
        xtwx[j, 2, 0] = xtwx[j, 0, 2]
        xtwx[j, 2, 1] = xtwx[j, 1, 2]


@numba.njit(cache=True, nogil=True)
def _weighted_rss(y, ylag, dbam, weights, coef, rss):
    T, K = weights.shape
    for t in range(T):
        for j in range(K):
            r = y[t] - (coef[j, 0] + coef[j, 1] * ylag[t] + coef[j, 2] * dbam[t])
            rss[j] += weights[t, j] * r * r


# ---------------------------------------------------------------------------
# filter / smoother

def _run_filter(p: SwitchingParams, d: RegressionData) -> FilterResult:
    T, K = d.T, p.K
    predicted = np.empty((T, K))
    filtered = np.empty((T, K))
    ll, bad = _filter_kernel(d.y, d.y_lag, d.dbam, p.alpha, p.beta_lag, p.beta_dbam,
                             p.sigma, p.trans, p.init_dist, predicted, filtered)
    if bad >= 0:
        raise NumericalDegeneracy(bad)
    return FilterResult(predicted, filtered, float(ll))


def hamilton_filter(p: SwitchingParams, d: RegressionData) -> FilterResult:
    """Forward recursion: one-step-ahead and filtered state probabilities plus
    the exact log-likelihood."""
    return _run_filter(p, d)


def loglik(p: SwitchingParams, d: RegressionData) -> float:
    return _run_filter(p, d).loglik


def filter_step(p: SwitchingParams, prob: Optional[np.ndarray], obs) -> Tuple[np.ndarray, float]:
    """Advance the filter by one observation ``obs = (y, y_lag, dbam)``.

    ``prob`` is the previous filtered distribution, or ``None`` for the first
    observation (which is weighted by ``init_dist`` directly).  Uses the same
    compiled update as :func:`hamilton_filter`, so folding this over a series
    reproduces the batch rows bit for bit.
    """
    K = p.K
    pred = np.empty(K)
    if prob is None:
        pred[:] = p.init_dist
    else:
        _predict(np.asarray(prob, dtype=float), p.trans, pred)
    out = np.empty(K)
    y, y_lag, dbam = obs[0], obs[1], obs[2]
    inc = _update(pred, float(y), float(y_lag), float(dbam), p.alpha, p.beta_lag, p.beta_dbam,
                  np.log(p.sigma), 1.0 / p.sigma, np.empty(K), out)
    if inc == -np.inf:
        raise NumericalDegeneracy(-1)
    return out, float(inc)


class OnlineFilter:
    """Stateful wrapper around :func:`filter_step`."""

    def __init__(self, params: SwitchingParams):
        self.params = params
        self.prob: Optional[np.ndarray] = None
        self.loglik = 0.0
        self.t = 0
        self._logsig = np.log(params.sigma)
        self._invsig = 1.0 / params.sigma
        self._pred = np.empty(params.K)
        self._scratch = np.empty(params.K)

    def update(self, y: float, y_lag: float, dbam: float) -> np.ndarray:
        p = self.params
        if self.prob is None:
            self._pred[:] = p.init_dist
        else:
            _predict(self.prob, p.trans, self._pred)
        out = np.empty(p.K)
        inc = _update(self._pred, float(y), float(y_lag), float(dbam), p.alpha, p.beta_lag,
                      p.beta_dbam, self._logsig, self._invsig, self._scratch, out)
        if inc == -np.inf:
            raise NumericalDegeneracy(self.t)
        self.prob = out
        self.loglik += inc
        self.t += 1
        return out


def kim_smoother(p: SwitchingParams, f: FilterResult) -> SmoothResult:
    """Backward recursion: full-sample state marginals and pairwise joints
    ``pairwise[t, j, k] = P(s_t = j, s_{t+1} = k | all data)``."""
    T, K = f.filtered.shape
    smoothed = np.empty((T, K))
    pairwise = np.empty((max(T - 1, 0), K, K))
    _smooth_kernel(f.predicted, f.filtered, p.trans, smoothed, pairwise, True, np.zeros((K, K)))
    return SmoothResult(smoothed, pairwise)


# ---------------------------------------------------------------------------
# EM

def _solve_wls(xtwx: np.ndarray, xtwy: np.ndarray) -> np.ndarray:
    try:
        coef = np.linalg.solve(xtwx, xtwy)
        if np.all(np.isfinite(coef)):
            return coef
    except np.linalg.LinAlgError:
        pass
    # Rank-deficient design (e.g. dbam identically zero): min-norm solution.
    return np.linalg.lstsq(xtwx, xtwy, rcond=None)[0]


def _m_step(d: RegressionData, weights: np.ndarray, pairsum: np.ndarray,
            sigma_floor: float, check_weight: bool = True):
    T, K = weights.shape
    sw = np.zeros(K)
    xtwx = np.zeros((K, 3, 3))
    xtwy = np.zeros((K, 3))
    _wls_stats(d.y, d.y_lag, d.dbam, weights, sw, xtwx, xtwy)
    needed = 3.0 * K
    if check_weight:
        for j in range(K):
            if sw[j] < needed:
                raise StateStarvation(j + 1, float(sw[j]), needed)
    coef = np.array([_solve_wls(xtwx[j], xtwy[j]) for j in range(K)])
    rss = np.zeros(K)
    _weighted_rss(d.y, d.y_lag, d.dbam, weights, coef, rss)
    # a weightless state (only reachable with check_weight=False) keeps the floor
    var = np.divide(np.maximum(rss, 0.0), sw, out=np.zeros(K), where=sw > 0)
    sigma = np.maximum(np.sqrt(var), sigma_floor)
    rows = pairsum.sum(axis=1, keepdims=True)
    trans = np.where(rows > 0, pairsum / np.where(rows > 0, rows, 1.0), np.eye(K))
    trans = trans / trans.sum(axis=1, keepdims=True)
    init = weights[0] / weights[0].sum()
    return SwitchingParams(coef[:, 0], coef[:, 1], coef[:, 2], sigma, trans, init)


def em_step(p: SwitchingParams, d: RegressionData, sigma_floor: float = 1e-6,
            check_weight: bool = True) -> Tuple[SwitchingParams, float]:
    """One EM iteration.  Returns the updated parameters and the
    log-likelihood of the *input* parameters.

    ``check_weight=False`` skips the StateStarvation guard, letting a state
    fade out instead of stopping the chain.
    """
    f = _run_filter(p, d)
    T, K = f.filtered.shape
    smoothed = np.empty((T, K))
    pairsum = np.zeros((K, K))
    _smooth_kernel(f.predicted, f.filtered, p.trans, smoothed, np.empty((1, K, K)), False, pairsum)
    return _m_step(d, smoothed, pairsum, sigma_floor, check_weight), f.loglik


def ols(d: RegressionData) -> Tuple[np.ndarray, float]:
    """Closed-form least squares of y on [1, y_lag, dbam]; returns
    ``(coef, sigma_mle)``."""
    X = d.design
    coef = np.linalg.lstsq(X, d.y, rcond=None)[0]
    resid = d.y - X @ coef
    return coef, float(np.sqrt(np.mean(resid ** 2)))


# ---------------------------------------------------------------------------
# labelling

def canonical_order(p: SwitchingParams) -> np.ndarray:
    """Permutation putting states in ascending sigma, ties by ascending alpha."""
    return np.lexsort((p.alpha, p.sigma))


def canonicalize(p: SwitchingParams, *probs: np.ndarray):
    """Relabel states by ascending sigma so state K is the highest-variance one.

    Any probability arrays passed along (``T x K`` marginals or
    ``T x K x K`` pairwise joints) are permuted consistently.  Returns the
    relabeled params alone, or ``(params, *probs)`` when arrays are given.
    """
    perm = canonical_order(p)
    q = p.permuted(perm)
    if not probs:
        return q
    out = []
    for arr in probs:
        arr = np.asarray(arr)
        if arr.ndim == 3:
            out.append(arr[:, perm][:, :, perm])
        else:
            out.append(arr[..., perm])
    return (q, *out)


# ---------------------------------------------------------------------------
# fitting

@dataclasses.dataclass(frozen=True)
class FitConfig:
    max_iter: int = 500
    tol: float = 1e-8
    restarts: int = 8
    seed: int = 0
    sigma_floor: float = 1e-6
    label_rule: LabelRule = LabelRule.SIGMA_ASCENDING

    def __post_init__(self):
        object.__setattr__(self, "label_rule", LabelRule(self.label_rule))
        if self.max_iter < 1:
            raise RegimeError("max_iter must be >= 1")
        if not self.tol > 0:
            raise RegimeError("tol must be positive")
        if self.restarts < 1:
            raise RegimeError("restarts must be >= 1")
        if not self.sigma_floor > 0:
            raise RegimeError("sigma_floor must be positive")


@dataclasses.dataclass
class RestartInfo:
    index: int
    loglik: float
    iterations: int
    converged: bool
    error: Optional[str] = None


@dataclasses.dataclass
class FitDiagnostics:
    restarts: List[RestartInfo]
    best: int
    loglik: float
    converged: bool
    trace: List[float] = dataclasses.field(default_factory=list)


class FitResult(NamedTuple):
    params: SwitchingParams
    diagnostics: FitDiagnostics


def initial_params(d: RegressionData, K: int, rng: Optional[np.random.Generator] = None,
                   sigma_floor: float = 1e-6, stay: float = 0.95) -> SwitchingParams:
    """Starting point for EM.

    Observations are sliced into K groups by the quantiles of their absolute
    pooled-OLS residual, each group gets its own least-squares fit, and the
    chain starts at ``stay`` on the diagonal.  With ``rng`` the slice
    boundaries and coefficients are jittered.
    """
    coef, _ = ols(d)
    X = d.design
    resid = d.y - X @ coef
    order = np.argsort(np.abs(resid), kind="stable")
    if rng is not None and K > 1:
        cuts = np.sort(rng.uniform(0.0, 1.0, K - 1))
        cuts = 0.5 * cuts + 0.5 * np.arange(1, K) / K
        bounds = np.concatenate([[0], (cuts * d.T).astype(int), [d.T]])
    else:
        bounds = np.linspace(0, d.T, K + 1).astype(int)
    alpha, bl, bd, sigma = (np.empty(K) for _ in range(4))
    for j in range(K):
        idx = order[bounds[j]:bounds[j + 1]]
        if len(idx) < 3:
            idx = order
        Xj, yj = X[idx], d.y[idx]
        cj = np.linalg.lstsq(Xj, yj, rcond=None)[0]
        sj = float(np.sqrt(np.mean((yj - Xj @ cj) ** 2)))
        alpha[j], bl[j], bd[j] = cj
        sigma[j] = max(sj, sigma_floor, 1e-3 * float(np.std(d.y)) if np.std(d.y) > 0 else 0.0)
    if rng is not None:
        scale = np.maximum(sigma, sigma_floor)
        alpha = alpha + rng.normal(0.0, 0.5, K) * scale
        bl = bl + rng.normal(0.0, 0.1, K)
        bd = bd + rng.normal(0.0, 0.1, K)
        sigma = np.maximum(sigma * np.exp(rng.normal(0.0, 0.3, K)), sigma_floor)
    trans = diagonal_transition(K, stay)
    return SwitchingParams(alpha, bl, bd, sigma, trans, stationary_distribution(trans))


def run_em(d: RegressionData, start: SwitchingParams, cfg: FitConfig,
           trace: Optional[list] = None) -> Tuple[SwitchingParams, float, int, bool]:
    """Iterate EM from ``start``; returns ``(params, loglik, iterations, converged)``."""
    p = start
    prev = None
    for it in range(1, cfg.max_iter + 1):
        p_new, ll = em_step(p, d, cfg.sigma_floor)
        if trace is not None:
            trace.append(ll)
        if prev is not None and abs(ll - prev) <= cfg.tol * max(1.0, abs(prev)):
            return p_new, loglik(p_new, d), it, True
        prev = ll
        p = p_new
    return p, loglik(p, d), cfg.max_iter, False


def fit(d: RegressionData, K: int, cfg: FitConfig = FitConfig(),
        init: Optional[SwitchingParams] = None) -> FitResult:
    """Fit a K-state model by EM from ``cfg.restarts`` starting points and
    keep the best log-likelihood.

    Restart 0 starts from ``init`` when given, otherwise from the unjittered
    residual-quantile split; restart ``r > 0`` is jittered with a generator
    keyed by ``(cfg.seed, r)``.  Restarts that starve a state are recorded
    and skipped.  The winner is relabeled canonically.  If no restart
    converged a :class:`NoConvergence` warning is issued.
    """
    if K < 1:
        raise RegimeError("K must be >= 1")
    if d.T < 50 * K:
        raise RegimeError(f"need at least {50 * K} observations for K={K}, got {d.T}")
    if init is not None and init.K != K:
        raise RegimeError("init has the wrong number of states")
    n_restarts = 1 if K == 1 else cfg.restarts
    infos: List[RestartInfo] = []
    best = None
    best_trace: List[float] = []
    last_exc: Optional[Exception] = None
    for r in range(n_restarts):
        if r == 0:
            start = init if init is not None else initial_params(d, K, None, cfg.sigma_floor)
        else:
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, r])))
            start = initial_params(d, K, rng, cfg.sigma_floor)
        trace: List[float] = []
        try:
            p, ll, its, ok = run_em(d, start, cfg, trace)
        except (StateStarvation, NumericalDegeneracy) as exc:
            last_exc = exc
            infos.append(RestartInfo(r, float("-inf"), len(trace), False, str(exc)))
            continue
        infos.append(RestartInfo(r, ll, its, ok))
        if best is None or ll > best[1]:
            best = (p, ll, r)
            best_trace = trace
    if best is None:
        raise last_exc
    params = canonicalize(best[0])
    converged = any(i.converged for i in infos)
    if not converged:
        warnings.warn(f"EM did not converge within {cfg.max_iter} iterations", NoConvergence)
    diag = FitDiagnostics(infos, best[2], best[1], converged, best_trace)
    return FitResult(params, diag)


# ---------------------------------------------------------------------------
# model files

MODEL_FORMAT = "liqswitch-model/1"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _vec(values) -> str:
    return " ".join(_fmt(v) for v in values)


def dump_model(p: SwitchingParams, meta: Optional[dict] = None,
               diagnostics: Optional[FitDiagnostics] = None) -> str:
    """Serialize params (plus metadata and fit diagnostics) as ``key = value``
    text with 17 significant digits, which round-trips every double."""
    lines = [f"# liqswitch regime model", f"format = {MODEL_FORMAT}",
             f"version = {__version__}", f"K = {p.K}",
             f"label_rule = {LabelRule.SIGMA_ASCENDING.value}",
             f"alpha = {_vec(p.alpha)}", f"beta_lag = {_vec(p.beta_lag)}",
             f"beta_dbam = {_vec(p.beta_dbam)}", f"sigma = {_vec(p.sigma)}"]
    for i, row in enumerate(p.trans, 1):
        lines.append(f"trans.{i} = {_vec(row)}")
    lines.append(f"init_dist = {_vec(p.init_dist)}")
    for key, value in (meta or {}).items():
        lines.append(f"meta.{key} = {value}")
    if diagnostics is not None:
        lines.append(f"fit.loglik = {_fmt(diagnostics.loglik)}")
        lines.append(f"fit.best_restart = {diagnostics.best}")
        lines.append(f"fit.converged = {int(diagnostics.converged)}")
        for info in diagnostics.restarts:
            text = (f"loglik={_fmt(info.loglik)} iterations={info.iterations} "
                    f"converged={int(info.converged)}")
            if info.error:
                text += f" error={info.error.replace(chr(10), ' ')}"
            lines.append(f"fit.restart.{info.index} = {text}")
    return "\n".join(lines) + "\n"


def parse_model(text: str) -> Tuple[SwitchingParams, dict]:
    """Inverse of :func:`dump_model`; returns params and the remaining keys."""
    fields = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise RegimeError(f"bad model line: {line!r}")
        fields[key.strip()] = value.strip()
    if fields.get("format") != MODEL_FORMAT:
        raise RegimeError(f"not a {MODEL_FORMAT} document")
    K = int(fields["K"])
    vec = lambda k: [float(x) for x in fields[k].split()]
    trans = [vec(f"trans.{i}") for i in range(1, K + 1)]
    p = SwitchingParams(vec("alpha"), vec("beta_lag"), vec("beta_dbam"), vec("sigma"),
                        trans, vec("init_dist"))
    extra = {k: v for k, v in fields.items()
             if k.startswith(("meta.", "fit.")) or k in ("version", "label_rule")}
    return p, extra


def save_model(path, p: SwitchingParams, meta=None, diagnostics=None) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(dump_model(p, meta, diagnostics))


def load_model(path) -> Tuple[SwitchingParams, dict]:
    with open(path, "r", encoding="ascii") as fh:
        return parse_model(fh.read())


def coefficient_rows(models: Sequence[Tuple[str, SwitchingParams]]) -> List[Tuple[str, List[str]]]:
    """Rows of alpha_j, beta_lag_j, beta_dbam_j, sigma_j, one cell per model."""
    K_max = max(p.K for _, p in models)
    rows = [("Coefficient", [name for name, _ in models])]
    for attr in ("alpha", "beta_lag", "beta_dbam", "sigma"):
        for j in range(K_max):
            cells = [f"{getattr(p, attr)[j]:.4f}" if j < p.K else "" for _, p in models]
            rows.append((f"{attr}_{j + 1}", cells))
    return rows


def render_table(rows) -> str:
    width0 = max(len(name) for name, _ in rows)
    ncol = max(len(cells) for _, cells in rows)
    widths = [max(len(cells[c]) if c < len(cells) else 0 for _, cells in rows) for c in range(ncol)]
    return "\n".join(name.ljust(width0) + "  " + "  ".join(c.rjust(w) for c, w in zip(cells, widths))
                     for name, cells in rows)


def coefficient_table(models: Sequence[Tuple[str, SwitchingParams]]) -> str:
    return render_table(coefficient_rows(models))
