"""Order-book liquidity regimes and a real-time order-delay signal."""

__version__ = "0.1.0"

from .feed import (Action, Aggressor, Kind, MarketMessage, Side, format_line,  # noqa: E402
                   parse_line, stream_messages)
from .book import (LiquidityObservation, OrderBook, Transform, band_liquidity,  # noqa: E402
                   extract_series, iter_series, midpoint_halfticks)
from .regime import (FitConfig, RegressionData, SwitchingParams, canonicalize,  # noqa: E402
                     em_step, filter_step, fit, hamilton_filter, kim_smoother, state_mean)

__all__ = [
    "Action", "Aggressor", "Kind", "MarketMessage", "Side", "format_line", "parse_line",
    "stream_messages", "LiquidityObservation", "OrderBook", "Transform", "band_liquidity",
    "extract_series", "iter_series", "midpoint_halfticks", "FitConfig", "RegressionData",
    "SwitchingParams", "canonicalize", "em_step", "filter_step", "fit", "hamilton_filter",
    "kim_smoother", "state_mean",
]
