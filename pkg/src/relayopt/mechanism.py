"""K-winner sealed-bid VCG auction and its relay-selection specialization.

The generic part: the K highest bidders win and each winner pays the highest
non-winning bid (the uniform clearing price), which makes truth-telling a
dominant strategy.  Selection and payments always run on *reported* values;
utilities credit *true* values, so an exaggerating winner can end up paying
out of pocket.

The relay specialization values each relay by the secrecy rate it could
deliver alone at full power, and analyses reporting incentives against
i.i.d. Exp(1) rival populations (closed-form selection probability plus a
Monte Carlo expected-payoff estimator).
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import SystemParams, siso_secrecy_valuation

__all__ = [
    "ValuationProfile",
    "AuctionOutcome",
    "vcg_select",
    "vcg_transfers",
    "vcg_utilities",
    "run_auction",
    "relay_valuations",
    "selection_probability",
    "expected_payoff",
    "expected_payoff_sweep",
    "payoff_curve",
]


@dataclass(frozen=True)
class ValuationProfile:
    """Nonnegative bid vector plus the number of identical items K.

    Requires 1 <= K < N so the (K+1)-st price is always defined.
    """

    values: np.ndarray
    K: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("values must be a 1-D vector of length >= 2")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("values must be finite and >= 0")
        if not 1 <= self.K < v.size:
            raise ValueError(f"need 1 <= K < N, got K={self.K}, N={v.size}")


def _check(values, K) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise ValueError("values must be 1-D")
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise ValueError("values must be finite and >= 0")
    if not 1 <= K < values.size:
        raise ValueError(f"need 1 <= K < N, got K={K}, N={values.size}")
    return values


def vcg_select(values, K: int) -> np.ndarray:
    """Indices of the K highest bids, ordered by value descending.

    Ties break toward the lowest index, which keeps every outcome
    reproducible.
    """
    values = _check(values, K)
    order = np.argsort(-values, kind="stable")
    return order[:K]


def vcg_transfers(values, K: int) -> np.ndarray:
    """Transfer payment of every bidder (<= 0 for winners, 0 otherwise).

    Each winner pays the (K+1)-st highest bid; this equals the general
    two-sum social-damage formula, which the tests recompute independently.
    """
    values = _check(values, K)
    order = np.argsort(-values, kind="stable")
    price = values[order[K]]
    t = np.zeros(values.size)
    t[order[:K]] = -price
    return t


def vcg_utilities(values_reported, values_true, K: int) -> np.ndarray:
    """Utilities when selection/payments use reports but credit true values."""
    values_reported = _check(values_reported, K)
    values_true = np.asarray(values_true, dtype=float)
    if values_true.shape != values_reported.shape:
        raise ValueError("reported and true value vectors must match in length")
    winners = vcg_select(values_reported, K)
    t = vcg_transfers(values_reported, K)
    u = np.zeros(values_reported.size)
    u[winners] = values_true[winners] + t[winners]
    return u


@dataclass(frozen=True)
class AuctionOutcome:
    """Result of one VCG auction round."""

    winners: np.ndarray
    transfers: np.ndarray
    utilities: np.ndarray
    clearing_price: float


def run_auction(values_reported, values_true, K: int) -> AuctionOutcome:
    """Run one auction and bundle winners, transfers and utilities."""
    values_reported = _check(values_reported, K)
    winners = vcg_select(values_reported, K)
    transfers = vcg_transfers(values_reported, K)
    utilities = vcg_utilities(values_reported, values_true, K)
    order = np.argsort(-values_reported, kind="stable")
    return AuctionOutcome(winners=winners, transfers=transfers,
                          utilities=utilities,
                          clearing_price=float(values_reported[order[K]]))


def relay_valuations(reports, params: SystemParams) -> np.ndarray:
    """Valuation of each reported channel triple at maximum powers.

    ``reports`` is an (N, 3) complex array of per-relay triples
    (source-1 gain, source-2 gain, eavesdropper gain).
    """
    reports = np.asarray(reports, dtype=complex)
    if reports.ndim != 2 or reports.shape[1] != 3:
        raise ValueError(f"reports must be (N, 3), got {reports.shape}")
    return np.array([
        siso_secrecy_valuation(tuple(row), params.P_max, params.P_max,
                               params.p_r, params.sigma2)
        for row in reports
    ])


def selection_probability(x: float, N: int, K: int) -> float:
    """Probability that a bid of x wins against N-1 i.i.d. Exp(1) rivals.

    Closed form: the bid wins iff fewer than K rivals exceed x, and each
    rival independently exceeds x with probability e^{-x}.
    """
    if x < 0:
        raise ValueError(f"x must be >= 0, got {x}")
    if not 1 <= K < N:
        raise ValueError(f"need 1 <= K < N, got K={K}, N={N}")
    q = math.exp(-x)          # P(single rival exceeds x)
    m = N - 1
    total = 0.0
    for j in range(K):
        total += math.comb(m, j) * q ** j * (1.0 - q) ** (m - j)
    return min(1.0, max(0.0, total))


def _draw_kth_rivals(N: int, K: int, samples: int, seed) -> np.ndarray:
    if not 1 <= K < N:
        raise ValueError(f"need 1 <= K < N, got K={K}, N={N}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    rivals = rng.standard_exponential((samples, N - 1))
    return kernels.kth_largest_rows(rivals, K)


def expected_payoff(x_reported: float, x_true: float, pi_i: float,
                    N: int, K: int, samples: int, seed) -> float:
    """Monte Carlo estimate of the expected auction payoff of one relay.

    Per sample the N-1 rival reports are drawn i.i.d. Exp(1); the relay
    reports ``x_reported``, is credited ``x_true`` when selected, and pays
    the uniform clearing price.  Deterministic given the seed.
    """
    if x_reported < 0 or x_true < 0:
        raise ValueError("reported and true values must be >= 0")
    kth = _draw_kth_rivals(N, K, samples, seed)
    mean, _ = kernels.payoff_mean_stderr(kth, x_reported, x_true)
    return pi_i * mean


def expected_payoff_sweep(x_true: float, report_grid, pi_i: float,
                          N: int, K: int, samples: int, seed
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Expected payoff across a grid of reports, sharing one rival draw.

    Common random numbers keep the location of the payoff maximum stable,
    which is what makes the truth-telling optimum visible at Monte Carlo
    resolution.  Returns (means, standard errors), both scaled by ``pi_i``.
    """
    grid = np.asarray(report_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("report_grid must be a nonempty 1-D array")
    if np.any(grid < 0) or x_true < 0:
        raise ValueError("reports and true value must be >= 0")
    kth = _draw_kth_rivals(N, K, samples, seed)
    means, stderrs = kernels.payoff_sweep(kth, grid, x_true)
    return pi_i * means, pi_i * stderrs


def payoff_curve(true_values, i: int, report_grid, K: int) -> np.ndarray:
    """Exact payoff of relay i as a function of its own report.

    All other relays report truthfully.  Returns an (len(grid), 2) array of
    (reported, payoff) rows; losers get exactly 0 and a winner's payoff
    jumps at the clearing-price threshold.
    """
    true_values = _check(true_values, K)
    grid = np.asarray(report_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("report_grid must be a nonempty 1-D array")
    if not 0 <= i < true_values.size:
        raise IndexError(f"relay index {i} out of range")
    out = np.empty((grid.size, 2))
    reported = true_values.copy()
    for j, r in enumerate(grid):
        reported[i] = r
        u = vcg_utilities(reported, true_values, K)
        out[j] = (r, u[i])
    return out
