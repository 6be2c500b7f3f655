"""Per-player proposal distributions over predecessor-set cardinalities.

The variance-optimal proposal puts mass proportional to the root mean square
marginal contribution in each cardinality stratum.  It is estimated from
bootstrap samples (MLE), then shrunk towards uniform with a symmetric
Dirichlet prior of strength ``alpha`` (MAP).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, InvalidArgumentError, InvalidDistributionError
from .exact import ExactProfile


def probability_floor(n: int) -> float:
    return 1e-6 / n


def floor_distribution(theta: np.ndarray) -> np.ndarray:
    """Raise every entry to at least 1e-6/n, then renormalise."""
    theta = np.maximum(np.asarray(theta, dtype=float), probability_floor(theta.size))
    return theta / theta.sum()


def _normalise_weights(w: np.ndarray) -> np.ndarray:
    total = w.sum()
    if total <= 0.0:
        # sigma == 0 everywhere: every positive proposal is optimal
        return np.full(w.size, 1.0 / w.size)
    return floor_distribution(w / total)


class StratumStats:
    """Per (player, cardinality) sample count, sum of sigma and sum of sigma^2."""

    def __init__(self, n_players: int, n_strata: int | None = None):
        n_strata = n_players if n_strata is None else n_strata
        self.count = np.zeros((n_players, n_strata), dtype=np.int64)
        self.sum = np.zeros((n_players, n_strata))
        self.sum_sq = np.zeros((n_players, n_strata))

    @property
    def n(self) -> int:
        return self.count.shape[1]

    def accumulate(self, player: int, cardinality: int, sigma: float) -> "StratumStats":
        if not 0 <= cardinality < self.n:
            raise InvalidArgumentError(f"cardinality {cardinality} outside 0..{self.n - 1}")
        self.count[player, cardinality] += 1
        self.sum[player, cardinality] += sigma
        self.sum_sq[player, cardinality] += sigma * sigma
        return self

    def pooled(self) -> "StratumStats":
        """All players' samples merged into a single row."""
        out = StratumStats(1, self.n)
        out.count[0] = self.count.sum(axis=0)
        out.sum[0] = self.sum.sum(axis=0)
        out.sum_sq[0] = self.sum_sq.sum(axis=0)
        return out


def mle_theta(stats: StratumStats, player: int, n: int) -> np.ndarray:
    """Estimated optimal proposal: w_c proportional to sqrt(mean sigma^2 in stratum c).

    Strata without samples get the mean of the observed w values.
    """
    count = stats.count[player]
    if count.size != n:
        raise InvalidArgumentError(f"stats cover {count.size} strata, expected {n}")
    seen = count > 0
    if not seen.any():
        raise InsufficientDataError(f"player {player} has no samples in any stratum")
    w = np.zeros(n)
    w[seen] = np.sqrt(stats.sum_sq[player, seen] / count[seen])
    w[~seen] = w[seen].mean()
    return _normalise_weights(w)


def map_theta(mle: np.ndarray, alpha: float, n: int | None = None) -> np.ndarray:
    """MAP estimate under a Dirichlet((alpha+1) 1) prior.

    theta_c = (n w_c + alpha) / sum_k (n w_k + alpha); alpha = 0 returns w unchanged.
    """
    w = np.asarray(mle, dtype=float)
    n = w.size if n is None else n
    if w.size != n:
        raise InvalidArgumentError(f"expected a length-{n} vector, got {w.size}")
    if not alpha >= 0:
        raise InvalidArgumentError(f"alpha must be non-negative, got {alpha}")
    if alpha == 0:
        return w.copy()
    scaled = n * w + alpha
    return scaled / scaled.sum()


def oracle_theta(exact: ExactProfile, player: int) -> np.ndarray:
    """True optimal proposal from exact stratum second moments (floored)."""
    return _normalise_weights(np.sqrt(exact.mean_sq_by_cardinality[player]))


def uniform_theta(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def proposal_variance(theta: np.ndarray, exact: ExactProfile, player: int) -> float:
    """Variance of the one-sample weighted estimator w(c) * sigma under ``theta``.

    (1/n) sum_c (E_c[sigma^2] / (n theta_c) - 2 E_c[sigma] phi) + phi^2
    """
    theta = np.asarray(theta, dtype=float)
    n = exact.n
    if theta.shape != (n,):
        raise InvalidDistributionError(f"theta must have length {n}")
    if np.any(theta <= 0):
        raise InvalidDistributionError("proposal_variance needs a strictly positive theta")
    phi = exact.phi[player]
    m2 = exact.mean_sq_by_cardinality[player]
    m1 = exact.mean_by_cardinality[player]
    return float(np.sum(m2 / (n * theta) - 2.0 * m1 * phi) / n + phi * phi)


@dataclass
class ProposalParams:
    """Frozen per-player cardinality proposals (row i is player i's theta)."""

    theta: np.ndarray
    alpha: float = 0.0
    source: str = "uniform"
    mle: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        if np.any(self.theta <= 0):
            raise InvalidDistributionError("proposal entries must be strictly positive")
        if np.any(np.abs(self.theta.sum(axis=1) - 1.0) > 1e-9):
            raise InvalidDistributionError("proposal rows must sum to 1")

    @classmethod
    def uniform(cls, n_players: int, n: int | None = None) -> "ProposalParams":
        n = n_players if n is None else n
        return cls(np.tile(uniform_theta(n), (n_players, 1)), source="uniform")

    def for_player(self, i: int) -> np.ndarray:
        return self.theta[i if self.theta.shape[0] > 1 else 0]

    def to_dict(self) -> dict:
        return {"source": self.source, "alpha": self.alpha, "theta": self.theta.tolist()}


def fit_proposal(stats: StratumStats, alpha: float, shared: bool = False) -> ProposalParams:
    """MLE then MAP for every player (or one pooled proposal when ``shared``)."""
    n = stats.n
    source = stats.pooled() if shared else stats
    mle = np.array([mle_theta(source, p, n) for p in range(source.count.shape[0])])
    theta = np.array([map_theta(row, alpha, n) for row in mle])
    return ProposalParams(theta, alpha=float(alpha), source="map" if alpha > 0 else "mle", mle=mle)
