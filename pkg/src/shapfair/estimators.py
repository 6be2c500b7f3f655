"""Sampling-based Shapley value estimators.

Three estimators share the same bootstrap and online statistics:

* ``estimate_mc``     -- uniform permutations, budget split equally.
* ``estimate_greedy`` -- uniform permutations, each unit of budget goes to the
  player with the lowest fidelity score.
* ``estimate_gae``    -- greedy selection plus importance sampling of the
  predecessor-set cardinality from a learned per-player proposal.

Budget is counted in marginal-contribution evaluations: one per sampled
permutation (or placement) per player.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateBoundError, InvalidArgumentError, InsufficientDataError, NumericError
from .game import CooperativeGame
from .proposal import ProposalParams, StratumStats, fit_proposal, mle_theta, map_theta
from .sampler import (
    StreamFactory,
    cumulative,
    draw_cardinality,
    draw_predecessors,
    importance_weight,
    predecessors_in,
    sample_uniform_permutation,
)

SELECTIONS = ("greedy_min_fs", "delta_p")
FS_FORMULAS = ("def2", "alg1")


class RunningEstimate:
    """Online mean and sum of squared deviations (Welford) of weighted samples."""

    __slots__ = ("player", "count", "mean", "m2", "includes_bootstrap")

    def __init__(self, player: int, includes_bootstrap: bool = False):
        self.player = player
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0
        self.includes_bootstrap = includes_bootstrap

    def __repr__(self) -> str:
        return f"RunningEstimate(player={self.player}, m={self.count}, mean={self.mean!r}, s2={self.variance!r})"

    def update(self, weighted_sample: float, step: int | None = None) -> "RunningEstimate":
        if not math.isfinite(weighted_sample):
            raise NumericError(f"non-finite sample {weighted_sample!r} for player {self.player} at step {step}")
        self.count += 1
        delta = weighted_sample - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (weighted_sample - self.mean)
        return self

    @property
    def variance(self) -> float:
        """Unbiased sample variance s^2 (nan below two samples)."""
        if self.count < 2:
            return math.nan
        return max(self.m2, 0.0) / (self.count - 1)


def fidelity_score(est: RunningEstimate, xi: float, formula: str = "def2") -> float:
    """Estimated FS m (|phi_hat| + xi)^2 / s^2; +inf when s^2 == 0.

    ``formula="alg1"`` drops the absolute value, i.e. (phi_hat + xi)^2.
    """
    if est.count < 2:
        raise InsufficientDataError(f"fidelity score of player {est.player} needs >= 2 samples, has {est.count}")
    s2 = est.variance
    if s2 == 0.0:
        return math.inf
    signal = abs(est.mean) + xi if formula == "def2" else est.mean + xi
    return est.count * signal * signal / s2


def invariability(est: RunningEstimate, xi: float, formula: str = "def2") -> float:
    """FS attributable to a single sample, f_i / m_i."""
    return fidelity_score(est, xi, formula) / est.count


def delta_p(r_hat: float, m_i: int, epsilon1: float) -> float:
    """Multiplicative change of prod_i (1 - 1/(eps^2 f_i)) from one extra sample of i.

    (eps^2 r - 1/(m+1)) / (eps^2 r - 1/m)
    """
    if math.isinf(r_hat):
        return 1.0
    e2r = epsilon1 * epsilon1 * r_hat
    den = e2r - 1.0 / m_i
    if abs(den) <= 1e-12:
        raise DegenerateBoundError(f"eps^2 r m = {e2r * m_i!r} is too close to 1")
    return (e2r - 1.0 / (m_i + 1)) / den


@dataclass
class GaeConfig:
    """Shared configuration for the sampling estimators.

    ``m_bootstrap`` uniform samples per player precede ``m_budget`` adaptive
    ones; ``alpha`` is the Dirichlet prior strength used by GAE.
    """

    m_bootstrap: int = 20
    m_budget: int = 2000
    xi: float = 1e-3
    alpha: float = 2.0
    selection: str = "greedy_min_fs"
    epsilon1: float | None = None
    seed: int = 0
    fs_formula: str = "def2"
    shared_bootstrap: bool = False
    shared_proposal: bool = False
    refit: bool = False
    record_trace: bool = False

    def problems(self) -> list[str]:
        out = []
        if not isinstance(self.m_bootstrap, int) or self.m_bootstrap < 2:
            out.append(f"m_bootstrap must be an integer >= 2, got {self.m_bootstrap!r}")
        if not isinstance(self.m_budget, int) or self.m_budget < 0:
            out.append(f"m_budget must be an integer >= 0, got {self.m_budget!r}")
        if not isinstance(self.xi, (int, float)) or not self.xi > 0:
            out.append(f"xi must be > 0, got {self.xi!r}")
        if not isinstance(self.alpha, (int, float)) or not self.alpha >= 0:
            out.append(f"alpha must be >= 0, got {self.alpha!r}")
        if self.selection not in SELECTIONS:
            out.append(f"selection must be one of {SELECTIONS}, got {self.selection!r}")
        if self.selection == "delta_p" and not (isinstance(self.epsilon1, (int, float)) and self.epsilon1 > 0):
            out.append("selection 'delta_p' requires epsilon1 > 0")
        if self.fs_formula not in FS_FORMULAS:
            out.append(f"fs_formula must be one of {FS_FORMULAS}, got {self.fs_formula!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 1 << 64:
            out.append(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        return out

    def validate(self) -> "GaeConfig":
        problems = self.problems()
        if problems:
            raise InvalidArgumentError("; ".join(problems))
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}


@dataclass(frozen=True)
class TraceRecord:
    step: int
    phase: str
    player: int
    cardinality: int
    predecessors: int
    sigma: float
    weight: float
    fs_after: float


@dataclass
class EstimationResult:
    method: str
    phi_hat: np.ndarray
    m_per_player: np.ndarray
    fs_per_player: np.ndarray
    variance: np.ndarray
    estimates: list[RunningEstimate] = field(repr=False)
    proposal: ProposalParams | None = field(default=None, repr=False)
    trace: list[TraceRecord] | None = field(default=None, repr=False)

    @property
    def budget_used(self) -> int:
        return int(self.m_per_player.sum())

    @property
    def min_fs(self) -> float:
        return float(self.fs_per_player.min())


class _Run:
    """Mutable state of one estimation run."""

    def __init__(self, game: CooperativeGame, config: GaeConfig, rng: StreamFactory | None):
        self.game = game
        self.n = game.n
        self.config = config
        self.rng = rng if rng is not None else StreamFactory(config.seed)
        self.streams = [self.rng.player(i) for i in range(self.n)]
        self.estimates = [RunningEstimate(i, includes_bootstrap=True) for i in range(self.n)]
        self.stats = StratumStats(self.n)
        self.fs = [math.inf] * self.n
        self.trace: list[TraceRecord] | None = [] if config.record_trace else None
        self.step = 0

    def record(self, phase: str, player: int, predecessors: int, sigma: float, weight: float) -> None:
        est = self.estimates[player]
        est.update(weight * sigma, self.step)
        self.stats.accumulate(player, predecessors.bit_count(), sigma)
        if est.count >= 2:
            self.fs[player] = fidelity_score(est, self.config.xi, self.config.fs_formula)
        if self.trace is not None:
            self.trace.append(
                TraceRecord(self.step, phase, player, predecessors.bit_count(), predecessors, sigma, weight, self.fs[player])
            )
        self.step += 1

    def uniform_sample(self, player: int, phase: str) -> None:
        perm = sample_uniform_permutation(self.streams[player], self.n)
        pred = predecessors_in(perm, player)
        self.record(phase, player, pred, self.game.marginal_contribution(player, pred), 1.0)

    def result(self, method: str, proposal: ProposalParams | None = None) -> EstimationResult:
        return EstimationResult(
            method=method,
            phi_hat=np.array([e.mean for e in self.estimates]),
            m_per_player=np.array([e.count for e in self.estimates], dtype=np.int64),
            fs_per_player=np.array(self.fs),
            variance=np.array([e.variance for e in self.estimates]),
            estimates=self.estimates,
            proposal=proposal,
            trace=self.trace,
        )


def _bootstrap(run: _Run) -> None:
    m = run.config.m_bootstrap
    if run.config.shared_bootstrap:
        stream = run.rng.shared()
        for _ in range(m):
            perm = sample_uniform_permutation(stream, run.n)
            for i in range(run.n):
                pred = predecessors_in(perm, i)
                run.record("bootstrap", i, pred, run.game.marginal_contribution(i, pred), 1.0)
    else:
        for i in range(run.n):
            for _ in range(m):
                run.uniform_sample(i, "bootstrap")


def bootstrap(
    game: CooperativeGame,
    players: Iterable[int] | None,
    m_bootstrap: int,
    rng: StreamFactory,
    shared: bool = False,
) -> tuple[list[RunningEstimate], StratumStats]:
    """Draw ``m_bootstrap`` uniform permutations per player (weight 1).

    Permutations are independent across players unless ``shared`` is set, in
    which case each permutation yields one marginal for every player.
    """
    if m_bootstrap < 2:
        raise InvalidArgumentError(f"m_bootstrap must be >= 2, got {m_bootstrap}")
    config = GaeConfig(m_bootstrap=m_bootstrap, m_budget=0, shared_bootstrap=shared)
    run = _Run(game, config, rng)
    if players is None or shared:
        _bootstrap(run)
    else:
        for i in players:
            for _ in range(m_bootstrap):
                run.uniform_sample(i, "bootstrap")
    return run.estimates, run.stats


def estimate_mc(game: CooperativeGame, config: GaeConfig, rng: StreamFactory | None = None) -> EstimationResult:
    """Monte Carlo: bootstrap, then floor(m/n) more uniform samples per player.

    The remainder m mod n goes to the lowest player indices.
    """
    config.validate()
    run = _Run(game, config, rng)
    _bootstrap(run)
    base, extra = divmod(config.m_budget, run.n)
    for i in range(run.n):
        for _ in range(base + (i < extra)):
            run.uniform_sample(i, "main")
    return run.result("mc")


def _select(run: _Run, rr: list[int]) -> int:
    fs = run.fs
    if run.config.selection == "delta_p":
        # zero-variance players are excluded, as under argmin-FS
        best, best_val = -1, -math.inf
        try:
            for i in range(run.n):
                if math.isinf(fs[i]):
                    continue
                m_i = run.estimates[i].count
                val = delta_p(fs[i] / m_i, m_i, run.config.epsilon1)
                if val > best_val:
                    best, best_val = i, val
        except DegenerateBoundError:
            best = -1
        if best >= 0:
            return best
    j = min(range(run.n), key=fs.__getitem__)
    if math.isinf(fs[j]):
        # every player has zero observed variance
        j = rr[0] % run.n
        rr[0] += 1
    return j


def _greedy_loop(run: _Run, proposal: ProposalParams | None) -> None:
    n = run.n
    cdfs = None if proposal is None else [cumulative(proposal.for_player(i)) for i in range(n)]
    rr = [0]
    for _ in range(run.config.m_budget):
        j = _select(run, rr)
        if proposal is None:
            run.uniform_sample(j, "main")
            continue
        stream = run.streams[j]
        theta = proposal.for_player(j)
        c = draw_cardinality(stream, cdfs[j])
        pred = draw_predecessors(stream, j, n, c)
        sigma = run.game.marginal_contribution(j, pred)
        run.record("main", j, pred, sigma, importance_weight(theta, c, n))
        if run.config.refit and not run.config.shared_proposal:
            proposal.theta[j] = map_theta(mle_theta(run.stats, j, n), run.config.alpha, n)
            cdfs[j] = cumulative(proposal.theta[j])


def estimate_greedy(game: CooperativeGame, config: GaeConfig, rng: StreamFactory | None = None) -> EstimationResult:
    """Greedy selection of the lowest-FS player with uniform permutation sampling."""
    config.validate()
    run = _Run(game, config, rng)
    _bootstrap(run)
    _greedy_loop(run, None)
    return run.result("greedy")


def estimate_gae(game: CooperativeGame, config: GaeConfig, rng: StreamFactory | None = None) -> EstimationResult:
    """Greedy active estimation.

    Bootstrap, fit and freeze per-player proposals (MLE, then MAP with
    ``config.alpha``), then spend ``m_budget`` samples on the lowest-FS player,
    drawing its predecessor cardinality from its proposal and weighting the
    marginal contribution by 1/(n theta(c)).  Bootstrap samples stay in the
    estimate with weight 1.
    """
    config.validate()
    run = _Run(game, config, rng)
    _bootstrap(run)
    proposal = fit_proposal(run.stats, config.alpha, shared=config.shared_proposal)
    _greedy_loop(run, proposal)
    return run.result("gae", proposal)


ESTIMATORS = {"mc": estimate_mc, "greedy": estimate_greedy, "gae": estimate_gae}


def run_estimator(kind: str, game: CooperativeGame, config: GaeConfig, trial: int = 0) -> EstimationResult:
    try:
        fn = ESTIMATORS[kind]
    except KeyError:
        raise InvalidArgumentError(f"unknown estimator {kind!r}; expected one of {sorted(ESTIMATORS)}") from None
    return fn(game, config, StreamFactory(config.seed, trial))


# ---------------------------------------------------------------------------
# Fixed-invariability allocation model


def simulate_allocation(
    r: Sequence[float], m: int, rule: str = "greedy", initial: Sequence[int] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Allocate ``m`` samples when every player's invariability is known.

    FS is exactly f_i = m_i r_i.  ``rule`` is ``"greedy"`` (argmin FS, lowest
    index on ties) or ``"equal"``.  Returns ``(m_per_player, fs)``.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise InvalidArgumentError("invariabilities must be positive")
    counts = np.zeros(r.size, dtype=np.int64) if initial is None else np.array(initial, dtype=np.int64)
    if rule == "equal":
        base, extra = divmod(m, r.size)
        counts = counts + base + (np.arange(r.size) < extra)
    elif rule == "greedy":
        fs = (counts * r).tolist()
        rl = r.tolist()
        for _ in range(m):
            j = min(range(r.size), key=fs.__getitem__)
            counts[j] += 1
            fs[j] += rl[j]
    else:
        raise InvalidArgumentError(f"unknown allocation rule {rule!r}")
    return counts, counts * r


def pdp_prefers(f: Sequence[float], g: Sequence[float], tol: float = 1e-9) -> bool:
    """True if the Pigou-Dalton principle prefers FS vector ``f`` over ``g``.

    Requires a pair (i, j) with every other entry equal, f_i + f_j = g_i + g_j
    and |f_i - f_j| < |g_i - g_j|.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    differ = np.flatnonzero(np.abs(f - g) > tol)
    if differ.size != 2:
        return False
    i, j = differ
    if abs((f[i] + f[j]) - (g[i] + g[j])) > tol:
        return False
    return abs(f[i] - f[j]) < abs(g[i] - g[j]) - tol
