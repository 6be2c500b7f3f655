"""Fidelity and fairness diagnostics for Shapley value estimates.

Axiom checks compare an estimate against a reference vector: approximate
nullity (A1), symmetry (A2) and strict desirability (A3), each with the error
band eps1 |phi_i| + eps2 where eps2 = eps1 * xi.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyInputError, InvalidArgumentError
from .estimators import EstimationResult, GaeConfig, run_estimator
from .exact import exact_moments
from .game import CooperativeGame
from .proposal import proposal_variance

NULL_TOL = 1e-12
EPS_ABS_CUT = 0.01
MAPE_ZERO_TOL = 1e-12
THRESHOLD_FORMS = ("axiom", "experiment")


def _vectors(phi_ref, phi_hat) -> tuple[np.ndarray, np.ndarray]:
    ref = np.asarray(phi_ref, dtype=float)
    est = np.asarray(phi_hat, dtype=float)
    if ref.ndim != 1 or ref.shape != est.shape:
        raise InvalidArgumentError(f"reference and estimate lengths differ: {ref.shape} vs {est.shape}")
    return ref, est


# ---------------------------------------------------------------------------
# Fidelity


@dataclass
class FidelityReport:
    fs: np.ndarray
    invariability: np.ndarray
    min_fs: float
    xi: float
    n_infinite: int = 0

    def to_dict(self) -> dict:
        return {
            "fs": [json_float(x) for x in self.fs],
            "invariability": [json_float(x) for x in self.invariability],
            "min_fs": json_float(self.min_fs),
            "xi": self.xi,
            "n_infinite": self.n_infinite,
        }


def fidelity_report(result: EstimationResult, xi: float) -> FidelityReport:
    fs = np.asarray(result.fs_per_player, dtype=float)
    return FidelityReport(
        fs=fs,
        invariability=fs / result.m_per_player,
        min_fs=float(fs.min()),
        xi=float(xi),
        n_infinite=int(np.isinf(fs).sum()),
    )


def delta_bound(min_fs: float, epsilon1: float, n: int, independent: bool = True) -> float:
    """Failure probability delta guaranteed for a minimum fidelity score.

    independent: 1 - (1 - 1/(eps^2 f))^n;  dependent (union bound): n/(eps^2 f).
    Both are capped at 1.
    """
    if not min_fs > 0 or not epsilon1 > 0 or n < 1:
        raise InvalidArgumentError(f"need min_fs > 0, epsilon1 > 0, n >= 1; got {min_fs}, {epsilon1}, {n}")
    if math.isinf(min_fs):
        return 0.0
    e2f = epsilon1 * epsilon1 * min_fs
    if not independent:
        return min(1.0, n / e2f)
    if e2f <= 1.0:
        return 1.0
    return min(1.0, max(0.0, -math.expm1(n * math.log1p(-1.0 / e2f))))


def delta_union(fs: Sequence[float], epsilon1: float) -> float:
    """Union bound over players with per-player scores: min(1, sum 1/(eps^2 f_i))."""
    f = np.asarray(fs, dtype=float)
    if f.size == 0 or np.any(~(f > 0)) or not epsilon1 > 0:
        raise InvalidArgumentError("need a non-empty vector of positive scores and epsilon1 > 0")
    return min(1.0, float(np.sum(1.0 / (epsilon1 * epsilon1 * f))))


def budget_bound(n: int, epsilon1: float, delta: float, independent: bool = True, max_r: float = 1.0) -> float:
    """Smallest total budget m reaching (eps1, eps1 xi, delta)-fairness when r_i <= max_r.

    independent: n / (max_r eps^2 (1 - (1-delta)^(1/n)));  dependent: n^2 / (max_r eps^2 delta).
    """
    if not 0 < delta < 1:
        raise InvalidArgumentError(f"delta must lie in (0, 1), got {delta}")
    if not epsilon1 > 0 or not max_r > 0 or n < 1:
        raise InvalidArgumentError(f"need epsilon1 > 0, max_r > 0, n >= 1; got {epsilon1}, {max_r}, {n}")
    scale = max_r * epsilon1 * epsilon1
    if not independent:
        return n * n / (scale * delta)
    return n / (scale * -math.expm1(math.log1p(-delta) / n))


# ---------------------------------------------------------------------------
# Axiom checks


@dataclass
class A1Result:
    violations: list[int]
    n_null: int
    eps_abs: float


def eps_abs(phi_ref, phi_hat, cut: float = EPS_ABS_CUT) -> float:
    """Sum of |phi_hat_i - phi_i| over near-null players, both vectors scaled to sum 1."""
    ref, est = _vectors(phi_ref, phi_hat)
    sr, se = ref.sum(), est.sum()
    if not (sr > 0 and se > 0):
        raise InvalidArgumentError(f"standardisation needs positive sums, got {sr!r} and {se!r}")
    ref, est = ref / sr, est / se
    near_null = np.abs(ref) <= cut
    return math.fsum(np.abs(est[near_null] - ref[near_null]).tolist())


def check_a1(phi_ref, phi_hat, epsilon1: float, xi: float, null_tol: float = NULL_TOL) -> A1Result:
    """Players with a true-zero value whose estimate leaves the eps2 band.

    ``eps_abs`` is nan when either vector has a non-positive sum.
    """
    ref, est = _vectors(phi_ref, phi_hat)
    eps2 = epsilon1 * xi
    null = np.abs(ref) <= null_tol
    violations = np.flatnonzero(null & (np.abs(est) > eps2)).tolist()
    try:
        ea = eps_abs(ref, est)
    except InvalidArgumentError:
        ea = math.nan
    return A1Result(violations, int(null.sum()), ea)


def pair_threshold(phi_i: float, phi_j: float, epsilon1: float, xi: float, form: str = "axiom") -> float:
    """Allowed |phi_hat_i - phi_hat_j| for a symmetric pair.

    ``axiom`` sums both players' bands, eps1 (|phi_i| + |phi_j|) + 2 eps2.
    ``experiment`` is the single band t = eps1 |phi_i| + eps1 xi.
    """
    if form == "axiom":
        return epsilon1 * (abs(phi_i) + abs(phi_j)) + 2.0 * epsilon1 * xi
    if form == "experiment":
        return epsilon1 * abs(phi_i) + epsilon1 * xi
    raise InvalidArgumentError(f"threshold form must be one of {THRESHOLD_FORMS}, got {form!r}")


def deviation_ratio(a: float, b: float) -> float:
    """max(a/b, b/a) for same-sign non-zero estimates, else +inf."""
    if a == 0.0 or b == 0.0 or (a > 0) != (b > 0):
        return math.inf
    return max(a / b, b / a)


@dataclass
class A2Result:
    rate: float
    violations: list[tuple[int, int]]
    rho: list[float]
    logsum: float
    n_infinite_rho: int
    thresholds: list[float] = field(repr=False)


def _pairs(pairs) -> list[tuple[int, int]]:
    out = [(int(i), int(j)) for i, j in pairs]
    if not out:
        raise EmptyInputError("no pairs to check")
    return out


def check_a2(
    phi_ref, phi_hat, epsilon1: float, xi: float, symmetric_pairs, form: str = "axiom"
) -> A2Result:
    """Violation rate over symmetric pairs and the deviation-ratio log-sum.

    Pairs whose estimates cross sign or hit zero get rho = inf; they are left
    out of the log-sum and counted in ``n_infinite_rho``.
    """
    ref, est = _vectors(phi_ref, phi_hat)
    pairs = _pairs(symmetric_pairs)
    thresholds = [pair_threshold(ref[i], ref[j], epsilon1, xi, form) for i, j in pairs]
    violations = [p for p, t in zip(pairs, thresholds) if abs(est[p[0]] - est[p[1]]) > t]
    rho = [deviation_ratio(est[i], est[j]) for i, j in pairs]
    finite = [r for r in rho if math.isfinite(r)]
    logsum = math.log(math.fsum(finite)) if finite else math.nan
    return A2Result(len(violations) / len(pairs), violations, rho, logsum, len(rho) - len(finite), thresholds)


@dataclass
class A3Result:
    rate: float
    violations: list[tuple[int, int]]


def check_a3(phi_ref, phi_hat, epsilon1: float, xi: float, desirable_pairs) -> A3Result:
    """Fraction of ordered pairs (i more desirable than j) where phi_hat_i falls below phi_hat_j by more than the band."""
    ref, est = _vectors(phi_ref, phi_hat)
    pairs = _pairs(desirable_pairs)
    violations = [
        (i, j) for i, j in pairs if not est[i] - est[j] > -pair_threshold(ref[i], ref[j], epsilon1, xi, "axiom")
    ]
    return A3Result(len(violations) / len(pairs), violations)


# ---------------------------------------------------------------------------
# Accuracy and equity metrics


@dataclass
class RankMetrics:
    n_inv: int
    eps_inv: float
    mape: float
    mse: float


def mape(phi_ref, phi_hat, zero_tol: float = MAPE_ZERO_TOL) -> float:
    ref, est = _vectors(phi_ref, phi_hat)
    keep = np.abs(ref) > zero_tol
    if not keep.any():
        raise InvalidArgumentError("MAPE is undefined when every reference value is zero")
    return float(np.mean(np.abs((est[keep] - ref[keep]) / ref[keep])))


def rank_metrics(phi_ref, phi_hat) -> RankMetrics:
    """Inversion count and pairwise error over ordered pairs, plus MAPE and MSE.

    Each discordant unordered pair counts twice.  MAPE is nan when every
    reference value is zero.
    """
    ref, est = _vectors(phi_ref, phi_hat)
    if ref.size < 2:
        raise InvalidArgumentError("rank metrics need at least two players")
    dr = ref[:, None] - ref[None, :]
    de = est[:, None] - est[None, :]
    n_inv = int(np.sum((dr > 0) & (de < 0)) + np.sum((dr < 0) & (de > 0)))
    eps_inv = math.fsum(np.abs(dr - de).ravel().tolist())
    try:
        m = mape(ref, est)
    except InvalidArgumentError:
        m = math.nan
    return RankMetrics(n_inv, eps_inv, m, float(np.mean((est - ref) ** 2)))


def nl_nsw(fs, return_excluded: bool = False):
    """Negative log Nash social welfare of scores standardised to sum to their count.

    Infinite scores are dropped first; with ``return_excluded`` the number
    dropped is returned alongside.
    """
    f = np.asarray(fs, dtype=float)
    if np.any(np.isnan(f)) or np.any(f <= 0):
        raise InvalidArgumentError("fidelity scores must be positive")
    finite = f[np.isfinite(f)]
    excluded = f.size - finite.size
    if finite.size == 0:
        value = math.nan
    else:
        std = finite * (finite.size / finite.sum())
        value = -math.fsum(np.log(std).tolist())
    return (value, excluded) if return_excluded else value


# ---------------------------------------------------------------------------
# Aggregated report


@dataclass
class FairnessReport:
    epsilon1: list[float]
    delta_independent: list[float]
    delta_dependent: list[float]
    delta_union: list[float]
    a1_error: list[int]
    a2_violation_rate: list[float]
    a3_violation_rate: list[float]
    a2_threshold_details: list[list[float]] = field(repr=False)
    deviation_ratio_logsum: float = math.nan
    n_infinite_rho: int = 0
    eps_abs: float = math.nan
    nl_nsw: float = math.nan
    n_infinite_fs: int = 0
    n_inv: int = 0
    eps_inv: float = 0.0
    mape: float = math.nan
    mse: float = math.nan

    def rows(self) -> list[dict]:
        """One flat record per eps1 value."""
        shared = {
            k: getattr(self, k)
            for k in (
                "deviation_ratio_logsum", "n_infinite_rho", "eps_abs", "nl_nsw",
                "n_infinite_fs", "n_inv", "eps_inv", "mape", "mse",
            )
        }
        return [
            {
                "epsilon1": e,
                "delta_independent": self.delta_independent[k],
                "delta_dependent": self.delta_dependent[k],
                "delta_union": self.delta_union[k],
                "a1_violations": self.a1_error[k],
                "a2_rate": self.a2_violation_rate[k],
                "a3_rate": self.a3_violation_rate[k],
                **shared,
            }
            for k, e in enumerate(self.epsilon1)
        ]

    def to_dict(self) -> dict:
        return jsonable(asdict(self))


def fairness_report(
    phi_ref,
    result: EstimationResult,
    epsilon1_grid: Sequence[float],
    xi: float,
    symmetric_pairs=None,
    desirable_pairs=None,
) -> FairnessReport:
    """Every diagnostic for one estimate.  Metrics without pairs are nan."""
    ref, est = _vectors(phi_ref, result.phi_hat)
    fs = np.asarray(result.fs_per_player, dtype=float)
    n = ref.size
    min_fs = float(fs.min())
    nan_list = [math.nan] * len(epsilon1_grid)
    rep = FairnessReport(
        epsilon1=[float(e) for e in epsilon1_grid],
        delta_independent=[delta_bound(min_fs, e, n, True) for e in epsilon1_grid],
        delta_dependent=[delta_bound(min_fs, e, n, False) for e in epsilon1_grid],
        delta_union=[delta_union(fs, e) for e in epsilon1_grid],
        a1_error=[len(check_a1(ref, est, e, xi).violations) for e in epsilon1_grid],
        a2_violation_rate=list(nan_list),
        a3_violation_rate=list(nan_list),
        a2_threshold_details=[[] for _ in epsilon1_grid],
    )
    if symmetric_pairs:
        for k, e in enumerate(epsilon1_grid):
            a2 = check_a2(ref, est, e, xi, symmetric_pairs)
            rep.a2_violation_rate[k] = a2.rate
            rep.a2_threshold_details[k] = a2.thresholds
        rep.deviation_ratio_logsum = a2.logsum
        rep.n_infinite_rho = a2.n_infinite_rho
    if desirable_pairs:
        rep.a3_violation_rate = [check_a3(ref, est, e, xi, desirable_pairs).rate for e in epsilon1_grid]
    rep.eps_abs = check_a1(ref, est, 1.0, xi).eps_abs
    rep.nl_nsw, rep.n_infinite_fs = nl_nsw(fs, return_excluded=True)
    rm = rank_metrics(ref, est)
    rep.n_inv, rep.eps_inv, rep.mape, rep.mse = rm.n_inv, rm.eps_inv, rm.mape, rm.mse
    return rep


# ---------------------------------------------------------------------------
# Empirical check of the Chebyshev bound


@dataclass(frozen=True)
class ChebyshevCell:
    player: int
    epsilon1: float
    empirical: float
    bound: float
    std_err: float
    vacuous: bool
    passed: bool


def exact_fidelity(result: EstimationResult, exact, config: GaeConfig) -> np.ndarray:
    """True FS of each player's estimate given its sample counts and proposal.

    Bootstrap samples are uniform; the rest follow the run's proposal, so the
    estimate's variance is (m' V_U + (m_i - m') V_theta) / m_i^2.
    """
    xi = config.xi
    out = np.empty(exact.n)
    for i in range(exact.n):
        m_i = int(result.m_per_player[i])
        v_u = float(exact.variance_uniform[i])
        if result.proposal is None:
            var = v_u / m_i
        else:
            m_b = config.m_bootstrap
            v_t = max(proposal_variance(result.proposal.for_player(i), exact, i), 0.0)
            var = (m_b * v_u + (m_i - m_b) * v_t) / (m_i * m_i)
        signal = (abs(exact.phi[i]) + xi) ** 2
        out[i] = math.inf if var <= 1e-300 else signal / var
    return out


def chebyshev_check(
    game: CooperativeGame,
    kind: str,
    config: GaeConfig,
    epsilon1_list: Sequence[float],
    trials: int,
    workers: int = 1,
) -> list[ChebyshevCell]:
    """Empirical Pr[|phi_hat_i - phi_i| > eps1 |phi_i| + eps1 xi] against 1/(eps1^2 f_i).

    f_i is the exact FS implied by each trial's allocation and proposal;
    per-trial bounds are averaged.  A cell passes when the empirical rate is at
    most min(bound, 1) plus three binomial standard errors.
    """
    if trials < 1:
        raise InvalidArgumentError("trials must be >= 1")
    exact = exact_moments(game)
    phi = exact.phi
    eps = np.asarray(epsilon1_list, dtype=float)

    def one(t: int):
        res = run_estimator(kind, game, config, trial=t)
        dev = np.abs(res.phi_hat - phi)
        f = exact_fidelity(res, exact, config)
        band = eps[:, None] * (np.abs(phi)[None, :] + config.xi)
        with np.errstate(divide="ignore"):
            bound = np.minimum(1.0 / (eps[:, None] ** 2 * f[None, :]), 1.0)
        return dev[None, :] > band, bound

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outs = list(pool.map(one, range(trials)))
    else:
        outs = [one(t) for t in range(trials)]
    hits = np.mean([o[0] for o in outs], axis=0)
    bounds = np.mean([o[1] for o in outs], axis=0)
    cells = []
    for a, e in enumerate(eps):
        for i in range(exact.n):
            b = float(bounds[a, i])
            se = math.sqrt(b * (1.0 - b) / trials)
            emp = float(hits[a, i])
            cells.append(ChebyshevCell(i, float(e), emp, b, se, b >= 1.0, emp <= b + 3.0 * se))
    return cells


# ---------------------------------------------------------------------------
# JSON helpers


def json_float(x):
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def jsonable(obj):
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        return json_float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj
