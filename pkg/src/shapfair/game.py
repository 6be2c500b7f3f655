"""Cooperative games: characteristic functions over bitmask coalitions.

A coalition is a plain ``int`` whose bit ``k`` is set when player ``k`` is a
member.  Games memoise every evaluated coalition and count the number of
distinct characteristic-function evaluations they performed.
"""

from __future__ import annotations

import json
import math
import queue
import shlex
import subprocess
import threading
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    CapacityError,
    ExternalUtilityError,
    FormatError,
    InvalidArgumentError,
    InvalidCoalitionError,
    NumericError,
)

MAX_PLAYERS = 64
MAX_TABLE_PLAYERS = 20
TABLE_FORMAT = "shapfair-game-v1"


def coalition(players: Iterable[int]) -> int:
    """Bitmask of the given player indices."""
    mask = 0
    for p in players:
        if p < 0:
            raise InvalidCoalitionError(f"negative player index {p}")
        mask |= 1 << int(p)
    return mask


def members(c: int) -> tuple[int, ...]:
    """Sorted player indices contained in coalition ``c``."""
    out = []
    k = 0
    while c:
        if c & 1:
            out.append(k)
        c >>= 1
        k += 1
    return tuple(out)


def size(c: int) -> int:
    return int(c).bit_count()


class CooperativeGame:
    """A deterministic n-player game with a memoised characteristic function.

    ``value_fn`` receives a coalition bitmask and returns its utility.  It must
    be total (including the empty coalition) and deterministic.  The memo is
    safe for concurrent read-only use: racing evaluations of one coalition
    store the first value and count once.
    """

    def __init__(
        self,
        n: int,
        value_fn: Callable[[int], float],
        name: str = "game",
        clone_pairs: Sequence[tuple[int, int]] | None = None,
    ):
        if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_PLAYERS:
            raise CapacityError(f"player count must be in [1, {MAX_PLAYERS}], got {n}")
        self.n = int(n)
        self.name = name
        self.clone_pairs = [tuple(p) for p in clone_pairs] if clone_pairs else []
        self._value_fn = value_fn
        self._cache: dict[int, float] = {}
        self._lock = threading.Lock()
        self._evals = 0
        self._table: np.ndarray | None = None

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r}, n={self.n})"

    @property
    def grand(self) -> int:
        return (1 << self.n) - 1

    @property
    def eval_count(self) -> int:
        """Number of distinct coalitions evaluated so far."""
        return self._evals

    def check_coalition(self, c: int) -> int:
        if isinstance(c, bool) or not isinstance(c, (int, np.integer)):
            raise InvalidCoalitionError(f"coalition must be an integer bitmask, got {c!r}")
        c = int(c)
        if c < 0 or c >> self.n:
            raise InvalidCoalitionError(f"coalition {c} has members outside players 0..{self.n - 1}")
        return c

    def evaluate(self, c: int) -> float:
        """v(c). Cache hits do not touch the evaluation counter."""
        c = self.check_coalition(c)
        try:
            return self._cache[c]
        except KeyError:
            pass
        value = float(self._value_fn(c))
        if not math.isfinite(value):
            raise NumericError(f"{self.name}: v({c}) is not finite ({value})")
        with self._lock:
            if c not in self._cache:
                self._cache[c] = value
                self._evals += 1
            return self._cache[c]

    def marginal_contribution(self, i: int, predecessors: int) -> float:
        """v(P u {i}) - v(P) for a predecessor set P not containing i."""
        if not 0 <= i < self.n:
            raise InvalidArgumentError(f"player {i} outside 0..{self.n - 1}")
        predecessors = self.check_coalition(predecessors)
        bit = 1 << i
        if predecessors & bit:
            raise InvalidArgumentError(f"player {i} is already among the predecessors {predecessors}")
        return self.evaluate(predecessors | bit) - self.evaluate(predecessors)

    def value_table(self) -> np.ndarray:
        """All 2^n utilities indexed by bitmask (n <= 20). Cached, read-only."""
        if self.n > MAX_TABLE_PLAYERS:
            raise CapacityError(f"dense tables need n <= {MAX_TABLE_PLAYERS}, got {self.n}")
        if self._table is None:
            table = np.fromiter((self.evaluate(c) for c in range(1 << self.n)), dtype=float, count=1 << self.n)
            table.flags.writeable = False
            self._table = table
        return self._table


class TableGame(CooperativeGame):
    """Game backed by a dense array of 2^n utilities."""

    def __init__(self, values: Sequence[float] | np.ndarray, name: str = "table", clone_pairs=None):
        values = np.array(values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise FormatError("table must be a 1-d array of 2^n values")
        n = int(values.size).bit_length() - 1
        if values.size != 1 << n:
            raise FormatError(f"table length {values.size} is not a power of two")
        if n > MAX_TABLE_PLAYERS:
            raise CapacityError(f"table games are capped at n = {MAX_TABLE_PLAYERS}")
        if not np.all(np.isfinite(values)):
            raise FormatError("table contains non-finite values")
        values.flags.writeable = False
        self.values = values
        super().__init__(n, lambda c: values[c], name=name, clone_pairs=clone_pairs)


# ---------------------------------------------------------------------------
# Synthetic families


def additive(weights: Sequence[float]) -> CooperativeGame:
    """v(S) = sum of member weights; phi = weights."""
    w = [float(x) for x in weights]
    n = len(w)

    def v(c: int) -> float:
        return math.fsum(w[k] for k in range(n) if c >> k & 1)

    return CooperativeGame(n, v, name="additive")


def majority(n: int, quota: int | None = None) -> CooperativeGame:
    """Simple majority game: v(S) = 1 iff |S| >= quota (default: strict majority)."""
    q = n // 2 + 1 if quota is None else int(quota)
    if not 1 <= q <= n:
        raise InvalidArgumentError(f"quota {q} outside 1..{n}")
    return CooperativeGame(n, lambda c: 1.0 if c.bit_count() >= q else 0.0, name="majority")


def weighted_voting(weights: Sequence[float], quota: float) -> CooperativeGame:
    """v(S) = 1 iff the summed weight of S reaches ``quota``."""
    w = [float(x) for x in weights]
    n = len(w)
    q = float(quota)

    def v(c: int) -> float:
        return 1.0 if math.fsum(w[k] for k in range(n) if c >> k & 1) >= q else 0.0

    return CooperativeGame(n, v, name="weighted_voting")


def glove(left: Iterable[int], right: Iterable[int]) -> CooperativeGame:
    """Glove market: v(S) = min(|S n L|, |S n R|)."""
    lmask, rmask = coalition(left), coalition(right)
    if lmask & rmask:
        raise InvalidArgumentError("a player cannot hold both a left and a right glove")
    n = (lmask | rmask).bit_length()
    return CooperativeGame(
        n, lambda c: float(min((c & lmask).bit_count(), (c & rmask).bit_count())), name="glove"
    )


def airport(costs: Sequence[float]) -> CooperativeGame:
    """Airport game, v(S) = max cost among members (0 for the empty set)."""
    cs = [float(x) for x in costs]
    n = len(cs)

    def v(c: int) -> float:
        return max((cs[k] for k in range(n) if c >> k & 1), default=0.0)

    return CooperativeGame(n, v, name="airport")


def airport_shapley(costs: Sequence[float]) -> np.ndarray:
    """Closed-form Shapley values of :func:`airport` (Littlechild-Owen)."""
    cs = np.asarray(costs, dtype=float)
    n = cs.size
    order = np.argsort(cs, kind="stable")
    sorted_costs = cs[order]
    increments = np.diff(np.concatenate([[0.0], sorted_costs])) / (n - np.arange(n))
    phi = np.empty(n)
    phi[order] = np.cumsum(increments)
    return phi


def duplicated(base: CooperativeGame) -> CooperativeGame:
    """2n-player game in which player n+i is a functional clone of player i.

    Coalitions collapse each clone onto its original before evaluating the
    base game, so a second copy never adds utility.
    """
    n = base.n
    if 2 * n > MAX_PLAYERS:
        raise CapacityError(f"duplicating {n} players exceeds {MAX_PLAYERS}")
    low = (1 << n) - 1

    def v(c: int) -> float:
        return base.evaluate((c | (c >> n)) & low)

    return CooperativeGame(
        2 * n, v, name=f"duplicated({base.name})", clone_pairs=[(i, n + i) for i in range(n)]
    )


def threshold(weights: Sequence[float], k: int) -> CooperativeGame:
    """v(S) = summed member weight once |S| >= k, else 0."""
    w = [float(x) for x in weights]
    n = len(w)
    k = int(k)
    if not 0 <= k <= n:
        raise InvalidArgumentError(f"size threshold {k} outside 0..{n}")

    def v(c: int) -> float:
        if c.bit_count() < k:
            return 0.0
        return math.fsum(w[j] for j in range(n) if c >> j & 1)

    return CooperativeGame(n, v, name="threshold")


def union(*games: CooperativeGame) -> CooperativeGame:
    """Disjoint union: players of later games follow those of earlier ones, utilities add."""
    if not games:
        raise InvalidArgumentError("union needs at least one game")
    offsets = []
    total = 0
    for g in games:
        offsets.append(total)
        total += g.n
    if total > MAX_PLAYERS:
        raise CapacityError(f"union has {total} players, more than {MAX_PLAYERS}")
    parts = [(g, off, (1 << g.n) - 1) for g, off in zip(games, offsets)]

    def v(c: int) -> float:
        return math.fsum(g.evaluate((c >> off) & mask) for g, off, mask in parts)

    pairs = [(a + off, b + off) for g, off in zip(games, offsets) for a, b in g.clone_pairs]
    return CooperativeGame(total, v, name="union(" + ", ".join(g.name for g in games) + ")", clone_pairs=pairs)


def random_game(n: int, seed: int = 0, low: float = -1.0, high: float = 1.0) -> TableGame:
    """Table game with every v(S), including v(empty), drawn uniform[low, high]."""
    if not 1 <= n <= MAX_TABLE_PLAYERS:
        raise CapacityError(f"random table games need 1 <= n <= {MAX_TABLE_PLAYERS}")
    values = np.random.default_rng(seed).uniform(low, high, size=1 << n)
    return TableGame(values, name="random")


def saturating(n: int, seed: int = 0, scale: float = 0.1, noise: float = 0.01) -> TableGame:
    """Accuracy-like random game with diminishing returns.

    v(S) = 1 - exp(-sum_{i in S} w_i) + e_S, with w_i ~ Exponential(scale) and
    independent e_S ~ Normal(0, noise^2) for every coalition.
    """
    if not 1 <= n <= MAX_TABLE_PLAYERS:
        raise CapacityError(f"saturating table games need 1 <= n <= {MAX_TABLE_PLAYERS}")
    if not scale > 0 or not noise >= 0:
        raise InvalidArgumentError("need scale > 0 and noise >= 0")
    rng = np.random.default_rng(seed)
    w = rng.exponential(scale, n)
    bits = (np.arange(1 << n)[:, None] >> np.arange(n)) & 1
    values = -np.expm1(-(bits @ w)) + rng.normal(0.0, noise, 1 << n)
    return TableGame(values, name="saturating")


FAMILIES = (
    "additive", "majority", "weighted_voting", "glove", "airport", "threshold", "random", "saturating",
    "duplicated", "union",
)


def make_synthetic(family: str, **params) -> CooperativeGame:
    """Build a built-in game family by name.

    ``duplicated`` takes ``base`` and ``union`` takes ``games``; each base is a
    game or a nested ``{"family": ..., **params}`` mapping.
    """

    def build(spec):
        if isinstance(spec, CooperativeGame):
            return spec
        spec = dict(spec)
        return make_synthetic(spec.pop("family"), **spec)

    try:
        if family == "additive":
            return additive(params["weights"])
        if family == "majority":
            return majority(int(params["n"]), params.get("quota"))
        if family == "weighted_voting":
            return weighted_voting(params["weights"], params["quota"])
        if family == "glove":
            return glove(params.get("left", (0, 1)), params.get("right", (2,)))
        if family == "airport":
            return airport(params["costs"])
        if family == "threshold":
            return threshold(params["weights"], params["k"])
        if family == "random":
            return random_game(
                int(params["n"]), int(params.get("seed", 0)), params.get("low", -1.0), params.get("high", 1.0)
            )
        if family == "saturating":
            return saturating(
                int(params["n"]), int(params.get("seed", 0)), params.get("scale", 0.1), params.get("noise", 0.01)
            )
        if family == "duplicated":
            return duplicated(build(params["base"]))
        if family == "union":
            return union(*(build(g) for g in params["games"]))
    except KeyError as exc:
        raise InvalidArgumentError(f"family {family!r} requires parameter {exc.args[0]!r}") from None
    raise InvalidArgumentError(f"unknown game family {family!r}; expected one of {FAMILIES}")


# ---------------------------------------------------------------------------
# Game table files


def save_table(game: CooperativeGame, path: str | Path) -> None:
    """Write every 2^n utility of ``game`` in the shapfair-game-v1 format."""
    table = game.value_table()
    doc = {
        "format": TABLE_FORMAT,
        "n": game.n,
        "values": {str(c): float(x) for c, x in enumerate(table)},
    }
    Path(path).write_text(json.dumps(doc, allow_nan=False))


def load_table(path: str | Path) -> TableGame:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: cannot read game table: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != TABLE_FORMAT:
        raise FormatError(f"{path}: expected format {TABLE_FORMAT!r}")
    n = doc.get("n")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise FormatError(f"{path}: 'n' must be a positive integer")
    if n > MAX_TABLE_PLAYERS:
        raise FormatError(f"{path}: table games are capped at n = {MAX_TABLE_PLAYERS}, got {n}")
    raw = doc.get("values")
    if not isinstance(raw, dict):
        raise FormatError(f"{path}: 'values' must be an object keyed by bitmask")
    values = np.empty(1 << n)
    for c in range(1 << n):
        try:
            x = raw[str(c)]
        except KeyError:
            raise FormatError(f"{path}: missing value for coalition {c}") from None
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise FormatError(f"{path}: value for coalition {c} is not a finite number: {x!r}")
        values[c] = x
    if len(raw) != 1 << n:
        raise FormatError(f"{path}: {len(raw) - (1 << n)} unexpected keys")
    return TableGame(values, name=Path(path).stem)


# ---------------------------------------------------------------------------
# Subprocess utilities


class SubprocessGame(CooperativeGame):
    """Game whose utilities come from a child process speaking the line protocol.

    Parent sends ``EVAL <bitmask>``; the child answers ``VALUE <float>``;
    ``QUIT`` ends the session.  Queries are serialised through one child, so
    instances are exclusive-access even though the memo is shared.
    """

    def __init__(self, command: str | Sequence[str], n: int, timeout: float = 60.0, name: str = "subprocess"):
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_PLAYERS:
            raise CapacityError(f"player count must be in [1, {MAX_PLAYERS}], got {n}")
        if not timeout > 0:
            raise InvalidArgumentError(f"timeout must be positive, got {timeout}")
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = float(timeout)
        self._io_lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ExternalUtilityError(f"cannot start utility process {self.command}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        super().__init__(n, self._query, name=name)

    def _pump(self) -> None:
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _query(self, c: int) -> float:
        request = f"EVAL {c}"
        with self._io_lock:
            if self._proc.poll() is not None:
                raise ExternalUtilityError(f"utility process exited with code {self._proc.returncode}", request)
            try:
                self._proc.stdin.write(request + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ExternalUtilityError(f"cannot write to utility process: {exc}", request) from exc
            try:
                line = self._lines.get(timeout=self.timeout)
            except queue.Empty:
                raise ExternalUtilityError(f"utility process timed out after {self.timeout} s", request) from None
        if line is None:
            raise ExternalUtilityError("utility process closed its output", request)
        parts = line.split()
        if len(parts) != 2 or parts[0] != "VALUE":
            raise ExternalUtilityError(f"malformed reply {line.strip()!r}", request)
        try:
            value = float(parts[1])
        except ValueError:
            raise ExternalUtilityError(f"malformed value {parts[1]!r}", request) from None
        if not math.isfinite(value):
            raise ExternalUtilityError(f"non-finite value {parts[1]!r}", request)
        return value

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.write("QUIT\n")
                self._proc.stdin.flush()
                self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
                self._proc.wait()

    def __enter__(self) -> "SubprocessGame":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def subprocess_game(command: str | Sequence[str], n: int, timeout: float = 60.0) -> SubprocessGame:
    return SubprocessGame(command, n, timeout=timeout)
