"""Experiment configuration: parsing, validation and game construction."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError, FormatError, ShapfairError
from .estimators import ESTIMATORS, GaeConfig
from .exact import MAX_MOMENT_PLAYERS, MAX_SUBSET_PLAYERS, desirable_pairs, symmetric_pairs
from .game import FAMILIES, CooperativeGame, load_table, make_synthetic, subprocess_game

PHI_FORMAT = "shapfair-phi-v1"
SWEEP_AXES = ("budget", "epsilon1", "alpha")
_TOP_KEYS = {
    "game", "estimators", "epsilon1_grid", "trials", "seed", "reference", "outputs",
    "sweep", "symmetric_pairs", "desirable_pairs",
}
_ESTIMATOR_KEYS = GaeConfig.field_names() - {"seed", "record_trace"} | {"kind", "name"}


@dataclass
class EstimatorSpec:
    name: str
    kind: str
    config: GaeConfig

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind, **self.config.to_dict()}
        out.pop("seed")
        out.pop("record_trace")
        return out


@dataclass
class ExperimentConfig:
    game: dict
    estimators: list[EstimatorSpec]
    epsilon1_grid: list[float] = field(default_factory=lambda: [0.5])
    trials: int = 1
    seed: int = 0
    reference: Any = "exact"
    outputs: str = "out"
    sweep: dict | None = None
    symmetric_pairs: Any = None
    desirable_pairs: Any = None
    base_dir: Path = field(default=Path("."), repr=False)

    def to_dict(self) -> dict:
        """Normalised form; feeding it back reproduces the run."""
        return {
            "game": copy.deepcopy(self.game),
            "estimators": [e.to_dict() for e in self.estimators],
            "epsilon1_grid": list(self.epsilon1_grid),
            "trials": self.trials,
            "seed": self.seed,
            "reference": self.reference,
            "outputs": self.outputs,
            "sweep": copy.deepcopy(self.sweep),
            "symmetric_pairs": self.symmetric_pairs,
            "desirable_pairs": self.desirable_pairs,
        }

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def estimator_config(self, spec: EstimatorSpec) -> GaeConfig:
        cfg = copy.copy(spec.config)
        cfg.seed = self.seed
        return cfg


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_real(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _check_game(game, problems: list[str]) -> None:
    if not isinstance(game, dict):
        problems.append("game: must be an object with one of 'builtin', 'table' or 'command'")
        return
    sources = [k for k in ("builtin", "table", "command") if k in game]
    if len(sources) != 1:
        problems.append(f"game: exactly one of 'builtin', 'table', 'command' required, got {sources or 'none'}")
        return
    src = sources[0]
    allowed = {"builtin": {"builtin", "params"}, "table": {"table"}, "command": {"command", "n", "timeout"}}[src]
    for k in sorted(set(game) - allowed):
        problems.append(f"game.{k}: unknown key for a {src} game")
    if src == "builtin":
        if game["builtin"] not in FAMILIES:
            problems.append(f"game.builtin: unknown family {game['builtin']!r}; expected one of {FAMILIES}")
        if not isinstance(game.get("params", {}), dict):
            problems.append("game.params: must be an object")
    elif src == "table":
        if not isinstance(game["table"], str):
            problems.append("game.table: must be a file path")
    else:
        if not isinstance(game["command"], (str, list)):
            problems.append("game.command: must be a string or an argument list")
        if not _is_int(game.get("n")) or game.get("n", 0) < 1:
            problems.append("game.n: subprocess games need a positive integer player count")
        if "timeout" in game and not (_is_real(game["timeout"]) and game["timeout"] > 0):
            problems.append("game.timeout: must be a positive number of seconds")


def _parse_estimators(raw, problems: list[str]) -> list[EstimatorSpec]:
    if not isinstance(raw, list) or not raw:
        problems.append("estimators: at least one estimator is required")
        return []
    out = []
    names = set()
    for k, item in enumerate(raw):
        where = f"estimators[{k}]"
        if isinstance(item, str):
            item = {"kind": item}
        if not isinstance(item, dict):
            problems.append(f"{where}: must be an estimator name or an object")
            continue
        kind = item.get("kind")
        if kind not in ESTIMATORS:
            problems.append(f"{where}.kind: must be one of {sorted(ESTIMATORS)}, got {kind!r}")
            continue
        for key in sorted(set(item) - _ESTIMATOR_KEYS):
            problems.append(f"{where}.{key}: unknown estimator setting")
        params = {key: item[key] for key in item if key in GaeConfig.field_names()}
        cfg = GaeConfig(**params)
        problems.extend(f"{where}: {p}" for p in cfg.problems())
        name = item.get("name", kind)
        if name in names:
            problems.append(f"{where}.name: duplicate estimator name {name!r}")
        names.add(name)
        out.append(EstimatorSpec(name, kind, cfg))
    return out


def _check_pairs(key: str, value, problems: list[str]) -> None:
    if value is None or value == "auto":
        return
    if not isinstance(value, list) or not all(
        isinstance(p, (list, tuple)) and len(p) == 2 and all(_is_int(x) and x >= 0 for x in p) for p in value
    ):
        problems.append(f"{key}: must be 'auto', null or a list of [i, j] index pairs")


def parse_config(doc: dict, base_dir: str | Path = ".") -> ExperimentConfig:
    """Validate a configuration mapping, reporting every problem at once."""
    if not isinstance(doc, dict):
        raise ConfigError(["configuration must be a JSON object"])
    problems: list[str] = [f"{k}: unknown top-level key" for k in sorted(set(doc) - _TOP_KEYS)]
    if "game" not in doc:
        problems.append("game: required")
    else:
        _check_game(doc["game"], problems)
    estimators = _parse_estimators(doc.get("estimators"), problems)
    grid = doc.get("epsilon1_grid", [0.5])
    if not isinstance(grid, list) or not grid or not all(_is_real(e) and e > 0 for e in grid):
        problems.append("epsilon1_grid: must be a non-empty list of positive numbers")
    trials = doc.get("trials", 1)
    if not _is_int(trials) or trials < 1:
        problems.append(f"trials: must be an integer >= 1, got {trials!r}")
    seed = doc.get("seed", 0)
    if not _is_int(seed) or not 0 <= seed < 1 << 64:
        problems.append(f"seed: must be an unsigned 64-bit integer, got {seed!r}")
    reference = doc.get("reference", "exact")
    if reference is not None and reference != "exact" and not isinstance(reference, str):
        problems.append("reference: must be 'exact', null or a path to a phi file")
    outputs = doc.get("outputs", "out")
    if not isinstance(outputs, str):
        problems.append("outputs: must be a directory path")
    sweep = doc.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict) or sweep.get("axis") not in SWEEP_AXES:
            problems.append(f"sweep.axis: must be one of {SWEEP_AXES}")
        elif not isinstance(sweep.get("values"), list) or not sweep["values"]:
            problems.append("sweep.values: must be a non-empty list")
        else:
            vals = sweep["values"]
            if sweep["axis"] == "budget" and not all(_is_int(v) and v >= 0 for v in vals):
                problems.append("sweep.values: budgets must be non-negative integers")
            if sweep["axis"] == "epsilon1" and not all(_is_real(v) and v > 0 for v in vals):
                problems.append("sweep.values: epsilon1 values must be positive")
            if sweep["axis"] == "alpha" and not all(_is_real(v) and v >= 0 for v in vals):
                problems.append("sweep.values: alpha values must be non-negative")
    for key in ("symmetric_pairs", "desirable_pairs"):
        _check_pairs(key, doc.get(key), problems)
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(
        game=copy.deepcopy(doc["game"]),
        estimators=estimators,
        epsilon1_grid=[float(e) for e in grid],
        trials=trials,
        seed=seed,
        reference=reference,
        outputs=outputs,
        sweep=copy.deepcopy(sweep),
        symmetric_pairs=doc.get("symmetric_pairs"),
        desirable_pairs=doc.get("desirable_pairs"),
        base_dir=Path(base_dir),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc})"]) from None
    return parse_config(doc, path.parent)


def build_game(cfg: ExperimentConfig) -> CooperativeGame:
    g = cfg.game
    if "builtin" in g:
        return make_synthetic(g["builtin"], **g.get("params", {}))
    if "table" in g:
        return load_table(cfg.resolve(g["table"]))
    return subprocess_game(g["command"], g["n"], timeout=g.get("timeout", 60.0))


def load_phi(path: str | Path, n: int | None = None) -> np.ndarray:
    """Read a reference vector in the shapfair-phi-v1 format."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read reference file {path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != PHI_FORMAT or not isinstance(doc.get("phi"), list):
        raise FormatError(f"{path}: expected {{'format': '{PHI_FORMAT}', 'phi': [...]}}")
    phi = np.array(doc["phi"], dtype=float)
    if not np.all(np.isfinite(phi)):
        raise FormatError(f"{path}: reference contains non-finite values")
    if n is not None and phi.size != n:
        raise FormatError(f"{path}: reference has {phi.size} entries, game has {n} players")
    return phi


def save_phi(phi, path: str | Path) -> None:
    Path(path).write_text(json.dumps({"format": PHI_FORMAT, "phi": [float(x) for x in phi]}))


def reference_phi(cfg: ExperimentConfig, game: CooperativeGame) -> np.ndarray | None:
    from .exact import exact_shapley_subsets

    if cfg.reference is None:
        return None
    if cfg.reference == "exact":
        if game.n > MAX_SUBSET_PLAYERS:
            raise ConfigError([f"reference: 'exact' needs n <= {MAX_SUBSET_PLAYERS}, game has {game.n}"])
        return exact_shapley_subsets(game)
    return load_phi(cfg.resolve(cfg.reference), game.n)


def resolve_pairs(cfg: ExperimentConfig, game: CooperativeGame) -> tuple[list, list]:
    """Symmetric and desirable pairs: explicit lists, clone pairs, or detected when n is small."""

    def check(pairs, key):
        for i, j in pairs:
            if i >= game.n or j >= game.n or i == j:
                raise ConfigError([f"{key}: pair {[i, j]} is not two distinct players of the game"])
        return [tuple(p) for p in pairs]

    def detect(key, value, fn, known):
        if isinstance(value, list):
            return check(value, key)
        if value is None and known:
            return list(known)
        if value == "auto" or value is None:
            if game.n <= MAX_MOMENT_PLAYERS:
                return fn(game)
            if value == "auto":
                raise ConfigError([f"{key}: automatic detection needs n <= {MAX_MOMENT_PLAYERS}"])
        return []

    try:
        sym = detect("symmetric_pairs", cfg.symmetric_pairs, symmetric_pairs, game.clone_pairs)
        des = detect("desirable_pairs", cfg.desirable_pairs, desirable_pairs, None)
    except ShapfairError:
        raise
    return sym, des
