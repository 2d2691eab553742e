"""Run configuration files.

Line-based "key = value" text; blank lines and full-line '#' comments are
skipped, unknown or repeated keys are rejected. `pattern` and `rank` are
required, everything else has a default.

    pruner          = obs             magnitude | wanda | obs
    lowrank         = gd              svd | diag | gd
    scaled          = true            precondition the gd solver
    t_am            = 80              outer iterations
    t_lr            = 50              descent steps per outer iteration
    eta             = 0.01            base step size
    percdamp        = 0.01            damping fraction
    damp_convention = mean-diag       mean-diag | trace
    seed            = 0
    pattern         = 2:4             dense | k:<int> | k:auto | <N>:<M>
    rank            = 64              <int> | auto:<rho> | ratio:<kappa>,<rho>
    granularity     = per-matrix      per-matrix | per-column (k:<int> only)
    nonlinearity    = identity        identity | relu (between pipeline layers)
    blocksize       = 128             obs sweep block

"rank = auto:<rho>" needs an n:m pattern and solves the rank budget for a
(1-rho) total compression. "rank = ratio:<kappa>,<rho>" needs
"pattern = k:auto" and derives both the rank and the keep-count from the
budget split.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .altmin import LOWRANK_MODES, NONLINEARITIES, AltMinConfig
from .budget import budget_for_rank_ratio, rank_for_fixed_compression
from .gram import DAMP_CONVENTIONS
from .pruners import OBS, Magnitude, PrunerKind, Wanda
from .types import ContractError, Dense, SemiStructured, SparsityPattern, Unstructured

PRUNERS = ("magnitude", "wanda", "obs")

_DEFAULTS = {
    "pruner": "obs",
    "lowrank": "gd",
    "scaled": "true",
    "t_am": "80",
    "t_lr": "50",
    "eta": "0.01",
    "percdamp": "0.01",
    "damp_convention": "mean-diag",
    "seed": "0",
    "granularity": "per-matrix",
    "nonlinearity": "identity",
    "blocksize": "128",
}
_REQUIRED = ("pattern", "rank")
_KNOWN_KEYS = set(_DEFAULTS) | set(_REQUIRED)


@dataclass(frozen=True)
class RunConfig:
    """Parsed but unresolved configuration; pattern/rank stay as written."""

    pruner: str
    lowrank: str
    scaled: bool
    t_am: int
    t_lr: int
    eta: float
    percdamp: float
    damp_convention: str
    seed: int
    pattern: str
    rank: str
    granularity: str
    nonlinearity: str
    blocksize: int


@dataclass(frozen=True)
class ResolvedRun:
    """Configuration bound to one matrix shape."""

    pattern: SparsityPattern
    rank: int
    altmin: AltMinConfig


def _parse_int(raw: str, key: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ContractError(f"config key {key}: expected an integer, got {raw!r}") from None


def _parse_float(raw: str, key: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ContractError(f"config key {key}: expected a number, got {raw!r}") from None


def _parse_bool(raw: str, key: str) -> bool:
    if raw == "true":
        return True
    if raw == "false":
        return False
    raise ContractError(f"config key {key}: expected true or false, got {raw!r}")


def parse_config(text: str) -> RunConfig:
    """Parse config text; see the module docstring for the key table."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ContractError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _KNOWN_KEYS:
            raise ContractError(f"config line {lineno}: unknown key {key!r}")
        if key in values:
            raise ContractError(f"config line {lineno}: repeated key {key!r}")
        if not raw:
            raise ContractError(f"config line {lineno}: empty value for {key!r}")
        values[key] = raw
    for key in _REQUIRED:
        if key not in values:
            raise ContractError(f"config is missing required key {key!r}")
    merged = dict(_DEFAULTS)
    merged.update(values)

    cfg = RunConfig(
        pruner=merged["pruner"],
        lowrank=merged["lowrank"],
        scaled=_parse_bool(merged["scaled"], "scaled"),
        t_am=_parse_int(merged["t_am"], "t_am"),
        t_lr=_parse_int(merged["t_lr"], "t_lr"),
        eta=_parse_float(merged["eta"], "eta"),
        percdamp=_parse_float(merged["percdamp"], "percdamp"),
        damp_convention=merged["damp_convention"],
        seed=_parse_int(merged["seed"], "seed"),
        pattern=merged["pattern"],
        rank=merged["rank"],
        granularity=merged["granularity"],
        nonlinearity=merged["nonlinearity"],
        blocksize=_parse_int(merged["blocksize"], "blocksize"),
    )
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.pruner not in PRUNERS:
        raise ContractError(f"pruner must be one of {PRUNERS}, got {cfg.pruner!r}")
    if cfg.lowrank not in LOWRANK_MODES:
        raise ContractError(f"lowrank must be one of {LOWRANK_MODES}, got {cfg.lowrank!r}")
    if cfg.damp_convention not in DAMP_CONVENTIONS:
        raise ContractError(f"damp_convention must be one of {DAMP_CONVENTIONS}")
    if cfg.granularity not in ("per-matrix", "per-column"):
        raise ContractError(f"granularity must be per-matrix or per-column, got {cfg.granularity!r}")
    if cfg.nonlinearity not in NONLINEARITIES:
        raise ContractError(f"nonlinearity must be one of {NONLINEARITIES}")
    if cfg.t_am < 1 or cfg.t_lr < 1:
        raise ContractError("t_am and t_lr must be >= 1")
    if cfg.eta <= 0 or cfg.percdamp <= 0:
        raise ContractError("eta and percdamp must be > 0")
    if cfg.blocksize < 1:
        raise ContractError("blocksize must be >= 1")
    _parse_pattern_spec(cfg.pattern)
    _parse_rank_spec(cfg.rank)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


def _parse_pattern_spec(spec: str):
    """-> ("dense", None) | ("k", int | "auto") | ("nm", (n, m))"""
    if spec == "dense":
        return "dense", None
    if spec.startswith("k:"):
        raw = spec[2:]
        if raw == "auto":
            return "k", "auto"
        k = _parse_int(raw, "pattern")
        if k < 0:
            raise ContractError(f"pattern keep-count must be >= 0, got {k}")
        return "k", k
    if ":" in spec:
        left, _, right = spec.partition(":")
        n = _parse_int(left, "pattern")
        m = _parse_int(right, "pattern")
        if not (1 <= n <= m):
            raise ContractError(f"pattern needs 1 <= n <= m, got {spec!r}")
        return "nm", (n, m)
    raise ContractError(f"cannot parse pattern {spec!r}")


def _parse_rank_spec(spec: str):
    """-> ("fixed", int) | ("auto", rho) | ("ratio", (kappa, rho))"""
    if spec.startswith("auto:"):
        rho = _parse_float(spec[5:], "rank")
        if not (0.0 <= rho < 1.0):
            raise ContractError(f"rank auto: rho must be in [0, 1), got {rho}")
        return "auto", rho
    if spec.startswith("ratio:"):
        parts = spec[6:].split(",")
        if len(parts) != 2:
            raise ContractError(f"rank ratio: expected ratio:<kappa>,<rho>, got {spec!r}")
        kappa = _parse_float(parts[0], "rank")
        rho = _parse_float(parts[1], "rank")
        if not (0.0 <= kappa <= 1.0) or not (0.0 <= rho < 1.0):
            raise ContractError(f"rank ratio: need kappa in [0,1] and rho in [0,1), got {spec!r}")
        return "ratio", (kappa, rho)
    r = _parse_int(spec, "rank")
    if r < 0:
        raise ContractError(f"rank must be >= 0, got {r}")
    return "fixed", r


def pattern_from_spec(spec: str, granularity: str = "per-matrix") -> SparsityPattern:
    """Build a pattern from its config spelling; k:auto is rejected here."""
    kind, val = _parse_pattern_spec(spec)
    if kind == "dense":
        return Dense()
    if kind == "k":
        if val == "auto":
            raise ContractError("pattern k:auto is only resolvable with rank = ratio:...")
        return Unstructured(val, granularity)
    return SemiStructured(*val)


def _pruner_kind(cfg: RunConfig) -> PrunerKind:
    if cfg.pruner == "magnitude":
        return Magnitude()
    if cfg.pruner == "wanda":
        return Wanda()
    return OBS(blocksize=cfg.blocksize)


def resolve(cfg: RunConfig, n_in: int, n_out: int) -> ResolvedRun:
    """Bind the config to a matrix shape, deriving budgets where requested."""
    pkind, pval = _parse_pattern_spec(cfg.pattern)
    rkind, rval = _parse_rank_spec(cfg.rank)

    if rkind == "ratio":
        if pval != "auto":
            raise ContractError("rank = ratio:... requires pattern = k:auto")
        kappa, rho = rval
        rank, k = budget_for_rank_ratio(kappa, rho, n_in, n_out)
        pattern: SparsityPattern = Unstructured(k, cfg.granularity)
    elif pval == "auto":
        raise ContractError("pattern = k:auto is only valid with rank = ratio:...")
    elif rkind == "auto":
        if pkind != "nm":
            raise ContractError("rank = auto:<rho> requires an <N>:<M> pattern")
        n, m = pval
        rank = rank_for_fixed_compression(rval, n, m, n_in, n_out)
        pattern = SemiStructured(n, m)
    else:
        rank = rval
        if pkind == "dense":
            pattern = Dense()
        elif pkind == "k":
            pattern = Unstructured(pval, cfg.granularity)
        else:
            pattern = SemiStructured(*pval)

    if rank > min(n_in, n_out):
        raise ContractError(
            f"resolved rank {rank} exceeds min(n_in, n_out) = {min(n_in, n_out)}"
        )
    altmin = AltMinConfig(
        t_am=cfg.t_am,
        t_lr=cfg.t_lr,
        eta=cfg.eta,
        pruner=_pruner_kind(cfg),
        lowrank_mode=cfg.lowrank,
        is_scaled=cfg.scaled,
        percdamp=cfg.percdamp,
        damp_convention=cfg.damp_convention,
        seed=cfg.seed,
        nonlinearity=cfg.nonlinearity,
    )
    return ResolvedRun(pattern=pattern, rank=rank, altmin=altmin)
