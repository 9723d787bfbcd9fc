"""Experiment configuration: a flat UTF-8 key-value format with dotted
section prefixes (``run.T = 100000``), strict validation, and explicit
defaults so that every run's metadata echoes the full resolved setup.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

__all__ = ["ConfigError", "KEY_TABLE", "parse_config", "parse_text",
           "format_values"]


class ConfigError(ValueError):
    """Bad configuration: carries file/line context when available."""


def _bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _pos_int(raw: str) -> int:
    v = int(raw)
    if v < 1:
        raise ValueError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(raw: str) -> int:
    v = int(raw)
    if v < 0:
        raise ValueError(f"must be >= 0, got {v}")
    return v


def _pos_float(raw: str) -> float:
    v = float(raw)
    if not v > 0.0:
        raise ValueError(f"must be > 0, got {v}")
    return v


def _nonneg_float(raw: str) -> float:
    v = float(raw)
    if v < 0.0:
        raise ValueError(f"must be >= 0, got {v}")
    return v


def _alpha(raw: str) -> float:
    v = float(raw)
    if not 0.0 < v < 0.5:
        raise ValueError(f"must be in (0, 0.5), got {v}")
    return v


def _divergence(raw: str) -> str:
    v = raw.strip().lower()
    if v not in ("kl", "chi2", "hellinger"):
        raise ValueError(f"must be kl, chi2, or hellinger, got {raw!r}")
    return v


def _p01(raw: str) -> float:
    v = float(raw)
    if not 0.0 < v < 1.0:
        raise ValueError(f"must be in (0, 1), got {v}")
    return v


# key -> (parser, default, description); None default means scenario-decided
KEY_TABLE: dict[str, tuple] = {
    "scenario":             (str,          None,  "scenario catalog entry (required)"),
    "run.T":                (_pos_int,     None,  "horizon; T >= 1"),
    "run.seed":             (_nonneg_int,  0,     "master seed"),
    "run.replications":     (_pos_int,     20,    "independent replications"),
    "run.workers":          (_pos_int,     1,     "parallel replication workers"),
    "run.V":                (_pos_float,   1.0,   "variation parameter of drifting scenarios"),
    "market.s":             (_pos_float,   1.0,   "retailer selling price"),
    "market.c":             (_nonneg_float, 0.0,  "supplier production cost"),
    "retailer.alpha":       (_alpha,       0.05,  "DRO confidence level"),
    "retailer.divergence":  (_divergence,  "kl",  "DRO divergence"),
    "retailer.cap":         (_pos_float,   None,  "order cap for parametric retailers"),
    "supplier.k":           (_nonneg_int,  0,     "exploration grid size (0 = auto)"),
    "supplier.n":           (_nonneg_int,  0,     "quantity grid size (0 = auto)"),
    "demand.p0":            (_p01,         0.5,   "stationary Bernoulli zero-demand mass"),
    "output.csv":           (_bool,        True,  "emit CSV tables"),
    "output.svg":           (_bool,        True,  "emit SVG figures"),
    "output.dir":           (str,          "out", "output directory (under $LUNASIM_OUT if set)"),
    "analysis.window_lo":   (_nonneg_int,  0,     "slope window start (0 = T/10)"),
    "analysis.window_hi":   (_nonneg_int,  0,     "slope window end (0 = T)"),
    "dataset.path":         (str,          None,  "weekly sales CSV (avocado scenario)"),
}


def parse_text(text: str, origin: str = "<config>") -> dict:
    """Parse and validate config text; returns {key: typed value} with
    defaults filled in for keys the file omits."""
    values: dict = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {raw_line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in KEY_TABLE:
            known = ", ".join(sorted(KEY_TABLE))
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}; known keys: {known}")
        if key in values:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        parser = KEY_TABLE[key][0]
        try:
            values[key] = parser(raw)
        except ValueError as exc:
            raise ConfigError(f"{origin}:{lineno}: bad value for {key}: {exc}") from exc
    if "scenario" not in values:
        raise ConfigError(f"{origin}: missing required key 'scenario'")
    if "market.c" in values or "market.s" in values:
        s = values.get("market.s", KEY_TABLE["market.s"][1])
        c = values.get("market.c", KEY_TABLE["market.c"][1])
        if not c < s:
            raise ConfigError(f"{origin}: need market.c < market.s, got c={c}, s={s}")
    for key, (_, default, _) in KEY_TABLE.items():
        if key not in values and default is not None:
            values[key] = default
    return values


def parse_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_text(p.read_text(encoding="utf-8"), origin=str(p))


def format_values(values: dict) -> str:
    """Render resolved values back into the config format (round-trips
    through parse_text)."""
    lines = []
    for key in sorted(values):
        v = values[key]
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"
