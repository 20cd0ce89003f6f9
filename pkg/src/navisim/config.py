"""Scenario configuration: ``key = value`` files with ``[section]`` headers."""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from .dissem import STRATEGIES
from .trace import DEFAULT_AREA_HEIGHT, DEFAULT_AREA_WIDTH


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    # [trace]
    trace_source: str = "synthetic"          # "synthetic" or a path to an NS-2 movement file
    vehicles: int = 45
    area_width: float = DEFAULT_AREA_WIDTH
    area_height: float = DEFAULT_AREA_HEIGHT
    speed_min_kmh: float = 10.0
    speed_max_kmh: float = 50.0
    pause: float = 0.0
    # [simulation]
    duration: float = 180.0
    seed: int = 1
    cam_frequency: float = 1.0
    cam_jitter: bool = False
    nt_upload_frequency: float = 1.0
    nt_timeout: float = 5.0
    request_frequency: float = 1.0
    request_offset: float = 0.5
    # [radio]
    tx_powers: Tuple[float, ...] = (16.0, 21.0, 23.0)
    rx_sensitivity: float = -85.0
    frequency: float = 5.9e9
    model: str = "friis_threshold"
    fixed_range: Optional[float] = None
    # [geoserver]
    zone_cell: float = 50.0
    staleness: float = 5.0
    # [dissemination]
    strategies: Tuple[str, ...] = STRATEGIES
    k_values: Tuple[int, ...] = tuple(range(1, 11))
    hop_limit: int = 1
    validity: float = 1.0
    payload_bytes: int = 500
    dissemination_area: Optional[Tuple[float, float, float, float]] = None
    # [latency]
    short_range_ms: float = 5.0
    lte_down_ms: float = 50.0
    lte_up_ms: float = 60.0
    # [sizes]
    cam_bytes: int = 300
    nt_base_bytes: int = 100
    nt_per_entry_bytes: int = 20
    vi_notify_base_bytes: int = 200
    request_bytes: int = 100
    lte_header_bytes: int = 60
    sr_header_bytes: int = 40
    # [capabilities]
    both: float = 1.0
    lte_only: float = 0.0
    short_range_only: float = 0.0

    def __post_init__(self):
        for name in ("cam_frequency", "nt_upload_frequency", "request_frequency"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.vehicles < 1 or self.duration <= 0:
            raise ConfigError("vehicles and duration must be positive")
        if not self.tx_powers or not self.k_values or not self.strategies:
            raise ConfigError("tx_powers, k_values and strategies must be non-empty")
        if any(k < 1 for k in self.k_values):
            raise ConfigError("k values must be >= 1")
        bad = [s for s in self.strategies if s not in STRATEGIES]
        if bad:
            raise ConfigError(f"unknown strategies {bad}; expected a subset of {list(STRATEGIES)}")
        if self.hop_limit < 0 or self.zone_cell <= 0 or self.nt_timeout <= 0:
            raise ConfigError("hop_limit >= 0, zone_cell > 0 and nt_timeout > 0 required")

    def replace(self, **kw) -> "ScenarioConfig":
        return dataclasses.replace(self, **kw)


# (section, key) -> field name
_KEYS: Dict[Tuple[str, str], str] = {
    ("trace", "source"): "trace_source",
    ("trace", "vehicles"): "vehicles",
    ("trace", "area"): "area",
    ("trace", "speed_min_kmh"): "speed_min_kmh",
    ("trace", "speed_max_kmh"): "speed_max_kmh",
    ("trace", "pause"): "pause",
    ("simulation", "duration"): "duration",
    ("simulation", "seed"): "seed",
    ("simulation", "cam_frequency"): "cam_frequency",
    ("simulation", "cam_jitter"): "cam_jitter",
    ("simulation", "nt_upload_frequency"): "nt_upload_frequency",
    ("simulation", "nt_timeout"): "nt_timeout",
    ("simulation", "request_frequency"): "request_frequency",
    ("simulation", "request_offset"): "request_offset",
    ("radio", "tx_powers"): "tx_powers",
    ("radio", "rx_sensitivity"): "rx_sensitivity",
    ("radio", "frequency"): "frequency",
    ("radio", "model"): "model",
    ("radio", "fixed_range"): "fixed_range",
    ("geoserver", "zone_cell"): "zone_cell",
    ("geoserver", "staleness"): "staleness",
    ("dissemination", "strategies"): "strategies",
    ("dissemination", "k_values"): "k_values",
    ("dissemination", "hop_limit"): "hop_limit",
    ("dissemination", "validity"): "validity",
    ("dissemination", "payload_bytes"): "payload_bytes",
    ("dissemination", "area"): "dissemination_area",
    ("latency", "short_range_ms"): "short_range_ms",
    ("latency", "lte_down_ms"): "lte_down_ms",
    ("latency", "lte_up_ms"): "lte_up_ms",
    ("sizes", "cam"): "cam_bytes",
    ("sizes", "nt_base"): "nt_base_bytes",
    ("sizes", "nt_per_entry"): "nt_per_entry_bytes",
    ("sizes", "vi_notify_base"): "vi_notify_base_bytes",
    ("sizes", "request"): "request_bytes",
    ("sizes", "lte_header"): "lte_header_bytes",
    ("sizes", "sr_header"): "sr_header_bytes",
    ("capabilities", "both"): "both",
    ("capabilities", "lte_only"): "lte_only",
    ("capabilities", "short_range_only"): "short_range_only",
}


def parse_int_list(text: str) -> Tuple[int, ...]:
    """``"1..5, 8"`` -> (1, 2, 3, 4, 5, 8)."""
    out: List[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            a, b = int(lo), int(hi)
            if b < a:
                raise ConfigError(f"empty range {part!r}")
            out.extend(range(a, b + 1))
        else:
            out.append(int(part))
    if not out:
        raise ConfigError(f"empty list {text!r}")
    return tuple(out)


def parse_float_list(text: str) -> Tuple[float, ...]:
    vals = tuple(float(p) for p in text.split(",") if p.strip())
    if not vals:
        raise ConfigError(f"empty list {text!r}")
    return vals


def parse_area(text: str) -> Tuple[float, float]:
    try:
        w, h = text.lower().split("x")
        return float(w), float(h)
    except ValueError:
        raise ConfigError(f"area must look like 600x730, got {text!r}") from None


def _convert(name: str, raw: str) -> Dict[str, Any]:
    raw = raw.strip()
    if name == "area":
        w, h = parse_area(raw)
        return {"area_width": w, "area_height": h}
    if name == "tx_powers":
        return {name: parse_float_list(raw)}
    if name == "k_values":
        return {name: parse_int_list(raw)}
    if name == "strategies":
        return {name: tuple(s.strip() for s in raw.split(",") if s.strip())}
    if name == "dissemination_area":
        vals = parse_float_list(raw)
        if len(vals) != 4:
            raise ConfigError("dissemination area needs xmin, ymin, xmax, ymax")
        return {name: vals}
    if name == "fixed_range":
        return {name: float(raw) if raw.lower() not in ("", "none") else None}
    if name == "cam_jitter":
        if raw.lower() in ("1", "true", "yes", "on"):
            return {name: True}
        if raw.lower() in ("0", "false", "no", "off"):
            return {name: False}
        raise ConfigError(f"cam_jitter must be a boolean, got {raw!r}")
    if name in ("trace_source", "model"):
        return {name: raw}
    default = getattr(ScenarioConfig, name)
    return {name: int(raw) if isinstance(default, int) and not isinstance(default, bool) else float(raw)}


def parse_config(text: str, base_dir: Optional[str] = None) -> ScenarioConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="\0none")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    unknown = [f"[{s}] {k}" for s in cp.sections() for k in cp[s] if (s, k) not in _KEYS]
    unknown += [f"[{s}]" for s in cp.sections() if not any(sec == s for sec, _ in _KEYS)]
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(sorted(set(unknown))))
    values: Dict[str, Any] = {}
    for s in cp.sections():
        for k, raw in cp[s].items():
            try:
                values.update(_convert(_KEYS[(s, k)], raw))
            except ValueError as e:
                raise ConfigError(f"[{s}] {k}: {e}") from None
    src = values.get("trace_source")
    if src and src != "synthetic" and base_dir and not os.path.isabs(src):
        values["trace_source"] = os.path.normpath(os.path.join(base_dir, src))
    return ScenarioConfig(**values)


def load_config(path: str) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base_dir=os.path.dirname(os.path.abspath(path)))


def dump_config(cfg: ScenarioConfig) -> str:
    """Render ``cfg`` back to the file format (every key explicit)."""
    sections: Dict[str, List[str]] = {}
    for (sec, key), name in _KEYS.items():
        if name == "area":
            val = f"{cfg.area_width!r}x{cfg.area_height!r}"
        else:
            v = getattr(cfg, name)
            if v is None:
                continue
            if isinstance(v, tuple):
                val = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, bool):
                val = "true" if v else "false"
            elif isinstance(v, float):
                val = repr(v)
            else:
                val = str(v)
        sections.setdefault(sec, []).append(f"{key} = {val}")
    return "\n\n".join(f"[{s}]\n" + "\n".join(lines) for s, lines in sections.items()) + "\n"
