"""INI run configuration: schema, validation and round-tripping.

Every key is listed in :data:`SCHEMA` with its type and default. Unknown
sections or keys are errors, reported with the line they appear on.

Sections::

    [chain]    omegas, g, t_cold, t_hot, omega_c, omega_h, g_c, g_h
    [strokes]  g_tau_q | tau_q, g_tau_w | tau_w, heat_steps, work_steps
    [run]      n_cycles, execution, shots, repetitions, seed, bath_prep,
               strategy, initial_state, limit_tol
    [vqt]      budget, tol, rhobeg, init, evaluator, shots, seed
    [topology] n_qubits, edges, layout
    [sweep]    omega_ratios, temp_ratios, omega2, t_hot, g, g_tau, n_cycles,
               verify, tol
    [output]   out_dir
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable

from twostroke.engine import BATH_PREPS, EXECUTIONS, STRATEGIES, EngineConfig
from twostroke.model import ChainSpec
from twostroke.qmath import DensityMatrix


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        where = ""
        if path:
            where = f"{path}:{line}: " if line else f"{path}: "
        elif line:
            where = f"line {line}: "
        super().__init__(where + message)


def _float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"{text!r} is not finite")
    return value


def _floats(text: str) -> list[float]:
    return [_float(t) for t in text.replace(",", " ").split()]


def _int(text: str) -> int:
    return int(text)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"{text!r} not in {options}")
        return text

    return parse


def _opt_int(text: str) -> int | None:
    return None if text.strip().lower() in ("exact", "none", "") else int(text)


def _edges(text: str) -> list[tuple[int, int]]:
    out = []
    for token in text.replace(",", " ").split():
        a, sep, b = token.partition("-")
        if not sep:
            raise ValueError(f"edge {token!r} must look like 'a-b'")
        out.append((int(a), int(b)))
    return out


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        if value and isinstance(value[0], tuple):
            return ", ".join(f"{a}-{b}" for a, b in value)
        return ", ".join(_fmt(v) for v in value)
    return str(value)


# section -> key -> (parser, default); None default means "derived / unset"
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "chain": {
        "omegas": (_floats, None),
        "g": (_float, None),
        "t_cold": (_float, None),
        "t_hot": (_float, None),
        "omega_c": (_float, None),
        "omega_h": (_float, None),
        "g_c": (_float, None),
        "g_h": (_float, None),
    },
    "strokes": {
        "g_tau_q": (_float, None),
        "g_tau_w": (_float, None),
        "tau_q": (_float, None),
        "tau_w": (_float, None),
        "heat_steps": (_int, 1),
        "work_steps": (_opt_int, None),
    },
    "run": {
        "n_cycles": (_int, 50),
        "execution": (_choice(*EXECUTIONS), "exact"),
        "shots": (_int, 8192),
        "repetitions": (_int, 10),
        "seed": (_int, 0),
        "bath_prep": (_choice(*BATH_PREPS), "exact_gibbs"),
        "strategy": (_choice(*STRATEGIES), "mixed"),
        "initial_state": (_choice("ground", "excited", "mixed"), "ground"),
        "limit_tol": (_float, 1e-6),
    },
    "vqt": {
        "budget": (_int, 200),
        "tol": (_float, 1e-9),
        "rhobeg": (_float, 0.5),
        "init": (_floats, [0.0, 0.1, 0.1, 0.1]),
        "evaluator": (_choice("exact", "shots"), "exact"),
        "shots": (_int, 8192),
        "seed": (_int, 0),
    },
    "topology": {
        "n_qubits": (_int, None),
        "edges": (_edges, None),
        "layout": (_ints, None),
    },
    "sweep": {
        "omega_ratios": (_floats, [0.3, 0.5, 0.7, 0.9, 1.5]),
        "temp_ratios": (_floats, [0.2, 0.4, 0.6, 0.8, 1.0]),
        "omega2": (_float, 1.0),
        "t_hot": (_float, 1.0),
        "g": (_float, 0.8),
        "g_tau": (_float, math.pi / 2),
        "n_cycles": (_int, 60),
        "verify": (_bool, True),
        "tol": (_float, 1e-6),
    },
    "output": {
        "out_dir": (str, "results"),
    },
}


def _line_of(lines: list[str], section: str | None, key: str | None = None) -> int | None:
    current = None
    for no, raw in enumerate(lines, start=1):
        text = raw.strip()
        m = re.match(r"^\[([^\]]+)\]", text)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if key is not None and current == section and re.match(rf"^{re.escape(key)}\s*[=:]", text, re.I):
            return no
    return None


@dataclass
class RunConfig:
    """Resolved configuration: one dict of typed values per section."""

    values: dict[str, dict[str, Any]]
    source: str | None = None

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.values[section]

    def to_ini(self) -> str:
        lines = []
        for section, keys in self.values.items():
            lines.append(f"[{section}]")
            for key, value in keys.items():
                if value is not None:
                    lines.append(f"{key} = {_fmt(value)}")
            lines.append("")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        def plain(v):
            if isinstance(v, tuple):
                return list(v)
            if isinstance(v, list):
                return [plain(x) for x in v]
            return v

        return {s: {k: plain(v) for k, v in keys.items()} for s, keys in self.values.items()}

    def chain_spec(self) -> ChainSpec:
        c = self.values["chain"]
        for key in ("omegas", "g", "t_cold", "t_hot"):
            if c.get(key) is None:
                raise ConfigError(f"[chain] requires {key!r}", path=self.source)
        omegas = c["omegas"]
        try:
            return ChainSpec(
                omegas=tuple(omegas),
                g_work=(c["g"],) * (len(omegas) - 1),
                t_cold=c["t_cold"],
                t_hot=c["t_hot"],
                omega_c=c.get("omega_c"),
                omega_h=c.get("omega_h"),
                g_c=c.get("g_c"),
                g_h=c.get("g_h"),
            )
        except ValueError as exc:
            raise ConfigError(f"[chain] {exc}", path=self.source) from None

    def stroke_times(self, spec: ChainSpec) -> tuple[float, float]:
        s = self.values["strokes"]
        out = []
        for stroke in ("q", "w"):
            tau, g_tau = s.get(f"tau_{stroke}"), s.get(f"g_tau_{stroke}")
            if tau is not None and g_tau is not None:
                raise ConfigError(f"[strokes] give tau_{stroke} or g_tau_{stroke}, not both", path=self.source)
            if tau is None:
                g = spec.g_work[0]
                if g == 0:
                    raise ConfigError(f"[strokes] g_tau_{stroke} needs a nonzero coupling; use tau_{stroke}")
                tau = (g_tau if g_tau is not None else math.pi / 2) / g
            if tau < 0:
                raise ConfigError(f"[strokes] tau_{stroke} must be >= 0", path=self.source)
            out.append(tau)
        return out[0], out[1]

    def engine_config(self, vqt=None) -> EngineConfig:
        spec = self.chain_spec()
        tau_q, tau_w = self.stroke_times(spec)
        r = self.values["run"]
        s = self.values["strokes"]
        n = spec.n_sites
        initial = {
            "ground": DensityMatrix.basis(2**n - 1, spec.chain_dims),
            "excited": DensityMatrix.basis(0, spec.chain_dims),
            "mixed": DensityMatrix.maximally_mixed(spec.chain_dims),
        }[r["initial_state"]]
        try:
            return EngineConfig(
                spec=spec,
                tau_q=tau_q,
                tau_w=tau_w,
                n_cycles=r["n_cycles"],
                execution=r["execution"],
                shots=r["shots"],
                seed=r["seed"],
                bath_prep=r["bath_prep"],
                vqt=vqt,
                initial_chain_state=initial,
                strategy=r["strategy"],
                heat_steps=s["heat_steps"],
                work_steps=s["work_steps"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc), path=self.source) from None


def defaults() -> dict[str, dict[str, Any]]:
    return {sec: {k: (list(d) if isinstance(d, list) else d) for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}


def parse_config(text: str, source: str | None = None) -> RunConfig:
    lines = text.splitlines()
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(str(exc).splitlines()[0], line, source) from None
    values = defaults()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", _line_of(lines, section), source)
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", _line_of(lines, section, key), source)
            fn, _ = SCHEMA[section][key]
            try:
                values[section][key] = fn(raw.strip())
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", _line_of(lines, section, key), source) from None
    return RunConfig(values, source)


def bundled_configs() -> dict[str, Path]:
    root = resources.files("twostroke") / "configs"
    return {p.name: Path(str(p)) for p in root.iterdir() if p.name.endswith(".cfg")}


def resolve_path(name: str) -> Path:
    """A filesystem path, or the name of a bundled config (with or without ``.cfg``)."""
    path = Path(name)
    if path.exists():
        return path
    bundled = bundled_configs()
    for candidate in (path.name, f"{path.name}.cfg"):
        if candidate in bundled:
            return bundled[candidate]
    raise ConfigError(f"config file {name!r} not found (bundled: {', '.join(sorted(bundled))})")


def load_config(name: str | None) -> RunConfig:
    if name is None:
        return RunConfig(defaults())
    path = resolve_path(name)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, str(path))


def apply_overrides(cfg: RunConfig, overrides: dict[str, tuple[str, str, Any]]) -> RunConfig:
    """Set ``section.key`` values from CLI flags; ``None`` values are skipped."""
    for _flag, (section, key, value) in overrides.items():
        if value is not None:
            cfg.values[section][key] = value
    return cfg
