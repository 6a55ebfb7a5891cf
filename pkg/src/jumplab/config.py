"""Experiment configuration: flat INI sections with documented keys.

Scaling functions are written as ``kind:params``:

    power:EXP[,SCALE]
    piecewise:E1,E2,...@B1,B2,...        exponents per piece, breakpoints
    powerlog-small:EXP,LOG,LOGLOG[,PIVOT]
    powerlog-large:EXP,LOG[,LOGLOG][,PIVOT]

The resolved configuration echoes back as INI and must reparse identically;
emitted tables carry a short hash of the echo so outputs are traceable.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, field

from .errors import ConfigError
from .scalefn import ScalingFunction, piecewise_power, power, power_log_large, power_log_small


def parse_scaling_function(text: str) -> ScalingFunction:
    text = text.strip()
    if ":" not in text:
        raise ConfigError(f"scaling function spec needs kind:params, got {text!r}")
    kind, _, body = text.partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "power":
            parts = [float(x) for x in body.split(",")]
            return power(*parts)
        if kind == "piecewise":
            exps_s, _, brks_s = body.partition("@")
            exps = [float(x) for x in exps_s.split(",")]
            brks = [float(x) for x in brks_s.split(",")] if brks_s else []
            return piecewise_power(exps, brks)
        if kind == "powerlog-small":
            parts = [float(x) for x in body.split(",")]
            return power_log_small(*parts)
        if kind == "powerlog-large":
            parts = [float(x) for x in body.split(",")]
            return power_log_large(*parts)
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"bad scaling function spec {text!r}: {exc}") from exc
    raise ConfigError(f"unknown scaling function kind {kind!r}")


def format_scaling_function(f: ScalingFunction) -> str:
    if f.kind == "power":
        e, s = f.params
        return f"power:{e:g}" if s == 1.0 else f"power:{e:g},{s:g}"
    if f.kind == "piecewise-power":
        exps, brks, scale, jumps = f.params
        return "piecewise:" + ",".join(f"{e:g}" for e in exps) + "@" + ",".join(f"{b:g}" for b in brks)
    if f.kind == "power-log":
        e, a, b, piv, s = f.params
        side = "small" if piv < 1 else "large"
        return f"powerlog-{side}:{e:g},{a:g},{b:g},{piv:g}"
    raise ConfigError(f"cannot format scaling function of kind {f.kind!r}")


@dataclass
class ExperimentConfig:
    space: str = "line"  # "line" | "gasket"
    half_length: int = 25600
    level: int = 8
    F_spec: str = "power:2"
    psi_spec: str = "power:1"
    sampler: str = "subordinate"  # "subordinate" | "jump"
    t_grid: list = field(default_factory=lambda: [4.0, 8.0, 16.0, 32.0, 64.0])
    r_max: float = 40.0
    walkers: int = 100_000
    seed: int = 20260810
    step_cap: int = 400_000
    eps_inv: float = 1e-10
    eps_quad: float = 1e-8
    eps_opt: float = 1e-9
    c_max: float = 100.0
    env_c: float = 1.0
    env_eta: float = 1.0
    env_a0: float = 1.0
    env_aL: float = 1.0
    env_aU: float = 1.0

    def __post_init__(self):
        if self.space not in ("line", "gasket"):
            raise ConfigError(f"space must be line or gasket, got {self.space!r}")
        if self.sampler not in ("subordinate", "jump"):
            raise ConfigError(f"sampler must be subordinate or jump, got {self.sampler!r}")
        if not self.t_grid or sorted(self.t_grid) != list(self.t_grid):
            raise ConfigError("t_grid must be non-empty and increasing")
        if self.walkers < 1:
            raise ConfigError("walkers must be >= 1")
        for name in ("eps_inv", "eps_quad", "eps_opt", "c_max"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"tolerance {name} must be positive")
        # parse eagerly so bad function specs fail at load time
        self.F = parse_scaling_function(self.F_spec)
        self.psi = parse_scaling_function(self.psi_spec)

    @classmethod
    def from_ini(cls, path_or_text, is_text: bool = False) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        try:
            if is_text:
                cp.read_string(path_or_text)
            else:
                with open(path_or_text) as fh:
                    cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc

        def get(section, key, conv, default):
            if cp.has_option(section, key):
                raw = cp.get(section, key)
                try:
                    return conv(raw)
                except ConfigError:
                    raise
                except Exception as exc:
                    raise ConfigError(f"bad value for [{section}] {key}: {raw!r} ({exc})") from exc
            return default

        def floats(raw):
            return [float(x) for x in raw.replace(",", " ").split()]

        kw = dict(
            space=get("space", "kind", str.strip, "line"),
            half_length=get("space", "half_length", int, 25600),
            level=get("space", "level", int, 8),
            F_spec=get("functions", "f", str.strip, "power:2"),
            psi_spec=get("functions", "psi", str.strip, "power:1"),
            sampler=get("simulate", "sampler", str.strip, "subordinate"),
            t_grid=get("simulate", "t_grid", floats, [4.0, 8.0, 16.0, 32.0, 64.0]),
            r_max=get("simulate", "r_max", float, 40.0),
            walkers=get("simulate", "walkers", int, 100_000),
            seed=get("simulate", "seed", int, 20260810),
            step_cap=get("simulate", "step_cap", int, 400_000),
            eps_inv=get("tolerances", "eps_inv", float, 1e-10),
            eps_quad=get("tolerances", "eps_quad", float, 1e-8),
            eps_opt=get("tolerances", "eps_opt", float, 1e-9),
            c_max=get("tolerances", "c_max", float, 100.0),
            env_c=get("envelope", "c", float, 1.0),
            env_eta=get("envelope", "eta", float, 1.0),
            env_a0=get("envelope", "a0", float, 1.0),
            env_aL=get("envelope", "a_l", float, 1.0),
            env_aU=get("envelope", "a_u", float, 1.0),
        )
        return cls(**kw)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["space"] = {"kind": self.space, "half_length": str(self.half_length), "level": str(self.level)}
        cp["functions"] = {"f": self.F_spec, "psi": self.psi_spec}
        cp["simulate"] = {
            "sampler": self.sampler,
            "t_grid": " ".join(f"{t:g}" for t in self.t_grid),
            "r_max": f"{self.r_max:g}",
            "walkers": str(self.walkers),
            "seed": str(self.seed),
            "step_cap": str(self.step_cap),
        }
        cp["envelope"] = {
            "c": f"{self.env_c:g}",
            "eta": f"{self.env_eta:g}",
            "a0": f"{self.env_a0:g}",
            "a_l": f"{self.env_aL:g}",
            "a_u": f"{self.env_aU:g}",
        }
        cp["tolerances"] = {
            "eps_inv": f"{self.eps_inv:g}",
            "eps_quad": f"{self.eps_quad:g}",
            "eps_opt": f"{self.eps_opt:g}",
            "c_max": f"{self.c_max:g}",
        }
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()[:12]

    def build_graph(self):
        from .fractal import build_gasket, build_line

        if self.space == "gasket":
            return build_gasket(self.level)
        return build_line(self.half_length)

    def origin(self, g):
        if self.space == "gasket":
            side = 1 << self.level
            return g.vertex_at((side // 2, 0))
        return g.vertex_at(0)
