"""Experiment configuration: nested dataclasses, a flat ``key = value`` text
format with ``#`` comments and dotted section names, and named presets."""
import dataclasses
from dataclasses import dataclass, field, fields
from typing import Optional

from ..errors import InvalidInput


class ConfigError(InvalidInput):
    def __init__(self, msg, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"field {key!r}")
        super().__init__(f"{', '.join(where)}: {msg}" if where else msg)
        self.line = line
        self.key = key


@dataclass
class ModelConfig:
    kind: str = "linear2d"  # linear2d | triad | l96 | l96-det
    obs: str = "full"  # full | partial (linear2d, triad)
    N: int = 1  # integration steps per observation
    ratio: float = 1.0  # tr(R)/tr(Q) for l96
    m: int = 20  # observed sites for l96
    n: int = 40
    r_true: float = 1.0  # observation variance for l96-det


@dataclass
class FilterConfig:
    kind: str = "kf"  # kf | etkf | letkf
    Ne: int = 16
    radius: int = 5
    printed_exponent: bool = False


@dataclass
class EstimatorConfig:
    kind: str = "mbl"  # mbl | obl | bs | none
    L: int = 1
    tau: float = 1000.0
    bases: str = "diagonal"  # diagonal | block | stencil
    block: int = 4
    q0_scale: float = 0.5  # initial guesses as multiples of the truth
    r0_scale: float = 2.0
    q0: float = 0.05  # letkf initial (q1, q2 = 0, r)
    r0: float = 0.8
    prior_var: Optional[float] = None
    btilde_per_basis: bool = False


@dataclass
class SweepConfig:
    N: tuple = (1, 2, 3, 4, 5, 6)
    ratio: tuple = (0.2, 0.5, 1.0, 2.0, 5.0)


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    steps: int = 10000  # analysis cycles
    seed: int = 0
    out: str = "results"
    trace_every: int = 1
    model: ModelConfig = field(default_factory=ModelConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    sweep: Optional[SweepConfig] = None

    def validate(self):
        m, f, e = self.model, self.filter, self.estimator
        checks = [
            (m.kind in ("linear2d", "triad", "l96", "l96-det"), "model.kind", "unknown model"),
            (m.obs in ("full", "partial"), "model.obs", "must be full or partial"),
            (m.N >= 1, "model.N", "must be >= 1"),
            (m.ratio > 0, "model.ratio", "must be > 0"),
            (f.kind in ("kf", "etkf", "letkf"), "filter.kind", "unknown filter"),
            (f.kind != "kf" or m.kind == "linear2d", "filter.kind", "the Kalman filter needs a linear model"),
            (f.kind != "letkf" or m.kind == "l96-det", "filter.kind", "letkf runs on the deterministic ring model"),
            (f.Ne >= 2, "filter.Ne", "must be >= 2"),
            (e.kind in ("mbl", "obl", "bs", "none"), "estimator.kind", "unknown estimator"),
            (e.L >= 0, "estimator.L", "must be >= 0"),
            (e.tau >= 1, "estimator.tau", "must be >= 1"),
            (e.bases in ("diagonal", "block", "stencil"), "estimator.bases", "unknown bases"),
            (self.steps >= 1, "steps", "must be >= 1"),
            (self.trace_every >= 1, "trace_every", "must be >= 1"),
            (0 <= self.seed < 2**64, "seed", "must be an unsigned 64-bit integer"),
        ]
        for ok, key, msg in checks:
            if not ok:
                raise ConfigError(msg, key=key)
        return self


SECTIONS = {"model": ModelConfig, "filter": FilterConfig, "estimator": EstimatorConfig, "sweep": SweepConfig}


def _coerce(text, ftype, default):
    text = text.strip()
    t = ftype if isinstance(ftype, type) else None
    if ftype in ("Optional[float]",) or ftype == Optional[float]:
        return None if text.lower() == "none" else float(text)
    if t is bool or isinstance(default, bool):
        low = text.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if t is int or (isinstance(default, int) and not isinstance(default, bool)):
        return int(text, 0)
    if t is float or isinstance(default, float):
        return float(text)
    if t is tuple or isinstance(default, tuple):
        return tuple(float(x) if "." in x or "e" in x.lower() else int(x) for x in text.replace(",", " ").split())
    return text


def _set(obj, name, raw, line, key):
    spec = {f.name: f for f in fields(obj)}
    if name not in spec or name in SECTIONS:
        raise ConfigError("unknown key", line, key)
    f = spec[name]
    try:
        setattr(obj, name, _coerce(raw, f.type, getattr(obj, name)))
    except ValueError as exc:
        raise ConfigError(f"bad value {raw.strip()!r} ({exc})", line, key) from None


def parse(text, base=None):
    """Parse config text on top of ``base`` (default: all defaults)."""
    cfg = dataclasses.replace(base) if base is not None else ExperimentConfig()
    for sec in ("model", "filter", "estimator"):
        setattr(cfg, sec, dataclasses.replace(getattr(cfg, sec)))
    if cfg.sweep is not None:
        cfg.sweep = dataclasses.replace(cfg.sweep)
    for i, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError("expected 'key = value'", i)
        key, raw = (p.strip() for p in s.split("=", 1))
        if not key:
            raise ConfigError("empty key", i)
        if "." in key:
            sec, name = key.split(".", 1)
            if sec not in SECTIONS:
                raise ConfigError("unknown section", i, key)
            if sec == "sweep" and cfg.sweep is None:
                cfg.sweep = SweepConfig()
            _set(getattr(cfg, sec), name, raw, i, key)
        else:
            _set(cfg, key, raw, i, key)
    return cfg.validate()


def load(path, base=None):
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), base)


def _fmt(v):
    if isinstance(v, tuple):
        return ", ".join(repr(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump(cfg):
    """Text form that parses back to an equal config."""
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name not in SECTIONS:
            lines.append(f"{f.name} = {_fmt(v)}")
    for sec in SECTIONS:
        obj = getattr(cfg, sec)
        if obj is None:
            continue
        lines.append("")
        for f in fields(obj):
            lines.append(f"{sec}.{f.name} = {_fmt(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"


def as_dict(cfg):
    return dataclasses.asdict(cfg)


def _preset(name, steps, model, filt, est, **top):
    return ExperimentConfig(name=name, steps=steps, model=model, filter=filt, estimator=est, **top)


def presets():
    """Named scenarios with their full-length step counts."""
    return {
        "linear-full": _preset("linear-full", 10000, ModelConfig("linear2d", "full"), FilterConfig("kf"),
                               EstimatorConfig("mbl", L=1, tau=1000.0)),
        "linear-partial": _preset("linear-partial", 50000, ModelConfig("linear2d", "partial"), FilterConfig("kf"),
                                  EstimatorConfig("mbl", L=4, tau=1000.0)),
        "triad-full": _preset("triad-full", 20000, ModelConfig("triad", "full"), FilterConfig("etkf", Ne=16),
                              EstimatorConfig("mbl", L=1, tau=100.0)),
        "triad-partial": _preset("triad-partial", 20000, ModelConfig("triad", "partial"), FilterConfig("etkf", Ne=16),
                                 EstimatorConfig("mbl", L=8, tau=1000.0)),
        "l96-sweep": _preset("l96-sweep", 50000, ModelConfig("l96", N=1, ratio=1.0), FilterConfig("etkf", Ne=50),
                             EstimatorConfig("mbl", L=1, tau=1000.0, bases="block", block=4),
                             sweep=SweepConfig(), trace_every=10),
        "letkf-ne20": _preset("letkf-ne20", 2000, ModelConfig("l96-det", n=40), FilterConfig("letkf", Ne=20, radius=5),
                              EstimatorConfig("mbl", L=1, tau=1000.0, bases="stencil")),
        "letkf-ne6": _preset("letkf-ne6", 2000, ModelConfig("l96-det", n=40), FilterConfig("letkf", Ne=6, radius=5),
                             EstimatorConfig("mbl", L=1, tau=1000.0, bases="stencil")),
    }


def get_preset(name, scale=1):
    table = presets()
    if name not in table:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(table)}")
    cfg = table[name]
    if scale != 1:
        if scale < 1:
            raise ConfigError("scale must be >= 1", key="--scale")
        cfg.steps = max(1, cfg.steps // int(scale))
    return cfg.validate()


def expand_sweep(cfg):
    """One config per (N, ratio) cell; without a sweep section, the config itself."""
    if cfg.sweep is None:
        return [("", cfg)]
    out = []
    for N in cfg.sweep.N:
        for ratio in cfg.sweep.ratio:
            c = dataclasses.replace(cfg, model=dataclasses.replace(cfg.model, N=int(N), ratio=float(ratio)), sweep=None)
            out.append((f"N{int(N)}_ratio{float(ratio):g}", c))
    return out
