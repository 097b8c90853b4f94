"""Experiment configuration and its flat ``key = value`` text format.

Example::

    # desk-scale defaults
    mode = flycom+selection
    I = 100
    J = 1500
    r = 12
    xi = 2
    snr_db = 10
    estimate_schedule = 6, 12, 24, 48, 96, 200

Blank lines and ``#`` comments are ignored. ``none`` unsets an optional key;
``estimate_schedule = default`` gives the geometric schedule.
"""

from dataclasses import dataclass, fields, asdict
import hashlib
import math
import typing

MODES = ("flycom", "flycom+selection", "centroid", "alignment", "fig3-validation")
REQUIRED = ("mode", "I", "J", "r", "xi")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    I: int
    J: int
    r: int
    xi: float
    K: int = 20
    N_t: int = 4
    N_r: int = 16
    M: int = 2
    sigma2: typing.Optional[float] = None
    snr_db: float = 10.0
    P: float = 1.0
    T_max: int = 200
    trials: int = 100
    root_seed: int = 0
    estimate_schedule: typing.Optional[tuple] = None
    gamma_shape: float = 1.2
    gamma_scale: float = 0.83
    output: str = "results.csv"

    def __post_init__(self):
        problems = []
        if self.mode not in MODES:
            problems.append(f"mode: {self.mode!r} is not one of {', '.join(MODES)}")
        if not 1 <= self.r < self.I <= self.J:
            problems.append(f"r, I, J: need 1 <= r < I <= J, got r={self.r}, I={self.I}, J={self.J}")
        if not 1 <= self.M <= self.N_t <= self.N_r:
            problems.append(f"M, N_t, N_r: need 1 <= M <= N_t <= N_r, "
                            f"got M={self.M}, N_t={self.N_t}, N_r={self.N_r}")
        if not 1 <= self.K <= self.J:
            problems.append(f"K: need 1 <= K <= J, got {self.K}")
        if self.trials < 1:
            problems.append(f"trials: need at least 1, got {self.trials}")
        if self.T_max < 1:
            problems.append(f"T_max: need at least 1, got {self.T_max}")
        if self.xi <= 0:
            problems.append(f"xi: must be positive, got {self.xi}")
        if self.P <= 0:
            problems.append(f"P: must be positive, got {self.P}")
        if self.sigma2 is not None and self.sigma2 < 0:
            problems.append(f"sigma2: must be nonnegative, got {self.sigma2}")
        if self.mode == "fig3-validation" and self.noise_var <= 0:
            problems.append("sigma2: fig3-validation pins A A^H = I/(10 sigma) and needs sigma2 > 0")
        if self.estimate_schedule is not None:
            sched = tuple(int(s) for s in self.estimate_schedule)
            object.__setattr__(self, "estimate_schedule", sched)
            lo = math.ceil(self.r / self.M) if self.M >= 1 else 1
            if any(not lo <= s <= self.T_max for s in sched):
                problems.append(f"estimate_schedule: slots must lie in [ceil(r/M)={lo}, "
                                f"T_max={self.T_max}]")
            if list(sched) != sorted(set(sched)):
                problems.append("estimate_schedule: slots must be strictly increasing")
        if problems:
            raise ConfigError("invalid config:\n  " + "\n  ".join(problems))

    @property
    def noise_var(self):
        """Noise variance; explicit ``sigma2`` wins over ``P / 10^(snr_db/10)``."""
        if self.sigma2 is not None:
            return self.sigma2
        return self.P / 10.0 ** (self.snr_db / 10.0)

    @property
    def min_slots(self):
        return math.ceil(self.r / self.M)

    @property
    def schedule(self):
        if self.estimate_schedule is not None:
            return self.estimate_schedule
        out, s = [], self.min_slots
        while s <= self.T_max:
            out.append(s)
            s *= 2
        if not out or out[-1] != self.T_max:
            out.append(self.T_max)
        return tuple(out)

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return ExperimentConfig(**d)

    def digest(self):
        return hashlib.sha256(dump_config(self).encode()).hexdigest()


_HINTS = typing.get_type_hints(ExperimentConfig)


def _parse_value(key, text):
    hint = _HINTS[key]
    optional = typing.get_origin(hint) is typing.Union
    base = [a for a in typing.get_args(hint) if a is not type(None)][0] if optional else hint
    low = text.strip().lower()
    if optional and low in ("none", ""):
        return None
    if key == "estimate_schedule":
        if low == "default":
            return None
        return tuple(int(v) for v in text.replace(",", " ").split())
    try:
        if base is int:
            return int(text)
        if base is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {text.strip()!r} as {base.__name__}") from None
    return text.strip()


def parse_config(text, **overrides):
    values, unknown = {}, []
    known = {f.name for f in fields(ExperimentConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            unknown.append(key)
            continue
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, value)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required config key(s): {', '.join(missing)}")
    return ExperimentConfig(**values)


def load_config(path, **overrides):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), **overrides)


def _format(v):
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ", ".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(config):
    return "".join(f"{f.name} = {_format(getattr(config, f.name))}\n" for f in fields(config))
