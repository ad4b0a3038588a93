"""Experiment configuration: a small ``key = value`` format with sections.

Example::

    [experiment]
    experiment = gprior_fixed
    n_schedule = 100, 400, 1600, 6400
    replicates = 200

    [gprior]
    a = 1
    b = 1

Every key is validated; errors carry ``path:line``.  Unspecified keys take
the defaults in :class:`ExperimentConfig`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..errors import ValidationError
from ..gprior import GPriorHyper, ThresholdRule
from ..pmom import PMomConfig
from ..regression import DESIGN_MODES

EXPERIMENTS = ("gprior_fixed", "gprior_unknown", "pmom")


class ConfigError(ValidationError):
    def __init__(self, message, source="<config>", line=None):
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


def quarter_power_p(n: int) -> int:
    """Smallest integer ``p`` with ``p^4 >= n``, i.e. ``ceil(n^(1/4))`` without rounding trouble."""
    p = max(1, int(math.floor(n ** 0.25)))
    while p**4 < n:
        p += 1
    while p > 1 and (p - 1) ** 4 >= n:
        p -= 1
    return p


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "gprior_fixed"
    n_schedule: tuple = (100, 400, 1600, 6400)
    p_rule: str = "quarter_power"
    xi_rule: str = "log"
    replicates: int = 200
    mc_samples: int = 4000
    seed: int = 20240601
    l1: float = 0.25
    l2: float = 4.0
    design: str = "orthogonalized"
    omega_nodes: int = 1024
    sigma0: float = 1.0
    beta0: str = "auto"
    signal_target: str = "n"
    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    d: float = 1.0
    r: int = 1
    tau: float = 1.0
    q_samples: int = 10_000

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ValidationError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        ns = tuple(self.n_schedule)
        if not ns:
            raise ValidationError("n_schedule is empty")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValidationError(f"n_schedule must be strictly increasing, got {ns}")
        for n in ns:
            if self.p_of(n) >= n:
                raise ValidationError(f"p({n}) = {self.p_of(n)} is not below n")
        if self.replicates < 1:
            raise ValidationError("replicates must be >= 1")
        if self.mc_samples < 1000:
            raise ValidationError("mc_samples must be >= 1000")
        if self.q_samples < 10_000:
            raise ValidationError("q_samples must be >= 10000")
        if not 0 < self.l1 < self.l2:
            raise ValidationError("need 0 < l1 < l2")
        if self.design not in DESIGN_MODES:
            raise ValidationError(f"design must be one of {DESIGN_MODES}")
        if self.omega_nodes < 64:
            raise ValidationError("omega_nodes must be >= 64")
        if not self.sigma0 > 0:
            raise ValidationError("sigma0 must be positive")
        if self.beta0 not in ("auto", "calibrated", "ones"):
            raise ValidationError("beta0 must be auto, calibrated or ones")
        if self.signal_target != "n":
            try:
                if not float(self.signal_target) > 0:
                    raise ValueError
            except ValueError:
                raise ValidationError("signal_target must be 'n' or a positive number") from None
        self.threshold_rule()
        self.gprior_hyper()
        self.pmom_config()

    # -- derived ---------------------------------------------------------

    def p_of(self, n: int) -> int:
        if self.p_rule == "quarter_power":
            return quarter_power_p(n)
        if self.p_rule.startswith("fixed:"):
            try:
                p = int(self.p_rule.split(":", 1)[1])
            except ValueError:
                raise ValidationError(f"bad p_rule {self.p_rule!r}") from None
            if p < 1:
                raise ValidationError("fixed p must be >= 1")
            return p
        raise ValidationError(f"p_rule must be quarter_power or fixed:K, got {self.p_rule!r}")

    def threshold_rule(self) -> ThresholdRule:
        if self.xi_rule == "log":
            return ThresholdRule("log")
        if self.xi_rule.startswith("const:"):
            try:
                value = float(self.xi_rule.split(":", 1)[1])
            except ValueError:
                raise ValidationError(f"bad xi_rule {self.xi_rule!r}") from None
            return ThresholdRule("const", value)
        raise ValidationError(f"xi_rule must be log or const:X, got {self.xi_rule!r}")

    def gprior_hyper(self) -> GPriorHyper:
        sigma2 = self.sigma0**2 if self.experiment == "gprior_fixed" else None
        return GPriorHyper(self.a, self.b, self.c, self.d, sigma2)

    def pmom_config(self) -> PMomConfig:
        return PMomConfig(r=self.r, tau=self.tau, sigma2=self.sigma0**2)

    @property
    def beta0_mode(self) -> str:
        if self.beta0 != "auto":
            return self.beta0
        return "ones" if self.experiment == "pmom" else "calibrated"

    def target_for(self, n: int) -> float:
        return float(n) if self.signal_target == "n" else float(self.signal_target)

    def to_text(self) -> str:
        """Canonical echo of every setting, re-parseable by :func:`parse_config`."""
        lines = []
        for section, keys in _SECTIONS.items():
            lines.append(f"[{section}]")
            for key in keys:
                value = getattr(self, key)
                if isinstance(value, tuple):
                    value = ", ".join(str(v) for v in value)
                elif isinstance(value, float):
                    value = repr(value)
                lines.append(f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)


_SECTIONS = {
    "experiment": ("experiment", "n_schedule", "p_rule", "xi_rule", "replicates", "mc_samples", "seed", "l1", "l2", "design", "omega_nodes"),
    "truth": ("sigma0", "beta0", "signal_target"),
    "gprior": ("a", "b", "c", "d"),
    "pmom": ("r", "tau", "q_samples"),
}
_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _convert(key, raw):
    kind = _TYPES[key]
    if key == "n_schedule":
        parts = [s.strip() for s in raw.split(",") if s.strip()]
        return tuple(int(v) for v in parts)
    if kind == "int":
        return int(raw)
    if kind == "float":
        value = float(raw)
        if not math.isfinite(value):
            raise ValueError("not finite")
        return value
    return raw


def parse_config(text: str, source: str = "<config>", base: ExperimentConfig | None = None) -> ExperimentConfig:
    values = {}
    seen_at = {}
    section = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw_line.strip()!r}", source, lineno)
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section [{section}]; expected one of {sorted(_SECTIONS)}", source, lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw_line.strip()!r}", source, lineno)
        if section is None:
            raise ConfigError("key outside of any section", source, lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _SECTIONS[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", source, lineno)
        if key in seen_at:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen_at[key]})", source, lineno)
        if raw == "":
            raise ConfigError(f"empty value for {key!r}", source, lineno)
        try:
            values[key] = _convert(key, raw)
        except ValueError:
            raise ConfigError(f"invalid value {raw!r} for {key!r} (expected {_TYPES[key]})", source, lineno) from None
        seen_at[key] = lineno
    try:
        return replace(base or ExperimentConfig(), **values)
    except ValidationError as exc:
        # attribute the semantic failure to the most plausible line
        culprit = next((seen_at[k] for k in seen_at if k in str(exc)), None)
        raise ConfigError(str(exc), source, culprit) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ValidationError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_config(text, source=str(path))
