"""Domain types and validated experiment configuration.

Everything here is an immutable value object.  Validation is centralized in
:func:`validate_config`, which returns a list of human-readable diagnostics
instead of raising, so that a CLI run can report every problem at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

CONFINEMENT_KINDS = ("zero", "linear")
PAIRWISE_KINDS = ("ou_linear", "bounded_tanh", "lingrowth_sign", "rank_indicator")
SERIES_BASE_KINDS = ("bounded_tanh", "rank_indicator")
SERIES_FAMILIES = ("finite", "geometric", "super_geometric")
INIT_KINDS = ("dirac_zero", "iid_gaussian")

SERIES_TERM_CAP = 100_000


class ConfigError(ValueError):
    """Raised when a configuration is rejected; carries all diagnostics."""

    def __init__(self, diagnostics: Sequence[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class UnknownKernelError(ValueError):
    pass


@dataclass(frozen=True)
class Confinement:
    """Single-particle drift term.  ``linear`` means x -> -rate * x."""

    kind: str = "zero"
    rate: float = 0.0


@dataclass(frozen=True)
class Pairwise:
    """Pairwise interaction kernel, averaged over the other n-1 particles.

    Built-in kernels (state y is the other particle, x is the own state):

    - ``ou_linear``:      -rate * y      (mean-reverting sign convention)
    - ``bounded_tanh``:   tanh(y - x)    componentwise
    - ``lingrowth_sign``: rate * sign(y - x) * (1 + |y|), sign(0) = +1
    - ``rank_indicator``: 1{y <= x}, one-dimensional states only
    """

    kind: str
    rate: float = 1.0


@dataclass(frozen=True)
class SeriesCoefficients:
    """Nonnegative summable interaction weights, indexed from order 1.

    ``finite`` uses ``values`` literally.  ``geometric`` uses
    (1-rho)*rho**(order-1), which sums to one.  ``super_geometric`` uses
    exp(-c2 * order**q) normalized to unit mass; ``c1`` records the constant
    of the tail hypothesis S0(x) <= c1 * exp(-c2 * x**q).
    """

    family: str
    values: tuple[float, ...] = ()
    rho: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    q: float = 1.0
    truncation_tol: float = 1e-12

    @staticmethod
    def finite(values: Sequence[float]) -> "SeriesCoefficients":
        return SeriesCoefficients(family="finite", values=tuple(float(v) for v in values))

    @staticmethod
    def geometric(rho: float, truncation_tol: float = 1e-12) -> "SeriesCoefficients":
        return SeriesCoefficients(family="geometric", rho=float(rho), truncation_tol=truncation_tol)

    @staticmethod
    def super_geometric(
        c1: float, c2: float, q: float, truncation_tol: float = 1e-12
    ) -> "SeriesCoefficients":
        return SeriesCoefficients(
            family="super_geometric", c1=float(c1), c2=float(c2), q=float(q),
            truncation_tol=truncation_tol,
        )


@dataclass(frozen=True)
class PowerSeries:
    """Interaction of the form G(<empirical law, base(x, .)>).

    ``signs`` is "positive", "alternating", or an explicit tuple of +-1 per
    order (finite families).  The series has no constant term; constants
    belong in the confinement.
    """

    base: str
    coefficients: SeriesCoefficients
    signs: str | tuple[int, ...] = "positive"


@dataclass(frozen=True)
class Regularity:
    """Declared regularity class of a drift, with its constants."""

    kind: str  # lipschitz | bounded | linear_growth | power_series_bounded
    L: float = 0.0
    M0: float = 0.0
    b_sup: float = 0.0
    K: float = 0.0


@dataclass(frozen=True)
class DriftSpec:
    confinement: Confinement = field(default_factory=Confinement)
    interaction: Pairwise | PowerSeries | None = None
    regularity: Regularity | None = None

    def tag(self) -> str:
        if self.interaction is None:
            inter = "none"
        elif isinstance(self.interaction, Pairwise):
            inter = self.interaction.kind
        else:
            inter = f"series[{self.interaction.base}]"
        return f"{self.confinement.kind}+{inter}"


@dataclass(frozen=True)
class OUParams:
    """Linear mean-reverting dynamics: rate ``a`` on self, ``b`` on the mean."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b >= 0):
            raise ValueError(f"require a > 0 and b >= 0, got a={self.a}, b={self.b}")


@dataclass(frozen=True)
class InitialCondition:
    kind: str = "dirac_zero"
    mean: float = 0.0
    var: float = 1.0

    @staticmethod
    def dirac_zero() -> "InitialCondition":
        return InitialCondition(kind="dirac_zero")

    @staticmethod
    def iid_gaussian(mean: float, var: float) -> "InitialCondition":
        return InitialCondition(kind="iid_gaussian", mean=float(mean), var=float(var))


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    k: int
    d: int
    T: float
    dt: float
    replicas: int
    seed: int
    drift: DriftSpec
    init: InitialCondition = field(default_factory=InitialCondition)

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


def ou_drift(a: float, b: float) -> DriftSpec:
    """Linear confinement -a*x plus mean-field interaction -b*y."""
    return DriftSpec(
        confinement=Confinement(kind="linear", rate=a),
        interaction=Pairwise(kind="ou_linear", rate=b),
        regularity=Regularity(kind="lipschitz", L=max(a, b), M0=0.0),
    )


def default_regularity(spec: DriftSpec) -> Regularity:
    """Regularity class implied by the built-in kernels of a drift spec."""
    inter = spec.interaction
    a = spec.confinement.rate if spec.confinement.kind == "linear" else 0.0
    if inter is None:
        return Regularity(kind="lipschitz", L=a, M0=0.0)
    if isinstance(inter, PowerSeries):
        return Regularity(kind="power_series_bounded")
    if inter.kind == "ou_linear":
        return Regularity(kind="lipschitz", L=max(a, inter.rate), M0=0.0)
    if inter.kind in ("bounded_tanh", "rank_indicator"):
        return Regularity(kind="bounded", b_sup=1.0)
    if inter.kind == "lingrowth_sign":
        # sign flips between two evaluation points can double the increment,
        # so the declared growth constant is 2 * rate.
        return Regularity(kind="linear_growth", K=2.0 * inter.rate)
    raise UnknownKernelError(inter.kind)


# ---------------------------------------------------------------------------
# Series coefficient expansion


def series_order_cutoff(s: SeriesCoefficients) -> int:
    """Smallest order L with coefficient tail mass below truncation_tol."""
    tol = s.truncation_tol
    if s.family == "finite":
        return len(s.values)
    if s.family == "geometric":
        # tail after L is rho**L exactly (unit total mass)
        L = max(1, math.ceil(math.log(tol) / math.log(s.rho)))
    elif s.family == "super_geometric":
        # tail after L is at most exp(-c2*(L+1)**q) / (1 - exp(-c2)),
        # relative to a total mass of at least exp(-c2)
        denom = -math.expm1(-s.c2)
        L = max(1, math.ceil((math.log(1.0 / (tol * denom)) / s.c2) ** (1.0 / s.q)))
    else:
        raise ValueError(f"unknown series family {s.family!r}")
    if L > SERIES_TERM_CAP:
        raise ConfigError([f"series truncation needs {L} terms, cap is {SERIES_TERM_CAP}"])
    return L


def series_terms(s: SeriesCoefficients, orders: int | None = None) -> np.ndarray:
    """Coefficients s_1..s_L as an array (index 0 is order 1)."""
    L = series_order_cutoff(s) if orders is None else orders
    ell = np.arange(1, L + 1, dtype=float)
    if s.family == "finite":
        out = np.zeros(L)
        vals = np.asarray(s.values, dtype=float)
        out[: min(L, len(vals))] = vals[:L]
        return out
    if s.family == "geometric":
        return (1.0 - s.rho) * s.rho ** (ell - 1.0)
    if s.family == "super_geometric":
        # shift exponents by the leading term so huge rates do not underflow
        raw = np.exp(-s.c2 * (ell**s.q - 1.0))
        return raw / raw.sum()
    raise ValueError(f"unknown series family {s.family!r}")


def signed_series_terms(ps: PowerSeries) -> np.ndarray:
    """Coefficients with the sign pattern applied, order 1 upward."""
    terms = series_terms(ps.coefficients)
    if ps.signs == "positive":
        return terms
    if ps.signs == "alternating":
        signs = np.where(np.arange(1, len(terms) + 1) % 2 == 1, 1.0, -1.0)
        return terms * signs
    signs = np.asarray(ps.signs, dtype=float)
    if len(signs) < len(terms):
        raise ConfigError(["drift.interaction.signs: explicit pattern shorter than series"])
    return terms * signs[: len(terms)]


# ---------------------------------------------------------------------------
# Validation


def _validate_series(s: SeriesCoefficients, path: str, out: list[str]) -> None:
    if s.family not in SERIES_FAMILIES:
        out.append(f"{path}.family: unknown family {s.family!r}")
        return
    if not (0 < s.truncation_tol < 1):
        out.append(f"{path}.truncation_tol: must be in (0, 1)")
    if s.family == "finite":
        if any(v < 0 or not math.isfinite(v) for v in s.values):
            out.append(f"{path}.values: all coefficients must be finite and >= 0")
    elif s.family == "geometric":
        if not (0 < s.rho < 1):
            out.append(f"{path}.rho: geometric ratio must be in (0,1)")
    elif s.family == "super_geometric":
        if not (s.c2 > 0):
            out.append(f"{path}.c2: must be > 0")
        if not (s.q >= 1):
            out.append(f"{path}.q: must be >= 1")
        if s.c1 < 0:
            out.append(f"{path}.c1: must be >= 0")


def _validate_regularity(r: Regularity, path: str, out: list[str]) -> None:
    if r.kind == "lipschitz":
        if not (r.L > 0 or r.L == 0):
            out.append(f"{path}.L: must be finite")
        if r.L < 0 or not math.isfinite(r.L):
            out.append(f"{path}.L: must be > 0 and finite")
        if r.M0 < 0 or not math.isfinite(r.M0):
            out.append(f"{path}.M0: must be >= 0 and finite")
    elif r.kind == "bounded":
        if r.b_sup < 0:
            out.append(f"{path}.b_sup: must be >= 0")
    elif r.kind == "linear_growth":
        if not (r.K > 0):
            out.append(f"{path}.K: must be > 0")
    elif r.kind != "power_series_bounded":
        out.append(f"{path}.kind: unknown regularity {r.kind!r}")


def _validate_drift(spec: DriftSpec, d: int, out: list[str]) -> None:
    c = spec.confinement
    if c.kind not in CONFINEMENT_KINDS:
        out.append(f"drift.confinement.kind: unknown kernel {c.kind!r}")
    elif c.kind == "linear" and not (c.rate >= 0 and math.isfinite(c.rate)):
        out.append("drift.confinement.rate: must be >= 0 and finite")
    inter = spec.interaction
    if inter is None:
        pass
    elif isinstance(inter, Pairwise):
        if inter.kind not in PAIRWISE_KINDS:
            out.append(f"drift.interaction.kind: unknown kernel {inter.kind!r}")
        elif inter.kind in ("ou_linear", "lingrowth_sign") and not (
            inter.rate >= 0 and math.isfinite(inter.rate)
        ):
            out.append("drift.interaction.rate: must be >= 0 and finite")
        if inter.kind == "rank_indicator" and d != 1:
            out.append("drift.interaction: rank_indicator requires d = 1")
    elif isinstance(inter, PowerSeries):
        if inter.base not in SERIES_BASE_KINDS:
            out.append(f"drift.interaction.base: unknown kernel {inter.base!r}")
        if d != 1:
            out.append("drift.interaction: power_series interactions require d = 1")
        if isinstance(inter.signs, str) and inter.signs not in ("positive", "alternating"):
            out.append(f"drift.interaction.signs: unknown pattern {inter.signs!r}")
        _validate_series(inter.coefficients, "drift.interaction.coefficients", out)
    else:
        out.append("drift.interaction: unsupported interaction object")
    if spec.regularity is not None:
        _validate_regularity(spec.regularity, "drift.regularity", out)


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig | list[str]:
    """Return ``cfg`` unchanged if every invariant holds, else diagnostics."""
    out: list[str] = []
    if cfg.n < 1:
        out.append("n: must be >= 1")
    if not (1 <= cfg.k <= cfg.n):
        out.append("k: k <= n violated" if cfg.k > cfg.n else "k: must be >= 1")
    if cfg.d < 1:
        out.append("d: must be >= 1")
    if not (cfg.dt > 0):
        out.append("dt: must be > 0")
    elif not (cfg.T >= cfg.dt):
        out.append("T: must be >= dt")
    if cfg.replicas < 1:
        out.append("replicas: must be >= 1")
    if not (0 <= cfg.seed < 2**64):
        out.append("seed: must fit in 64 bits")
    if cfg.init.kind not in INIT_KINDS:
        out.append(f"init.kind: unknown initial condition {cfg.init.kind!r}")
    elif cfg.init.kind == "iid_gaussian" and not (cfg.init.var >= 0):
        out.append("init.var: must be >= 0")
    _validate_drift(cfg.drift, cfg.d, out)
    return cfg if not out else out


def require_valid(cfg: ExperimentConfig) -> ExperimentConfig:
    result = validate_config(cfg)
    if isinstance(result, list):
        raise ConfigError(result)
    return result


# ---------------------------------------------------------------------------
# Drift evaluators


def instantiate_drift(spec: DriftSpec) -> Callable[[float, np.ndarray], np.ndarray]:
    """Build a pure evaluator (t, states) -> drift for a validated spec.

    ``states`` is the full ensemble snapshot of shape (n, d); the result has
    the same shape.  Raises :class:`UnknownKernelError` for unknown kernel
    ids.  All built-in kernels are Markovian, so t is ignored.
    """
    from . import _stepper_py as sp

    conf = spec.confinement
    if conf.kind not in CONFINEMENT_KINDS:
        raise UnknownKernelError(conf.kind)
    a = conf.rate if conf.kind == "linear" else 0.0
    inter = spec.interaction

    if inter is None:
        return lambda t, x: -a * np.asarray(x, dtype=float)

    if isinstance(inter, Pairwise):
        if inter.kind not in PAIRWISE_KINDS:
            raise UnknownKernelError(inter.kind)
        kind, rate = inter.kind, inter.rate

        def evaluate(t: float, x: np.ndarray) -> np.ndarray:
            x = np.asarray(x, dtype=float)
            return -a * x + sp.pairwise_interaction(x, kind, rate)

        return evaluate

    if isinstance(inter, PowerSeries):
        if inter.base not in SERIES_BASE_KINDS:
            raise UnknownKernelError(inter.base)
        base = inter.base
        coefs = signed_series_terms(inter)

        def evaluate_series(t: float, x: np.ndarray) -> np.ndarray:
            x = np.asarray(x, dtype=float)
            return -a * x + sp.power_series_interaction(x, base, coefs)

        return evaluate_series

    raise UnknownKernelError(str(type(inter)))


# ---------------------------------------------------------------------------
# Config file parsing: line-oriented "key = value" under [section] headers.


def parse_sections(text: str) -> dict[str, dict[str, str]]:
    """Parse the raw section/key/value structure of a config file.

    Full-line comments start with ``#``.  Duplicate sections or keys and
    content outside a section are hard errors.
    """
    sections: dict[str, dict[str, str]] = {}
    current: dict[str, str] | None = None
    errors: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name in sections:
                errors.append(f"line {lineno}: duplicate section [{name}]")
            current = sections.setdefault(name, {})
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value'")
            continue
        if current is None:
            errors.append(f"line {lineno}: key outside any [section]")
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in current:
            errors.append(f"line {lineno}: duplicate key {key!r}")
        current[key] = value
    if errors:
        raise ConfigError(errors)
    return sections


def _parse_float(section: str, key: str, value: str, out: list[str]) -> float:
    try:
        return float(value)
    except ValueError:
        out.append(f"{section}.{key}: not a number: {value!r}")
        return math.nan


def _parse_int(section: str, key: str, value: str, out: list[str]) -> int:
    try:
        f = float(value)
    except ValueError:
        out.append(f"{section}.{key}: not a number: {value!r}")
        return 0
    if f != int(f):
        out.append(f"{section}.{key}: expected an integer, got {value!r}")
        return 0
    return int(f)


_EXPERIMENT_KEYS = {
    "n", "k", "d", "T", "dt", "replicas", "seed", "init", "init_mean", "init_var",
}
_DRIFT_KEYS = {"confinement", "confinement_rate", "interaction", "kernel", "rate", "signs"}
_SERIES_KEYS = {"family", "values", "rho", "c1", "c2", "q", "truncation_tol"}


def parse_experiment_config(text: str) -> ExperimentConfig:
    """Parse an experiment config file; raises ConfigError on any problem."""
    sections = parse_sections(text)
    errors: list[str] = []
    known = {"experiment", "drift", "series"}
    for name in sections:
        if name not in known:
            errors.append(f"unknown section [{name}]")
    exp = sections.get("experiment", {})
    dri = sections.get("drift", {})
    ser = sections.get("series", {})
    for key in exp:
        if key not in _EXPERIMENT_KEYS:
            errors.append(f"experiment.{key}: unknown key")
    for key in dri:
        if key not in _DRIFT_KEYS:
            errors.append(f"drift.{key}: unknown key")
    for key in ser:
        if key not in _SERIES_KEYS:
            errors.append(f"series.{key}: unknown key")
    if errors:
        raise ConfigError(errors)

    n = _parse_int("experiment", "n", exp.get("n", "0"), errors)
    k = _parse_int("experiment", "k", exp.get("k", "1"), errors)
    d = _parse_int("experiment", "d", exp.get("d", "1"), errors)
    T = _parse_float("experiment", "T", exp.get("T", "1.0"), errors)
    dt = _parse_float("experiment", "dt", exp.get("dt", "1e-2"), errors)
    replicas = _parse_int("experiment", "replicas", exp.get("replicas", "1"), errors)
    seed = _parse_int("experiment", "seed", exp.get("seed", "0"), errors)
    init_kind = exp.get("init", "dirac_zero")
    init = InitialCondition(
        kind=init_kind,
        mean=_parse_float("experiment", "init_mean", exp.get("init_mean", "0"), errors),
        var=_parse_float("experiment", "init_var", exp.get("init_var", "1"), errors),
    )

    conf = Confinement(
        kind=dri.get("confinement", "zero"),
        rate=_parse_float("drift", "confinement_rate", dri.get("confinement_rate", "0"), errors),
    )
    inter_kind = dri.get("interaction", "none")
    interaction: Pairwise | PowerSeries | None
    if inter_kind == "none":
        interaction = None
    elif inter_kind == "pairwise":
        interaction = Pairwise(
            kind=dri.get("kernel", ""),
            rate=_parse_float("drift", "rate", dri.get("rate", "1.0"), errors),
        )
    elif inter_kind == "power_series":
        family = ser.get("family", "")
        coeffs = SeriesCoefficients(
            family=family,
            values=tuple(
                _parse_float("series", "values", v, errors)
                for v in ser.get("values", "").split(",")
                if v.strip()
            ),
            rho=_parse_float("series", "rho", ser.get("rho", "0"), errors),
            c1=_parse_float("series", "c1", ser.get("c1", "0"), errors),
            c2=_parse_float("series", "c2", ser.get("c2", "0"), errors),
            q=_parse_float("series", "q", ser.get("q", "1"), errors),
            truncation_tol=_parse_float(
                "series", "truncation_tol", ser.get("truncation_tol", "1e-12"), errors
            ),
        )
        interaction = PowerSeries(
            base=dri.get("kernel", ""), coefficients=coeffs,
            signs=dri.get("signs", "positive"),
        )
    else:
        errors.append(f"drift.interaction: unknown value {inter_kind!r}")
        interaction = None
    if errors:
        raise ConfigError(errors)

    spec = DriftSpec(confinement=conf, interaction=interaction)
    spec = replace(spec, regularity=default_regularity(spec))
    cfg = ExperimentConfig(
        n=n, k=k, d=d, T=T, dt=dt, replicas=replicas, seed=seed, drift=spec, init=init
    )
    return require_valid(cfg)
