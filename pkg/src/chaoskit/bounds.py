"""Tail machinery for sums of independent exponentials, and bound calculators.

The central objects are the distribution functions

    A_level(t) = P(Z_0 + ... + Z_level <= t),   Z_j ~ Exp(a + b*j) independent,

their scaled densities B_level(t), the exact weighted-sum identities they
satisfy, and a subgaussian upper bound.  Three independent evaluation routes
are provided for A: a Beta-distribution closed form (regularized incomplete
beta), nested quadrature of the defining iterated integral, and seeded Monte
Carlo.  On top of these sit the explicit entropy-decay bound calculators and
the interaction-series statistics they consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import expm1, lgamma, log1p

import numpy as np

from .model import SeriesCoefficients, series_terms

IDENTITY_TERM_CAP = 100_000
SERIES_SUM_CAP = 1_000_000


class ToleranceError(RuntimeError):
    """A truncation budget could not be met within the term cap."""


class PreconditionError(ValueError):
    """A bound was requested outside the regime where it is stated."""

    def __init__(self, message: str, required_n: float | None = None):
        super().__init__(message)
        self.required_n = required_n


@dataclass(frozen=True)
class RateLadder:
    """Exponential rates a + b*j, j = 0, 1, 2, ...; both rates positive."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"rates must be positive, got a={self.a}, b={self.b}")

    @property
    def shape(self) -> float:
        """The ratio a/b, which is the Beta shape parameter of the ladder."""
        return self.a / self.b

    def rate(self, j: int) -> float:
        return self.a + self.b * j


# ---------------------------------------------------------------------------
# Regularized incomplete beta via continued fraction


def _beta_cf(a: float, b: float, x: float, max_iter: int = 1000, eps: float = 1e-15) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise RuntimeError(f"incomplete beta continued fraction failed for ({a}, {b}, {x})")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """I_x(a, b) = P(Beta(a, b) <= x), with the symmetry switch at
    x = (a+1)/(a+b+2)."""
    if not (a > 0 and b > 0):
        raise ValueError(f"shape parameters must be positive, got ({a}, {b})")
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    front = math.exp(
        lgamma(a + b) - lgamma(a) - lgamma(b) + a * math.log(x) + b * log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


# ---------------------------------------------------------------------------
# The three evaluation routes for the ladder CDF


def _check_level_t(level: int, t: float) -> None:
    if level < 0 or level != int(level):
        raise ValueError(f"level must be a nonnegative integer, got {level}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")


def hypoexp_cdf(ladder: RateLadder, level: int, t: float) -> float:
    """P(Z_0 + ... + Z_level <= t), via the Beta closed form.

    The sum of the ladder exponentials hits t exactly when a
    Beta(a/b, level+1) variable exceeds e^(-bt); the survival probability
    is evaluated through the complementary regularized incomplete beta at
    1 - e^(-bt), which avoids cancellation for small and large t alike.
    """
    _check_level_t(level, t)
    if t == 0.0:
        return 0.0
    return betainc_regularized(level + 1.0, ladder.shape, -expm1(-ladder.b * t))


def _quadrature_geometry(n_nodes: int, panels: int, order: int):
    """Scale-free collocation geometry, cached across calls.

    Unit Chebyshev-Lobatto nodes on [0, 1], composite Gauss-Legendre
    offsets per node, and the barycentric interpolation matrix from nodal
    values to all quadrature points.  Everything scales linearly with the
    horizon, so one geometry serves every t.
    """
    j = np.arange(n_nodes + 1)
    s_hat = 0.5 * (1.0 - np.cos(np.pi * j / n_nodes))
    bary_w = np.where((j == 0) | (j == n_nodes), 0.5, 1.0) * (-1.0) ** j
    gl_x, gl_w = np.polynomial.legendre.leggauss(order)
    offs = (np.arange(panels)[:, None] + 0.5 * (gl_x + 1.0)[None, :]).ravel() / panels
    wts = np.tile(0.5 * gl_w, panels) / panels
    u_hat = s_hat[:, None] * offs[None, :]  # (nodes+1, panels*order)
    diff = u_hat.reshape(-1, 1) - s_hat[None, :]
    exact = diff == 0.0
    ratio = bary_w[None, :] / np.where(exact, 1.0, diff)
    interp = ratio / ratio.sum(axis=1, keepdims=True)
    interp[exact.any(axis=1)] = 0.0
    interp[np.nonzero(exact)] = 1.0
    return s_hat, u_hat, wts, interp


_GEOMETRY_CACHE: dict[tuple[int, int, int], tuple] = {}


def hypoexp_cdf_quadrature(
    ladder: RateLadder, level: int, t: float, n_nodes: int = 160, panels: int = 6,
    order: int = 20,
) -> float:
    """Nested quadrature of the defining iterated integral, abs tol 1e-10.

    The innermost exponential integral is elementary; each outer layer is a
    convolution against one more exponential kernel, evaluated on Chebyshev
    collocation nodes with composite Gauss-Legendre panels and barycentric
    interpolation of the layer below.  Cost grows with the level, which is
    capped at 5.
    """
    if level > 5:
        raise ValueError(f"quadrature route is capped at level 5, got {level}")
    _check_level_t(level, t)
    if t == 0.0:
        return 0.0
    key = (n_nodes, panels, order)
    if key not in _GEOMETRY_CACHE:
        _GEOMETRY_CACHE[key] = _quadrature_geometry(*key)
    s_hat, u_hat, wts, interp = _GEOMETRY_CACHE[key]
    rates = np.array([ladder.rate(j) for j in range(level + 1)])
    s_nodes = t * s_hat
    u = t * u_hat
    f_vals = -np.expm1(-rates[level] * s_nodes) / rates[level]
    for m in range(level - 1, -1, -1):
        f_at_u = (interp @ f_vals).reshape(u.shape)
        kernel = np.exp(-rates[m] * (s_nodes[:, None] - u))
        f_vals = s_nodes * (kernel * f_at_u * wts[None, :]).sum(axis=1)
    return float(np.prod(rates) * f_vals[-1])


def hypoexp_cdf_montecarlo(
    ladder: RateLadder, level: int, t: float, samples: int, seed: int
) -> tuple[float, float]:
    """Seeded empirical frequency of the hitting event, with binomial
    standard error.  Deterministic given (seed, samples)."""
    _check_level_t(level, t)
    if samples < 1000:
        raise ValueError(f"need at least 1000 samples, got {samples}")
    key = np.array([seed, 0xC5], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    rates = np.array([ladder.rate(j) for j in range(level + 1)])
    total = np.zeros(samples)
    for j in range(level + 1):  # draw per rung to keep memory flat
        total += rng.standard_exponential(samples) / rates[j]
    hits = float(np.count_nonzero(total <= t))
    est = hits / samples
    return est, math.sqrt(est * (1.0 - est) / samples)


def hypoexp_cdf_montecarlo_grid(
    ladder: RateLadder, max_level: int, ts, samples: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Batched Monte Carlo over all levels up to ``max_level`` and a time grid.

    Shares the per-rung draws across levels (partial sums), so each level's
    estimator has the same law as :func:`hypoexp_cdf_montecarlo` at a
    fraction of the cost.  Returns (estimates, standard errors), each of
    shape (max_level + 1, len(ts)).
    """
    if samples < 1000:
        raise ValueError(f"need at least 1000 samples, got {samples}")
    ts = np.asarray(ts, dtype=float)
    if (ts < 0).any():
        raise ValueError("times must be >= 0")
    key = np.array([seed, 0xC5], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    total = np.zeros(samples)
    est = np.empty((max_level + 1, len(ts)))
    for level in range(max_level + 1):
        total += rng.standard_exponential(samples) / ladder.rate(level)
        order = np.sort(total)
        est[level] = np.searchsorted(order, ts, side="right") / samples
    return est, np.sqrt(est * (1.0 - est) / samples)


def hypoexp_scaled_density(ladder: RateLadder, level: int, t: float) -> float:
    """B_level(t): the hitting density divided by the top rate a + b*level.

    B_0(t) = e^(-at); in general
    b * e^(-at) * Gamma(level + a/b + 1) / (level! Gamma(a/b))
      * (1 - e^(-bt))^level / (a + b*level).
    """
    _check_level_t(level, t)
    r = ladder.shape
    a, b = ladder.a, ladder.b
    if level == 0:
        return math.exp(-a * t)
    log_gamma_ratio = lgamma(level + r + 1.0) - lgamma(level + 1.0) - lgamma(r)
    one_minus = -expm1(-b * t)
    if one_minus == 0.0:
        return 0.0
    log_val = (
        math.log(b) - a * t + log_gamma_ratio + level * math.log(one_minus)
        - math.log(a + b * level)
    )
    return math.exp(log_val)


def hypoexp_cdf_bound(ladder: RateLadder, level: int, t: float) -> float:
    """Subgaussian upper bound on the ladder CDF:

    exp(-2 (level + a/b + 2) (e^(-bt) - (a/b)/(level + a/b + 1))_+^2),
    always in (0, 1] and dominating the exact value.
    """
    _check_level_t(level, t)
    r = ladder.shape
    gap = math.exp(-ladder.b * t) - r / (level + r + 1.0)
    if gap <= 0.0:
        return 1.0
    return math.exp(-2.0 * (level + r + 2.0) * gap * gap)


# ---------------------------------------------------------------------------
# Weighted-sum identities


def _cdf_weight_log(r: float, p: int, level: float) -> float:
    """log of prod_{i=1..p} (r + level + i)."""
    if p == 0:
        return 0.0
    return lgamma(r + level + p + 1.0) - lgamma(r + level + 1.0)


def _cdf_tail_estimate(ladder: RateLadder, p: int, t: float, start: int) -> float:
    """Analytic bound on sum_{level >= start} weight * A_level(t).

    Minimum of two closures: the subgaussian bound frozen at ``start`` and a
    direct bound on the Beta tail integral, each summed as a geometric
    series.  Either may be infinite when its ratio is not below one.
    """
    r = ladder.shape
    y = math.exp(-ladder.b * t)
    L = float(start)
    log_w = _cdf_weight_log(r, p, L)
    w_growth = 1.0 + p / (r + L + 1.0)
    tails = []
    gap = y - r / (L + r + 1.0)
    if gap > 0.0:
        q = math.exp(-2.0 * gap * gap) * w_growth
        if q < 1.0:
            log_term = log_w - 2.0 * (L + r + 2.0) * gap * gap
            tails.append(math.exp(log_term) / (1.0 - q))
    one_minus = -expm1(-ladder.b * t)
    if one_minus < 1.0:
        log_beta = (
            lgamma(L + r + 1.0) - lgamma(L + 1.0) - lgamma(r)
            + max(0.0, (r - 1.0) * math.log(y))
            + (L + 1.0) * math.log(one_minus) - math.log(L + 1.0)
        )
        ratio = one_minus * max((L + r + 1.0) / (L + 2.0), 1.0) * w_growth
        if ratio < 1.0:
            tails.append(math.exp(log_w + log_beta) / (1.0 - ratio))
    return min(tails) if tails else math.inf


def _select_terms(budget: float, tail, terms: int | None, cap: int) -> int:
    if terms is not None:
        if tail(terms) > budget:
            raise ToleranceError(
                f"truncation remainder exceeds budget at {terms} terms"
            )
        return terms
    L = 8
    while L <= cap:
        if tail(L) <= budget:
            return L
        L *= 2
    if tail(cap) <= budget:
        return cap
    raise ToleranceError(f"remainder budget unachievable within term cap {cap}")


def cdf_sum_identity(
    ladder: RateLadder, p: int, t: float, terms: int | None = None
) -> tuple[float, float]:
    """Exact vs truncated evaluation of the weighted CDF sum.

    The weights are prod_{i=1..p} (a/b + level + i); the closed value is
    prod_{i=0..p} (a/b + i) * (e^(b(1+p)t) - 1) / (1+p).  The truncation
    point is chosen (or verified, if ``terms`` is given) so that the
    analytic remainder is below 1e-10 of the closed value.
    """
    if p not in (0, 1, 2, 3):
        raise ValueError(f"weight power must be in 0..3, got {p}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    r = ladder.shape
    closed = (
        math.exp(lgamma(r + p + 1.0) - lgamma(r))
        * expm1(ladder.b * (1.0 + p) * t) / (1.0 + p)
    )
    if t == 0.0:
        return 0.0, 0.0
    budget = 1e-10 * closed
    n_terms = _select_terms(
        budget, lambda L: _cdf_tail_estimate(ladder, p, t, L), terms, IDENTITY_TERM_CAP
    )
    total = 0.0
    for level in range(n_terms):
        w = math.exp(_cdf_weight_log(r, p, level))
        total += w * hypoexp_cdf(ladder, level, t)
    return closed, total


def _density_term_log(ladder: RateLadder, level: int, t: float) -> float:
    """log of (a + b*level)^2 * B_level(t)."""
    r = ladder.shape
    a, b = ladder.a, ladder.b
    one_minus = -expm1(-b * t)
    return (
        math.log(a + b * level) + math.log(b) - a * t
        + lgamma(level + r + 1.0) - lgamma(level + 1.0) - lgamma(r)
        + (level * math.log(one_minus) if level > 0 else 0.0)
    )


def _density_tail_estimate(ladder: RateLadder, t: float, start: int) -> float:
    r = ladder.shape
    a, b = ladder.a, ladder.b
    one_minus = -expm1(-b * t)
    L = float(start)
    ratio = (
        one_minus * (1.0 + b / (a + b * L)) * max((L + r + 1.0) / (L + 1.0), 1.0)
    )
    if ratio >= 1.0:
        return math.inf
    return math.exp(_density_term_log(ladder, start, t)) / (1.0 - ratio)


def density_sum_bound(ladder: RateLadder, t: float) -> float:
    """Dominating exponential for the weighted density sum: a (a+b) e^(2bt).

    This is the pure-exponential envelope of :func:`density_sum_identity`
    and scales exactly like e^(2bt)."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    return ladder.a * (ladder.a + ladder.b) * math.exp(2.0 * ladder.b * t)


def density_sum_identity(
    ladder: RateLadder, t: float, terms: int | None = None
) -> tuple[float, float]:
    """Exact vs truncated sum of (a + b*level)^2 * B_level(t).

    Differentiating the weighted CDF sums term by term gives the closed
    value a (a+b) e^(2bt) - a b e^(bt), which is continuous down to the
    single level-0 term a^2 at t = 0.  Evaluated for t > 0 only.
    """
    if not (t > 0):
        raise ValueError(f"t must be > 0, got {t}")
    a, b = ladder.a, ladder.b
    closed = a * (a + b) * math.exp(2.0 * b * t) - a * b * math.exp(b * t)
    budget = 1e-10 * closed
    n_terms = _select_terms(
        budget, lambda L: _density_tail_estimate(ladder, t, L), terms, IDENTITY_TERM_CAP
    )
    total = 0.0
    for level in range(n_terms):
        rate = ladder.rate(level)
        total += rate * rate * hypoexp_scaled_density(ladder, level, t)
    return closed, total


# ---------------------------------------------------------------------------
# Interaction series statistics


@dataclass(frozen=True)
class SeriesStats:
    """Weighted moments and normalized tails of an interaction series."""

    moments: dict[int, float]  # p -> sum over orders of order^p * s_order
    tails: dict[float, float]  # x -> normalized tail mass beyond floor(x)


def _family_step_ratio(s: SeriesCoefficients, order: int) -> float:
    """Upper bound on s_{order+1} / s_order, valid from ``order`` on."""
    if s.family == "geometric":
        return s.rho
    if s.family == "super_geometric":
        # (order+1)^q - order^q >= 1 for q >= 1
        return math.exp(-s.c2)
    return 0.0


def series_stats(
    s: SeriesCoefficients, p_list=(0,), x_list=()
) -> SeriesStats:
    """Truncated moments and tail values of the coefficient series.

    Each requested moment power p (at most 3) is summed until the analytic
    remainder, closed geometrically from the family's step ratio, drops
    below truncation_tol relative to the partial sum.  Tails reuse the
    highest generated term range so they stay accurate in absolute terms.
    """
    for p in p_list:
        if p not in (0, 1, 2, 3):
            raise ValueError(f"moment powers are limited to 0..3, got {p}")
    x_floor = [int(math.floor(x)) for x in x_list]
    if s.family == "finite":
        terms = series_terms(s)
    else:
        # grow until the order-weighted tail bound clears the tolerance
        L = 64
        while True:
            terms = series_terms(s, orders=L)
            ratio = _family_step_ratio(s, L) * (1.0 + 1.0 / L) ** max(p_list, default=0)
            if ratio < 1.0:
                tail = terms[-1] * L ** max(p_list, default=0) * ratio / (1.0 - ratio)
                base = float(terms.sum())
                if base > 0 and tail <= s.truncation_tol * base:
                    break
                if base == 0.0:
                    break
            if L > SERIES_SUM_CAP:
                raise ToleranceError(
                    f"series tolerance unreachable within {SERIES_SUM_CAP} terms"
                )
            L *= 2
        need = max(x_floor, default=0) + max(L, 64)
        if need > len(terms):
            if need > SERIES_SUM_CAP:
                raise ToleranceError(
                    f"series tolerance unreachable within {SERIES_SUM_CAP} terms"
                )
            terms = series_terms(s, orders=need)
    orders = np.arange(1, len(terms) + 1, dtype=float)
    moments = {p: float((orders**p * terms).sum()) for p in p_list}
    s0 = float(terms.sum())
    tails = {}
    for x, fl in zip(x_list, x_floor):
        if s0 == 0.0:
            tails[x] = 0.0
        else:
            tails[x] = float(terms[fl:].sum()) / s0 if fl < len(terms) else 0.0
    return SeriesStats(moments=moments, tails=tails)


def series_tail_hypothesis(s: SeriesCoefficients) -> tuple[float, float, float]:
    """(c1, c2, q) such that the normalized tail obeys c1 * exp(-c2 * x^q).

    Only the built-in infinite families carry one; ``finite`` has no
    exponential tail hypothesis and raises.
    """
    if s.family == "geometric":
        return 1.0 / s.rho, -math.log(s.rho), 1.0
    if s.family == "super_geometric":
        # the derived constant saturates once the tail rate is extreme
        c1 = s.c1 if s.c1 > 0 else math.exp(min(s.c2, 700.0)) / -expm1(-s.c2)
        return c1, s.c2, s.q
    raise ValueError(f"family {s.family!r} carries no exponential tail hypothesis")


def select_truncation_order(
    s: SeriesCoefficients, T: float, n: int, k: int, mode: str, eps: float | None = None
) -> tuple[int, float]:
    """Truncation order and predicted decay exponent for the tail-vs-size
    tradeoff of the higher-order entropy bound.

    mode "subexp" balances the exponents automatically and requires the
    tail rate to exceed 4 * mass^2 * T; mode "subexp_q" takes a caller
    epsilon in (0, 1) and predicts exponent 2 - eps.  The order is
    floor(eps_eff / (8 * mass^2 * T) * log(n/k)), clamped to >= 1.
    """
    if not (1 <= k <= n):
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if not (T > 0):
        raise ValueError(f"T must be > 0, got {T}")
    s0 = series_stats(s, p_list=(0,)).moments[0]
    if s0 <= 0:
        raise ValueError("series has no mass; nothing to truncate")
    _, c2, _q = series_tail_hypothesis(s)
    scale = s0 * s0 * T
    if mode == "subexp":
        if not (c2 > 4.0 * scale):
            raise ValueError(
                f"tail rate c2={c2} must exceed 4 * mass^2 * T = {4.0 * scale}"
            )
        alpha = c2 / (4.0 * scale)
        eps_eff = 2.0 / (alpha + 2.0)
        exponent = 2.0 * (c2 - 4.0 * scale) / (c2 + 8.0 * scale)
    elif mode == "subexp_q":
        if eps is None or not (0.0 < eps < 1.0):
            raise ValueError("mode subexp_q needs eps in (0, 1)")
        eps_eff = eps
        exponent = 2.0 - eps
    else:
        raise ValueError(f"unknown mode {mode!r}")
    ell = math.floor(eps_eff / (8.0 * scale) * math.log(n / k))
    return max(1, ell), exponent


# ---------------------------------------------------------------------------
# Entropy bound calculators


@dataclass(frozen=True)
class BoundInputs:
    """Inputs of the pairwise entropy-decay bound."""

    C0: float
    gamma: float
    M: float
    T: float
    n: int
    k: int

    def __post_init__(self):
        if min(self.C0, self.gamma, self.M, self.T) < 0:
            raise ValueError("constants must be nonnegative")
        if not (1 <= self.k <= self.n):
            raise ValueError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")


@dataclass(frozen=True)
class BoundReport:
    """Evaluated bound: named terms, intermediate constants, and the total."""

    total: float
    terms: dict[str, float]
    constants: dict[str, float]


def _make_report(terms: dict[str, float], constants: dict[str, float]) -> BoundReport:
    total = sum(terms.values())
    if total < 0:
        raise ValueError("bound terms must be nonnegative")
    return BoundReport(total=total, terms=terms, constants=constants)


def _two_term_bound(C: float, gamma: float, T: float, n: int, k: int) -> dict[str, float]:
    gap = max(0.0, math.exp(-gamma * T) - k / n)
    return {
        "k_over_n_squared": 2.0 * C * k * k / (n * n),
        "exponential": C * math.exp(-2.0 * n * gap * gap),
    }


def entropy_bound_pairwise(inp: BoundInputs) -> BoundReport:
    """Entropy decay bound for pairwise interactions.

    C = 8 (C0 + (1 + gamma) M T) e^(6 gamma T);
    bound = 2 C k^2/n^2 + C exp(-2n (e^(-gamma T) - k/n)_+^2).
    Stated only for n >= 6 e^(gamma T); smaller n raises PreconditionError
    carrying the minimum admissible size.
    """
    threshold = 6.0 * math.exp(inp.gamma * inp.T)
    slack = inp.n - threshold
    if slack < 0:
        raise PreconditionError(
            f"n={inp.n} is below the admissible threshold {threshold:.6g}",
            required_n=threshold,
        )
    C = 8.0 * (inp.C0 + (1.0 + inp.gamma) * inp.M * inp.T) * math.exp(6.0 * inp.gamma * inp.T)
    terms = _two_term_bound(C, inp.gamma, inp.T, inp.n, inp.k)
    constants = {
        "C": C,
        "gamma": inp.gamma,
        "precondition_slack": slack,
    }
    return _make_report(terms, constants)


def entropy_bound_reversed(
    C0: float, b_sup: float, T: float, n: int, k: int
) -> BoundReport:
    """Entropy decay bound with the arguments of the entropy reversed.

    Requires a bounded interaction; gamma = 2 * b_sup^2 and
    C = (C0 + 2 gamma T) e^(2 gamma T).  No size threshold applies.
    """
    if b_sup < 0 or C0 < 0 or T < 0:
        raise ValueError("constants must be nonnegative")
    if not (1 <= k <= n):
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    gamma = 2.0 * b_sup * b_sup
    C = (C0 + 2.0 * gamma * T) * math.exp(2.0 * gamma * T)
    terms = _two_term_bound(C, gamma, T, n, k)
    return _make_report(terms, {"C": C, "gamma": gamma})


def entropy_bound_higher_order(
    C0: float, s: SeriesCoefficients, T: float, n: int, k: int, ell: int
) -> BoundReport:
    """Entropy decay bound for interactions given by a coefficient series.

    Four terms: the initial-chaos term, a k^3/n^2 term, a tail term that
    vanishes when the series is supported below the truncation order, and
    an exponential concentration term.  Stated for 1 <= ell and
    ell + k <= n/2.
    """
    if C0 < 0 or T < 0:
        raise ValueError("constants must be nonnegative")
    if ell < 1 or k < 1 or ell + k > n / 2:
        raise PreconditionError(
            f"need 1 <= ell and ell + k <= n/2, got ell={ell}, k={k}, n={n}"
        )
    stats = series_stats(s, p_list=(0, 2), x_list=(float(ell),))
    s0, s2 = stats.moments[0], stats.moments[2]
    tail = stats.tails[float(ell)]
    ratio = s2 / s0 if s0 > 0 else 0.0
    scale = s0 * s0 * T
    gap = max(0.0, math.exp(-8.0 * scale * ell) - k / (2.0 * n))
    terms = {
        "initial": 16.0 * C0 * s0 * s0 * math.exp(16.0 * scale * ell) * k * k / (n * n),
        "second_order": 9.0 * ratio * ratio * math.exp(24.0 * scale * ell) * k**3 / (ell * n * n),
        "series_tail": math.exp(8.0 * scale * ell) * tail * tail * k / ell,
        "exponential": (C0 + 2.0 * scale * n) * math.exp(-(n / ell) * gap * gap),
    }
    constants = {
        "mass": s0,
        "second_moment": s2,
        "tail_at_order": tail,
        "precondition_slack": n / 2.0 - (ell + k),
    }
    return _make_report(terms, constants)


def transport_constant_from_exp_moment(kappa: float, R: float) -> float:
    """Transport constant implied by a square-exponential moment bound:
    2 (1 + R) / kappa."""
    if not (kappa > 0):
        raise ValueError(f"kappa must be > 0, got {kappa}")
    if R < 0:
        raise ValueError(f"R must be >= 0, got {R}")
    return 2.0 * (1.0 + R) / kappa


def lipschitz_constants(
    L: float, eta0: float, T: float, M0: float, m2_mu0: float, m2_P0: float, d: int
) -> tuple[float, float]:
    """(M, gamma) for Lipschitz drifts with constant L and offset mass M0.

    M = 8 L^2 e^(16 T L^2) (m2_mu0 + m2_P0 + 2 M0^2 + 8 d T);
    gamma = 3 L^2 max(eta0, 2T) e^(3 T L^2).
    """
    if not (L > 0 and eta0 > 0 and T > 0):
        raise ValueError("L, eta0 and T must be positive")
    if min(M0, m2_mu0, m2_P0) < 0 or d < 1:
        raise ValueError("moments must be nonnegative and d >= 1")
    M = 8.0 * L * L * math.exp(16.0 * T * L * L) * (
        m2_mu0 + m2_P0 + 2.0 * M0 * M0 + 8.0 * d * T
    )
    gamma = 3.0 * L * L * max(eta0, 2.0 * T) * math.exp(3.0 * T * L * L)
    return M, gamma


def quadratic_transport_constant(C0_T2: float, T: float, L: float) -> float:
    """Quadratic transport constant on path space: 3 (C0 v 2T) e^(3 T L^2)."""
    if not (C0_T2 > 0 and T > 0):
        raise ValueError("C0_T2 and T must be positive")
    if L < 0:
        raise ValueError(f"L must be >= 0, got {L}")
    return 3.0 * max(C0_T2, 2.0 * T) * math.exp(3.0 * T * L * L)
