"""Exact closed forms for the linear (Ornstein-Uhlenbeck) particle system.

With linear confinement rate ``a`` and mean-field coupling rate ``b``, the
n-particle system started at zero is a centered Gaussian whose covariance
lives in span{I, J}.  Everything about its k-particle marginals, their
Wasserstein and entropy distances to the mean-field product law, and the
large-n limits of those distances can be evaluated in closed form.  All
exponential differences go through expm1 so that the small-t and large-n
regimes keep full relative precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import OUParams


@dataclass(frozen=True)
class ExchangeableCovariance:
    """Covariance of the form v * (I - c * J) on ``dim`` coordinates.

    Eigenvalues are v with multiplicity dim-1 and v*(1 - c*dim) with
    multiplicity 1, so positive definiteness is v > 0 and c*dim < 1.
    ``source_n`` records the system size the matrix was derived from.
    """

    dim: int
    v: float
    c: float
    source_n: int | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not (self.v > 0):
            raise ValueError(f"diagonal scale must be > 0, got v={self.v}")
        if not (self.c * self.dim < 1.0):
            raise ValueError(
                f"not positive definite: c*dim = {self.c * self.dim} >= 1"
            )

    def eigenvalues(self) -> tuple[tuple[float, int], tuple[float, int]]:
        """((eigenvalue, multiplicity), ...) pairs of the matrix."""
        return ((self.v, self.dim - 1), (self.v * (1.0 - self.c * self.dim), 1))

    def dense(self) -> np.ndarray:
        """Materialize the dim x dim matrix (for oracles and small cases)."""
        return self.v * (np.eye(self.dim) - self.c * np.ones((self.dim, self.dim)))


def ou_covariance(p: OUParams, n: int, t: float) -> ExchangeableCovariance:
    """Time-t covariance of the n-particle linear system started at zero.

    v(t) = (1 - e^(-2at)) / (2a) and the coupling coefficient c solves the
    integrated two-eigenvalue flow; with no interaction (b = 0) c is exactly
    zero.  Requires n >= 2 and t > 0.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not (t > 0):
        raise ValueError(f"t must be > 0, got {t}")
    a, b = p.a, p.b
    v = -math.expm1(-2.0 * a * t) / (2.0 * a)
    a_eff = a + b * n / (n - 1.0)
    ratio = math.expm1(-2.0 * t * a_eff) / math.expm1(-2.0 * a * t)
    c = (1.0 - (a / a_eff) * ratio) / n
    return ExchangeableCovariance(dim=n, v=v, c=c, source_n=n)


def marginal(cov: ExchangeableCovariance, k: int) -> ExchangeableCovariance:
    """k-coordinate marginal: same (v, c) on a smaller block."""
    if not (1 <= k <= cov.dim):
        raise ValueError(f"k must be in [1, {cov.dim}], got {k}")
    return replace(cov, dim=k)


def mean_field_variance(p: OUParams, t: float) -> float:
    """Variance of the mean-field one-particle law at time t (zero start)."""
    if not (t > 0):
        raise ValueError(f"t must be > 0, got {t}")
    return -math.expm1(-2.0 * p.a * t) / (2.0 * p.a)


def mean_field_reference(p: OUParams, t: float, k: int) -> ExchangeableCovariance:
    """Covariance of the k-fold product of the mean-field law."""
    return ExchangeableCovariance(dim=k, v=mean_field_variance(p, t), c=0.0)


def _paired_eigenvalues(c1: ExchangeableCovariance, c2: ExchangeableCovariance):
    if c1.dim != c2.dim:
        raise ValueError(f"dimension mismatch: {c1.dim} != {c2.dim}")
    k = c1.dim
    lam1 = c1.v * (1.0 - c1.c * k)
    lam2 = c2.v * (1.0 - c2.c * k)
    return k, lam1, lam2


def w2_gaussian(c1: ExchangeableCovariance, c2: ExchangeableCovariance) -> float:
    """Squared quadratic Wasserstein distance between the centered Gaussians.

    Simultaneous diagonalization reduces the commuting-covariance trace
    formula to the two shared eigendirections:

        (k-1) * (sqrt(v1) - sqrt(v2))^2 + (sqrt(lam1) - sqrt(lam2))^2

    with lam_i = v_i * (1 - c_i * k).  The differences of square roots are
    computed as difference quotients to avoid cancellation.
    """
    k, lam1, lam2 = _paired_eigenvalues(c1, c2)

    def sq_gap(x: float, y: float) -> float:
        return ((x - y) / (math.sqrt(x) + math.sqrt(y))) ** 2

    return (k - 1) * sq_gap(c1.v, c2.v) + sq_gap(lam1, lam2)


def _kl_term(lam1: float, lam2: float) -> float:
    # r - 1 - ln r for r = lam1/lam2, accurate when r is close to 1
    delta = (lam1 - lam2) / lam2
    return delta - math.log1p(delta)


def kl_gaussian(c1: ExchangeableCovariance, c2: ExchangeableCovariance) -> float:
    """Relative entropy H(N(0, S1) | N(0, S2)) in nats.

    Evaluated on the shared two-eigenvalue spectrum:
    0.5 * sum over eigenpairs of (r - 1 - ln r) with r the eigenvalue ratio.
    """
    k, lam1, lam2 = _paired_eigenvalues(c1, c2)
    return 0.5 * ((k - 1) * _kl_term(c1.v, c2.v) + _kl_term(lam1, lam2))


def scaled_coupling_limit(p: OUParams, t: float) -> float:
    """Large-n limit of n times the coupling coefficient of ou_covariance."""
    if not (t > 0):
        raise ValueError(f"t must be > 0, got {t}")
    a, b = p.a, p.b
    ratio = math.expm1(-2.0 * t * (a + b)) / math.expm1(-2.0 * a * t)
    return 1.0 - (a / (a + b)) * ratio


def w2_rate_limit(p: OUParams, t: float) -> float:
    """Limit of (n/k)^2 W2^2 between the k-marginal and the product law.

    Equals scaled_coupling_limit^2 * (1 - e^(-2at)) / (8a); strictly
    positive whenever b > 0, which pins the (k/n)^2 decay rate as optimal.
    """
    if not (t > 0):
        raise ValueError(f"t must be > 0, got {t}")
    nc = scaled_coupling_limit(p, t)
    return nc * nc * (-math.expm1(-2.0 * p.a * t)) / (8.0 * p.a)


def kl_rate_limit(p: OUParams, t: float) -> float:
    """Limit of (n/k)^2 KL between the k-marginal and the product law."""
    nc = scaled_coupling_limit(p, t)
    return nc * nc / 4.0
