"""Distances and inequality checkers.

Small-scale exact optimal transport (assignment on equal-size samples),
empirical exchangeable-covariance fitting, and slack evaluation for the
information-transport inequalities.  Everything here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .gaussian import ExchangeableCovariance
from .simulate import Ensemble

ASSIGNMENT_CAP = 2048


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely supported probability measure: points (m, d) and weights."""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        support = np.atleast_2d(np.asarray(self.support, dtype=float))
        weights = np.asarray(self.weights, dtype=float)
        if support.shape[0] != weights.shape[0]:
            raise ValueError("support and weights must have matching lengths")
        if (weights < 0).any():
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {weights.sum()!r}")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)


def w2_assignment(A: np.ndarray, B: np.ndarray) -> float:
    """Exact squared W2 between two equal-size empirical measures.

    Solves the assignment problem on squared Euclidean costs and returns
    cost/m.  Capped at m = 2048 samples to keep the cubic solve fast.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.ndim == 2 and A.shape[0] == 1 and A.shape[1] > 1:
        A, B = A.T, B.T
    if A.shape != B.shape:
        raise ValueError(f"sample shape mismatch: {A.shape} vs {B.shape}")
    m = A.shape[0]
    if m > ASSIGNMENT_CAP:
        raise ValueError(f"sample count {m} exceeds cap {ASSIGNMENT_CAP}")
    diff = A[:, None, :] - B[None, :, :]
    cost = (diff * diff).sum(axis=2)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / m)


def w1_sorted_1d(A: np.ndarray, B: np.ndarray) -> float:
    """W1 between equal-size one-dimensional samples: sorted mean gap."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 1 or B.ndim != 1:
        raise ValueError("w1_sorted_1d takes one-dimensional samples")
    if A.shape != B.shape:
        raise ValueError(f"sample shape mismatch: {A.shape} vs {B.shape}")
    return float(np.abs(np.sort(A) - np.sort(B)).mean())


@dataclass(frozen=True)
class CovFit:
    """Fitted exchangeable covariance with replica standard errors."""

    v: float
    c: float
    v_se: float | None
    c_se: float | None
    replicas: int

    def covariance(self, dim: int) -> ExchangeableCovariance:
        return ExchangeableCovariance(dim=dim, v=self.v, c=self.c)


def fit_exchangeable_cov(
    ensembles: Ensemble | Sequence[Ensemble], t_index: int, k: int
) -> CovFit:
    """Estimate (v, c) of a centered exchangeable covariance from runs.

    v is the average per-coordinate second moment, c the negated average
    off-diagonal product divided by v, both computed on the first k
    coordinates.  With several replicas the estimates are replica means
    and carry standard errors; a single replica has none.
    """
    if isinstance(ensembles, Ensemble):
        ensembles = [ensembles]
    if not ensembles:
        raise ValueError("need at least one ensemble")
    if k < 2:
        raise ValueError("fitting the coupling needs k >= 2")
    v_hat, c_hat = [], []
    for ens in ensembles:
        if k > ens.n:
            raise ValueError(f"k={k} exceeds ensemble size n={ens.n}")
        if ens.d != 1:
            raise ValueError("covariance fitting expects one-dimensional states")
        x = ens.state(t_index)[:k, 0]
        sq = float((x * x).mean())
        off = (x.sum() ** 2 - (x * x).sum()) / (k * (k - 1))
        v_hat.append(sq)
        c_hat.append(-off / sq)
    r = len(v_hat)
    v_arr, c_arr = np.array(v_hat), np.array(c_hat)
    if r == 1:
        return CovFit(v=float(v_arr[0]), c=float(c_arr[0]), v_se=None, c_se=None, replicas=1)
    return CovFit(
        v=float(v_arr.mean()),
        c=float(c_arr.mean()),
        v_se=float(v_arr.std(ddof=1) / math.sqrt(r)),
        c_se=float(c_arr.std(ddof=1) / math.sqrt(r)),
        replicas=r,
    )


# ---------------------------------------------------------------------------
# Information inequalities


def discrete_kl(nu: DiscreteMeasure, nu_prime: DiscreteMeasure) -> float:
    """KL divergence on a shared support; 0 ln 0 = 0, and mass of nu where
    nu_prime vanishes gives infinity."""
    if not np.array_equal(nu.support, nu_prime.support):
        raise ValueError("measures must share the same support points")
    p, q = nu.weights, nu_prime.weights
    if ((p > 0) & (q == 0)).any():
        return math.inf
    mask = p > 0
    return float((p[mask] * np.log(p[mask] / q[mask])).sum())


def _integral_gap_sq(nu: DiscreteMeasure, nu_prime: DiscreteMeasure, f: np.ndarray) -> float:
    gap = (nu.weights - nu_prime.weights) @ f
    return float(np.dot(gap, gap))


def _as_table(f, m: int) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    if f.shape[0] != m:
        raise ValueError("function table must cover the support")
    return f


def pinsker_gap(
    nu: DiscreteMeasure, nu_prime: DiscreteMeasure, f
) -> tuple[float, float, float]:
    """(lhs, rhs, slack) of |<nu - nu', f>|^2 <= 2 sup|f|^2 KL(nu|nu')."""
    f = _as_table(f, nu.support.shape[0])
    lhs = _integral_gap_sq(nu, nu_prime, f)
    H = discrete_kl(nu, nu_prime)
    sup_sq = float((f * f).sum(axis=1).max())
    rhs = 2.0 * sup_sq * H
    return lhs, rhs, rhs - lhs


def weighted_pinsker_gap(
    nu: DiscreteMeasure, nu_prime: DiscreteMeasure, f
) -> tuple[float, float, float]:
    """(lhs, rhs, slack) of the exponential-moment weighted variant:
    rhs = 2 (1 + ln integral of e^{|f|^2} d nu') KL(nu|nu')."""
    f = _as_table(f, nu.support.shape[0])
    lhs = _integral_gap_sq(nu, nu_prime, f)
    H = discrete_kl(nu, nu_prime)
    log_moment = math.log(float(nu_prime.weights @ np.exp((f * f).sum(axis=1))))
    rhs = 2.0 * (1.0 + log_moment) * H
    return lhs, rhs, rhs - lhs


def subadditivity_check(
    n: int, k: int, full_value: float, marginal_value: float, kind: str = "H"
) -> float:
    """Slack of the marginal-vs-full subadditivity: (2k/n) full - marginal.

    ``kind`` records whether the values are relative entropies ("H") or
    squared W2 distances ("W2sq"); the arithmetic is the same.
    """
    if kind not in ("H", "W2sq"):
        raise ValueError(f"kind must be 'H' or 'W2sq', got {kind!r}")
    if full_value < 0 or marginal_value < 0:
        raise ValueError("distance values must be nonnegative")
    return (2.0 * k / n) * full_value - marginal_value
