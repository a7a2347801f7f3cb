"""Pure numpy implementation of the simulation kernels.

This module is the fallback backend when the compiled extension is not
available, and the reference semantics for it.  All functions operate on
float64 arrays; states are (n, d), trajectories (steps+1, n, d), noise
blocks (steps, n, d) of standard normals.
"""

from __future__ import annotations

import functools
import math

import numpy as np

BACKEND_NAME = "python"


def _quiet_overflow(fn):
    """Blow-ups are detected and reported explicitly; keep numpy quiet."""

    @functools.wraps(fn)
    def wrapped(*args, **kwargs):
        with np.errstate(over="ignore", invalid="ignore"):
            return fn(*args, **kwargs)

    return wrapped


def sign_plus(z: np.ndarray) -> np.ndarray:
    """Sign function with the tie rule sign(0) = +1."""
    return np.where(z >= 0.0, 1.0, -1.0)


def _rank_counts(x: np.ndarray) -> np.ndarray:
    """#{j : x_j <= x_i} for each i, ties counted, self included."""
    order = np.sort(x)
    return np.searchsorted(order, x, side="right").astype(float)


def pairwise_interaction(x: np.ndarray, kind: str, rate: float) -> np.ndarray:
    """Self-excluded (n-1)-average of the pairwise kernel, shape (n, d)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 2:
        raise ValueError("pairwise interactions need n >= 2")
    if kind == "ou_linear":
        total = x.sum(axis=0)
        return -rate * (total[None, :] - x) / (n - 1)
    if kind == "bounded_tanh":
        diff = x[None, :, :] - x[:, None, :]  # diff[i, j] = x_j - x_i
        return np.tanh(diff).sum(axis=1) / (n - 1)
    if kind == "lingrowth_sign":
        diff = x[None, :, :] - x[:, None, :]
        weight = 1.0 + np.linalg.norm(x, axis=1)  # 1 + |x_j|
        full = (sign_plus(diff) * weight[None, :, None]).sum(axis=1)
        self_term = (1.0 + np.linalg.norm(x, axis=1))[:, None]  # sign(0) = +1
        return rate * (full - self_term) / (n - 1)
    if kind == "rank_indicator":
        if x.shape[1] != 1:
            raise ValueError("rank_indicator requires d = 1")
        counts = _rank_counts(x[:, 0]) - 1.0  # drop the self count
        return counts[:, None] / (n - 1)
    raise ValueError(f"unknown pairwise kernel {kind!r}")


def power_series_mean(x: np.ndarray, base: str) -> np.ndarray:
    """u_i = <empirical law, base(x_i, .)>, self included, d = 1 only."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ValueError("power series interactions require d = 1")
        x = x[:, 0]
    n = x.shape[0]
    if base == "bounded_tanh":
        return np.tanh(x[None, :] - x[:, None]).sum(axis=1) / n
    if base == "rank_indicator":
        return _rank_counts(x) / n
    raise ValueError(f"unknown series base kernel {base!r}")


def horner_series(u: np.ndarray, coefs: np.ndarray) -> np.ndarray:
    """Evaluate sum_{l>=1} coefs[l-1] * u**l by Horner's scheme."""
    acc = np.zeros_like(u)
    for c in coefs[::-1]:
        acc = u * (c + acc)
    return acc


def power_series_interaction(x: np.ndarray, base: str, coefs: np.ndarray) -> np.ndarray:
    u = power_series_mean(x, base)
    return horner_series(u, np.asarray(coefs, dtype=float))[:, None]


def _finite_or_step(x: np.ndarray, step: int) -> int:
    return -1 if np.isfinite(x).all() else step


@_quiet_overflow
def run_pairwise(
    traj: np.ndarray,
    noise: np.ndarray,
    dt: float,
    kind: str,
    conf_rate: float,
    rate: float,
) -> int:
    """Euler time loop for confinement plus a pairwise kernel.

    traj[0] must hold the initial states; fills traj[1:].  Returns -1, or the
    first step index at which the state stopped being finite.
    """
    steps = noise.shape[0]
    sdt = math.sqrt(dt)
    x = traj[0]
    for m in range(steps):
        drift = -conf_rate * x + pairwise_interaction(x, kind, rate)
        x = x + dt * drift + sdt * noise[m]
        bad = _finite_or_step(x, m + 1)
        if bad >= 0:
            return bad
        traj[m + 1] = x
    return -1


@_quiet_overflow
def run_power_series(
    traj: np.ndarray,
    noise: np.ndarray,
    dt: float,
    base: str,
    conf_rate: float,
    coefs: np.ndarray,
) -> int:
    steps = noise.shape[0]
    sdt = math.sqrt(dt)
    coefs = np.asarray(coefs, dtype=float)
    x = traj[0]
    for m in range(steps):
        drift = -conf_rate * x + power_series_interaction(x, base, coefs)
        x = x + dt * drift + sdt * noise[m]
        bad = _finite_or_step(x, m + 1)
        if bad >= 0:
            return bad
        traj[m + 1] = x
    return -1


@_quiet_overflow
def run_reference_mean(
    traj: np.ndarray,
    noise: np.ndarray,
    dt: float,
    conf_rate: float,
    rate: float,
    mean_path: np.ndarray,
) -> int:
    """Independent particles driven toward a prescribed mean path.

    drift_i = -conf_rate * x_i - rate * mean_path[step], the mean-field
    dynamics of the linear kernel when the law's mean is known exactly.
    """
    steps = noise.shape[0]
    sdt = math.sqrt(dt)
    x = traj[0]
    for m in range(steps):
        drift = -conf_rate * x - rate * mean_path[m][None, :]
        x = x + dt * drift + sdt * noise[m]
        bad = _finite_or_step(x, m + 1)
        if bad >= 0:
            return bad
        traj[m + 1] = x
    return -1


def _cloud_average(x: np.ndarray, cloud: np.ndarray, kind: str, rate: float) -> np.ndarray:
    """Average of the pairwise kernel against an external particle cloud."""
    if kind == "ou_linear":
        return np.broadcast_to(-rate * cloud.mean(axis=0)[None, :], x.shape).copy()
    if kind == "bounded_tanh":
        diff = cloud[None, :, :] - x[:, None, :]
        return np.tanh(diff).mean(axis=1)
    if kind == "lingrowth_sign":
        diff = cloud[None, :, :] - x[:, None, :]
        weight = 1.0 + np.linalg.norm(cloud, axis=1)
        return rate * (sign_plus(diff) * weight[None, :, None]).mean(axis=1)
    if kind == "rank_indicator":
        order = np.sort(cloud[:, 0])
        counts = np.searchsorted(order, x[:, 0], side="right").astype(float)
        return (counts / cloud.shape[0])[:, None]
    raise ValueError(f"unknown pairwise kernel {kind!r}")


@_quiet_overflow
def run_reference_cloud(
    traj: np.ndarray,
    noise: np.ndarray,
    dt: float,
    kind: str,
    conf_rate: float,
    rate: float,
    cloud: np.ndarray,
) -> int:
    """Independent particles whose interaction sees a proxy cloud trajectory."""
    steps = noise.shape[0]
    sdt = math.sqrt(dt)
    x = traj[0]
    for m in range(steps):
        drift = -conf_rate * x + _cloud_average(x, cloud[m], kind, rate)
        x = x + dt * drift + sdt * noise[m]
        bad = _finite_or_step(x, m + 1)
        if bad >= 0:
            return bad
        traj[m + 1] = x
    return -1


@_quiet_overflow
def run_reference_cloud_series(
    traj: np.ndarray,
    noise: np.ndarray,
    dt: float,
    base: str,
    conf_rate: float,
    coefs: np.ndarray,
    cloud: np.ndarray,
) -> int:
    steps = noise.shape[0]
    sdt = math.sqrt(dt)
    coefs = np.asarray(coefs, dtype=float)
    x = traj[0]
    for m in range(steps):
        if base == "bounded_tanh":
            u = np.tanh(cloud[m][None, :, 0] - x[:, None, 0]).mean(axis=1)
        else:
            order = np.sort(cloud[m][:, 0])
            u = np.searchsorted(order, x[:, 0], side="right") / cloud.shape[1]
        drift = -conf_rate * x + horner_series(u, coefs)[:, None]
        x = x + dt * drift + sdt * noise[m]
        bad = _finite_or_step(x, m + 1)
        if bad >= 0:
            return bad
        traj[m + 1] = x
    return -1
