"""Seeded Euler simulation of the interacting particle systems.

Noise is drawn from counter-based Philox streams keyed by
(seed, stream id, replica, particle label), so every particle owns an
independent, scheduler-independent noise stream and a run is reproducible
bit-exactly from its configuration.  The synchronous coupling drives the
interacting ensemble and its mean-field reference with identical
increments.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from itertools import product as iter_product

import numpy as np

from . import backend
from .model import (
    ExperimentConfig,
    Pairwise,
    PowerSeries,
    SeriesCoefficients,
    require_valid,
    signed_series_terms,
)

STREAM_DRIVE = 0
STREAM_INIT = 1
STREAM_PROXY_DRIVE = 2
STREAM_PROXY_INIT = 3

MAGIC = b"MFPC"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIdQ")

TUPLE_BUDGET = 1_000_000


class SimulationError(RuntimeError):
    """State became non-finite; carries the first bad step index."""

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"simulation blew up at step {step}")


def _stream_key(seed: int, stream: int, replica: int, label: int) -> np.ndarray:
    if not (0 <= label < 2**32 and 0 <= replica < 2**24 and 0 <= stream < 2**8):
        raise ValueError("stream coordinates out of range")
    word = (stream << 56) | (replica << 32) | label
    return np.array([seed, word], dtype=np.uint64)


def _particle_rng(seed: int, stream: int, replica: int, label: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=_stream_key(seed, stream, replica, label)))


def noise_block(
    seed: int, labels: np.ndarray, steps: int, d: int, stream: int = STREAM_DRIVE,
    replica: int = 0,
) -> np.ndarray:
    """Standard normal increments, shape (steps, n, d), one stream per label."""
    n = len(labels)
    out = np.empty((steps, n, d))
    for i, label in enumerate(labels):
        rng = _particle_rng(seed, stream, replica, int(label))
        out[:, i, :] = rng.standard_normal((steps, d))
    return out


def _initial_states(
    cfg: ExperimentConfig, labels: np.ndarray, replica: int, stream: int
) -> np.ndarray:
    if cfg.init.kind == "dirac_zero":
        return np.zeros((len(labels), cfg.d))
    out = np.empty((len(labels), cfg.d))
    sd = np.sqrt(cfg.init.var)
    for i, label in enumerate(labels):
        rng = _particle_rng(cfg.seed, stream, replica, int(label))
        out[i] = cfg.init.mean + sd * rng.standard_normal(cfg.d)
    return out


@dataclass(frozen=True)
class Ensemble:
    """One realized trajectory block of an n-particle run.

    ``trajectory`` has shape (n, d, steps+1) and is bit-reproducible from
    (config, seed, replica) on a given build.
    """

    n: int
    d: int
    steps: int
    dt: float
    seed: int
    replica: int
    drift_tag: str
    trajectory: np.ndarray

    def state(self, t_index: int) -> np.ndarray:
        """Ensemble snapshot (n, d) at a time index; negative indexes allowed."""
        return self.trajectory[:, :, t_index]

    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt


@dataclass(frozen=True)
class CoupledPair:
    """Interacting ensemble and its mean-field reference, same noise."""

    ensemble: Ensemble
    reference: Ensemble

    def mean_square_gap(self, t_index: int = -1, k: int | None = None) -> float:
        """Average of |X_i - Y_i|^2 over the first k particles."""
        k = self.ensemble.n if k is None else k
        gap = self.ensemble.state(t_index)[:k] - self.reference.state(t_index)[:k]
        return float((gap * gap).sum(axis=1).mean())


def _run_kernel(cfg: ExperimentConfig, traj: np.ndarray, noise: np.ndarray) -> None:
    kern = backend.kernels
    spec = cfg.drift
    conf = spec.confinement.rate if spec.confinement.kind == "linear" else 0.0
    inter = spec.interaction
    if inter is None:
        zero_mean = np.zeros((noise.shape[0], cfg.d))
        bad = kern.run_reference_mean(traj, noise, cfg.dt, conf, 0.0, zero_mean)
    elif isinstance(inter, Pairwise):
        bad = kern.run_pairwise(traj, noise, cfg.dt, inter.kind, conf, inter.rate)
    else:
        coefs = np.ascontiguousarray(signed_series_terms(inter))
        bad = kern.run_power_series(traj, noise, cfg.dt, inter.base, conf, coefs)
    if bad >= 0:
        raise SimulationError(bad)


def _simulate_raw(
    cfg: ExperimentConfig, replica: int, labels: np.ndarray, streams: tuple[int, int]
) -> np.ndarray:
    """Stepping-layout trajectory (steps+1, n, d) for one replica."""
    steps = cfg.steps
    traj = np.empty((steps + 1, len(labels), cfg.d))
    traj[0] = _initial_states(cfg, labels, replica, streams[1])
    noise = noise_block(cfg.seed, labels, steps, cfg.d, streams[0], replica)
    _run_kernel(cfg, traj, noise)
    return traj


def simulate_particles(
    cfg: ExperimentConfig, replica: int = 0, noise_labels: np.ndarray | None = None
) -> Ensemble:
    """Euler run of the interacting system described by ``cfg``.

    ``noise_labels`` reassigns the per-particle stream labels (default
    0..n-1); permuting them together with the initial particles permutes
    the resulting trajectories.
    """
    cfg = require_valid(cfg)
    labels = np.arange(cfg.n) if noise_labels is None else np.asarray(noise_labels)
    if len(labels) != cfg.n:
        raise ValueError("noise_labels must have length n")
    traj = _simulate_raw(cfg, replica, labels, (STREAM_DRIVE, STREAM_INIT))
    return Ensemble(
        n=cfg.n, d=cfg.d, steps=cfg.steps, dt=cfg.dt, seed=cfg.seed, replica=replica,
        drift_tag=cfg.drift.tag(), trajectory=np.ascontiguousarray(np.moveaxis(traj, 0, 2)),
    )


def _ou_mean_path(cfg: ExperimentConfig, rate_sum: float, steps: int) -> np.ndarray:
    m0 = cfg.init.mean if cfg.init.kind == "iid_gaussian" else 0.0
    t = np.arange(steps) * cfg.dt
    return np.repeat((m0 * np.exp(-rate_sum * t))[:, None], cfg.d, axis=1)


def simulate_coupled(
    cfg: ExperimentConfig, replica: int = 0, proxy_factor: int = 4
) -> CoupledPair:
    """Ensemble plus a mean-field reference driven by the same noise.

    For the linear kernel the reference uses the exact law of the limit
    (its mean path); for every other interaction an independent proxy
    ensemble ``proxy_factor`` times larger supplies an empirical law, an
    uncertified approximation that is documented as such.
    """
    cfg = require_valid(cfg)
    kern = backend.kernels
    ensemble = simulate_particles(cfg, replica)
    steps = cfg.steps
    labels = np.arange(cfg.n)
    conf = cfg.drift.confinement.rate if cfg.drift.confinement.kind == "linear" else 0.0
    inter = cfg.drift.interaction

    traj = np.empty((steps + 1, cfg.n, cfg.d))
    traj[0] = _initial_states(cfg, labels, replica, STREAM_INIT)
    noise = noise_block(cfg.seed, labels, steps, cfg.d, STREAM_DRIVE, replica)

    if inter is None:
        zero_mean = np.zeros((steps, cfg.d))
        bad = kern.run_reference_mean(traj, noise, cfg.dt, conf, 0.0, zero_mean)
    elif isinstance(inter, Pairwise) and inter.kind == "ou_linear":
        mean_path = _ou_mean_path(cfg, conf + inter.rate, steps)
        bad = kern.run_reference_mean(traj, noise, cfg.dt, conf, inter.rate, mean_path)
    else:
        from dataclasses import replace

        proxy_cfg = replace(cfg, n=proxy_factor * cfg.n, k=1)
        cloud = _simulate_raw(
            proxy_cfg, replica, np.arange(proxy_cfg.n),
            (STREAM_PROXY_DRIVE, STREAM_PROXY_INIT),
        )
        if isinstance(inter, Pairwise):
            bad = kern.run_reference_cloud(
                traj, noise, cfg.dt, inter.kind, conf, inter.rate, cloud
            )
        else:
            coefs = np.ascontiguousarray(signed_series_terms(inter))
            bad = kern.run_reference_cloud_series(
                traj, noise, cfg.dt, inter.base, conf, coefs, cloud
            )
    if bad >= 0:
        raise SimulationError(bad)
    reference = Ensemble(
        n=cfg.n, d=cfg.d, steps=steps, dt=cfg.dt, seed=cfg.seed, replica=replica,
        drift_tag=cfg.drift.tag() + ":reference",
        trajectory=np.ascontiguousarray(np.moveaxis(traj, 0, 2)),
    )
    return CoupledPair(ensemble=ensemble, reference=reference)


# ---------------------------------------------------------------------------
# Per-particle drift operations


def pairwise_drift(i: int, states: np.ndarray, kind: str, rate: float = 1.0) -> np.ndarray:
    """Self-excluded (n-1)-average pairwise drift on particle i."""
    from . import _stepper_py as sp

    return sp.pairwise_interaction(np.asarray(states, dtype=float), kind, rate)[i]


def power_series_drift(
    i: int,
    states: np.ndarray,
    coefficients: SeriesCoefficients,
    base: str,
    signs: str | tuple[int, ...] = "positive",
) -> float:
    """Series drift on particle i: the empirical kernel mean u (including
    the particle itself) pushed through the signed power series."""
    from . import _stepper_py as sp

    coefs = signed_series_terms(PowerSeries(base=base, coefficients=coefficients, signs=signs))
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    return float(sp.power_series_interaction(states, base, coefs)[i, 0])


def _base_kernel_value(base: str, x: float, y: float) -> float:
    if base == "bounded_tanh":
        return float(np.tanh(y - x))
    if base == "rank_indicator":
        return 1.0 if y <= x else 0.0
    raise ValueError(f"unknown series base kernel {base!r}")


def tuple_average_drift(
    i: int,
    states: np.ndarray,
    coefficients: SeriesCoefficients,
    base: str,
    ell_max: int,
    signs: str | tuple[int, ...] = "positive",
) -> float:
    """Literal enumeration of the order-by-order tuple averages.

    For each order ell <= ell_max, averages the product kernel over all
    n^ell index tuples (duplicates included, the particle itself included)
    and weights by the signed series coefficient.  Budgeted at 10^6 tuples.
    """
    states = np.asarray(states, dtype=float).reshape(-1)
    n = len(states)
    if n**ell_max > TUPLE_BUDGET:
        raise ValueError(f"n^ell_max = {n**ell_max} exceeds budget {TUPLE_BUDGET}")
    coefs = signed_series_terms(
        PowerSeries(base=base, coefficients=coefficients, signs=signs)
    )
    x = states[i]
    table = np.array([_base_kernel_value(base, x, y) for y in states])
    total = 0.0
    for ell in range(1, min(ell_max, len(coefs)) + 1):
        acc = 0.0
        for tup in iter_product(range(n), repeat=ell):
            prod = 1.0
            for j in tup:
                prod *= table[j]
            acc += prod
        total += coefs[ell - 1] * acc / n**ell
    return total


# ---------------------------------------------------------------------------
# Trajectory export


def write_trajectory(ens: Ensemble, path) -> None:
    """Binary dump: fixed header then the row-major float64 block."""
    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, ens.n, ens.d, ens.steps, ens.dt, ens.seed
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(ens.trajectory).tobytes(order="C"))


def read_trajectory(path) -> tuple[dict, np.ndarray]:
    """Read a trajectory dump; returns (header dict, (n, d, steps+1) array)."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        magic, version, n, d, steps, dt, seed = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported version {version}")
        block = np.frombuffer(fh.read(), dtype=np.float64).reshape(n, d, steps + 1)
    header = {"version": version, "n": n, "d": d, "steps": steps, "dt": dt, "seed": seed}
    return header, block.copy()


def write_summary_csv(ens: Ensemble, path) -> None:
    """Per-step ensemble mean and variance, comma separated."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("step,time,mean,variance\n")
        for m in range(ens.steps + 1):
            snap = ens.state(m)
            fh.write(
                f"{m},{m * ens.dt:.17g},{snap.mean():.17g},{snap.var():.17g}\n"
            )
