# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernels; semantics mirror ``_stepper_py`` exactly.

The pairwise tanh kernel is evaluated through the identity
tanh(u - v) = (e^{2u} - e^{2v}) / (e^{2u} + e^{2v}), which needs one
exponential per particle per step instead of one tanh per pair; the
scalar-tanh path remains as a fallback for extreme states where the
exponentials would overflow.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport copysign, exp, fabs, isfinite, sqrt, tanh
from libc.stdlib cimport qsort
from libc.string cimport memcpy

BACKEND_NAME = "cython"

cdef int K_OU = 0
cdef int K_TANH = 1
cdef int K_SIGN = 2
cdef int K_RANK = 3

# states beyond this magnitude would overflow e^{2x}; fall back to tanh
cdef double EXP_SAFE = 300.0

_KIND_CODES = {
    "ou_linear": 0,
    "bounded_tanh": 1,
    "lingrowth_sign": 2,
    "rank_indicator": 3,
}


cdef int _cmp_double(const void* pa, const void* pb) noexcept nogil:
    cdef double a = (<const double*> pa)[0]
    cdef double b = (<const double*> pb)[0]
    if a < b:
        return -1
    return 1 if a > b else 0


cdef inline Py_ssize_t _count_leq(double* sorted_vals, Py_ssize_t n, double x) nogil:
    """Number of sorted values <= x (upper bound binary search)."""
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if sorted_vals[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline int _exp2_column(double[:, ::1] x, Py_ssize_t r, double* e) nogil:
    """e[k] = exp(2 x[k, r]); returns 0 when safe, 1 when out of range."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t k
    for k in range(n):
        if fabs(x[k, r]) > EXP_SAFE:
            return 1
    for k in range(n):
        e[k] = exp(2.0 * x[k, r])
    return 0


cdef int _pairwise_drift(double[:, ::1] x, int kind, double conf_rate, double rate,
                         double[:, ::1] drift, double* work) nogil:
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t i, j, r
    cdef double acc, s, ei
    if kind == K_OU:
        for r in range(d):
            s = 0.0
            for i in range(n):
                s += x[i, r]
            for i in range(n):
                drift[i, r] = -conf_rate * x[i, r] - rate * (s - x[i, r]) / (n - 1)
        return 0
    if kind == K_TANH:
        for r in range(d):
            if _exp2_column(x, r, work) == 0:
                for i in range(n):
                    ei = work[i]
                    acc = 0.0
                    for j in range(n):
                        acc += (work[j] - ei) / (work[j] + ei)
                    drift[i, r] = -conf_rate * x[i, r] + acc / (n - 1)
            else:
                for i in range(n):
                    acc = 0.0
                    for j in range(n):
                        if j != i:
                            acc += tanh(x[j, r] - x[i, r])
                    drift[i, r] = -conf_rate * x[i, r] + acc / (n - 1)
        return 0
    if kind == K_SIGN:
        # work[j] caches 1 + |x_j|
        for j in range(n):
            s = 0.0
            for r in range(d):
                s += x[j, r] * x[j, r]
            work[j] = 1.0 + sqrt(s)
        for i in range(n):
            for r in range(d):
                acc = 0.0
                for j in range(n):
                    acc += copysign(work[j], x[j, r] - x[i, r])
                acc -= work[i]  # remove the self term, sign(0) = +1
                drift[i, r] = -conf_rate * x[i, r] + rate * acc / (n - 1)
        return 0
    if kind == K_RANK:
        for i in range(n):
            work[i] = x[i, 0]
        qsort(work, n, sizeof(double), _cmp_double)
        for i in range(n):
            acc = <double> _count_leq(work, n, x[i, 0]) - 1.0
            drift[i, 0] = -conf_rate * x[i, 0] + acc / (n - 1)
        return 0
    return -1


cdef inline double _horner(double u, double[::1] coefs) nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t m
    for m in range(coefs.shape[0] - 1, -1, -1):
        acc = u * (coefs[m] + acc)
    return acc


cdef inline int _advance(double[:, ::1] x, double[:, ::1] drift,
                         double[:, :, ::1] noise, double[:, :, ::1] traj,
                         Py_ssize_t m, double dt, double sdt) nogil:
    """x += dt*drift + sdt*z; store into traj[m+1]; 0 if finite."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t i, r
    cdef double v
    cdef int ok = 0
    for i in range(n):
        for r in range(d):
            v = x[i, r] + dt * drift[i, r] + sdt * noise[m, i, r]
            x[i, r] = v
            traj[m + 1, i, r] = v
            if not isfinite(v):
                ok = 1
    return ok


def run_pairwise(double[:, :, ::1] traj, double[:, :, ::1] noise, double dt,
                 kind, double conf_rate, double rate):
    cdef int code = _KIND_CODES.get(kind, -1)
    if code < 0:
        raise ValueError(f"unknown pairwise kernel {kind!r}")
    cdef Py_ssize_t steps = noise.shape[0]
    cdef Py_ssize_t n = traj.shape[1]
    cdef Py_ssize_t d = traj.shape[2]
    if n < 2:
        raise ValueError("pairwise interactions need n >= 2")
    if code == K_RANK and d != 1:
        raise ValueError("rank_indicator requires d = 1")
    x_arr = np.array(traj[0], dtype=np.float64)
    drift_arr = np.empty((n, d), dtype=np.float64)
    work_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] x = x_arr
    cdef double[:, ::1] drift = drift_arr
    cdef double[::1] work = work_arr
    cdef double sdt = sqrt(dt)
    cdef Py_ssize_t m
    cdef Py_ssize_t blow = -1
    with nogil:
        for m in range(steps):
            _pairwise_drift(x, code, conf_rate, rate, drift, &work[0])
            if _advance(x, drift, noise, traj, m, dt, sdt):
                blow = m + 1
                break
    return blow


def run_power_series(double[:, :, ::1] traj, double[:, :, ::1] noise, double dt,
                     base, double conf_rate, double[::1] coefs):
    cdef int code = _KIND_CODES.get(base, -1)
    if code != K_TANH and code != K_RANK:
        raise ValueError(f"unknown series base kernel {base!r}")
    cdef Py_ssize_t steps = noise.shape[0]
    cdef Py_ssize_t n = traj.shape[1]
    if traj.shape[2] != 1:
        raise ValueError("power series interactions require d = 1")
    x_arr = np.array(traj[0], dtype=np.float64)
    drift_arr = np.empty((n, 1), dtype=np.float64)
    work_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] x = x_arr
    cdef double[:, ::1] drift = drift_arr
    cdef double[::1] work = work_arr
    cdef double sdt = sqrt(dt)
    cdef Py_ssize_t m, i, j
    cdef double acc, u, ei
    cdef int fast
    cdef Py_ssize_t blow = -1
    with nogil:
        for m in range(steps):
            if code == K_TANH:
                fast = _exp2_column(x, 0, &work[0]) == 0
                for i in range(n):
                    acc = 0.0
                    if fast:
                        ei = work[i]
                        for j in range(n):
                            acc += (work[j] - ei) / (work[j] + ei)
                    else:
                        for j in range(n):
                            acc += tanh(x[j, 0] - x[i, 0])
                    u = acc / n
                    drift[i, 0] = -conf_rate * x[i, 0] + _horner(u, coefs)
            else:
                for i in range(n):
                    work[i] = x[i, 0]
                qsort(&work[0], n, sizeof(double), _cmp_double)
                for i in range(n):
                    u = (<double> _count_leq(&work[0], n, x[i, 0])) / n
                    drift[i, 0] = -conf_rate * x[i, 0] + _horner(u, coefs)
            if _advance(x, drift, noise, traj, m, dt, sdt):
                blow = m + 1
                break
    return blow


def run_reference_mean(double[:, :, ::1] traj, double[:, :, ::1] noise, double dt,
                       double conf_rate, double rate, double[:, ::1] mean_path):
    cdef Py_ssize_t steps = noise.shape[0]
    cdef Py_ssize_t n = traj.shape[1]
    cdef Py_ssize_t d = traj.shape[2]
    x_arr = np.array(traj[0], dtype=np.float64)
    drift_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] x = x_arr
    cdef double[:, ::1] drift = drift_arr
    cdef double sdt = sqrt(dt)
    cdef Py_ssize_t m, i, r
    cdef Py_ssize_t blow = -1
    with nogil:
        for m in range(steps):
            for i in range(n):
                for r in range(d):
                    drift[i, r] = -conf_rate * x[i, r] - rate * mean_path[m, r]
            if _advance(x, drift, noise, traj, m, dt, sdt):
                blow = m + 1
                break
    return blow


def run_reference_cloud(double[:, :, ::1] traj, double[:, :, ::1] noise, double dt,
                        kind, double conf_rate, double rate, double[:, :, ::1] cloud):
    cdef int code = _KIND_CODES.get(kind, -1)
    if code < 0:
        raise ValueError(f"unknown pairwise kernel {kind!r}")
    cdef Py_ssize_t steps = noise.shape[0]
    cdef Py_ssize_t n = traj.shape[1]
    cdef Py_ssize_t d = traj.shape[2]
    cdef Py_ssize_t nc = cloud.shape[1]
    x_arr = np.array(traj[0], dtype=np.float64)
    drift_arr = np.empty((n, d), dtype=np.float64)
    work_arr = np.empty(nc, dtype=np.float64)
    cdef double[:, ::1] x = x_arr
    cdef double[:, ::1] drift = drift_arr
    cdef double[::1] work = work_arr
    cdef double sdt = sqrt(dt)
    cdef Py_ssize_t m, i, j, r
    cdef double acc, s, ei
    cdef int fast
    cdef Py_ssize_t blow = -1
    with nogil:
        for m in range(steps):
            if code == K_OU:
                for r in range(d):
                    s = 0.0
                    for j in range(nc):
                        s += cloud[m, j, r]
                    s /= nc
                    for i in range(n):
                        drift[i, r] = -conf_rate * x[i, r] - rate * s
            elif code == K_TANH:
                for r in range(d):
                    fast = 1
                    for j in range(nc):
                        if fabs(cloud[m, j, r]) > EXP_SAFE:
                            fast = 0
                            break
                    if fast:
                        for i in range(n):
                            if fabs(x[i, r]) > EXP_SAFE:
                                fast = 0
                                break
                    if fast:
                        for j in range(nc):
                            work[j] = exp(2.0 * cloud[m, j, r])
                        for i in range(n):
                            ei = exp(2.0 * x[i, r])
                            acc = 0.0
                            for j in range(nc):
                                acc += (work[j] - ei) / (work[j] + ei)
                            drift[i, r] = -conf_rate * x[i, r] + acc / nc
                    else:
                        for i in range(n):
                            acc = 0.0
                            for j in range(nc):
                                acc += tanh(cloud[m, j, r] - x[i, r])
                            drift[i, r] = -conf_rate * x[i, r] + acc / nc
            elif code == K_SIGN:
                for j in range(nc):
                    s = 0.0
                    for r in range(d):
                        s += cloud[m, j, r] * cloud[m, j, r]
                    work[j] = 1.0 + sqrt(s)
                for i in range(n):
                    for r in range(d):
                        acc = 0.0
                        for j in range(nc):
                            acc += copysign(work[j], cloud[m, j, r] - x[i, r])
                        drift[i, r] = -conf_rate * x[i, r] + rate * acc / nc
            else:
                for j in range(nc):
                    work[j] = cloud[m, j, 0]
                qsort(&work[0], nc, sizeof(double), _cmp_double)
                for i in range(n):
                    acc = <double> _count_leq(&work[0], nc, x[i, 0])
                    drift[i, 0] = -conf_rate * x[i, 0] + acc / nc
            if _advance(x, drift, noise, traj, m, dt, sdt):
                blow = m + 1
                break
    return blow


def run_reference_cloud_series(double[:, :, ::1] traj, double[:, :, ::1] noise,
                               double dt, base, double conf_rate,
                               double[::1] coefs, double[:, :, ::1] cloud):
    cdef int code = _KIND_CODES.get(base, -1)
    if code != K_TANH and code != K_RANK:
        raise ValueError(f"unknown series base kernel {base!r}")
    cdef Py_ssize_t steps = noise.shape[0]
    cdef Py_ssize_t n = traj.shape[1]
    cdef Py_ssize_t nc = cloud.shape[1]
    if traj.shape[2] != 1:
        raise ValueError("power series interactions require d = 1")
    x_arr = np.array(traj[0], dtype=np.float64)
    drift_arr = np.empty((n, 1), dtype=np.float64)
    work_arr = np.empty(nc, dtype=np.float64)
    cdef double[:, ::1] x = x_arr
    cdef double[:, ::1] drift = drift_arr
    cdef double[::1] work = work_arr
    cdef double sdt = sqrt(dt)
    cdef Py_ssize_t m, i, j
    cdef double acc, u
    cdef Py_ssize_t blow = -1
    with nogil:
        for m in range(steps):
            if code == K_TANH:
                for i in range(n):
                    acc = 0.0
                    for j in range(nc):
                        acc += tanh(cloud[m, j, 0] - x[i, 0])
                    u = acc / nc
                    drift[i, 0] = -conf_rate * x[i, 0] + _horner(u, coefs)
            else:
                for j in range(nc):
                    work[j] = cloud[m, j, 0]
                qsort(&work[0], nc, sizeof(double), _cmp_double)
                for i in range(n):
                    u = (<double> _count_leq(&work[0], nc, x[i, 0])) / nc
                    drift[i, 0] = -conf_rate * x[i, 0] + _horner(u, coefs)
            if _advance(x, drift, noise, traj, m, dt, sdt):
                blow = m + 1
                break
    return blow
