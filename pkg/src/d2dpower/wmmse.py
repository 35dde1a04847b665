"""Iterative WMMSE solver for sum-rate power control.

Scalar interference-channel version: every transceiver pair holds one
transmit amplitude v[i] with power v[i]^2. The solver alternates closed-form
updates of a receive scalar u, an MSE weight w, and the amplitudes v, and
ascends the sum rate monotonically to a KKT point. The updates are written
as direct per-user transcriptions of the closed forms; this is the reference
implementation, not a batch-vectorized one.

A brute-force grid search over amplitudes is included as an independent
check for tiny instances.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channel import NetworkInstance
from .errors import NumericalDomainError

# v-update denominators below this use the degenerate rule: full power when
# the direct link exists, zero otherwise
DEGENERATE_DEN = 1e-12
# 1 - u*h*v at or below this means (u, v) were not produced consistently
_W_DOMAIN_TOL = 1e-15

GRID_ORACLE_MAX_N = 4


@dataclass(frozen=True)
class WmmseSettings:
    """Solver settings used by evaluation and benchmarking."""

    tol: float = 1e-6
    max_iter: int = 100

    def to_dict(self) -> dict:
        return {"tol": self.tol, "max_iter": self.max_iter}


@dataclass(frozen=True, eq=False)
class WmmseState:
    """One iteration's variable blocks."""

    u: np.ndarray
    w: np.ndarray
    v: np.ndarray


@dataclass(eq=False)
class WmmseTrace:
    """Per-iteration record of a solver run.

    states[k] and sum_rates[k] describe the variables after sweep k+1;
    initial_sum_rate is the rate of the starting point.
    """

    states: list
    sum_rates: list
    iterations_run: int
    converged: bool
    initial_sum_rate: float

    @property
    def final_v(self) -> np.ndarray:
        return self.states[-1].v

    @property
    def final_sum_rate(self) -> float:
        return self.sum_rates[-1]


def _as_amplitudes(instance: NetworkInstance, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (instance.n,):
        raise ValueError(f"amplitude vector must have shape ({instance.n},), got {v.shape}")
    return v


def check_feasible(instance: NetworkInstance, v, slack: float = 1e-9) -> np.ndarray:
    """Validate 0 <= v[i] <= sqrt(p_max) and return v as a float array."""
    v = _as_amplitudes(instance, v)
    vmax = math.sqrt(instance.p_max)
    if np.any(v < -slack) or np.any(v > vmax + slack):
        raise ValueError("amplitude vector violates the power budget")
    return v


def sum_rate(instance: NetworkInstance, v) -> float:
    """Sum of Shannon rates sum_i log2(1 + SINR_i) in bits/s/Hz."""
    v = _as_amplitudes(instance, v)
    h = instance.h
    p = v * v
    total = 0.0
    for i in range(instance.n):
        interference = instance.noise_power
        for j in range(instance.n):
            if j != i:
                interference += h[i, j] ** 2 * p[j]
        total += math.log2(1.0 + h[i, i] ** 2 * p[i] / interference)
    return total


def update_u(instance: NetworkInstance, v) -> np.ndarray:
    """Receive-scalar update: u[i] = h_ii v_i / (sigma^2 + sum_j h_ij^2 v_j^2)."""
    v = _as_amplitudes(instance, v)
    h = instance.h
    p = v * v
    u = np.zeros(instance.n)
    for i in range(instance.n):
        u[i] = h[i, i] * v[i] / (instance.noise_power + np.square(h[i, :]) @ p)
    return u


def update_w(instance: NetworkInstance, u, v) -> np.ndarray:
    """MSE-weight update: w[i] = 1 / (1 - u_i h_ii v_i); requires u from update_u."""
    u = np.asarray(u, dtype=np.float64)
    v = _as_amplitudes(instance, v)
    d = 1.0 - u * np.diag(instance.h) * v
    if np.any(d <= _W_DOMAIN_TOL):
        raise NumericalDomainError("1 - u*h*v is not positive; u and v are inconsistent")
    return 1.0 / d


def update_v(instance: NetworkInstance, u, w) -> np.ndarray:
    """Amplitude update, clamped to [0, sqrt(p_max)].

    v[i] = u_i w_i h_ii / sum_j h_ji^2 u_j^2 w_j. A degenerate denominator
    means nobody weighs interference caused by i, so i transmits at full
    power when its direct link exists.
    """
    u = np.asarray(u, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    h = instance.h
    vmax = math.sqrt(instance.p_max)
    uw2 = u * u * w
    v = np.zeros(instance.n)
    for i in range(instance.n):
        den = np.square(h[:, i]) @ uw2
        if den < DEGENERATE_DEN:
            v[i] = vmax if h[i, i] > 0 else 0.0
        else:
            v[i] = min(max(u[i] * w[i] * h[i, i] / den, 0.0), vmax)
    return v


def run_wmmse(
    instance: NetworkInstance,
    init=None,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> WmmseTrace:
    """Alternate u/w/v updates from ``init`` (default: half power).

    The default start is v[i] = sqrt(p_max / 2) for every link.  Starting
    from full power makes the all-on corner an immediate fixed point on
    small strongly coupled networks (the v update saturates the clamp), so
    the half-power start lands in the better basin far more often while
    converging to the same point everywhere else.

    Stops when the sum rate changes by less than ``tol`` between sweeps or
    after ``max_iter`` sweeps, whichever comes first.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if init is None:
        init = np.full(instance.n, math.sqrt(instance.p_max / 2.0))
    v = check_feasible(instance, init)

    states = []
    rates = []
    initial_rate = sum_rate(instance, v)
    prev_rate = initial_rate
    converged = False
    for _ in range(max_iter):
        u = update_u(instance, v)
        w = update_w(instance, u, v)
        v = update_v(instance, u, w)
        rate = sum_rate(instance, v)
        states.append(WmmseState(u=u, w=w, v=v))
        rates.append(rate)
        if abs(rate - prev_rate) < tol:
            converged = True
            break
        prev_rate = rate
    return WmmseTrace(
        states=states,
        sum_rates=rates,
        iterations_run=len(states),
        converged=converged,
        initial_sum_rate=initial_rate,
    )


def grid_oracle(instance: NetworkInstance, grid_points: int):
    """Exhaustive search over the amplitude grid {0, ..., sqrt(p_max)}^n.

    Returns (argmax v, best rate); ties go to the lexicographically smallest
    v. Cost is grid_points**n, so instances beyond n=4 are refused.
    """
    if instance.n > GRID_ORACLE_MAX_N:
        raise ValueError(f"grid_oracle is limited to n <= {GRID_ORACLE_MAX_N}, got n={instance.n}")
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    grid = np.linspace(0.0, math.sqrt(instance.p_max), grid_points)
    best_v = None
    best_rate = -1.0
    for cand in itertools.product(grid, repeat=instance.n):
        v = np.array(cand)
        rate = sum_rate(instance, v)
        if rate > best_rate:
            best_rate = rate
            best_v = v
    return best_v, best_rate


def trace_to_csv(trace: WmmseTrace, path) -> None:
    """Write the per-iteration sum rates as CSV rows ``iter,sum_rate``."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iter", "sum_rate"])
        for k, rate in enumerate(trace.sum_rates, start=1):
            writer.writerow([k, repr(rate)])
