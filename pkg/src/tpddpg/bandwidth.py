"""Min-max bandwidth split for the clients of one edge server.

Client ``n`` finishes at ``a_n + c_n / b_n`` where ``a_n`` is its fixed delay
(computation plus edge overhead) and ``c_n`` its upload time at full band.
At the optimum every client finishes together, so the common finish time T
is the root of ``sum_n c_n / (T - a_n) = 1`` on ``(max a, inf)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np


class EmptyInstance(ValueError):
    pass


class NonFiniteCoefficient(ValueError):
    pass


class TooManyClients(ValueError):
    pass


@dataclass(frozen=True)
class BwInstance:
    fixed_delay: tuple[float, ...]   # a_n, seconds
    load: tuple[float, ...]          # c_n, seconds at full bandwidth

    def __post_init__(self):
        if not self.fixed_delay:
            raise EmptyInstance("no clients")
        if len(self.fixed_delay) != len(self.load):
            raise ValueError("fixed_delay and load differ in length")
        for a, c in zip(self.fixed_delay, self.load):
            if not (math.isfinite(a) and math.isfinite(c)) or c <= 0 or a < 0:
                raise NonFiniteCoefficient(f"bad coefficient pair a={a}, c={c}")

    def completion_times(self, b) -> list[float]:
        return [a + (c / bn if bn > 0 else math.inf)
                for a, c, bn in zip(self.fixed_delay, self.load, b)]


def excess(T: float, inst: BwInstance) -> float:
    """g(T) = sum c_n / (T - a_n) - 1; strictly decreasing above max a."""
    return sum(c / (T - a) for a, c in zip(inst.fixed_delay, inst.load)) - 1.0


def bracket(inst: BwInstance) -> tuple[float, float]:
    a_max = max(inst.fixed_delay)
    lo = a_max + 1e-12 * max(1.0, a_max)
    hi = a_max + sum(inst.load)
    return lo, hi


def solve_bandwidth(inst: BwInstance, tol: float = 1e-9) -> tuple[list[float], float]:
    if tol <= 0:
        raise ValueError("tol must be positive")
    a, c = inst.fixed_delay, inst.load
    if len(a) == 1:
        return [1.0], a[0] + c[0]
    lo, hi = bracket(inst)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if excess(mid, inst) > 0:
            lo = mid
        else:
            hi = mid
    # hi is on the feasible side: shares sum to <= 1, renormalising only speeds clients up
    b = [cn / (hi - an) for an, cn in zip(a, c)]
    total = sum(b)
    b = [bn / total for bn in b[:-1]]
    b.append(1.0 - sum(b))
    return b, max(inst.completion_times(b))


def oracle_bandwidth(inst: BwInstance, grid_step: float) -> tuple[list[float], float]:
    """Best point of the simplex grid with spacing ``grid_step`` (exact).

    The minimal grid share giving client n a finish time <= T is
    ceil(c_n / (T - a_n) / h) * h, so the grid optimum is the smallest
    threshold T = a_n + c_n / (j h) at which those minimal shares fit in the
    band. Leftover grid units are handed to the first client.
    """
    n = len(inst.fixed_delay)
    if n > 4:
        raise TooManyClients("grid oracle supports at most 4 clients")
    units = int(round(1.0 / grid_step))
    if abs(units * grid_step - 1.0) > 1e-9:
        raise ValueError("grid_step must divide 1")
    a = np.asarray(inst.fixed_delay)
    c = np.asarray(inst.load)
    j = np.arange(1, units + 1)
    cand = np.unique((a[:, None] + c[:, None] / (j[None, :] * grid_step)).ravel())
    need = np.zeros_like(cand)
    for m in range(n):
        gap = cand - a[m]
        with np.errstate(divide="ignore"):
            share = np.where(gap > 0, c[m] / np.where(gap > 0, gap, 1.0), np.inf)
        # tiny slack keeps exact thresholds from rounding up a unit
        need += np.ceil(share / grid_step * (1 - 1e-12))
    ok = np.flatnonzero(need <= units)
    T = cand[ok[0]]
    counts = [max(1, int(math.ceil(c[m] / (T - a[m]) / grid_step * (1 - 1e-12)))) for m in range(n)]
    counts[0] += units - sum(counts)
    b = [k * grid_step for k in counts]
    return b, max(inst.completion_times(b))


def enumerate_grid(inst: BwInstance, grid_step: float) -> tuple[list[float], float]:
    """Literal exhaustive search over the simplex grid; only for coarse steps."""
    n = len(inst.fixed_delay)
    units = int(round(1.0 / grid_step))
    best_b, best_T = None, math.inf
    for head in itertools.product(range(1, units), repeat=n - 1):
        last = units - sum(head)
        if last < 1:
            continue
        b = [k / units for k in (*head, last)]
        T = max(inst.completion_times(b))
        if T < best_T:
            best_b, best_T = b, T
    if n == 1:
        best_b, best_T = [1.0], inst.fixed_delay[0] + inst.load[0]
    return best_b, best_T


def even_split(members) -> dict[int, float]:
    if not members:
        return {}
    share = 1.0 / len(members)
    out = {n: share for n in members}
    # force an exact unit sum
    out[members[-1]] = 1.0 - share * (len(members) - 1)
    return out
