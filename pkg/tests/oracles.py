"""Independent reference implementations used as test oracles.

Nothing here imports the solver, the network code, or the mutation helpers of the
package under test; the oracles read plain case fields only.
"""
from __future__ import annotations

import math

import numpy as np


# --- power flow ----------------------------------------------------------------------

def _taps(case):
    taps = [br.tap for br in case.branches]
    for ltc in case.ltcs:
        taps[ltc.branch_index] = 1.0 + ltc.position * ltc.step_size
    return taps


def ybus_loops(case) -> np.ndarray:
    """Bus admittance matrix assembled entry by entry from pi-model branches."""
    pos = {b.id: i for i, b in enumerate(case.buses)}
    n = len(case.buses)
    y = np.zeros((n, n), dtype=complex)
    for br, t in zip(case.branches, _taps(case)):
        if not br.in_service:
            continue
        f, k = pos[br.from_bus], pos[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        ysh = complex(0.0, br.b / 2.0)
        y[f, f] += (ys + ysh) / (t * t)
        y[k, k] += ys + ysh
        y[f, k] -= ys / t
        y[k, f] -= ys / t
    for i, b in enumerate(case.buses):
        y[i, i] += complex(b.gs, b.bs)
    return y


def gauss_seidel(case, tol: float = 1e-13, max_sweeps: int = 200_000):
    """Plain Gauss-Seidel power flow: returns (|V|, angle, sweeps).

    PV buses recompute Q from the current iterate and then have their magnitude reset
    to the setpoint; the slack bus is fixed.
    """
    pos = {b.id: i for i, b in enumerate(case.buses)}
    n = len(case.buses)
    y = ybus_loops(case)
    s = np.zeros(n, dtype=complex)
    for g in case.generators:
        s[pos[g.bus]] += g.p_set
    for ld in case.loads:
        s[pos[ld.bus]] -= complex(ld.p, ld.q)
    vset = {}
    for i, b in enumerate(case.buses):
        if b.kind != "pq" and b.v_set is not None:
            vset[i] = b.v_set
    seen = set()
    for g in case.generators:
        i = pos[g.bus]
        if i not in seen:
            vset[i] = g.v_set
            seen.add(i)
    kinds = [b.kind for b in case.buses]
    v = np.ones(n, dtype=complex)
    for i, m in vset.items():
        v[i] = m
    for sweep in range(1, max_sweeps + 1):
        worst = 0.0
        for i in range(n):
            if kinds[i] == "slack":
                continue
            row = y[i] @ v - y[i, i] * v[i]
            si = s[i]
            if kinds[i] == "pv":
                q = -(np.conj(v[i]) * (row + y[i, i] * v[i])).imag
                si = complex(s[i].real, q)
            new = (np.conj(si / v[i]) - row) / y[i, i]
            if kinds[i] == "pv":
                new = vset[i] * new / abs(new)
            worst = max(worst, abs(new - v[i]))
            v[i] = new
        if worst < tol:
            return np.abs(v), np.angle(v), sweep
    raise RuntimeError("Gauss-Seidel oracle did not converge")


def two_bus_closed_form(v1: float, x: float, p: float, q: float) -> tuple[float, float]:
    """Lossless two-bus line, slack at angle 0: high-voltage root (|V2|, angle2).

    From P = V1 V2 sin(-th) / x and Q = (V1 V2 cos th - V2^2) / x the magnitude solves
    V2^4 + (2 q x - V1^2) V2^2 + x^2 (p^2 + q^2) = 0.
    """
    a = v1 * v1 - 2.0 * q * x
    disc = a * a - 4.0 * x * x * (p * p + q * q)
    if disc < 0:
        raise ValueError("no power-flow solution (beyond the nose point)")
    v2 = math.sqrt((a + math.sqrt(disc)) / 2.0)
    th = -math.asin(p * x / (v1 * v2))
    return v2, th


# --- topology --------------------------------------------------------------------------

class UnionFind:
    def __init__(self, items):
        self.parent = {k: k for k in items}

    def find(self, k):
        while self.parent[k] != k:
            self.parent[k] = self.parent[self.parent[k]]
            k = self.parent[k]
        return k

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb


def connected(bus_ids, edges) -> bool:
    uf = UnionFind(bus_ids)
    for a, b in edges:
        uf.union(a, b)
    return len({uf.find(k) for k in bus_ids}) == 1


def case_connected(case, removed=()) -> bool:
    edges = [(br.from_bus, br.to_bus) for k, br in enumerate(case.branches)
             if br.in_service and k not in set(removed)]
    return connected([b.id for b in case.buses], edges)


# --- networks ------------------------------------------------------------------------------

def naive_forward(layer_sizes, activations, params, x):
    """Dense MLP evaluation with explicit loops over units (row-major W, then b)."""
    h = [float(v) for v in x]
    off = 0
    for (n_in, n_out), act in zip(zip(layer_sizes[:-1], layer_sizes[1:]), activations):
        w = params[off:off + n_in * n_out]
        off += n_in * n_out
        b = params[off:off + n_out]
        off += n_out
        out = []
        for j in range(n_out):
            z = b[j]
            for i in range(n_in):
                z += h[i] * w[i * n_out + j]
            if act == "relu":
                z = max(z, 0.0)
            elif act == "tanh":
                z = math.tanh(z)
            out.append(z)
        h = out
    return np.array(h)


def central_difference(f, theta: np.ndarray, h: float = 1e-5,
                       index=None) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``theta`` (optionally a subset)."""
    theta = np.array(theta, dtype=float)
    idx = range(len(theta)) if index is None else index
    out = np.zeros(len(theta))
    for i in idx:
        old = theta[i]
        theta[i] = old + h
        fp = f(theta)
        theta[i] = old - h
        fm = f(theta)
        theta[i] = old
        out[i] = (fp - fm) / (2.0 * h)
    return out


def directional_difference(f, theta: np.ndarray, direction: np.ndarray,
                           h: float = 1e-6) -> float:
    return (f(theta + h * direction) - f(theta - h * direction)) / (2.0 * h)


def relative_error(a, b) -> float:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)
