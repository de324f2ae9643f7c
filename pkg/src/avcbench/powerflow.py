"""Bus admittance assembly and polar Newton-Raphson AC power flow."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .grid import GridCase

# iterates outside this magnitude window are treated as diverged
DIVERGENCE_BOUNDS = (0.2, 5.0)


class SingularJacobianError(RuntimeError):
    """The Jacobian could not be factorized at the first iteration (a modeling error)."""


class NotConvergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    tolerance: float = 1e-8
    max_iterations: int = 30
    flat_start: bool = True

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class AdmittanceMatrix:
    n: int
    entries: sp.csr_matrix

    def dense(self) -> np.ndarray:
        return self.entries.toarray()


@dataclass(frozen=True)
class PowerFlowSolution:
    v_mag: np.ndarray
    v_ang: np.ndarray
    p_inj: np.ndarray
    q_inj: np.ndarray
    branch_flows: np.ndarray  # (n_branch, 2) complex: sending, receiving; 0 when out of service
    total_loss: float
    converged: bool
    iterations: int
    mismatch: float

    @property
    def voltage(self) -> np.ndarray:
        return self.v_mag * np.exp(1j * self.v_ang)


def branch_admittances(case: GridCase):
    """Per-branch pi-model two-port terms (yff, yft, ytf, ytt) with taps on the from side."""
    taps = case.branch_taps()
    n_br = len(case.branches)
    yff = np.zeros(n_br, complex)
    yft = np.zeros(n_br, complex)
    ytf = np.zeros(n_br, complex)
    ytt = np.zeros(n_br, complex)
    for k, br in enumerate(case.branches):
        if not br.in_service:
            continue
        ys = 1.0 / complex(br.r, br.x)
        half_b = 0.5j * br.b
        t = taps[k]
        yff[k] = (ys + half_b) / (t * t)
        yft[k] = -ys / t
        ytf[k] = -ys / t
        ytt[k] = ys + half_b
    return yff, yft, ytf, ytt


def build_ybus(case: GridCase) -> AdmittanceMatrix:
    n = case.n_bus
    yff, yft, ytf, ytt = branch_admittances(case)
    f = np.array([case.bus_position(br.from_bus) for br in case.branches], dtype=int)
    t = np.array([case.bus_position(br.to_bus) for br in case.branches], dtype=int)
    live = np.array([br.in_service for br in case.branches], dtype=bool)
    f, t = f[live], t[live]
    yff, yft, ytf, ytt = yff[live], yft[live], ytf[live], ytt[live]
    shunt = np.array([complex(b.gs, b.bs) for b in case.buses])
    rows = np.concatenate([f, f, t, t, np.arange(n)])
    cols = np.concatenate([f, t, f, t, np.arange(n)])
    vals = np.concatenate([yff, yft, ytf, ytt, shunt])
    ybus = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    ybus.sum_duplicates()
    return AdmittanceMatrix(n=n, entries=ybus)


def net_injection(case: GridCase) -> np.ndarray:
    """Scheduled complex injection per bus (generation minus load), per unit."""
    s = np.zeros(case.n_bus, complex)
    for g in case.generators:
        s[case.bus_position(g.bus)] += g.p_set
    for ld in case.loads:
        s[case.bus_position(ld.bus)] -= complex(ld.p, ld.q)
    return s


def bus_types(case: GridCase):
    slack = case.slack_position
    pv = [i for i, b in enumerate(case.buses) if b.kind == "pv"]
    pq = [i for i, b in enumerate(case.buses) if b.kind == "pq"]
    return slack, np.array(pv, dtype=int), np.array(pq, dtype=int)


def _initial_voltage(case: GridCase, settings: SolverSettings, warm: PowerFlowSolution | None):
    n = case.n_bus
    if warm is not None and not settings.flat_start and warm.converged and len(warm.v_mag) == n:
        vm = warm.v_mag.copy()
        va = warm.v_ang.copy()
    else:
        vm = np.ones(n)
        va = np.zeros(n)
    for pos, v in case.regulated_voltages().items():
        vm[pos] = v
    return vm, va


def _jacobian(ybus: np.ndarray, v: np.ndarray, pvpq: np.ndarray, pq: np.ndarray) -> np.ndarray:
    # complex derivatives of S = V conj(Y V) in polar form, dense
    ibus = ybus @ v
    vnorm = v / np.abs(v)
    ds_dva = 1j * v[:, None] * np.conj(np.diag(ibus) - ybus * v[None, :])
    ds_dvm = v[:, None] * np.conj(ybus * vnorm[None, :]) + np.diag(np.conj(ibus) * vnorm)
    j11 = ds_dva[np.ix_(pvpq, pvpq)].real
    j12 = ds_dvm[np.ix_(pvpq, pq)].real
    j21 = ds_dva[np.ix_(pq, pvpq)].imag
    j22 = ds_dvm[np.ix_(pq, pq)].imag
    return np.block([[j11, j12], [j21, j22]])


def _mismatch(ybus, v, s_sched, pvpq, pq):
    s_calc = v * np.conj(ybus @ v)
    ds = s_calc - s_sched
    return np.concatenate([ds[pvpq].real, ds[pq].imag])


def solve(
    case: GridCase,
    settings: SolverSettings = SolverSettings(),
    warm_start: PowerFlowSolution | None = None,
) -> PowerFlowSolution:
    """Newton-Raphson power flow.

    Divergence is a normal outcome reported through ``converged=False`` with the last
    iterate. Only a Jacobian that cannot be factorized on the first iteration raises
    :class:`SingularJacobianError`.
    """
    ybus = build_ybus(case).dense()
    s_sched = net_injection(case)
    slack, pv, pq = bus_types(case)
    pvpq = np.concatenate([pv, pq])
    n_pvpq = len(pvpq)

    vm, va = _initial_voltage(case, settings, warm_start)
    v = vm * np.exp(1j * va)
    f = _mismatch(ybus, v, s_sched, pvpq, pq)
    norm = np.max(np.abs(f)) if len(f) else 0.0
    converged = norm <= settings.tolerance
    iterations = 0
    lo, hi = DIVERGENCE_BOUNDS
    while not converged and iterations < settings.max_iterations:
        iterations += 1
        jac = _jacobian(ybus, v, pvpq, pq)
        try:
            lu = scipy.linalg.lu_factor(jac, check_finite=True)
            if np.any(np.abs(np.diag(lu[0])) < 1e-14 * max(1.0, np.abs(jac).max())):
                raise np.linalg.LinAlgError("singular Jacobian")
            dx = -scipy.linalg.lu_solve(lu, f)
        except (np.linalg.LinAlgError, ValueError) as exc:
            if iterations == 1:
                raise SingularJacobianError(str(exc)) from None
            break
        va[pvpq] += dx[:n_pvpq]
        vm[pq] += dx[n_pvpq:]
        if not np.all(np.isfinite(vm)) or np.any(vm[pq] <= lo) or np.any(vm[pq] >= hi):
            break
        v = vm * np.exp(1j * va)
        f = _mismatch(ybus, v, s_sched, pvpq, pq)
        norm = np.max(np.abs(f))
        converged = bool(norm <= settings.tolerance)

    v = vm * np.exp(1j * va)
    return _finalize(case, ybus, v, vm, va, converged, iterations, norm)


def _finalize(case, ybus, v, vm, va, converged, iterations, norm) -> PowerFlowSolution:
    # report the iterate's own magnitudes: |vm * exp(j va)| can round a regulated 1.05
    # up to 1.0500000000000003 and flip the band classification
    with np.errstate(all="ignore"):
        s_bus = v * np.conj(ybus @ v)
        yff, yft, ytf, ytt = branch_admittances(case)
        f = np.array([case.bus_position(br.from_bus) for br in case.branches], dtype=int)
        t = np.array([case.bus_position(br.to_bus) for br in case.branches], dtype=int)
        if len(f):
            s_from = v[f] * np.conj(yff * v[f] + yft * v[t])
            s_to = v[t] * np.conj(ytf * v[f] + ytt * v[t])
        else:
            s_from = s_to = np.zeros(0, complex)
        flows = np.column_stack([s_from, s_to]) if len(f) else np.zeros((0, 2), complex)
        shunt_p = np.array([b.gs for b in case.buses]) * np.abs(v) ** 2
        loss = float(np.sum(s_from.real + s_to.real) + np.sum(shunt_p))
    return PowerFlowSolution(
        v_mag=vm.copy(),
        v_ang=va.copy(),
        p_inj=s_bus.real,
        q_inj=s_bus.imag,
        branch_flows=flows,
        total_loss=loss,
        converged=bool(converged),
        iterations=iterations,
        mismatch=float(norm),
    )


def compute_losses(solution: PowerFlowSolution) -> float:
    if not solution.converged:
        raise NotConvergedError("losses are undefined for a diverged solution")
    return solution.total_loss


class VoltageClass(enum.Enum):
    ALL_NORMAL = "all_normal"
    VIOLATION = "violation"
    SEVERE = "severe"


def check_voltage_band(
    solution: PowerFlowSolution,
    lo: float = 0.95,
    hi: float = 1.05,
    severe_lo: float = 0.8,
    severe_hi: float = 1.2,
) -> VoltageClass:
    """Three-zone classification of a solved state (divergence counts as severe)."""
    vm = solution.v_mag
    if not solution.converged or not np.all(np.isfinite(vm)):
        return VoltageClass.SEVERE
    if np.any(vm < severe_lo) or np.any(vm > severe_hi):
        return VoltageClass.SEVERE
    if np.all(vm >= lo) and np.all(vm <= hi):
        return VoltageClass.ALL_NORMAL
    return VoltageClass.VIOLATION


def format_solution(case: GridCase, sol: PowerFlowSolution) -> str:
    """Key-value text block used by the ``powerflow --json`` CLI output."""
    lines = [
        f"converged={str(sol.converged).lower()}",
        f"iterations={sol.iterations}",
        f"mismatch={sol.mismatch:.6e}",
        f"total_loss={sol.total_loss:.10f}",
        f"classification={check_voltage_band(sol).value}",
    ]
    for bus, vm, va in zip(case.buses, sol.v_mag, sol.v_ang):
        lines.append(f"bus.{bus.id}.v_mag={vm:.10f}")
        lines.append(f"bus.{bus.id}.v_ang={va:.10f}")
    return "\n".join(lines) + "\n"
