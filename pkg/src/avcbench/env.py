"""Episodic voltage-control decision process on top of the power-flow engine."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .grid import GEN_VSET_BOUNDS, GridCase, set_controls
from .powerflow import (PowerFlowSolution, SolverSettings, VoltageClass, check_voltage_band,
                        solve)
from .scenario import Scenario

# feature scaling for network inputs: voltages enter as (v - 1) / V_FEATURE_SCALE
V_FEATURE_SCALE = 0.05


class ActionError(ValueError):
    pass


class EpisodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class Shaping:
    """Additive reward term: ``none``, ``loss`` (-eps * L) or ``effort`` (eps * N)."""
    kind: str = "none"
    epsilon: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "loss", "effort"):
            raise ValueError(f"unknown shaping {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "Shaping":
        kind, _, eps = text.partition(":")
        if kind == "none":
            return cls()
        return cls(kind, float(eps))

    def __str__(self):
        return "none" if self.kind == "none" else f"{self.kind}:{self.epsilon!r}"


@dataclass(frozen=True)
class RewardConfig:
    R_p: float = 400.0
    R_n: float = 100.0
    R_penalty: float = -1000.0
    normal_band: tuple[float, float] = (0.95, 1.05)
    severe_band: tuple[float, float] = (0.8, 1.2)
    shaping: Shaping = field(default_factory=Shaping)

    def __post_init__(self):
        if not (self.R_p > 0 and self.R_n > 0):
            raise ValueError("R_p and R_n must be positive")
        if not self.R_penalty < -self.R_n:
            raise ValueError("R_penalty must be below -R_n")


@dataclass(frozen=True)
class EpisodeConfig:
    gamma: float = 0.99
    max_iterations: int = 10
    presolved_reward: float = 500.0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class ActionSpaceSpec:
    """Which devices the agent drives and how actions are encoded.

    ``discrete``: an index into a uniform ``levels_per_gen`` grid over ``bounds`` per
    controlled generator (mixed radix, first generator is the least significant digit).
    ``continuous``: one setpoint per controlled generator, within ``bounds``.
    ``ltc``: one integer tap position per controlled LTC, within ``ltc_limits``. With
    ``ltc_relative`` the vector is instead a per-device step change from the current
    position (0 keeps the device), at most ``ltc_max_step`` steps per device (default:
    the device's half-range), and the result is clipped to the tap range.
    ``ltc_discrete`` (relative only) turns that into an index over per-device steps
    ``-m..m`` with ``m = ltc_max_step or 1``, mixed radix like the generator grid.
    """
    kind: str = "continuous"
    controlled_gens: tuple[int, ...] = ()
    levels_per_gen: int = 5
    bounds: tuple[float, float] = (0.95, 1.05)
    controlled_ltcs: tuple[int, ...] = ()
    ltc_limits: tuple[int, ...] = ()
    ltc_relative: bool = False
    ltc_max_step: int | None = None
    ltc_discrete: bool = False

    def __post_init__(self):
        if self.kind not in ("discrete", "continuous", "ltc"):
            raise ValueError(f"unknown action kind {self.kind!r}")
        lo, hi = self.bounds
        if not GEN_VSET_BOUNDS[0] <= lo <= hi <= GEN_VSET_BOUNDS[1]:
            raise ValueError("bounds must nest inside the generator setpoint range")
        if self.kind == "discrete" and self.levels_per_gen < 2:
            raise ValueError("discrete spaces need at least 2 levels")
        if self.ltc_discrete and not (self.kind == "ltc" and self.ltc_relative):
            raise ValueError("ltc_discrete needs a relative LTC space")
        if self.ltc_max_step is not None and self.ltc_max_step < 1:
            raise ValueError("ltc_max_step must be >= 1")
        if self.kind == "ltc" and len(self.ltc_limits) != len(self.controlled_ltcs):
            raise ValueError("one tap limit per controlled LTC")
        object.__setattr__(self, "controlled_gens", tuple(self.controlled_gens))
        object.__setattr__(self, "controlled_ltcs", tuple(self.controlled_ltcs))
        object.__setattr__(self, "ltc_limits", tuple(self.ltc_limits))

    @classmethod
    def for_case(cls, case: GridCase, kind: str, gens: Sequence[int] | None = None,
                 ltcs: Sequence[int] | None = None, **kwargs) -> "ActionSpaceSpec":
        if kind == "ltc":
            ltcs = tuple(range(len(case.ltcs))) if ltcs is None else tuple(ltcs)
            return cls(kind, controlled_ltcs=ltcs,
                       ltc_limits=tuple(case.ltcs[i].max_position for i in ltcs), **kwargs)
        gens = tuple(case.controllable_generators()) if gens is None else tuple(gens)
        return cls(kind, controlled_gens=gens, **kwargs)

    @property
    def n_devices(self) -> int:
        return len(self.controlled_ltcs) if self.kind == "ltc" else len(self.controlled_gens)

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete" or self.ltc_discrete

    @property
    def step_radix(self) -> int:
        return 2 * (self.ltc_max_step or 1) + 1

    @property
    def cardinality(self) -> int:
        if self.ltc_discrete:
            return self.step_radix ** len(self.controlled_ltcs)
        if self.kind != "discrete":
            raise ActionError("only discrete spaces have a cardinality")
        return self.levels_per_gen ** len(self.controlled_gens)

    @property
    def dim(self) -> int:
        """Length of the action vector for continuous-valued agents."""
        return self.n_devices

    def vector_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-dimension (low, high) of the action vector for continuous agents."""
        if self.kind == "ltc":
            lim = np.array(self.ltc_limits, dtype=float)
            if self.ltc_relative and self.ltc_max_step is not None:
                lim = np.full(len(lim), float(self.ltc_max_step))
            return -lim, lim
        lo, hi = self.bounds
        n = len(self.controlled_gens)
        return np.full(n, lo), np.full(n, hi)

    def levels(self) -> np.ndarray:
        lo, hi = self.bounds
        return np.linspace(lo, hi, self.levels_per_gen)


@dataclass(frozen=True)
class ControlAssignment:
    gen_vset: tuple[tuple[int, float], ...] = ()
    ltc_positions: tuple[tuple[int, int], ...] = ()


def decode_action(action, space: ActionSpaceSpec,
                  current: np.ndarray | None = None) -> ControlAssignment:
    """Map an action to device settings. ``current`` (tap positions) is required only
    for relative LTC spaces."""
    if space.is_discrete:
        if isinstance(action, (bool, np.bool_)) or not isinstance(action, (int, np.integer)):
            raise ActionError(f"discrete action must be an integer index, got {action!r}")
        if not 0 <= action < space.cardinality:
            raise ActionError(f"action {action} outside [0, {space.cardinality})")
    if space.ltc_discrete:
        if current is None:
            raise ActionError("relative LTC actions need the current tap positions")
        m = space.step_radix // 2
        rest = int(action)
        out = []
        for t, pos, lim in zip(space.controlled_ltcs, current, space.ltc_limits):
            rest, digit = divmod(rest, space.step_radix)
            out.append((t, int(np.clip(int(pos) + digit - m, -lim, lim))))
        return ControlAssignment(ltc_positions=tuple(out))
    if space.kind == "discrete":
        levels = space.levels()
        out = []
        rest = int(action)
        for g in space.controlled_gens:
            rest, digit = divmod(rest, space.levels_per_gen)
            out.append((g, float(levels[digit])))
        return ControlAssignment(gen_vset=tuple(out))

    vec = np.asarray(action, dtype=float).reshape(-1)
    if vec.shape != (space.dim,):
        raise ActionError(f"action vector must have length {space.dim}, got {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ActionError("action vector has non-finite entries")
    lo, hi = space.vector_bounds()
    if np.any(vec < lo) or np.any(vec > hi):
        raise ActionError(f"action {vec.tolist()} outside bounds")
    if space.kind == "continuous":
        return ControlAssignment(gen_vset=tuple(
            (g, float(v)) for g, v in zip(space.controlled_gens, vec)))
    # real-valued tap requests are rounded half away from zero
    positions = np.sign(vec) * np.floor(np.abs(vec) + 0.5)
    if space.ltc_relative:
        if current is None:
            raise ActionError("relative LTC actions need the current tap positions")
        lim = np.array(space.ltc_limits, dtype=float)
        positions = np.clip(np.asarray(current, dtype=float) + positions, -lim, lim)
    return ControlAssignment(ltc_positions=tuple(
        (t, int(p)) for t, p in zip(space.controlled_ltcs, positions)))


def control_state(case: GridCase, space: ActionSpaceSpec) -> np.ndarray:
    """Current settings of the devices the space controls (setpoints or tap positions)."""
    if space.kind == "ltc":
        return np.array([case.ltcs[i].position for i in space.controlled_ltcs], dtype=float)
    return np.array([case.generators[i].v_set for i in space.controlled_gens], dtype=float)


@dataclass(frozen=True)
class ControlDelta:
    changed: int
    total: int

    @property
    def unchanged(self) -> int:
        return self.total - self.changed


def reward(classification: VoltageClass, solution: PowerFlowSolution | None,
           control_delta: ControlDelta, config: RewardConfig) -> float:
    """Step reward: one of three branches, shaping only outside the severe branch."""
    if classification is VoltageClass.SEVERE:
        return config.R_penalty
    base = config.R_p if classification is VoltageClass.ALL_NORMAL else -config.R_n
    shaping = config.shaping
    if shaping.kind == "loss":
        return base - shaping.epsilon * solution.total_loss
    if shaping.kind == "effort":
        return base + shaping.epsilon * control_delta.unchanged
    return base


def episode_return(rewards: Sequence[float]) -> float:
    """Mean step reward, correctly rounded (exact for repeated values)."""
    if len(rewards) == 0:
        raise EpisodeError("episode has no agent steps")
    total = sum(Fraction(float(r)) for r in rewards)
    return float(total / len(rewards))


@dataclass(frozen=True)
class Observation:
    v_mag: np.ndarray
    control_state: np.ndarray
    violation_mask: np.ndarray
    severe: bool = False
    v_ang: np.ndarray | None = None

    def vector(self, space: ActionSpaceSpec | None = None) -> np.ndarray:
        """Network input: scaled voltages, scaled control settings, optional angles."""
        parts = [(self.v_mag - 1.0) / V_FEATURE_SCALE]
        ctrl = self.control_state
        if space is not None and space.kind == "ltc":
            parts.append(ctrl / np.maximum(np.array(space.ltc_limits, dtype=float), 1.0))
        else:
            parts.append((ctrl - 1.0) / V_FEATURE_SCALE)
        if self.v_ang is not None:
            parts.append(self.v_ang)
        return np.concatenate(parts)


@dataclass(frozen=True)
class Presolved:
    """Marker for an episode whose initial state is already violation-free."""
    reward: float
    solution: PowerFlowSolution


@dataclass(frozen=True)
class Transition:
    s: Observation
    a: object
    r: float
    s_next: Observation
    done: bool
    classification: VoltageClass = VoltageClass.VIOLATION
    devices_moved: int = 0
    loss: float = float("nan")


class VoltageControlEnv:
    """Single-threaded, stateful episode runner.

    ``reset`` solves the scenario case; ``step`` applies controls, re-solves warm-started
    from the last converged state, and scores the result.
    """

    def __init__(self, space: ActionSpaceSpec, reward_config: RewardConfig = RewardConfig(),
                 episode_config: EpisodeConfig = EpisodeConfig(),
                 settings: SolverSettings = SolverSettings(), include_angles: bool = False):
        self.space = space
        self.reward_config = reward_config
        self.episode_config = episode_config
        self.settings = settings
        self.include_angles = include_angles
        self._warm_settings = SolverSettings(settings.tolerance, settings.max_iterations,
                                             flat_start=False)
        self.case: GridCase | None = None
        self.solution: PowerFlowSolution | None = None
        self.observation: Observation | None = None
        self.iteration = 0
        self.active = False
        self.classification: VoltageClass | None = None

    def classify(self, solution: PowerFlowSolution) -> VoltageClass:
        lo, hi = self.reward_config.normal_band
        slo, shi = self.reward_config.severe_band
        return check_voltage_band(solution, lo, hi, slo, shi)

    def _observe(self, case: GridCase, solution: PowerFlowSolution,
                 fallback: Observation | None) -> Observation:
        lo, hi = self.reward_config.normal_band
        ctrl = control_state(case, self.space)
        vm = solution.v_mag
        va = solution.v_ang
        severe = self.classify(solution) is VoltageClass.SEVERE
        if not solution.converged or not np.all(np.isfinite(vm)):
            if fallback is not None:
                vm, va = fallback.v_mag, fallback.v_ang
            elif not np.all(np.isfinite(vm)):
                vm = np.ones(case.n_bus)
                va = np.zeros(case.n_bus)
        mask = (vm < lo) | (vm > hi)
        if severe and not solution.converged:
            mask = np.ones(case.n_bus, dtype=bool)
        return Observation(v_mag=np.array(vm, dtype=float), control_state=ctrl,
                           violation_mask=mask, severe=severe,
                           v_ang=np.array(va, dtype=float) if self.include_angles else None)

    def reset(self, scenario: Scenario | GridCase, use_true_case: bool = False):
        case = scenario if isinstance(scenario, GridCase) else (
            scenario.true_case if use_true_case else scenario.case)
        solution = solve(case, self.settings)
        self.case = case
        self.solution = solution
        self.iteration = 0
        self.classification = self.classify(solution)
        if self.classification is VoltageClass.ALL_NORMAL:
            self.active = False
            self.observation = None
            return Presolved(self.episode_config.presolved_reward, solution)
        self.active = True
        self.observation = self._observe(case, solution, None)
        return self.observation

    def step(self, action) -> Transition:
        if not self.active:
            raise EpisodeError("episode is not active; call reset first")
        before = control_state(self.case, self.space)
        assignment = decode_action(action, self.space, before)
        new_case = set_controls(self.case, assignment.gen_vset, assignment.ltc_positions)
        after = control_state(new_case, self.space)
        moved = int(np.count_nonzero(before != after))
        warm = self.solution if self.solution is not None and self.solution.converged else None
        solution = solve(new_case, self._warm_settings if warm is not None else self.settings,
                         warm_start=warm)
        cls = self.classify(solution)
        delta = ControlDelta(changed=moved, total=self.space.n_devices)
        r = reward(cls, solution, delta, self.reward_config)
        self.iteration += 1
        done = (cls is not VoltageClass.VIOLATION
                or self.iteration >= self.episode_config.max_iterations)
        s_prev = self.observation
        s_next = self._observe(new_case, solution, s_prev)
        self.case = new_case
        if solution.converged:
            self.solution = solution
        self.observation = s_next
        self.classification = cls
        self.active = not done
        loss = solution.total_loss if solution.converged else float("nan")
        return Transition(s=s_prev, a=action, r=r, s_next=s_next, done=done,
                          classification=cls, devices_moved=moved, loss=loss)
