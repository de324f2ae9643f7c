"""Episode initial conditions: LHS load sampling, impedance-error regimes, contingency
draws, and fivefold cross-validation seed plans."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .grid import (GridCase, apply_branch_outage, apply_impedance_error, find_branch,
                   scale_generation, scale_loads, serialize_case, set_controls)

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

# Ten most heavily loaded lines of the Illinois 200-bus (ACTIVSg200) case, by endpoint bus.
ILLINOIS_HEAVY_LINES = (
    (187, 121), (14, 121), (188, 89), (194, 150), (83, 146),
    (55, 102), (102, 128), (14, 149), (123, 133), (81, 55),
)


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer: a bijective 64-bit mix used for seed splitting."""
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, stream: int) -> int:
    """Seed of sub-stream ``stream`` of ``seed``; distinct streams give distinct seeds."""
    return splitmix64((seed + stream * GOLDEN_GAMMA) & MASK64)


@dataclass(frozen=True)
class ImpedanceMode:
    """``exact``, ``single_line`` (branch, delta) or ``random_all`` (lo, hi)."""
    kind: str = "exact"
    branch: int = 0
    delta: float = 0.0
    lo: float = -0.2
    hi: float = 0.2

    def __post_init__(self):
        if self.kind not in ("exact", "single_line", "random_all"):
            raise ValueError(f"unknown impedance mode {self.kind!r}")
        if self.kind == "random_all" and self.lo > self.hi:
            raise ValueError("random_all needs lo <= hi")

    @classmethod
    def exact(cls):
        return cls("exact")

    @classmethod
    def single_line(cls, branch: int, delta: float):
        return cls("single_line", branch=branch, delta=delta)

    @classmethod
    def random_all(cls, lo: float = -0.2, hi: float = 0.2):
        return cls("random_all", lo=lo, hi=hi)

    @classmethod
    def parse(cls, text: str) -> "ImpedanceMode":
        """Parse ``exact``, ``single:k,delta`` or ``random:lo,hi``."""
        head, _, rest = text.partition(":")
        if head == "exact":
            return cls.exact()
        parts = rest.split(",")
        if head == "single" and len(parts) == 2:
            return cls.single_line(int(parts[0]), float(parts[1]))
        if head == "random" and len(parts) == 2:
            return cls.random_all(float(parts[0]), float(parts[1]))
        raise ValueError(f"bad impedance mode {text!r}")

    def __str__(self):
        if self.kind == "single_line":
            return f"single:{self.branch},{self.delta!r}"
        if self.kind == "random_all":
            return f"random:{self.lo!r},{self.hi!r}"
        return "exact"


@dataclass(frozen=True)
class ScenarioSpec:
    load_scale_range: tuple[float, float] = (0.8, 1.2)
    gen_follow: bool = True
    impedance_mode: ImpedanceMode = field(default_factory=ImpedanceMode)
    contingency_pool: tuple[tuple[int, ...], ...] = ()
    contingency_probability: float = 0.0
    seed: int = 0
    # draw each LTC's starting position uniformly over its range
    randomize_ltc: bool = False

    def __post_init__(self):
        lo, hi = self.load_scale_range
        if lo > hi:
            raise ValueError("load_scale_range needs lo <= hi")
        if lo <= 0:
            raise ValueError("load scale must stay positive")
        if not 0.0 <= self.contingency_probability <= 1.0:
            raise ValueError("contingency_probability must lie in [0, 1]")
        object.__setattr__(self, "contingency_pool",
                           tuple(tuple(int(k) for k in s) for s in self.contingency_pool))
        for s in self.contingency_pool:
            if len(s) not in (1, 2):
                raise ValueError(f"contingency {s}: only N-1 and N-2 sets are supported")


@dataclass(frozen=True)
class Scenario:
    case: GridCase
    true_case: GridCase
    applied_contingency: tuple[int, ...] | None = None
    load_factors: tuple[float, ...] = ()


def lhs_sample(dimensions: int, samples: int, seed: int | np.random.Generator) -> np.ndarray:
    """Latin hypercube in [0, 1): a (samples, dimensions) matrix.

    Each column hits every one of the ``samples`` equal-width strata exactly once, with a
    uniform position inside the stratum and an independent permutation per column.
    """
    if dimensions < 1 or samples < 1:
        raise ValueError("dimensions and samples must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = np.empty((samples, dimensions))
    for d in range(dimensions):
        strata = rng.permutation(samples)
        out[:, d] = (strata + rng.random(samples)) / samples
    return out


def validate_pool(base: GridCase, pool: Sequence[Sequence[int]]) -> None:
    """Raise if any pool entry is out of range or islands the network."""
    for s in pool:
        apply_branch_outage(base, s)


def make_scenarios(base: GridCase, spec: ScenarioSpec, count: int) -> list[Scenario]:
    """Draw ``count`` scenarios around ``base``.

    Loads get one LHS dimension each, mapped into ``load_scale_range``. With
    ``lo == hi`` stratification is moot and every scenario carries the same scaling.
    Per-scenario extras (contingency, random impedances, LTC start) come from a
    generator seeded by ``(spec.seed, index)``, so scenario ``i`` depends only on the
    spec and its index once the LHS matrix is fixed.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return []
    validate_pool(base, spec.contingency_pool)
    lo, hi = spec.load_scale_range
    n_loads = len(base.loads)
    if n_loads and hi > lo:
        factors = lo + (hi - lo) * lhs_sample(n_loads, count, derive_seed(spec.seed, 0))
    else:
        factors = np.full((count, n_loads), lo)
    base_p = sum(ld.p for ld in base.loads)

    out = []
    for i in range(count):
        rng = np.random.default_rng([spec.seed & MASK64, i])
        f = factors[i]
        true_case = base
        if not np.all(f == 1.0):
            true_case = scale_loads(true_case, f)
            if spec.gen_follow and base_p != 0:
                total = sum(ld.p for ld in true_case.loads)
                true_case = scale_generation(true_case, total / base_p)
        if spec.randomize_ltc and base.ltcs:
            positions = [(j, int(rng.integers(-t.max_position, t.max_position + 1)))
                         for j, t in enumerate(base.ltcs)]
            true_case = set_controls(true_case, ltc_positions=positions)

        contingency = None
        if spec.contingency_pool and rng.random() < spec.contingency_probability:
            contingency = spec.contingency_pool[int(rng.integers(len(spec.contingency_pool)))]
            true_case = apply_branch_outage(true_case, contingency)

        mode = spec.impedance_mode
        if mode.kind == "single_line":
            case = apply_impedance_error(true_case, [(mode.branch, mode.delta)])
        elif mode.kind == "random_all":
            deltas = rng.uniform(mode.lo, mode.hi, len(base.branches))
            case = apply_impedance_error(true_case, list(enumerate(deltas)))
        else:
            case = true_case
        out.append(Scenario(case=case, true_case=true_case, applied_contingency=contingency,
                            load_factors=tuple(float(x) for x in f)))
    return out


class UnresolvedLabelError(LookupError):
    pass


def resolve_lines(case: GridCase, lines: Sequence[tuple[int, int]]) -> list[int]:
    """Map (bus, bus) endpoint pairs to branch indices of ``case``."""
    resolved, missing = [], []
    for a, b in lines:
        k = find_branch(case, a, b)
        if k is None:
            missing.append(f"{a}-{b}")
        else:
            resolved.append(k)
    if missing:
        raise UnresolvedLabelError("unresolved lines: " + ", ".join(missing))
    return resolved


def illinois_load_pool(case: GridCase | None) -> list[int]:
    """Branch indices of the ten heavily loaded Illinois 200-bus lines in ``case``."""
    if case is None:
        raise UnresolvedLabelError("unresolved lines: no case loaded")
    return resolve_lines(case, ILLINOIS_HEAVY_LINES)


def read_contingency_file(path: str | Path) -> tuple[tuple[int, ...], ...]:
    """One branch set per line, indices separated by commas or whitespace; '#' comments."""
    pool = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].replace(",", " ").split()
        if line:
            pool.append(tuple(int(t) for t in line))
    return tuple(pool)


def write_scenarios(scenarios: Sequence[Scenario], out_dir: str | Path) -> Path:
    """Persist scenarios as case files plus a ``manifest.txt`` index."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["# index case true_case contingency"]
    for i, sc in enumerate(scenarios):
        case_name = f"scenario_{i:05d}.case"
        true_name = f"scenario_{i:05d}.true.case"
        (out / case_name).write_text(serialize_case(sc.case))
        (out / true_name).write_text(serialize_case(sc.true_case))
        cont = "-" if sc.applied_contingency is None else ",".join(map(str, sc.applied_contingency))
        rows.append(f"{i} {case_name} {true_name} {cont}")
    manifest = out / "manifest.txt"
    manifest.write_text("\n".join(rows) + "\n")
    return manifest


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[int, ...]
    shared_test_seed: int
    train_episodes: int
    test_episodes: int

    @property
    def total_episodes(self) -> int:
        return self.train_episodes + self.test_episodes


def make_fold_plan(master_seed: int, train_episodes: int, test_episodes: int,
                   n_folds: int = 5) -> FoldPlan:
    """Training seed of fold k is ``derive_seed(master, k + 1)``; the test seed uses
    stream 0. ``derive_seed`` is injective in the stream index, so all seeds differ."""
    if train_episodes < 1 or test_episodes < 1:
        raise ValueError("episode counts must be >= 1")
    master = master_seed & MASK64
    folds = tuple(derive_seed(master, k + 1) for k in range(n_folds))
    return FoldPlan(folds=folds, shared_test_seed=derive_seed(master, 0),
                    train_episodes=train_episodes, test_episodes=test_episodes)
