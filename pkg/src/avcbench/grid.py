"""Per-unit network data model, the line-oriented case format, and pure case mutations.

Every mutation returns a new :class:`GridCase`; validation runs on construction, so
an instance that exists is always internally consistent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

BUS_KINDS = ("slack", "pv", "pq")
GEN_VSET_BOUNDS = (0.8, 1.2)
DATA_DIR = Path(__file__).parent / "data"


class CaseError(ValueError):
    """Base class for malformed or inconsistent grid cases."""


class CaseSyntaxError(CaseError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class CaseValidationError(CaseError):
    pass


class IslandingError(CaseValidationError):
    pass


class DeviceBoundError(CaseValidationError):
    pass


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    v_set: float | None = None
    v_min: float = 0.95
    v_max: float = 1.05
    # shunt admittance at nominal voltage (pu); needed for the canonical 14-bus data
    gs: float = 0.0
    bs: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0
    tap: float = 1.0
    in_service: bool = True


@dataclass(frozen=True)
class Generator:
    bus: int
    p_set: float
    v_set: float
    controllable: bool = True


@dataclass(frozen=True)
class Load:
    bus: int
    p: float
    q: float


@dataclass(frozen=True)
class LtcTransformer:
    branch_index: int
    tap_steps: int = 17
    step_size: float = 0.00625
    position: int = 0

    @property
    def max_position(self) -> int:
        return (self.tap_steps - 1) // 2

    @property
    def effective_tap(self) -> float:
        return 1.0 + self.position * self.step_size


@dataclass(frozen=True)
class GridCase:
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...] = ()
    loads: tuple[Load, ...] = ()
    ltcs: tuple[LtcTransformer, ...] = ()
    _bus_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("buses", "branches", "generators", "loads", "ltcs"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "_bus_index", {b.id: i for i, b in enumerate(self.buses)})
        _validate(self)

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    def bus_position(self, bus_id: int) -> int:
        """Row of `bus_id` in bus-ordered arrays."""
        return self._bus_index[bus_id]

    @property
    def slack_position(self) -> int:
        return next(i for i, b in enumerate(self.buses) if b.kind == "slack")

    def in_service_branches(self) -> list[int]:
        return [k for k, br in enumerate(self.branches) if br.in_service]

    def branch_taps(self) -> np.ndarray:
        """Off-nominal ratio per branch with LTC positions taking precedence."""
        taps = np.array([br.tap for br in self.branches], dtype=float)
        for ltc in self.ltcs:
            taps[ltc.branch_index] = ltc.effective_tap
        return taps

    def regulated_voltages(self) -> dict[int, float]:
        """Voltage target for slack/PV buses, keyed by bus position.

        A generator's v_set overrides the bus record; with several generators on one bus
        the first one listed wins.
        """
        out = {}
        for i, bus in enumerate(self.buses):
            if bus.kind != "pq" and bus.v_set is not None:
                out[i] = bus.v_set
        seen = set()
        for gen in self.generators:
            pos = self._bus_index[gen.bus]
            if pos not in seen:
                out[pos] = gen.v_set
                seen.add(pos)
        return out

    def controllable_generators(self) -> list[int]:
        return [i for i, g in enumerate(self.generators) if g.controllable]


def _validate(case: GridCase) -> None:
    if not case.base_mva > 0:
        raise CaseValidationError("base_mva must be positive")
    if len(case._bus_index) != len(case.buses):
        seen = set()
        for b in case.buses:
            if b.id in seen:
                raise CaseValidationError(f"duplicate bus id {b.id}")
            seen.add(b.id)
    n_slack = 0
    for b in case.buses:
        if b.id < 1:
            raise CaseValidationError(f"bus id {b.id} must be >= 1")
        if b.kind not in BUS_KINDS:
            raise CaseValidationError(f"bus {b.id}: unknown kind {b.kind!r}")
        if b.kind == "slack":
            n_slack += 1
        if b.kind != "pq":
            if b.v_set is None:
                raise CaseValidationError(f"bus {b.id}: {b.kind} bus needs v_set")
            if not 0.0 < b.v_set < 2.0:
                raise CaseValidationError(f"bus {b.id}: v_set {b.v_set} outside (0, 2)")
    if n_slack == 0:
        raise CaseValidationError("no slack bus")
    if n_slack > 1:
        raise CaseValidationError("multiple slack buses")

    idx = case._bus_index
    for k, br in enumerate(case.branches):
        for end in (br.from_bus, br.to_bus):
            if end not in idx:
                raise CaseValidationError(f"branch {k}: unknown bus {end}")
        if br.from_bus == br.to_bus:
            raise CaseValidationError(f"branch {k}: from_bus equals to_bus")
        if br.r == 0.0 and br.x == 0.0:
            raise CaseValidationError(f"branch {k}: degenerate impedance (r = x = 0)")
        if not br.tap > 0:
            raise CaseValidationError(f"branch {k}: tap must be positive")
    for k, gen in enumerate(case.generators):
        if gen.bus not in idx:
            raise CaseValidationError(f"generator {k}: unknown bus {gen.bus}")
        if case.buses[idx[gen.bus]].kind == "pq":
            raise CaseValidationError(f"generator {k}: bus {gen.bus} is a pq bus")
        lo, hi = GEN_VSET_BOUNDS
        if not lo <= gen.v_set <= hi:
            raise DeviceBoundError(f"generator {k}: v_set {gen.v_set} outside [{lo}, {hi}]")
    for k, load in enumerate(case.loads):
        if load.bus not in idx:
            raise CaseValidationError(f"load {k}: unknown bus {load.bus}")
    for k, ltc in enumerate(case.ltcs):
        if not 0 <= ltc.branch_index < len(case.branches):
            raise CaseValidationError(f"ltc {k}: branch index {ltc.branch_index} out of range")
        if ltc.tap_steps < 1 or ltc.step_size <= 0:
            raise CaseValidationError(f"ltc {k}: bad tap_steps/step_size")
        if abs(ltc.position) > ltc.max_position:
            raise DeviceBoundError(
                f"ltc {k}: position {ltc.position} outside [-{ltc.max_position}, {ltc.max_position}]")
        if not ltc.effective_tap > 0:
            raise CaseValidationError(f"ltc {k}: effective tap not positive")

    n_islands = _island_count(case)
    if n_islands > 1:
        raise IslandingError(f"network splits into {n_islands} islands")


def _island_count(case: GridCase) -> int:
    n = case.n_bus
    live = [br for br in case.branches if br.in_service]
    rows = [case._bus_index[br.from_bus] for br in live]
    cols = [case._bus_index[br.to_bus] for br in live]
    graph = coo_matrix((np.ones(len(live)), (rows, cols)), shape=(n, n))
    count, _ = connected_components(graph, directed=False)
    return count


# --- text format -----------------------------------------------------------------

_SECTIONS = ("meta", "bus", "branch", "gen", "load", "ltc")


def _flag(tok: str) -> bool:
    if tok in ("1", "true", "True"):
        return True
    if tok in ("0", "false", "False"):
        return False
    raise ValueError(f"expected 0/1 flag, got {tok!r}")


def _opt_float(tok: str) -> float | None:
    return None if tok == "-" else float(tok)


def _parse_record(section: str, toks: list[str]):
    if section == "bus":
        if not 2 <= len(toks) <= 7:
            raise ValueError("bus record needs 2-7 fields: id kind [v_set v_min v_max gs bs]")
        kwargs = {"id": int(toks[0]), "kind": toks[1]}
        if len(toks) > 2:
            kwargs["v_set"] = _opt_float(toks[2])
        for name, tok in zip(("v_min", "v_max", "gs", "bs"), toks[3:]):
            kwargs[name] = float(tok)
        return Bus(**kwargs)
    if section == "branch":
        if not 4 <= len(toks) <= 7:
            raise ValueError("branch record needs 4-7 fields: from to r x [b tap in_service]")
        br = Branch(int(toks[0]), int(toks[1]), float(toks[2]), float(toks[3]))
        if len(toks) > 4:
            br = replace(br, b=float(toks[4]))
        if len(toks) > 5:
            br = replace(br, tap=float(toks[5]))
        if len(toks) > 6:
            br = replace(br, in_service=_flag(toks[6]))
        return br
    if section == "gen":
        if not 3 <= len(toks) <= 4:
            raise ValueError("gen record needs 3-4 fields: bus p_set v_set [controllable]")
        gen = Generator(int(toks[0]), float(toks[1]), float(toks[2]))
        if len(toks) == 4:
            gen = replace(gen, controllable=_flag(toks[3]))
        return gen
    if section == "load":
        if len(toks) != 3:
            raise ValueError("load record needs 3 fields: bus p q")
        return Load(int(toks[0]), float(toks[1]), float(toks[2]))
    if section == "ltc":
        if not 1 <= len(toks) <= 4:
            raise ValueError("ltc record needs 1-4 fields: branch_index [tap_steps step_size position]")
        ltc = LtcTransformer(int(toks[0]))
        if len(toks) > 1:
            ltc = replace(ltc, tap_steps=int(toks[1]))
        if len(toks) > 2:
            ltc = replace(ltc, step_size=float(toks[2]))
        if len(toks) > 3:
            ltc = replace(ltc, position=int(toks[3]))
        return ltc
    raise AssertionError(section)


def parse_case(text: str) -> GridCase:
    """Parse case-file text into a validated :class:`GridCase`.

    Raises :class:`CaseSyntaxError` (with line number) for malformed records and
    :class:`CaseValidationError` for consistency problems.
    """
    section = None
    base_mva = None
    records: dict[str, list] = {s: [] for s in _SECTIONS if s != "meta"}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or line[1:-1].strip() not in _SECTIONS:
                raise CaseSyntaxError(f"unknown section header {line!r}", lineno)
            section = line[1:-1].strip()
            continue
        if section is None:
            raise CaseSyntaxError("record before any section header", lineno)
        toks = line.split()
        if section == "meta":
            if len(toks) != 2:
                raise CaseSyntaxError("meta record must be 'key value'", lineno)
            if toks[0] != "base_mva":
                raise CaseSyntaxError(f"unknown meta key {toks[0]!r}", lineno)
            try:
                base_mva = float(toks[1])
            except ValueError as exc:
                raise CaseSyntaxError(str(exc), lineno) from None
            continue
        try:
            records[section].append(_parse_record(section, toks))
        except (ValueError, TypeError) as exc:
            raise CaseSyntaxError(str(exc), lineno) from None
    if base_mva is None:
        raise CaseSyntaxError("missing base_mva in [meta]", max(1, len(text.splitlines())))
    return GridCase(
        base_mva=base_mva,
        buses=records["bus"],
        branches=records["branch"],
        generators=records["gen"],
        loads=records["load"],
        ltcs=records["ltc"],
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def serialize_case(case: GridCase) -> str:
    """Render a case in the text format; floats use repr so parsing is exact."""
    out = ["[meta]", f"base_mva {_fmt(case.base_mva)}", "", "[bus]",
           "# id kind v_set v_min v_max gs bs"]
    for b in case.buses:
        v_set = "-" if b.v_set is None else _fmt(b.v_set)
        out.append(" ".join([str(b.id), b.kind, v_set, _fmt(b.v_min), _fmt(b.v_max),
                             _fmt(b.gs), _fmt(b.bs)]))
    out += ["", "[branch]", "# from to r x b tap in_service"]
    for br in case.branches:
        out.append(" ".join([str(br.from_bus), str(br.to_bus), _fmt(br.r), _fmt(br.x),
                             _fmt(br.b), _fmt(br.tap), str(int(br.in_service))]))
    out += ["", "[gen]", "# bus p_set v_set controllable"]
    for g in case.generators:
        out.append(f"{g.bus} {_fmt(g.p_set)} {_fmt(g.v_set)} {int(g.controllable)}")
    out += ["", "[load]", "# bus p q"]
    for ld in case.loads:
        out.append(f"{ld.bus} {_fmt(ld.p)} {_fmt(ld.q)}")
    out += ["", "[ltc]", "# branch_index tap_steps step_size position"]
    for t in case.ltcs:
        out.append(f"{t.branch_index} {t.tap_steps} {_fmt(t.step_size)} {t.position}")
    return "\n".join(out) + "\n"


def load_case(path: str | Path) -> GridCase:
    return parse_case(Path(path).read_text())


def fixture_path(name: str) -> Path:
    """Path of a shipped fixture, e.g. ``fixture_path("ieee14")``."""
    return DATA_DIR / (name if name.endswith(".case") else f"{name}.case")


def load_fixture(name: str) -> GridCase:
    return load_case(fixture_path(name))


def cases_equal(a: GridCase, b: GridCase) -> bool:
    """Field-by-field structural equality (the dataclass ``==`` already does this)."""
    return all(getattr(a, f.name) == getattr(b, f.name) for f in fields(GridCase) if f.compare)


# --- mutations ---------------------------------------------------------------------

def _check_branch_index(case: GridCase, k: int) -> None:
    if not (isinstance(k, (int, np.integer)) and 0 <= k < len(case.branches)):
        raise IndexError(f"branch index {k} out of range (0..{len(case.branches) - 1})")


def apply_branch_outage(case: GridCase, branch_indices: Iterable[int]) -> GridCase:
    """Take the named branches out of service; islanding raises :class:`IslandingError`."""
    idx = list(branch_indices)
    for k in idx:
        _check_branch_index(case, k)
    branches = list(case.branches)
    for k in idx:
        branches[k] = replace(branches[k], in_service=False)
    try:
        return replace(case, branches=tuple(branches))
    except IslandingError as exc:
        raise IslandingError(f"outage of branches {idx} islands the network: {exc}") from None


def apply_impedance_error(case: GridCase, errors: Iterable[tuple[int, float]]) -> GridCase:
    """Scale r and x of each listed branch by ``1 + relative_delta``."""
    branches = list(case.branches)
    for k, delta in errors:
        _check_branch_index(case, k)
        factor = 1.0 + delta
        if not factor > 0:
            raise CaseValidationError(f"branch {k}: 1 + delta must be positive (delta={delta})")
        if delta == 0.0:
            continue
        br = branches[k]
        branches[k] = replace(br, r=br.r * factor, x=br.x * factor)
    return replace(case, branches=tuple(branches))


def set_controls(
    case: GridCase,
    gen_vset: Iterable[tuple[int, float]] = (),
    ltc_positions: Iterable[tuple[int, int]] = (),
) -> GridCase:
    """Return a case with updated generator setpoints and LTC positions."""
    gens = list(case.generators)
    lo, hi = GEN_VSET_BOUNDS
    for i, v in gen_vset:
        if not 0 <= i < len(gens):
            raise IndexError(f"generator index {i} out of range")
        if not (math.isfinite(v) and lo <= v <= hi):
            raise DeviceBoundError(f"generator {i} (bus {gens[i].bus}): v_set {v} outside [{lo}, {hi}]")
        gens[i] = replace(gens[i], v_set=float(v))
    ltcs = list(case.ltcs)
    for i, pos in ltc_positions:
        if not 0 <= i < len(ltcs):
            raise IndexError(f"ltc index {i} out of range")
        if int(pos) != pos or abs(pos) > ltcs[i].max_position:
            raise DeviceBoundError(
                f"ltc {i} (branch {ltcs[i].branch_index}): position {pos} outside "
                f"[-{ltcs[i].max_position}, {ltcs[i].max_position}]")
        ltcs[i] = replace(ltcs[i], position=int(pos))
    return replace(case, generators=tuple(gens), ltcs=tuple(ltcs))


def scale_loads(case: GridCase, factors: Sequence[float]) -> GridCase:
    """Scale each load's p and q by its own factor (constant power factor)."""
    if len(factors) != len(case.loads):
        raise ValueError("need one factor per load")
    loads = tuple(replace(ld, p=ld.p * f, q=ld.q * f) for ld, f in zip(case.loads, factors))
    return replace(case, loads=loads)


def scale_generation(case: GridCase, factor: float, only_controllable: bool = True) -> GridCase:
    gens = tuple(
        replace(g, p_set=g.p_set * factor) if (g.controllable or not only_controllable) else g
        for g in case.generators
    )
    return replace(case, generators=gens)


def find_branch(case: GridCase, bus_a: int, bus_b: int) -> int | None:
    """Index of the first branch joining two buses in either orientation."""
    for k, br in enumerate(case.branches):
        if {br.from_bus, br.to_bus} == {bus_a, bus_b}:
            return k
    return None
