"""Run configuration and its ``key = value`` file format.

Recognized keys (all optional except where a default is unusable)::

    algorithm = ddpg                 # dqn | ddpg | sac
    case = ieee14                    # fixture name or path to a .case file
    seed = 7
    train_episodes = 2000
    test_episodes = 500
    out = runs/ddpg14
    action_kind = continuous         # discrete | continuous | ltc (default by algorithm)
    controlled_gens = 0,1,3,4        # generator indices; default: all controllable
    controlled_ltcs = 0,1,2
    ltc_relative = false             # LTC actions are step changes instead of positions
    ltc_max_step = 4                 # largest step change per device (relative only)
    ltc_discrete = false             # relative steps as one index (for dqn)
    levels_per_gen = 5
    action_bounds = 0.95,1.05
    load_range = 0.8,1.2
    gen_follow = true
    impedance = exact                # exact | single:k,delta | random:lo,hi
    contingency_pool = 3;5;7,9       # branch sets separated by ';'
    contingency_file = pool.txt      # alternative to contingency_pool
    contingency_probability = 0.0
    test_contingency_pool = ...      # default: same as training
    test_contingency_probability = ...
    randomize_ltc = false
    shaping = none                   # none | loss:<eps> | effort:<eps>
    R_p = 400
    R_n = 100
    R_penalty = -1000
    gamma = 0.99
    max_iterations = 10
    presolved_reward = 500
    no_target = false
    agent.<field> = value            # any field of the algorithm's agent config
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .agents import AGENTS, AgentConfig
from .env import EpisodeConfig, RewardConfig, Shaping
from .grid import fixture_path
from .scenario import ImpedanceMode, ScenarioSpec, derive_seed, read_contingency_file

DEFAULT_KIND = {"dqn": "discrete", "ddpg": "continuous", "sac": "continuous"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    algorithm: str = "ddpg"
    case: str = "ieee14"
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    reward: RewardConfig = field(default_factory=RewardConfig)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    agent_overrides: tuple[tuple[str, object], ...] = ()
    train_episodes: int = 2000
    test_episodes: int = 500
    out_dir: str | None = None
    seed: int = 0
    test_seed: int | None = None
    action_kind: str | None = None
    controlled_gens: tuple[int, ...] | None = None
    controlled_ltcs: tuple[int, ...] | None = None
    ltc_relative: bool = False
    ltc_max_step: int | None = None
    ltc_discrete: bool = False
    levels_per_gen: int = 5
    action_bounds: tuple[float, float] = (0.95, 1.05)
    test_contingency_pool: tuple[tuple[int, ...], ...] | None = None
    test_contingency_probability: float | None = None

    def __post_init__(self):
        if self.algorithm not in AGENTS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.train_episodes < 1 or self.test_episodes < 1:
            raise ConfigError("episode counts must be >= 1")
        if not self.case_path().exists():
            raise ConfigError(f"case file not found: {self.case}")

    def case_path(self) -> Path:
        p = Path(self.case)
        if p.suffix == ".case" or p.exists():
            return p
        return fixture_path(self.case)

    @property
    def kind(self) -> str:
        return self.action_kind or DEFAULT_KIND[self.algorithm]

    def agent_config(self) -> AgentConfig:
        cfg_cls = AGENTS[self.algorithm][1]
        names = {f.name: f for f in fields(cfg_cls)}
        kwargs = {"gamma": self.episode.gamma}
        for key, value in self.agent_overrides:
            if key not in names:
                raise ConfigError(f"{self.algorithm} config has no field {key!r}")
            kwargs[key] = value
        return cfg_cls(**kwargs)

    # seed streams
    def train_scenario_seed(self) -> int:
        return derive_seed(self.seed, 1)

    def agent_seed(self) -> int:
        return derive_seed(self.seed, 2)

    def test_scenario_seed(self) -> int:
        return self.test_seed if self.test_seed is not None else derive_seed(self.seed, 3)

    def train_spec(self) -> ScenarioSpec:
        return replace(self.scenario, seed=self.train_scenario_seed())

    def test_spec(self) -> ScenarioSpec:
        pool = self.scenario.contingency_pool if self.test_contingency_pool is None \
            else self.test_contingency_pool
        prob = self.scenario.contingency_probability if self.test_contingency_probability is None \
            else self.test_contingency_probability
        return replace(self.scenario, seed=self.test_scenario_seed(), contingency_pool=pool,
                       contingency_probability=prob, impedance_mode=ImpedanceMode.exact())

    def with_agent(self, **overrides) -> "RunConfig":
        merged = dict(self.agent_overrides)
        merged.update(overrides)
        return replace(self, agent_overrides=tuple(sorted(merged.items())))


# --- text format ---------------------------------------------------------------------

def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _pair(text: str) -> tuple[float, float]:
    parts = [float(t) for t in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"expected 'lo,hi', got {text!r}")
    return parts[0], parts[1]


def parse_pool(text: str) -> tuple[tuple[int, ...], ...]:
    text = text.strip()
    if not text or text == "-":
        return ()
    return tuple(_ints(chunk) for chunk in text.split(";") if chunk.strip())


def format_pool(pool) -> str:
    return ";".join(",".join(str(k) for k in s) for s in pool) or "-"


def _coerce_agent_value(cfg_cls, key: str, text: str):
    names = {f.name: f for f in fields(cfg_cls)}
    if key not in names:
        raise ConfigError(f"unknown agent field {key!r}")
    default = getattr(cfg_cls(), key)
    if isinstance(default, bool):
        return _bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        return _ints(text)
    return text.strip()


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        raw[key] = value
    return config_from_mapping(raw, base_dir)


def config_from_mapping(raw: dict[str, str], base_dir: Path | None = None) -> RunConfig:
    raw = dict(raw)
    algorithm = raw.pop("algorithm", "ddpg")
    if algorithm not in AGENTS:
        raise ConfigError(f"unknown algorithm {algorithm!r}")
    cfg_cls = AGENTS[algorithm][1]

    def resolve(p: str) -> str:
        path = Path(p)
        if base_dir is not None and not path.is_absolute() and (base_dir / path).exists():
            return str(base_dir / path)
        return p

    kw: dict = {"algorithm": algorithm}
    spec_kw: dict = {}
    reward_kw: dict = {}
    episode_kw: dict = {}
    agent: dict = {}
    try:
        for key, value in raw.items():
            if key == "case":
                kw["case"] = resolve(value)
            elif key in ("seed", "train_episodes", "test_episodes", "levels_per_gen",
                         "ltc_max_step"):
                kw[key] = int(value)
            elif key == "test_seed":
                kw[key] = int(value)
            elif key == "out":
                kw["out_dir"] = value
            elif key == "action_kind":
                kw[key] = value
            elif key in ("controlled_gens", "controlled_ltcs"):
                kw[key] = _ints(value)
            elif key in ("ltc_relative", "ltc_discrete"):
                kw[key] = _bool(value)
            elif key == "action_bounds":
                kw[key] = _pair(value)
            elif key == "load_range":
                spec_kw["load_scale_range"] = _pair(value)
            elif key == "gen_follow":
                spec_kw["gen_follow"] = _bool(value)
            elif key == "impedance":
                spec_kw["impedance_mode"] = ImpedanceMode.parse(value)
            elif key == "contingency_pool":
                spec_kw["contingency_pool"] = parse_pool(value)
            elif key == "contingency_file":
                spec_kw["contingency_pool"] = read_contingency_file(resolve(value))
            elif key == "contingency_probability":
                spec_kw[key] = float(value)
            elif key == "randomize_ltc":
                spec_kw[key] = _bool(value)
            elif key == "test_contingency_pool":
                kw[key] = parse_pool(value)
            elif key == "test_contingency_probability":
                kw[key] = float(value)
            elif key == "shaping":
                reward_kw["shaping"] = Shaping.parse(value)
            elif key in ("R_p", "R_n", "R_penalty"):
                reward_kw[key] = float(value)
            elif key in ("gamma", "presolved_reward"):
                episode_kw[key] = float(value)
            elif key == "max_iterations":
                episode_kw[key] = int(value)
            elif key == "no_target":
                if _bool(value):
                    agent["use_target"] = False
            elif key.startswith("agent."):
                name = key[len("agent."):]
                agent[name] = _coerce_agent_value(cfg_cls, name, value)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        kw["scenario"] = ScenarioSpec(**spec_kw)
        kw["reward"] = RewardConfig(**reward_kw)
        kw["episode"] = EpisodeConfig(**episode_kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    kw["agent_overrides"] = tuple(sorted(agent.items()))
    return RunConfig(**kw)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


def format_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config` for the fields a run depends on."""
    spec = cfg.scenario
    lines = [
        f"algorithm = {cfg.algorithm}",
        f"case = {cfg.case}",
        f"seed = {cfg.seed}",
        f"train_episodes = {cfg.train_episodes}",
        f"test_episodes = {cfg.test_episodes}",
        f"levels_per_gen = {cfg.levels_per_gen}",
        f"ltc_relative = {str(cfg.ltc_relative).lower()}",
        f"ltc_discrete = {str(cfg.ltc_discrete).lower()}",
        f"action_bounds = {cfg.action_bounds[0]!r},{cfg.action_bounds[1]!r}",
        f"load_range = {spec.load_scale_range[0]!r},{spec.load_scale_range[1]!r}",
        f"gen_follow = {str(spec.gen_follow).lower()}",
        f"impedance = {spec.impedance_mode}",
        f"contingency_pool = {format_pool(spec.contingency_pool)}",
        f"contingency_probability = {spec.contingency_probability!r}",
        f"randomize_ltc = {str(spec.randomize_ltc).lower()}",
        f"shaping = {cfg.reward.shaping}",
        f"R_p = {cfg.reward.R_p!r}",
        f"R_n = {cfg.reward.R_n!r}",
        f"R_penalty = {cfg.reward.R_penalty!r}",
        f"gamma = {cfg.episode.gamma!r}",
        f"max_iterations = {cfg.episode.max_iterations}",
        f"presolved_reward = {cfg.episode.presolved_reward!r}",
    ]
    if cfg.action_kind is not None:
        lines.append(f"action_kind = {cfg.action_kind}")
    if cfg.test_seed is not None:
        lines.append(f"test_seed = {cfg.test_seed}")
    if cfg.out_dir is not None:
        lines.append(f"out = {cfg.out_dir}")
    if cfg.controlled_gens is not None:
        lines.append("controlled_gens = " + ",".join(map(str, cfg.controlled_gens)))
    if cfg.ltc_max_step is not None:
        lines.append(f"ltc_max_step = {cfg.ltc_max_step}")
    if cfg.controlled_ltcs is not None:
        lines.append("controlled_ltcs = " + ",".join(map(str, cfg.controlled_ltcs)))
    if cfg.test_contingency_pool is not None:
        lines.append(f"test_contingency_pool = {format_pool(cfg.test_contingency_pool)}")
    if cfg.test_contingency_probability is not None:
        lines.append(f"test_contingency_probability = {cfg.test_contingency_probability!r}")
    for key, value in cfg.agent_overrides:
        if isinstance(value, tuple):
            value = ",".join(map(str, value))
        elif isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"agent.{key} = {value}")
    return "\n".join(lines) + "\n"
