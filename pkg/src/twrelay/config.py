"""System configuration, experiment plans and the key=value config file format."""

from __future__ import annotations

from dataclasses import dataclass, replace, fields


class ConfigError(ValueError):
    """Raised for malformed config files or invalid parameter combinations."""


VARIANT_PAPER = "paper_scalar"
VARIANT_DERIVED = "derived_matrix"
VARIANTS = (VARIANT_PAPER, VARIANT_DERIVED)

SCENARIO_ALL_STRONG = "all_strong"
SCENARIO_S1_WEAK = "s1_weak"

# antenna spacings in wavelengths, as (source 1, source 2, relay)
SCENARIO_SPACINGS = {
    SCENARIO_ALL_STRONG: (0.05, 0.05, 0.25),
    SCENARIO_S1_WEAK: (0.25, 0.05, 0.25),
}

STAGE_BACKWARD = "backward"
STAGE_FORWARD = "forward"

BACKWARD_SCHEMES = ("optimal", "diagonal")
FORWARD_SCHEMES = ("proposed", "orthogonal", "diagonal")

NMSE_PER_REALIZATION = "per_realization"
NMSE_RATIO_OF_MEANS = "ratio_of_means"

DEFAULT_P_GRID_DB = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)


@dataclass(frozen=True)
class SystemConfig:
    """Static description of the two-way relay link.

    Antenna counts, pilot lengths, per-node transmit power budgets (linear
    scale), per-node noise variances and the antenna spacings (in wavelengths)
    that drive the correlation model. ``delta_variant`` selects the scalar
    form used by the training optimizer.
    """

    n1: int = 4
    n2: int = 4
    nr: int = 4
    l_r: int = 4
    l: int = 8
    p1: float = 1.0
    p2: float = 1.0
    pr: float = 1.0
    sigma1_sq: float = 1.0
    sigma2_sq: float = 1.0
    sigmar_sq: float = 1.0
    spacing_s1: float = 0.05
    spacing_s2: float = 0.05
    spacing_r: float = 0.25
    delta_variant: str = VARIANT_DERIVED

    def __post_init__(self):
        for name in ("n1", "n2", "nr", "l_r", "l"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.l_r < self.nr:
            raise ConfigError(f"l_r must be >= nr (got l_r={self.l_r}, nr={self.nr})")
        if self.l < self.n1 + self.n2:
            raise ConfigError(f"l must be >= n1 + n2 (got l={self.l}, n1+n2={self.n1 + self.n2})")
        for name in ("p1", "p2", "pr"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("sigma1_sq", "sigma2_sq", "sigmar_sq"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative, got {getattr(self, name)!r}")
        for name in ("spacing_s1", "spacing_s2", "spacing_r"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative, got {getattr(self, name)!r}")
        if self.delta_variant not in VARIANTS:
            raise ConfigError(
                f"delta_variant must be one of {VARIANTS}, got {self.delta_variant!r}"
            )

    def antennas(self, node: int) -> int:
        if node == 1:
            return self.n1
        if node == 2:
            return self.n2
        raise ConfigError(f"node must be 1 or 2, got {node!r}")

    def noise_var(self, node: int) -> float:
        return self.sigma1_sq if node == 1 else self.sigma2_sq

    def power(self, node: int) -> float:
        return self.p1 if node == 1 else self.p2


@dataclass(frozen=True)
class ExperimentPlan:
    """What to run: scenario, schemes, power grid, trial count and seeding."""

    scenario: str = SCENARIO_ALL_STRONG
    stage: str = STAGE_FORWARD
    schemes: tuple = FORWARD_SCHEMES
    p_grid_db: tuple = DEFAULT_P_GRID_DB
    trials: int = 1000
    seed: int = 0
    nmse_mode: str = NMSE_PER_REALIZATION

    def __post_init__(self):
        if self.scenario not in SCENARIO_SPACINGS:
            raise ConfigError(
                f"scenario must be one of {tuple(SCENARIO_SPACINGS)}, got {self.scenario!r}"
            )
        if self.stage not in (STAGE_BACKWARD, STAGE_FORWARD):
            raise ConfigError(f"stage must be backward or forward, got {self.stage!r}")
        allowed = BACKWARD_SCHEMES if self.stage == STAGE_BACKWARD else FORWARD_SCHEMES
        if not self.schemes:
            raise ConfigError("schemes must not be empty")
        for scheme in self.schemes:
            if scheme not in allowed:
                raise ConfigError(
                    f"scheme {scheme!r} not valid for stage {self.stage!r} (allowed: {allowed})"
                )
        if not self.p_grid_db:
            raise ConfigError("p_grid_db must not be empty")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError(f"trials must be a positive integer, got {self.trials!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed!r}")
        if self.nmse_mode not in (NMSE_PER_REALIZATION, NMSE_RATIO_OF_MEANS):
            raise ConfigError(f"unknown nmse_mode {self.nmse_mode!r}")


def apply_scenario(cfg: SystemConfig, scenario: str) -> SystemConfig:
    """Return a copy of cfg with the scenario's preset antenna spacings."""
    if scenario not in SCENARIO_SPACINGS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    s1, s2, r = SCENARIO_SPACINGS[scenario]
    return replace(cfg, spacing_s1=s1, spacing_s2=s2, spacing_r=r)


_INT_KEYS = {"n1", "n2", "nr", "l_r", "l", "trials", "seed"}
_FLOAT_KEYS = {
    "p1", "p2", "pr", "sigma1_sq", "sigma2_sq", "sigmar_sq",
    "spacing_s1", "spacing_s2", "spacing_r",
}
_STR_KEYS = {"scenario", "stage", "delta_variant", "nmse_mode"}
_LIST_KEYS = {"schemes", "p_grid_db", "relay_loadings"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _LIST_KEYS


def parse_config_text(text: str):
    """Parse ``key = value`` lines into a raw {key: parsed value} dict.

    Blank lines and ``#`` comments are ignored.  Raises ConfigError naming the
    offending line and key on any malformed input.
    """
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.rstrip()!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not value and key not in _LIST_KEYS:
            raise ConfigError(f"line {lineno}: empty value for key {key!r}")
        try:
            if key in _INT_KEYS:
                raw[key] = int(value)
            elif key in _FLOAT_KEYS:
                raw[key] = float(value)
            elif key == "schemes":
                raw[key] = tuple(v.strip() for v in value.split(",") if v.strip())
            elif key in ("p_grid_db", "relay_loadings"):
                raw[key] = tuple(float(v) for v in value.split(",") if v.strip())
            else:
                raw[key] = value
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r} ({exc})") from None
    return raw


def config_from_raw(raw: dict):
    """Build (SystemConfig, ExperimentPlan, extras) from a parsed key dict."""
    raw = dict(raw)
    scenario = raw.pop("scenario", SCENARIO_ALL_STRONG)
    if scenario not in SCENARIO_SPACINGS:
        raise ConfigError(f"unknown scenario {scenario!r}")

    cfg_kwargs = {}
    for f in fields(SystemConfig):
        if f.name in raw:
            cfg_kwargs[f.name] = raw.pop(f.name)
    # scenario presets fill any spacing not given explicitly
    s1, s2, r = SCENARIO_SPACINGS[scenario]
    cfg_kwargs.setdefault("spacing_s1", s1)
    cfg_kwargs.setdefault("spacing_s2", s2)
    cfg_kwargs.setdefault("spacing_r", r)
    cfg = SystemConfig(**cfg_kwargs)

    stage = raw.pop("stage", STAGE_FORWARD)
    default_schemes = BACKWARD_SCHEMES if stage == STAGE_BACKWARD else FORWARD_SCHEMES
    plan = ExperimentPlan(
        scenario=scenario,
        stage=stage,
        schemes=raw.pop("schemes", default_schemes),
        p_grid_db=raw.pop("p_grid_db", DEFAULT_P_GRID_DB),
        trials=raw.pop("trials", 1000),
        seed=raw.pop("seed", 0),
        nmse_mode=raw.pop("nmse_mode", NMSE_PER_REALIZATION),
    )
    extras = {"relay_loadings": raw.pop("relay_loadings", None)}
    if raw:
        raise ConfigError(f"unhandled keys: {sorted(raw)}")
    return cfg, plan, extras


def load_config(path):
    """Read a config file and return (SystemConfig, ExperimentPlan, extras)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from None
    return config_from_raw(parse_config_text(text))


def db_to_linear(p_db: float) -> float:
    return 10.0 ** (p_db / 10.0)
