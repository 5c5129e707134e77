"""Run configuration: defaults, TOML files and command-line overrides.

A run file looks like::

    [run]
    lam = 8
    iterations = 5
    budget = 2000
    seed = 1

    [preset]
    include = "triplet"        # bundled preset name or a path

    [catalog]
    size = 20                  # first N glasses of the catalog
    # path = "my_glasses.csv"

    [merit]
    min_air_gap = 0.2

Every key can also be overridden with ``section.key=value`` strings.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .evostrat.cmaes import CmaConfig
from .evostrat.cmsa import EsConfig
from .hvea import HveaConfig
from .merit import LensProblem, MeritConfig
from .optics.glass import GlassCatalog, GlassCatalogError, load_catalog
from .optics.system import PRESETS, LensTemplate, PresetError, load_preset

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

THREADS_ENV = "LDGEA_THREADS"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """All constants of one experiment; defaults follow the published setup."""

    lam: int = 50
    mu: int = 5
    alpha: float = 1.0
    window: float = 0.5
    iterations: int = 15
    budget: int = 100_000
    stagnation_window: int = 5
    stagnation_tol: float = 1e-6
    kl_threshold: float = 1e-4
    prob_floor: float = 1e-3
    ablated: bool = False
    seed: int = 0
    threads: int | None = None
    preset: str = "double_gauss"
    catalog: str | None = None
    catalog_size: int | None = None
    refine_top_k: int = 5
    merit: dict = field(default_factory=dict)
    es: EsConfig = field(default_factory=EsConfig)
    hvea: dict = field(default_factory=dict)
    baseline: CmaConfig = field(default_factory=CmaConfig)

    def __post_init__(self):
        if not 1 <= self.mu <= self.lam:
            raise ConfigError("need 1 <= mu <= lam")
        if not 0 <= self.alpha <= 1:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.iterations < 1 or self.budget < 1:
            raise ConfigError("iterations and budget must be positive")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be positive")

    @property
    def baseline_budget(self) -> int:
        """Equal-effort budget of the single-population baseline."""
        return self.lam * self.budget * self.iterations

    def thread_cap(self) -> int:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        return self.threads or (os.cpu_count() or 1)

    def hvea_config(self) -> HveaConfig:
        return HveaConfig(window=self.window, es=self.es, **self.hvea)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["es"] = self.es.to_dict()
        d["baseline"] = self.baseline.to_dict()
        return d

    @classmethod
    def from_resolved(cls, d: dict) -> "RunConfig":
        """Inverse of :meth:`to_dict` (used to reopen a finished run)."""
        d = dict(d)
        try:
            d["es"] = EsConfig(**d.get("es", {}))
            d["baseline"] = CmaConfig(**d.get("baseline", {}))
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad stored configuration: {exc}") from None


_RUN_KEYS = {f.name for f in fields(RunConfig)} - {"merit", "es", "hvea", "baseline", "preset", "catalog", "catalog_size"}
_HVEA_KEYS = {"niche_cap", "max_test", "stall_limit"}
_MERIT_KEYS = {f.name for f in fields(MeritConfig)}


def _section(cls, data: dict, name: str):
    allowed = {f.name for f in fields(cls)}
    bad = set(data) - allowed
    if bad:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(bad))}")
    return cls(**data)


def from_dict(data: dict, base_dir: Path | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from parsed TOML tables."""
    known = {"run", "preset", "catalog", "merit", "es", "hvea", "baseline"}
    bad = set(data) - known
    if bad:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(bad))}")
    run = dict(data.get("run", {}))
    bad = set(run) - _RUN_KEYS
    if bad:
        raise ConfigError(f"unknown key(s) in [run]: {', '.join(sorted(bad))}")
    preset = data.get("preset", {}).get("include", "double_gauss")
    if preset not in PRESETS and base_dir is not None and not Path(preset).is_absolute():
        preset = str((base_dir / preset).resolve())
    cat = data.get("catalog", {})
    bad = set(cat) - {"path", "size"}
    if bad:
        raise ConfigError(f"unknown key(s) in [catalog]: {', '.join(sorted(bad))}")
    cat_path = cat.get("path")
    if cat_path is not None and base_dir is not None and not Path(cat_path).is_absolute():
        cat_path = str((base_dir / cat_path).resolve())
    merit = dict(data.get("merit", {}))
    bad = set(merit) - _MERIT_KEYS
    if bad:
        raise ConfigError(f"unknown key(s) in [merit]: {', '.join(sorted(bad))}")
    hv = dict(data.get("hvea", {}))
    bad = set(hv) - _HVEA_KEYS
    if bad:
        raise ConfigError(f"unknown key(s) in [hvea]: {', '.join(sorted(bad))}")
    try:
        return RunConfig(
            **run,
            preset=preset,
            catalog=cat_path,
            catalog_size=cat.get("size"),
            merit=merit,
            es=_section(EsConfig, data.get("es", {}), "es"),
            hvea=hv,
            baseline=_section(CmaConfig, data.get("baseline", {}), "baseline"),
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def parse_override(text: str) -> tuple[str, str, object]:
    """``"run.lam=8"`` -> ``("run", "lam", 8)``; values use TOML syntax, bare words are strings."""
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    lhs, rhs = text.split("=", 1)
    section, key = lhs.strip().split(".", 1)
    try:
        value = tomllib.loads(f"v = {rhs.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = rhs.strip()
    return section, key, value


def load_config(path: str | Path | None, overrides: list[str] = ()) -> RunConfig:
    data: dict = {}
    base = None
    if path is not None:
        p = Path(path)
        try:
            data = tomllib.loads(p.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config {p}: {exc}") from None
        base = p.parent
    for text in overrides:
        section, key, value = parse_override(text)
        if section == "preset" and key == "include":
            base_o = Path.cwd()
            if value not in PRESETS and not Path(value).is_absolute():
                value = str((base_o / value).resolve())
        data.setdefault(section, {})[key] = value
    return from_dict(data, base)


def build_catalog(cfg: RunConfig) -> GlassCatalog:
    try:
        cat = load_catalog(cfg.catalog)
    except (OSError, GlassCatalogError) as exc:
        raise ConfigError(f"cannot load glass catalog: {exc}") from None
    if cfg.catalog_size is not None:
        if not 1 <= cfg.catalog_size <= len(cat):
            raise ConfigError(f"catalog size {cfg.catalog_size} outside 1..{len(cat)}")
        cat = cat.subset(cfg.catalog_size)
    return cat


def build_problem(cfg: RunConfig) -> tuple[LensTemplate, LensProblem]:
    """Load catalog and preset and assemble the merit evaluator."""
    cat = build_catalog(cfg)
    try:
        template = load_preset(cfg.preset, cat)
    except (PresetError, GlassCatalogError, KeyError) as exc:
        raise ConfigError(f"cannot load preset {cfg.preset}: {exc}") from None
    try:
        merit = MeritConfig.for_template(template, **cfg.merit)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [merit] section: {exc}") from None
    return template, LensProblem(template, merit)


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **changes)
