"""Run configuration: one JSON document with model, numerics and output blocks.

Unknown keys are rejected by name and every default is written back out,
so a report carries the full provenance of its numbers.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace

from .distribution import DistributionParams, GermAnsatz
from .errors import ConfigError
from .foliation import DecomposeParams, TraceParams
from .grid import GridSpec
from .jets import BodyDomain
from .material import FSampler, IsoOptions
from .response import ResponseModel, ScalarProfile, radial_model
from .verify import VerifyParams

CONFIG_PROFILES = ("constant", "monotone", "plateau", "wiggle")


@dataclass(frozen=True)
class ModelConfig:
    profile: str = "monotone"
    s: float = 0.5
    c: float = 0.125
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 1.0

    def validate(self):
        if self.profile not in CONFIG_PROFILES:
            raise ConfigError(f"model.profile must be one of {CONFIG_PROFILES}, got {self.profile!r}")
        if not self.s > 0:
            raise ConfigError("model.s must be positive")
        if len(self.center) != 3:
            raise ConfigError("model.center must have three coordinates")
        if not self.radius > 0:
            raise ConfigError("model.radius must be positive")


@dataclass(frozen=True)
class NumericsConfig:
    seed: int | None = None
    f_samples: int = 6
    svd_tol: float | None = None
    fd_step: float = 1e-5
    analytic: bool = True
    ansatz_degree: int = 1
    neighborhood_radius: float = 0.05
    germ_points: int = 20
    flow_step: float = 1e-2
    n_steps: int = 2000
    decompose_steps: int = 200
    leaf_tol: float = 5e-3
    merge_tol: float = 2e-2
    accept_tol: float = 1e-6

    def validate(self):
        for name in ("fd_step", "neighborhood_radius", "flow_step", "leaf_tol", "merge_tol", "accept_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"numerics.{name} must be positive")
        if self.svd_tol is not None and not self.svd_tol > 0:
            raise ConfigError("numerics.svd_tol must be positive or null")
        if self.f_samples < 4:
            raise ConfigError("numerics.f_samples must be >= 4")
        if self.ansatz_degree not in (0, 1, 2):
            raise ConfigError("numerics.ansatz_degree must be 0, 1 or 2")
        for name in ("germ_points", "n_steps", "decompose_steps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"numerics.{name} must be >= 1")
        if self.seed is not None and (isinstance(self.seed, bool) or not isinstance(self.seed, int)):
            raise ConfigError("numerics.seed must be an integer")


@dataclass(frozen=True)
class OutputConfig:
    json: str | None = None
    csv: str | None = None


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        blocks = {"model": ModelConfig, "numerics": NumericsConfig, "output": OutputConfig}
        kw = {}
        for key, value in data.items():
            if key not in blocks:
                raise ConfigError(f"unknown config key {key!r}")
            kw[key] = _block(blocks[key], value, key)
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"]["center"] = list(d["model"]["center"])
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def validate(self):
        self.model.validate()
        self.numerics.validate()

    def with_overrides(self, model: dict | None = None, numerics: dict | None = None,
                       output: dict | None = None) -> "RunConfig":
        cfg = replace(
            self,
            model=replace(self.model, **(model or {})),
            numerics=replace(self.numerics, **(numerics or {})),
            output=replace(self.output, **(output or {})),
        )
        cfg.validate()
        return cfg

    def resolve_seed(self, env=None) -> "RunConfig":
        """Fill a missing seed from ``MATLEAF_SEED``; fail if still missing."""
        if self.numerics.seed is not None:
            return self
        env = os.environ if env is None else env
        raw = env.get("MATLEAF_SEED")
        if raw is None:
            raise ConfigError("numerics.seed is required (config, --seed or MATLEAF_SEED)")
        try:
            seed = int(raw)
        except ValueError as exc:
            raise ConfigError(f"MATLEAF_SEED must be an integer, got {raw!r}") from exc
        return replace(self, numerics=replace(self.numerics, seed=seed))

    # builders

    def build_model(self) -> ResponseModel:
        m = self.model
        profile = {
            "constant": ScalarProfile.constant,
            "monotone": ScalarProfile.monotone,
            "plateau": lambda: ScalarProfile.plateau(m.s),
            "wiggle": lambda: ScalarProfile.wiggle(m.c),
        }[m.profile]()
        model = radial_model(profile, BodyDomain(tuple(m.center), m.radius), self.numerics.fd_step)
        return model if self.numerics.analytic else model.without_analytic()

    def sampler(self) -> FSampler:
        return FSampler(self.numerics.f_samples, self.numerics.seed)

    def dist_params(self) -> DistributionParams:
        n = self.numerics
        ansatz = GermAnsatz(degree=n.ansatz_degree, neighborhood=n.neighborhood_radius, n_points=n.germ_points)
        return DistributionParams(sampler=self.sampler(), ansatz=ansatz, tol=n.svd_tol)

    def iso_options(self) -> IsoOptions:
        return IsoOptions(accept_tol=self.numerics.accept_tol, seed=self.numerics.seed)

    def trace_params(self, mode: str = "germ", n_steps: int | None = None) -> TraceParams:
        n = self.numerics
        return TraceParams(mode=mode, step=n.flow_step, n_steps=n.n_steps if n_steps is None else n_steps,
                           seed=n.seed, dist=self.dist_params())

    def decompose_params(self, grid: int = 7, mode: str = "germ") -> DecomposeParams:
        n = self.numerics
        return DecomposeParams(
            grid=GridSpec(n=grid),
            trace=self.trace_params(mode, n.decompose_steps),
            leaf_tol=n.leaf_tol,
            merge_tol=n.merge_tol,
            seed=n.seed,
            iso=self.iso_options(),
        )

    def verify_params(self) -> VerifyParams:
        n = self.numerics
        return VerifyParams(seed=n.seed, sampler=self.sampler(), tol=n.svd_tol, flow_step=n.flow_step,
                            accept_tol=n.accept_tol)


def _block(cls, value, name):
    if not isinstance(value, dict):
        raise ConfigError(f"config block {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    for key in value:
        if key not in known:
            raise ConfigError(f"unknown config key {name}.{key}")
    kw = dict(value)
    for f in fields(cls):
        if f.name in kw:
            _check_type(f"{name}.{f.name}", kw[f.name], f.type)
    if "center" in kw:
        kw["center"] = tuple(float(x) for x in kw["center"])
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"bad value in block {name!r}: {exc}") from exc


_TYPES = {
    "float": (int, float),
    "int": (int,),
    "str": (str,),
    "bool": (bool,),
    "tuple": (list, tuple),
}


def _check_type(key, value, annotation: str):
    parts = [p.strip() for p in str(annotation).split("|")]
    if value is None:
        if "None" in parts:
            return
        raise ConfigError(f"{key} must not be null")
    expected = _TYPES[parts[0]]
    bad = isinstance(value, bool) and bool not in expected
    if bad or not isinstance(value, expected):
        raise ConfigError(f"{key} has the wrong type ({type(value).__name__})")
    if parts[0] == "tuple" and not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value):
        raise ConfigError(f"{key} must be a list of numbers")
