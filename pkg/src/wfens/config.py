"""JSON experiment configuration: schema, domain validation, object builders."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .dynamics import Protocol, constant_protocol, linear_protocol, sudden_protocol
from .ensembles import EnsembleSpec
from .errors import WfensError
from .lzmodel import LZParams, lz_hamiltonian, lz_protocol
from .statespace import ParameterizedHamiltonian, linear_hamiltonian

EXPERIMENTS = (
    "sample-ensemble", "work-dist", "jarzynski", "crooks", "micro-fr", "thermo-scan", "fig1a", "fig1b",
)
MANIFEST_KEY = "wfens_manifest"

Params = Union[float, list[float]]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LZModel(_Strict):
    type: Literal["lz"] = "lz"
    delta: float = Field(1.0, gt=0)
    v: float = Field(1.0, gt=0)
    T: float = Field(5.0, gt=0)


class Matrix(_Strict):
    re: list[list[float]]
    im: list[list[float]] | None = None

    def array(self) -> np.ndarray:
        a = np.asarray(self.re, dtype=float)
        if self.im is not None:
            a = a + 1j * np.asarray(self.im, dtype=float)
        return a


class MatrixModel(_Strict):
    type: Literal["matrices"]
    h0: Matrix
    terms: list[Matrix] = Field(min_length=1)
    bounds: list[tuple[float, float]] | None = None

    @model_validator(mode="after")
    def _shapes(self):
        shape = self.h0.array().shape
        if len(shape) != 2 or shape[0] != shape[1] or shape[0] < 2:
            raise ValueError(f"h0 must be square with N >= 2, got {shape}")
        for t in self.terms:
            if t.array().shape != shape:
                raise ValueError(f"term shape {t.array().shape} differs from h0 {shape}")
        if self.bounds is not None and len(self.bounds) != len(self.terms):
            raise ValueError("need one bound pair per term")
        return self


class EnsembleConfig(_Strict):
    kind: Literal["uniform", "canonical", "microcanonical", "standard_gibbs"]
    beta: float | None = Field(None, gt=0)
    energy: float | None = None
    lam: Params | None = None

    @model_validator(mode="after")
    def _fields(self):
        if self.kind in ("canonical", "standard_gibbs") and self.beta is None:
            raise ValueError(f"{self.kind} ensemble needs beta")
        if self.kind == "microcanonical" and self.energy is None:
            raise ValueError("microcanonical ensemble needs energy")
        return self


class LZSweep(_Strict):
    type: Literal["lz_half_sweep"]


class ConstantProtocol(_Strict):
    type: Literal["constant"]
    lam: Params
    tau: float = Field(ge=0)


class LinearProtocol(_Strict):
    type: Literal["linear"]
    start: Params
    end: Params
    tau: float = Field(gt=0)


class SuddenProtocol(_Strict):
    type: Literal["sudden"]
    start: Params
    end: Params


ProtocolConfig = Annotated[
    Union[LZSweep, ConstantProtocol, LinearProtocol, SuddenProtocol], Field(discriminator="type")
]


class Grid(_Strict):
    start: float
    stop: float
    num: int = Field(ge=1)

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.num)


GridLike = Union[Grid, list[float]]


def grid_values(g: GridLike | None) -> np.ndarray | None:
    if g is None:
        return None
    return g.values() if isinstance(g, Grid) else np.asarray(g, dtype=float)


class ExperimentConfig(_Strict):
    experiment: Literal[EXPERIMENTS]  # type: ignore[valid-type]
    model: Annotated[Union[LZModel, MatrixModel], Field(discriminator="type")] = LZModel()
    ensemble: EnsembleConfig | None = None
    protocol: ProtocolConfig | None = None
    beta: float = Field(1.0, gt=0)
    M: int = Field(100_000, ge=1)
    steps: int = Field(4096, ge=1)
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)
    output: str = "wfens_out"
    bins: Union[Literal["fd"], Annotated[float, Field(gt=0)]] = "fd"
    bar_width: float = Field(0.25, gt=0)
    lambda_grid: GridLike | None = None
    beta_grid: GridLike | None = None
    energy_grid: GridLike | None = None
    scan: Literal["canonical", "microcanonical"] = "canonical"
    energy: float | None = None
    w_targets: list[float] | None = None
    fr_width: float = Field(0.05, gt=0)
    min_count: int = Field(25, ge=1)

    @model_validator(mode="after")
    def _requirements(self):
        need = {
            "sample-ensemble": ("ensemble",),
            "work-dist": ("ensemble", "protocol"),
            "jarzynski": ("ensemble", "protocol"),
            "crooks": ("protocol",),
            "micro-fr": ("protocol", "energy", "w_targets"),
            "fig1a": ("lambda_grid",),
        }.get(self.experiment, ())
        for name in need:
            if getattr(self, name) is None:
                raise ValueError(f"experiment {self.experiment!r} requires field {name!r}")
        if self.experiment in ("fig1a", "fig1b") and not isinstance(self.model, LZModel):
            raise ValueError(f"{self.experiment} needs the lz model")
        if isinstance(self.protocol, LZSweep) and not isinstance(self.model, LZModel):
            raise ValueError("lz_half_sweep protocol needs the lz model")
        if self.experiment == "thermo-scan":
            grid = "beta_grid" if self.scan == "canonical" else "energy_grid"
            for name in (grid, "lambda_grid"):
                if getattr(self, name) is None:
                    raise ValueError(f"{self.scan} thermo-scan requires field {name!r}")
        return self


class ConfigError(WfensError):
    """Invalid configuration; ``problems`` lists ``(field path, message)`` pairs."""

    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{p}: {m}" for p, m in problems))


def _loc(loc) -> str:
    return ".".join(str(x) for x in loc) or "<root>"


def parse_config(data: dict) -> ExperimentConfig:
    if isinstance(data, dict) and MANIFEST_KEY in data:
        data = data["config"]
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError([(_loc(e["loc"]), e["msg"]) for e in exc.errors()]) from None


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([(f"line {exc.lineno} column {exc.colno}", exc.msg)]) from None
    if isinstance(data, dict) and MANIFEST_KEY in data:
        data = dict(data["config"])
    if overrides:
        data = {**data, **overrides}
    return parse_config(data)


# ------------------------------------------------------------------ builders

def build_hamiltonian(cfg: ExperimentConfig) -> ParameterizedHamiltonian:
    m = cfg.model
    if isinstance(m, LZModel):
        return lz_hamiltonian(m.delta)
    return linear_hamiltonian(m.h0.array(), [t.array() for t in m.terms], bounds=m.bounds)


def lz_params(cfg: ExperimentConfig) -> LZParams:
    m = cfg.model
    return LZParams(delta=m.delta, v=m.v, T=m.T, beta=cfg.beta)


def build_protocol(cfg: ExperimentConfig, H: ParameterizedHamiltonian) -> Protocol | None:
    p = cfg.protocol
    if p is None:
        return None
    if isinstance(p, LZSweep):
        return lz_protocol(lz_params(cfg))[1]
    if isinstance(p, ConstantProtocol):
        return constant_protocol(H, p.lam, p.tau)
    if isinstance(p, LinearProtocol):
        return linear_protocol(H, p.start, p.end, p.tau)
    return sudden_protocol(H, p.start, p.end)


def build_ensemble(cfg: ExperimentConfig, H: ParameterizedHamiltonian, protocol: Protocol | None) -> EnsembleSpec | None:
    e = cfg.ensemble
    if e is None:
        return None
    if e.kind == "uniform":
        return EnsembleSpec("uniform", H, lam=e.lam, dim=H.dim)
    lam = e.lam
    if lam is None:
        lam = protocol.start if protocol is not None else np.zeros(H.n_params)
    return EnsembleSpec(e.kind, H, lam=lam, beta=e.beta, energy=e.energy)


def validate_domain(cfg: ExperimentConfig) -> None:
    """Checks that need the model built: spectra, parameter bounds, protocol continuity."""
    problems: list[tuple[str, str]] = []
    try:
        H = build_hamiltonian(cfg)
    except WfensError as exc:
        raise ConfigError([("model", str(exc))]) from None
    protocol = None
    try:
        protocol = build_protocol(cfg, H)
        if protocol is not None and not protocol.is_continuous():
            problems.append(("protocol", "schedule is discontinuous"))
    except WfensError as exc:
        problems.append(("protocol", str(exc)))
    try:
        build_ensemble(cfg, H, protocol)
    except WfensError as exc:
        field = "ensemble.energy" if cfg.ensemble and cfg.ensemble.kind == "microcanonical" else "ensemble"
        problems.append((field, str(exc)))
    if cfg.experiment == "micro-fr" and protocol is not None:
        e0 = H.spectrum(protocol.start)
        e1 = H.spectrum(protocol.end)
        if not e0[0] < cfg.energy < e0[-1]:
            problems.append(("energy", f"{cfg.energy} outside open spectrum ({e0[0]}, {e0[-1]})"))
        for i, w in enumerate(cfg.w_targets):
            if not e1[0] < cfg.energy + w < e1[-1]:
                problems.append((f"w_targets.{i}", f"E + w = {cfg.energy + w} outside open spectrum of H(lam_tau)"))
    if cfg.experiment == "thermo-scan" and cfg.scan == "microcanonical":
        for lam in grid_values(cfg.lambda_grid):
            ev = H.spectrum(lam)
            for E in grid_values(cfg.energy_grid):
                if not ev[0] < E < ev[-1]:
                    problems.append(("energy_grid", f"E = {E} outside open spectrum at lam = {lam}"))
    if cfg.experiment in ("jarzynski",) and cfg.ensemble is not None and cfg.ensemble.kind != "canonical":
        problems.append(("ensemble.kind", "jarzynski needs a canonical ensemble"))
    if cfg.experiment == "work-dist" and cfg.ensemble is not None and cfg.ensemble.kind == "standard_gibbs":
        problems.append(("ensemble.kind", "expectation work needs a wave-function ensemble"))
    if problems:
        raise ConfigError(problems)
