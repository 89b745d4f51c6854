"""JSON run configuration: parsing, defaults and validation.

Every error is a :class:`ConfigError` naming the offending key and, when it
can be located, the line of the source file.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from .model import ModelParams, ParameterError, RadialDisk, Rectangle, critical_mass


class ConfigError(ValueError):
    pass


@dataclass
class InitialSpec:
    kind: str = "homogeneous"
    perturbation: float = 0.0
    eta: float = 0.2
    variant: Optional[str] = None
    path: Optional[str] = None
    amplitude: float = 0.05


@dataclass
class StepSpec:
    tau: Optional[float] = None
    positivity_floor: float = 0.0
    max_drift_cfl: float = 0.4


@dataclass
class SteadySpec:
    init: str = "constant"
    eta: float = 0.2
    variant: Optional[str] = None
    damping: float = 0.5
    tol: float = 1e-10
    max_iter: int = 10_000


@dataclass
class SweepSpec:
    etas: List[float] = field(default_factory=lambda: [0.4, 0.2, 0.1, 0.05])
    variant: Optional[str] = None


@dataclass
class AuditSpec:
    tau: float = 0.02
    horizon: float = 0.2
    warmup: float = 1.0
    warmup_tau: Optional[float] = None


@dataclass
class RunConfig:
    params: ModelParams
    domain: Any
    resolution: List[int]
    initial: InitialSpec = field(default_factory=InitialSpec)
    T: float = 10.0
    every: int = 10
    seed: int = 0
    step: StepSpec = field(default_factory=StepSpec)
    output: str = "out"
    sentinel_cells: float = 4.0
    steady: SteadySpec = field(default_factory=SteadySpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    audit: AuditSpec = field(default_factory=AuditSpec)

    @property
    def radial(self) -> bool:
        return isinstance(self.domain, RadialDisk)

    @property
    def default_variant(self) -> str:
        return "disk_center" if self.radial else "flat_boundary"

    def to_dict(self) -> Dict[str, Any]:
        if self.radial:
            domain = {"type": "disk", "R": self.domain.R}
        else:
            domain = {"type": "rectangle", "Lx": self.domain.Lx, "Ly": self.domain.Ly}
        out = {
            "params": asdict(self.params),
            "domain": domain,
            "resolution": list(self.resolution),
            "initial": asdict(self.initial),
            "T": self.T,
            "every": self.every,
            "seed": self.seed,
            "step": asdict(self.step),
            "output": self.output,
            "sentinel_cells": self.sentinel_cells,
            "steady": asdict(self.steady),
            "sweep": asdict(self.sweep),
            "audit": asdict(self.audit),
        }
        out["initial"]["type"] = out["initial"].pop("kind")
        return out


def _locate(text: Optional[str], key: str) -> str:
    if not text:
        return ""
    for lineno, line in enumerate(text.splitlines(), 1):
        if re.search(r'"%s"\s*:' % re.escape(key), line):
            return f" (line {lineno})"
    return ""


class _Reader:
    def __init__(self, text):
        self.text = text

    def fail(self, path, message):
        key = path.rsplit(".", 1)[-1]
        raise ConfigError(f"{path}: {message}{_locate(self.text, key)}")

    def section(self, data, key, path=""):
        value = data.get(key, {})
        if not isinstance(value, dict):
            self.fail(path + key, "expected an object")
        self.known(value, SECTION_KEYS[key], path + key + ".")
        return value

    def known(self, data, allowed, path=""):
        for key in data:
            if key not in allowed:
                self.fail(f"{path}{key}", f"unknown key (expected one of {sorted(allowed)})")

    def number(self, data, key, path, default=None, positive=False, nonnegative=False,
               required=False, integer=False):
        full = f"{path}{key}"
        if key not in data or data[key] is None:
            if required:
                self.fail(full, "is required")
            return default
        value = data[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(full, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            self.fail(full, "must be finite")
        if integer and int(value) != value:
            self.fail(full, f"expected an integer, got {value!r}")
        if positive and not value > 0:
            self.fail(full, f"must be positive, got {value!r}")
        if nonnegative and value < 0:
            self.fail(full, f"must be nonnegative, got {value!r}")
        return int(value) if integer else float(value)

    def choice(self, data, key, path, options, default):
        value = data.get(key, default)
        if value is not None and value not in options:
            self.fail(f"{path}{key}", f"must be one of {sorted(options)}, got {value!r}")
        return value


VARIANTS = {"disk_center", "flat_boundary"}
TOP_KEYS = {"params", "domain", "resolution", "initial", "T", "every", "seed", "step", "output",
            "sentinel_cells", "steady", "sweep", "audit"}
SECTION_KEYS = {
    "params": {"D", "alpha", "theta", "M", "mass_ratio"},
    "domain": {"type", "R", "Lx", "Ly"},
    "initial": {"type", "perturbation", "eta", "variant", "path", "amplitude"},
    "step": {"tau", "positivity_floor", "max_drift_cfl"},
    "steady": {"init", "eta", "variant", "damping", "tol", "max_iter"},
    "sweep": {"etas", "variant"},
    "audit": {"tau", "horizon", "warmup", "warmup_tau"},
}


def parse_config(data: Dict[str, Any], text: Optional[str] = None) -> RunConfig:
    rd = _Reader(text)
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    rd.known(data, TOP_KEYS)

    dom = rd.section(data, "domain")
    kind = rd.choice(dom, "type", "domain.", {"disk", "rectangle"}, "disk")
    try:
        if kind == "disk":
            domain = RadialDisk(rd.number(dom, "R", "domain.", 1.0, positive=True))
        else:
            domain = Rectangle(rd.number(dom, "Lx", "domain.", 1.0, positive=True),
                               rd.number(dom, "Ly", "domain.", 1.0, positive=True))
    except ParameterError as exc:
        raise ConfigError(f"domain: {exc}") from exc

    par = rd.section(data, "params")
    D = rd.number(par, "D", "params.", 1.0, positive=True)
    alpha = rd.number(par, "alpha", "params.", 1.0, positive=True)
    theta = rd.number(par, "theta", "params.", 1.0, positive=True)
    M = rd.number(par, "M", "params.", None, positive=True)
    ratio = rd.number(par, "mass_ratio", "params.", None, positive=True)
    if (M is None) == (ratio is None):
        rd.fail("params.M", "give exactly one of M or mass_ratio")
    if M is None:
        probe = ModelParams(D, alpha, theta, 1.0)
        M = ratio * critical_mass(probe, radial=kind == "disk")
    params = ModelParams(D, alpha, theta, M)

    res = data.get("resolution", [128] if kind == "disk" else [64, 64])
    if isinstance(res, int):
        res = [res]
    want = 1 if kind == "disk" else 2
    if (not isinstance(res, list) or len(res) != want
            or any(isinstance(k, bool) or not isinstance(k, int) or k < 4 for k in res)):
        rd.fail("resolution", f"expected {want} integer(s) >= 4, got {res!r}")

    ini = rd.section(data, "initial")
    initial = InitialSpec(
        kind=rd.choice(ini, "type", "initial.",
                       {"homogeneous", "bubble", "file", "steady_perturbation"}, "homogeneous"),
        perturbation=rd.number(ini, "perturbation", "initial.", 0.0, nonnegative=True),
        eta=rd.number(ini, "eta", "initial.", 0.2, positive=True),
        variant=rd.choice(ini, "variant", "initial.", VARIANTS, None),
        path=ini.get("path"),
        amplitude=rd.number(ini, "amplitude", "initial.", 0.05, nonnegative=True),
    )
    if initial.kind == "file" and not initial.path:
        rd.fail("initial.path", "is required for initial.type = file")
    if initial.kind == "bubble" and not 0 < initial.eta < 1:
        rd.fail("initial.eta", "must lie in (0, 1)")

    st = rd.section(data, "step")
    step = StepSpec(
        tau=rd.number(st, "tau", "step.", None, positive=True),
        positivity_floor=rd.number(st, "positivity_floor", "step.", 0.0, nonnegative=True),
        max_drift_cfl=rd.number(st, "max_drift_cfl", "step.", 0.4, positive=True),
    )

    sd = rd.section(data, "steady")
    steady = SteadySpec(
        init=rd.choice(sd, "init", "steady.", {"constant", "bubble"}, "constant"),
        eta=rd.number(sd, "eta", "steady.", 0.2, positive=True),
        variant=rd.choice(sd, "variant", "steady.", VARIANTS, None),
        damping=rd.number(sd, "damping", "steady.", 0.5, positive=True),
        tol=rd.number(sd, "tol", "steady.", 1e-10, positive=True),
        max_iter=rd.number(sd, "max_iter", "steady.", 10_000, positive=True, integer=True),
    )
    if steady.damping > 1:
        rd.fail("steady.damping", "must lie in (0, 1]")

    sw = rd.section(data, "sweep")
    etas = sw.get("etas", [0.4, 0.2, 0.1, 0.05])
    if (not isinstance(etas, list) or not etas
            or any(isinstance(e, bool) or not isinstance(e, (int, float)) for e in etas)):
        rd.fail("sweep.etas", "expected a non-empty list of numbers")
    if any(not 0 < e < 1 for e in etas):
        rd.fail("sweep.etas", "every eta must lie in (0, 1)")
    if any(b >= a for a, b in zip(etas, etas[1:])):
        rd.fail("sweep.etas", f"must be strictly decreasing, got {etas}")
    sweep = SweepSpec(etas=[float(e) for e in etas],
                      variant=rd.choice(sw, "variant", "sweep.", VARIANTS, None))

    au = rd.section(data, "audit")
    audit = AuditSpec(
        tau=rd.number(au, "tau", "audit.", 0.02, positive=True),
        horizon=rd.number(au, "horizon", "audit.", 0.2, positive=True),
        warmup=rd.number(au, "warmup", "audit.", 1.0, nonnegative=True),
        warmup_tau=rd.number(au, "warmup_tau", "audit.", None, positive=True),
    )

    return RunConfig(
        params=params,
        domain=domain,
        resolution=list(res),
        initial=initial,
        T=rd.number(data, "T", "", 10.0, positive=True),
        every=rd.number(data, "every", "", 10, positive=True, integer=True),
        seed=rd.number(data, "seed", "", 0, nonnegative=True, integer=True),
        step=step,
        output=str(data.get("output", "out")),
        sentinel_cells=rd.number(data, "sentinel_cells", "", 4.0, nonnegative=True),
        steady=steady,
        sweep=sweep,
        audit=audit,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        return parse_config(data, text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
