"""Experiment configuration: INI-style sections or the equivalent JSON object.

Every INI value is read as JSON when it parses as JSON and as a bare string
otherwise, so ``mean = [0.0, 1.0]`` and ``family = gaussian`` both work.
Schema errors carry the file name and, for INI files, the line of the
offending key.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..bounds import ProfileParams
from ..errors import ConfigError, KimflowError
from ..flow import FlowConfig
from ..measures import (Gaussian, GaussianMixture, PerturbedSLC, TargetMeasure,
                        mixture_lipschitz_bound)
from ..ou import ThetaProfile

EXPERIMENTS = ("stability_l2", "stability_linf", "fi_decay", "theta_check", "constants_table")

SCHEMA: dict[str, set[str]] = {
    "experiment": {"kind", "n", "seed", "mcmc", "name"},
    "mu": {"family", "dim", "mean", "cov", "means", "weights", "precision",
           "tilt_means", "tilt_weights"},
    "nu": {"family", "dim", "mean", "cov", "means", "weights", "precision",
           "tilt_means", "tilt_weights"},
    "profile": {"family", "alpha", "L", "gprime0", "alpha_V", "L_V", "R_V"},
    "flow": {"T", "steps", "scheme", "schedule", "init_mode"},
    "decay": {"times"},
    "theta_check": {"times", "probes", "radius", "random_targets", "max_dim", "max_components"},
    "constants": {"alphas", "Ls", "convexity_alphas", "gprime0s", "profile_params",
                  "lsi_times", "T"},
    "output": {"dir", "stem"},
}

DEFAULT_DECAY_TIMES = [0.0, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0]
DEFAULT_THETA_TIMES = [0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0]


@dataclass
class ExperimentConfig:
    kind: str
    mu: TargetMeasure | None = None
    nu: TargetMeasure | None = None
    profile: ThetaProfile | None = None
    profile_source: str = "explicit"
    flow: FlowConfig = field(default_factory=FlowConfig)
    n: int = 10_000
    seed: int = 0
    mcmc: bool = False
    name: str | None = None
    decay_times: list[float] = field(default_factory=lambda: list(DEFAULT_DECAY_TIMES))
    theta_check: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    out_dir: str | None = None
    stem: str | None = None

    def describe(self) -> dict:
        """Canonical, output-independent description (used for hashing and reports)."""
        out: dict[str, Any] = {"experiment": {"kind": self.kind, "n": self.n, "seed": self.seed,
                                              "mcmc": self.mcmc}}
        if self.mu is not None:
            out["mu"] = self.mu.describe()
        if self.nu is not None:
            out["nu"] = self.nu.describe()
        if self.profile is not None:
            out["profile"] = dict(self.profile.describe(), source=self.profile_source)
        if self.kind in ("stability_l2", "stability_linf"):
            out["flow"] = self.flow.describe()
        if self.kind == "fi_decay":
            out["decay"] = {"times": list(self.decay_times)}
        if self.kind == "theta_check":
            out["theta_check"] = dict(self.theta_check)
        if self.kind == "constants_table":
            out["constants"] = dict(self.constants)
        return out

    def config_hash(self) -> str:
        from .reports import jsonable
        blob = json.dumps(jsonable(self.describe()), sort_keys=True, separators=(",", ":"), allow_nan=False)
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, *, seed: int | None = None, out_dir: str | None = None) -> "ExperimentConfig":
        from dataclasses import replace
        kw = {}
        if seed is not None:
            kw["seed"] = int(seed)
        if out_dir is not None:
            kw["out_dir"] = out_dir
        return replace(self, **kw)


class _Loc:
    """Maps (section, key) to a line number in the source text."""

    def __init__(self, source: str, text: str | None, is_ini: bool):
        self.source = source
        self.lines: dict[tuple[str, str | None], int] = {}
        if text is None or not is_ini:
            return
        section = None
        for i, line in enumerate(text.splitlines(), 1):
            s = line.strip()
            m = re.match(r"^\[([^\]]+)\]", s)
            if m:
                section = m.group(1).strip()
                self.lines[(section, None)] = i
                continue
            m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", s)
            if m and section is not None:
                self.lines[(section, m.group(1).strip())] = i

    def error(self, msg: str, section: str, key: str | None = None) -> ConfigError:
        line = self.lines.get((section, key), self.lines.get((section, None)))
        where = f"[{section}]" + (f" {key}" if key else "")
        return ConfigError(f"{where}: {msg}", self.source, line)


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        pass
    try:
        # allow bare inf inside lists, e.g. lsi_times = [0.1, inf]
        return json.loads(re.sub(r"(?<![\w.])([+-]?)inf(inity)?(?![\w.])", r"\1Infinity", raw,
                                 flags=re.IGNORECASE))
    except json.JSONDecodeError:
        low = raw.strip().lower()
        if low in ("true", "yes", "on"):
            return True
        if low in ("false", "no", "off"):
            return False
        if low in ("inf", "+inf", "infinity"):
            return math.inf
        return raw.strip()


def read_sections(path: str | Path) -> tuple[dict[str, dict[str, Any]], _Loc]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_text(text, str(path), json_format=path.suffix.lower() == ".json")


def parse_text(text: str, source: str = "<config>", json_format: bool | None = None):
    if json_format is None:
        json_format = text.lstrip().startswith("{")
    if json_format:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", source, exc.lineno) from None
        if not isinstance(data, dict) or not all(isinstance(v, dict) for v in data.values()):
            raise ConfigError("top level must be an object of section objects", source)
        return data, _Loc(source, text, is_ini=False)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str   # keep key case (L, T, R_V)
    try:
        parser.read_string(text, source=source)
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", source, line) from None
    except configparser.Error as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(exc.message.split("\n")[0] if hasattr(exc, "message") else str(exc),
                          source, int(m.group(1)) if m else None) from None
    data = {s: {k: _parse_value(v) for k, v in parser.items(s)} for s in parser.sections()}
    return data, _Loc(source, text, is_ini=True)


def _vector(val, loc: _Loc, section: str, key: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(val, dtype=float)) if _numeric(val) else None
    if arr is None or arr.ndim != 1:
        raise loc.error("expected a number or a list of numbers", section, key)
    return arr


def _numeric(val) -> bool:
    try:
        np.asarray(val, dtype=float)
        return True
    except (TypeError, ValueError):
        return False


def _matrix(val, d: int, loc: _Loc, section: str, key: str) -> np.ndarray:
    """Scalar -> c I, flat list -> diagonal, nested list -> matrix."""
    if not _numeric(val):
        raise loc.error("expected a number, a diagonal list or a matrix", section, key)
    arr = np.asarray(val, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(d)
    if arr.ndim == 1:
        if arr.shape[0] != d:
            raise loc.error(f"diagonal has length {arr.shape[0]}, expected {d}", section, key)
        return np.diag(arr)
    if arr.shape != (d, d):
        raise loc.error(f"matrix has shape {arr.shape}, expected ({d}, {d})", section, key)
    return arr


def _points_array(val, loc, section, key) -> np.ndarray:
    if not _numeric(val):
        raise loc.error("expected a list of points", section, key)
    arr = np.asarray(val, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise loc.error("expected a list of points", section, key)
    return arr


def build_measure(sec: dict[str, Any], loc: _Loc, section: str) -> TargetMeasure:
    family = sec.get("family")
    if family is None:
        raise loc.error("missing 'family'", section)
    try:
        if family == "gaussian":
            if "mean" not in sec:
                raise loc.error("gaussian needs 'mean'", section)
            mean = _vector(sec["mean"], loc, section, "mean")
            if "dim" in sec and mean.shape[0] == 1 and int(sec["dim"]) > 1:
                mean = np.full(int(sec["dim"]), mean[0])
            cov = _matrix(sec.get("cov", 1.0), mean.shape[0], loc, section, "cov")
            return Gaussian(mean, cov)
        if family == "gaussian_mixture":
            if "means" not in sec:
                raise loc.error("gaussian_mixture needs 'means'", section)
            means = _points_array(sec["means"], loc, section, "means")
            cov = _matrix(sec.get("cov", 1.0), means.shape[1], loc, section, "cov")
            weights = sec.get("weights")
            return GaussianMixture(means, cov, None if weights is None else
                                   _vector(weights, loc, section, "weights"))
        if family == "perturbed_slc":
            if "tilt_means" not in sec:
                raise loc.error("perturbed_slc from a config file needs 'tilt_means' "
                                "(callable perturbations are only available from Python)", section)
            tm = _points_array(sec["tilt_means"], loc, section, "tilt_means")
            A = _matrix(sec.get("precision", 1.0), tm.shape[1], loc, section, "precision")
            tw = sec.get("tilt_weights")
            return PerturbedSLC(A, tm, None if tw is None else _vector(tw, loc, section, "tilt_weights"))
    except ConfigError:
        raise
    except KimflowError as exc:
        raise loc.error(str(exc), section) from None
    raise loc.error(f"unknown family {family!r} (gaussian | gaussian_mixture | perturbed_slc)",
                    section, "family")


def auto_profile(m: TargetMeasure) -> ThetaProfile:
    """Theta profile derived from the structure of ``m``."""
    if isinstance(m, Gaussian):
        return ThetaProfile.slc(float(np.linalg.eigvalsh(m.precision)[0]))
    if isinstance(m, GaussianMixture):
        alpha, _, L = mixture_lipschitz_bound(m)
        return ThetaProfile.perturbed(alpha, L)
    return ThetaProfile.perturbed(m.alpha, m.lipschitz)


def build_profile(sec: dict[str, Any] | None, mu: TargetMeasure | None,
                  loc: _Loc) -> tuple[ThetaProfile | None, str]:
    family = (sec or {}).get("family", "auto")
    if family == "auto":
        if mu is None:
            return None, "none"
        return auto_profile(mu), "auto"
    try:
        if family == "convexity_profile" and "alpha_V" in sec:
            pp = ProfileParams(float(sec["alpha_V"]), float(sec.get("L_V", 0.0)), float(sec.get("R_V", 0.0)))
            return pp.to_theta_profile(), "profile_params"
        if "alpha" not in sec:
            raise loc.error(f"{family} profile needs 'alpha'", "profile")
        return ThetaProfile(str(family), float(sec["alpha"]), L=float(sec.get("L", 0.0)),
                            gprime0=float(sec.get("gprime0", 0.0))), "explicit"
    except ConfigError:
        raise
    except (KimflowError, TypeError, ValueError) as exc:
        raise loc.error(str(exc), "profile") from None


def _int(val, loc, section, key, minimum=1) -> int:
    if isinstance(val, bool) or not isinstance(val, (int, float)) or int(val) != val or val < minimum:
        raise loc.error(f"expected an integer >= {minimum}", section, key)
    return int(val)


def _float_list(val, loc, section, key) -> list[float]:
    arr = _vector(val, loc, section, key)
    return [float(x) for x in arr]


def from_sections(data: dict[str, dict[str, Any]], loc: _Loc, kind: str | None = None) -> ExperimentConfig:
    for section, keys in data.items():
        if section not in SCHEMA:
            raise loc.error(f"unknown section (expected one of {sorted(SCHEMA)})", section)
        for key in keys:
            if key not in SCHEMA[section]:
                raise loc.error(f"unknown key (allowed: {sorted(SCHEMA[section])})", section, key)

    exp = data.get("experiment", {})
    file_kind = exp.get("kind")
    if kind is None:
        kind = file_kind
    elif file_kind is not None and file_kind != kind:
        raise loc.error(f"config is for {file_kind!r}, not {kind!r}", "experiment", "kind")
    if kind not in EXPERIMENTS:
        raise loc.error(f"experiment kind must be one of {EXPERIMENTS}", "experiment", "kind")

    cfg = ExperimentConfig(kind=kind)
    if "n" in exp:
        cfg.n = _int(exp["n"], loc, "experiment", "n", minimum=2)
    if "seed" in exp:
        cfg.seed = _int(exp["seed"], loc, "experiment", "seed", minimum=0)
    cfg.mcmc = bool(exp.get("mcmc", False))
    cfg.name = exp.get("name")

    if "mu" in data:
        cfg.mu = build_measure(data["mu"], loc, "mu")
    if "nu" in data:
        cfg.nu = build_measure(data["nu"], loc, "nu")
    if cfg.mu is not None and cfg.nu is not None and cfg.mu.dim != cfg.nu.dim:
        raise loc.error(f"dimension {cfg.nu.dim} differs from mu's {cfg.mu.dim}", "nu")
    needs_pair = kind in ("stability_l2", "stability_linf", "fi_decay")
    if needs_pair and (cfg.mu is None or cfg.nu is None):
        raise loc.error(f"{kind} needs both [mu] and [nu]", "experiment", "kind")
    cfg.profile, cfg.profile_source = build_profile(data.get("profile"), cfg.mu, loc)
    if needs_pair and cfg.profile is None:
        raise loc.error("no theta profile could be determined", "profile")

    if "flow" in data:
        f = data["flow"]
        try:
            cfg.flow = FlowConfig(
                T=float(f.get("T", 10.0)),
                steps=_int(f.get("steps", 400), loc, "flow", "steps", minimum=10),
                scheme=str(f.get("scheme", "rk4")), schedule=str(f.get("schedule", "uniform_t")),
                init_mode=str(f.get("init_mode", "shared_gamma")))
        except ConfigError:
            raise
        except (KimflowError, TypeError, ValueError) as exc:
            raise loc.error(str(exc), "flow") from None

    if "decay" in data and "times" in data["decay"]:
        cfg.decay_times = _float_list(data["decay"]["times"], loc, "decay", "times")

    tc = data.get("theta_check", {})
    cfg.theta_check = {
        "times": _float_list(tc["times"], loc, "theta_check", "times") if "times" in tc
        else list(DEFAULT_THETA_TIMES),
        "probes": _int(tc.get("probes", 200), loc, "theta_check", "probes"),
        "radius": float(tc.get("radius", 4.0)),
        "random_targets": _int(tc.get("random_targets", 0), loc, "theta_check", "random_targets", 0),
        "max_dim": _int(tc.get("max_dim", 3), loc, "theta_check", "max_dim"),
        "max_components": _int(tc.get("max_components", 4), loc, "theta_check", "max_components"),
    }
    if kind == "theta_check" and cfg.mu is None and cfg.theta_check["random_targets"] == 0:
        raise loc.error("theta_check needs [mu] or random_targets > 0", "theta_check")

    c = data.get("constants", {})
    cfg.constants = {
        "alphas": _float_list(c.get("alphas", [0.5, 1.0, 2.0]), loc, "constants", "alphas"),
        "Ls": _float_list(c.get("Ls", [0.0, 0.3, 1.0]), loc, "constants", "Ls"),
        "convexity_alphas": _float_list(c.get("convexity_alphas", [0.0, 1.0]), loc, "constants",
                                        "convexity_alphas"),
        "gprime0s": _float_list(c.get("gprime0s", [0.0, 1.0]), loc, "constants", "gprime0s"),
        "profile_params": [list(map(float, row)) for row in c.get(
            "profile_params", [[1.0, 0.1, 0.1], [1.0, 1.0, 1.0], [1.0, 10.0, 10.0]])],
        "lsi_times": _float_list(c.get("lsi_times", [0.1, 1.0, math.inf]), loc, "constants", "lsi_times"),
        "T": float(c.get("T", 20.0)),
    }
    for row in cfg.constants["profile_params"]:
        if len(row) != 3:
            raise loc.error("each profile_params row is [alpha_V, L_V, R_V]", "constants", "profile_params")

    out = data.get("output", {})
    cfg.out_dir = out.get("dir")
    cfg.stem = out.get("stem")
    return cfg


def load_config(path: str | Path, kind: str | None = None) -> ExperimentConfig:
    data, loc = read_sections(path)
    return from_sections(data, loc, kind)


def loads_config(text: str, kind: str | None = None, source: str = "<config>") -> ExperimentConfig:
    data, loc = parse_text(text, source)
    return from_sections(data, loc, kind)
