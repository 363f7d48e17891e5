"""Study configuration: parsing, validation and serialization.

A config is a TOML (or JSON) document. Every problem found is reported at
once through ``ConfigError.errors``. The key reference with defaults is in
the README.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .noise import (
    Composite,
    ConfusionMatrix,
    CoherentRotation,
    Depolarizing,
    NoiseChannel,
    ProbabilisticIswap,
    symmetric_confusion,
)

STUDIES = ("qdt", "qst", "threshold", "budget", "qrem3", "correlation", "baseline")
DEFAULT_QUBITS = {"qdt": 1, "qst": 1, "threshold": 2, "budget": 1, "qrem3": 3,
                  "correlation": 2, "baseline": 2}


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


# -- field checkers ----------------------------------------------------------

def _int(lo: int | None = None, hi: int | None = None) -> Callable[[Any], int]:
    def check(v):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ValueError(f"must be an integer, got {v!r}")
        if lo is not None and v < lo:
            raise ValueError(f"must be >= {lo}, got {v}")
        if hi is not None and v > hi:
            raise ValueError(f"must be <= {hi}, got {v}")
        return v
    return check


def _real(lo: float | None = None, hi: float | None = None, open_lo=False, open_hi=False):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError(f"must be a number, got {v!r}")
        v = float(v)
        if lo is not None and (v <= lo if open_lo else v < lo):
            raise ValueError(f"must be {'>' if open_lo else '>='} {lo}, got {v}")
        if hi is not None and (v >= hi if open_hi else v > hi):
            raise ValueError(f"must be {'<' if open_hi else '<='} {hi}, got {v}")
        return v
    return check


def _choice(*options: str):
    def check(v):
        if v not in options:
            raise ValueError(f"must be one of {list(options)}, got {v!r}")
        return v
    return check


def _string(v):
    if not isinstance(v, str) or not v:
        raise ValueError(f"must be a nonempty string, got {v!r}")
    return v


def _list(item: Callable, increasing: bool = False, allow_empty: bool = False):
    def check(v):
        if not isinstance(v, (list, tuple)):
            raise ValueError(f"must be a list, got {v!r}")
        if not v and not allow_empty:
            raise ValueError("must not be empty")
        out = []
        for i, x in enumerate(v):
            try:
                out.append(item(x))
            except ValueError as exc:
                raise ValueError(f"[{i}] {exc}") from None
        if increasing and any(b <= a for a, b in zip(out, out[1:])):
            raise ValueError("must be strictly increasing")
        return tuple(out)
    return check


def _f(default, check, doc: str = ""):
    kw = {"default_factory": default} if callable(default) else {"default": default}
    return field(metadata={"check": check, "doc": doc}, **kw)


# -- sections ----------------------------------------------------------------

@dataclass(frozen=True)
class ShotsSection:
    qdt_per_cell: int = _f(10_000, _int(1), "calibration shots per (state, setting) cell")
    qst_per_setting: int = _f(1_000, _int(1), "state-tomography shots per setting (qst study)")
    schedule_start: int = _f(100, _int(1), "first point of the cumulative QST schedule")
    schedule_stop: int = _f(100_000, _int(2), "last point of the cumulative QST schedule")
    schedule_points: int = _f(20, _int(2), "log-spaced points in the schedule")
    n_targets: int = _f(16, _int(1), "number of Haar random product targets")
    budget: int = _f(10_000, _int(100), "total shots per target (budget study)")
    r_grid: tuple = _f(lambda: (0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95),
                       _list(_real(0.0, 1.0, open_hi=True), increasing=True),
                       "calibration share grid (budget study)")
    per_basis: tuple = _f(lambda: (100, 1_000, 10_000), _list(_int(1), increasing=True),
                          "shots per basis (qrem3 study)")
    grid: tuple = _f(lambda: (1_600, 16_000, 160_000), _list(_int(16), increasing=True),
                     "total calibration shots per point (correlation/baseline studies)")


@dataclass(frozen=True)
class QdtSection:
    max_iterations: int = _f(5000, _int(1))
    convergence_tol: float = _f(1e-10, _real(0.0, open_lo=True))


@dataclass(frozen=True)
class QstSection:
    estimator: str = _f("mle", _choice("mle", "bme"))
    max_iterations: int = _f(5000, _int(1))
    convergence_tol: float = _f(1e-10, _real(0.0, open_lo=True))
    dilution: float = _f(0.5, _real(0.0, 1.0, open_lo=True))
    bme_chain_length: int = _f(10_000, _int(2))
    bme_burn_in: int = _f(1_000, _int(0))
    bme_proposal_scale: float = _f(1.0, _real(0.0, open_lo=True))


@dataclass(frozen=True)
class AnalysisSection:
    thresholds: tuple = _f(lambda: (0.2, 0.15, 0.1),
                           _list(_real(0.0, 1.0, open_lo=True, open_hi=True)))
    bootstrap_resamples: int = _f(1000, _int(2))
    n_trials: int = _f(10, _int(10))
    amplitude_grid: tuple = _f(lambda: (), _list(_real(0.0, 1.0, open_lo=True),
                                                 increasing=True, allow_empty=True))
    fidelity_profile: tuple = _f(lambda: ((0.1, 0.55), (1.0, 0.95)),
                                 _list(_list(_real(0.0, 1.0))))


_CHANNEL_KEYS = {
    "confusion": {"kind", "error", "matrix"},
    "depolarizing": {"kind", "k", "qubits"},
    "iswap": {"kind", "k", "qubits"},
    "rotation": {"kind", "theta", "axis"},
}


def _check_channel(raw: Any, n_qubits: int, where: str, errors: list[str]) -> dict | None:
    if not isinstance(raw, dict):
        errors.append(f"{where}: must be a table, got {raw!r}")
        return None
    kind = raw.get("kind")
    if kind not in _CHANNEL_KEYS:
        errors.append(f"{where}.kind: must be one of {sorted(_CHANNEL_KEYS)}, got {kind!r}")
        return None
    n_err = len(errors)
    for key in sorted(set(raw) - _CHANNEL_KEYS[kind]):
        errors.append(f"{where}.{key}: unknown key for {kind} channel")
    out = dict(raw)

    def need(key, check):
        if key not in raw:
            errors.append(f"{where}.{key}: required for {kind} channel")
            return
        try:
            out[key] = check(raw[key])
        except ValueError as exc:
            errors.append(f"{where}.{key}: {exc}")

    if kind == "confusion":
        if ("error" in raw) == ("matrix" in raw):
            errors.append(f"{where}: confusion channel needs exactly one of 'error' or 'matrix'")
        elif "error" in raw:
            need("error", _real(0.0, 1.0))
        else:
            before = len(errors)
            need("matrix", _list(_list(_real())))
            if len(errors) == before:
                d = 2 ** n_qubits
                rows = out["matrix"]
                c = np.array(rows, dtype=float) if len({len(r) for r in rows}) == 1 else None
                if c is None or c.shape != (d, d):
                    shape = "ragged" if c is None else c.shape
                    errors.append(f"{where}.matrix: must be {d}x{d}, got {shape}")
                elif c.min() < 0 or not np.allclose(c.sum(axis=0), 1.0, atol=1e-9):
                    errors.append(f"{where}.matrix: not column-stochastic")
    elif kind in ("depolarizing", "iswap"):
        need("k", _real(0.0, 1.0))
        if "qubits" in raw:
            try:
                out["qubits"] = _list(_int(0, n_qubits - 1))(raw["qubits"])
            except ValueError as exc:
                errors.append(f"{where}.qubits: {exc}")
            else:
                if kind == "iswap" and (len(out["qubits"]) != 2
                                        or out["qubits"][0] == out["qubits"][1]):
                    errors.append(f"{where}.qubits: iswap needs two distinct qubits")
        elif kind == "iswap" and n_qubits < 2:
            errors.append(f"{where}: iswap needs at least two qubits")
    else:
        need("theta", _real())
        if "axis" in raw:
            try:
                out["axis"] = _choice("X", "Y", "Z")(raw["axis"])
            except ValueError as exc:
                errors.append(f"{where}.axis: {exc}")
    return out if len(errors) == n_err else None


def build_channel(specs: tuple[dict, ...], n_qubits: int) -> NoiseChannel | None:
    """Turn validated channel tables into a (composite) noise channel."""
    chans = []
    for s in specs:
        kind = s["kind"]
        if kind == "confusion":
            mat = (symmetric_confusion(s["error"], n_qubits) if "error" in s
                   else np.array(s["matrix"], dtype=float))
            chans.append(ConfusionMatrix(mat))
        elif kind == "depolarizing":
            q = tuple(s["qubits"]) if "qubits" in s else None
            chans.append(Depolarizing(s["k"], q))
        elif kind == "iswap":
            chans.append(ProbabilisticIswap(s["k"], tuple(s.get("qubits", (0, 1)))))
        else:
            chans.append(CoherentRotation.about_axis(s["theta"], s.get("axis", "X"), n_qubits))
    if not chans:
        return None
    return chans[0] if len(chans) == 1 else Composite(tuple(chans))


@dataclass(frozen=True)
class ExperimentConfig:
    study: str
    n_qubits: int
    seed: int = 0
    output_dir: str = "results"
    threads: int = 1
    noise: tuple = ()
    shots: ShotsSection = field(default_factory=ShotsSection)
    qdt: QdtSection = field(default_factory=QdtSection)
    qst: QstSection = field(default_factory=QstSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)

    def channel(self) -> NoiseChannel | None:
        return build_channel(self.noise, self.n_qubits)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["noise"] = {"channels": [dict(c) for c in self.noise]}
        return _plain(out)

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def replace(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


_SECTIONS = {"shots": ShotsSection, "qdt": QdtSection, "qst": QstSection,
             "analysis": AnalysisSection}
_TOP = {"study", "n_qubits", "seed", "output_dir", "threads", "noise"} | set(_SECTIONS)


def _load_section(name: str, cls, raw: Any, errors: list[str]):
    if not isinstance(raw, dict):
        errors.append(f"{name}: must be a table")
        return cls()
    for key in sorted(set(raw) - {f.name for f in fields(cls)}):
        errors.append(f"{name}.{key}: unknown key")
    values = {}
    for f in fields(cls):
        if f.name in raw:
            try:
                values[f.name] = f.metadata["check"](raw[f.name])
            except ValueError as exc:
                errors.append(f"{name}.{f.name}: {exc}")
    return cls(**values)


def config_from_dict(raw: dict, study: str | None = None) -> ExperimentConfig:
    """Validate a parsed document; raise ``ConfigError`` listing every problem."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["document must be a table at top level"])
    for key in sorted(set(raw) - _TOP):
        errors.append(f"{key}: unknown key")
    kind = raw.get("study", study)
    if study is not None and raw.get("study", study) != study:
        errors.append(f"study: config says {raw['study']!r} but {study!r} was requested")
    if kind not in STUDIES:
        errors.append(f"study: must be one of {list(STUDIES)}, got {kind!r}")
        kind = None
    top = {}
    for key, check, default in (
            ("n_qubits", _int(1, 3), DEFAULT_QUBITS.get(kind, 1)),
            ("seed", _int(0, 2 ** 64 - 1), 0),
            ("output_dir", _string, "results"),
            ("threads", _int(1), 1)):
        try:
            top[key] = check(raw[key]) if key in raw else default
        except ValueError as exc:
            errors.append(f"{key}: {exc}")
            top[key] = default
    n = top["n_qubits"]
    if kind in ("correlation", "baseline") and n != 2:
        errors.append(f"n_qubits: {kind} studies are defined for 2 qubits, got {n}")
    if kind == "qrem3" and n != 3:
        errors.append(f"n_qubits: qrem3 study needs 3 qubits, got {n}")
    sections = {name: _load_section(name, cls, raw.get(name, {}), errors)
                for name, cls in _SECTIONS.items()}
    noise = []
    raw_noise = raw.get("noise", {})
    if not isinstance(raw_noise, dict):
        errors.append("noise: must be a table with a 'channels' list")
    else:
        for key in sorted(set(raw_noise) - {"channels"}):
            errors.append(f"noise.{key}: unknown key")
        chans = raw_noise.get("channels", [])
        if not isinstance(chans, list):
            errors.append("noise.channels: must be a list of tables")
            chans = []
        for i, c in enumerate(chans):
            spec = _check_channel(c, n, f"noise.channels[{i}]", errors)
            if spec is not None:
                noise.append(spec)
    shots = sections["shots"]
    if shots.schedule_stop <= shots.schedule_start:
        errors.append("shots.schedule_stop: must exceed shots.schedule_start")
    qst = sections["qst"]
    if not qst.bme_chain_length > qst.bme_burn_in:
        errors.append("qst.bme_burn_in: must be smaller than qst.bme_chain_length")
    for i, pt in enumerate(sections["analysis"].fidelity_profile):
        if len(pt) != 2:
            errors.append(f"analysis.fidelity_profile[{i}]: must be an [amplitude, fidelity] pair")
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(study=kind, noise=tuple(noise), **top, **sections)


def parse_config(source: str | Path, study: str | None = None) -> ExperimentConfig:
    """Parse TOML or JSON from a path or from document text.

    Text starting with ``{`` (and files ending in ``.json``) are read as JSON.
    """
    text, is_json = None, False
    looks_like_path = (isinstance(source, str) and "\n" not in source
                       and (Path(source).is_file()
                            or Path(source).suffix.lower() in (".toml", ".json")))
    if isinstance(source, Path) or looks_like_path:
        path = Path(source)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError([f"cannot read {path}: {exc}"]) from None
        is_json = path.suffix.lower() == ".json"
    else:
        text = str(source)
    is_json = is_json or text.lstrip().startswith("{")
    try:
        raw = json.loads(text) if is_json else tomllib.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"]) \
            from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"]) \
            from None
    return config_from_dict(raw, study)

