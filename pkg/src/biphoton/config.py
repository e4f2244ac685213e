"""Experiment configuration: YAML with unit-suffixed quantities.

Configs are strict: unknown keys are rejected and every diagnostic names the
offending key.  Numeric values accept unit suffixes ("59um", "5ns", "45deg",
"0.3T"); bare numbers are taken in the canonical unit of the field.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Mapping

import yaml

from .detection import AcquisitionConfig
from .elements import OpticalElement, make_element
from .experiment import Apparatus, FaradaySample
from .interference import SpectralFilter
from .states import BellKind, TwoPhotonState, make_bell, superpose


class ConfigError(Exception):
    """Raised for syntax errors, schema violations and out-of-range values."""


_QUANTITY_RE = re.compile(r"^\s*([-+]?[0-9.]+(?:[eE][-+]?[0-9]+)?)\s*([^\s0-9]*)\s*$")

_UNIT_TABLES = {
    "length_um": {"": 1.0, "um": 1.0, "µm": 1.0, "nm": 1e-3, "mm": 1e3, "cm": 1e4, "m": 1e6},
    "length_nm": {"": 1.0, "nm": 1.0, "um": 1e3, "µm": 1e3, "mm": 1e6},
    "length_m": {"": 1.0, "m": 1.0, "mm": 1e-3, "cm": 1e-2, "um": 1e-6, "µm": 1e-6},
    "time_s": {"": 1.0, "s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9,
               "ps": 1e-12, "fs": 1e-15},
    "angle_rad": {"": 1.0, "rad": 1.0, "deg": math.pi / 180.0, "°": math.pi / 180.0,
                  "mrad": 1e-3},
    "angle_deg": {"": 1.0, "deg": 1.0, "°": 1.0, "rad": 180.0 / math.pi},
    "field_T": {"": 1.0, "T": 1.0, "mT": 1e-3, "G": 1e-4},
    "rate_hz": {"": 1.0, "/s": 1.0, "Hz": 1.0, "hz": 1.0, "kHz": 1e3, "MHz": 1e6},
    "plain": {"": 1.0},
}


def parse_quantity(value: Any, kind: str, where: str) -> float:
    """Number with optional unit suffix, converted to the canonical unit."""
    table = _UNIT_TABLES[kind]
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _QUANTITY_RE.match(value)
        if not m:
            raise ConfigError(f"{where}: cannot parse quantity {value!r}")
        number, unit = m.groups()
        if unit not in table:
            raise ConfigError(
                f"{where}: unit {unit!r} not valid here (allowed: "
                f"{sorted(u for u in table if u)})"
            )
        try:
            return float(number) * table[unit]
        except ValueError:
            raise ConfigError(f"{where}: cannot parse number {number!r}") from None
    raise ConfigError(f"{where}: expected a number or quantity string, got {type(value).__name__}")


def _require_mapping(value: Any, where: str) -> dict:
    if not isinstance(value, Mapping):
        raise ConfigError(f"{where}: expected a mapping")
    return dict(value)


def _check_keys(data: Mapping, allowed: set[str], where: str, required: set[str] = frozenset()):
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(
            f"{where}: unknown key(s) {sorted(unknown)}; allowed keys are {sorted(allowed)}"
        )
    missing = required - set(data)
    if missing:
        raise ConfigError(f"{where}: missing required key(s) {sorted(missing)}")


_BELL_NAMES = {k.value: k for k in BellKind}


def _build_source(data: Any, where: str) -> TwoPhotonState:
    data = _require_mapping(data, where)
    _check_keys(data, {"bell", "admixtures"}, where, required={"bell"})
    name = data["bell"]
    if name not in _BELL_NAMES:
        raise ConfigError(f"{where}.bell: unknown Bell state {name!r}; "
                          f"valid names are {sorted(_BELL_NAMES)}")
    main = _BELL_NAMES[name]
    admix = _require_mapping(data.get("admixtures", {}), f"{where}.admixtures")
    fractions = {main: 1.0}
    for key, frac in admix.items():
        if key not in _BELL_NAMES:
            raise ConfigError(f"{where}.admixtures: unknown Bell state {key!r}")
        kind = _BELL_NAMES[key]
        if kind == main:
            raise ConfigError(f"{where}.admixtures: {key} is already the main state")
        f = parse_quantity(frac, "plain", f"{where}.admixtures.{key}")
        if not 0.0 <= f < 1.0:
            raise ConfigError(f"{where}.admixtures.{key}: fraction must lie in [0, 1)")
        fractions[kind] = f
    total_admix = sum(v for k, v in fractions.items() if k != main)
    if total_admix >= 1.0:
        raise ConfigError(f"{where}.admixtures: fractions sum to {total_admix}, must be < 1")
    fractions[main] = 1.0 - total_admix
    terms = [(math.sqrt(f), make_bell(k)) for k, f in fractions.items() if f > 0]
    return superpose(terms).normalized()


_ELEMENT_KEYS = {"element", "theta", "phase", "axis", "a", "b", "c", "d",
                 "extra_path_h", "extra_path_v", "label"}


def _build_element(data: Any, where: str) -> OpticalElement:
    data = _require_mapping(data, where)
    _check_keys(data, _ELEMENT_KEYS, where, required={"element"})
    kwargs = {}
    for key in ("theta", "phase", "axis"):
        if key in data:
            kwargs[key] = parse_quantity(data[key], "angle_rad", f"{where}.{key}")
    for key in ("a", "b", "c", "d"):
        if key in data:
            kwargs[key] = complex(data[key])
    for key in ("extra_path_h", "extra_path_v"):
        if key in data:
            kwargs[key] = parse_quantity(data[key], "length_um", f"{where}.{key}")
            if kwargs[key] < 0:
                raise ConfigError(f"{where}.{key}: extra path must be >= 0")
    if "label" in data:
        kwargs["label"] = str(data["label"])
    try:
        return make_element(str(data["element"]), **kwargs)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _build_filter(data: Any, where: str) -> SpectralFilter:
    data = _require_mapping(data, where)
    _check_keys(data, {"shape", "center", "bandwidth", "coherence_length"}, where)
    kwargs: dict[str, Any] = {}
    if "shape" in data:
        kwargs["shape"] = str(data["shape"])
    if "center" in data:
        kwargs["center_wavelength_nm"] = parse_quantity(data["center"], "length_nm",
                                                        f"{where}.center")
    if "bandwidth" in data:
        kwargs["bandwidth_fwhm_nm"] = parse_quantity(data["bandwidth"], "length_nm",
                                                     f"{where}.bandwidth")
    if "coherence_length" in data:
        kwargs["coherence_length_um"] = parse_quantity(data["coherence_length"], "length_um",
                                                       f"{where}.coherence_length")
    try:
        return SpectralFilter(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _per_detector_value(data: Any, kind: str, where: str):
    if isinstance(data, Mapping):
        return {str(k): parse_quantity(v, kind, f"{where}.{k}") for k, v in data.items()}
    return parse_quantity(data, kind, where)


def _build_acquisition(data: Any, where: str, seed: int) -> AcquisitionConfig:
    data = _require_mapping(data, where)
    _check_keys(data, {"pair_rate", "duration", "efficiency", "dark_rate",
                       "window", "jitter"}, where)
    kwargs: dict[str, Any] = {"rng_seed": seed}
    if "pair_rate" in data:
        kwargs["pair_rate"] = parse_quantity(data["pair_rate"], "rate_hz", f"{where}.pair_rate")
    if "duration" in data:
        kwargs["duration"] = parse_quantity(data["duration"], "time_s", f"{where}.duration")
    if "efficiency" in data:
        kwargs["detector_efficiency"] = _per_detector_value(
            data["efficiency"], "plain", f"{where}.efficiency")
    if "dark_rate" in data:
        kwargs["dark_rate"] = _per_detector_value(
            data["dark_rate"], "rate_hz", f"{where}.dark_rate")
    if "window" in data:
        kwargs["coincidence_window"] = parse_quantity(data["window"], "time_s", f"{where}.window")
    if "jitter" in data:
        kwargs["pair_jitter"] = parse_quantity(data["jitter"], "time_s", f"{where}.jitter")
    try:
        return AcquisitionConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _build_apparatus(data: Any, where: str, seed: int) -> Apparatus:
    data = _require_mapping(data, where)
    _check_keys(data, {"source", "arm_a", "arm_b", "filter", "acquisition", "mode_overlap"},
                where, required={"source"})
    source = _build_source(data["source"], f"{where}.source")
    arms = {}
    for arm in ("arm_a", "arm_b"):
        entries = data.get(arm, [])
        if not isinstance(entries, list):
            raise ConfigError(f"{where}.{arm}: expected a list of elements")
        arms[arm] = tuple(
            _build_element(e, f"{where}.{arm}[{i}]") for i, e in enumerate(entries)
        )
    spectral = _build_filter(data.get("filter", {}), f"{where}.filter")
    acquisition = _build_acquisition(data.get("acquisition", {}), f"{where}.acquisition", seed)
    overlap = parse_quantity(data.get("mode_overlap", 1.0), "plain", f"{where}.mode_overlap")
    if not 0.0 <= overlap <= 1.0:
        raise ConfigError(f"{where}.mode_overlap: must lie in [0, 1]")
    try:
        return Apparatus(source=source, arm_a=arms["arm_a"], arm_b=arms["arm_b"],
                         spectral=spectral, acquisition=acquisition, mode_overlap=overlap)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


_SCAN_TYPES = ("delay", "hwp", "field")


@dataclass(frozen=True)
class ScanSpec:
    type: str
    settings: tuple[float, ...]
    at_delay_um: float = 0.0
    at_delays_um: tuple[float, ...] = ()
    sample: FaradaySample | None = None
    rotation_sign: float = -1.0


def _settings_list(data: Any, kind: str, where: str) -> tuple[float, ...]:
    if isinstance(data, list):
        return tuple(parse_quantity(v, kind, f"{where}[{i}]") for i, v in enumerate(data))
    if isinstance(data, Mapping):
        _check_keys(data, {"start", "stop", "count"}, where,
                    required={"start", "stop", "count"})
        start = parse_quantity(data["start"], kind, f"{where}.start")
        stop = parse_quantity(data["stop"], kind, f"{where}.stop")
        count = data["count"]
        if not isinstance(count, int) or count < 2:
            raise ConfigError(f"{where}.count: expected an integer >= 2")
        step = (stop - start) / (count - 1)
        return tuple(start + i * step for i in range(count))
    raise ConfigError(f"{where}: expected a list or a start/stop/count range")


def _build_sample(data: Any, where: str) -> FaradaySample:
    data = _require_mapping(data, where)
    _check_keys(data, {"verdet", "length", "extra_path"}, where,
                required={"verdet", "length"})
    try:
        return FaradaySample(
            verdet=parse_quantity(data["verdet"], "plain", f"{where}.verdet"),
            length=parse_quantity(data["length"], "length_m", f"{where}.length"),
            extra_path_um=parse_quantity(data.get("extra_path", 0.0), "length_um",
                                         f"{where}.extra_path"),
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _build_scan(data: Any, where: str) -> ScanSpec:
    data = _require_mapping(data, where)
    _check_keys(data, {"type", "settings", "at_delay", "at_delays", "sample",
                       "rotation_sign", "duration"}, where, required={"type", "settings"})
    scan_type = data["type"]
    if scan_type not in _SCAN_TYPES:
        raise ConfigError(f"{where}.type: unknown scan type {scan_type!r}; "
                          f"valid types are {list(_SCAN_TYPES)}")
    kind = {"delay": "length_um", "hwp": "angle_deg", "field": "field_T"}[scan_type]
    settings = _settings_list(data["settings"], kind, f"{where}.settings")
    kwargs: dict[str, Any] = {"type": scan_type, "settings": settings}
    if scan_type == "hwp":
        kwargs["at_delay_um"] = parse_quantity(data.get("at_delay", 0.0), "length_um",
                                               f"{where}.at_delay")
    if scan_type == "field":
        if "sample" not in data:
            raise ConfigError(f"{where}: field scans require a sample block")
        kwargs["sample"] = _build_sample(data["sample"], f"{where}.sample")
        kwargs["at_delays_um"] = _settings_list(data.get("at_delays", [0.0]), "length_um",
                                                f"{where}.at_delays")
        kwargs["rotation_sign"] = parse_quantity(data.get("rotation_sign", -1.0), "plain",
                                                 f"{where}.rotation_sign")
    return ScanSpec(**kwargs)


_ANALYSIS_NAMES = {"gaussian", "visibility", "coherence", "sin2", "verdet", "bell_fractions"}


def _build_analysis(data: Any, where: str) -> list[tuple[str, dict]]:
    if data is None:
        return []
    if not isinstance(data, list):
        raise ConfigError(f"{where}: expected a list of analysis steps")
    steps = []
    for i, entry in enumerate(data):
        if isinstance(entry, str):
            name, options = entry, {}
        elif isinstance(entry, Mapping) and len(entry) == 1:
            name, options = next(iter(entry.items()))
            options = _require_mapping(options or {}, f"{where}[{i}].{name}")
        else:
            raise ConfigError(f"{where}[{i}]: expected a name or a one-key mapping")
        if name not in _ANALYSIS_NAMES:
            raise ConfigError(f"{where}[{i}]: unknown analysis {name!r}; "
                              f"valid names are {sorted(_ANALYSIS_NAMES)}")
        steps.append((name, dict(options)))
    return steps


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int
    apparatus: Apparatus
    scan: ScanSpec
    analysis: list[tuple[str, dict]]
    output_format: str = "csv"

    def with_seed(self, seed: int) -> "ExperimentConfig":
        import dataclasses

        app = dataclasses.replace(
            self.apparatus, acquisition=self.apparatus.acquisition.with_seed(seed)
        )
        return dataclasses.replace(self, seed=seed, apparatus=app)


def parse_config(text: str, name: str = "<config>") -> ExperimentConfig:
    """Parse and validate an experiment config from YAML text."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{name}: syntax error: {exc}") from None
    if data is None:
        raise ConfigError(f"{name}: empty config")
    data = _require_mapping(data, name)
    _check_keys(data, {"name", "seed", "apparatus", "scan", "analysis", "output"},
                name, required={"apparatus", "scan"})
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError(f"{name}.seed: expected an integer")
    scan = _build_scan(data["scan"], f"{name}.scan")
    raw_scan = _require_mapping(data["scan"], f"{name}.scan")
    apparatus = _build_apparatus(data["apparatus"], f"{name}.apparatus", seed)
    if "duration" in raw_scan:
        import dataclasses

        dur = parse_quantity(raw_scan["duration"], "time_s", f"{name}.scan.duration")
        apparatus = dataclasses.replace(
            apparatus, acquisition=dataclasses.replace(apparatus.acquisition, duration=dur)
        )
    output = _require_mapping(data.get("output", {}), f"{name}.output")
    _check_keys(output, {"format"}, f"{name}.output")
    fmt = output.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"{name}.output.format: expected 'csv' or 'json'")
    return ExperimentConfig(
        name=str(data.get("name", name)),
        seed=seed,
        apparatus=apparatus,
        scan=scan,
        analysis=_build_analysis(data.get("analysis"), f"{name}.analysis"),
        output_format=fmt,
    )


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), name=str(path))
