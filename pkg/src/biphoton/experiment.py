"""Declarative apparatus description and scan drivers.

Three measurement classes are supported: relative-delay scans, half-wave
plate rotation scans at fixed delay, and magnetic field scans with a Faraday
sample in arm a.  Each scan row resamples noise from an independent RNG
substream derived from the master seed and the row index, so refits of a scan
are statistically honest and results are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .detection import AcquisitionConfig, ChannelCounts, sample_counts
from .elements import OpticalElement, hwp, faraday
from .interference import ChannelProbabilities, SpectralFilter, coincidence_probabilities
from .states import TwoPhotonState


@dataclass(frozen=True)
class Apparatus:
    """Source state, per-arm element stacks, filter and acquisition settings.

    ``mode_overlap`` caps the HOM visibility (see ``interference``); 1 means
    perfectly matched spatial modes.
    """

    source: TwoPhotonState
    arm_a: tuple[OpticalElement, ...] = ()
    arm_b: tuple[OpticalElement, ...] = ()
    spectral: SpectralFilter = field(default_factory=SpectralFilter)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    mode_overlap: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "arm_a", tuple(self.arm_a))
        object.__setattr__(self, "arm_b", tuple(self.arm_b))
        n = self.source.norm()
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"source must be normalized (norm {n:.6g})")
        if not 0.0 <= self.mode_overlap <= 1.0:
            raise ValueError("mode_overlap must lie in [0, 1]")

    def probabilities(
        self,
        stage_delay_um: float,
        extra_arm_a: Sequence[OpticalElement] = (),
    ) -> ChannelProbabilities:
        """Channel probabilities at one stage position, optionally with extra
        elements at the head of arm a (the sample slot)."""
        return coincidence_probabilities(
            self.source,
            arm_a=tuple(extra_arm_a) + self.arm_a,
            arm_b=self.arm_b,
            stage_delay_um=stage_delay_um,
            spectral=self.spectral,
            mode_overlap=self.mode_overlap,
        )

    def snapshot(self) -> dict:
        """Plain-data description for result metadata."""
        return {
            "source": self.source.to_text().splitlines(),
            "arm_a": [e.label or "element" for e in self.arm_a],
            "arm_b": [e.label or "element" for e in self.arm_b],
            "filter": {
                "shape": self.spectral.shape,
                "center_wavelength_nm": self.spectral.center_wavelength_nm,
                "bandwidth_fwhm_nm": self.spectral.bandwidth_fwhm_nm,
                "dip_fwhm_um": self.spectral.dip_fwhm_um,
            },
            "acquisition": {
                "pair_rate": self.acquisition.pair_rate,
                "duration": self.acquisition.duration,
                "detector_efficiency": dict(self.acquisition.detector_efficiency),
                "dark_rate": dict(self.acquisition.dark_rate),
                "coincidence_window": self.acquisition.coincidence_window,
            },
            "mode_overlap": self.mode_overlap,
        }


@dataclass(frozen=True)
class ScanResult:
    """Rows of (setting, counts) with the apparatus snapshot and master seed."""

    variable: str
    units: str
    settings: tuple[float, ...]
    rows: tuple[ChannelCounts, ...]
    apparatus: Apparatus | None = None
    seed: int = 0

    def channel(self, name: str) -> np.ndarray:
        return np.array([row.channels[name] for row in self.rows], dtype=float)

    def singles(self, detector: str) -> np.ndarray:
        return np.array([row.singles[detector] for row in self.rows], dtype=float)


@dataclass(frozen=True)
class FaradaySample:
    """Faraday rotator sample: rotation angle V * L * B at field B."""

    verdet: float            # rad / (T m)
    length: float            # m
    extra_path_um: float = 0.0

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("sample length must be > 0")

    def rotation_angle(self, field_tesla: float) -> float:
        return self.verdet * self.length * field_tesla

    def element(self, field_tesla: float) -> OpticalElement:
        return OpticalElement(
            jones=faraday(self.rotation_angle(field_tesla)),
            extra_path_h=self.extra_path_um,
            extra_path_v=self.extra_path_um,
            label=f"faraday_sample(B={field_tesla:g}T)",
        )


def _check_settings(values: Sequence[float], what: str) -> tuple[float, ...]:
    vals = tuple(float(v) for v in values)
    if not vals:
        raise ValueError(f"empty {what} list")
    if len(vals) > 1:
        diffs = np.diff(vals)
        if not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValueError(f"{what} settings must be strictly monotone")
    return vals


def _row_seed(master: int, *indices: int) -> int:
    return int(np.random.SeedSequence([int(master), *map(int, indices)]).generate_state(1)[0])


def _run_rows(app: Apparatus, probe, settings, seed_indices) -> list[ChannelCounts]:
    rows = []
    for idx, setting in zip(seed_indices, settings):
        probs = probe(setting)
        cfg = app.acquisition.with_seed(_row_seed(app.acquisition.rng_seed, *idx))
        rows.append(sample_counts(probs, cfg))
    return rows


def run_delay_scan(app: Apparatus, delays_um: Sequence[float]) -> ScanResult:
    """Coincidence counts versus relative arm delay."""
    delays = _check_settings(delays_um, "delay")
    rows = _run_rows(app, lambda d: app.probabilities(d), delays,
                     [(i,) for i in range(len(delays))])
    return ScanResult("delay", "um", delays, tuple(rows), app, app.acquisition.rng_seed)


def run_hwp_scan(
    app: Apparatus, angles_deg: Sequence[float], at_delay_um: float = 0.0
) -> ScanResult:
    """Counts versus half-wave plate angle, plate at the head of arm a."""
    angles = _check_settings(angles_deg, "angle")

    def probe(theta_deg: float) -> ChannelProbabilities:
        plate = OpticalElement(hwp(math.radians(theta_deg)), label=f"hwp({theta_deg:g}deg)")
        return app.probabilities(at_delay_um, extra_arm_a=(plate,))

    rows = _run_rows(app, probe, angles, [(i,) for i in range(len(angles))])
    return ScanResult("hwp_angle", "deg", angles, tuple(rows), app, app.acquisition.rng_seed)


def run_field_scan(
    app: Apparatus,
    sample: FaradaySample,
    fields_tesla: Sequence[float],
    at_delays_um: Sequence[float],
    center_offsets_um: Sequence[float] | None = None,
) -> list[ScanResult]:
    """One delay scan per field value with the Faraday sample in arm a.

    ``center_offsets_um`` optionally adds a per-field path offset to arm a
    (dip centers shift to the offset), for fit-robustness studies of the
    stage-flexure effect.  Not applied by default.
    """
    fields = [float(b) for b in fields_tesla]
    if not fields:
        raise ValueError("empty field list")
    delays = _check_settings(at_delays_um, "delay")
    offsets = [0.0] * len(fields) if center_offsets_um is None else list(center_offsets_um)
    if len(offsets) != len(fields):
        raise ValueError("center_offsets_um must match fields in length")
    results = []
    for fi, (b, off) in enumerate(zip(fields, offsets)):
        elem = sample.element(b)

        def probe(d: float, _elem=elem, _off=off) -> ChannelProbabilities:
            return app.probabilities(d - _off, extra_arm_a=(_elem,))

        rows = _run_rows(app, probe, delays, [(fi, i) for i in range(len(delays))])
        results.append(
            ScanResult("delay", "um", delays, tuple(rows), app, app.acquisition.rng_seed)
        )
    return results
