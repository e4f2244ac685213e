"""Shot-noise counting model and timestamp-stream coincidence counting.

Counts are Poisson around rate * duration * probability with per-detector
efficiencies, plus the standard accidental contribution 2 * window * r1 * r2.
``generate_timestamps`` emits the equivalent click streams so the window
counter can be validated against the closed-form means.  All randomness is
driven by the config seed; identical seeds give identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np
from numba import njit

from .interference import CHANNELS, DETECTORS, ChannelProbabilities, channel_detectors


def _per_detector(value, name: str) -> dict[str, float]:
    if isinstance(value, Mapping):
        unknown = set(value) - set(DETECTORS)
        if unknown:
            raise ValueError(f"{name}: unknown detector ids {sorted(unknown)}")
        return {d: float(value.get(d, 0.0)) for d in DETECTORS}
    return {d: float(value) for d in DETECTORS}


@dataclass(frozen=True)
class AcquisitionConfig:
    """Acquisition parameters for one measurement point.

    Pair arrival jitter defaults to 0.1 ns, far below the 5 ns coincidence
    window, so genuine pairs are never missed by the counter.  Detector dead
    time is not modelled.
    """

    pair_rate: float = 1e4            # generated pairs per second
    duration: float = 1.0             # seconds per point
    detector_efficiency: float | Mapping[str, float] = 1.0
    dark_rate: float | Mapping[str, float] = 0.0
    coincidence_window: float = 5e-9  # seconds
    rng_seed: int = 0
    pair_jitter: float = 1e-10        # seconds, per-detector arrival spread

    def __post_init__(self):
        if self.pair_rate < 0 or self.duration < 0:
            raise ValueError("rates and duration must be >= 0")
        if self.coincidence_window <= 0:
            raise ValueError("coincidence window must be > 0")
        if not isinstance(self.rng_seed, (int, np.integer)) or self.rng_seed < 0:
            raise ValueError("rng_seed must be a non-negative integer")
        eff = _per_detector(self.detector_efficiency, "detector_efficiency")
        for d, v in eff.items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"efficiency of {d} must lie in [0, 1]")
        dark = _per_detector(self.dark_rate, "dark_rate")
        for d, v in dark.items():
            if v < 0:
                raise ValueError(f"dark rate of {d} must be >= 0")
        object.__setattr__(self, "detector_efficiency", eff)
        object.__setattr__(self, "dark_rate", dark)

    def efficiency(self, det: str) -> float:
        return self.detector_efficiency[det]

    def dark(self, det: str) -> float:
        return self.dark_rate[det]

    def with_seed(self, seed: int) -> "AcquisitionConfig":
        return replace(self, rng_seed=int(seed))


@dataclass(frozen=True)
class ChannelCounts:
    """Coincidence counts per channel plus singles clicks per detector."""

    channels: Mapping[str, int]
    singles: Mapping[str, int]

    def total_coincidences(self) -> int:
        return sum(self.channels.values())


def accidental_rate(r1: float, r2: float, window: float) -> float:
    """Accidental coincidence rate 2 * window * r1 * r2 between two detectors
    clicking independently at rates r1 and r2."""
    if r1 < 0 or r2 < 0:
        raise ValueError("rates must be >= 0")
    return 2.0 * window * r1 * r2


def expected_means(
    probs: ChannelProbabilities, cfg: AcquisitionConfig
) -> tuple[dict[str, float], dict[str, float]]:
    """Expected channel coincidence means (true plus accidental) and expected
    singles clicks per detector.

    A bunched pair on one detector yields at most one click (the detectors do
    not resolve photon number), so its click probability is 1-(1-eta)^2.
    """
    n_pairs = cfg.pair_rate * cfg.duration
    clicks = {}
    for det in DETECTORS:
        eta = cfg.efficiency(det)
        from_pairs = sum(
            p for ch, p in probs.channels.items() if det in channel_detectors(ch)
        )
        from_doubles = probs.doubles.get(det, 0.0) * (1.0 - (1.0 - eta) ** 2)
        clicks[det] = n_pairs * (from_pairs * eta + from_doubles) + cfg.dark(det) * cfg.duration
    means = {}
    for ch in CHANNELS:
        d1, d2 = channel_detectors(ch)
        true = n_pairs * probs.channels.get(ch, 0.0) * cfg.efficiency(d1) * cfg.efficiency(d2)
        r1 = clicks[d1] / cfg.duration if cfg.duration > 0 else 0.0
        r2 = clicks[d2] / cfg.duration if cfg.duration > 0 else 0.0
        means[ch] = true + accidental_rate(r1, r2, cfg.coincidence_window) * cfg.duration
    return means, clicks


def sample_counts(probs: ChannelProbabilities, cfg: AcquisitionConfig) -> ChannelCounts:
    """Poisson draw around the expected means; deterministic for a seed."""
    total = probs.total()
    if not math.isclose(total, 1.0, abs_tol=1e-6):
        raise ValueError(f"outcome probabilities sum to {total:.8g}, expected 1")
    rng = np.random.default_rng(cfg.rng_seed)
    means, clicks = expected_means(probs, cfg)
    channels = {ch: int(rng.poisson(means[ch])) for ch in CHANNELS}
    singles = {det: int(rng.poisson(clicks[det])) for det in DETECTORS}
    return ChannelCounts(channels=channels, singles=singles)


def generate_timestamps(
    probs: ChannelProbabilities, cfg: AcquisitionConfig
) -> dict[str, np.ndarray]:
    """Simulated click streams per detector, sorted in time.

    Pair events are placed at a common uniform time with independent
    per-detector jitter; dark counts are independent Poisson processes.
    """
    total = probs.total()
    if not math.isclose(total, 1.0, abs_tol=1e-6):
        raise ValueError(f"outcome probabilities sum to {total:.8g}, expected 1")
    rng = np.random.default_rng(cfg.rng_seed)
    clicks: dict[str, list[np.ndarray]] = {d: [] for d in DETECTORS}

    outcome_names = list(CHANNELS) + [f"double:{d}" for d in DETECTORS]
    p = np.array(
        [probs.channels.get(ch, 0.0) for ch in CHANNELS]
        + [probs.doubles.get(d, 0.0) for d in DETECTORS]
    )
    p = np.clip(p, 0.0, None)
    psum = p.sum()
    n_pairs = rng.poisson(cfg.pair_rate * cfg.duration) if cfg.pair_rate > 0 else 0
    if n_pairs > 0 and psum > 0:
        kinds = rng.choice(len(p), size=n_pairs, p=p / psum)
        times = rng.uniform(0.0, cfg.duration, size=n_pairs)
        for k, name in enumerate(outcome_names):
            t = times[kinds == k]
            if t.size == 0:
                continue
            if name.startswith("double:"):
                det = name.split(":", 1)[1]
                eta = cfg.efficiency(det)
                seen = t[rng.random(t.size) < 1.0 - (1.0 - eta) ** 2]
                clicks[det].append(seen + rng.normal(0.0, cfg.pair_jitter, seen.size))
            else:
                for det in channel_detectors(name):
                    seen = t[rng.random(t.size) < cfg.efficiency(det)]
                    clicks[det].append(seen + rng.normal(0.0, cfg.pair_jitter, seen.size))
    for det in DETECTORS:
        dark = cfg.dark(det)
        if dark > 0:
            n = rng.poisson(dark * cfg.duration)
            clicks[det].append(rng.uniform(0.0, cfg.duration, size=n))
    streams = {}
    for det in DETECTORS:
        t = np.concatenate(clicks[det]) if clicks[det] else np.empty(0)
        streams[det] = np.sort(t)
    return streams


@njit(cache=True)
def _count_window_pairs(t1, t2, window):
    """Greedy in-time-order matching: each timestamp pairs at most once."""
    i = 0
    j = 0
    count = 0
    while i < t1.size and j < t2.size:
        dt = t1[i] - t2[j]
        if dt > window:
            j += 1
        elif dt < -window:
            i += 1
        else:
            count += 1
            i += 1
            j += 1
    return count


def count_coincidences(
    streams: Mapping[str, np.ndarray], window: float
) -> ChannelCounts:
    """Count coincidences within the window for every detector pair.

    Streams must be time-sorted.  Uses a two-pointer sweep per pair, O(n) in
    the stream lengths, with greedy matching so no event is double counted
    within a channel.
    """
    if window <= 0:
        raise ValueError("window must be > 0")
    arrays = {}
    for det in DETECTORS:
        t = np.asarray(streams.get(det, np.empty(0)), dtype=np.float64)
        if t.size > 1 and np.any(np.diff(t) < 0):
            raise ValueError(f"stream {det} is not sorted")
        arrays[det] = np.ascontiguousarray(t)
    unknown = set(streams) - set(DETECTORS)
    if unknown:
        raise ValueError(f"unknown detector ids {sorted(unknown)}")
    channels = {}
    for ch in CHANNELS:
        d1, d2 = channel_detectors(ch)
        channels[ch] = int(_count_window_pairs(arrays[d1], arrays[d2], float(window)))
    singles = {det: int(arrays[det].size) for det in DETECTORS}
    return ChannelCounts(channels=channels, singles=singles)


def write_timestamps(streams: Mapping[str, np.ndarray], path) -> None:
    """Text export: one 'detector<TAB>time_seconds' line per event, by time."""
    events = []
    for det, t in streams.items():
        if det not in DETECTORS:
            raise ValueError(f"unknown detector id {det!r}")
        events.extend((float(x), det) for x in np.asarray(t))
    events.sort()
    with open(path, "w") as fh:
        for t, det in events:
            fh.write(f"{det}\t{t:.17g}\n")


def read_timestamps(path) -> dict[str, np.ndarray]:
    """Inverse of ``write_timestamps``; returns sorted per-detector arrays."""
    raw: dict[str, list[float]] = {d: [] for d in DETECTORS}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'detector<TAB>time'")
            det, t = parts
            if det not in DETECTORS:
                raise ValueError(f"{path}:{lineno}: unknown detector {det!r}")
            raw[det].append(float(t))
    return {d: np.sort(np.asarray(v)) for d, v in raw.items()}
