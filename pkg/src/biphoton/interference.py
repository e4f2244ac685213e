"""Polarization-resolved coincidence probabilities with partial
distinguishability.

Model
-----
Each photon carries a temporal label: the optical path length accumulated in
its arm (stage delay on arm b plus any per-element extra paths, resolved by
polarization).  For a detection outcome the two-photon amplitude splits into
photon-assignment terms; squared terms add classically while cross terms are
weighted by the wavepacket overlap of the two label assignments.  For the
standard case of one photon per arm and a single contributing source ket this
reduces to

    P = |A12|^2 + |A21|^2 + 2 Re(A12 conj(A21)) K(delta)

with delta the label difference and K the probability-level kernel below.
At K = 1 the probabilities equal the squared amplitudes of the pure-state
propagation (beamsplitter after the arm elements); at K = 0 they equal the
classical propagation of two distinguishable photons.

The kernel is specified directly by its dip shape: ``gaussian`` gives
K(x) = exp(-4 ln2 x^2 / lc^2) so that a scanned dip has FWHM exactly lc, and
``rectangular`` gives K(x) = sinc^2(pi x / l_eff) with l_eff chosen so the
central lobe has FWHM lc, producing the sidelobe fringes of a hard spectral
cut.  Internally the cross terms use the amplitude-level kernel gamma with
gamma^2 = K; both kernels are autocorrelations of genuine wavepackets, which
keeps the total outcome probability exactly 1 for any labels.

``mode_overlap`` (default 1) models residual spatial mode mismatch between
the two arms: coincidence cross terms between arms are multiplied by it (an
amplitude factor sqrt(mode_overlap) per photon slot), so it caps the HOM
visibility at exactly its value.

Limitations: elements that both mix H/V and add path length are approximated
by their mean extra path, and temporal labels are keyed by the polarization
at the arm input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .elements import OpticalElement, is_unitary, stack_jones
from .states import Mode, TwoPhotonState

#: Coincidence channels in canonical (CSV column) order.
CHANNELS = ("Hc:Hd", "Hc:Vd", "Vc:Hd", "Vc:Vd", "Hc:Vc", "Hd:Vd")

#: Detector identifiers: polarization at output path, e.g. "Hc" = H at path c.
DETECTORS = ("Hc", "Vc", "Hd", "Vd")

_DET_MODES = (Mode("c", "H"), Mode("c", "V"), Mode("d", "H"), Mode("d", "V"))
_DET_INDEX = {d: i for i, d in enumerate(DETECTORS)}
_SRC_MODES = (Mode("a", "H"), Mode("a", "V"), Mode("b", "H"), Mode("b", "V"))
_SRC_INDEX = {m: i for i, m in enumerate(_SRC_MODES)}
_SRC_ARM = np.array([0, 0, 1, 1])

_CHANNEL_DETS = {
    "Hc:Hd": (0, 2),
    "Hc:Vd": (0, 3),
    "Vc:Hd": (1, 2),
    "Vc:Vd": (1, 3),
    "Hc:Vc": (0, 1),
    "Hd:Vd": (2, 3),
}

_FOUR_LN2 = 4.0 * math.log(2.0)
# FWHM of sinc^2(pi x / L) in units of L: 2u/pi with sin(u)/u = 1/sqrt(2).
_SINC2_FWHM = 0.8858929413789044


def detector_mode(detector: str) -> Mode:
    return _DET_MODES[_DET_INDEX[detector]]


def channel_detectors(channel: str) -> tuple[str, str]:
    i, j = _CHANNEL_DETS[channel]
    return DETECTORS[i], DETECTORS[j]


def coherence_length_from_filter(center_nm: float, bandwidth_nm: float) -> float:
    """Coherence length lambda^2 / (2 pi dlambda), returned in microns."""
    return center_nm**2 / (2.0 * math.pi * bandwidth_nm) * 1e-3


@dataclass(frozen=True)
class SpectralFilter:
    """Band-pass filter defining the distinguishability kernel.

    ``coherence_length_um`` is the dip FWHM used by the kernel.  When omitted
    it defaults to the lambda^2/(2 pi dlambda) estimate from the filter; the
    two are deliberately decoupled so a measured dip width can be configured
    directly.
    """

    shape: str = "gaussian"
    center_wavelength_nm: float = 810.0
    bandwidth_fwhm_nm: float = 10.0
    coherence_length_um: float | None = None

    def __post_init__(self):
        if self.shape not in ("gaussian", "rectangular"):
            raise ValueError(f"unknown filter shape {self.shape!r}")
        if self.center_wavelength_nm <= 0:
            raise ValueError("center wavelength must be > 0")
        if self.bandwidth_fwhm_nm <= 0:
            raise ValueError("bandwidth must be > 0")
        if self.coherence_length_um is not None and self.coherence_length_um <= 0:
            raise ValueError("coherence length must be > 0")

    @property
    def dip_fwhm_um(self) -> float:
        if self.coherence_length_um is not None:
            return self.coherence_length_um
        return coherence_length_from_filter(
            self.center_wavelength_nm, self.bandwidth_fwhm_nm
        )


def overlap_kernel(spectral: SpectralFilter, delta_um):
    """Probability-level indistinguishability kernel K(delta) in [0, 1]."""
    x = np.asarray(delta_um, dtype=float)
    lc = spectral.dip_fwhm_um
    if spectral.shape == "gaussian":
        out = np.exp(-_FOUR_LN2 * (x / lc) ** 2)
    else:
        out = np.sinc(x * (_SINC2_FWHM / lc)) ** 2
    return float(out) if np.isscalar(delta_um) else out


def amplitude_kernel(spectral: SpectralFilter, delta_um):
    """Amplitude-level kernel gamma with gamma(x)^2 = K(x); signed for the
    rectangular shape so multi-label cross terms keep the sinc phase."""
    x = np.asarray(delta_um, dtype=float)
    lc = spectral.dip_fwhm_um
    if spectral.shape == "gaussian":
        out = np.exp(-0.5 * _FOUR_LN2 * (x / lc) ** 2)
    else:
        out = np.sinc(x * (_SINC2_FWHM / lc))
    return float(out) if np.isscalar(delta_um) else out


def temporal_labels(
    arm_a: Sequence[OpticalElement] = (),
    arm_b: Sequence[OpticalElement] = (),
    stage_delay_um: float = 0.0,
) -> dict[tuple[str, str], float]:
    """Accumulated optical path per (arm, polarization), in microns.

    The stage delay adds to arm b.  Polarization-mixing elements contribute
    the mean of their two extra paths to both labels.
    """
    labels = {
        ("a", "H"): 0.0,
        ("a", "V"): 0.0,
        ("b", "H"): float(stage_delay_um),
        ("b", "V"): float(stage_delay_um),
    }
    for arm, elements in (("a", arm_a), ("b", arm_b)):
        for e in elements:
            if e.mixes_polarizations:
                mean = 0.5 * (e.extra_path_h + e.extra_path_v)
                labels[(arm, "H")] += mean
                labels[(arm, "V")] += mean
            else:
                labels[(arm, "H")] += e.extra_path_h
                labels[(arm, "V")] += e.extra_path_v
    return labels


@dataclass(frozen=True)
class ChannelProbabilities:
    """Probabilities of the six two-detector coincidence channels plus the
    four bunched (both photons on one detector) outcomes.  The detectors do
    not resolve photon number, so bunched events register as singles; they
    are tracked here so the full outcome set sums to one."""

    channels: Mapping[str, float]
    doubles: Mapping[str, float]

    @property
    def bunched(self) -> float:
        return sum(self.doubles.values())

    def total(self) -> float:
        return sum(self.channels.values()) + self.bunched

    def detector_photon_means(self) -> dict[str, float]:
        """Expected photons per pair arriving at each detector."""
        out = {d: 0.0 for d in DETECTORS}
        for ch, p in self.channels.items():
            d1, d2 = channel_detectors(ch)
            out[d1] += p
            out[d2] += p
        for d, p in self.doubles.items():
            out[d] += 2.0 * p
        return out


def _transfer_matrix(arm_a, arm_b) -> np.ndarray:
    """Single-photon transfer amplitudes detector x source mode."""
    ja = stack_jones(arm_a)
    jb = stack_jones(arm_b)
    s = 1.0 / math.sqrt(2.0)
    f = np.zeros((4, 4), dtype=complex)
    f[0:2, 0:2] = ja * s        # a -> c
    f[2:4, 0:2] = -ja * s       # a -> d
    f[0:2, 2:4] = jb * s        # b -> c
    f[2:4, 2:4] = jb * s        # b -> d
    return f


def coincidence_probabilities(
    source: TwoPhotonState,
    arm_a: Sequence[OpticalElement] = (),
    arm_b: Sequence[OpticalElement] = (),
    stage_delay_um: float = 0.0,
    spectral: SpectralFilter | None = None,
    mode_overlap: float = 1.0,
) -> ChannelProbabilities:
    """Channel probabilities for a source on paths a/b sent through the arm
    element stacks and the beamsplitter at the given relative delay."""
    if spectral is None:
        spectral = SpectralFilter()
    if not 0.0 <= mode_overlap <= 1.0:
        raise ValueError("mode_overlap must lie in [0, 1]")
    bad = source.paths() - {"a", "b"}
    if bad:
        raise ValueError(f"source must live on paths a/b, found {sorted(bad)}")
    n = source.norm()
    if abs(n - 1.0) > 1e-6:
        raise ValueError(f"source must be normalized (norm {n:.6g})")
    for elements in (arm_a, arm_b):
        for e in elements:
            if not is_unitary(e.jones):
                raise ValueError(
                    f"element {e.label or '<unnamed>'} is not unitary; "
                    "lossy elements are not supported here"
                )

    f = _transfer_matrix(arm_a, arm_b)
    lab = temporal_labels(arm_a, arm_b, stage_delay_um)
    t_src = np.array([lab[(m.path, m.pol)] for m in _SRC_MODES])
    # sqrt so the coincidence cross term scales with mode_overlap itself
    arm_overlap = math.sqrt(mode_overlap)

    # (source index 1, source index 2, creation-product coefficient)
    pairs = []
    for (m, n_), amp in source.items():
        i, j = _SRC_INDEX[m], _SRC_INDEX[n_]
        pairs.append((i, j, amp / math.sqrt(2.0) if i == j else amp))

    def _gram(t: np.ndarray, arm: np.ndarray) -> np.ndarray:
        g = amplitude_kernel(spectral, t[:, None] - t[None, :])
        if arm_overlap != 1.0:
            cross = arm[:, None] != arm[None, :]
            g = np.where(cross, arm_overlap * g, g)
        return g

    def outcome_probability(d1: int, d2: int) -> float:
        amps, t1, t2, a1, a2 = [], [], [], [], []
        for (i, j, c) in pairs:
            for (p, q) in ((i, j), (j, i)):
                amps.append(c * f[d1, p] * f[d2, q])
                t1.append(t_src[p])
                t2.append(t_src[q])
                a1.append(_SRC_ARM[p])
                a2.append(_SRC_ARM[q])
        if not amps:
            return 0.0
        av = np.array(amps)
        g = _gram(np.array(t1), np.array(a1)) * _gram(np.array(t2), np.array(a2))
        p = float(np.real(np.sum(np.outer(av, av.conj()) * g)))
        return p if d1 != d2 else 0.5 * p

    channels = {}
    for ch, (d1, d2) in _CHANNEL_DETS.items():
        channels[ch] = max(outcome_probability(d1, d2), 0.0)
    doubles = {DETECTORS[d]: max(outcome_probability(d, d), 0.0) for d in range(4)}
    return ChannelProbabilities(channels=channels, doubles=doubles)
