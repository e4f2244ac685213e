import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biphoton.elements import OpticalElement, apply_to_arm, beamsplitter, identity
from biphoton.interference import (
    CHANNELS,
    DETECTORS,
    SpectralFilter,
    channel_detectors,
    coherence_length_from_filter,
    coincidence_probabilities,
    detector_mode,
    overlap_kernel,
    temporal_labels,
)
from biphoton.states import BellKind, Mode, TwoPhotonState, make_bell, superpose

from conftest import random_bell_combo, random_state, random_unitary2

GAUSS = SpectralFilter(shape="gaussian", coherence_length_um=59.0)
RECT = SpectralFilter(shape="rectangular", coherence_length_um=59.0)
FAR = 5000.0  # delay where any kernel is numerically zero


# --- kernel -------------------------------------------------------------------

def test_kernel_peak_and_decay():
    for f in (GAUSS, RECT):
        assert overlap_kernel(f, 0.0) == pytest.approx(1.0)
        assert overlap_kernel(f, FAR) < 1e-6
        assert overlap_kernel(f, 13.7) == pytest.approx(overlap_kernel(f, -13.7))


def test_gaussian_kernel_half_at_half_fwhm():
    assert overlap_kernel(GAUSS, 59.0 / 2) == pytest.approx(0.5, abs=1e-12)
    assert overlap_kernel(GAUSS, -59.0 / 2) == pytest.approx(0.5, abs=1e-12)


def _bisect(f, lo, hi, tol=1e-12):
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (f(mid) > 0) == (flo > 0):
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def test_rectangular_kernel_central_fwhm_matches_configuration():
    half = _bisect(lambda x: overlap_kernel(RECT, x) - 0.5, 0.0, 59.0)
    assert 2 * half == pytest.approx(59.0, abs=1e-6)


def test_rectangular_kernel_has_sidelobes():
    x = np.linspace(0, 300, 3001)
    k = overlap_kernel(RECT, x)
    first_zero = x[np.argmax(k < 1e-12)]
    beyond = k[x > first_zero]
    assert beyond.max() > 0.01  # sidelobe fringes past the first null


@given(st.floats(min_value=-500.0, max_value=500.0),
       st.sampled_from(["gaussian", "rectangular"]))
@settings(max_examples=80, deadline=None)
def test_kernel_bounds_and_parity_property(delta, shape):
    f = SpectralFilter(shape=shape, coherence_length_um=59.0)
    k = overlap_kernel(f, delta)
    assert 0.0 <= k <= 1.0 + 1e-15
    assert k == pytest.approx(overlap_kernel(f, -delta), abs=1e-15)


def test_kernel_probability_bounds():
    x = np.linspace(-400, 400, 2001)
    for f in (GAUSS, RECT):
        k = overlap_kernel(f, x)
        assert np.all(k >= 0) and np.all(k <= 1 + 1e-15)


def test_filter_formula_default_and_override():
    assert coherence_length_from_filter(810.0, 10.0) == pytest.approx(10.4422, abs=1e-3)
    f = SpectralFilter(center_wavelength_nm=810.0, bandwidth_fwhm_nm=10.0)
    assert f.dip_fwhm_um == pytest.approx(10.4422, abs=1e-3)
    assert GAUSS.dip_fwhm_um == 59.0  # configured value wins over the formula


def test_filter_validation():
    with pytest.raises(ValueError):
        SpectralFilter(bandwidth_fwhm_nm=-1.0)
    with pytest.raises(ValueError):
        SpectralFilter(shape="boxcar")


# --- temporal labels -----------------------------------------------------------

def test_temporal_labels_stage_delay_on_arm_b():
    lab = temporal_labels(stage_delay_um=17.0)
    assert lab[("a", "H")] == 0.0 and lab[("a", "V")] == 0.0
    assert lab[("b", "H")] == 17.0 and lab[("b", "V")] == 17.0


def test_temporal_labels_walkoff_and_mixing_mean():
    plate = OpticalElement(np.diag([1, -1]).astype(complex), extra_path_h=2.0, extra_path_v=8.0)
    mixer = OpticalElement(np.array([[0, 1], [1, 0]], dtype=complex),
                           extra_path_h=4.0, extra_path_v=6.0)
    lab = temporal_labels(arm_a=[plate, mixer])
    # diagonal element resolves polarization, mixing element adds its mean
    assert lab[("a", "H")] == pytest.approx(2.0 + 5.0)
    assert lab[("a", "V")] == pytest.approx(8.0 + 5.0)


# --- channel probabilities: stated examples ------------------------------------

def test_phi_plus_distinguishable_plateau_quarter():
    cp = coincidence_probabilities(make_bell(BellKind.PHI_PLUS), stage_delay_um=FAR,
                                   spectral=GAUSS)
    assert cp.channels["Hc:Hd"] == pytest.approx(0.25, abs=1e-9)
    assert cp.channels["Vc:Vd"] == pytest.approx(0.25, abs=1e-9)
    for ch in ("Hc:Vd", "Vc:Hd", "Hc:Vc", "Hd:Vd"):
        assert cp.channels[ch] == pytest.approx(0.0, abs=1e-12)


def test_phi_plus_indistinguishable_full_suppression():
    cp = coincidence_probabilities(make_bell(BellKind.PHI_PLUS), stage_delay_um=0.0,
                                   spectral=GAUSS)
    for ch in CHANNELS:
        assert cp.channels[ch] == pytest.approx(0.0, abs=1e-12)
    assert cp.bunched == pytest.approx(1.0, abs=1e-12)


def test_psi_minus_cross_channels_follow_one_plus_kernel_over_four():
    # Antisymmetric state anti-bunches: (1 + K)/4 per cross channel, so 0.5
    # at zero delay and 0.25 at the distinguishable plateau.  The delay
    # dependence is required by the distinguishable-photon limit.
    for delay in (0.0, 20.0, 59.0, FAR):
        k = overlap_kernel(GAUSS, delay)
        cp = coincidence_probabilities(make_bell(BellKind.PSI_MINUS),
                                       stage_delay_um=delay, spectral=GAUSS)
        assert cp.channels["Vc:Hd"] == pytest.approx((1 + k) / 4, abs=1e-12)
        assert cp.channels["Hc:Vd"] == pytest.approx((1 + k) / 4, abs=1e-12)
        assert cp.channels["Hc:Hd"] == pytest.approx(0.0, abs=1e-12)
        assert cp.total() == pytest.approx(1.0, abs=1e-12)


def test_psi_plus_bunches_into_same_path_channels():
    cp = coincidence_probabilities(make_bell(BellKind.PSI_PLUS), spectral=GAUSS)
    assert cp.channels["Hc:Vc"] == pytest.approx(0.5, abs=1e-12)
    assert cp.channels["Hd:Vd"] == pytest.approx(0.5, abs=1e-12)
    assert cp.channels["Vc:Hd"] == pytest.approx(0.0, abs=1e-12)


def test_rotation_admixture_cross_rate_scales_as_delta_squared():
    for t in (0.1, 0.35, 1.0):
        ups = superpose([(math.cos(t), make_bell(BellKind.PHI_PLUS)),
                         (math.sin(t), make_bell(BellKind.PSI_MINUS))])
        cp = coincidence_probabilities(ups, stage_delay_um=0.0, spectral=GAUSS)
        assert cp.channels["Vc:Hd"] == pytest.approx(math.sin(t) ** 2 / 2, abs=1e-12)
        assert cp.channels["Hc:Vd"] == pytest.approx(math.sin(t) ** 2 / 2, abs=1e-12)


# --- limits against independent oracles ----------------------------------------

def _pure_state_probabilities(source, arm_a, arm_b):
    """K=1 oracle: squared amplitudes of the pure-state propagation."""
    s = source
    ja = identity()
    for e in arm_a:
        ja = e.jones @ ja
    jb = identity()
    for e in arm_b:
        jb = e.jones @ jb
    s = apply_to_arm(s, ja, "a")
    s = apply_to_arm(s, jb, "b")
    s = beamsplitter(s)
    channels = {}
    for ch in CHANNELS:
        d1, d2 = channel_detectors(ch)
        channels[ch] = abs(s.amplitude(detector_mode(d1), detector_mode(d2))) ** 2
    doubles = {d: abs(s.amplitude(detector_mode(d), detector_mode(d))) ** 2
               for d in DETECTORS}
    return channels, doubles


def test_zero_delay_matches_pure_state_amplitudes(rng):
    sources = [make_bell(k) for k in BellKind]
    for trial in range(100):
        arm_a = (OpticalElement(random_unitary2(rng)),)
        arm_b = (OpticalElement(random_unitary2(rng)),)
        src = sources[trial % 4]
        cp = coincidence_probabilities(src, arm_a, arm_b, 0.0, GAUSS)
        channels, doubles = _pure_state_probabilities(src, arm_a, arm_b)
        for ch in CHANNELS:
            assert cp.channels[ch] == pytest.approx(channels[ch], abs=1e-10)
        for d in DETECTORS:
            assert cp.doubles[d] == pytest.approx(doubles[d], abs=1e-10)


_POL = {"H": 0, "V": 1}


def _distinguishable_probabilities(source, arm_a, arm_b):
    """K=0 oracle: the photon from arm a and the photon from arm b propagate
    as distinguishable particles; assignment amplitudes never interfere."""
    ja = identity()
    for e in arm_a:
        ja = e.jones @ ja
    jb = identity()
    for e in arm_b:
        jb = e.jones @ jb
    psi = np.zeros((2, 2), dtype=complex)  # joint polarization amplitudes
    for (m, n), amp in source.items():
        assert {m.path, n.path} == {"a", "b"}, "oracle needs one photon per arm"
        if m.path == "a":
            psi[_POL[m.pol], _POL[n.pol]] += amp
        else:
            psi[_POL[n.pol], _POL[m.pol]] += amp
    s = 1 / math.sqrt(2)
    # per-particle transfer: detector mode (row) from arm polarization (col)
    fa = np.zeros((4, 2), dtype=complex)
    fb = np.zeros((4, 2), dtype=complex)
    fa[0:2, :] = ja * s
    fa[2:4, :] = -ja * s
    fb[0:2, :] = jb * s
    fb[2:4, :] = jb * s
    x = np.einsum("ip,jq,pq->ij", fa, fb, psi)  # particle a -> i, b -> j
    channels = {}
    for ch in CHANNELS:
        d1, d2 = channel_detectors(ch)
        i, j = DETECTORS.index(d1), DETECTORS.index(d2)
        channels[ch] = abs(x[i, j]) ** 2 + abs(x[j, i]) ** 2
    doubles = {d: abs(x[DETECTORS.index(d), DETECTORS.index(d)]) ** 2 for d in DETECTORS}
    return channels, doubles


def test_large_delay_matches_distinguishable_oracle(rng):
    for trial in range(100):
        state, _ = random_bell_combo(rng)
        arm_a = (OpticalElement(random_unitary2(rng)),)
        arm_b = (OpticalElement(random_unitary2(rng)),)
        cp = coincidence_probabilities(state, arm_a, arm_b, FAR, GAUSS)
        channels, doubles = _distinguishable_probabilities(state, arm_a, arm_b)
        for ch in CHANNELS:
            assert cp.channels[ch] == pytest.approx(channels[ch], abs=1e-10)
        for d in DETECTORS:
            assert cp.doubles[d] == pytest.approx(doubles[d], abs=1e-10)


# --- invariants -----------------------------------------------------------------

def test_probability_conservation_random_configs(rng):
    for _ in range(200):
        state = random_state(rng)  # full 10-dim space, double occupation included
        arm_a = (OpticalElement(random_unitary2(rng),
                                extra_path_h=rng.uniform(0, 40),
                                extra_path_v=rng.uniform(0, 40)),)
        arm_b = (OpticalElement(random_unitary2(rng),
                                extra_path_h=rng.uniform(0, 40),
                                extra_path_v=rng.uniform(0, 40)),)
        spectral = SpectralFilter(
            shape=rng.choice(["gaussian", "rectangular"]),
            coherence_length_um=rng.uniform(5, 120),
        )
        cp = coincidence_probabilities(
            state, arm_a, arm_b,
            stage_delay_um=rng.uniform(-200, 200),
            spectral=spectral,
            mode_overlap=rng.uniform(0, 1),
        )
        assert cp.total() == pytest.approx(1.0, abs=1e-9)
        for v in list(cp.channels.values()) + list(cp.doubles.values()):
            assert -1e-12 <= v <= 1.0 + 1e-12


def test_dip_even_and_minimized_at_zero():
    deltas = np.linspace(0, 150, 151)
    probs = [coincidence_probabilities(make_bell(BellKind.PHI_PLUS),
                                       stage_delay_um=d, spectral=GAUSS).channels["Hc:Hd"]
             for d in deltas]
    mirrored = [coincidence_probabilities(make_bell(BellKind.PHI_PLUS),
                                          stage_delay_um=-d, spectral=GAUSS).channels["Hc:Hd"]
                for d in deltas]
    assert np.allclose(probs, mirrored, atol=1e-12)
    assert np.all(np.diff(probs) >= -1e-12)  # monotone out of the dip
    assert probs[0] == pytest.approx(0.0, abs=1e-12)


def test_walkoff_shifts_v_dip_by_exact_path_difference():
    w = 23.0
    plate = OpticalElement(identity(), extra_path_h=0.0, extra_path_v=w)
    for delta in np.linspace(-60, 60, 41):
        shifted = coincidence_probabilities(
            make_bell(BellKind.PHI_PLUS), arm_a=(plate,),
            stage_delay_um=delta + w, spectral=GAUSS).channels["Vc:Vd"]
        reference = coincidence_probabilities(
            make_bell(BellKind.PHI_PLUS),
            stage_delay_um=delta, spectral=GAUSS).channels["Vc:Vd"]
        assert shifted == pytest.approx(reference, abs=1e-12)


def test_mode_overlap_caps_visibility():
    eta = 0.917
    cp = coincidence_probabilities(make_bell(BellKind.PHI_PLUS), spectral=GAUSS,
                                   mode_overlap=eta)
    assert cp.channels["Hc:Hd"] == pytest.approx((1 - eta) / 4, abs=1e-12)
    assert cp.total() == pytest.approx(1.0, abs=1e-12)


# --- validation -----------------------------------------------------------------

def test_rejects_unnormalized_source():
    s = TwoPhotonState({(Mode("a", "H"), Mode("b", "H")): 0.4})
    with pytest.raises(ValueError, match="normalized"):
        coincidence_probabilities(s)


def test_rejects_output_path_source():
    s = TwoPhotonState({(Mode("c", "H"), Mode("d", "H")): 1.0})
    with pytest.raises(ValueError, match="paths a/b"):
        coincidence_probabilities(s)


def test_rejects_lossy_elements():
    lossy = OpticalElement(np.diag([0.5, 0.5]).astype(complex), label="attenuator")
    with pytest.raises(ValueError, match="not unitary"):
        coincidence_probabilities(make_bell(BellKind.PHI_PLUS), arm_a=(lossy,))


def test_rejects_bad_mode_overlap():
    with pytest.raises(ValueError, match="mode_overlap"):
        coincidence_probabilities(make_bell(BellKind.PHI_PLUS), mode_overlap=1.5)
