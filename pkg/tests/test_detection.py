import math

import numpy as np
import pytest

from biphoton.detection import (
    AcquisitionConfig,
    accidental_rate,
    count_coincidences,
    expected_means,
    generate_timestamps,
    read_timestamps,
    sample_counts,
    write_timestamps,
)
from biphoton.interference import (
    CHANNELS,
    DETECTORS,
    ChannelProbabilities,
    SpectralFilter,
    coincidence_probabilities,
)
from biphoton.states import BellKind, make_bell


def flat_probs(p_hh=0.25, p_vv=0.25, bunched=0.5):
    channels = {ch: 0.0 for ch in CHANNELS}
    channels["Hc:Hd"] = p_hh
    channels["Vc:Vd"] = p_vv
    doubles = {d: bunched / 4 for d in DETECTORS}
    return ChannelProbabilities(channels=channels, doubles=doubles)


# --- accidental rate ------------------------------------------------------------

def test_accidental_rate_zero_when_either_rate_zero():
    assert accidental_rate(0.0, 123.0, 5e-9) == 0.0


def test_accidental_rate_arithmetic():
    assert accidental_rate(1e5, 1e5, 5e-9) == pytest.approx(100.0)


def test_accidental_rate_symmetric():
    assert accidental_rate(3.0, 7.0, 5e-9) == pytest.approx(
        accidental_rate(7.0, 3.0, 5e-9), rel=1e-15
    )


def test_accidental_rate_rejects_negative():
    with pytest.raises(ValueError):
        accidental_rate(-1.0, 1.0, 5e-9)


# --- sample_counts ----------------------------------------------------------------

def test_sample_counts_zero_probability_zero_darks():
    probs = ChannelProbabilities(
        channels={ch: 0.0 for ch in CHANNELS},
        doubles={"Hc": 1.0, "Vc": 0.0, "Hd": 0.0, "Vd": 0.0},
    )
    cfg = AcquisitionConfig(pair_rate=1000.0, duration=1.0, dark_rate=0.0, rng_seed=1)
    counts = sample_counts(probs, cfg)
    assert all(v == 0 for v in counts.channels.values())


def test_sample_counts_plateau_mean_matches_configuration():
    # pair_rate * duration = 23224 at probability 0.25 gives channel mean 5806
    cfg = AcquisitionConfig(pair_rate=464.48, duration=50.0, dark_rate=0.0, rng_seed=0)
    means, clicks = expected_means(flat_probs(), cfg)
    # the accidental term at these singles rates is ~0.02 counts
    assert means["Hc:Hd"] == pytest.approx(5806.0, abs=0.1)
    assert means["Vc:Vd"] == pytest.approx(5806.0, abs=0.1)
    draws = [
        sample_counts(flat_probs(), cfg.with_seed(s)).channels["Hc:Hd"]
        for s in range(200)
    ]
    assert np.mean(draws) == pytest.approx(5806.0, abs=5 * math.sqrt(5806.0 / 200))


def test_sample_counts_deterministic_per_seed():
    cfg = AcquisitionConfig(pair_rate=1e4, duration=1.0, dark_rate=50.0, rng_seed=42)
    a = sample_counts(flat_probs(), cfg)
    b = sample_counts(flat_probs(), cfg)
    assert a == b
    c = sample_counts(flat_probs(), cfg.with_seed(43))
    assert a != c


def test_sample_counts_efficiency_scaling():
    cfg = AcquisitionConfig(pair_rate=464.48, duration=50.0, detector_efficiency=0.5,
                            dark_rate=0.0, rng_seed=0)
    means, clicks = expected_means(flat_probs(), cfg)
    assert means["Hc:Hd"] == pytest.approx(5806.0 * 0.25, abs=0.1)
    # plateau singles: pair channels at eta plus bunched at 1-(1-eta)^2
    expected_clicks = 23224.0 * (0.25 * 0.5 + 0.125 * 0.75)
    assert clicks["Hc"] == pytest.approx(expected_clicks, abs=0.1)


def test_acquisition_config_validation():
    with pytest.raises(ValueError):
        AcquisitionConfig(pair_rate=-1.0)
    with pytest.raises(ValueError):
        AcquisitionConfig(detector_efficiency=1.5)
    with pytest.raises(ValueError):
        AcquisitionConfig(coincidence_window=0.0)
    with pytest.raises(ValueError):
        AcquisitionConfig(detector_efficiency={"Hc": 0.5, "XX": 0.1})


# --- generate_timestamps -----------------------------------------------------------

def test_generate_timestamps_empty_when_no_rates():
    cfg = AcquisitionConfig(pair_rate=0.0, duration=1.0, dark_rate=0.0, rng_seed=3)
    streams = generate_timestamps(flat_probs(), cfg)
    assert all(s.size == 0 for s in streams.values())


def test_generate_timestamps_dark_only_poisson_mean():
    rate, duration = 2000.0, 2.0
    cfg = AcquisitionConfig(pair_rate=0.0, duration=duration, dark_rate=rate, rng_seed=7)
    streams = generate_timestamps(flat_probs(), cfg)
    mean = rate * duration
    for det in DETECTORS:
        assert abs(streams[det].size - mean) < 5 * math.sqrt(mean)
        assert np.all(np.diff(streams[det]) >= 0)


def test_generate_timestamps_psi_minus_only_cross_channels():
    probs = coincidence_probabilities(make_bell(BellKind.PSI_MINUS),
                                      spectral=SpectralFilter(coherence_length_um=59.0))
    cfg = AcquisitionConfig(pair_rate=5e3, duration=1.0, dark_rate=0.0, rng_seed=11)
    streams = generate_timestamps(probs, cfg)
    counts = count_coincidences(streams, cfg.coincidence_window)
    assert counts.channels["Hc:Vd"] > 1000
    assert counts.channels["Vc:Hd"] > 1000
    # anything else is an accidental cross pairing, expected well below 10
    for ch in ("Hc:Hd", "Vc:Vd", "Hc:Vc", "Hd:Vd"):
        assert counts.channels[ch] <= 10


def test_generate_timestamps_deterministic():
    cfg = AcquisitionConfig(pair_rate=1e3, duration=1.0, dark_rate=100.0, rng_seed=5)
    s1 = generate_timestamps(flat_probs(), cfg)
    s2 = generate_timestamps(flat_probs(), cfg)
    for det in DETECTORS:
        assert np.array_equal(s1[det], s2[det])


# --- count_coincidences -------------------------------------------------------------

def _streams(hc=(), vc=(), hd=(), vd=()):
    return {
        "Hc": np.asarray(hc, dtype=float),
        "Vc": np.asarray(vc, dtype=float),
        "Hd": np.asarray(hd, dtype=float),
        "Vd": np.asarray(vd, dtype=float),
    }


def test_count_single_pair_inside_window():
    counts = count_coincidences(_streams(hc=[0.0], hd=[1e-9]), window=5e-9)
    assert counts.channels["Hc:Hd"] == 1


def test_count_single_pair_outside_window():
    counts = count_coincidences(_streams(hc=[0.0], hd=[10e-9]), window=5e-9)
    assert counts.channels["Hc:Hd"] == 0


def test_count_greedy_consumes_each_event_once():
    # two Hc events bracket one Hd event; only one pairing is allowed
    counts = count_coincidences(_streams(hc=[0.0, 1e-9], hd=[0.5e-9]), window=5e-9)
    assert counts.channels["Hc:Hd"] == 1


def test_count_unsorted_raises():
    with pytest.raises(ValueError, match="not sorted"):
        count_coincidences(_streams(hc=[1e-9, 0.0], hd=[0.0]), window=5e-9)


def test_count_unknown_detector_raises():
    streams = _streams()
    streams["XX"] = np.array([0.0])
    with pytest.raises(ValueError, match="unknown detector"):
        count_coincidences(streams, window=5e-9)


def test_counted_singles_are_stream_lengths():
    counts = count_coincidences(_streams(hc=[0.0, 1.0, 2.0], vd=[0.5]), window=5e-9)
    assert counts.singles["Hc"] == 3 and counts.singles["Vd"] == 1


def test_accidentals_match_formula_on_poisson_streams():
    rng = np.random.default_rng(99)
    duration, window = 2.0, 5e-9
    r1, r2 = 5e4, 8e4
    t1 = np.sort(rng.uniform(0, duration, rng.poisson(r1 * duration)))
    t2 = np.sort(rng.uniform(0, duration, rng.poisson(r2 * duration)))
    counts = count_coincidences(_streams(hc=t1, hd=t2), window)
    expected = accidental_rate(r1, r2, window) * duration
    assert abs(counts.channels["Hc:Hd"] - expected) < 5 * math.sqrt(expected)


def test_counter_agrees_with_sampling_means_random_configs():
    rng = np.random.default_rng(5150)
    for trial in range(100):
        mix = rng.dirichlet(np.ones(7))
        channels = {ch: float(mix[i]) for i, ch in enumerate(CHANNELS)}
        doubles = {d: float(mix[6] / 4) for d in DETECTORS}
        probs = ChannelProbabilities(channels=channels, doubles=doubles)
        cfg = AcquisitionConfig(
            pair_rate=float(rng.uniform(1e3, 2e4)),
            duration=float(rng.uniform(0.2, 0.8)),
            detector_efficiency=float(rng.uniform(0.5, 1.0)),
            dark_rate=float(rng.uniform(0, 2e3)),
            rng_seed=trial,
        )
        streams = generate_timestamps(probs, cfg)
        counted = count_coincidences(streams, cfg.coincidence_window)
        means, clicks = expected_means(probs, cfg)
        for ch in CHANNELS:
            tol = 5 * math.sqrt(means[ch]) + 5
            assert abs(counted.channels[ch] - means[ch]) < tol, (trial, ch)
        for det in DETECTORS:
            tol = 5 * math.sqrt(clicks[det]) + 5
            assert abs(counted.singles[det] - clicks[det]) < tol, (trial, det)


# --- timestamp text format -----------------------------------------------------------

def test_timestamp_text_roundtrip(tmp_path):
    cfg = AcquisitionConfig(pair_rate=2e3, duration=0.5, dark_rate=100.0, rng_seed=21)
    streams = generate_timestamps(flat_probs(), cfg)
    path = tmp_path / "events.tsv"
    write_timestamps(streams, path)
    back = read_timestamps(path)
    for det in DETECTORS:
        assert np.allclose(back[det], streams[det])
    first = path.read_text().splitlines()[0]
    det, t = first.split("\t")
    assert det in DETECTORS and float(t) >= -1e-6


def test_read_timestamps_rejects_garbage(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("Hc\t0.5\nnotadetector\t1.0\n")
    with pytest.raises(ValueError, match="unknown detector"):
        read_timestamps(path)
