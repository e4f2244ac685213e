"""Simulation and analysis of polarization-entangled two-photon
interferometry: Bell-pair sources, Jones-matrix optics, beamsplitter
interference with tunable distinguishability, coincidence detection with shot
noise, and the fitting pipeline for visibility, coherence length, Bell-state
fractions and Faraday rotation."""

from .analysis import (
    BellFractionEstimate,
    FitResult,
    coherence_from_fit,
    estimate_bell_fractions,
    fit_gaussian_offset,
    fit_line,
    fit_sin2_field,
    fit_sin2_offset,
    fit_verdet,
    rotation_from_counts,
    verdet_from_field_extrema,
    visibility,
)
from .detection import (
    AcquisitionConfig,
    ChannelCounts,
    accidental_rate,
    count_coincidences,
    generate_timestamps,
    read_timestamps,
    sample_counts,
    write_timestamps,
)
from .elements import (
    JonesDecomposition,
    OpticalElement,
    apply_to_arm,
    beamsplitter,
    compose,
    custom,
    decompose,
    faraday,
    hwp,
    identity,
    make_element,
    qwp,
    retarder,
    rotation,
)
from .experiment import (
    Apparatus,
    FaradaySample,
    ScanResult,
    run_delay_scan,
    run_field_scan,
    run_hwp_scan,
)
from .interference import (
    CHANNELS,
    DETECTORS,
    ChannelProbabilities,
    SpectralFilter,
    coherence_length_from_filter,
    coincidence_probabilities,
    overlap_kernel,
    temporal_labels,
)
from .states import (
    BellKind,
    Mode,
    TwoPhotonState,
    bell_fractions,
    inner_product,
    make_bell,
    mode,
    overlap_modulus,
    superpose,
    transform_modes,
)

__version__ = "0.1.0"
