"""Jones matrices for optical elements and their action on two-photon states.

Matrices are 2x2 complex ndarrays acting on (H, V) column vectors.  All
waveplates use real matrices with the retardation's global phase folded in,
which is unobservable in coincidence rates.  Angles are radians throughout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .states import Mode, TwoPhotonState, transform_modes

_SQRT1_2 = 1.0 / math.sqrt(2.0)


def identity() -> np.ndarray:
    return np.eye(2, dtype=complex)


def rotation(theta: float) -> np.ndarray:
    """Rotation of the polarization plane by theta: [[cos, sin], [-sin, cos]]."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]], dtype=complex)


def retarder(phase: float, axis: float = 0.0) -> np.ndarray:
    """Linear retarder with the given phase between fast and slow axes,
    fast axis at ``axis`` to H."""
    d = np.array([[1.0, 0.0], [0.0, np.exp(1j * phase)]], dtype=complex)
    return rotation(-axis) @ d @ rotation(axis)


def hwp(theta: float) -> np.ndarray:
    """Half-wave plate, fast axis at theta: [[cos 2t, sin 2t], [sin 2t, -cos 2t]]."""
    c, s = math.cos(2 * theta), math.sin(2 * theta)
    return np.array([[c, s], [s, -c]], dtype=complex)


def qwp(theta: float) -> np.ndarray:
    """Standard quarter-wave plate, fast axis at theta.

    Note this is retarder(pi/2, theta), not the 90-degree rotation matrix
    [[0, 1], [-1, 0]]; the latter is available as ``rotation(pi/2)`` or
    ``faraday(pi/2)`` and acts differently on entangled inputs.
    """
    return retarder(math.pi / 2.0, theta)


def faraday(theta: float) -> np.ndarray:
    """Faraday rotator: circular birefringence rotating polarization by theta."""
    return rotation(theta)


def custom(a: complex, b: complex, c: complex, d: complex) -> np.ndarray:
    j = np.array([[a, b], [c, d]], dtype=complex)
    if not is_unitary(j):
        warnings.warn(
            "custom Jones matrix is not unitary; coincidence probabilities "
            "assume lossless elements",
            stacklevel=2,
        )
    return j


def is_unitary(j: np.ndarray, tol: float = 1e-9) -> bool:
    return bool(np.allclose(j.conj().T @ j, np.eye(2), atol=tol))


@dataclass(frozen=True)
class JonesDecomposition:
    """Coefficients of the orthogonal basis identity, diag(1,-1),
    offdiag(1,1), offdiag(1,-1)."""

    alpha: complex
    beta: complex
    kappa: complex
    delta: complex

    def compose(self) -> np.ndarray:
        return np.array(
            [
                [self.alpha + self.beta, self.kappa + self.delta],
                [self.kappa - self.delta, self.alpha - self.beta],
            ],
            dtype=complex,
        )


def decompose(j: np.ndarray) -> JonesDecomposition:
    """Closed-form projection onto the four orthogonal basis matrices."""
    a, b = complex(j[0, 0]), complex(j[0, 1])
    c, d = complex(j[1, 0]), complex(j[1, 1])
    return JonesDecomposition(
        alpha=(a + d) / 2.0,
        beta=(a - d) / 2.0,
        kappa=(b + c) / 2.0,
        delta=(b - c) / 2.0,
    )


def compose(dec: JonesDecomposition) -> np.ndarray:
    return dec.compose()


@dataclass(frozen=True, eq=False)
class OpticalElement:
    """A Jones matrix plus the polarization-resolved optical path length it
    adds (microns).  The extra paths feed temporal walk-off in the
    interference model and are deliberately separate from the matrix."""

    jones: np.ndarray
    extra_path_h: float = 0.0
    extra_path_v: float = 0.0
    label: str = ""

    def __post_init__(self):
        j = np.asarray(self.jones, dtype=complex)
        if j.shape != (2, 2):
            raise ValueError(f"Jones matrix must be 2x2, got {j.shape}")
        object.__setattr__(self, "jones", j)
        if self.extra_path_h < 0 or self.extra_path_v < 0:
            raise ValueError("extra optical paths must be >= 0")

    @property
    def mixes_polarizations(self) -> bool:
        return bool(abs(self.jones[0, 1]) > 1e-12 or abs(self.jones[1, 0]) > 1e-12)


def make_element(name: str, *, theta: float = 0.0, phase: float = 0.0,
                 axis: float = 0.0, a: complex = 1.0, b: complex = 0.0,
                 c: complex = 0.0, d: complex = 1.0,
                 extra_path_h: float = 0.0, extra_path_v: float = 0.0,
                 label: str = "") -> OpticalElement:
    """Element library addressable by name, used by the experiment config."""
    builders = {
        "identity": identity,
        "rotation": lambda: rotation(theta),
        "hwp": lambda: hwp(theta),
        "qwp": lambda: qwp(theta),
        "retarder": lambda: retarder(phase, axis),
        "faraday": lambda: faraday(theta),
        "custom": lambda: custom(a, b, c, d),
    }
    if name not in builders:
        raise ValueError(f"unknown element {name!r}, expected one of {sorted(builders)}")
    return OpticalElement(
        jones=builders[name](),
        extra_path_h=extra_path_h,
        extra_path_v=extra_path_v,
        label=label or name,
    )


def stack_jones(elements) -> np.ndarray:
    """Combined Jones matrix of a stack; the first element is traversed first."""
    j = identity()
    for e in elements:
        j = e.jones @ j
    return j


def apply_to_arm(state: TwoPhotonState, j: np.ndarray, arm: str) -> TwoPhotonState:
    """Apply a polarization map to every photon on the given arm.

    Creation operators transform as a+_H -> A a+_H + C a+_V and
    a+_V -> B a+_H + D a+_V, so single-photon amplitudes transform by the
    matrix itself.  Linear; norm-preserving iff the matrix is unitary.
    """
    j = np.asarray(j, dtype=complex)
    h, v = Mode(arm, "H"), Mode(arm, "V")
    mapping = {
        h: ((h, j[0, 0]), (v, j[1, 0])),
        v: ((h, j[0, 1]), (v, j[1, 1])),
    }
    return transform_modes(state, mapping)


def beamsplitter(state: TwoPhotonState) -> TwoPhotonState:
    """Propagate an a/b state through the lossless 50/50 beamsplitter.

    The mode conversion (c, d) = ((a + b), (-a + b))/sqrt(2) fixes the
    creation-operator substitution a+ -> (c+ - d+)/sqrt(2),
    b+ -> (c+ + d+)/sqrt(2), applied identically to H and V.
    """
    bad = state.paths() - {"a", "b"}
    if bad:
        raise ValueError(f"state already occupies output paths {sorted(bad)}")
    mapping = {}
    for pol in ("H", "V"):
        mapping[Mode("a", pol)] = (
            (Mode("c", pol), _SQRT1_2),
            (Mode("d", pol), -_SQRT1_2),
        )
        mapping[Mode("b", pol)] = (
            (Mode("c", pol), _SQRT1_2),
            (Mode("d", pol), _SQRT1_2),
        )
    return transform_modes(state, mapping)
