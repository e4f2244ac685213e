"""Algebra of two-photon bosonic states on labelled path/polarization modes.

A single-photon mode is a (path, polarization) slot, with paths a/b at the
interferometer input, c/d at the output, and polarizations H/V.  A two-photon
state is a sparse map from canonical unordered mode pairs to complex
amplitudes; for two photons on the four a/b modes the symmetric space is
10-dimensional.

Conventions
-----------
* Amplitudes are taken with respect to orthonormal two-photon kets.  The
  stored amplitude of a doubly occupied pair (m, m) multiplies the normalized
  ket |2_m>.  Since a+_m a+_m |0> = sqrt(2) |2_m>, a ket written as a raw
  creation-operator product carries an extra sqrt(2) relative to the stored
  amplitude.  With this convention the squared norm is the plain sum of
  |amplitude|^2 and probabilities read off directly from amplitudes.
* Detectors cannot see a global phase, so state comparisons in tests use the
  overlap modulus (``overlap_modulus``).
"""

from __future__ import annotations

import math
from enum import Enum
from typing import Iterable, Mapping, NamedTuple, Sequence

PATHS = ("a", "b", "c", "d")
POLS = ("H", "V")

_SQRT2 = math.sqrt(2.0)


class Mode(NamedTuple):
    """One (path, polarization) slot.  Tuple ordering is path-major then pol,
    which fixes the canonical representation of unordered pairs."""

    path: str
    pol: str


def mode(path: str, pol: str) -> Mode:
    if path not in PATHS:
        raise ValueError(f"unknown path {path!r}, expected one of {PATHS}")
    if pol not in POLS:
        raise ValueError(f"unknown polarization {pol!r}, expected one of {POLS}")
    return Mode(path, pol)


class BellKind(Enum):
    PHI_PLUS = "phi_plus"
    PHI_MINUS = "phi_minus"
    PSI_PLUS = "psi_plus"
    PSI_MINUS = "psi_minus"


def _canonical(m: Mode, n: Mode) -> tuple[Mode, Mode]:
    return (m, n) if m <= n else (n, m)


class TwoPhotonState:
    """Sparse two-photon state over canonical unordered mode pairs."""

    __slots__ = ("_amp",)

    def __init__(self, amplitudes: Mapping[tuple[Mode, Mode], complex] | None = None):
        amp: dict[tuple[Mode, Mode], complex] = {}
        if amplitudes:
            for (m, n), a in amplitudes.items():
                a = complex(a)
                if a == 0:
                    continue
                key = _canonical(m, n)
                amp[key] = amp.get(key, 0.0) + a
        self._amp = {k: v for k, v in amp.items() if v != 0}

    def items(self) -> Iterable[tuple[tuple[Mode, Mode], complex]]:
        return self._amp.items()

    def amplitude(self, m: Mode, n: Mode) -> complex:
        return self._amp.get(_canonical(m, n), 0.0)

    def norm(self) -> float:
        return math.sqrt(sum(abs(a) ** 2 for a in self._amp.values()))

    def normalized(self) -> "TwoPhotonState":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero state")
        return TwoPhotonState({k: v / n for k, v in self._amp.items()})

    def paths(self) -> frozenset[str]:
        """Set of paths carrying any amplitude."""
        out = set()
        for (m, n) in self._amp:
            out.add(m.path)
            out.add(n.path)
        return frozenset(out)

    def pruned(self, eps: float = 1e-14) -> "TwoPhotonState":
        """Drop entries with |amplitude| below ``eps`` (numerical dust)."""
        return TwoPhotonState({k: v for k, v in self._amp.items() if abs(v) > eps})

    def to_text(self) -> str:
        """Serialize as one 'path pol path pol re im' row per amplitude."""
        lines = []
        for (m, n) in sorted(self._amp):
            a = self._amp[(m, n)]
            lines.append(
                f"{m.path} {m.pol} {n.path} {n.pol} {a.real:.17g} {a.imag:.17g}"
            )
        return "\n".join(lines)

    @classmethod
    def from_text(cls, text: str) -> "TwoPhotonState":
        amp = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 6:
                raise ValueError(f"line {lineno}: expected 6 fields, got {len(fields)}")
            p1, s1, p2, s2, re, im = fields
            key = _canonical(mode(p1, s1), mode(p2, s2))
            amp[key] = amp.get(key, 0.0) + complex(float(re), float(im))
        return cls(amp)

    def __repr__(self) -> str:
        terms = ", ".join(
            f"{m.path}{m.pol},{n.path}{n.pol}: {a:.4g}" for (m, n), a in sorted(self._amp.items())
        )
        return f"TwoPhotonState({{{terms}}})"


_BELL_TABLE = {
    BellKind.PHI_PLUS: ((("a", "H"), ("b", "H"), 1.0), (("a", "V"), ("b", "V"), 1.0)),
    BellKind.PHI_MINUS: ((("a", "H"), ("b", "H"), 1.0), (("a", "V"), ("b", "V"), -1.0)),
    BellKind.PSI_PLUS: ((("a", "H"), ("b", "V"), 1.0), (("a", "V"), ("b", "H"), 1.0)),
    BellKind.PSI_MINUS: ((("a", "H"), ("b", "V"), 1.0), (("a", "V"), ("b", "H"), -1.0)),
}


def make_bell(kind: BellKind) -> TwoPhotonState:
    """Normalized Bell state on input paths a, b."""
    amp = {}
    for (m, n, sign) in _BELL_TABLE[kind]:
        amp[(Mode(*m), Mode(*n))] = sign / _SQRT2
    return TwoPhotonState(amp)


def _check_same_paths(x: TwoPhotonState, y: TwoPhotonState) -> None:
    px, py = x.paths(), y.paths()
    if px and py and px != py:
        raise ValueError(f"mismatched path sets: {sorted(px)} vs {sorted(py)}")


def inner_product(x: TwoPhotonState, y: TwoPhotonState) -> complex:
    """<x|y>, conjugate-linear in the first argument."""
    _check_same_paths(x, y)
    total = 0.0 + 0.0j
    for key, ax in x.items():
        ay = y.amplitude(*key)
        if ay != 0:
            total += ax.conjugate() * ay
    return total


def overlap_modulus(x: TwoPhotonState, y: TwoPhotonState) -> float:
    """|<x|y>| of the unit-normalized states; 1 means equal up to global phase."""
    return abs(inner_product(x.normalized(), y.normalized()))


def superpose(terms: Sequence[tuple[complex, TwoPhotonState]]) -> TwoPhotonState:
    """Linear combination of states.  Not auto-normalized."""
    if not terms:
        raise ValueError("superpose requires at least one term")
    path_sets = [s.paths() for _, s in terms if s.paths()]
    for ps in path_sets[1:]:
        if ps != path_sets[0]:
            raise ValueError(f"mismatched path sets: {sorted(path_sets[0])} vs {sorted(ps)}")
    amp: dict[tuple[Mode, Mode], complex] = {}
    for coeff, state in terms:
        for key, a in state.items():
            amp[key] = amp.get(key, 0.0) + complex(coeff) * a
    return TwoPhotonState(amp)


def bell_fractions(state: TwoPhotonState) -> dict[BellKind, float]:
    """|<Bell_k|state>|^2 for each k.  Sums to 1 only on the Bell manifold."""
    extra = state.paths() - {"a", "b"}
    if extra:
        raise ValueError(f"state occupies output paths {sorted(extra)}; expected a/b only")
    n = state.norm()
    if abs(n - 1.0) > 1e-6:
        raise ValueError(f"state must be normalized (norm {n:.6g})")
    return {k: abs(inner_product(make_bell(k), state)) ** 2 for k in BellKind}


def transform_modes(
    state: TwoPhotonState,
    mapping: Mapping[Mode, Sequence[tuple[Mode, complex]]],
) -> TwoPhotonState:
    """Apply a linear single-photon mode map to both photons.

    ``mapping`` sends each input mode's creation operator to a weighted sum of
    output-mode creation operators; missing modes map to themselves.  The
    doubly-occupied sqrt(2) factors of the amplitude convention are handled
    here, so unitary maps preserve the norm exactly.
    """
    out: dict[tuple[Mode, Mode], complex] = {}
    for (m, n), amp in state.items():
        coeff = amp / _SQRT2 if m == n else amp  # creation-product coefficient
        for (k, ck) in mapping.get(m, ((m, 1.0),)):
            for (l, cl) in mapping.get(n, ((n, 1.0),)):
                w = coeff * ck * cl
                if w == 0:
                    continue
                if k == l:
                    key = (k, l)
                    out[key] = out.get(key, 0.0) + w * _SQRT2
                else:
                    key = _canonical(k, l)
                    out[key] = out.get(key, 0.0) + w
    return TwoPhotonState(out).pruned()
