import numpy as np
import pytest

from biphoton.states import BellKind, Mode, TwoPhotonState, make_bell, superpose


def random_state(rng, paths=("a", "b")) -> TwoPhotonState:
    """Random normalized two-photon state over the full symmetric space of the
    given paths (10-dimensional for two paths)."""
    modes = [Mode(p, s) for p in paths for s in "HV"]
    amp = {}
    for i, m in enumerate(modes):
        for n in modes[i:]:
            amp[(m, n)] = complex(rng.standard_normal(), rng.standard_normal())
    return TwoPhotonState(amp).normalized()


def random_bell_combo(rng):
    """Random unit-norm complex combination of the four Bell states."""
    c = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    c = c / np.linalg.norm(c)
    kinds = list(BellKind)
    state = superpose([(c[i], make_bell(kinds[i])) for i in range(4)])
    return state, dict(zip(kinds, c))


def random_unitary2(rng) -> np.ndarray:
    """Haar-distributed 2x2 unitary via QR with phase fix."""
    z = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240810)
