"""Fits and derived quantities: dip visibility, coherence length, Bell-state
fractions, polarization rotation, Verdet constant.

The fitter is a damped Gauss-Newton (Levenberg-Marquardt) loop with Poisson
weights sigma_i = sqrt(max(y_i, 1)) and analytic Jacobians.  Parameter
uncertainties come from the covariance of the linearized problem at the
solution.  The convergence flag is set only when the gradient norm measured
in the information-matrix metric (the Newton decrement, which bounds the
achievable chi-square decrease) is below tolerance.  Initial guesses are
derived from the data, never supplied by callers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .detection import ChannelCounts, accidental_rate
from .experiment import ScanResult
from .interference import DETECTORS, channel_detectors
from .states import BellKind

SPEED_OF_LIGHT_UM_PER_FS = 0.299792458

_FOUR_LN2 = 4.0 * math.log(2.0)
_DEG = math.pi / 180.0
_GRAD_TOL = 1e-8


@dataclass(frozen=True)
class FitResult:
    model: str
    params: dict[str, float]
    uncertainties: dict[str, float]
    residual_sum_squares: float      # weighted chi-square
    converged: bool
    iterations: int
    covariance: np.ndarray | None = None
    param_names: tuple[str, ...] = ()
    message: str = ""

    def param_sigma(self, name: str) -> float:
        return self.uncertainties[name]


# ---------------------------------------------------------------------------
# model families


def eval_gaussian_offset(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """offset + amplitude * exp(-4 ln2 (x - center)^2 / fwhm^2)"""
    a, x0, w, c = p
    w2 = max(w * w, 1e-300)
    return c + a * np.exp(-_FOUR_LN2 * (x - x0) ** 2 / w2)


def jac_gaussian_offset(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    a, x0, w, c = p
    w_safe = w if abs(w) > 1e-150 else 1e-150
    u = (x - x0) / w_safe
    e = np.exp(-_FOUR_LN2 * u**2)
    j = np.empty((x.size, 4))
    j[:, 0] = e
    j[:, 1] = a * e * 2.0 * _FOUR_LN2 * u / w_safe
    j[:, 2] = a * e * 2.0 * _FOUR_LN2 * u**2 / w_safe
    j[:, 3] = 1.0
    return j


def eval_sin2_offset(x_deg: np.ndarray, p: np.ndarray, k: float) -> np.ndarray:
    """offset + amplitude * sin^2(k (x - theta0)), x and theta0 in degrees."""
    a, t0, c = p
    return c + a * np.sin(k * _DEG * (x_deg - t0)) ** 2


def jac_sin2_offset(x_deg: np.ndarray, p: np.ndarray, k: float) -> np.ndarray:
    a, t0, c = p
    u = k * _DEG * (x_deg - t0)
    j = np.empty((x_deg.size, 3))
    j[:, 0] = np.sin(u) ** 2
    j[:, 1] = -a * k * _DEG * np.sin(2.0 * u)
    j[:, 2] = 1.0
    return j


def eval_sin2_field(b: np.ndarray, p: np.ndarray) -> np.ndarray:
    """offset + amplitude * sin^2(angle_per_field * B); B in tesla, angle in rad."""
    a, g, c = p
    return c + a * np.sin(g * b) ** 2


def jac_sin2_field(b: np.ndarray, p: np.ndarray) -> np.ndarray:
    a, g, c = p
    j = np.empty((b.size, 3))
    j[:, 0] = np.sin(g * b) ** 2
    j[:, 1] = a * b * np.sin(2.0 * g * b)
    j[:, 2] = 1.0
    return j


# ---------------------------------------------------------------------------
# Levenberg-Marquardt core


def poisson_sigma(y: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(np.asarray(y, dtype=float), 1.0))


def _grad_converged(hess: np.ndarray, grad: np.ndarray, chi2: float) -> bool:
    """Scale-invariant gradient test: the Newton decrement grad' H^-1 grad
    bounds the remaining chi-square decrease."""
    decrement = float(grad @ np.linalg.pinv(hess) @ grad)
    return decrement <= _GRAD_TOL * (1.0 + chi2) or np.max(np.abs(grad)) < 1e-300


def _lm_fit(model, fn, jac, x, y, sigma, p0, names, max_iter=200) -> FitResult:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    p = np.asarray(p0, dtype=float).copy()

    def residuals(pp):
        r = (y - fn(x, pp)) / sigma
        return r, float(r @ r)

    r, chi2 = residuals(p)
    lam = 1e-3
    n_iter = 0
    converged = False
    message = ""
    for n_iter in range(1, max_iter + 1):
        jw = jac(x, p) / sigma[:, None]
        grad = jw.T @ r
        hess = jw.T @ jw
        if _grad_converged(hess, grad, chi2):
            converged = True
            break
        accepted = False
        stalled = False
        for _ in range(60):
            damp = np.diag(np.maximum(np.diag(hess), 1e-12))
            try:
                step = np.linalg.solve(hess + lam * damp, grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            r_try, chi2_try = residuals(p + step)
            if np.isfinite(chi2_try) and chi2_try <= chi2:
                p = p + step
                improvement = chi2 - chi2_try
                r, chi2 = r_try, chi2_try
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                stalled = improvement <= 1e-14 * (chi2 + 1e-14)
                break
            lam *= 4.0
            if lam > 1e15:
                break
        if not accepted:
            message = "no downhill step found"
            break
        if stalled:
            message = "chi-square stalled"
            break

    jw = jac(x, p) / sigma[:, None]
    r = (y - fn(x, p)) / sigma
    chi2 = float(r @ r)
    hess = jw.T @ jw
    if _grad_converged(hess, jw.T @ r, chi2):
        converged = True
        message = ""
    cov = np.linalg.pinv(hess)
    unc = np.sqrt(np.clip(np.diag(cov), 0.0, np.inf))
    # directions the data does not constrain at all
    scale = np.max(np.diag(hess)) if np.max(np.diag(hess)) > 0 else 1.0
    unc = np.where(np.diag(hess) < 1e-12 * scale, np.inf, unc)
    if not converged and not message and n_iter >= max_iter:
        message = "iteration limit reached"
    return FitResult(
        model=model,
        params=dict(zip(names, map(float, p))),
        uncertainties=dict(zip(names, map(float, unc))),
        residual_sum_squares=chi2,
        converged=converged,
        iterations=n_iter,
        covariance=cov,
        param_names=tuple(names),
        message=message,
    )


# ---------------------------------------------------------------------------
# public fit operations


def fit_gaussian_offset(x: Sequence[float], y: Sequence[float]) -> FitResult:
    """Least-squares fit of y = offset + amplitude * gaussian(center, fwhm).

    Dips have negative amplitude, peaks positive.  Non-convergence is flagged
    on the result, never raised.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 5:
        raise ValueError("gaussian fit needs at least 5 points")
    d = np.diff(x)
    if x.size > 1 and not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("x values must be strictly monotone")
    offset0 = float(np.median(y))
    idx = int(np.argmax(np.abs(y - offset0)))
    amp0 = float(y[idx] - offset0)
    span = float(abs(x[-1] - x[0]))
    p0 = (amp0, float(x[idx]), max(span / 4.0, 1e-9), offset0)
    res = _lm_fit(
        "gaussian_offset", eval_gaussian_offset, jac_gaussian_offset,
        x, y, poisson_sigma(y), p0,
        ("amplitude", "center", "fwhm", "offset"),
    )
    if res.params["fwhm"] < 0:  # model is even in fwhm
        res.params["fwhm"] = -res.params["fwhm"]
    return res


def fit_sin2_offset(theta_deg: Sequence[float], y: Sequence[float], mode: str) -> FitResult:
    """Fit y = offset + amplitude * sin^2(k (theta - theta0)) with k = 2 for
    half-wave plate scans and k = 1 for polarization rotation scans."""
    k = {"hwp_2theta": 2.0, "rotation_theta": 1.0}.get(mode)
    if k is None:
        raise ValueError(f"unknown mode {mode!r}; use 'hwp_2theta' or 'rotation_theta'")
    x = np.asarray(theta_deg, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 4:
        raise ValueError("sin^2 fit needs at least 4 points")
    c0 = float(np.min(y))
    a0 = float(np.max(y) - np.min(y))
    t0 = float(x[int(np.argmin(y))])
    res = _lm_fit(
        f"sin2_offset[{mode}]",
        lambda xx, pp: eval_sin2_offset(xx, pp, k),
        lambda xx, pp: jac_sin2_offset(xx, pp, k),
        x, y, poisson_sigma(y), (a0, t0, c0),
        ("amplitude", "theta0", "offset"),
    )
    return res


def fit_sin2_field(fields_tesla: Sequence[float], y: Sequence[float]) -> FitResult:
    """Fit y = offset + amplitude * sin^2(angle_per_field * B).

    This is the sin^2-plus-offset family with the angle scale free; it
    calibrates the saturation amplitude for converting counts to rotation
    angles.  Multi-start over the angle scale keeps it off local minima.
    """
    b = np.asarray(fields_tesla, dtype=float)
    y = np.asarray(y, dtype=float)
    if b.size < 4:
        raise ValueError("sin^2 field fit needs at least 4 points")
    bmax = float(np.max(np.abs(b)))
    if bmax == 0:
        raise ValueError("field values are all zero")
    c0 = float(np.min(y))
    a0 = float(np.max(y) - np.min(y))
    best = None
    for frac in (0.25, 0.5, 0.75, 1.0, 1.5, 2.5):
        g0 = frac * (math.pi / 2.0) / bmax
        res = _lm_fit(
            "sin2_field", eval_sin2_field, jac_sin2_field,
            b, y, poisson_sigma(y), (max(a0, 1.0), g0, c0),
            ("amplitude", "angle_per_field", "offset"),
        )
        if best is None or res.residual_sum_squares < best.residual_sum_squares:
            best = res
    return best


def fit_line(
    x: Sequence[float], y: Sequence[float], sigma: Sequence[float] | None = None
) -> FitResult:
    """Exact weighted linear least squares, y = slope * x + intercept."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("linear fit needs at least 2 points")
    if np.ptp(x) == 0:
        raise ValueError("x values are degenerate (no spread)")
    s = np.ones_like(y) if sigma is None else np.asarray(sigma, dtype=float)
    s = np.where(np.isfinite(s) & (s > 0), s, np.inf)
    if not np.any(np.isfinite(s)):
        raise ValueError("all points have infinite uncertainty")
    w = 1.0 / s
    design = np.column_stack([x, np.ones_like(x)]) * w[:, None]
    rhs = y * w
    coeffs, *_ = np.linalg.lstsq(design, rhs, rcond=None)
    cov = np.linalg.pinv(design.T @ design)
    r = rhs - design @ coeffs
    return FitResult(
        model="line",
        params={"slope": float(coeffs[0]), "intercept": float(coeffs[1])},
        uncertainties={
            "slope": float(np.sqrt(max(cov[0, 0], 0.0))),
            "intercept": float(np.sqrt(max(cov[1, 1], 0.0))),
        },
        residual_sum_squares=float(r @ r),
        converged=True,
        iterations=1,
        covariance=cov,
        param_names=("slope", "intercept"),
    )


# ---------------------------------------------------------------------------
# derived quantities


def visibility(fit: FitResult) -> tuple[float, float]:
    """|amplitude| / offset of a converged dip fit, with its 1-sigma error."""
    if fit.model != "gaussian_offset":
        raise ValueError("visibility needs a gaussian_offset fit")
    if not fit.converged:
        raise ValueError("visibility needs a converged fit")
    a = fit.params["amplitude"]
    c = fit.params["offset"]
    if c <= 0:
        raise ValueError("plateau level must be positive")
    v = abs(a) / c
    names = list(fit.param_names)
    ia, ic = names.index("amplitude"), names.index("offset")
    grad = np.zeros(len(names))
    grad[ia] = math.copysign(1.0, a) / c
    grad[ic] = -abs(a) / c**2
    var = float(grad @ fit.covariance @ grad)
    return v, math.sqrt(max(var, 0.0))


def coherence_from_fit(fit: FitResult) -> tuple[tuple[float, float], tuple[float, float]]:
    """(coherence length um, coherence time fs), each with 1-sigma error."""
    ell = abs(fit.params["fwhm"])
    sig = fit.uncertainties.get("fwhm", 0.0)
    tau = ell / SPEED_OF_LIGHT_UM_PER_FS
    tau_sig = sig / SPEED_OF_LIGHT_UM_PER_FS if math.isfinite(sig) else math.inf
    return (ell, sig), (tau, tau_sig)


def rotation_from_counts(
    counts: ChannelCounts,
    calibration: Mapping[str, float],
    channel: str = "Vc:Hd",
) -> tuple[float, float]:
    """Invert counts = C + A sin^2(theta) for theta (radians).

    ``calibration`` holds the saturating sin^2 fit values: keys ``C`` and
    ``A``, optionally ``sigma_C`` and ``sigma_A``.  The argument is clamped
    to [0, 1] with a warning when counts fall outside the calibrated range.
    """
    a = float(calibration["A"])
    c = float(calibration["C"])
    if a <= 0:
        raise ValueError("calibration amplitude A must be > 0")
    sig_a = float(calibration.get("sigma_A", 0.0))
    sig_c = float(calibration.get("sigma_C", 0.0))
    n = float(counts.channels[channel])
    u = (n - c) / a
    if u < 0.0 or u > 1.0:
        warnings.warn(
            f"counts {n:.0f} outside calibrated range [C, C+A]; clamping",
            stacklevel=2,
        )
        u = min(max(u, 0.0), 1.0)
    theta = math.asin(math.sqrt(u))
    sig_n2 = max(n, 1.0)
    var_u = (sig_n2 + sig_c**2) / a**2 + (u * sig_a / a) ** 2
    denom = 2.0 * math.sqrt(max(u * (1.0 - u), 1e-12))
    sigma_theta = math.sqrt(var_u) / denom
    return theta, sigma_theta


def fit_verdet(
    theta_vs_b: Sequence[tuple[float, float]],
    length: float,
    sigma_theta: Sequence[float] | None = None,
    with_intercept: bool = True,
) -> tuple[float, float, FitResult]:
    """Verdet constant from a weighted linear fit of rotation angle vs field.

    Returns (verdet rad/(T m), 1-sigma, line fit).  The angles must carry the
    rotation sign convention already applied; coincidence rates alone are even
    in the angle.
    """
    if length <= 0:
        raise ValueError("sample length must be > 0")
    pts = list(theta_vs_b)
    if len(pts) < 2:
        raise ValueError("verdet fit needs at least 2 field points")
    b = np.array([p[0] for p in pts], dtype=float)
    th = np.array([p[1] for p in pts], dtype=float)
    if np.ptp(b) == 0:
        raise ValueError("field values are degenerate")
    if with_intercept:
        fit = fit_line(b, th, sigma_theta)
        slope, sig = fit.params["slope"], fit.uncertainties["slope"]
    else:
        s = np.ones_like(th) if sigma_theta is None else np.asarray(sigma_theta, float)
        s = np.where(np.isfinite(s) & (s > 0), s, np.inf)
        w = 1.0 / s**2
        denom = float(np.sum(w * b * b))
        if denom == 0:
            raise ValueError("field values are degenerate")
        slope = float(np.sum(w * b * th) / denom)
        sig = math.sqrt(1.0 / denom)
        r = (th - slope * b) / s
        fit = FitResult(
            model="line_through_origin",
            params={"slope": slope, "intercept": 0.0},
            uncertainties={"slope": sig, "intercept": 0.0},
            residual_sum_squares=float(np.nansum(r[np.isfinite(r)] ** 2)),
            converged=True,
            iterations=1,
            param_names=("slope", "intercept"),
        )
    return slope / length, sig / length, fit


# ---------------------------------------------------------------------------
# Bell-fraction estimation from scan data


@dataclass(frozen=True)
class BellFractionEstimate:
    fractions: dict[BellKind, float]
    metadata: dict = field(default_factory=dict)


_REQUIRED_FIT_CHANNELS = ("Hc:Hd", "Vc:Vd", "Vc:Hd", "Hc:Vc")


def _extremum_at_zero_delay(fit: FitResult) -> float:
    """Fitted model value at zero nominal delay.

    Reading the extremum there rather than as offset+amplitude keeps spurious
    narrow fits far from the dip region (flat channels fitting a noise spike)
    from corrupting the ratios."""
    a = fit.params["amplitude"]
    x0 = fit.params["center"]
    w = max(abs(fit.params["fwhm"]), 1e-12)
    return fit.params["offset"] + a * math.exp(-_FOUR_LN2 * (x0 / w) ** 2)


def _scan_accidental_levels(scan: ScanResult) -> dict[str, float]:
    """Per-channel accidental counts estimated from the scan's mean singles."""
    acq = scan.apparatus.acquisition if scan.apparatus else None
    if acq is None:
        return {ch: 0.0 for ch in _REQUIRED_FIT_CHANNELS}
    rates = {d: float(np.mean(scan.singles(d))) / acq.duration for d in DETECTORS}
    out = {}
    for ch in _REQUIRED_FIT_CHANNELS:
        d1, d2 = channel_detectors(ch)
        out[ch] = accidental_rate(rates[d1], rates[d2], acq.coincidence_window) * acq.duration
    return out


def _counts_accidental(counts: ChannelCounts, scan: ScanResult, channel: str) -> float:
    acq = scan.apparatus.acquisition if scan.apparatus else None
    if acq is None:
        return 0.0
    d1, d2 = channel_detectors(channel)
    r1 = counts.singles[d1] / acq.duration
    r2 = counts.singles[d2] / acq.duration
    return accidental_rate(r1, r2, acq.coincidence_window) * acq.duration


def estimate_bell_fractions(
    delay_scan: ScanResult,
    hwp45_counts: ChannelCounts,
    fits: Mapping[str, FitResult],
) -> BellFractionEstimate:
    """Bell-state fractions from plateau/extremum ratios of a delay scan plus
    one HWP = 45 degree measurement.

    Reading used (validated against the analytic projection oracle rather
    than prose): with den = plateau(Hc:Hd) + plateau(Vc:Vd) + extremum(Vc:Hd)
    + extremum(Hc:Vc), all accidental-subtracted,

        f(Psi+) = extremum(Hc:Vc) / den
        f(Psi-) = extremum(Vc:Hd) / den
        f(Phi+) + f(Phi-) = (plateau(Hc:Hd) + plateau(Vc:Vd)) / den

    and the Phi split follows the Vc:Hd vs Hc:Vc count ratio at HWP 45.
    Assumes equal detector efficiencies, plateau at full distinguishability
    and extrema at full indistinguishability.
    """
    missing = [ch for ch in _REQUIRED_FIT_CHANNELS if ch not in fits]
    if missing:
        raise ValueError(f"missing channel fits: {missing}")
    acc = _scan_accidental_levels(delay_scan)
    clamped = []

    def positive(value: float, tag: str) -> float:
        if value < 0:
            clamped.append(tag)
            return 0.0
        return value

    plateau_hh = positive(fits["Hc:Hd"].params["offset"] - acc["Hc:Hd"], "plateau(Hc:Hd)")
    plateau_vv = positive(fits["Vc:Vd"].params["offset"] - acc["Vc:Vd"], "plateau(Vc:Vd)")
    ext_psi_minus = positive(
        _extremum_at_zero_delay(fits["Vc:Hd"]) - acc["Vc:Hd"], "extremum(Vc:Hd)"
    )
    ext_psi_plus = positive(
        _extremum_at_zero_delay(fits["Hc:Vc"]) - acc["Hc:Vc"], "extremum(Hc:Vc)"
    )
    den = plateau_hh + plateau_vv + ext_psi_minus + ext_psi_plus
    if den <= 0:
        raise ValueError("no counts left after accidental subtraction")

    f_psi_plus = ext_psi_plus / den
    f_psi_minus = ext_psi_minus / den
    f_phi_total = (plateau_hh + plateau_vv) / den

    n45_vchd = positive(
        hwp45_counts.channels["Vc:Hd"] - _counts_accidental(hwp45_counts, delay_scan, "Vc:Hd"),
        "hwp45(Vc:Hd)",
    )
    n45_hcvc = positive(
        hwp45_counts.channels["Hc:Vc"] - _counts_accidental(hwp45_counts, delay_scan, "Hc:Vc"),
        "hwp45(Hc:Vc)",
    )
    phi_span = n45_vchd + n45_hcvc
    if phi_span > 0:
        f_phi_plus = f_phi_total * n45_hcvc / phi_span
        f_phi_minus = f_phi_total * n45_vchd / phi_span
    else:
        f_phi_plus = f_phi_minus = f_phi_total / 2.0
        clamped.append("hwp45 counts empty; Phi split ambiguous")

    def clip01(v: float) -> float:
        return min(max(v, 0.0), 1.0)

    fractions = {
        BellKind.PHI_PLUS: clip01(f_phi_plus),
        BellKind.PHI_MINUS: clip01(f_phi_minus),
        BellKind.PSI_PLUS: clip01(f_psi_plus),
        BellKind.PSI_MINUS: clip01(f_psi_minus),
    }
    metadata = {
        "method": "plateau-extrema ratios with HWP45 Phi split",
        "denominator": den,
        "plateaus": {"Hc:Hd": plateau_hh, "Vc:Vd": plateau_vv},
        "extrema": {"Vc:Hd": ext_psi_minus, "Hc:Vc": ext_psi_plus},
        "hwp45": {"Vc:Hd": n45_vchd, "Hc:Vc": n45_hcvc},
        "accidental_levels": acc,
        "clamped": clamped,
        "assumptions": [
            "equal detector efficiencies across channels",
            "plateau sampled at full distinguishability",
            "extrema read from the fitted model at zero nominal delay",
            "residual zero-delay counts neglected",
        ],
    }
    return BellFractionEstimate(fractions=fractions, metadata=metadata)


# ---------------------------------------------------------------------------
# field-scan pipeline


def verdet_from_field_extrema(
    fields_tesla: Sequence[float],
    peak_counts: Sequence[float],
    length: float,
    rotation_sign: float = -1.0,
) -> dict:
    """Counts-at-zero-delay versus field into a Verdet constant.

    Steps: calibrate C and A with a saturating sin^2 fit in B, invert each
    point for |theta|, apply the sign convention (rates are even in theta, so
    the sign is an external input), then fit theta = slope * B and divide by
    the sample length.
    """
    b = np.asarray(fields_tesla, dtype=float)
    y = np.asarray(peak_counts, dtype=float)
    cal_fit = fit_sin2_field(b, y)
    calibration = {
        "A": cal_fit.params["amplitude"],
        "C": cal_fit.params["offset"],
        "sigma_A": cal_fit.uncertainties["amplitude"],
        "sigma_C": cal_fit.uncertainties["offset"],
    }
    sign = 1.0 if rotation_sign >= 0 else -1.0
    thetas, sigmas, notes = [], [], []
    for bi, ni in zip(b, y):
        counts = ChannelCounts(
            channels={"Vc:Hd": int(round(ni)), "Hc:Hd": 0, "Hc:Vd": 0,
                      "Vc:Vd": 0, "Hc:Vc": 0, "Hd:Vd": 0},
            singles={d: 0 for d in DETECTORS},
        )
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            th, sg = rotation_from_counts(counts, calibration)
        notes.extend(f"B={bi:g}: {w.message}" for w in caught)
        thetas.append(sign * math.copysign(th, bi) if bi != 0 else sign * 0.0)
        sigmas.append(sg if sg > 0 else math.inf)
    verdet, verdet_sigma, line = fit_verdet(
        list(zip(b, thetas)), length, sigma_theta=sigmas
    )
    return {
        "verdet": verdet,
        "verdet_sigma": verdet_sigma,
        "calibration_fit": cal_fit,
        "line_fit": line,
        "angles_rad": thetas,
        "angle_sigmas": sigmas,
        "rotation_sign": sign,
        "notes": notes,
    }
