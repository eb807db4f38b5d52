"""Fitting and data reduction for spectra, buildup and relaxation curves.

All nonlinear fits use Levenberg-Marquardt with analytic Jacobians started
from a deterministic seed plus four fixed perturbations of it; the lowest
cost wins. Parameter errors come from the Jacobian covariance at the optimum,
scaled by the reduced chi-square.
"""
from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import stats
from scipy.ndimage import gaussian_filter1d
from scipy.optimize import least_squares

from .errors import InsufficientData, NoConvergence, ValidationError

log = logging.getLogger(__name__)

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
GRAD_TOL = 1e-8
N_STARTS = 5


@dataclass(frozen=True, eq=False)
class Spectrum:
    """``(frequency, signal)`` series with optional per-point uncertainty."""

    x: np.ndarray
    y: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if x.shape != y.shape:
            raise ValidationError(f"x and y lengths differ: {x.size} vs {y.size}")
        if np.any(np.diff(x) <= 0):
            raise ValidationError("frequencies must be strictly increasing")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValidationError("spectrum contains non-finite values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.sigma is not None:
            s = np.asarray(self.sigma, dtype=float).ravel()
            if s.shape != x.shape or np.any(s <= 0):
                raise ValidationError("sigma must be positive and match x")
            object.__setattr__(self, "sigma", s)

    @classmethod
    def from_csv(cls, path) -> "Spectrum":
        return cls(*load_csv(path))

    def __len__(self):
        return self.x.size


@dataclass(frozen=True)
class FitResult:
    model: str
    params: dict
    param_errors: dict
    residual_norm: float
    converged: bool
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("params", "param_errors"):
            object.__setattr__(self, name, {k: float(v) for k, v in getattr(self, name).items()})
        object.__setattr__(self, "residual_norm", float(self.residual_norm))

    def to_dict(self) -> dict:
        def clean(v):
            v = float(v)
            return v if math.isfinite(v) else str(v)

        return {
            "model": self.model,
            "params": {k: clean(v) for k, v in self.params.items()},
            "param_errors": {k: clean(v) for k, v in self.param_errors.items()},
            "residual_norm": clean(self.residual_norm),
            "converged": self.converged,
            "flags": dict(self.flags),
        }


def load_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Read ``x,y[,sigma]`` columns after a one-line header."""
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"input file not found: {p}")
    with p.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise InsufficientData(f"{p} has no data rows")
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    ncol = len(body[0])
    if ncol not in (2, 3) or any(len(r) != ncol for r in body):
        raise ValidationError(f"{p}: expected 2 or 3 columns on every row")
    try:
        data = np.array(body, dtype=float)
    except ValueError as e:
        raise ValidationError(f"{p}: non-numeric entry ({e})") from e
    return data[:, 0], data[:, 1], (data[:, 2] if ncol == 3 else None)


# -- generic least squares ---------------------------------------------------

def _solve(residual: Callable, jac: Callable, starts: Sequence[np.ndarray], n_points: int, what: str):
    best = None
    for x0 in starts:
        try:
            res = least_squares(residual, x0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                max_nfev=20000)
        except (ValueError, np.linalg.LinAlgError) as e:
            log.debug("%s start %s failed: %s", what, x0, e)
            continue
        if not np.all(np.isfinite(res.x)):
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        raise NoConvergence(f"{what} fit failed from every starting point")
    J = best.jac
    r = best.fun
    grad = J.T @ r
    gnorm = float(np.linalg.norm(grad))
    scale = float(np.linalg.norm(J) * np.linalg.norm(r))
    converged = bool(best.status > 0 and (gnorm < GRAD_TOL or gnorm <= GRAD_TOL * scale))
    dof = n_points - len(best.x)
    s2 = float(r @ r) / dof if dof > 0 else float("nan")
    try:
        jtj_inv = np.linalg.inv(J.T @ J)
        err = np.sqrt(np.clip(np.diag(jtj_inv) * s2, 0.0, None))
    except np.linalg.LinAlgError:
        err = np.full(len(best.x), np.inf)
    if not np.all(np.isfinite(err)) and math.isfinite(s2):
        err = np.where(np.isfinite(err), err, np.inf)
    return best.x, err, float(np.linalg.norm(r)), converged


# -- Gaussian peaks ------------------------------------------------------------

def gaussian_model(x, params: Sequence[float]) -> np.ndarray:
    """Sum of peaks ``A exp(-(x - c)^2 / (2 s^2))``; params are ``(A, c, s) * n``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for a, c, s in np.reshape(params, (-1, 3)):
        out += a * np.exp(-((x - c) ** 2) / (2 * s * s))
    return out


def _gauss_jac(x, p):
    p = np.reshape(p, (-1, 3))
    J = np.empty((x.size, p.size))
    for i, (a, c, s) in enumerate(p):
        d = x - c
        e = np.exp(-d * d / (2 * s * s))
        J[:, 3 * i] = e
        J[:, 3 * i + 1] = a * e * d / (s * s)
        J[:, 3 * i + 2] = a * e * d * d / (s ** 3)
    return J


def _peak_seed(x: np.ndarray, y: np.ndarray, sign: float = 0.0, exclude=None,
               smooth_pts: float = 0.0) -> tuple[float, float, float]:
    """Tallest feature of ``y`` (of the given sign, outside ``exclude``) and its half-max width."""
    ys = gaussian_filter1d(y, smooth_pts) if smooth_pts > 0 else y
    score = ys * sign if sign else np.abs(ys)
    if exclude is not None:
        score = np.where(exclude, -np.inf, score)
    i = int(np.argmax(score))
    a = ys[i]
    half = np.abs(ys) >= abs(a) / 2
    if exclude is not None:
        half &= ~exclude
    lo = i
    while lo > 0 and half[lo - 1]:
        lo -= 1
    hi = i
    while hi < x.size - 1 and half[hi + 1]:
        hi += 1
    fwhm = max(x[hi] - x[lo], np.min(np.diff(x)) if x.size > 1 else 1.0)
    return float(a), float(x[i]), float(fwhm / FWHM_PER_SIGMA)


def _perturbed(seed: np.ndarray) -> list[np.ndarray]:
    starts = [seed]
    for fs, fc in ((0.7, 0.0), (1.4, 0.0), (1.0, -0.25), (1.0, 0.25)):
        p = seed.reshape(-1, 3).copy()
        p[:, 1] += fc * p[:, 2]
        p[:, 2] *= fs
        starts.append(p.ravel())
    return starts[:N_STARTS]


def fit_gaussian(spectrum: Spectrum, n_peaks: int = 1) -> FitResult:
    """Least-squares fit of ``n_peaks`` Gaussians.

    Peaks are added one at a time: each new peak is seeded at the largest
    smoothed residual of the current fit that has the sign of the main peak
    and lies more than three widths from the peaks already found, then all
    peaks are refined together.

    Peaks are reported largest first as ``amplitude``, ``center``, ``sigma``
    and ``fwhm`` (suffixed ``_1``, ``_2``, ... when ``n_peaks > 1``), plus
    ``ratio_i`` = amplitude of peak ``i`` over peak 1.
    """
    if n_peaks < 1:
        raise ValidationError("n_peaks must be at least 1")
    x, y = spectrum.x, spectrum.y
    if x.size < 4 * n_peaks:
        raise InsufficientData(f"need at least {4 * n_peaks} points for {n_peaks} peak(s), got {x.size}")
    if not np.any(y):
        raise InsufficientData("signal is identically zero; no peak to fit")
    w = 1.0 / spectrum.sigma if spectrum.sigma is not None else np.ones_like(x)

    def residual(p):
        return w * (gaussian_model(x, p) - y)

    def jac(p):
        return w[:, None] * _gauss_jac(x, p)

    dx = float(np.median(np.diff(x)))
    # points carrying almost no weight should not decide where peaks start
    ignored = w < 1e-3 * np.median(w)
    p = np.array(_peak_seed(x, y, exclude=ignored if ignored.any() else None))
    p, err, rnorm, converged = _solve(residual, jac, _perturbed(p), x.size, "gaussian")
    sign = float(np.sign(p[0])) or 1.0
    for _ in range(1, n_peaks):
        peaks = p.reshape(-1, 3)
        near = ignored.copy()
        for _, c, s in peaks:
            near |= np.abs(x - c) < 3 * abs(s)
        if near.all():
            raise InsufficientData("no room for another peak outside the ones already fitted")
        smooth = abs(peaks[0, 2]) / dx / 2
        new = _peak_seed(x, y - gaussian_model(x, p), sign, near, smooth)
        seed = np.concatenate([p, new])
        p, err, rnorm, converged = _solve(residual, jac, _perturbed(seed), x.size, "gaussian")

    p = p.reshape(-1, 3)
    err = err.reshape(-1, 3)
    p[:, 2] = np.abs(p[:, 2])
    order = np.argsort(-np.abs(p[:, 0]), kind="stable")
    params, errors = {}, {}
    for rank, i in enumerate(order, start=1):
        suffix = "" if n_peaks == 1 else f"_{rank}"
        a, c, s = p[i]
        ea, ec, es = err[i]
        params.update({f"amplitude{suffix}": a, f"center{suffix}": c, f"sigma{suffix}": s,
                       f"fwhm{suffix}": s * FWHM_PER_SIGMA})
        errors.update({f"amplitude{suffix}": ea, f"center{suffix}": ec, f"sigma{suffix}": es,
                       f"fwhm{suffix}": es * FWHM_PER_SIGMA})
        if rank > 1:
            a1, ea1 = p[order[0], 0], err[order[0], 0]
            params[f"ratio_{rank}"] = a / a1
            errors[f"ratio_{rank}"] = abs(a / a1) * math.hypot(ea / a if a else np.inf, ea1 / a1)
    flags = {"zero_amplitude": bool(np.any(p[:, 0] == 0))}
    return FitResult("gaussian", params, errors, rnorm, converged, flags)


# -- exponential families ---------------------------------------------------------

def biexponential_model(t, a1, tau1, a2, tau2):
    t = np.asarray(t, dtype=float)
    return a1 * -np.expm1(-t / tau1) + a2 * -np.expm1(-t / tau2)


def _biexp_rates(t, p):
    a1, k1, a2, k2 = p
    return a1 * -np.expm1(-k1 * t) + a2 * -np.expm1(-k2 * t)


def _biexp_jac(t, p):
    a1, k1, a2, k2 = p
    e1, e2 = np.exp(-k1 * t), np.exp(-k2 * t)
    return np.column_stack([1 - e1, a1 * t * e1, 1 - e2, a2 * t * e2])


def _varpro_seed(t, y, n_grid: int = 40) -> np.ndarray:
    # for each pair of rates the amplitudes are a linear least-squares problem
    tpos = t[t > 0]
    k_lo = 0.1 / max(tpos.max(), 1e-300)
    k_hi = 10.0 / max(tpos.min(), 1e-300)
    ks = np.geomspace(k_lo, k_hi, n_grid)
    basis = -np.expm1(-np.outer(t, ks))
    best = (np.inf, None)
    for i, j in itertools.combinations(range(n_grid), 2):
        B = basis[:, [i, j]]
        amp, *_ = np.linalg.lstsq(B, y, rcond=None)
        c = float(np.sum((B @ amp - y) ** 2))
        if c < best[0]:
            best = (c, (amp[0], ks[i], amp[1], ks[j]))
    return np.array(best[1])


def fit_biexponential(times, values) -> FitResult:
    """``A1 (1 - exp(-t/tau1)) + A2 (1 - exp(-t/tau2))`` with ``tau1 <= tau2``.

    Seeded by a grid search over rate pairs with the amplitudes solved
    linearly at each pair. ``flags["single_component"]`` marks fits where one
    amplitude vanishes or the two time constants coincide.
    """
    t = np.asarray(times, dtype=float).ravel()
    y = np.asarray(values, dtype=float).ravel()
    if t.size != y.size:
        raise ValidationError("times and values differ in length")
    if t.size < 6:
        raise InsufficientData(f"biexponential fit needs at least 6 points, got {t.size}")
    if np.any(np.diff(t) <= 0) or t[0] < 0:
        raise ValidationError("times must be nonnegative and strictly increasing")
    if not np.any(y):
        raise InsufficientData("values are identically zero")
    seed = _varpro_seed(t, y)
    starts = [seed] + [seed * np.array([1, f1, 1, f2]) for f1, f2 in ((0.5, 1), (2, 1), (1, 0.5), (1, 2))]

    p, err, rnorm, converged = _solve(lambda p: _biexp_rates(t, p) - y, lambda p: _biexp_jac(t, p),
                                      starts, t.size, "biexponential")
    a1, k1, a2, k2 = p
    ea1, ek1, ea2, ek2 = err
    comps = sorted([(a1, k1, ea1, ek1), (a2, k2, ea2, ek2)], key=lambda c: -c[1])  # fast first
    params, errors = {}, {}
    for i, (a, k, ea, ek) in enumerate(comps, start=1):
        params[f"A{i}"] = a
        params[f"tau{i}"] = 1.0 / k
        errors[f"A{i}"] = ea
        errors[f"tau{i}"] = ek / (k * k)
    scale = max(abs(a1) + abs(a2), 1e-300)
    single = bool(min(abs(a1), abs(a2)) < 1e-6 * scale or abs(k1 - k2) < 1e-6 * max(abs(k1), abs(k2)))
    flags = {"single_component": single, "nonpositive_tau": bool(k1 <= 0 or k2 <= 0)}
    return FitResult("biexponential", params, errors, rnorm, converged, flags)


def short_time_rate(times, values, t_max: float = 1.0) -> FitResult:
    """Initial buildup rate: affine least-squares fit to the points with ``t < t_max``.

    The slope is the rate; the intercept absorbs dead-time offsets.
    """
    t = np.asarray(times, dtype=float).ravel()
    y = np.asarray(values, dtype=float).ravel()
    if t.size != y.size:
        raise ValidationError("times and values differ in length")
    sel = t < t_max
    if np.count_nonzero(sel) < 3:
        raise InsufficientData(f"need at least 3 points with t < {t_max}, got {np.count_nonzero(sel)}")
    ts, ys = t[sel], y[sel]
    if np.ptp(ts) == 0:
        raise InsufficientData("all short-time points share one time value")
    fit = stats.linregress(ts, ys)
    rnorm = float(np.linalg.norm(fit.intercept + fit.slope * ts - ys))
    n = ts.size
    slope_err = fit.stderr if n > 2 else float("nan")
    return FitResult(
        "linear",
        {"slope": fit.slope, "intercept": fit.intercept},
        {"slope": slope_err, "intercept": fit.intercept_stderr},
        rnorm,
        True,
        {"n_points": int(n)},
    )


def fit_relaxation(times, values) -> FitResult:
    """Single-exponential decay ``A exp(-t / T1)``.

    Fitted in the rate ``R = 1/T1``. A constant series gives ``R = 0`` and
    ``flags["infinite_t1"]``; a rising series gives ``flags["negative_rate"]``.
    """
    t = np.asarray(times, dtype=float).ravel()
    y = np.asarray(values, dtype=float).ravel()
    if t.size != y.size:
        raise ValidationError("times and values differ in length")
    if t.size < 4:
        raise InsufficientData(f"relaxation fit needs at least 4 points, got {t.size}")
    if np.any(np.diff(t) <= 0):
        raise ValidationError("times must be strictly increasing")
    if not np.any(y):
        raise InsufficientData("values are identically zero")
    span = float(t[-1] - t[0])

    # log-linear seed from the positive points
    pos = y > 0
    if np.count_nonzero(pos) >= 2 and np.ptp(t[pos]) > 0:
        lr = stats.linregress(t[pos], np.log(y[pos]))
        seed = np.array([math.exp(lr.intercept), -lr.slope])
    else:
        seed = np.array([y[0], 1.0 / span])
    starts = [seed] + [seed * np.array([1.0, f]) for f in (0.5, 2.0, 0.25, 4.0)]

    def residual(p):
        return p[0] * np.exp(-p[1] * t) - y

    def jac(p):
        e = np.exp(-p[1] * t)
        return np.column_stack([e, -p[0] * t * e])

    (a, rate), (ea, er), rnorm, converged = _solve(residual, jac, starts, t.size, "relaxation")
    infinite = abs(rate) * span < 1e-9
    if infinite:
        rate = 0.0
    t1 = math.inf if rate == 0 else 1.0 / rate
    t1_err = math.inf if rate == 0 else er / rate ** 2
    flags = {"infinite_t1": bool(infinite), "negative_rate": bool(rate < 0)}
    return FitResult("exponential_decay", {"amplitude": a, "rate": rate, "t1": t1},
                     {"amplitude": ea, "rate": er, "t1": t1_err}, rnorm, converged, flags)


def relaxation_spread(results: Sequence[FitResult], key: str = "t1") -> float:
    """Largest pairwise difference of a fitted quantity across conditions."""
    vals = [r.params[key] for r in results]
    if len(vals) < 2:
        return 0.0
    return float(max(abs(a - b) if a != b else 0.0 for a, b in itertools.combinations(vals, 2)))


def center_vs_field(spectra: Sequence[tuple[float, Spectrum]], n_peaks: int = 1) -> FitResult:
    """Slope (MHz/mT) of fitted spectral centre against the applied field offset."""
    if len(spectra) < 2:
        raise InsufficientData("need spectra at two or more field values")
    fields = np.array([float(b) for b, _ in spectra])
    if np.unique(fields).size < 2:
        raise InsufficientData("field values must differ")
    fits = [fit_gaussian(s, n_peaks) for _, s in spectra]
    key = "center" if n_peaks == 1 else "center_1"
    centers = np.array([f.params[key] for f in fits])
    fit = stats.linregress(fields, centers)
    two = fields.size == 2
    slope_err = float("nan") if two else fit.stderr
    icpt_err = float("nan") if two else fit.intercept_stderr
    rnorm = float(np.linalg.norm(fit.intercept + fit.slope * fields - centers))
    return FitResult(
        "linear",
        {"slope": fit.slope, "intercept": fit.intercept},
        {"slope": slope_err, "intercept": icpt_err},
        rnorm,
        all(f.converged for f in fits),
        {"undefined_error": two, "centers": centers.tolist(), "fields": fields.tolist()},
    )
