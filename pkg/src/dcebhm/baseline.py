"""Voxel-wise nonlinear least squares and the paired Wilcoxon signed-rank test.

This is the conventional two-stage analysis the hierarchical model is compared
against: fit every voxel curve on its own, reduce each ROI to its median
K^trans, then test the paired pre/post medians across patients.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .kinetics import AifParams, KineticParams, TimeGrid, aif_concentration, convolution_term

DEFAULT_INIT = KineticParams(0.2, 0.5, 0.05)
RESTARTS = (KineticParams(0.05, 0.1, 0.01), KineticParams(1.0, 2.0, 0.1))
EXACT_MAX_N = 25
# a fit that runs past these in (ln K, ln kep, logit vp) has drifted to an asymptote
THETA_LIMIT = (12.0, 12.0, 25.0)
MAX_STEP = 2.0


@dataclass(frozen=True)
class NlsFit:
    params: KineticParams
    converged: bool
    rss: float
    iterations: int


@dataclass(frozen=True)
class WilcoxonResult:
    w_plus: float
    n_effective: int
    p_value: float


# --------------------------------------------------------------------------
# model and Jacobian in (ln K^trans, ln k_ep, logit vp)

def _to_theta(p: KineticParams) -> np.ndarray:
    return np.array([np.log(p.ktrans), np.log(p.kep), np.log(p.vp) - np.log1p(-p.vp)])


def _from_theta(theta) -> KineticParams:
    vp = expit(theta[2])
    return KineticParams(float(np.exp(theta[0])), float(np.exp(theta[1])), float(vp))


def _conv_kep_derivative(kep: float, t: np.ndarray, aif: AifParams) -> np.ndarray:
    """d/dk_ep of the closed-form convolution on t >= 0."""
    out = np.zeros_like(t)
    ek = np.exp(-kep * t)
    for a, m in zip(aif.amplitudes, aif.rates):
        h = kep - m
        x = h * t
        small = np.abs(x) < 1e-3
        with np.errstate(divide="ignore", invalid="ignore"):
            quotient = (np.exp(-m * t) - ek) / h
            regular = (t * ek - quotient) / h
        # series of t^2 d/dx[(1 - e^-x)/x] around x = 0
        series = np.exp(-m * t) * t ** 2 * (-0.5 + x / 3.0 - x ** 2 / 8.0)
        out += a * np.where(small, series, regular)
    return aif.dose * out


def _model_and_jacobian(theta, t, cp, aif):
    K, kep = np.exp(theta[0]), np.exp(theta[1])
    vp = expit(theta[2])
    post = t >= 0
    tc = np.maximum(t, 0.0)
    conv = convolution_term(kep, t, aif)
    model = vp * cp + K * conv
    J = np.empty((t.size, 3))
    J[:, 0] = K * conv
    J[:, 1] = np.where(post, K * kep * _conv_kep_derivative(kep, tc, aif), 0.0)
    J[:, 2] = vp * (1.0 - vp) * cp
    return model, J


def _levenberg_marquardt(y, t, cp, aif, theta0, max_iter=200, tol=1e-8):
    """Marquardt-scaled damped Gauss-Newton; returns (theta, rss, converged, iterations)."""
    theta = np.array(theta0, dtype=float)
    model, J = _model_and_jacobian(theta, t, cp, aif)
    r = y - model
    rss = float(r @ r)
    lam = 1e-3
    for it in range(1, max_iter + 1):
        g = J.T @ r
        if np.linalg.norm(g) < tol:
            return theta, rss, True, it - 1
        A = J.T @ J
        scale = np.maximum(np.diag(A), 1e-12)
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(scale), g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                # cap the step in transformed space so one step cannot fling a rate away
                step *= min(1.0, MAX_STEP / np.max(np.abs(step)))
                trial = theta + step
                # wild trial steps may overflow; they are rejected below
                with np.errstate(over="ignore", invalid="ignore"):
                    m_new, J_new = _model_and_jacobian(trial, t, cp, aif)
                r_new = y - m_new
                rss_new = float(r_new @ r_new)
                if np.isfinite(rss_new) and rss_new <= rss:
                    break
            lam *= 10.0
            if lam > 1e16:
                return theta, rss, False, it
        change = (rss - rss_new) / max(rss, np.finfo(float).tiny)
        theta, r, J, rss = trial, r_new, J_new, rss_new
        lam = max(lam / 10.0, 1e-12)
        if change < tol or rss == 0.0:
            return theta, rss, True, it
    return theta, rss, False, max_iter


def nls_fit_voxel(ctc, grid: TimeGrid, aif: AifParams = AifParams(),
                  init: KineticParams | None = None, restarts=RESTARTS,
                  max_iter: int = 200) -> NlsFit:
    """Least-squares fit of one voxel curve.

    A run that drifts towards zero or infinite rates (beyond ``THETA_LIMIT`` in
    transformed space) counts as not converged. If the fit from ``init`` does
    not converge, each start in ``restarts`` is tried; the converged fit with the smallest RSS wins, or the smallest RSS
    overall when none converges.
    """
    y = np.asarray(ctc, dtype=float)
    t = grid.times
    if y.shape != t.shape:
        raise ValueError(f"curve has {y.size} points, grid has {t.size}")
    init = DEFAULT_INIT if init is None else init
    if not (init.ktrans > 0 and 0 < init.vp < 1):
        raise ValueError("initial values must lie inside the parameter support")
    cp = aif_concentration(t, aif)
    fits = []
    for start in (init, *restarts):
        theta, rss, ok, n_it = _levenberg_marquardt(y, t, cp, aif, _to_theta(start), max_iter)
        try:
            params = _from_theta(theta)
        except ValueError:
            continue
        ok = ok and np.isfinite(rss) and bool(np.all(np.abs(theta) < THETA_LIMIT))
        fits.append(NlsFit(params, bool(ok), rss, n_it))
        if ok:
            break
    if not fits:
        return NlsFit(init, False, float("inf"), max_iter)
    good = [f for f in fits if f.converged]
    return min(good or fits, key=lambda f: f.rss)


def fit_study(data, init: KineticParams | None = None) -> list:
    """NLS fits of every voxel in flat (scan, patient, voxel) order."""
    fits = []
    for i in range(2):
        for j in range(data.layout.n_patients):
            grid = data.grids[i][j]
            for y in data.curves[i][j]:
                fits.append(nls_fit_voxel(y, grid, data.aif, init))
    return fits


def roi_median_ktrans(fits) -> float:
    """Median K^trans over the converged fits of one ROI."""
    k = [f.params.ktrans for f in fits if f.converged]
    if not k:
        raise ValueError("no converged fits in this ROI")
    return float(np.median(k))


def roi_medians(layout, fits) -> np.ndarray:
    """Median K^trans per (scan, patient), shape (2, J); NaN where nothing converged."""
    out = np.full(layout.voxel_counts.shape, np.nan)
    for i in range(2):
        for j in range(layout.n_patients):
            roi = fits[layout.voxel_slice(i + 1, j + 1)]
            if any(f.converged for f in roi):
                out[i, j] = roi_median_ktrans(roi)
    return out


def write_fits_csv(layout, fits, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scan", "patient", "voxel", "ktrans", "kep", "vp", "converged", "rss"])
        n = 0
        for i in range(2):
            for j in range(layout.n_patients):
                for k in range(layout.voxel_counts[i, j]):
                    f = fits[n]
                    w.writerow([i + 1, j + 1, k + 1, repr(f.params.ktrans), repr(f.params.kep),
                                repr(f.params.vp), int(f.converged), repr(f.rss)])
                    n += 1
    return path


def write_medians_csv(medians, path) -> Path:
    """Paired file: one row per patient with pre and post ROI medians."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient", "pre", "post"])
        for j in range(medians.shape[1]):
            w.writerow([j + 1, repr(float(medians[0, j])), repr(float(medians[1, j]))])
    return path


# --------------------------------------------------------------------------
# Wilcoxon signed-rank

def midranks(values) -> np.ndarray:
    """Ranks 1..n of ``values`` with tied entries sharing their average rank."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size)
    sorted_vals = values[order]
    start = 0
    while start < values.size:
        stop = start
        while stop + 1 < values.size and sorted_vals[stop + 1] == sorted_vals[start]:
            stop += 1
        ranks[order[start:stop + 1]] = 0.5 * (start + stop) + 1.0
        start = stop + 1
    return ranks


def signed_rank_null(doubled_ranks) -> np.ndarray:
    """Null probabilities of 2 W+ = 0, 1, ..., sum(doubled_ranks).

    Each rank joins the positive sum independently with probability 1/2;
    the distribution is built by convolving one rank at a time.
    """
    r = np.asarray(doubled_ranks, dtype=int)
    dist = np.zeros(int(r.sum()) + 1)
    dist[0] = 1.0
    top = 0
    for rank in r:
        shifted = dist[:top + 1].copy()
        dist[:top + 1] *= 0.5
        dist[rank:rank + top + 1] += 0.5 * shifted
        top += rank
    return dist


def wilcoxon_one_sided(pre, post) -> WilcoxonResult:
    """Test H1: pre - post tends to be positive.

    Zero differences are dropped and ties share midranks. The p-value
    P(W+ >= observed) is exact for up to 25 non-zero differences and uses
    the tie-corrected normal approximation with continuity correction above.
    """
    pre = np.asarray(pre, dtype=float)
    post = np.asarray(post, dtype=float)
    if pre.shape != post.shape or pre.ndim != 1 or pre.size < 1:
        raise ValueError("pre and post must be paired 1-D sequences of equal non-zero length")
    d = pre - post
    d = d[d != 0]
    n = d.size
    if n == 0:
        raise ValueError("all paired differences are zero")
    ranks = midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= EXACT_MAX_N:
        dist = signed_rank_null(np.rint(2 * ranks).astype(int))
        p = float(dist[int(round(2 * w_plus)):].sum())
    else:
        _, counts = np.unique(ranks, return_counts=True)
        mean = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(counts ** 3 - counts) / 48.0
        z = (w_plus - mean - 0.5) / math.sqrt(var)
        p = 0.5 * math.erfc(z / math.sqrt(2.0))
    return WilcoxonResult(w_plus, n, min(max(p, np.nextafter(0, 1)), 1.0))


def read_paired_csv(path, pre_column: str = "pre", post_column: str = "post"):
    """Read two named numeric columns from a CSV with a header row."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    for col in (pre_column, post_column):
        if col not in rows[0]:
            raise ValueError(f"{path}: missing column '{col}'")
    try:
        pre = [float(r[pre_column]) for r in rows]
        post = [float(r[post_column]) for r in rows]
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{path}: non-numeric entry ({exc})") from None
    return np.array(pre), np.array(post)
