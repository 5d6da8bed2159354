"""Summaries of retained MCMC draws.

Point estimates are posterior medians, intervals are equal-tailed, and all
quantiles use linear interpolation between order statistics (numpy's
default "linear" method, type 7 in Hyndman-Fan terms).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_PROBS = (0.025, 0.5, 0.975)
KDE_POINTS = 512


@dataclass(frozen=True)
class PosteriorSummary:
    median: float
    mean: float
    sd: float
    quantiles: dict = field(default_factory=dict)

    def interval(self, level: float = 0.95) -> tuple:
        out = []
        for target in (0.5 - level / 2, 0.5 + level / 2):
            match = [q for p, q in self.quantiles.items() if abs(p - target) < 1e-9]
            if not match:
                raise KeyError(f"summary lacks the {target:g} quantile")
            out.append(match[0])
        return tuple(out)

    def to_dict(self) -> dict:
        return {"median": self.median, "mean": self.mean, "sd": self.sd,
                "quantiles": {repr(p): q for p, q in sorted(self.quantiles.items())}}


def _samples(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("no samples to summarize")
    return x


def summarize(samples, probs=DEFAULT_PROBS) -> PosteriorSummary:
    """Median, mean, sd (ddof=1, zero for one sample) and type-7 quantiles."""
    x = _samples(samples)
    probs = sorted(float(p) for p in probs)
    if any(not 0.0 <= p <= 1.0 for p in probs):
        raise ValueError("quantile probabilities must lie in [0, 1]")
    q = np.quantile(x, probs) if probs else []
    sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    return PosteriorSummary(median=float(np.quantile(x, 0.5)), mean=float(x.mean()), sd=sd,
                            quantiles={p: float(v) for p, v in zip(probs, q)})


def prob_positive(samples) -> float:
    """Fraction of samples strictly above zero."""
    x = _samples(samples)
    return float(np.mean(x > 0))


def percent_change(log_effect_samples, probs=DEFAULT_PROBS) -> PosteriorSummary:
    """Summary of 100 (exp(effect) - 1); negative values are reductions."""
    x = _samples(log_effect_samples)
    return summarize(100.0 * np.expm1(x), probs)


def _check_scan(scan: int) -> None:
    if scan not in (1, 2):
        raise ValueError(f"scan must be 1 or 2, got {scan}")


def study_level_draws(chain, scan: int = 1, l: int = 1) -> np.ndarray:
    """exp(alpha_l) at baseline, exp(alpha_l + beta_l) after treatment."""
    _check_scan(scan)
    log_value = chain.alpha[:, l - 1] + (chain.beta[:, l - 1] if scan == 2 else 0.0)
    return np.exp(log_value)


def study_level(chain, scan: int = 1, l: int = 1, probs=DEFAULT_PROBS) -> PosteriorSummary:
    """Study-level K^trans (``l=1``) or k_ep (``l=2``) at ``scan``."""
    return summarize(study_level_draws(chain, scan, l), probs)


def patient_level_draws(chain, j: int, scan: int = 1, l: int = 1) -> np.ndarray:
    _check_scan(scan)
    chain.layout.check(scan, j)
    log_value = chain.alpha[:, l - 1] + chain.gamma[:, j - 1, l - 1]
    if scan == 2:
        log_value = log_value + chain.beta[:, l - 1] + chain.delta[:, j - 1, l - 1]
    return np.exp(log_value)


def patient_level(chain, j: int, scan: int = 1, l: int = 1, probs=DEFAULT_PROBS) -> PosteriorSummary:
    """Patient ``j``'s K^trans (``l=1``) or k_ep (``l=2``) at ``scan``, voxel effects excluded."""
    return summarize(patient_level_draws(chain, j, scan, l), probs)


def patient_effect_draws(chain, j: int, l: int = 1) -> np.ndarray:
    """Log treatment effect beta_l + delta_jl of patient ``j``."""
    chain.layout.check(1, j)
    return chain.beta[:, l - 1] + chain.delta[:, j - 1, l - 1]


def voxel_median_map(chain, i: int, j: int, l: int = 1) -> np.ndarray:
    """Per-voxel posterior median of exp(psi) for scan ``i``, patient ``j``.

    psi already contains every fixed, patient and voxel term, so this is the
    full composition including epsilon.
    """
    sl = chain.layout.voxel_slice(i, j)
    return np.median(np.exp(chain.psi[:, sl, l - 1]), axis=0)


# --------------------------------------------------------------------------
# kernel density

@dataclass(frozen=True)
class DensityCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["grid", "density"])
            for x, d in zip(self.grid, self.density):
                w.writerow([repr(float(x)), repr(float(d))])
        return path


def silverman_bandwidth(x) -> float:
    x = _samples(x)
    sd = np.std(x, ddof=1)
    iqr = np.subtract(*np.quantile(x, [0.75, 0.25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return float(0.9 * spread * x.size ** -0.2)


def kde(values, bandwidth: float | None = None, grid=None) -> DensityCurve:
    """Gaussian kernel density estimate.

    Evaluated on ``grid`` if given, else on 512 points spanning the data
    plus and minus three bandwidths. The default grid resolves the kernels,
    and so integrates to one, only while the data range stays below about
    500 bandwidths; pass a finer ``grid`` for sparse, widely spread data.
    """
    x = _samples(values)
    if np.unique(x).size < 2:
        raise ValueError("kernel density needs at least two distinct values")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    if grid is None:
        grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, KDE_POINTS)
    grid = np.asarray(grid, dtype=float)
    dens = np.zeros_like(grid)
    # chunk over samples to bound memory
    for start in range(0, x.size, 2048):
        z = (grid[:, None] - x[None, start:start + 2048]) / h
        dens += np.exp(-0.5 * z * z).sum(axis=1)
    dens /= x.size * h * np.sqrt(2 * np.pi)
    return DensityCurve(grid, dens, h)


# --------------------------------------------------------------------------
# convergence and export

def rhat(chains) -> float:
    """Potential scale reduction factor of equal-length chains, shape (m, n)."""
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ValueError("need at least two chains of at least two draws")
    m, n = x.shape
    means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else float("inf")
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


def chain_summaries(chain, probs=DEFAULT_PROBS) -> dict:
    """Named study- and patient-level summaries of a chain."""
    out = {}
    for l, name in ((1, "ktrans"), (2, "kep")):
        for scan in (1, 2):
            out[f"study.{name}.scan{scan}"] = study_level(chain, scan, l, probs)
        out[f"study.{name}.percent_change"] = percent_change(chain.beta[:, l - 1], probs)
        for j in range(1, chain.layout.n_patients + 1):
            for scan in (1, 2):
                out[f"patient{j}.{name}.scan{scan}"] = patient_level(chain, j, scan, l, probs)
            out[f"patient{j}.{name}.percent_change"] = percent_change(
                patient_effect_draws(chain, j, l), probs)
    return out


def write_summary_json(summaries: dict, path, extra: dict | None = None) -> Path:
    path = Path(path)
    doc = {name: s.to_dict() for name, s in summaries.items()}
    if extra:
        doc.update(extra)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path
