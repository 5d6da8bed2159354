"""Compartmental tracer-kinetic model with a bi-exponential arterial input.

All times are in minutes and all concentrations in mmol/l. Frames acquired
before injection (t < 0) have zero model concentration.

The tissue curve is

    C_t(t) = v_p C_p(t) + K^trans (C_p * exp(-k_ep t))(t)

and with ``C_p(t) = D (a1 exp(-m1 t) + a2 exp(-m2 t))`` the convolution has
the closed form ``D sum_i a_i (exp(-m_i t) - exp(-k_ep t)) / (k_ep - m_i)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# |k_ep - m_i| below this switches to the limit form of the convolution
SINGULARITY_THRESHOLD = 1e-8


@dataclass(frozen=True)
class AifParams:
    """Bi-exponential arterial input function.

    Defaults are the Fritz-Hansen constants with a 0.1 mmol/kg dose.
    """

    dose: float = 0.1
    a1: float = 24.0
    a2: float = 6.20
    m1: float = 3.00
    m2: float = 0.016

    def __post_init__(self):
        if not (self.dose > 0 and self.a1 > 0 and self.a2 > 0):
            raise ValueError("AIF dose and amplitudes must be positive")
        if not (self.m1 >= 0 and self.m2 >= 0):
            raise ValueError("AIF decay rates must be non-negative")

    @property
    def amplitudes(self) -> tuple[float, float]:
        return (self.a1, self.a2)

    @property
    def rates(self) -> tuple[float, float]:
        return (self.m1, self.m2)

    def to_dict(self) -> dict:
        return {"dose": self.dose, "a1": self.a1, "a2": self.a2,
                "m1": self.m1, "m2": self.m2}


@dataclass(frozen=True)
class KineticParams:
    ktrans: float
    kep: float
    vp: float

    def __post_init__(self):
        if not (self.ktrans >= 0 and self.kep > 0):
            raise ValueError(f"invalid rate constants: ktrans={self.ktrans}, kep={self.kep}")
        if not 0.0 <= self.vp <= 1.0:
            raise ValueError(f"vp must lie in [0, 1], got {self.vp}")


@dataclass(frozen=True)
class TimeGrid:
    """Acquisition times in minutes, t = 0 at contrast injection."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a time grid needs at least two time points")
        if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be finite and strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def regular(cls, n: int, step_s: float = 11.9, n_pre: int = 0) -> "TimeGrid":
        """``n`` frames every ``step_s`` seconds, the first ``n_pre`` before injection."""
        return cls((np.arange(n) - n_pre) * step_s / 60.0)

    def __len__(self) -> int:
        return self.times.size


def aif_concentration(t, aif: AifParams = AifParams()):
    """Plasma concentration C_p(t); zero before injection."""
    t = np.asarray(t, dtype=float)
    tc = np.maximum(t, 0.0)
    cp = aif.dose * (aif.a1 * np.exp(-aif.m1 * tc) + aif.a2 * np.exp(-aif.m2 * tc))
    return np.where(t >= 0, cp, 0.0)


def _exp_difference(k, m: float, t):
    """(exp(-m t) - exp(-k t)) / (k - m) for t >= 0, without cancellation.

    Uses exp(-min(k, m) t) * (1 - exp(-|k - m| t)) / |k - m|. Inside the
    singularity threshold the limit t exp(-k t) is evaluated at the midpoint
    rate (k + m) / 2, which is identical at k = m and second-order accurate
    next to it.
    """
    h = np.abs(k - m)
    near = h < SINGULARITY_THRESHOLD
    h_safe = np.where(near, 1.0, h)
    lo = np.minimum(k, m)
    regular = np.exp(-lo * t) * (-np.expm1(-h_safe * t)) / h_safe
    limit = t * np.exp(-0.5 * (k + m) * t)
    return np.where(near, limit, regular)


# below this |k_ep - m_i| the plain difference quotient loses digits
_DIRECT_MIN_GAP = 1e-4


def convolution_term(kep, t, aif: AifParams = AifParams(), aif_decay=None):
    """(C_p * exp(-k_ep t))(t) in closed form; broadcasts ``kep`` against ``t``.

    ``aif_decay`` optionally supplies precomputed (exp(-m1 t), exp(-m2 t)) for
    the clamped times max(t, 0).
    """
    t = np.asarray(t, dtype=float)
    kep = np.asarray(kep, dtype=float)
    tc = np.maximum(t, 0.0)
    if aif_decay is None:
        aif_decay = (np.exp(-aif.m1 * tc), np.exp(-aif.m2 * tc))
    ek = np.exp(-kep * tc)
    gaps = [kep - m for m in aif.rates]
    direct = [np.abs(h) >= _DIRECT_MIN_GAP for h in gaps]
    if all(np.all(d) for d in direct):
        # sum_i a_i (e_i - ek) / h_i with the per-rate coefficients folded together
        c = [a / h for a, h in zip(aif.amplitudes, gaps)]
        out = aif_decay[0] * c[0] + aif_decay[1] * c[1] - ek * (c[0] + c[1])
        return np.where(t >= 0, aif.dose * out, 0.0)
    out = 0.0
    for a, m, em, h, d in zip(aif.amplitudes, aif.rates, aif_decay, gaps, direct):
        with np.errstate(divide="ignore", invalid="ignore"):
            term = (em - ek) / np.where(d, h, 1.0)
        if not np.all(d):
            term, close = np.broadcast_arrays(term, ~d)
            term = term.copy()
            k_b, t_b = np.broadcast_arrays(kep, tc)
            term[close] = _exp_difference(k_b[close], m, t_b[close])
        out = out + a * term
    return np.where(t >= 0, aif.dose * out, 0.0)


def scaled_convolution(scale, kep, tc, aif: AifParams, aif_decay):
    """``scale`` times the convolution term on clamped times ``tc`` >= 0.

    Fast path for the sampler: ``scale`` and ``kep`` are column vectors and
    the per-rate coefficients are folded into them, so the full-size work is
    one exponential and a few products. Falls back to ``convolution_term``
    when any k_ep lies near an AIF rate.
    """
    gaps = [kep - m for m in aif.rates]
    if min(np.min(np.abs(h)) for h in gaps) < _DIRECT_MIN_GAP:
        return scale * convolution_term(kep, tc, aif, aif_decay)
    c0, c1 = (aif.dose * a * scale / h for a, h in zip(aif.amplitudes, gaps))
    # at tc = 0 every exponential is exactly 1, so the sum cancels to exactly 0
    return aif_decay[0] * c0 + aif_decay[1] * c1 - np.exp(-kep * tc) * (c0 + c1)


def ctc_model(params: KineticParams, grid: TimeGrid, aif: AifParams = AifParams()) -> np.ndarray:
    """Model tissue concentration on ``grid``."""
    t = grid.times
    return params.vp * aif_concentration(t, aif) + params.ktrans * convolution_term(params.kep, t, aif)


def ctc_model_numeric(params: KineticParams, grid: TimeGrid, aif: AifParams = AifParams(),
                      dt: float = 1e-3) -> np.ndarray:
    """Model tissue concentration with the convolution done by trapezoidal quadrature.

    Each time point gets its own uniform quadrature grid on [0, t] with the
    largest step not exceeding ``dt``. Validation only; far slower than
    :func:`ctc_model`.
    """
    if dt <= 0:
        raise ValueError("quadrature step must be positive")
    t_all = grid.times
    out = params.vp * aif_concentration(t_all, aif)
    for idx, t in enumerate(t_all):
        if t <= 0:
            continue
        n = int(np.ceil(t / dt - 1e-9))
        tau = np.linspace(0.0, t, n + 1)
        f = aif_concentration(tau, aif) * np.exp(-params.kep * (t - tau))
        h = t / n
        integral = h * (f.sum() - 0.5 * (f[0] + f[-1]))
        out[idx] += params.ktrans * integral
    return out


def log_likelihood(y, model, sigma2: float) -> float:
    """Gaussian log-likelihood of ``y`` around ``model`` with iid noise variance ``sigma2``."""
    y = np.asarray(y, dtype=float)
    model = np.asarray(model, dtype=float)
    if y.shape != model.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {model.shape}")
    if sigma2 <= 0:
        raise ValueError("noise variance must be positive")
    rss = float(np.sum((y - model) ** 2))
    return -0.5 * y.size * np.log(2 * np.pi * sigma2) - rss / (2 * sigma2)
