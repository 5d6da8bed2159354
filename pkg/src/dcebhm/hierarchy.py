"""Additive parameter model for log kinetic parameters and its priors.

For voxel k of patient j at scan i, and kinetic parameter l (1 = ln K^trans,
2 = ln k_ep)::

    psi[i,j,k,l] = alpha[l] + x_i beta[l] + gamma[j,l] + x_i delta[j,l] + eps[i,j,k,l]

with x_i = 1 for the post-treatment scan and 0 at baseline. Public functions
take 1-based scan and patient numbers; arrays are 0-based.

Voxels are stored flat, ordered by scan, then patient, then voxel.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .kinetics import KineticParams

N_SCANS = 2
N_KINETIC = 2

# prior hyperparameters (shape, scale) of the inverse-gamma variance priors
IG_PATIENT = (1.0, 1.0)
IG_VOXEL = (1.0, 1e-5)
IG_NOISE = (1.0, 1e-2)
# Beta prior on the vascular fraction
VP_PRIOR = (1.0, 19.0)


class LayoutError(ValueError):
    """Arrays or indices inconsistent with the study layout."""


@dataclass(frozen=True)
class StudyLayout:
    """Number of patients and voxels per (scan, patient) group."""

    voxel_counts: np.ndarray  # shape (2, J)

    def __post_init__(self):
        counts = np.asarray(self.voxel_counts, dtype=int)
        if counts.ndim != 2 or counts.shape[0] != N_SCANS:
            raise LayoutError(f"exactly {N_SCANS} scans are supported, got counts of shape {counts.shape}")
        if counts.shape[1] < 1:
            raise LayoutError("at least one patient is required")
        if np.any(counts < 1):
            i, j = np.argwhere(counts < 1)[0]
            raise LayoutError(f"scan {i + 1}, patient {j + 1} has no voxels")
        counts.setflags(write=False)
        object.__setattr__(self, "voxel_counts", counts)

    @property
    def n_patients(self) -> int:
        return self.voxel_counts.shape[1]

    @property
    def n_groups(self) -> int:
        return self.voxel_counts.size

    @property
    def n_voxels(self) -> int:
        return int(self.voxel_counts.sum())

    @cached_property
    def offsets(self) -> np.ndarray:
        """Start of each (scan, patient) group in flat voxel order, shape (2, J)."""
        flat = np.concatenate([[0], np.cumsum(self.voxel_counts.ravel())[:-1]])
        return flat.reshape(self.voxel_counts.shape)

    @cached_property
    def voxel_group(self) -> np.ndarray:
        """Flat group index ``(i - 1) * J + (j - 1)`` of every voxel."""
        return np.repeat(np.arange(self.n_groups), self.voxel_counts.ravel())

    @property
    def voxel_scan(self) -> np.ndarray:
        return self.voxel_group // self.n_patients

    @property
    def voxel_patient(self) -> np.ndarray:
        return self.voxel_group % self.n_patients

    def check(self, i: int, j: int, k: int | None = None) -> None:
        if i not in (1, 2):
            raise LayoutError(f"scan index must be 1 or 2, got {i}")
        if not 1 <= j <= self.n_patients:
            raise LayoutError(f"patient index {j} outside 1..{self.n_patients}")
        if k is not None and not 1 <= k <= self.voxel_counts[i - 1, j - 1]:
            raise LayoutError(f"voxel {k} outside 1..{self.voxel_counts[i - 1, j - 1]} "
                              f"for scan {i}, patient {j}")

    def voxel_slice(self, i: int, j: int) -> slice:
        self.check(i, j)
        start = int(self.offsets[i - 1, j - 1])
        return slice(start, start + int(self.voxel_counts[i - 1, j - 1]))

    def voxel_index(self, i: int, j: int, k: int) -> int:
        self.check(i, j, k)
        return int(self.offsets[i - 1, j - 1]) + k - 1


@dataclass
class ModelState:
    """Every unknown in the model at one point of the chain.

    Voxel effects are held implicitly through ``psi``; ``epsilon()`` recovers
    them as psi minus the group mean.
    """

    layout: StudyLayout
    alpha: np.ndarray        # (2,)
    beta: np.ndarray         # (2,)
    gamma: np.ndarray        # (J, 2)
    delta: np.ndarray        # (J, 2)
    psi: np.ndarray          # (N, 2)
    tau2_gamma: np.ndarray   # (J, 2)
    tau2_delta: np.ndarray   # (J, 2)
    tau2_eps: np.ndarray     # (2, J, 2)
    sigma2: np.ndarray       # (2, J)
    vp: np.ndarray           # (N,)

    ARRAY_FIELDS = ("alpha", "beta", "gamma", "delta", "psi", "tau2_gamma",
                    "tau2_delta", "tau2_eps", "sigma2", "vp")

    def __post_init__(self):
        for name in self.ARRAY_FIELDS:
            setattr(self, name, np.array(getattr(self, name), dtype=float))
        self.validate_shapes()

    def expected_shapes(self) -> dict:
        J, N = self.layout.n_patients, self.layout.n_voxels
        return {"alpha": (2,), "beta": (2,), "gamma": (J, 2), "delta": (J, 2),
                "psi": (N, 2), "tau2_gamma": (J, 2), "tau2_delta": (J, 2),
                "tau2_eps": (2, J, 2), "sigma2": (2, J), "vp": (N,)}

    def validate_shapes(self) -> None:
        for name, shape in self.expected_shapes().items():
            got = getattr(self, name).shape
            if got != shape:
                raise LayoutError(f"{name} has shape {got}, layout requires {shape}")

    def validate_support(self) -> None:
        for name in ("tau2_gamma", "tau2_delta", "tau2_eps", "sigma2"):
            if np.any(~(getattr(self, name) > 0)):
                raise ValueError(f"{name} must be strictly positive")
        if np.any((self.vp < 0) | (self.vp > 1)):
            raise ValueError("vp must lie in [0, 1]")
        for name in ("alpha", "beta", "gamma", "delta", "psi"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} must be finite")

    def copy(self) -> "ModelState":
        return ModelState(self.layout, **{n: getattr(self, n).copy() for n in self.ARRAY_FIELDS})

    @classmethod
    def zeros(cls, layout: StudyLayout) -> "ModelState":
        J, N = layout.n_patients, layout.n_voxels
        return cls(layout, alpha=np.zeros(2), beta=np.zeros(2), gamma=np.zeros((J, 2)),
                   delta=np.zeros((J, 2)), psi=np.zeros((N, 2)), tau2_gamma=np.ones((J, 2)),
                   tau2_delta=np.ones((J, 2)), tau2_eps=np.ones((2, J, 2)),
                   sigma2=np.ones((2, J)), vp=np.full(N, 0.05))

    def group_means(self) -> np.ndarray:
        """Mean of psi for every (scan, patient) group, shape (2, J, 2)."""
        base = self.alpha + self.gamma  # (J, 2)
        return np.stack([base, base + self.beta + self.delta])

    def psi_means(self) -> np.ndarray:
        """Mean of psi for every voxel, shape (N, 2)."""
        return self.group_means().reshape(-1, 2)[self.layout.voxel_group]

    def epsilon(self) -> np.ndarray:
        return self.psi - self.psi_means()


def scan_indicator(i: int) -> float:
    if i not in (1, 2):
        raise LayoutError(f"scan index must be 1 or 2, got {i}")
    return 1.0 if i == 2 else 0.0


def design_row(i: int) -> np.ndarray:
    """Covariate matrix Z_i = [X_i X_i] acting on (alpha1, beta1, alpha2, beta2, theta_j)."""
    x = scan_indicator(i)
    X = np.array([[1.0, x, 0.0, 0.0],
                  [0.0, 0.0, 1.0, x]])
    return np.hstack([X, X])


def stacked_effects(state: ModelState, j: int) -> np.ndarray:
    """[phi; theta_j] = (alpha1, beta1, alpha2, beta2, gamma_j1, delta_j1, gamma_j2, delta_j2)."""
    state.layout.check(1, j)
    g, d = state.gamma[j - 1], state.delta[j - 1]
    return np.array([state.alpha[0], state.beta[0], state.alpha[1], state.beta[1],
                     g[0], d[0], g[1], d[1]])


def psi_mean(i: int, j: int, state: ModelState) -> np.ndarray:
    """Mean of (psi_1, psi_2) for scan ``i``, patient ``j`` (both 1-based)."""
    state.layout.check(i, j)
    x = scan_indicator(i)
    return state.alpha + x * state.beta + state.gamma[j - 1] + x * state.delta[j - 1]


def kinetic_from_psi(psi1: float, psi2: float, vp: float) -> KineticParams:
    return KineticParams(ktrans=float(np.exp(psi1)), kep=float(np.exp(psi2)), vp=float(vp))


def _normal_logpdf(x, var):
    return -0.5 * np.log(2 * np.pi * var) - 0.5 * x ** 2 / var


def _invgamma_logpdf(x, shape, scale):
    return shape * np.log(scale) - gammaln(shape) - (shape + 1) * np.log(x) - scale / x


def _beta_logpdf(x, a, b):
    logb = gammaln(a) + gammaln(b) - gammaln(a + b)
    return xlogy(a - 1, x) + xlog1py(b - 1, -x) - logb


def log_prior_density(state: ModelState) -> float:
    """Joint log prior density; the flat fixed-effect priors contribute nothing."""
    eps = state.epsilon()
    tau2_eps_vox = state.tau2_eps.reshape(-1, 2)[state.layout.voxel_group]
    terms = [
        _normal_logpdf(state.gamma, state.tau2_gamma).sum(),
        _normal_logpdf(state.delta, state.tau2_delta).sum(),
        _normal_logpdf(eps, tau2_eps_vox).sum(),
        _invgamma_logpdf(state.tau2_gamma, *IG_PATIENT).sum(),
        _invgamma_logpdf(state.tau2_delta, *IG_PATIENT).sum(),
        _invgamma_logpdf(state.tau2_eps, *IG_VOXEL).sum(),
        _invgamma_logpdf(state.sigma2, *IG_NOISE).sum(),
        _beta_logpdf(state.vp, *VP_PRIOR).sum(),
    ]
    return float(sum(terms))
