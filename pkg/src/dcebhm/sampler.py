"""Block Gibbs / random-walk Metropolis sampler for the hierarchical model.

One iteration updates, in order: the fixed and patient effects of each
kinetic parameter as one Gaussian block, the patient-effect variances, the
voxel-effect variances, the noise variances, then every voxel's
(ln K^trans, ln k_ep) pair and vascular fraction by Metropolis-Hastings.
All voxels are swept together since their updates are conditionally
independent given the shared parameters.

Inverse-gamma distributions are parameterized by (shape, scale) with density
proportional to x^(-shape-1) exp(-scale/x).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .hierarchy import (IG_NOISE, IG_PATIENT, IG_VOXEL, VP_PRIOR, LayoutError, ModelState,
                        StudyLayout, log_prior_density)
from .studyio import PackedStudy, StudyData, StudyFormatError

log = logging.getLogger(__name__)

CHAIN_FORMAT = "dcebhm-chain"


@dataclass
class McmcConfig:
    burn_in: int = 10_000
    iterations: int = 100_000
    thin: int = 100
    seed: int = 0
    target_accept: tuple = (0.30, 0.50)
    adapt_interval: int = 100
    initial_proposal_sd: dict = field(
        default_factory=lambda: {"psi1": 1.0, "psi2": 1.0, "vp": 0.5})

    def __post_init__(self):
        self.target_accept = tuple(float(x) for x in self.target_accept)
        if self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")
        if not 1 <= self.thin <= self.iterations:
            raise ValueError("need iterations >= thin >= 1")
        lo, hi = self.target_accept
        if not 0 < lo < hi < 1:
            raise ValueError("target acceptance band must satisfy 0 < lo < hi < 1")
        if self.adapt_interval < 1:
            raise ValueError("adapt_interval must be positive")
        if min(self.initial_proposal_sd.values()) <= 0:
            raise ValueError("proposal standard deviations must be positive")

    @property
    def n_draws(self) -> int:
        return self.iterations // self.thin


def _packed(data) -> PackedStudy:
    return data if isinstance(data, PackedStudy) else PackedStudy.from_study(data)


def _inv_gamma(rng, shape, scale):
    return scale / rng.standard_gamma(shape)


def _group_sum(values, group, n_groups):
    """Sum rows of ``values`` (N,) or (N, 2) by group."""
    if values.ndim == 1:
        return np.bincount(group, weights=values, minlength=n_groups)
    c = values.shape[1]
    flat = (group[:, None] * c + np.arange(c)).ravel()
    return np.bincount(flat, weights=values.ravel(), minlength=n_groups * c).reshape(n_groups, c)


@dataclass
class VoxelCache:
    """Exchange term and residual sum of squares of every voxel at the current state."""

    exchange: np.ndarray  # (N, Tmax)
    rss: np.ndarray       # (N,)

    @classmethod
    def build(cls, state: ModelState, data) -> "VoxelCache":
        packed = _packed(data)
        exchange = packed.exchange(state.psi)
        model = state.vp[:, None] * packed.voxel_plasma + exchange
        return cls(exchange, np.sum((packed.y - model) ** 2, axis=1))


# --------------------------------------------------------------------------
# Gibbs steps

def effects_design(layout: StudyLayout) -> np.ndarray:
    """Group-by-coefficient design W for one kinetic parameter.

    Rows are (scan, patient) groups in flat order; columns are
    (alpha, beta, gamma_1..J, delta_1..J).
    """
    J = layout.n_patients
    W = np.zeros((2 * J, 2 + 2 * J))
    for i in range(2):
        for j in range(J):
            g = i * J + j
            W[g, 0] = 1.0
            W[g, 2 + j] = 1.0
            if i == 1:
                W[g, 1] = 1.0
                W[g, 2 + J + j] = 1.0
    return W


def effects_conditional(state: ModelState, l: int, W: np.ndarray | None = None):
    """Precision matrix and linear term of the Gaussian full conditional of
    (alpha_l, beta_l, gamma_.l, delta_.l); ``l`` is 0 (ln K^trans) or 1 (ln k_ep).

    The conditional is N(V^-1 m, V^-1). The psi values act as Gaussian
    observations of their group mean with precision 1/tau2_eps; alpha and beta
    have zero prior precision.
    """
    layout = state.layout
    if W is None:
        W = effects_design(layout)
    prec = 1.0 / state.tau2_eps[:, :, l].ravel()                       # (G,)
    n = layout.voxel_counts.ravel()
    psi_sum = _group_sum(state.psi[:, l], layout.voxel_group, layout.n_groups)
    V = (W.T * (n * prec)) @ W
    V.flat[::V.shape[0] + 1] += np.concatenate(
        [[0.0, 0.0], 1.0 / state.tau2_gamma[:, l], 1.0 / state.tau2_delta[:, l]])
    m = W.T @ (psi_sum * prec)
    return V, m


def gibbs_effects_block(state: ModelState, l: int, rng, W: np.ndarray | None = None) -> np.ndarray:
    """Draw the fixed and patient effects of kinetic parameter ``l`` in place."""
    V, m = effects_conditional(state, l, W)
    try:
        L = np.linalg.cholesky(V)
    except np.linalg.LinAlgError:
        raise ValueError("effects precision matrix is not positive definite; "
                         "variance parameters are corrupted") from None
    mean = cho_solve((L, True), m, check_finite=False)
    xi = mean + solve_triangular(L.T, rng.standard_normal(mean.size), lower=False, check_finite=False)
    J = state.layout.n_patients
    state.alpha[l], state.beta[l] = xi[0], xi[1]
    state.gamma[:, l] = xi[2:2 + J]
    state.delta[:, l] = xi[2 + J:]
    return xi


def patient_variance_conditional(state: ModelState):
    """(shape, scale_gamma, scale_delta) of the inverse-gamma conditionals, each (J, 2)."""
    a, b = IG_PATIENT
    return a + 0.5, b + 0.5 * state.gamma ** 2, b + 0.5 * state.delta ** 2


def gibbs_patient_variances(state: ModelState, rng) -> None:
    shape, scale_g, scale_d = patient_variance_conditional(state)
    state.tau2_gamma = _inv_gamma(rng, shape, scale_g)
    state.tau2_delta = _inv_gamma(rng, shape, scale_d)


def voxel_variance_conditional(state: ModelState):
    """(shape, scale) for tau2_eps, each broadcastable to (2, J, 2)."""
    layout = state.layout
    a, b = IG_VOXEL
    ss = _group_sum(state.epsilon() ** 2, layout.voxel_group, layout.n_groups)
    shape = a + 0.5 * layout.voxel_counts[:, :, None]
    scale = b + 0.5 * ss.reshape(2, layout.n_patients, 2)
    return np.broadcast_to(shape, scale.shape), scale


def gibbs_voxel_variances(state: ModelState, rng) -> None:
    shape, scale = voxel_variance_conditional(state)
    state.tau2_eps = _inv_gamma(rng, shape, scale)


def voxel_rss(state: ModelState, data, voxels=None) -> np.ndarray:
    """Residual sum of squares of each voxel's curve under the current state."""
    packed = _packed(data)
    idx = slice(None) if voxels is None else voxels
    model = packed.model_curves(state.psi[idx], state.vp[idx], voxels)
    return np.sum((packed.y[idx] - model) ** 2, axis=1)


def noise_variance_conditional(state: ModelState, data, rss: np.ndarray | None = None):
    """(shape, scale) for sigma2, each (2, J)."""
    packed = _packed(data)
    layout = state.layout
    if rss is None:
        rss = voxel_rss(state, packed)
    a, b = IG_NOISE
    n_obs = layout.voxel_counts.ravel() * packed.n_times
    ss = _group_sum(rss, packed.group, layout.n_groups)
    return (a + 0.5 * n_obs).reshape(2, -1), (b + 0.5 * ss).reshape(2, -1)


def gibbs_noise_variances(state: ModelState, data, rng, rss: np.ndarray | None = None) -> None:
    shape, scale = noise_variance_conditional(state, data, rss)
    state.sigma2 = _inv_gamma(rng, shape, scale)


# --------------------------------------------------------------------------
# Metropolis-Hastings steps

def _voxel_terms(state: ModelState, sel):
    group = state.layout.voxel_group[sel]
    return (state.group_means().reshape(-1, 2)[group],
            state.tau2_eps.reshape(-1, 2)[group],
            state.sigma2.ravel()[group])


def psi_log_target(state: ModelState, psi: np.ndarray, rss: np.ndarray, voxels=None) -> np.ndarray:
    """Unnormalized log full conditional of each voxel's psi pair.

    Gaussian prior around the group mean with variance tau2_eps, times the
    Gaussian likelihood of the voxel curve (given through its ``rss``).
    """
    mu, tau2, sigma2 = _voxel_terms(state, slice(None) if voxels is None else voxels)
    return -0.5 * np.sum((psi - mu) ** 2 / tau2, axis=1) - 0.5 * rss / sigma2


def vp_log_target(state: ModelState, logit_vp: np.ndarray, rss: np.ndarray, voxels=None) -> np.ndarray:
    """Unnormalized log full conditional of logit(vp), Jacobian included."""
    sel = slice(None) if voxels is None else voxels
    sigma2 = state.sigma2.ravel()[state.layout.voxel_group[sel]]
    return _vp_log_target(logit_vp, rss, sigma2)


def _vp_log_target(logit_vp, rss, sigma2):
    a, b = VP_PRIOR
    log_vp = -np.logaddexp(0.0, -logit_vp)
    log_1m = -np.logaddexp(0.0, logit_vp)
    # Beta(a, b) density times d vp / d logit = vp (1 - vp)
    return a * log_vp + b * log_1m - 0.5 * rss / sigma2


def _selection(state, voxels):
    if voxels is None:
        return slice(None), state.layout.n_voxels
    sel = np.atleast_1d(voxels)
    return sel, sel.size


def _accepted(sel, accept):
    return np.flatnonzero(accept) if isinstance(sel, slice) else sel[accept]


def mh_voxel_psi(state: ModelState, data, proposal_sd, rng, voxels=None,
                 cache: VoxelCache | None = None) -> np.ndarray:
    """Joint random-walk update of (ln K^trans, ln k_ep) for each voxel.

    ``proposal_sd`` broadcasts to (n, 2). A ``cache`` covering all voxels is
    read and kept current. Returns the acceptance indicator per voxel updated.
    """
    packed = _packed(data)
    sel, n = _selection(state, voxels)
    if cache is None:
        cache = VoxelCache.build(state, packed)
    current = state.psi[sel]
    proposal = current + proposal_sd * rng.standard_normal((n, 2))
    exchange = packed.exchange(proposal, None if isinstance(sel, slice) else sel)
    model = state.vp[sel, None] * packed.voxel_plasma[sel] + exchange
    resid = packed.y[sel] - model
    rss_prop = np.einsum("ij,ij->i", resid, resid)
    mu, tau2, sigma2 = _voxel_terms(state, sel)
    log_ratio = (0.5 * np.sum(((current - mu) ** 2 - (proposal - mu) ** 2) / tau2, axis=1)
                 - 0.5 * (rss_prop - cache.rss[sel]) / sigma2)
    accept = np.log(rng.random(n)) < log_ratio
    hit = _accepted(sel, accept)
    state.psi[hit] = proposal[accept]
    cache.rss[hit] = rss_prop[accept]
    cache.exchange[hit] = exchange[accept]
    return accept


def mh_vp(state: ModelState, data, proposal_sd, rng, voxels=None,
          cache: VoxelCache | None = None) -> np.ndarray:
    """Random-walk update of each voxel's vascular fraction on the logit scale."""
    packed = _packed(data)
    sel, n = _selection(state, voxels)
    if cache is None:
        cache = VoxelCache.build(state, packed)
    vp = state.vp[sel]
    with np.errstate(divide="ignore"):
        current = np.log(vp) - np.log1p(-vp)
    proposal = current + proposal_sd * rng.standard_normal(n)
    vp_prop = 1.0 / (1.0 + np.exp(-proposal))
    model = vp_prop[:, None] * packed.voxel_plasma[sel] + cache.exchange[sel]
    resid = packed.y[sel] - model
    rss_prop = np.einsum("ij,ij->i", resid, resid)
    sigma2 = state.sigma2.ravel()[state.layout.voxel_group[sel]]
    log_ratio = (_vp_log_target(proposal, rss_prop, sigma2)
                 - _vp_log_target(current, cache.rss[sel], sigma2))
    accept = np.log(rng.random(n)) < log_ratio
    hit = _accepted(sel, accept)
    state.vp[hit] = vp_prop[accept]
    cache.rss[hit] = rss_prop[accept]
    return accept


def adapt_proposals(acceptance, sd, target=(0.30, 0.50)):
    """Scale proposal sds by 1.1 above the target band and by 0.9 below it."""
    acceptance = np.asarray(acceptance, dtype=float)
    lo, hi = target
    factor = np.where(acceptance > hi, 1.1, np.where(acceptance < lo, 0.9, 1.0))
    sd = np.asarray(sd, dtype=float)
    return sd * factor.reshape(factor.shape + (1,) * (sd.ndim - factor.ndim))


def likelihood_variance(state: ModelState, data, step: float = 0.05,
                        bounds=(1e-4, 4.0)) -> np.ndarray:
    """Per-voxel variance of each psi component implied by the curve alone, (N, 2).

    Finite-difference curvature of RSS / (2 sigma2) at the current state,
    clipped to ``bounds``; flat or concave directions get the upper bound.
    """
    packed = _packed(data)
    rss0 = voxel_rss(state, packed)
    sigma2 = state.sigma2.ravel()[packed.group]
    out = np.empty_like(state.psi)
    for l in range(2):
        shifted = []
        for sign in (1.0, -1.0):
            psi = state.psi.copy()
            psi[:, l] += sign * step
            model = packed.model_curves(psi, state.vp)
            shifted.append(np.sum((packed.y - model) ** 2, axis=1))
        curv = (shifted[0] + shifted[1] - 2 * rss0) / step ** 2
        with np.errstate(divide="ignore"):
            var = np.where(curv > 0, 2 * sigma2 / curv, bounds[1])
        out[:, l] = np.clip(var, *bounds)
    return out


def local_psi_scale(state: ModelState, data_var: np.ndarray) -> np.ndarray:
    """Conditional sd of psi combining the group prior and the curve curvature, (N, 2)."""
    tau2 = state.tau2_eps.reshape(-1, 2)[state.layout.voxel_group]
    return np.sqrt(tau2 * data_var / (tau2 + data_var))


# --------------------------------------------------------------------------
# joint density, initialization, chain driver

def log_likelihood_total(state: ModelState, data) -> float:
    packed = _packed(data)
    rss = voxel_rss(state, packed)
    sigma2 = state.sigma2.ravel()[packed.group]
    n = packed.n_times[packed.group]
    return float(np.sum(-0.5 * n * np.log(2 * np.pi * sigma2) - 0.5 * rss / sigma2))


def log_joint(state: ModelState, data) -> float:
    """Log posterior density up to its normalizing constant."""
    return log_likelihood_total(state, data) + log_prior_density(state)


def initial_state(data: StudyData, nls_fits=None) -> ModelState:
    """Starting point for a chain.

    Without fits: alpha = (ln 0.2, ln 1.0), all other effects zero, unit
    variances, vp = 0.05. With per-voxel fits (flat voxel order), alpha comes
    from the log median of the converged estimates and every converged voxel
    starts at its own fitted values. Noise variances start at the mean
    variance of the pre-injection frames when a group has at least two,
    otherwise 0.01.
    """
    layout = data.layout
    state = ModelState.zeros(layout)
    state.alpha[:] = [np.log(0.2), np.log(1.0)]
    if nls_fits is not None:
        if len(nls_fits) != layout.n_voxels:
            raise LayoutError(f"{len(nls_fits)} voxel fits for {layout.n_voxels} voxels")
        ok = np.array([f.converged for f in nls_fits])
        if ok.any():
            k = np.array([f.params.ktrans for f in nls_fits])
            e = np.array([f.params.kep for f in nls_fits])
            v = np.array([f.params.vp for f in nls_fits])
            state.alpha[:] = [np.log(np.median(k[ok])), np.log(np.median(e[ok]))]
            state.psi[:] = state.psi_means()
            state.psi[ok] = np.column_stack([np.log(k[ok]), np.log(e[ok])])
            state.vp[ok] = np.clip(v[ok], 1e-3, 0.5)
    if nls_fits is None or not ok.any():
        state.psi[:] = state.psi_means()
    for i in range(2):
        for j in range(layout.n_patients):
            grid, y = data.grids[i][j], data.curves[i][j]
            pre = y[:, grid.times < 0]
            state.sigma2[i, j] = float(np.mean(np.var(pre, axis=1, ddof=1))) \
                if pre.shape[1] >= 2 else 0.01
            if not state.sigma2[i, j] > 0:
                state.sigma2[i, j] = 0.01
    return state


_SCALAR_FIELDS = ModelState.ARRAY_FIELDS


@dataclass
class ChainSamples:
    """Retained post-burn-in draws; each array has the draw index first."""

    layout: StudyLayout
    config: McmcConfig
    draws: dict
    acceptance: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.draws["alpha"].shape[0]

    def __getattr__(self, name):
        draws = self.__dict__.get("draws")
        if draws is not None and name in draws:
            return draws[name]
        raise AttributeError(name)

    def state(self, s: int) -> ModelState:
        return ModelState(self.layout, **{n: self.draws[n][s] for n in _SCALAR_FIELDS})

    def epsilon(self) -> np.ndarray:
        """Voxel effects of every draw, (S, N, 2)."""
        base = self.draws["alpha"][:, None, :] + self.draws["gamma"]         # (S, J, 2)
        means = np.stack([base, base + self.draws["beta"][:, None, :] + self.draws["delta"]], axis=1)
        S = self.n_draws
        return self.draws["psi"] - means.reshape(S, -1, 2)[:, self.layout.voxel_group]

    # ---- columnar file + JSON sidecar

    def column_names(self) -> list:
        lay = self.layout
        J = lay.n_patients
        names = [f"alpha[{l}]" for l in (1, 2)] + [f"beta[{l}]" for l in (1, 2)]
        for fam in ("gamma", "delta"):
            names += [f"{fam}[{j},{l}]" for j in range(1, J + 1) for l in (1, 2)]
        for fam in ("tau2_gamma", "tau2_delta"):
            names += [f"{fam}[{j},{l}]" for j in range(1, J + 1) for l in (1, 2)]
        names += [f"tau2_eps[{i},{j},{l}]" for i in (1, 2) for j in range(1, J + 1) for l in (1, 2)]
        names += [f"sigma2[{i},{j}]" for i in (1, 2) for j in range(1, J + 1)]
        voxels = [(i, j, k) for i in (1, 2) for j in range(1, J + 1)
                  for k in range(1, lay.voxel_counts[i - 1, j - 1] + 1)]
        names += [f"vp[{i},{j},{k}]" for i, j, k in voxels]
        names += [f"psi[{i},{j},{k},{l}]" for i, j, k in voxels for l in (1, 2)]
        return names

    _COLUMN_ORDER = ("alpha", "beta", "gamma", "delta", "tau2_gamma", "tau2_delta",
                     "tau2_eps", "sigma2", "vp", "psi")

    def to_matrix(self) -> np.ndarray:
        S = self.n_draws
        return np.hstack([self.draws[n].reshape(S, -1) for n in self._COLUMN_ORDER])

    def sidecar(self) -> dict:
        return {
            "format": CHAIN_FORMAT,
            "version": 1,
            "config": asdict(self.config),
            "seed": self.config.seed,
            "voxel_counts": self.layout.voxel_counts.tolist(),
            "n_draws": self.n_draws,
            "acceptance": self.acceptance,
        }

    def save(self, path) -> Path:
        """Write the draws to ``path`` (CSV) and metadata to ``path`` with a .json suffix."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.column_names())
            for row in self.to_matrix():
                writer.writerow([repr(float(v)) for v in row])
        path.with_suffix(".json").write_text(json.dumps(self.sidecar(), indent=1, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "ChainSamples":
        path = Path(path)
        try:
            meta = json.loads(path.with_suffix(".json").read_text())
        except FileNotFoundError:
            raise StudyFormatError(f"{path}: missing sidecar {path.with_suffix('.json').name}") from None
        if meta.get("format") != CHAIN_FORMAT:
            raise StudyFormatError(f"{path}: sidecar format must be '{CHAIN_FORMAT}'")
        layout = StudyLayout(np.asarray(meta["voxel_counts"]))
        config = McmcConfig(**meta["config"])
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = [[float(v) for v in row] for row in reader if row]
        shell = cls(layout, config, {n: np.zeros((0,)) for n in cls._COLUMN_ORDER})
        if header != shell.column_names():
            raise StudyFormatError(f"{path}: column header does not match the sidecar layout")
        matrix = np.array(rows, dtype=float).reshape(len(rows), len(header))
        S = matrix.shape[0]
        shapes = ModelState.zeros(layout).expected_shapes()
        draws, col = {}, 0
        for name in cls._COLUMN_ORDER:
            size = int(np.prod(shapes[name]))
            draws[name] = matrix[:, col:col + size].reshape((S,) + shapes[name])
            col += size
        return cls(layout, config, draws, meta.get("acceptance", {}))


def run_chain(config: McmcConfig, data: StudyData, init: ModelState,
              progress: bool = False) -> ChainSamples:
    """Run burn-in with proposal adaptation, then record every ``thin``-th state."""
    if init.layout.voxel_counts.shape != data.layout.voxel_counts.shape or \
            np.any(init.layout.voxel_counts != data.layout.voxel_counts):
        raise LayoutError("initial state layout does not match the study layout")
    init.validate_shapes()
    init.validate_support()
    packed = _packed(data)
    state = init.copy()
    rng = np.random.default_rng(config.seed)
    W = effects_design(data.layout)
    N = data.layout.n_voxels

    cache = VoxelCache.build(state, packed)
    if not np.isfinite(log_likelihood_total(state, packed)):
        raise ValueError("log-likelihood is not finite at the initial state")

    # psi proposals are multiples of the local conditional sd, which follows
    # tau2_eps; only the multipliers adapt, and they freeze after burn-in
    sd0 = config.initial_proposal_sd
    psi_mult = np.tile([sd0["psi1"], sd0["psi2"]], (N, 1))
    data_var = likelihood_variance(state, packed)
    vp_sd = np.full(N, float(sd0["vp"]))
    lo_hi = config.target_accept

    n_draws = config.n_draws
    shapes = state.expected_shapes()
    draws = {n: np.empty((n_draws,) + shapes[n]) for n in _SCALAR_FIELDS}
    batch_psi = np.zeros(N)
    batch_vp = np.zeros(N)
    post_psi = np.zeros(N)
    post_vp = np.zeros(N)

    total = config.burn_in + config.iterations
    stored = 0
    for it in range(total):
        gibbs_effects_block(state, 0, rng, W)
        gibbs_effects_block(state, 1, rng, W)
        gibbs_patient_variances(state, rng)
        gibbs_voxel_variances(state, rng)
        gibbs_noise_variances(state, packed, rng, cache.rss)
        psi_sd = psi_mult * local_psi_scale(state, data_var)
        acc_psi = mh_voxel_psi(state, packed, psi_sd, rng, cache=cache)
        acc_vp = mh_vp(state, packed, vp_sd, rng, cache=cache)

        if it < config.burn_in:
            batch_psi += acc_psi
            batch_vp += acc_vp
            if (it + 1) % config.adapt_interval == 0:
                psi_mult = adapt_proposals(batch_psi / config.adapt_interval, psi_mult, lo_hi)
                vp_sd = adapt_proposals(batch_vp / config.adapt_interval, vp_sd, lo_hi)
                batch_psi[:] = 0
                batch_vp[:] = 0
        else:
            post_psi += acc_psi
            post_vp += acc_vp
            t = it - config.burn_in + 1
            if t % config.thin == 0 and stored < n_draws:
                for n in _SCALAR_FIELDS:
                    draws[n][stored] = getattr(state, n)
                stored += 1
        if progress and (it + 1) % 1000 == 0:
            log.info("iteration %d/%d", it + 1, total)

    rate_psi = post_psi / config.iterations
    rate_vp = post_vp / config.iterations
    acceptance = {
        "psi": float(rate_psi.mean()),
        "vp": float(rate_vp.mean()),
        "psi_min": float(rate_psi.min()),
        "psi_max": float(rate_psi.max()),
        "vp_min": float(rate_vp.min()),
        "vp_max": float(rate_vp.max()),
    }
    return ChainSamples(data.layout, config, draws, acceptance)
