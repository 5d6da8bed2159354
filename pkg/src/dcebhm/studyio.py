"""Study data model, on-disk formats and synthetic study generation.

A study on disk is a JSON manifest plus one CSV matrix per (scan, patient)
with one row per voxel and one column per time point. Times in the manifest
are in seconds by default and are converted to minutes on load.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .hierarchy import LayoutError, ModelState, StudyLayout
from .kinetics import AifParams, TimeGrid, aif_concentration, scaled_convolution

FORMAT_NAME = "dcebhm-study"
FORMAT_VERSION = 1

# file time units per minute
_TIME_UNITS = {"s": 60.0, "min": 1.0}
_CONC_UNITS = {"mmol/l", "mM"}


class StudyFormatError(ValueError):
    """A study, chain or truth file that does not match its schema."""


@dataclass
class StudyData:
    """Observed concentration curves for every voxel of every scan and patient.

    ``grids[i][j]`` and ``curves[i][j]`` hold the time grid (minutes) and the
    (n_ij, T_ij) concentration matrix of scan ``i + 1``, patient ``j + 1``.
    """

    layout: StudyLayout
    aif: AifParams
    grids: list
    curves: list
    study_id: str = "study"
    include_pre_injection: bool = True

    def __post_init__(self):
        J = self.layout.n_patients
        if len(self.grids) != 2 or len(self.curves) != 2 or \
                any(len(row) != J for row in self.grids + self.curves):
            raise LayoutError("grids and curves must be indexed [scan][patient] with 2 scans "
                              f"and {J} patients")
        for i in range(2):
            for j in range(J):
                grid = self.grids[i][j]
                if not isinstance(grid, TimeGrid):
                    grid = self.grids[i][j] = TimeGrid(grid)
                y = np.array(self.curves[i][j], dtype=float, ndmin=2)
                where = f"scan {i + 1}, patient {j + 1}"
                if y.shape[0] != self.layout.voxel_counts[i, j]:
                    raise LayoutError(f"{where}: {y.shape[0]} voxel curves, layout says "
                                      f"{self.layout.voxel_counts[i, j]}")
                if y.shape[1] != len(grid):
                    raise LayoutError(f"{where}: curves have {y.shape[1]} time points, grid has {len(grid)}")
                if not np.all(np.isfinite(y)):
                    raise LayoutError(f"{where}: non-finite concentration values")
                self.curves[i][j] = y

    def series(self, i: int, j: int) -> tuple[TimeGrid, np.ndarray]:
        """Grid and curves of scan ``i``, patient ``j`` (1-based)."""
        self.layout.check(i, j)
        return self.grids[i - 1][j - 1], self.curves[i - 1][j - 1]

    def packed(self) -> "PackedStudy":
        return PackedStudy.from_study(self)


@dataclass
class PackedStudy:
    """Voxel curves stacked into padded arrays for vectorized likelihood work.

    Padding frames sit at t = -1 with observation 0, where the model is also
    0, so they never contribute to a residual.
    """

    layout: StudyLayout
    aif: AifParams
    times: np.ndarray      # (G, Tmax) minutes, padded with -1
    y: np.ndarray          # (N, Tmax) observations, padded with 0
    n_times: np.ndarray    # (G,)
    plasma: np.ndarray     # (G, Tmax) C_p on each group grid
    group: np.ndarray      # (N,)

    @classmethod
    def from_study(cls, data: StudyData) -> "PackedStudy":
        layout = data.layout
        J = layout.n_patients
        grids = [data.grids[i][j] for i in range(2) for j in range(J)]
        t_max = max(len(g) for g in grids)
        times = np.full((layout.n_groups, t_max), -1.0)
        for g, grid in enumerate(grids):
            times[g, :len(grid)] = grid.times
        y = np.zeros((layout.n_voxels, t_max))
        row = 0
        for i in range(2):
            for j in range(J):
                c = data.curves[i][j]
                y[row:row + c.shape[0], :c.shape[1]] = c
                row += c.shape[0]
        return cls(layout=layout, aif=data.aif, times=times, y=y,
                   n_times=np.array([len(g) for g in grids]),
                   plasma=aif_concentration(times, data.aif), group=layout.voxel_group)

    def __post_init__(self):
        tc = np.maximum(self.times, 0.0)
        g = self.group
        # per-voxel copies so full sweeps avoid gathers
        self.voxel_times = self.times[g]
        self.voxel_tc = tc[g]
        self.voxel_plasma = self.plasma[g]
        self.voxel_decay = (np.exp(-self.aif.m1 * tc)[g], np.exp(-self.aif.m2 * tc)[g])

    def exchange(self, psi, voxels=None) -> np.ndarray:
        """K^trans-weighted convolution term (n, Tmax) for log rates ``psi``."""
        sel = slice(None) if voxels is None else voxels
        decay = (self.voxel_decay[0][sel], self.voxel_decay[1][sel])
        psi = np.asarray(psi)
        return scaled_convolution(np.exp(psi[:, :1]), np.exp(psi[:, 1:]), self.voxel_tc[sel],
                                  self.aif, decay)

    def model_curves(self, psi, vp, voxels=None) -> np.ndarray:
        """Model concentrations (n, Tmax) for log rates ``psi`` (n, 2) and fractions ``vp``."""
        sel = slice(None) if voxels is None else voxels
        return np.asarray(vp)[:, None] * self.voxel_plasma[sel] + self.exchange(psi, voxels)


def model_curves(state: ModelState, data: StudyData) -> list:
    """Noise-free model curves for ``state`` on the study grids, indexed [scan][patient]."""
    packed = data.packed()
    flat = packed.model_curves(state.psi, state.vp)
    out = [[None] * data.layout.n_patients for _ in range(2)]
    for i in range(2):
        for j in range(data.layout.n_patients):
            s = data.layout.voxel_slice(i + 1, j + 1)
            out[i][j] = flat[s, :len(data.grids[i][j])].copy()
    return out


# --------------------------------------------------------------------------
# study files

def _fmt(x: float) -> str:
    return repr(float(x))


def _write_matrix(path: Path, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in np.atleast_2d(values):
            writer.writerow([_fmt(v) for v in row])


def _read_matrix(path: Path, where: str) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    except FileNotFoundError:
        raise StudyFormatError(f"{where}: data file {path} not found") from None
    except ValueError as exc:
        raise StudyFormatError(f"{where}: non-numeric entry in {path.name}: {exc}") from None
    if not rows:
        raise StudyFormatError(f"{where}: data file {path.name} is empty")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise StudyFormatError(f"{where}: ragged rows in {path.name}")
    return np.array(rows, dtype=float)


def save_study(data: StudyData, path, time_unit: str = "s") -> Path:
    """Write ``data`` as a manifest at ``path`` plus CSV matrices alongside it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if time_unit not in _TIME_UNITS:
        raise ValueError(f"time_unit must be one of {sorted(_TIME_UNITS)}")
    scale = _TIME_UNITS[time_unit]
    # fall back to minutes if some time would not survive the unit conversion
    if any(np.any(g.times * scale / scale != g.times) for row in data.grids for g in row):
        time_unit, scale = "min", 1.0
    series = []
    for i in range(2):
        for j in range(data.layout.n_patients):
            name = f"{path.stem}_scan{i + 1}_patient{j + 1:02d}.csv"
            _write_matrix(path.parent / name, data.curves[i][j])
            series.append({
                "scan": i + 1,
                "patient": j + 1,
                "n_voxels": int(data.layout.voxel_counts[i, j]),
                "times": [float(t * scale) for t in data.grids[i][j].times],
                "file": name,
            })
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "study_id": data.study_id,
        "units": {"time": time_unit, "concentration": "mmol/l"},
        "aif": data.aif.to_dict(),
        "include_pre_injection": data.include_pre_injection,
        "n_patients": data.layout.n_patients,
        "series": series,
    }
    path.write_text(json.dumps(manifest, indent=1) + "\n")
    return path


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise StudyFormatError(f"{where}: missing field '{key}'")
    return obj[key]


def load_study(path) -> StudyData:
    """Read and validate a study manifest and its CSV matrices."""
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError:
        raise StudyFormatError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise StudyFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    where = str(path)
    if _require(manifest, "format", where) != FORMAT_NAME:
        raise StudyFormatError(f"{where}: format must be '{FORMAT_NAME}'")
    units = _require(manifest, "units", where)
    time_unit = _require(units, "time", f"{where}: units")
    if time_unit not in _TIME_UNITS:
        raise StudyFormatError(f"{where}: units.time must be one of {sorted(_TIME_UNITS)}, got {time_unit!r}")
    if _require(units, "concentration", f"{where}: units") not in _CONC_UNITS:
        raise StudyFormatError(f"{where}: units.concentration must be mmol/l")
    try:
        aif = AifParams(**_require(manifest, "aif", where))
    except (TypeError, ValueError) as exc:
        raise StudyFormatError(f"{where}: aif: {exc}") from None
    n_patients = _require(manifest, "n_patients", where)
    if not isinstance(n_patients, int) or n_patients < 1:
        raise StudyFormatError(f"{where}: n_patients must be a positive integer")
    include_pre = bool(manifest.get("include_pre_injection", True))
    scale = _TIME_UNITS[time_unit]

    counts = np.zeros((2, n_patients), dtype=int)
    grids = [[None] * n_patients for _ in range(2)]
    curves = [[None] * n_patients for _ in range(2)]
    for idx, entry in enumerate(_require(manifest, "series", where)):
        loc = f"{where}: series[{idx}]"
        i, j = _require(entry, "scan", loc), _require(entry, "patient", loc)
        if i not in (1, 2) or not (isinstance(j, int) and 1 <= j <= n_patients):
            raise StudyFormatError(f"{loc}: (scan {i}, patient {j}) outside the layout")
        loc = f"{where}: scan {i}, patient {j}"
        if grids[i - 1][j - 1] is not None:
            raise StudyFormatError(f"{loc}: listed twice")
        n_vox = _require(entry, "n_voxels", loc)
        times = np.asarray(_require(entry, "times", loc), dtype=float) / scale
        y = _read_matrix(path.parent / _require(entry, "file", loc), loc)
        if y.shape[0] != n_vox:
            raise StudyFormatError(f"{loc}: voxel count mismatch, file has {y.shape[0]} rows "
                                   f"but n_voxels is {n_vox}")
        if y.shape[1] != times.size:
            raise StudyFormatError(f"{loc}: file has {y.shape[1]} time points but 'times' "
                                   f"lists {times.size}")
        if not include_pre:
            keep = times >= 0
            times, y = times[keep], y[:, keep]
        try:
            grids[i - 1][j - 1] = TimeGrid(times)
        except ValueError as exc:
            raise StudyFormatError(f"{loc}: {exc}") from None
        counts[i - 1, j - 1] = n_vox
        curves[i - 1][j - 1] = y
    for i in range(2):
        for j in range(n_patients):
            if grids[i][j] is None:
                raise StudyFormatError(f"{where}: no series for scan {i + 1}, patient {j + 1}")
    try:
        return StudyData(StudyLayout(counts), aif, grids, curves,
                         study_id=str(manifest.get("study_id", path.stem)),
                         include_pre_injection=include_pre)
    except LayoutError as exc:
        raise StudyFormatError(f"{where}: {exc}") from None


# --------------------------------------------------------------------------
# model states and ground truth

def state_to_dict(state: ModelState) -> dict:
    out = {"voxel_counts": state.layout.voxel_counts.tolist()}
    out.update({name: getattr(state, name).tolist() for name in ModelState.ARRAY_FIELDS})
    return out


def state_from_dict(obj: dict) -> ModelState:
    try:
        layout = StudyLayout(np.asarray(obj["voxel_counts"]))
        return ModelState(layout, **{name: np.asarray(obj[name], dtype=float)
                                     for name in ModelState.ARRAY_FIELDS})
    except KeyError as exc:
        raise StudyFormatError(f"model state is missing field {exc}") from None


@dataclass
class GroundTruth:
    """Generating state of a simulated study and its noise-free curves."""

    state: ModelState
    noise_free: list  # [scan][patient] -> (n_ij, T_ij)

    def save(self, path) -> None:
        curves = [{"scan": i + 1, "patient": j + 1, "values": c.tolist()}
                  for i, row in enumerate(self.noise_free) for j, c in enumerate(row)]
        doc = {"state": state_to_dict(self.state), "noise_free": curves}
        Path(path).write_text(json.dumps(doc) + "\n")

    @classmethod
    def load(cls, path) -> "GroundTruth":
        doc = json.loads(Path(path).read_text())
        state = state_from_dict(doc["state"])
        J = state.layout.n_patients
        noise_free = [[None] * J for _ in range(2)]
        for entry in doc["noise_free"]:
            noise_free[entry["scan"] - 1][entry["patient"] - 1] = np.array(entry["values"], dtype=float)
        return cls(state, noise_free)


def _as_tuple(x):
    """Nested sequences to nested tuples so specs compare equal after JSON."""
    if isinstance(x, (list, tuple, np.ndarray)):
        return tuple(_as_tuple(v) for v in x)
    return x


@dataclass
class SimulationSpec:
    """Generating configuration for a synthetic two-scan study.

    Variance components may be given per kinetic parameter (length 2);
    ``tau2_eps`` may also be given per scan and parameter (2 x 2). A zero
    variance switches the corresponding effects off.
    """

    n_patients: int = 4
    n_voxels: int | list = 25
    n_times: int = 40
    n_pre_injection: int = 0
    step_s: float = 11.9
    alpha: tuple = (math.log(0.2), math.log(0.6))
    beta: tuple = (math.log(0.77), 0.0)
    tau2_gamma: tuple = (0.04, 0.04)
    tau2_delta: tuple = (0.02, 0.02)
    tau2_eps: tuple | list = (0.04, 0.04)
    sigma2: float = 0.0025
    vp_beta: tuple = (1.0, 19.0)
    eps_bimodal_offset: float = 0.0
    study_id: str = "synthetic"
    aif: AifParams = field(default_factory=AifParams)

    def __post_init__(self):
        if isinstance(self.aif, dict):
            self.aif = AifParams(**self.aif)
        for name in ("n_voxels", "alpha", "beta", "tau2_gamma", "tau2_delta", "tau2_eps", "vp_beta"):
            setattr(self, name, _as_tuple(getattr(self, name)))
        if self.n_patients < 1 or self.n_times < 2 or self.n_pre_injection < 0:
            raise ValueError("need n_patients >= 1 and n_times >= 2")
        if np.any(self.voxel_counts() < 1):
            raise ValueError("every (scan, patient) needs at least one voxel")
        for name in ("tau2_gamma", "tau2_delta", "tau2_eps"):
            if np.any(np.asarray(getattr(self, name)) < 0):
                raise ValueError(f"{name} must be non-negative")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")
        if min(self.vp_beta) <= 0:
            raise ValueError("vp_beta parameters must be positive")

    def voxel_counts(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.n_voxels, dtype=int), (2, self.n_patients)).copy()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["aif"] = self.aif.to_dict()
        return d

    @classmethod
    def from_dict(cls, obj: dict) -> "SimulationSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise StudyFormatError(f"unknown simulation fields: {sorted(unknown)}")
        return cls(**obj)


def simulate_study(spec: SimulationSpec, seed: int) -> tuple[StudyData, GroundTruth]:
    """Draw a study from the hierarchical model run forward."""
    rng = np.random.default_rng(seed)
    layout = StudyLayout(spec.voxel_counts())
    J, N = layout.n_patients, layout.n_voxels
    tau2_g = np.broadcast_to(np.asarray(spec.tau2_gamma, float), (J, 2))
    tau2_d = np.broadcast_to(np.asarray(spec.tau2_delta, float), (J, 2))
    tau2_e = np.broadcast_to(np.asarray(spec.tau2_eps, float), (2, 2))
    tau2_e = np.broadcast_to(tau2_e[:, None, :], (2, J, 2))

    gamma = np.sqrt(tau2_g) * rng.standard_normal((J, 2))
    delta = np.sqrt(tau2_d) * rng.standard_normal((J, 2))
    state = ModelState(layout, alpha=spec.alpha, beta=spec.beta, gamma=gamma, delta=delta,
                       psi=np.zeros((N, 2)), tau2_gamma=tau2_g, tau2_delta=tau2_d,
                       tau2_eps=tau2_e, sigma2=np.full((2, J), spec.sigma2), vp=np.zeros(N))
    eps = np.sqrt(tau2_e.reshape(-1, 2)[layout.voxel_group]) * rng.standard_normal((N, 2))
    if spec.eps_bimodal_offset:
        eps[:, 0] += spec.eps_bimodal_offset * rng.choice([-1.0, 1.0], size=N)
    state.psi = state.psi_means() + eps
    state.vp = rng.beta(*spec.vp_beta, size=N)

    grid = TimeGrid.regular(spec.n_times, spec.step_s, spec.n_pre_injection)
    grids = [[grid] * J for _ in range(2)]
    shell = StudyData(layout, spec.aif, grids,
                      [[np.zeros((layout.voxel_counts[i, j], len(grid))) for j in range(J)]
                       for i in range(2)], study_id=spec.study_id)
    clean = model_curves(state, shell)
    noise_sd = math.sqrt(spec.sigma2)
    observed = [[c + noise_sd * rng.standard_normal(c.shape) for c in row] for row in clean]
    data = StudyData(layout, spec.aif, [list(r) for r in grids], observed, study_id=spec.study_id)
    return data, GroundTruth(state, clean)
