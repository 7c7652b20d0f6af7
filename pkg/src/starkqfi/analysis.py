"""Parameter sweeps over the long-time normalised QFI and the fits built on them.

The figure of merit throughout is the plateau of ``F_Q / t^2``: the mean of
that ratio over the tail window ``[(1 - window_fraction) T, T]`` of an
evolution up to the horizon ``T``. :class:`NormalizedQFI` turns rows of model
parameters into plateau values and :class:`PowerLawRegressor` fits
exponents, so a size-scaling study is

>>> est = NormalizedQFI(N=2, U=0.0, h=5.0, columns=("L",))
>>> L_list = [7, 9, 11, 13]
>>> fit = PowerLawRegressor().fit(L_list, est.transform(L_list).ravel())
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.signal import find_peaks
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .basis import FockBasis, dimension, staggered_initial_state
from .hamiltonian import ModelParams, build_gradient_generator, build_hamiltonian
from .propagator import DENSE_THRESHOLD, PropagationError, make_propagator
from .qfi import QfiSample
from .validation import (
    INT_FIELDS,
    check_columns,
    check_fraction,
    check_grid,
    check_param_rows,
    check_positive_int,
)

logger = logging.getLogger(__name__)

HORIZON = 200.0
TIME_STEP = 0.5
WINDOW_FRACTION = 0.5
PLATEAU_TOLERANCE = 0.15
MAX_DIMENSION = 500_000
# local maxima of A_r smaller than this above their surroundings are noise
PEAK_PROMINENCE = 0.05


class InsufficientPointsError(ValueError):
    """A fit was requested with fewer surviving points than it needs."""


class DimensionCapError(OverflowError):
    """The requested basis is larger than the configured cap."""


# -- plateaus -----------------------------------------------------------------


@dataclass(frozen=True)
class PlateauEstimate:
    value: float
    spread: float
    window: tuple[float, float]
    tolerance: float = PLATEAU_TOLERANCE

    @property
    def relative_spread(self) -> float:
        if self.value == 0.0:
            return 0.0 if self.spread == 0.0 else math.inf
        return self.spread / abs(self.value)

    @property
    def accepted(self) -> bool:
        return self.relative_spread <= self.tolerance


def _as_arrays(series) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(series, tuple) and len(series) == 2:
        return np.asarray(series[0], float), np.asarray(series[1], float)
    samples = list(series)
    if samples and isinstance(samples[0], QfiSample):
        return np.array([s.t for s in samples]), np.array([s.qfi for s in samples])
    raise TypeError("expected a sequence of QfiSample or a (t, qfi) pair of arrays")


def plateau(series, window_fraction: float = WINDOW_FRACTION,
            tolerance: float = PLATEAU_TOLERANCE) -> PlateauEstimate:
    """Mean and spread of ``F_Q / t^2`` over the tail of the series.

    ``series`` is a sequence of :class:`QfiSample` or a ``(t, qfi)`` pair.
    A spread above ``tolerance`` (relative) marks the estimate as not
    accepted; the value is still returned.
    """
    window_fraction = check_fraction(window_fraction, "window_fraction")
    t, q = _as_arrays(series)
    T = float(t.max())
    t_min = (1.0 - window_fraction) * T
    mask = (t >= t_min * (1 - 1e-12)) & (t > 0)
    if not np.any(mask):
        raise ValueError("no samples with t > 0 inside the plateau window")
    ratio = q[mask] / t[mask] ** 2
    return PlateauEstimate(float(ratio.mean()), float(ratio.std()), (t_min, T), tolerance)


def time_grid(horizon: float = HORIZON, dt: float = TIME_STEP) -> np.ndarray:
    n = int(round(horizon / dt))
    if n < 1 or not math.isclose(n * dt, horizon, rel_tol=1e-9):
        raise ValueError(f"horizon {horizon} is not a multiple of dt {dt}")
    return dt * np.arange(n + 1)


def initial_state_vector(basis: FockBasis) -> np.ndarray:
    psi0 = np.zeros(basis.dimension, dtype=np.complex128)
    psi0[basis.rank(staggered_initial_state(basis.L, basis.N))] = 1.0
    return psi0


def qfi_time_series(params: ModelParams, t_grid, method: str = "auto",
                    dense_threshold: int = DENSE_THRESHOLD,
                    max_dimension: int = MAX_DIMENSION) -> np.ndarray:
    """QFI at each grid time for the staggered initial state."""
    try:
        basis = FockBasis(params.L, params.N, max_dimension=max_dimension)
    except OverflowError as exc:
        raise DimensionCapError(str(exc)) from exc
    H = build_hamiltonian(params, basis)
    G = build_gradient_generator(basis)
    prop = make_propagator(H, G, method=method, dense_threshold=dense_threshold)
    return prop.qfi(initial_state_vector(basis), t_grid)


def qfi_samples(params: ModelParams, t_grid, **kwargs) -> list[QfiSample]:
    t = np.asarray(t_grid, float)
    return [QfiSample(float(a), float(b)) for a, b in zip(t, qfi_time_series(params, t, **kwargs))]


# -- estimators ---------------------------------------------------------------


@dataclass
class CellResult:
    """Outcome of one grid cell; ``error`` is set instead of ``plateau`` on failure."""

    params: dict
    plateau: PlateauEstimate | None = None
    error: str | None = None

    @property
    def value(self) -> float:
        return self.plateau.value if self.plateau is not None else math.nan


def _run_cell(base: dict, settings: dict) -> CellResult:
    try:
        params = ModelParams(**base)
        t = time_grid(settings["horizon"], settings["dt"])
        tail = t[t >= (1.0 - settings["window_fraction"]) * t[-1] * (1 - 1e-12)]
        q = qfi_time_series(params, tail, method=settings["method"],
                            dense_threshold=settings["dense_threshold"],
                            max_dimension=settings["max_dimension"])
        est = plateau((tail, q), window_fraction=settings["window_fraction"],
                      tolerance=settings["plateau_tolerance"])
        return CellResult(base, est)
    except DimensionCapError:
        raise
    except (PropagationError, ValueError, np.linalg.LinAlgError) as exc:
        logger.warning("cell %s failed: %s", base, exc)
        return CellResult(base, error=f"{type(exc).__name__}: {exc}")


class NormalizedQFI(TransformerMixin, BaseEstimator):
    """Map rows of model parameters to the long-time plateau of ``F_Q / t^2``.

    Parameters
    ----------
    L, N, J, U, h : model parameters used for every column not swept.
    columns : tuple of str
        Which model parameters the columns of ``X`` set, e.g. ``("U", "h")``.
    horizon, dt : float
        Evolution horizon and grid spacing in units of ``1/J``.
    window_fraction : float
        Tail fraction of the horizon averaged into the plateau.
    plateau_tolerance : float
        Relative spread above which a plateau is flagged.
    method : {"auto", "dense", "krylov"}
    dense_threshold : int
        Largest dimension handled by full diagonalisation under ``"auto"``.
    max_dimension : int
        Bases larger than this are rejected before any work is done.
    n_jobs : int or None
        Worker processes for independent cells (joblib semantics).
    """

    def __init__(self, L=11, N=2, J=1.0, U=0.0, h=1.0, columns=("U", "h"),
                 horizon=HORIZON, dt=TIME_STEP, window_fraction=WINDOW_FRACTION,
                 plateau_tolerance=PLATEAU_TOLERANCE, method="auto",
                 dense_threshold=DENSE_THRESHOLD, max_dimension=MAX_DIMENSION, n_jobs=None):
        self.L = L
        self.N = N
        self.J = J
        self.U = U
        self.h = h
        self.columns = columns
        self.horizon = horizon
        self.dt = dt
        self.window_fraction = window_fraction
        self.plateau_tolerance = plateau_tolerance
        self.method = method
        self.dense_threshold = dense_threshold
        self.max_dimension = max_dimension
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        self.columns_ = check_columns(self.columns)
        check_fraction(self.window_fraction, "window_fraction")
        time_grid(self.horizon, self.dt)
        if self.method not in ("auto", "dense", "krylov"):
            raise ValueError(f"unknown method {self.method!r}")
        return self

    def _settings(self) -> dict:
        return {
            "horizon": float(self.horizon),
            "dt": float(self.dt),
            "window_fraction": float(self.window_fraction),
            "plateau_tolerance": float(self.plateau_tolerance),
            "method": self.method,
            "dense_threshold": int(self.dense_threshold),
            "max_dimension": int(self.max_dimension),
        }

    def _cells(self, X) -> list[dict]:
        columns = self.columns_
        X = check_param_rows(X, len(columns))
        base = {"L": self.L, "N": self.N, "J": self.J, "U": self.U, "h": self.h}
        cells = []
        for row in X:
            cell = dict(base)
            for name, value in zip(columns, row):
                cell[name] = check_positive_int(value, name, 0 if name == "N" else 1) \
                    if name in INT_FIELDS else float(value)
            cell["L"] = check_positive_int(cell["L"], "L")
            cell["N"] = check_positive_int(cell["N"], "N", 0)
            if dimension(cell["L"], cell["N"]) > self.max_dimension:
                raise DimensionCapError(
                    f"basis of (L={cell['L']}, N={cell['N']}) exceeds cap {self.max_dimension}"
                )
            cells.append(cell)
        return cells

    def scan(self, X) -> list[CellResult]:
        """Per-cell results in input order; failed cells carry an error message."""
        if not hasattr(self, "columns_"):
            self.fit()
        cells = self._cells(X)
        settings = self._settings()
        if self.n_jobs in (None, 1) or len(cells) == 1:
            return [_run_cell(c, settings) for c in cells]
        return Parallel(n_jobs=self.n_jobs)(delayed(_run_cell)(c, settings) for c in cells)

    def transform(self, X) -> np.ndarray:
        """Plateau values as a column; failed cells are NaN."""
        check_is_fitted(self, "columns_")
        return np.array([[r.value] for r in self.scan(X)])


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    prefactor: float
    r_squared: float
    points: tuple[tuple[float, float], ...]


class PowerLawRegressor(RegressorMixin, BaseEstimator):
    """Least-squares line through ``(log x, log y)``: ``y = prefactor * x**exponent``.

    Non-finite or non-positive points are dropped before fitting.
    """

    def __init__(self, min_points=4):
        self.min_points = min_points

    def fit(self, X, y):
        x = np.asarray(X, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        if x.shape != y.shape:
            raise ValueError(f"x and y differ in length: {x.size} vs {y.size}")
        keep = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
        if keep.sum() < self.min_points:
            raise InsufficientPointsError(
                f"power-law fit needs {self.min_points} usable points, got {int(keep.sum())}"
            )
        lx, ly = np.log(x[keep]), np.log(y[keep])
        slope, intercept = np.polyfit(lx, ly, 1)
        resid = ly - (slope * lx + intercept)
        ss_tot = float(np.sum((ly - ly.mean()) ** 2))
        self.exponent_ = float(slope)
        self.prefactor_ = float(np.exp(intercept))
        self.r_squared_ = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
        self.points_ = tuple(zip(x[keep].tolist(), y[keep].tolist()))
        return self

    def predict(self, X):
        check_is_fitted(self, "exponent_")
        return self.prefactor_ * np.asarray(X, dtype=float).ravel() ** self.exponent_

    def to_fit(self) -> PowerLawFit:
        check_is_fitted(self, "exponent_")
        return PowerLawFit(self.exponent_, self.prefactor_, max(0.0, min(1.0, self.r_squared_)),
                           self.points_)


def fit_power_law(x, y, min_points: int = 4) -> PowerLawFit:
    return PowerLawRegressor(min_points=min_points).fit(x, y).to_fit()


def time_exponent(t, qfi, window_fraction: float = WINDOW_FRACTION) -> PowerLawFit:
    """Log-log slope of ``F_Q`` against ``t`` over the tail window."""
    t = np.asarray(t, float)
    qfi = np.asarray(qfi, float)
    mask = t >= (1.0 - window_fraction) * t.max() * (1 - 1e-12)
    return fit_power_law(t[mask], qfi[mask])


# -- scaling studies ----------------------------------------------------------


def _estimator(**kwargs) -> NormalizedQFI:
    return NormalizedQFI(**kwargs).fit()


def size_scaling(L_list: Sequence[int], N: int = 2, U: float = 0.0, h: float = 1.0,
                 J: float = 1.0, **options) -> PowerLawFit:
    """Exponent ``beta`` in ``F_Q / t^2 ~ L^beta``."""
    L_list = [check_positive_int(L, "L") for L in L_list]
    if len(L_list) < 4:
        raise InsufficientPointsError(f"size scaling needs >= 4 sizes, got {len(L_list)}")
    est = _estimator(N=N, J=J, U=U, h=h, columns=("L",), **options)
    return fit_power_law(L_list, est.transform(L_list).ravel())


def particle_scaling(N_list: Sequence[int], L: int = 11, U: float = 0.0, h: float = 1.0,
                     J: float = 1.0, **options) -> PowerLawFit:
    """Exponent ``alpha`` in ``F_Q / t^2 ~ N^alpha`` at fixed ``L``."""
    N_list = [check_positive_int(N, "N") for N in N_list]
    if len(N_list) < 4:
        raise InsufficientPointsError(f"particle scaling needs >= 4 values of N, got {len(N_list)}")
    if L < 2 * max(N_list) - 1:
        raise ValueError(f"L={L} cannot hold {max(N_list)} particles two sites apart")
    est = _estimator(L=L, J=J, U=U, h=h, columns=("N",), **options)
    return fit_power_law(N_list, est.transform(N_list).ravel())


def localized_h_scaling(h_grid: Sequence[float], L: int = 11, N: int = 2, U: float = 0.0,
                        J: float = 1.0, **options) -> PowerLawFit:
    """Exponent of the plateau against the tilt deep in the localised phase."""
    h = check_grid(h_grid, "h_grid", min_points=4, positive=True)
    if h.min() < 3 * J or h.max() > 10 * J:
        raise ValueError("localised-phase fit expects h/J within [3, 10]")
    est = _estimator(L=L, N=N, J=J, U=U, columns=("h",), **options)
    return fit_power_law(h, est.transform(h).ravel())


@dataclass(frozen=True)
class CriticalPoint:
    h_c: float
    peak_value: float
    peak_index: int
    at_boundary: bool
    h_grid: np.ndarray = field(repr=False)
    plateaus: np.ndarray = field(repr=False)


def default_h_grid(n: int = 25, lo: float = 0.05, hi: float = 5.0) -> np.ndarray:
    return np.logspace(np.log10(lo), np.log10(hi), n)


def _parabolic_vertex(x: np.ndarray, y: np.ndarray, i: int) -> float:
    """Vertex of the parabola through points ``i-1, i, i+1``."""
    x0, x1, x2 = x[i - 1 : i + 2]
    y0, y1, y2 = y[i - 1 : i + 2]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    if a >= 0:
        return float(x1)
    return float(np.clip(-b / (2 * a), x0, x2))


def critical_point(h_grid=None, L: int = 11, N: int = 2, U: float = 0.0, J: float = 1.0,
                   **options) -> CriticalPoint:
    """Peak of the plateau over a log-spaced tilt grid, refined in ``log h``."""
    h = default_h_grid() if h_grid is None else check_grid(h_grid, "h_grid", 20, positive=True)
    if h.size < 20:
        raise ValueError("critical-point search needs >= 20 grid points")
    est = _estimator(L=L, N=N, J=J, U=U, columns=("h",), **options)
    values = est.transform(h).ravel()
    if not np.any(np.isfinite(values)):
        raise ValueError("every cell of the tilt scan failed")
    i = int(np.nanargmax(values))
    boundary = i == 0 or i == h.size - 1
    if boundary or not np.all(np.isfinite(values[i - 1 : i + 2])):
        h_c = float(h[i])
    else:
        h_c = float(np.exp(_parabolic_vertex(np.log(h), values, i)))
    if boundary:
        logger.warning("plateau peak sits on the grid boundary at h=%g", h[i])
    return CriticalPoint(h_c, float(values[i]), i, boundary, h, values)


# -- resonances ---------------------------------------------------------------


@dataclass
class ResonanceScan:
    """Plateau map over ``(U, h)`` and the enhancement ratio ``A_r``.

    ``plateaus[i, j]`` belongs to ``U_grid[i]``, ``h_grid[j]``;
    ``baseline[j]`` is the ``U = 0`` plateau at ``h_grid[j]``.
    """

    L: int
    N: int
    U_grid: np.ndarray
    h_grid: np.ndarray
    plateaus: np.ndarray
    spreads: np.ndarray
    accepted: np.ndarray
    baseline: np.ndarray
    errors: dict = field(default_factory=dict)

    @property
    def A_r(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = self.plateaus / self.baseline[None, :]
        ratio[self.U_grid == 0.0, :] = 1.0
        return ratio

    @property
    def U_step(self) -> float:
        return float(np.min(np.diff(self.U_grid))) if self.U_grid.size > 1 else math.inf

    def peak_lines(self, prominence: float = PEAK_PROMINENCE) -> dict[float, list[float]]:
        """For each ``h``, the refined ``U`` positions of local maxima of ``A_r``."""
        out = {}
        A = self.A_r
        for j, h in enumerate(self.h_grid):
            col = A[:, j]
            filled = np.where(np.isfinite(col), col, -np.inf)
            idx, _ = find_peaks(filled, prominence=prominence)
            out[float(h)] = [_parabolic_vertex(self.U_grid, col, int(i)) for i in idx]
        return out

    def line_distance(self, m_values=(1, 2, 3, 4)) -> np.ndarray:
        """Distance of each cell from the nearest ``U = m h`` line, in units of ``U``."""
        U = self.U_grid[:, None, None]
        h = self.h_grid[None, :, None]
        m = np.asarray(m_values, float)[None, None, :]
        return np.min(np.abs(U - m * h), axis=2)

    def to_rows(self) -> list[dict]:
        rows = []
        A = self.A_r
        for i, U in enumerate(self.U_grid):
            for j, h in enumerate(self.h_grid):
                rows.append({
                    "U": float(U), "h": float(h), "L": self.L, "N": self.N,
                    "plateau": float(self.plateaus[i, j]), "spread": float(self.spreads[i, j]),
                    "flag": _flag(self.accepted[i, j], self.errors.get((i, j))),
                    "A_r": float(A[i, j]),
                })
        return rows


def _flag(accepted, error) -> str:
    if error is not None:
        return "failed"
    return "ok" if accepted else "non-plateau"


def resonance_scan(U_grid, h_grid, L: int = 11, N: int = 4, J: float = 1.0,
                   **options) -> ResonanceScan:
    """Plateau map over the ``(U, h)`` grid; ``U = 0`` is added for the baseline if absent."""
    U = np.sort(check_grid(U_grid, "U_grid"))
    h = check_grid(h_grid, "h_grid", positive=True)
    U_run = U if np.any(U == 0.0) else np.concatenate([[0.0], U])
    est = _estimator(L=L, N=N, J=J, columns=("U", "h"), **options)
    X = np.array([(u, hh) for u in U_run for hh in h])
    results = est.scan(X)
    shape = (U_run.size, h.size)
    vals = np.array([r.value for r in results]).reshape(shape)
    spreads = np.array([r.plateau.spread if r.plateau else math.nan for r in results]).reshape(shape)
    acc = np.array([bool(r.plateau and r.plateau.accepted) for r in results]).reshape(shape)
    errors = {}
    for k, r in enumerate(results):
        if r.error is not None:
            errors[divmod(k, h.size)] = r.error
    baseline = vals[int(np.nonzero(U_run == 0.0)[0][0])]
    keep = np.isin(U_run, U)
    offset = 0 if U_run.size == U.size else 1
    errors = {(i - offset, j): e for (i, j), e in errors.items() if i - offset >= 0}
    return ResonanceScan(L, N, U, h, vals[keep], spreads[keep], acc[keep], baseline, errors)


def resonance_coefficient(h_grid, N_list: Sequence[int], m: int, L: int = 11, J: float = 1.0,
                          **options) -> dict[int, np.ndarray]:
    """``A_r`` with ``U`` locked to ``m h`` at every tilt, one array per ``N``."""
    m = check_positive_int(m, "m", 0)
    h = check_grid(h_grid, "h_grid", positive=True)
    out = {}
    for N in N_list:
        est = _estimator(L=L, N=N, J=J, columns=("U", "h"), **options)
        X = np.array([(m * hh, hh) for hh in h] + [(0.0, hh) for hh in h])
        vals = est.transform(X).ravel()
        res, base = vals[: h.size], vals[h.size :]
        out[int(N)] = np.ones_like(h) if m == 0 else res / base
    return out


def n_spread(coefficients: dict[int, np.ndarray]) -> np.ndarray:
    """Largest pairwise gap of ``A_r`` across ``N``, relative to the first ``N``."""
    keys = list(coefficients)
    stack = np.array([coefficients[k] for k in keys])
    return (stack.max(axis=0) - stack.min(axis=0)) / stack[0]
