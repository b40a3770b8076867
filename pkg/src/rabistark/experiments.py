"""Experiment protocols: resonance scans, time traces and ion comparisons.

A scan sweeps one model parameter, evolves a bare initial state for a time
set by a :class:`TimeRule`, and records one observable at the final time.
Points are independent and run as a parallel map; results are assembled by
index so the outcome does not depend on scheduling.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import signal

from .dynamics import (
    DEFAULT_TOL,
    IntegrationError,
    TimeGrid,
    Trajectory,
    _pure_observables,
    propagate_density,
    propagate_state,
)
from .effective import SingularChannelError, k_photon_channel, solve_resonance
from .models import (
    IonDriveParams,
    IonFullHamiltonian,
    LindbladParams,
    ModelParams,
    ion_calibration,
    rabi_stark_hamiltonian,
    sigma_x_rabi_stark_hamiltonian,
)
from .qspace import HilbertSpace, basis_state

__all__ = [
    "WORKERS_ENV",
    "default_workers",
    "TimeRule",
    "ScanSpec",
    "Peak",
    "ScanResult",
    "ComparisonResult",
    "run_scan",
    "find_peaks",
    "run_trace",
    "compare_ion_model",
    "channel_table",
    "SWEEPABLE",
]

WORKERS_ENV = "RABISTARK_WORKERS"
DEFAULT_PROMINENCE = 0.1
CONVERGENCE_ATOL = 1e-6
# swept name -> how it maps onto ModelParams; 'detuning' is (omega - omega0)/omega
SWEEPABLE = ("omega0", "omega", "gamma", "g", "detuning")


def default_workers() -> int:
    """Worker count from ``$RABISTARK_WORKERS`` (default 1)."""
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return n


def _apply_sweep(base: ModelParams, name: str, value: float) -> ModelParams:
    if name == "detuning":
        return base.replace(omega0=base.omega * (1.0 - value))
    if name not in SWEEPABLE:
        raise ValueError(f"cannot sweep {name!r}; choose one of {SWEEPABLE}")
    return base.replace(**{name: value})


@dataclass(frozen=True)
class TimeRule:
    """Evolution time of a scan point.

    ``kind='fixed'`` uses ``T``.  ``kind='channel'`` uses
    ``scale * pi / (2 |Omega^(k)_{n,branch}|)``, evaluated at every swept
    value (``per_point=True``) or once at the swept value ``at``.
    """

    kind: str = "fixed"
    T: Optional[float] = None
    k: int = 1
    n: int = 0
    branch: str = "-"
    per_point: bool = True
    at: Optional[float] = None
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("fixed", "channel"):
            raise ValueError(f"time rule kind must be 'fixed' or 'channel', got {self.kind!r}")
        if self.kind == "fixed" and not (self.T is not None and self.T > 0):
            raise ValueError("fixed time rule needs T > 0")
        if self.kind == "channel" and self.k % 2 == 0:
            raise ValueError("even-order channels carry no rate; use odd k")
        if not self.scale > 0:
            raise ValueError("time rule scale must be positive")

    def resolve(self, p: ModelParams) -> float:
        if self.kind == "fixed":
            return float(self.T)
        T = self.scale * k_photon_channel(p, self.n, self.k, self.branch).transfer_time
        if not math.isfinite(T):
            raise SingularChannelError("channel rate vanishes; evolution time undefined")
        return T


@dataclass(frozen=True)
class ScanSpec:
    """One-parameter sweep.

    The range ``[start, stop]`` is inclusive and sampled with ``step``.
    ``initial`` is a bare label pair such as ``('e', 2)``.  ``observable``
    names a :class:`~rabistark.dynamics.Trajectory` series (``n_mean``,
    ``sigma_pm`` or ``P_<label>_<n>``).  With ``refine=(halfwidth, points)``
    each coarse peak is re-sampled on a finer grid.
    """

    params: ModelParams
    sweep: str
    start: float
    stop: float
    step: float
    initial: tuple
    time_rule: TimeRule
    observable: str = "n_mean"
    n_max: Optional[int] = None
    tol: float = DEFAULT_TOL
    prominence: float = DEFAULT_PROMINENCE
    refine: Optional[tuple] = None
    recheck: bool = True

    def __post_init__(self):
        if self.sweep not in SWEEPABLE:
            raise ValueError(f"cannot sweep {self.sweep!r}; choose one of {SWEEPABLE}")
        if not self.step > 0:
            raise ValueError("scan step must be positive")
        if not self.stop >= self.start:
            raise ValueError("empty sweep range (stop < start)")
        label, n = self.initial
        if label not in ("e", "g", "plus", "minus") or int(n) != n or n < 0:
            raise ValueError(f"invalid initial state {self.initial!r}")
        if self.refine is not None:
            hw, pts = self.refine
            if not hw > 0 or int(pts) < 3:
                raise ValueError("refine needs a positive half-width and >= 3 points")

    @property
    def values(self) -> np.ndarray:
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        # integer multiples keep grid points exact decimals where possible
        return np.round(self.start + self.step * np.arange(count), 12)

    def resolved_n_max(self) -> int:
        if self.n_max is not None:
            return int(self.n_max)
        return auto_n_max(int(self.initial[1]), self.time_rule.k)

    def panel_time(self) -> Optional[float]:
        """Evolution time shared by all points, or None if it varies."""
        rule = self.time_rule
        if rule.kind == "fixed":
            return float(rule.T)
        if rule.per_point:
            return None
        at = rule.at
        if at is None:
            if self.sweep == "omega0":
                at = solve_resonance(self.params, rule.k, rule.n, rule.branch)[0]
            else:
                at = 0.5 * (self.start + self.stop)
        return rule.resolve(_apply_sweep(self.params, self.sweep, at))


def auto_n_max(n0: int, k: int) -> int:
    """Default truncation ``N0 + k + 10`` for a ``k``-photon experiment."""
    return n0 + k + 10


@dataclass(frozen=True)
class Peak:
    location: float
    height: float
    prominence: float
    width: float


@dataclass
class ScanResult:
    """Swept values, observable values, skip flags and detected peaks."""

    spec: ScanSpec
    values: np.ndarray
    observable: np.ndarray
    skipped: np.ndarray
    times: np.ndarray
    peaks: list = field(default_factory=list)
    convergence: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.values)
        if not (len(self.observable) == len(self.skipped) == len(self.times) == n):
            raise ValueError("scan arrays must have equal length")


def _point(job):
    """Evaluate one scan point; returns (value, time, skipped_reason)."""
    p, initial, T, rule, observable, n_max, tol = job
    try:
        if T is None:
            T = rule.resolve(p)
        space = HilbertSpace(n_max)
        H = rabi_stark_hamiltonian(p, space)
        psi = basis_state(space, initial[0], int(initial[1]))
        basis = "sigma_x" if observable.startswith(("P_plus", "P_minus")) else "bare"
        tr = propagate_state(H, psi, TimeGrid(0.0, T, 2), tol=tol, basis=basis)
        return float(tr[observable][-1]), float(T), ""
    except (SingularChannelError, IntegrationError, ZeroDivisionError) as exc:
        return math.nan, math.nan, f"{type(exc).__name__}: {exc}"


def _evaluate(spec: ScanSpec, values: np.ndarray, n_max: int, workers: int):
    T = spec.panel_time()
    jobs = [
        (_apply_sweep(spec.params, spec.sweep, float(v)), spec.initial, T,
         spec.time_rule, spec.observable, n_max, spec.tol)
        for v in values
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_point, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        out = [_point(j) for j in jobs]
    obs = np.array([o[0] for o in out])
    times = np.array([o[1] for o in out])
    reasons = [o[2] for o in out]
    return obs, times, reasons


def run_scan(spec: ScanSpec, workers: Optional[int] = None) -> ScanResult:
    """Sweep ``spec.sweep`` and record ``spec.observable`` at the evolution time.

    Points whose time rule or propagation fails are kept as NaN and flagged
    in ``skipped``.  With ``spec.recheck`` the detected peaks and a handful of
    evenly spaced points are recomputed at ``n_max + 10``; the largest
    change is reported in ``convergence``.
    """
    if workers is None:
        workers = default_workers()
    n_max = spec.resolved_n_max()
    if int(spec.initial[1]) > n_max:
        raise ValueError(f"initial Fock state {spec.initial[1]} exceeds n_max={n_max}")
    values = spec.values
    obs, times, reasons = _evaluate(spec, values, n_max, workers)
    if spec.refine is not None:
        coarse = ScanResult(spec, values, obs, np.array([bool(r) for r in reasons]), times)
        centers = [pk.location for pk in find_peaks(coarse, spec.prominence)]
        if not centers and np.any(np.isfinite(obs)):
            centers = [float(values[np.nanargmax(obs)])]
        hw, pts = spec.refine
        extra = np.unique(np.concatenate(
            [np.linspace(c - hw, c + hw, int(pts)) for c in centers]
        )) if centers else np.empty(0)
        extra = extra[(extra >= spec.start) & (extra <= spec.stop)]
        extra = extra[~np.isin(np.round(extra, 12), values)]
        if extra.size:
            o2, t2, r2 = _evaluate(spec, extra, n_max, workers)
            values = np.concatenate([values, extra])
            obs = np.concatenate([obs, o2])
            times = np.concatenate([times, t2])
            reasons = reasons + r2
            order = np.argsort(values, kind="stable")
            values, obs, times = values[order], obs[order], times[order]
            reasons = [reasons[i] for i in order]
    skipped = np.array([bool(r) for r in reasons])
    result = ScanResult(spec, values, obs, skipped, times)
    result.peaks = find_peaks(result, spec.prominence)
    result.convergence = {"n_max": n_max, "skip_reasons": sorted({r for r in reasons if r})}
    if spec.recheck:
        idx = set(np.linspace(0, len(values) - 1, min(len(values), 9)).astype(int).tolist())
        for pk in result.peaks:
            idx.add(int(np.argmin(np.abs(values - pk.location))))
        idx = sorted(i for i in idx if not skipped[i])
        o_big, _, _ = _evaluate(spec, values[idx], n_max + 10, workers)
        drift = float(np.nanmax(np.abs(o_big - obs[idx]))) if idx else 0.0
        result.convergence.update(
            checked_points=len(idx),
            n_max_check=n_max + 10,
            max_drift=drift,
            converged=bool(drift < CONVERGENCE_ATOL),
        )
    return result


def _parabola_vertex(x: np.ndarray, y: np.ndarray):
    """Vertex of the parabola through three (possibly unevenly spaced) points."""
    x0, x1, x2 = x
    y0, y1, y2 = y
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    if denom == 0:
        return x1, y1
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    if a >= 0:
        return x1, y1
    xv = -b / (2 * a)
    if not x0 <= xv <= x2:
        return x1, y1
    c = y1 - a * x1**2 - b * x1
    return xv, a * xv**2 + b * xv + c


def find_peaks(result, min_prominence: float = DEFAULT_PROMINENCE) -> list:
    """Local maxima with prominence >= ``min_prominence``.

    ``result`` is a :class:`ScanResult` or a pair ``(x, y)``.  Locations and
    heights are refined with a three-point parabola; ``width`` is the full
    width at half prominence in swept units.  Skipped (NaN) points are
    dropped first.  Peaks are sorted by location.
    """
    if isinstance(result, ScanResult):
        x, y = result.values, result.observable
    else:
        x, y = result
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(y)
    x, y = x[ok], y[ok]
    if len(x) < 3:
        return []
    idx, props = signal.find_peaks(y, prominence=min_prominence)
    if not len(idx):
        return []
    widths, _, left, right = signal.peak_widths(y, idx, rel_height=0.5, prominence_data=(
        props["prominences"], props["left_bases"], props["right_bases"]))
    pos = np.arange(len(x))
    peaks = []
    for i, prom, lo, hi in zip(idx, props["prominences"], left, right):
        xv, yv = _parabola_vertex(x[i - 1:i + 2], y[i - 1:i + 2])
        w = float(np.interp(hi, pos, x) - np.interp(lo, pos, x))
        peaks.append(Peak(float(xv), float(yv), float(prom), w))
    return sorted(peaks, key=lambda pk: pk.location)


def run_trace(
    params: ModelParams,
    initial: tuple,
    grid: TimeGrid,
    lindblad: Optional[LindbladParams] = None,
    n_max: Optional[int] = None,
    tol: float = DEFAULT_TOL,
    basis: str = "bare",
    model: str = "rabi_stark",
) -> Trajectory:
    """Time evolution of a bare or sigma_x product state.

    With ``lindblad`` the master equation is integrated; otherwise the pure
    state is propagated exactly.  ``model='sigma_x'`` selects the
    sigma_x-form Hamiltonian used by the ion realization.
    """
    label, n0 = initial
    space = HilbertSpace(n_max if n_max is not None else auto_n_max(int(n0), 1))
    build = {"rabi_stark": rabi_stark_hamiltonian, "sigma_x": sigma_x_rabi_stark_hamiltonian}
    if model not in build:
        raise ValueError(f"unknown model {model!r}")
    H = build[model](params, space)
    psi = basis_state(space, label, int(n0))
    if lindblad is not None:
        return propagate_density(H, lindblad, psi, grid, tol=tol, basis=basis)
    return propagate_state(H, psi, grid, tol=tol, basis=basis)


@dataclass
class ComparisonResult:
    """Ion simulation against the calibrated effective model on one grid."""

    reference: Trajectory
    simulation: Trajectory
    keys: tuple
    deviation: dict
    max_deviation: float
    calibration: object = None

    def __post_init__(self):
        if not np.array_equal(self.reference.times, self.simulation.times):
            raise ValueError("trajectories must share a time grid")


def _frame_rotate(states: np.ndarray, times: np.ndarray, space: HilbertSpace, Omega_DD, omega_R):
    """Apply ``exp(i t ((Omega_DD/2) sigma_x - omega_R a^+a))`` to stored states.

    In the ``{|+>, |->}`` basis the generator is diagonal, so the rotation
    only attaches phases to the sigma_x-basis amplitudes.
    """
    nf = space.n_fock
    pe, pg = states[:, :nf], states[:, nf:]
    plus = (pe + pg) / np.sqrt(2)
    minus = (pe - pg) / np.sqrt(2)
    n = np.arange(nf)
    ph_n = np.exp(-1j * omega_R * np.outer(times, n))
    plus = plus * ph_n * np.exp(0.5j * Omega_DD * times)[:, None]
    minus = minus * ph_n * np.exp(-0.5j * Omega_DD * times)[:, None]
    return np.concatenate([(plus + minus) / np.sqrt(2), (plus - minus) / np.sqrt(2)], axis=1)


def compare_ion_model(
    d: IonDriveParams,
    initial: tuple,
    grid: TimeGrid,
    n_max: int = 12,
    tol: float = 1e-7,
    keys: Optional[Sequence[str]] = None,
    ratio_rtol: float = 1e-2,
) -> ComparisonResult:
    """Propagate the full ion Hamiltonian and the calibrated sigma_x model.

    The ion states are moved into the frame of the effective model (a
    rotation by ``(Omega_DD/2) sigma_x - omega_R a^+a``) before populations
    are taken.  That rotation oscillates at ``Omega_DD``, so the output
    sampling rate must exceed ``Omega_DD / pi`` samples per unit time.
    ``keys`` defaults to every sigma_x-basis population plus ``n_mean``.
    """
    cal = ion_calibration(d, ratio_rtol=ratio_rtol)
    rate = (grid.n_samples - 1) / (grid.t_end - grid.t_start)
    need = abs(cal.Omega_DD) / math.pi
    if rate <= need:
        raise ValueError(
            f"output sampling {rate:.4g} per unit time aliases the Omega_DD frame "
            f"rotation; need more than {need:.4g}"
        )
    space = HilbertSpace(n_max)
    psi = basis_state(space, initial[0], int(initial[1]))
    ion = propagate_state(IonFullHamiltonian(d, space), psi, grid, tol=tol,
                          basis="sigma_x", store_states=True)
    rotated = _frame_rotate(ion.states, grid.times - grid.t_start, space,
                            cal.Omega_DD, cal.omega_R)
    sim = Trajectory(grid, _pure_observables(space, rotated, "sigma_x"), None, ion.info)
    sim.observables["norm"] = ion["norm"]
    ref = propagate_state(sigma_x_rabi_stark_hamiltonian(cal.model(), space), psi, grid,
                          tol=tol, basis="sigma_x")
    if keys is None:
        keys = [k for k in ref.columns() if k.startswith("P_")] + ["n_mean"]
    dev = {k: np.abs(sim[k] - ref[k]) for k in keys}
    pops = [dev[k] for k in keys if k.startswith("P_")] or list(dev.values())
    return ComparisonResult(ref, sim, tuple(keys), dev, float(np.max(pops)), cal)


def channel_table(p: ModelParams, k: int, n_values: Sequence[int], branches=("+", "-")) -> list:
    """Rows of ``k``-photon channel data (dicts) for each ``n`` and branch."""
    rows = []
    for n in n_values:
        for b in branches:
            try:
                ch = k_photon_channel(p, int(n), k, b)
                row = {
                    "k": k, "n": int(n), "branch": b,
                    "delta_k": ch.delta_k, "Omega_k": ch.Omega_k,
                    "shifted_delta": math.nan if ch.shifted_delta is None else ch.shifted_delta,
                    "transfer_time": ch.transfer_time,
                    "near_resonant": ch.near_resonant, "forbidden": ch.forbidden,
                }
            except SingularChannelError:
                row = {
                    "k": k, "n": int(n), "branch": b, "delta_k": math.nan,
                    "Omega_k": math.nan, "shifted_delta": math.nan,
                    "transfer_time": math.nan, "near_resonant": True, "forbidden": False,
                }
            rows.append(row)
    return rows
