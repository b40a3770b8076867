"""Time propagation of pure states and density matrices, and observables.

Constant Hamiltonians go through a Hermitian eigendecomposition (exact up to
round-off).  Time-dependent Hamiltonians and the master equation use an
adaptive 8(5,3) Dormand-Prince pair with dense output at the requested
samples.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import _rk
from .models import LindbladParams, composite_ladder
from .qspace import DensityMatrix, DimensionError, HilbertSpace, QOperator, StateVector

__all__ = [
    "IntegrationError",
    "NormDriftError",
    "PositivityError",
    "TimeGrid",
    "Trajectory",
    "observables",
    "propagate_state",
    "propagate_density",
    "population_key",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 1e-9
TOL_RANGE = (1e-12, 1e-6)


class IntegrationError(RuntimeError):
    """The adaptive integrator gave up (step size underflow)."""


class NormDriftError(IntegrationError):
    """Norm or trace drifted beyond the error budget."""


class PositivityError(IntegrationError):
    """A propagated density matrix acquired a negative eigenvalue."""


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_samples: int

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")
        if self.n_samples < 2:
            raise ValueError("need at least two output samples")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.n_samples)

    @classmethod
    def until(cls, t_end: float, n_samples: int = 201) -> "TimeGrid":
        return cls(0.0, float(t_end), int(n_samples))


def population_key(label: str, n: int) -> str:
    return f"P_{label}_{n}"


@dataclass
class Trajectory:
    """Sampled observables of one run.

    ``observables`` maps names to arrays over ``grid.times``: ``P_<label>_<n>``
    populations, ``n_mean`` (``<a^+a>``), ``sigma_pm`` (``<sigma_+ sigma_->``)
    and, for pure states, ``norm``.
    """

    grid: TimeGrid
    observables: dict
    states: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def __getitem__(self, name: str) -> np.ndarray:
        return self.observables[name]

    def population(self, label: str, n: int) -> np.ndarray:
        return self.observables[population_key(label, n)]

    def columns(self):
        """Observable names in a stable order (populations by label, then n)."""
        pops = [k for k in self.observables if k.startswith("P_")]
        rest = [k for k in self.observables if not k.startswith("P_")]
        return pops + rest


def _as_matrix(H) -> np.ndarray:
    return np.asarray(H.data if isinstance(H, QOperator) else H, dtype=complex)


def _pure_observables(space: HilbertSpace, amps: np.ndarray, basis: str) -> dict:
    """Observables from amplitudes of shape (..., dim)."""
    nf = space.n_fock
    pe = np.abs(amps[..., :nf]) ** 2
    pg = np.abs(amps[..., nf:]) ** 2
    out = {}
    if basis in ("bare", "both"):
        for n in range(nf):
            out[population_key("e", n)] = pe[..., n]
        for n in range(nf):
            out[population_key("g", n)] = pg[..., n]
    if basis in ("sigma_x", "both"):
        cross = np.real(amps[..., :nf] * np.conj(amps[..., nf:]))
        for n in range(nf):
            out[population_key("plus", n)] = 0.5 * (pe[..., n] + pg[..., n]) + cross[..., n]
        for n in range(nf):
            out[population_key("minus", n)] = 0.5 * (pe[..., n] + pg[..., n]) - cross[..., n]
    if basis not in ("bare", "sigma_x", "both"):
        raise ValueError(f"unknown basis {basis!r}")
    k = np.arange(nf)
    out["n_mean"] = (pe + pg) @ k
    out["sigma_pm"] = pe.sum(axis=-1)
    return out


def _mixed_observables(space: HilbertSpace, rhos: np.ndarray, basis: str) -> dict:
    nf = space.n_fock
    diag = np.real(np.diagonal(rhos, axis1=-2, axis2=-1))
    pe, pg = diag[..., :nf], diag[..., nf:]
    out = {}
    if basis in ("bare", "both"):
        for n in range(nf):
            out[population_key("e", n)] = pe[..., n]
        for n in range(nf):
            out[population_key("g", n)] = pg[..., n]
    if basis in ("sigma_x", "both"):
        idx = np.arange(nf)
        cross = np.real(rhos[..., idx, nf + idx])
        for n in range(nf):
            out[population_key("plus", n)] = 0.5 * (pe[..., n] + pg[..., n]) + cross[..., n]
        for n in range(nf):
            out[population_key("minus", n)] = 0.5 * (pe[..., n] + pg[..., n]) - cross[..., n]
    if basis not in ("bare", "sigma_x", "both"):
        raise ValueError(f"unknown basis {basis!r}")
    out["n_mean"] = (pe + pg) @ np.arange(nf)
    out["sigma_pm"] = pe.sum(axis=-1)
    return out


def observables(state, space: HilbertSpace, basis: str = "bare") -> dict:
    """Populations, ``<a^+a>`` and ``<sigma_+ sigma_->`` of a state or density matrix.

    ``basis='sigma_x'`` reports ``P_plus_n``/``P_minus_n`` in the
    ``{|+>, |->}`` qubit basis instead of ``P_e_n``/``P_g_n``.
    """
    if isinstance(state, StateVector):
        arr = state.amplitudes
        res = _pure_observables(space, arr, basis)
    elif isinstance(state, DensityMatrix):
        res = _mixed_observables(space, state.entries, basis)
    else:
        arr = np.asarray(state)
        if arr.ndim == 1:
            res = _pure_observables(space, arr, basis)
        else:
            res = _mixed_observables(space, arr, basis)
    return {k: float(v) for k, v in res.items()}


def _check_tol(tol: float):
    if not TOL_RANGE[0] <= tol <= TOL_RANGE[1]:
        raise ValueError(f"tol must lie in [{TOL_RANGE[0]:g}, {TOL_RANGE[1]:g}], got {tol:g}")


def _psi_array(psi0, space: Optional[HilbertSpace]):
    if isinstance(psi0, StateVector):
        return psi0.space, np.array(psi0.amplitudes)
    arr = np.asarray(psi0, dtype=complex)
    if space is None:
        space = HilbertSpace(arr.size // 2 - 1)
    return space, arr


@_rk.njit
def _lindblad_rhs(t, y, params):
    Heff, Heff_d, A, Ad, k2 = params
    dim = Heff.shape[0]
    R = y.reshape(dim, dim)
    out = -1j * (Heff @ R - R @ Heff_d)
    if k2 != 0.0:
        out += k2 * (A @ R @ Ad)
    return out.ravel()


def _integrate(rhs, params, y0, times, rtol, atol):
    """Run the Dormand-Prince kernel; raise on step-size underflow."""
    kernel = _rk.make_integrator(rhs)
    y0 = np.ascontiguousarray(y0, dtype=complex)
    ys, nfev, status = kernel(np.asarray(times, dtype=float), y0, params, rtol, atol, 0.0)
    if status != _rk.STATUS_OK:
        t_fail = times[len(ys) - 1] if len(ys) else times[0]
        raise IntegrationError(f"step size underflow near t={t_fail:.6g} (stiff problem?)")
    return ys, {"method": "DOP853", "nfev": int(nfev)}


def propagate_state(
    H: Union[QOperator, np.ndarray, Callable],
    psi0,
    grid: TimeGrid,
    tol: float = DEFAULT_TOL,
    basis: str = "bare",
    store_states: bool = False,
    space: Optional[HilbertSpace] = None,
) -> Trajectory:
    """Solve ``i dpsi/dt = H(t) psi`` and sample observables on ``grid``.

    ``H`` is either a constant operator (exact eigendecomposition propagator)
    or a callable ``t -> operator``.  A callable may also provide
    ``apply(t, psi)`` returning ``H(t) @ psi``, which is used instead.
    """
    _check_tol(tol)
    space, psi = _psi_array(psi0, space)
    times = grid.times
    if callable(H) and not isinstance(H, (QOperator, np.ndarray)):
        apply = getattr(H, "apply", None)
        if apply is None:
            def apply(t, y):
                return _as_matrix(H(t)) @ y
        probe = apply(times[0], psi)
        if probe.shape != psi.shape:
            raise DimensionError(f"H(t) @ psi has shape {probe.shape}, expected {psi.shape}")

        kernel = getattr(H, "rhs_kernel", None)
        if kernel is not None:
            rhs, params = kernel()
        else:
            def rhs(t, y, params):
                return -1j * apply(t, y)

            params = ()
        states, info = _integrate(rhs, params, psi, times, tol, tol)
    else:
        Hm = _as_matrix(H)
        if Hm.shape != (psi.size, psi.size):
            raise DimensionError(f"H {Hm.shape} does not act on a state of length {psi.size}")
        w, V = np.linalg.eigh(Hm)
        c = V.conj().T @ psi
        states = (np.exp(-1j * np.outer(times - times[0], w)) * c) @ V.T
        info = {"method": "eigh"}
    norms = np.linalg.norm(states, axis=1)
    drift = float(np.max(np.abs(norms - np.linalg.norm(psi))))
    info["norm_drift"] = drift
    if drift > 100 * tol:
        raise NormDriftError(f"norm drift {drift:.3g} exceeds budget {100 * tol:.3g}")
    obs = _pure_observables(space, states, basis)
    obs["norm"] = norms
    return Trajectory(grid, obs, states if store_states else None, info)


def propagate_density(
    H: Union[QOperator, np.ndarray],
    lp: LindbladParams,
    rho0,
    grid: TimeGrid,
    tol: float = DEFAULT_TOL,
    basis: str = "bare",
    store_states: bool = False,
    space: Optional[HilbertSpace] = None,
) -> Trajectory:
    """Integrate the master equation with mode decay at rate ``kappa``.

    Trace must stay within 1e-7 of 1 and the smallest eigenvalue of every
    sampled density matrix above -1e-6.
    """
    _check_tol(tol)
    if isinstance(rho0, StateVector):
        rho0 = rho0.to_density()
    if isinstance(rho0, DensityMatrix):
        space, R0 = rho0.space, np.array(rho0.entries)
    else:
        R0 = np.asarray(rho0, dtype=complex)
        if space is None:
            space = HilbertSpace(R0.shape[0] // 2 - 1)
    Hm = _as_matrix(H)
    dim = space.dim
    if Hm.shape != (dim, dim) or R0.shape != (dim, dim):
        raise DimensionError("H and rho0 must both be dim x dim")
    a, num, _ = composite_ladder(space)
    A = a.data
    Ad = A.conj().T
    # -i[H, rho] - kappa{N, rho} = -i(Heff rho - rho Heff^+)
    Heff = Hm - 1j * lp.kappa * num.data
    Heff_d = Heff.conj().T
    k2 = 2 * lp.kappa

    params = (np.ascontiguousarray(Heff), np.ascontiguousarray(Heff_d),
              np.ascontiguousarray(A), np.ascontiguousarray(Ad), float(k2))
    times = grid.times
    # the state has dim^2 entries of size ~1/dim; tighter internal control
    # keeps positivity and trace well inside their budgets
    ys, info = _integrate(_lindblad_rhs, params, R0.ravel(), times, tol / 10, tol * 1e-3)
    rhos = ys.reshape(-1, dim, dim)
    rhos = 0.5 * (rhos + np.conj(np.transpose(rhos, (0, 2, 1))))
    traces = np.real(np.trace(rhos, axis1=1, axis2=2))
    drift = float(np.max(np.abs(traces - 1.0)))
    if drift > 1e-7:
        raise NormDriftError(f"trace drift {drift:.3g} exceeds 1e-7")
    min_eig = float(np.min(np.linalg.eigvalsh(rhos)))
    if min_eig < -1e-6:
        raise PositivityError(f"density matrix eigenvalue {min_eig:.3g} < -1e-6")
    obs = _mixed_observables(space, rhos, basis)
    obs["trace"] = traces
    obs["purity"] = np.real(np.einsum("tij,tji->t", rhos, rhos))
    info.update(trace_drift=drift, min_eig=min_eig)
    return Trajectory(grid, obs, rhos if store_states else None, info)
