"""Hamiltonians and generators: Rabi-Stark model, master equation, trapped ion.

Model-level quantities are in units of the mode frequency (``omega = 1``).
Ion-level quantities are angular frequencies in rad/ms (use :func:`kHz` to
convert from ordinary kHz) and times are in ms.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ._rk import njit

from .qspace import (
    DensityMatrix,
    DimensionError,
    HilbertSpace,
    QOperator,
    displacement_op,
    embed,
    ladder_ops,
    mode_identity,
    qubit_ops,
)

__all__ = [
    "ModelParams",
    "LindbladParams",
    "IonDriveParams",
    "IonDerivedParams",
    "CalibrationError",
    "kHz",
    "rabi_stark_hamiltonian",
    "free_hamiltonian",
    "interaction_picture_hamiltonian",
    "sigma_x_rabi_stark_hamiltonian",
    "parity_operator",
    "composite_ladder",
    "lindblad_rhs",
    "IonFullHamiltonian",
    "IonLDHamiltonian",
    "ion_full_hamiltonian",
    "ion_ld_hamiltonian",
    "ion_calibration",
    "design_ion_drive",
]

PHASE_ZERO = 0.0
PHASE_MINUS_PI = -math.pi
LD_THRESHOLD = 0.3


def kHz(f: float) -> float:
    """Ordinary frequency in kHz -> angular frequency in rad/ms."""
    return 2.0 * math.pi * f


class CalibrationError(ValueError):
    """Drive settings do not realize a Rabi-Stark model."""


@dataclass(frozen=True)
class ModelParams:
    """Couplings of ``H = w0/2 sz + w a^+a + gamma a^+a sz + g sx (a + a^+)``."""

    omega0: float
    omega: float = 1.0
    gamma: float = 0.0
    g: float = 0.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"mode frequency must be positive, got {self.omega}")

    @property
    def near_spectral_collapse(self) -> bool:
        """True once |gamma| >= omega; the spectrum is unbounded there."""
        return abs(self.gamma) >= self.omega

    def replace(self, **changes) -> "ModelParams":
        return ModelParams(**{**asdict(self), **changes})


@dataclass(frozen=True)
class LindbladParams:
    kappa: float = 0.0

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")


def _canonical_phase(phi: float) -> float:
    """Map a drive phase onto {0, -pi}; anything else is unsupported."""
    wrapped = math.remainder(phi, 2 * math.pi)
    if abs(wrapped) < 1e-9:
        return PHASE_ZERO
    if abs(abs(wrapped) - math.pi) < 1e-9:
        return PHASE_MINUS_PI
    raise CalibrationError(f"unsupported drive phase {phi!r}; only 0 and -pi are implemented")


@dataclass(frozen=True)
class IonDriveParams:
    """Laboratory settings of the three-laser scheme (rad/ms).

    ``delta_r``/``delta_b`` are the detunings from the red/blue sidebands,
    i.e. the lasers sit at ``omega_I -+ nu + delta_{r,b}``.  The carrier
    laser is resonant.
    """

    nu: float
    eta: float
    Omega_r: float
    Omega_b: float
    Omega_S: float
    delta_r: float = 0.0
    delta_b: float = 0.0
    phi_r: float = PHASE_MINUS_PI
    phi_b: float = PHASE_MINUS_PI
    phi_S: float = PHASE_MINUS_PI

    def __post_init__(self):
        for name in ("phi_r", "phi_b", "phi_S"):
            object.__setattr__(self, name, _canonical_phase(getattr(self, name)))
        if self.nu <= 0:
            raise ValueError("trap frequency must be positive")
        if self.eta < 0:
            raise ValueError("Lamb-Dicke parameter must be >= 0")

    def outside_lamb_dicke(self, n_max: int) -> bool:
        """Advisory flag: eta * sqrt(n_max) above 0.3."""
        return self.eta * math.sqrt(n_max) > LD_THRESHOLD

    def laser_detunings(self):
        """(red, blue, carrier) laser detunings from the qubit transition."""
        return (-self.nu + self.delta_r, self.nu + self.delta_b, 0.0)


@dataclass(frozen=True)
class IonDerivedParams:
    """Effective model realized by an :class:`IonDriveParams` set."""

    branch: str  # "minus_pi" (gamma > 0) or "zero" (gamma < 0)
    Omega_0: float
    eps_S: float
    Omega_DD: float
    omega_R: float
    omega0_R: float
    g_eff: float
    gamma_eff: float
    g_JC: float
    g_aJC: float
    g1_r: float
    g1_b: float
    g2_r: float
    g2_b: float
    balance_ratio: float

    def model(self) -> ModelParams:
        return ModelParams(
            omega0=self.omega0_R, omega=self.omega_R, gamma=self.gamma_eff, g=self.g_eff
        )


# --- Rabi-Stark model -------------------------------------------------------


def _ops(space: HilbertSpace):
    a, ad, num = ladder_ops(space)
    return a, ad, num, mode_identity(space)


def composite_ladder(space: HilbertSpace):
    """``(a, a^+ a, sigma_+ sigma_-)`` embedded on the composite space."""
    a, _, num, eye = _ops(space)
    _, _, _, sp, sm = qubit_ops()
    return embed(np.eye(2), a), embed(np.eye(2), num), embed(sp @ sm, eye)


def rabi_stark_hamiltonian(p: ModelParams, space: HilbertSpace) -> QOperator:
    a, ad, num, eye = _ops(space)
    sx, _, sz, _, _ = qubit_ops()
    return (
        (p.omega0 / 2) * embed(sz, eye)
        + p.omega * embed(np.eye(2), num)
        + p.gamma * embed(sz, num)
        + p.g * embed(sx, a + ad)
    )


def free_hamiltonian(p: ModelParams, space: HilbertSpace) -> QOperator:
    """Diagonal part of the Rabi-Stark Hamiltonian (everything but ``g``)."""
    return rabi_stark_hamiltonian(p.replace(g=0.0), space)


def sigma_x_rabi_stark_hamiltonian(p: ModelParams, space: HilbertSpace) -> QOperator:
    """Rabi-Stark model written in the sigma_x eigenbasis, as realized by the ion.

    ``H = w0/2 sx + w a^+a + g sy (a + a^+) + gamma a^+a sx``; it is unitarily
    equivalent to :func:`rabi_stark_hamiltonian` with ``|+> -> |e>``.
    """
    a, ad, num, eye = _ops(space)
    sx, sy, _, _, _ = qubit_ops()
    return (
        (p.omega0 / 2) * embed(sx, eye)
        + p.omega * embed(np.eye(2), num)
        + p.gamma * embed(sx, num)
        + p.g * embed(sy, a + ad)
    )


def interaction_picture_hamiltonian(p: ModelParams, space: HilbertSpace, t: float) -> QOperator:
    """Rabi coupling in the frame of the diagonal (free + Stark) part.

    Built term by term: each ``|n+1><n|`` bond carries ``Omega_n = g sqrt(n+1)``
    with phases ``exp(i delta^{+-}_n t)``.
    """
    nf = space.n_fock
    H = np.zeros((space.dim, space.dim), dtype=complex)
    e, g = 0, nf
    for n in range(space.n_max):
        w0n = p.omega0 + p.gamma * (2 * n + 1)
        d_plus = p.omega + w0n
        d_minus = p.omega - w0n
        rate = p.g * math.sqrt(n + 1)
        # sigma_+ |n+1><n| and sigma_- |n+1><n|
        H[e + n + 1, g + n] += rate * np.exp(1j * d_plus * t)
        H[g + n + 1, e + n] += rate * np.exp(1j * d_minus * t)
    H = H + H.conj().T
    return QOperator(space, H)


def parity_operator(space: HilbertSpace) -> QOperator:
    """``sigma_z (-1)^{a^+ a}``."""
    _, _, sz, _, _ = qubit_ops()
    signs = (-1.0) ** np.arange(space.n_fock)
    return embed(sz, QOperator(space, np.diag(signs), mode_only=True))


def lindblad_rhs(H, lp: LindbladParams, rho) -> np.ndarray:
    """``-i[H, rho] + kappa (2 a rho a^+ - a^+a rho - rho a^+a)``."""
    Hm = np.asarray(H)
    if isinstance(rho, DensityMatrix):
        space = rho.space
        R = rho.entries
    else:
        R = np.asarray(rho)
        space = None
    if Hm.shape != R.shape:
        raise DimensionError(f"H {Hm.shape} and rho {R.shape} do not match")
    out = -1j * (Hm @ R - R @ Hm)
    if lp.kappa:
        if space is None:
            space = HilbertSpace(R.shape[0] // 2 - 1)
        a, num, _ = composite_ladder(space)
        A, N = a.data, num.data
        out += lp.kappa * (2 * A @ R @ A.conj().T - N @ R - R @ N)
    return out


# --- trapped ion --------------------------------------------------------------


class IonFullHamiltonian:
    """Time-dependent single-ion Hamiltonian with the exact drive exponential.

    ``H(t) = sum_j Omega_j/2 sigma_+ D(i eta e^{i nu t}) e^{-i Delta_j t} e^{i phi_j} + h.c.``

    ``D(z e^{i nu t})`` is ``D(z)`` with element ``(m, n)`` multiplied by
    ``e^{i nu t (m - n)}``, so one Laguerre evaluation serves every ``t``.
    Calling the object returns the dense matrix; :meth:`apply` returns
    ``H(t) @ psi`` without forming it.
    """

    def __init__(self, d: IonDriveParams, space: HilbertSpace):
        self.drive = d
        self.space = space
        self.D0 = displacement_op(space, 1j * d.eta).data
        self._k = np.arange(space.n_fock)
        dets = d.laser_detunings()
        rabis = (d.Omega_r, d.Omega_b, d.Omega_S)
        phases = (d.phi_r, d.phi_b, d.phi_S)
        self._amps = np.array([0.5 * W * np.exp(1j * phi) for W, phi in zip(rabis, phases)])
        self._dets = np.array(dets)

    def _pieces(self, t: float):
        c = np.sum(self._amps * np.exp(-1j * self._dets * t))
        u = np.exp(1j * self.drive.nu * t * self._k)
        return c, u

    def __call__(self, t: float) -> np.ndarray:
        c, u = self._pieces(t)
        A = c * (u[:, None] * self.D0 * u.conj()[None, :])
        nf = self.space.n_fock
        H = np.zeros((2 * nf, 2 * nf), dtype=complex)
        H[:nf, nf:] = A
        H[nf:, :nf] = A.conj().T
        return H

    def apply(self, t: float, psi: np.ndarray) -> np.ndarray:
        c, u = self._pieces(t)
        nf = self.space.n_fock
        pe, pg = psi[:nf], psi[nf:]
        out = np.empty_like(psi)
        out[:nf] = c * (u * (self.D0 @ (u.conj() * pg)))
        out[nf:] = np.conj(c) * (u * (self.D0.conj().T @ (u.conj() * pe)))
        return out

    def operator(self, t: float) -> QOperator:
        return QOperator(self.space, self(t))

    def rhs_kernel(self):
        """Compiled ``(t, psi, params) -> -i H(t) psi`` and its parameter tuple."""
        params = (
            np.ascontiguousarray(self.D0),
            np.ascontiguousarray(self.D0.conj().T),
            self._k.astype(float),
            self._amps.astype(complex),
            self._dets.astype(float),
            float(self.drive.nu),
        )
        return _ion_rhs, params


@njit
def _ion_rhs(t, psi, params):
    D0, D0h, k, amps, dets, nu = params
    nf = D0.shape[0]
    c = np.sum(amps * np.exp(-1j * dets * t))
    u = np.exp(1j * nu * t * k)
    uc = np.conj(u)
    out = np.empty_like(psi)
    out[:nf] = -1j * c * (u * (D0 @ (uc * psi[nf:])))
    out[nf:] = -1j * np.conj(c) * (u * (D0h @ (uc * psi[:nf])))
    return out


def ion_full_hamiltonian(d: IonDriveParams, space: HilbertSpace, t: float) -> QOperator:
    return IonFullHamiltonian(d, space).operator(t)


class IonLDHamiltonian:
    """Lamb-Dicke-regime ion Hamiltonian after the vibrational RWA.

    ``-i g_r a s+ e^{-i d_r t} - i g_b a^+ s+ e^{-i d_b t} + e^{i phi_S} g_S s+ + h.c.``
    with ``g_{r,b} = eta Omega_{r,b} / 2`` (signs follow the drive phases; the
    form above is phi_r = phi_b = -pi) and ``g_S = Omega_0/2 - gamma a^+a``.
    Stored as ``sum_j exp(-i w_j t) M_j + h.c.`` with static ``M_j``.
    """

    def __init__(self, d: IonDriveParams, space: HilbertSpace):
        a, ad, num, eye = _ops(space)
        _, _, _, sp, _ = qubit_ops()
        Omega_0 = d.Omega_S * (1 - d.eta**2 / 2)
        gamma = d.eta**2 * d.Omega_S / 2
        red = 1j * (d.eta * d.Omega_r / 2) * np.exp(1j * d.phi_r)
        blue = 1j * (d.eta * d.Omega_b / 2) * np.exp(1j * d.phi_b)
        g_S = (Omega_0 / 2) * eye - gamma * num
        self.space = space
        self.mats = np.array([
            red * embed(sp, a).data,
            blue * embed(sp, ad).data,
            np.exp(1j * d.phi_S) * embed(sp, g_S).data,
        ])
        self.freqs = np.array([d.delta_r, d.delta_b, 0.0])

    def __call__(self, t: float) -> np.ndarray:
        A = np.tensordot(np.exp(-1j * self.freqs * t), self.mats, axes=1)
        return A + A.conj().T

    def apply(self, t: float, psi: np.ndarray) -> np.ndarray:
        return self(t) @ psi

    def operator(self, t: float) -> QOperator:
        return QOperator(self.space, self(t))

    def rhs_kernel(self):
        mats = np.ascontiguousarray(self.mats)
        mats_h = np.ascontiguousarray(np.conj(np.transpose(self.mats, (0, 2, 1))))
        return _harmonic_rhs, (mats, mats_h, self.freqs.astype(float))


@njit
def _harmonic_rhs(t, psi, params):
    mats, mats_h, freqs = params
    out = np.zeros_like(psi)
    for j in range(freqs.shape[0]):
        c = np.exp(-1j * freqs[j] * t)
        out += c * (mats[j] @ psi) + np.conj(c) * (mats_h[j] @ psi)
    return -1j * out


def ion_ld_hamiltonian(d: IonDriveParams, space: HilbertSpace, t: float) -> QOperator:
    return IonLDHamiltonian(d, space).operator(t)


def _branch(phi_S: float) -> str:
    return "zero" if phi_S == PHASE_ZERO else "minus_pi"


def _balance_ratio(branch: str, eps: float) -> float:
    if branch == "zero":
        return (1 + eps) / (1 - eps)
    return (1 - eps) / (1 + eps)


def ion_calibration(d: IonDriveParams, ratio_rtol: float = 1e-2) -> IonDerivedParams:
    """Effective Rabi-Stark parameters realized by a drive set.

    The carrier phase selects the branch: ``phi_S = -pi`` gives
    ``gamma = +eta^2 Omega_S / 2`` and ``Omega_DD = -(Omega_0 + omega0_R)``;
    ``phi_S = 0`` gives ``gamma = -eta^2 Omega_S / 2`` and
    ``Omega_DD = Omega_0 - omega0_R``.  The sideband detunings fix
    ``Omega_DD = (delta_r + delta_b)/2`` and ``omega_R = (delta_r - delta_b)/2``.

    The resulting model is the sigma_x form of the Rabi-Stark Hamiltonian:
    its qubit basis is ``{|+>, |->}``.
    """
    if d.phi_r != PHASE_MINUS_PI or d.phi_b != PHASE_MINUS_PI:
        raise CalibrationError("sideband phases must both be -pi")
    branch = _branch(d.phi_S)
    eps = d.Omega_S / d.nu
    ratio = _balance_ratio(branch, eps)
    if d.Omega_r <= 0:
        raise CalibrationError("red sideband Rabi frequency must be positive")
    actual = d.Omega_b / d.Omega_r
    if abs(actual - ratio) > ratio_rtol * ratio:
        raise CalibrationError(
            f"unbalanced drives: Omega_b/Omega_r = {actual:.6g}, branch requires {ratio:.6g}"
        )
    sign = 1.0 if branch == "zero" else -1.0
    Omega_0 = d.Omega_S * (1 - d.eta**2 / 2)
    Omega_DD = 0.5 * (d.delta_r + d.delta_b)
    omega_R = 0.5 * (d.delta_r - d.delta_b)
    omega0_R = Omega_0 - Omega_DD if branch == "zero" else -(Omega_0 + Omega_DD)
    g_JC = d.eta * d.Omega_r * (1 + sign * eps) / 4
    g_aJC = d.eta * d.Omega_b * (1 - sign * eps) / 4
    return IonDerivedParams(
        branch=branch,
        Omega_0=Omega_0,
        eps_S=eps,
        Omega_DD=Omega_DD,
        omega_R=omega_R,
        omega0_R=omega0_R,
        g_eff=g_JC,
        gamma_eff=-sign * d.eta**2 * d.Omega_S / 2,
        g_JC=g_JC,
        g_aJC=g_aJC,
        g1_r=d.eta * d.Omega_r / 4,
        g1_b=d.eta * d.Omega_b / 4,
        g2_r=d.eta * d.Omega_S * d.Omega_r / (4 * d.nu),
        g2_b=d.eta * d.Omega_S * d.Omega_b / (4 * d.nu),
        balance_ratio=ratio,
    )


def design_ion_drive(
    target: ModelParams, *, nu: float, eta: float, phi_S: float
) -> IonDriveParams:
    """Drive settings that realize ``target`` (given in rad/ms).

    Inverse of :func:`ion_calibration`: ``Omega_S`` follows from ``|gamma|``,
    ``Omega_r`` from ``g``, ``Omega_b`` from the balancing ratio and the
    sideband detunings from ``Omega_DD +- omega_R``.
    """
    branch = _branch(_canonical_phase(phi_S))
    if branch == "zero" and target.gamma > 0 or branch == "minus_pi" and target.gamma < 0:
        raise CalibrationError(f"gamma={target.gamma} has the wrong sign for branch {branch}")
    if eta <= 0:
        raise CalibrationError("eta must be positive to engineer a Stark term")
    sign = 1.0 if branch == "zero" else -1.0
    Omega_S = 2 * abs(target.gamma) / eta**2
    eps = Omega_S / nu
    Omega_0 = Omega_S * (1 - eta**2 / 2)
    Omega_DD = Omega_0 - target.omega0 if branch == "zero" else -(Omega_0 + target.omega0)
    Omega_r = 4 * target.g / (eta * (1 + sign * eps))
    Omega_b = Omega_r * _balance_ratio(branch, eps)
    return IonDriveParams(
        nu=nu,
        eta=eta,
        Omega_r=Omega_r,
        Omega_b=Omega_b,
        Omega_S=Omega_S,
        delta_r=Omega_DD + target.omega,
        delta_b=Omega_DD - target.omega,
        phi_S=phi_S,
    )
