"""Linear algebra on the qubit (x) truncated-Fock space.

Coordinates are ordered qubit first, Fock second::

    index = qubit_index * (n_max + 1) + n,    qubit_index: e -> 0, g -> 1

so ``sigma_z = diag(+1, -1)`` in the ``(e, g)`` basis.  All matrices are dense.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

__all__ = [
    "DimensionError",
    "TruncationWarning",
    "HilbertSpace",
    "QOperator",
    "StateVector",
    "DensityMatrix",
    "ladder_ops",
    "qubit_ops",
    "embed",
    "basis_state",
    "displacement_op",
    "QUBIT_LABELS",
]

QUBIT_LABELS = ("e", "g", "plus", "minus")

_HERM_ATOL = 1e-12


class DimensionError(ValueError):
    """Raised when objects from incompatible spaces are combined."""


class TruncationWarning(UserWarning):
    """Fock truncation discards more weight than the requested budget."""


@dataclass(frozen=True)
class HilbertSpace:
    """Two-level system times a Fock space cut at ``n_max``."""

    n_max: int

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be an integer >= 1, got {self.n_max!r}")
        object.__setattr__(self, "n_max", int(self.n_max))

    @property
    def n_fock(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return 2 * self.n_fock

    def index(self, qubit: str, n: int) -> int:
        """Flat coordinate of the bare state ``|qubit, n>`` (qubit in {'e', 'g'})."""
        if qubit not in ("e", "g"):
            raise ValueError(f"bare qubit label must be 'e' or 'g', got {qubit!r}")
        if not 0 <= n <= self.n_max:
            raise ValueError(f"Fock index {n} outside [0, {self.n_max}]")
        return (0 if qubit == "e" else 1) * self.n_fock + n


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


class QOperator:
    """Immutable complex matrix tied to a :class:`HilbertSpace`.

    An operator acts either on the whole composite space (``mode_only=False``)
    or on the Fock factor alone (``mode_only=True``).
    """

    __array_priority__ = 1000

    def __init__(self, space: HilbertSpace, data, mode_only: bool = False):
        data = _frozen(data)
        size = space.n_fock if mode_only else space.dim
        if data.shape != (size, size):
            raise DimensionError(
                f"operator shape {data.shape} does not match expected ({size}, {size})"
            )
        self.space = space
        self.data = data
        self.mode_only = mode_only

    def __repr__(self):
        kind = "mode" if self.mode_only else "full"
        return f"QOperator(n_max={self.space.n_max}, {kind}, shape={self.data.shape})"

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def _check(self, other: "QOperator"):
        if not isinstance(other, QOperator):
            raise TypeError(f"expected QOperator, got {type(other).__name__}")
        if other.space != self.space or other.mode_only != self.mode_only:
            raise DimensionError("operators live on different spaces")

    def __add__(self, other):
        self._check(other)
        return QOperator(self.space, self.data + other.data, self.mode_only)

    def __sub__(self, other):
        self._check(other)
        return QOperator(self.space, self.data - other.data, self.mode_only)

    def __neg__(self):
        return QOperator(self.space, -self.data, self.mode_only)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return QOperator(self.space, scalar * self.data, self.mode_only)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, QOperator):
            self._check(other)
            return QOperator(self.space, self.data @ other.data, self.mode_only)
        if isinstance(other, StateVector):
            if self.mode_only or other.space != self.space:
                raise DimensionError("operator and state live on different spaces")
            return self.data @ other.amplitudes
        return NotImplemented

    def dag(self) -> "QOperator":
        return QOperator(self.space, self.data.conj().T, self.mode_only)

    def is_hermitian(self, atol: float = _HERM_ATOL) -> bool:
        return bool(np.all(np.abs(self.data - self.data.conj().T) <= atol))

    def commutator(self, other: "QOperator") -> "QOperator":
        self._check(other)
        return QOperator(
            self.space, self.data @ other.data - other.data @ self.data, self.mode_only
        )

    def matrix_element(self, bra: "StateVector", ket: "StateVector") -> complex:
        return complex(bra.amplitudes.conj() @ self.data @ ket.amplitudes)


class StateVector:
    """Normalized pure state on the composite space."""

    def __init__(self, space: HilbertSpace, amplitudes, atol: float = 1e-9):
        amps = _frozen(amplitudes)
        if amps.shape != (space.dim,):
            raise DimensionError(f"state length {amps.shape} != ({space.dim},)")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > atol:
            raise ValueError(f"state is not normalized (norm={norm:.12g})")
        self.space = space
        self.amplitudes = amps

    def __repr__(self):
        return f"StateVector(n_max={self.space.n_max})"

    def __array__(self, dtype=None, copy=None):
        return self.amplitudes if dtype is None else self.amplitudes.astype(dtype)

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(self.space, np.outer(self.amplitudes, self.amplitudes.conj()))


class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix (up to noise)."""

    def __init__(self, space: HilbertSpace, entries, check: bool = True):
        rho = _frozen(entries)
        if rho.shape != (space.dim, space.dim):
            raise DimensionError(f"density matrix shape {rho.shape} != ({space.dim},)*2")
        if check:
            if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
                raise ValueError("density matrix is not Hermitian")
            tr = np.trace(rho).real
            if abs(tr - 1.0) > 1e-8:
                raise ValueError(f"density matrix trace {tr:.12g} != 1")
            lam = np.linalg.eigvalsh(rho)
            if lam[0] < -1e-8:
                raise ValueError(f"density matrix has eigenvalue {lam[0]:.3g} < 0")
        self.space = space
        self.entries = rho

    def __repr__(self):
        return f"DensityMatrix(n_max={self.space.n_max})"

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def ladder_ops(space: HilbertSpace):
    """Annihilation, creation and number operators on the Fock factor.

    Returns mode-only operators ``(a, a_dagger, number)``.  The element that
    would map ``|n_max>`` to ``|n_max + 1>`` is dropped.
    """
    sqrt_n = np.sqrt(np.arange(1, space.n_fock))
    a = np.diag(sqrt_n, k=1).astype(complex)
    number = np.diag(np.arange(space.n_fock, dtype=float)).astype(complex)
    return (
        QOperator(space, a, mode_only=True),
        QOperator(space, a.T.copy(), mode_only=True),
        QOperator(space, number, mode_only=True),
    )


def qubit_ops():
    """Pauli and raising/lowering matrices in the ``(e, g)`` basis.

    Returns ``(sigma_x, sigma_y, sigma_z, sigma_plus, sigma_minus)`` where
    ``sigma_plus = |e><g|``.
    """
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    sp = np.array([[0, 1], [0, 0]], dtype=complex)
    sm = np.array([[0, 0], [1, 0]], dtype=complex)
    for m in (sx, sy, sz, sp, sm):
        m.setflags(write=False)
    return sx, sy, sz, sp, sm


def embed(qubit_part, mode_part) -> QOperator:
    """Kronecker product ``qubit_part (x) mode_part`` on the composite space."""
    if not isinstance(mode_part, QOperator) or not mode_part.mode_only:
        raise DimensionError("mode_part must be a mode-only QOperator")
    q = np.asarray(qubit_part, dtype=complex)
    if q.shape != (2, 2):
        raise DimensionError(f"qubit_part must be 2x2, got {q.shape}")
    return QOperator(mode_part.space, np.kron(q, mode_part.data))


def mode_identity(space: HilbertSpace) -> QOperator:
    return QOperator(space, np.eye(space.n_fock), mode_only=True)


def basis_state(space: HilbertSpace, qubit_label: str, n: int) -> StateVector:
    """Product state ``|qubit_label> (x) |n>``.

    ``qubit_label`` is one of ``e``, ``g``, ``plus``, ``minus``; the latter
    two are the sigma_x eigenstates ``(|e> +- |g>)/sqrt(2)``.
    """
    if qubit_label not in QUBIT_LABELS:
        raise ValueError(f"unknown qubit label {qubit_label!r}; use one of {QUBIT_LABELS}")
    if not 0 <= n <= space.n_max:
        raise ValueError(f"Fock index {n} outside [0, {space.n_max}]")
    qubit = {
        "e": np.array([1.0, 0.0]),
        "g": np.array([0.0, 1.0]),
        "plus": np.array([1.0, 1.0]) / np.sqrt(2.0),
        "minus": np.array([1.0, -1.0]) / np.sqrt(2.0),
    }[qubit_label]
    fock = np.zeros(space.n_fock)
    fock[n] = 1.0
    return StateVector(space, np.kron(qubit, fock))


def _displacement_matrix(n_fock: int, z: complex) -> np.ndarray:
    """Closed-form <m|exp(z a^+ - z* a)|n> on the first ``n_fock`` levels."""
    if z == 0:
        return np.eye(n_fock, dtype=complex)
    x = abs(z) ** 2
    m, n = np.meshgrid(np.arange(n_fock), np.arange(n_fock), indexing="ij")
    lo = np.minimum(m, n)
    hi = np.maximum(m, n)
    d = hi - lo
    # sqrt(lo!/hi!) * exp(-x/2) * L_lo^(d)(x), evaluated in log space
    log_mag = 0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) - 0.5 * x
    lag = eval_genlaguerre(lo, d, x)
    # z^d for m >= n; (-z*)^d for m < n.  The unit phase comes from the angle
    # because z / |z| is NaN for subnormal z.
    u = np.exp(1j * np.angle(z))
    phase = np.where(m >= n, u, -np.conj(u))
    base = np.exp(log_mag + d * np.log(abs(z))) * lag
    return base * phase**d


def displacement_op(space: HilbertSpace, z: complex, padding: int = 5, budget: float = 1e-6):
    """Displacement operator ``D(z) = exp(z a^+ - z* a)`` on the Fock factor.

    Matrix elements come from the Laguerre closed form, so the result is the
    exact infinite-dimensional operator restricted to ``n <= n_max``.  The
    restriction is not unitary in the top ``padding`` levels; if any column
    ``n <= n_max - padding`` loses more than ``budget`` of its norm to the
    truncation a :class:`TruncationWarning` is issued.
    """
    z = complex(z)
    if not np.isfinite(z):
        raise ValueError("displacement amplitude must be finite")
    data = _displacement_matrix(space.n_fock, z)
    interior = max(space.n_max - padding, 0) + 1
    leak = 1.0 - np.sum(np.abs(data[:, :interior]) ** 2, axis=0)
    if leak.size and leak.max() > budget:
        warnings.warn(
            f"displacement |z|={abs(z):.3g} leaks {leak.max():.2e} out of n_max={space.n_max}",
            TruncationWarning,
            stacklevel=2,
        )
    return QOperator(space, data, mode_only=True)
