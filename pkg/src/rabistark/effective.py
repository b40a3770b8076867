"""Perturbative analytics of the Rabi-Stark model.

First-order detunings, second-order Stark shifts, odd-order ``k``-photon
channels and the Stark-shifted three-photon resonance.  Everything here is a
closed-form function of :class:`~rabistark.models.ModelParams`.

Branch ``"+"`` is the anti-JC family (``|g,n> <-> |e,n+k>``), branch ``"-"``
the JC family (``|e,n> <-> |g,n+k>``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .models import ModelParams

__all__ = [
    "SingularChannelError",
    "NoRootError",
    "DetuningSet",
    "StarkShift",
    "KPhotonChannel",
    "detunings",
    "stark_shifts",
    "k_photon_channel",
    "shifted_three_photon_detuning",
    "solve_resonance",
    "resonance_poles",
]

# a denominator closer to zero than this many couplings breaks perturbation theory
NEAR_RESONANCE_FACTOR = 10.0

BRANCHES = ("+", "-")


class SingularChannelError(ZeroDivisionError):
    """A perturbative denominator vanishes (an exact lower-order resonance)."""


class NoRootError(ValueError):
    """No sign change of the detuning inside the requested bracket."""


def _check_branch(branch: str) -> str:
    if branch in ("plus", "anti-JC", "aJC"):
        branch = "+"
    elif branch in ("minus", "JC"):
        branch = "-"
    if branch not in BRANCHES:
        raise ValueError(f"branch must be '+' or '-', got {branch!r}")
    return branch


@dataclass(frozen=True)
class DetuningSet:
    n: int
    omega0_n: float
    delta_plus: float
    delta_minus: float
    Omega_n: float

    def delta(self, branch: str) -> float:
        return self.delta_plus if _check_branch(branch) == "+" else self.delta_minus


def detunings(p: ModelParams, n: int) -> DetuningSet:
    if n < 0:
        raise ValueError("Fock index must be >= 0")
    w0n = p.omega0 + p.gamma * (2 * n + 1)
    return DetuningSet(
        n=n,
        omega0_n=w0n,
        delta_plus=p.omega + w0n,
        delta_minus=p.omega - w0n,
        Omega_n=abs(p.g) * math.sqrt(n + 1),
    )


@dataclass(frozen=True)
class StarkShift:
    n: int
    delta_e: float
    delta_g: float
    near_resonant: bool


def _ratio(num: float, den: float, what: str) -> float:
    if num == 0.0:
        return 0.0
    if den == 0.0:
        raise SingularChannelError(f"{what} = 0: first-order resonance, second order invalid")
    return num / den


def stark_shifts(p: ModelParams, n: int) -> StarkShift:
    """Second-order energy shifts of ``|e,n>`` and ``|g,n>``.

    ``Delta^e_n = W_{n-1}^2/d+_{n-1} - W_n^2/d-_n`` and
    ``Delta^g_n = W_{n-1}^2/d-_{n-1} - W_n^2/d+_n`` with ``W_{-1} = 0``.
    """
    cur = detunings(p, n)
    W2 = p.g**2 * (n + 1)
    if n > 0:
        prev = detunings(p, n - 1)
        W2_prev = p.g**2 * n
        de_up = _ratio(W2_prev, prev.delta_plus, f"delta+_{n-1}")
        dg_up = _ratio(W2_prev, prev.delta_minus, f"delta-_{n-1}")
        dens = [(prev.delta_plus, prev.Omega_n), (prev.delta_minus, prev.Omega_n)]
    else:
        de_up = dg_up = 0.0
        dens = []
    dens += [(cur.delta_plus, cur.Omega_n), (cur.delta_minus, cur.Omega_n)]
    de = de_up - _ratio(W2, cur.delta_minus, f"delta-_{n}")
    dg = dg_up - _ratio(W2, cur.delta_plus, f"delta+_{n}")
    near = any(abs(d) < NEAR_RESONANCE_FACTOR * W for d, W in dens if W > 0)
    return StarkShift(n=n, delta_e=de, delta_g=dg, near_resonant=near)


@dataclass(frozen=True)
class KPhotonChannel:
    """Effective ``k``-photon coupling ``|n> -> |n+k>`` on one branch.

    For even ``k`` the channel is ``forbidden`` by parity and carries no rate.
    ``Omega_k`` keeps its sign; compare magnitudes with simulations.
    """

    k: int
    n: int
    branch: str
    delta_k: float
    Omega_k: float
    shifted_delta: Optional[float] = None
    near_resonant: bool = False
    forbidden: bool = False
    reason: str = ""

    @property
    def transfer_time(self) -> float:
        """``pi / (2 |Omega_k|)``, the time for a full population swap."""
        if self.forbidden or self.Omega_k == 0:
            return math.inf
        return math.pi / (2 * abs(self.Omega_k))

    @property
    def states(self):
        """(initial, target) bare labels, e.g. (('g', 5), ('e', 8))."""
        if self.branch == "+":
            return ("g", self.n), ("e", self.n + self.k)
        return ("e", self.n), ("g", self.n + self.k)


def _delta_k(p: ModelParams, n: int, k: int, branch: str) -> float:
    return (k - 1) * p.omega + detunings(p, n + (k - 1) // 2).delta(branch)


def _double_factorial(m: int) -> int:
    return math.prod(range(m, 0, -2)) if m > 0 else 1


def k_photon_channel(p: ModelParams, n: int, k: int, branch: str) -> KPhotonChannel:
    """Rate and detuning of the ``k``-photon channel starting at Fock ``n``.

    ``delta^(k)_{n+-} = (k-1) w + delta^+-_{n+(k-1)/2}`` and

    ``Omega^(k)_{n+-} = g^k sqrt((n+k)!/n!) / ((k-1)!! (w -+ gamma)^((k-1)/2))
    * prod_{s=1,3..k-2} 1/delta^(s)_{n+-}``.
    """
    branch = _check_branch(branch)
    if k < 1 or int(k) != k:
        raise ValueError(f"order k must be a positive integer, got {k}")
    if n < 0:
        raise ValueError("Fock index must be >= 0")
    if k % 2 == 0:
        return KPhotonChannel(
            k=k,
            n=n,
            branch=branch,
            delta_k=math.nan,
            Omega_k=0.0,
            forbidden=True,
            reason=(
                "even order: sigma_z (-1)^(a^+a) parity is conserved, so |e,n> and "
                "|g,n+k> lie in different parity sectors and the term averages out"
            ),
        )
    delta_k = _delta_k(p, n, k, branch)
    sign = -1.0 if branch == "+" else 1.0
    lo = p.omega + sign * p.gamma
    rate = p.g**k * math.sqrt(math.prod(range(n + 1, n + k + 1)))
    rate /= _double_factorial(k - 1) * lo ** ((k - 1) // 2)
    near = False
    for s in range(1, k - 1, 2):
        d_s = _delta_k(p, n, s, branch)
        if d_s == 0.0:
            raise SingularChannelError(
                f"intermediate detuning delta^({s})_{n}{branch} vanishes; channel invalid"
            )
        near |= abs(d_s) < NEAR_RESONANCE_FACTOR * abs(p.g) * math.sqrt(n + s + 1)
        rate /= d_s
    shifted = None
    if k == 3:
        try:
            shifted = shifted_three_photon_detuning(p, n, branch)
        except SingularChannelError:
            # a Stark-shift denominator vanishes; the bare rate is still defined
            shifted, near = math.nan, True
    return KPhotonChannel(
        k=k, n=n, branch=branch, delta_k=delta_k, Omega_k=rate,
        shifted_delta=shifted, near_resonant=near,
    )


def shifted_three_photon_detuning(p: ModelParams, n: int, branch: str) -> float:
    """Three-photon detuning including the second-order Stark shifts.

    ``+``: ``delta3_{n+} + Delta^e_{n+3} - Delta^g_n``;
    ``-``: ``delta3_{n-} + Delta^g_{n+3} - Delta^e_n``.
    """
    branch = _check_branch(branch)
    base = _delta_k(p, n, 3, branch)
    lo, hi = stark_shifts(p, n), stark_shifts(p, n + 3)
    if branch == "+":
        return base + hi.delta_e - lo.delta_g
    return base + hi.delta_g - lo.delta_e


def resonance_poles(p: ModelParams, n: int) -> list:
    """Values of ``omega0`` where a Stark-shift denominator of the
    ``n -> n+3`` channel vanishes (``delta^+-_m = 0`` for the involved ``m``)."""
    poles = set()
    for m in (n - 1, n, n + 2, n + 3):
        if m < 0:
            continue
        poles.add(-p.omega - p.gamma * (2 * m + 1))
        poles.add(p.omega - p.gamma * (2 * m + 1))
    return sorted(poles)


def _bisect(f, a: float, b: float, fa: float, xtol: float) -> float:
    while b - a > xtol:
        mid = 0.5 * (a + b)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (fa > 0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def solve_resonance(
    p: ModelParams,
    k: int,
    n: int,
    branch: str,
    shifted: bool = False,
    bracket: Optional[tuple] = None,
    samples: int = 2001,
    xtol: float = 1e-10,
) -> list:
    """Qubit frequencies ``omega0`` at which the ``k``-photon channel is resonant.

    ``p.omega0`` is ignored.  Unshifted roots are closed form.  The shifted
    three-photon detuning is bracketed on a grid inside ``bracket`` (default:
    unshifted root +- 0.5 omega), split at its poles, and each sign change is
    refined by bisection.
    """
    branch = _check_branch(branch)
    if k % 2 == 0 or k < 1:
        raise ValueError(f"resonances exist only for odd k, got {k}")
    m = n + (k - 1) // 2
    if branch == "+":
        base = -k * p.omega - p.gamma * (2 * m + 1)
    else:
        base = k * p.omega - p.gamma * (2 * m + 1)
    if not shifted:
        return [base]
    if k != 3:
        raise ValueError("shifted resonances are available for k = 3 only")
    lo, hi = bracket if bracket is not None else (base - 0.5 * p.omega, base + 0.5 * p.omega)
    if not hi > lo:
        raise ValueError("empty bracket")

    def f(w0):
        return shifted_three_photon_detuning(p.replace(omega0=w0), n, branch)

    edges = [lo] + [x for x in resonance_poles(p, n) if lo < x < hi] + [hi]
    roots = []
    for a, b in zip(edges[:-1], edges[1:]):
        span = b - a
        # stay clear of the poles themselves
        pad = 1e-9 * max(1.0, span)
        grid = np.linspace(a + pad, b - pad, max(3, int(samples * span / (hi - lo))))
        vals = np.array([f(x) for x in grid])
        for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
            roots.append(_bisect(f, grid[i], grid[i + 1], vals[i], xtol))
        roots.extend(grid[vals == 0.0])
    if not roots:
        raise NoRootError(f"no root of the shifted detuning in [{lo}, {hi}]")
    return sorted(roots)
