"""Closed-form solutions of the two kinase/phosphatase example systems.

Both systems have two species, Y and YP, with equal diffusion coefficient
``D`` and conserved total ``M = Y + YP``.

* Slab: parallel membranes at ``xi = 0`` (phosphatase, rate
  ``k_p (YP - kappa_p Y)`` per area) and ``xi = L`` (kinase, rate
  ``k_k (kappa_k Y - YP)`` per area); no bulk chemistry.
* Sphere: kinase on the membrane at radius ``L``, phosphatase distributed in
  the bulk with rate ``k_p (YP - kappa_p Y)`` per volume.

Solutions accept the modulators ``alpha_*`` so that the printed control
coefficient formulas can be checked against finite differences of the
solutions themselves. The control formulas are evaluated at the reference
state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

# x coth x - 1 = sum_{n>=1} 2^{2n} B_{2n} x^{2n} / (2n)!
_XCOTH_SERIES = (1 / 3, -1 / 45, 2 / 945, -1 / 4725, 2 / 93555, -1382 / 638512875)
# 1 - x / sinh x
_SINHC_SERIES = (1 / 6, -7 / 360, 31 / 15120, -127 / 604800, 73 / 3421440)
_SMALL = 0.1


def xcoth_minus_one(x: float) -> float:
    """``x coth(x) - 1`` without cancellation for small ``x``."""
    x = abs(x)
    if x < _SMALL:
        x2 = x * x
        return sum(c * x2 ** (n + 1) for n, c in enumerate(_XCOTH_SERIES))
    return x / math.tanh(x) - 1.0


def x_over_sinh(x: float) -> float:
    x = abs(x)
    if x < _SMALL:
        x2 = x * x
        return 1.0 - sum(c * x2 ** (n + 1) for n, c in enumerate(_SINHC_SERIES))
    if x > 30.0:
        e = math.exp(-x)
        return 2.0 * x * e / (1.0 - e * e)
    return x / math.sinh(x)


def one_minus_x2_csch2(x: float) -> float:
    """``1 - x^2 (coth^2 x - 1) = 1 - (x / sinh x)^2``."""
    x = abs(x)
    if x < _SMALL:
        x2 = x * x
        d = sum(c * x2 ** (n + 1) for n, c in enumerate(_SINHC_SERIES))  # 1 - x/sinh x
        return d * (2.0 - d)
    s = x_over_sinh(x)
    return 1.0 - s * s


def sinh_ratio(a: float, b: float) -> float:
    """``sinh(a) / sinh(b)`` for ``0 <= a <= b`` without overflow."""
    if b == 0:
        return 1.0
    if b > 30.0:
        return math.exp(a - b) * (1.0 - math.exp(-2.0 * a)) / (1.0 - math.exp(-2.0 * b))
    return math.sinh(a) / math.sinh(b)


@dataclass(frozen=True)
class SlabModel:
    D: float = 1.0
    k_k: float = 1.0
    k_p: float = 1.0
    kappa_k: float = 10.0
    kappa_p: float = 0.1
    M: float = 1.0
    L: float = 1.0

    def __post_init__(self):
        for name in ("D", "k_k", "k_p", "kappa_k", "kappa_p", "M", "L"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def beta_k(self) -> float:
        return self.k_k * (1.0 + self.kappa_k)

    @property
    def beta_p(self) -> float:
        return self.k_p * (1.0 + self.kappa_p)

    @property
    def denominator(self) -> float:
        return self.D * (self.beta_k + self.beta_p) + self.L * self.beta_k * self.beta_p


@dataclass(frozen=True)
class SphereModel:
    """``k_p`` is a bulk rate constant (1/time), unlike the slab's."""

    D: float = 1.0
    k_k: float = 1.0
    k_p: float = 1.0
    kappa_k: float = 10.0
    kappa_p: float = 0.1
    M: float = 1.0
    L: float = 1.0

    def __post_init__(self):
        for name in ("D", "k_k", "k_p", "kappa_k", "kappa_p", "M", "L"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def inverse_length(self) -> float:
        return math.sqrt(self.k_p * (1.0 + self.kappa_p) / self.D)


@dataclass(frozen=True)
class SlabSolution:
    delta: float
    J: float
    YP: Callable[[np.ndarray], np.ndarray]
    Y: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SphereSolution:
    J: float
    nu: float
    beta: float
    inverse_length: float
    u: Callable[[np.ndarray], np.ndarray]
    YP: Callable[[np.ndarray], np.ndarray]
    Y: Callable[[np.ndarray], np.ndarray]


def slab_solution(m: SlabModel, alpha_k=1.0, alpha_p=1.0, alpha_D=1.0, alpha_L=1.0) -> SlabSolution:
    """Linear steady profiles; ``J`` is the diffusive flux ``-D_eff * delta``."""
    d_eff = alpha_D * m.D / alpha_L
    kk = alpha_k * m.k_k
    kp = alpha_p * m.k_p
    bk = kk * (1.0 + m.kappa_k)
    bp = kp * (1.0 + m.kappa_p)
    delta = m.M * (bp * kk * m.kappa_k - bk * kp * m.kappa_p) / (d_eff * (bk + bp) + m.L * bk * bp)
    yp0 = (d_eff * delta / kp + m.kappa_p * m.M) / (1.0 + m.kappa_p)

    def YP(xi):
        return yp0 + delta * np.asarray(xi, dtype=float)

    def Y(xi):
        return m.M - YP(xi)

    return SlabSolution(delta, -d_eff * delta, YP, Y)


def slab_flux_controls(m: SlabModel) -> dict[str, float]:
    den = m.denominator
    bb = m.L * m.beta_k * m.beta_p
    return {
        "k": m.D * m.beta_p / den,
        "p": m.D * m.beta_k / den,
        "D": bb / den,
        "L": -bb / den,
    }


def slab_conc_controls(m: SlabModel) -> dict[str, float]:
    """Controls on ``YP(L) - YP(0) = L * delta``."""
    den = m.denominator
    db = m.D * (m.beta_k + m.beta_p)
    return {
        "k": m.D * m.beta_p / den,
        "p": m.D * m.beta_k / den,
        "D": -db / den,
        "L": db / den,
    }


def sphere_solution(m: SphereModel, alpha_k=1.0, alpha_p=1.0, alpha_D=1.0, alpha_L=1.0) -> SphereSolution:
    d_eff = alpha_D * m.D / alpha_L
    gamma = alpha_L * math.sqrt(alpha_p * m.k_p * (1.0 + m.kappa_p) / (alpha_D * m.D))
    x = gamma * m.L
    g = xcoth_minus_one(x)
    kk = alpha_k * m.k_k
    nu = kk * m.M * (m.kappa_p - m.kappa_k) / (1.0 + m.kappa_p)
    beta = kk * (1.0 + m.kappa_k) / d_eff * m.L / g
    J = nu / (1.0 + beta)
    L = m.L
    # u(xi) = -J (1+kappa_p)/D_eff * L^2/(x cosh x - sinh x) * sinh(gamma xi)/xi
    amp = -J * (1.0 + m.kappa_p) / d_eff * L * L / g

    inv_sinh_x = 2.0 * math.exp(-x) / (1.0 - math.exp(-2.0 * x)) if x > 30.0 else 1.0 / math.sinh(x)

    def u(xi):
        xi = np.asarray(xi, dtype=float)
        out = np.empty_like(xi)
        for idx, r in np.ndenumerate(xi):
            if gamma * r < 1e-4:
                # removable singularity: sinh(gamma r)/r = gamma (1 + (gamma r)^2/6 + ...)
                out[idx] = amp * gamma * (1.0 + (gamma * r) ** 2 / 6.0) * inv_sinh_x
            else:
                out[idx] = amp * sinh_ratio(gamma * r, x) / r
        return out if out.ndim else float(out)

    def YP(xi):
        return (m.kappa_p * m.M + u(xi)) / (1.0 + m.kappa_p)

    def Y(xi):
        return (m.M - u(xi)) / (1.0 + m.kappa_p)

    return SphereSolution(J, nu, beta, gamma, u, YP, Y)


def sphere_flux_controls(m: SphereModel) -> dict[str, float]:
    x = m.inverse_length * m.L
    beta = sphere_solution(m).beta
    b = beta / (1.0 + beta)
    g = xcoth_minus_one(x)  # x coth x - 1
    q = one_minus_x2_csch2(x)  # 1 - x^2 (coth^2 x - 1)
    return {
        "k": 1.0 / (1.0 + beta),
        "D": 0.5 * b * (g - q) / g,
        "p": 0.5 * b * (g + q) / g,
        "L": b * q / g,
    }


def sphere_phi(x: float) -> float:
    # x^2/(x coth x - 1) - (x/2) coth(x/2), both terms -> finite as x -> 0
    return x * x / xcoth_minus_one(x) - (1.0 + xcoth_minus_one(0.5 * x))


def sphere_conc_controls(m: SphereModel) -> dict[str, float]:
    """Controls on ``YP(L/2)``."""
    sol = sphere_solution(m)
    uh = float(sol.u(0.5 * m.L))
    mu = uh / (m.kappa_p * m.M + uh)
    phi = sphere_phi(m.inverse_length * m.L)
    cj = sphere_flux_controls(m)
    return {
        "k": mu * cj["k"],
        "D": mu * (cj["D"] + 0.5 * phi - 1.0),
        "p": mu * (cj["p"] - 0.5 * phi),
        "L": mu * (cj["L"] - phi + 1.0),
    }
