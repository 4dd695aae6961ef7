"""The Hamiltonian hierarchy: H0, the coplanar perturbation, its h-average,
and the first Moon-inclination harmonic R1+/-.

Production evaluations use the regular (xi, eta) form; the action-angle
(y, x) form is implemented independently for cross-validation (it is singular
at circular orbits).  All derivatives are analytic; finite-difference checks
live in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .constants import ModelParams


class DomainError(ValueError):
    """State outside the admissible region (e >= 1 or negative sqrt argument)."""


def kaula_inclination(i_M: float) -> tuple[float, float, float]:
    """The three s-harmonic inclination weights of the lunar expansion.

    (-1/2 + 3/4 sin^2 i, -3/2 sin i cos i, 3/2 sin^2 i) for s = 0, 1, 2.
    """
    s, c = math.sin(i_M), math.cos(i_M)
    return (-0.5 + 0.75 * s * s, -1.5 * s * c, 1.5 * s * s)


def _check(eta, Gam, xi, L):
    M = xi * xi + eta * eta
    if M >= 2.0 * L:
        raise DomainError(f"xi^2 + eta^2 = {M} >= 2L")
    if 2.0 * L - M - 4.0 * Gam < 0.0 or 6.0 * L - 3.0 * M + 4.0 * Gam < 0.0:
        raise DomainError("negative square-root argument in the m = 1 block")


def eval_H0(eta: float, Gam: float, xi: float, params: ModelParams) -> float:
    """Oblateness Hamiltonian H0 in Poincare variables."""
    L = params.L
    M = xi * xi + eta * eta
    if M >= 2.0 * L:
        raise DomainError(f"xi^2 + eta^2 = {M} >= 2L")
    X = 2.0 * L - M
    return (0.5 * params.rho0 / L**3
            * (X * X - 24.0 * X * Gam - 48.0 * Gam * Gam) / X**5)


def eval_H0_slowfast(y: float, Gam: float, params: ModelParams) -> float:
    """H0 in slow-fast actions: rho0 (y^2 - 6 y G - 3 G^2) / (128 L^3 y^5)."""
    if y <= 0.0:
        raise DomainError("y must be positive")
    return (params.rho0 * (y * y - 6.0 * y * Gam - 3.0 * Gam * Gam)
            / (128.0 * params.L**3 * y**5))


def eval_Hcp1(eta, Gam, xi, h, params: ModelParams) -> float:
    """Lunar coplanar perturbation (without the alpha^3 factor)."""
    _check(eta, Gam, xi, params.L)
    p = params.pack()
    full = K.hcp(eta, Gam, xi, h, p)
    if math.isnan(full):
        raise DomainError("outside domain")
    h0 = eval_H0(eta, Gam, xi, params)
    a3 = params.lunar_cal * params.alpha**3
    return (full - h0) / a3


def eval_Hcp(eta, Gam, xi, h, params: ModelParams) -> float:
    """Coplanar Hamiltonian H_CP = H0 + alpha^3 * Hcp1."""
    _check(eta, Gam, xi, params.L)
    v = K.hcp(eta, Gam, xi, h, params.pack())
    if math.isnan(v):
        raise DomainError("outside domain")
    return v


def grad_Hcp(eta, Gam, xi, h, params: ModelParams) -> np.ndarray:
    """Analytic gradient (d_eta, d_Gam, d_xi, d_h) of H_CP."""
    _check(eta, Gam, xi, params.L)
    out = np.empty(5)
    if K.hcp_grad(eta, Gam, xi, h, params.pack(), out) != 0:
        raise DomainError("outside domain")
    return out[1:5]


def hess_Hcp(eta, Gam, xi, h, params: ModelParams) -> np.ndarray:
    """Analytic 4x4 Hessian of H_CP wrt (eta, Gamma, xi, h)."""
    _check(eta, Gam, xi, params.L)
    g = np.empty(4)
    H = np.empty((4, 4))
    if K.hcp_hess(eta, Gam, xi, h, params.pack(), g, H) != 0:
        raise DomainError("outside domain")
    return H


def eval_Hav(eta, Gam, xi, params: ModelParams) -> float:
    """h-averaged Hamiltonian.

    Only two of the harmonic blocks survive the average: the m = 0 Hansen
    line and the m = 1 contribution whose node multiple (1 - m) vanishes.
    """
    _check(eta, Gam, xi, params.L)
    L = params.L
    M = xi * xi + eta * eta
    X = 2.0 * L - M
    A = X - 4.0 * Gam
    B = 3.0 * X + 4.0 * Gam
    V = X + 2.0 * L
    R = X * X - 24.0 * X * Gam - 48.0 * Gam * Gam
    Q = 8.0 * L * L + 12.0 * L * M - 3.0 * M * M
    g2 = 1.0 / (L * L * X * X)
    D01 = (1.0 / 128.0) * g2 * R
    D10 = (15.0 / 64.0) * g2 * math.sqrt(A) * B * math.sqrt(B) * V
    u = 0.5 * (xi * xi - eta * eta)
    lun = params.f0[0] * D01 * Q + params.f0[1] * D10 * u
    return eval_H0(eta, Gam, xi, params) + params.glun / (L * L) * lun


def eval_R1pm(eta, Gam, xi, h, params: ModelParams) -> tuple[complex, complex]:
    """First Moon-inclination harmonic amplitudes (R1+, R1-); R1- = conj(R1+).

    R1(.., Omega_M) = e^{i Omega_M} R1+ + e^{-i Omega_M} R1-.
    """
    _check(eta, Gam, xi, params.L)
    re, im = K.r1plus(eta, Gam, xi, h, params.pack())
    if math.isnan(re):
        raise DomainError("outside domain")
    rp = complex(re, im)
    return rp, rp.conjugate()


# -------------------------- slow-fast (action-angle) form, for cross-checks

@dataclass(frozen=True)
class _SlowFastTables:
    """Harmonic table of the lunar term in (y, x) variables."""
    params: ModelParams

    def D(self, m: int, pp: int, y: float, Gam: float) -> float:
        L = self.params.L
        iLy2 = 1.0 / (L * y) ** 2
        pm = (y - Gam) * (3.0 * y + Gam)
        lo = (L - 2.0 * y) * (L + 2.0 * y)
        han = 5.0 * L * L - 12.0 * y * y
        if m == 0:
            if pp == 1:
                return (1.0 / 32.0) * iLy2 * (y * y - 6.0 * Gam * y - 3.0 * Gam * Gam) * han
            return -(15.0 / 64.0) * iLy2 * pm * lo
        if m == 1:
            root = math.sqrt(pm)
            if pp == 0:
                return (15.0 / 32.0) * iLy2 * root * (3.0 * y + Gam) * lo
            if pp == 1:
                return -(3.0 / 16.0) * iLy2 * root * (Gam + y) * han
            return -(15.0 / 32.0) * iLy2 * root * (y - Gam) * lo
        if pp == 0:
            return (15.0 / 32.0) * iLy2 * (3.0 * y + Gam) ** 2 * lo
        if pp == 1:
            return (3.0 / 16.0) * iLy2 * pm * han
        return (15.0 / 32.0) * iLy2 * (y - Gam) ** 2 * lo


def eval_Hcp1_slowfast(y, Gam, x, h, params: ModelParams) -> float:
    """Lunar coplanar perturbation in slow-fast variables (no alpha^3).

    Independent of the Poincare-form evaluation; singular at y = L/2 (e = 0).
    """
    tab = _SlowFastTables(params)
    acc = 0.0
    for m in range(3):
        for pp in range(3):
            psi = (1 - pp) * x - (1 - pp - m) * h
            acc += params.f0[m] * tab.D(m, pp, y, Gam) * math.cos(psi)
    return params.lunar_cal * params.rho1 / params.L**2 * acc


def hav_plane_hessian(Gam: float, params: ModelParams) -> tuple[float, float]:
    """(d^2/dxi^2, d^2/deta^2) of H_AV at the circular point (xi = eta = 0)."""
    L = params.L
    X = 2.0 * L
    A = X - 4.0 * Gam
    B = 3.0 * X + 4.0 * Gam
    V = X + 2.0 * L
    if A <= 0 or B <= 0:
        raise DomainError("Gamma outside (−3L/2, L/2)")
    rho0 = params.rho0
    # dH0/dM at M = 0
    h0M = (0.5 * rho0 / L**3) * (3.0 / X**4
                                 - 96.0 * Gam / X**5
                                 - 240.0 * Gam * Gam / X**6)
    # d(D01*Q)/dM at M = 0
    g2 = 1.0 / (L * L * X * X)
    R = X * X - 24.0 * X * Gam - 48.0 * Gam * Gam
    Q0 = 8.0 * L * L
    QM = 12.0 * L
    RM = -2.0 * X + 24.0 * Gam
    g2M = 2.0 / (L * L * X * X * X)
    dD01Q = (1.0 / 128.0) * (g2M * R * Q0 + g2 * (RM * Q0 + R * QM))
    D10 = (15.0 / 64.0) * g2 * math.sqrt(A) * B * math.sqrt(B) * V
    cL = params.glun / (L * L)
    P = 2.0 * (h0M + cL * params.f0[0] * dD01Q)
    F = cL * params.f0[1] * D10
    return P + F, P - F
