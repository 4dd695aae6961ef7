"""Circular periodic orbits of the coplanar system, parametrized by energy.

The plane (eta, xi) = (0, 0) is invariant; on it the dynamics reduces to one
degree of freedom in (Gamma, h) and every energy in [E1, E2] carries a closed
orbit winding in h.  This module locates those orbits, computes the physical
period, the monodromy and its transverse eigenstructure, the inner-map
resonance n_OmegaM * T0 = 4*pi, and classifies the circular equilibrium of
the h-averaged model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import _kernels as K
from . import _rkf78 as RK
from .constants import ModelParams
from .coords import RESONANCE_SLOPE
from .dynamics import (FlowSettings, IntegrationError, flow_reparam,
                       variational_flow)
from .hamiltonians import eval_Hav, hav_plane_hessian, eval_Hcp

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PeriodicOrbitRecord:
    E: float
    Gam0: float
    T0: float               # physical period, positive
    lambda_mult: float      # monodromy eigenvalue > 1 (hyperbolic case)
    exponent: float         # log(lambda_mult) / T0
    evec_u: np.ndarray      # unit (eta, xi) eigendirection, unstable
    evec_s: np.ndarray
    kind: str               # 'hyperbolic' | 'elliptic'
    mono_det: float         # determinant of the full monodromy
    i_range: tuple          # osculating inclination range along the orbit [rad]

    def n_T0_over_pi(self, params: ModelParams) -> float:
        return params.n_OmegaM * self.T0 / math.pi


@dataclass(frozen=True)
class AveragedEquilibrium:
    Gam: float
    kind: str               # 'center' | 'saddle' | 'degenerate'
    eigsq: float            # lambda^2 of the linearization at xi = eta = 0


def j_of_e(E: float, params: ModelParams) -> float:
    return -E / params.n_OmegaM


def e_of_j(J: float, params: ModelParams) -> float:
    return -J * params.n_OmegaM


def plane_energy(Gam: float, h: float, params: ModelParams) -> float:
    return eval_Hcp(0.0, Gam, 0.0, h, params)


def energy_bounds(params: ModelParams) -> tuple[float, float]:
    """(E1, E2) = (H_CP(0, 0.49L, 0, pi), H_CP(0, 0, 0, 0))."""
    L = params.L
    return (plane_energy(0.49 * L, math.pi, params),
            plane_energy(0.0, 0.0, params))


def solve_gamma0(E: float, params: ModelParams, tol: float = 1e-14) -> float:
    """Gamma at (h = 0) on the energy level E; bisection bracket then Newton."""
    E1, E2 = energy_bounds(params)
    if not (E1 - 1e-15 <= E <= E2 + 1e-15):
        raise ValueError(f"E = {E} outside [{E1}, {E2}]")
    f = lambda G: plane_energy(G, 0.0, params) - E
    lo, hi = -1e-6, 0.495 * params.L
    Gam = brentq(f, lo, hi, xtol=1e-13, rtol=8.9e-16)
    # Newton polish with the analytic Gamma-derivative
    p = params.pack()
    g = np.empty(5)
    for _ in range(8):
        K.hcp_grad(0.0, Gam, 0.0, 0.0, p, g)
        step = (g[0] - E) / g[2]
        Gam -= step
        if abs(step) <= tol * max(1.0, abs(Gam)):
            return Gam
    raise IntegrationError("Newton refinement of Gamma0 did not converge")


def _orbit_samples(Gam0: float, params: ModelParams, settings: FlowSettings,
                   n_nodes: int = 256):
    """Sample the reduced plane orbit over one forward return (h: 0 -> -2pi)."""
    nodes = np.linspace(0.0, -TWO_PI, n_nodes + 1)
    y = np.ascontiguousarray([0.0, Gam0, 0.0, 0.0, 0.0])
    out = np.empty((n_nodes + 1, 5))
    status = RK.integrate_path(K.rhs_rep, y, nodes, params.pack(),
                               settings.rel_tol, settings.abs_tol,
                               settings.max_step, out)
    if status != RK.OK:
        raise IntegrationError(f"plane-orbit integration failed ({status})")
    return nodes, out


def solve_periodic(E: float, params: ModelParams,
                   settings: FlowSettings = FlowSettings(),
                   check_period: bool = True) -> PeriodicOrbitRecord:
    """Periodic-orbit record at energy E (see module docstring)."""
    L = params.L
    Gam0 = solve_gamma0(E, params)
    nodes, samples = _orbit_samples(Gam0, params, settings)
    Gam_end = samples[-1, 1]
    if abs(Gam_end - Gam0) > 1e-9:
        raise IntegrationError(
            f"plane orbit did not close: |dGamma| = {abs(Gam_end - Gam0)}")
    T0 = samples[-1, 4] / params.n_OmegaM
    if T0 <= 0.0:
        raise IntegrationError("nonpositive period: outside expected regime")

    # period self-check against the Omega-phase integral on a refined pass
    if check_period:
        tight = FlowSettings(abs_tol=min(settings.abs_tol, 1e-13),
                             rel_tol=min(settings.rel_tol, 1e-13))
        y2 = flow_reparam([0.0, Gam0, 0.0, 0.0, 0.0], -TWO_PI, params, tight)
        T0b = y2[4] / params.n_OmegaM
        if abs(T0b - T0) > 1e-10 * max(1.0, T0):
            raise IntegrationError(
                f"period self-check failed: {T0} vs {T0b}")

    # inclination range along the orbit (M = 0 on the plane)
    G = L
    cosi = (samples[:, 1] + 0.5 * G) / G
    inc = np.arccos(np.clip(cosi, -1.0, 1.0))
    i_range = (float(inc.min()), float(inc.max()))

    # monodromy over one physical period
    ts = variational_flow([0.0, Gam0, 0.0, 0.0], np.eye(4), T0, params,
                          settings, kind="physical")
    Mfull = ts.M
    det = float(np.linalg.det(Mfull))
    # transverse (eta, xi) block: rows/cols 0 and 2
    T2 = Mfull[np.ix_([0, 2], [0, 2])]
    tr = T2[0, 0] + T2[1, 1]
    if abs(tr) > 2.0:
        kind = "hyperbolic"
        eigvals, eigvecs = np.linalg.eig(T2)
        order = np.argsort(np.abs(eigvals))
        lam = float(np.real(eigvals[order[1]]))
        vu = np.real(eigvecs[:, order[1]])
        vs = np.real(eigvecs[:, order[0]])
        lam_mult = abs(lam)
        exponent = math.log(lam_mult) / T0
    else:
        kind = "elliptic"
        lam_mult = 1.0
        exponent = 0.0
        vu = np.array([0.0, 1.0])
        vs = np.array([1.0, 0.0])

    def _norm(v):
        v = v / np.linalg.norm(v)
        # deterministic orientation: xi-component >= 0 ((eta, xi) ordering)
        if v[1] < 0.0 or (v[1] == 0.0 and v[0] < 0.0):
            v = -v
        return v

    return PeriodicOrbitRecord(
        E=E, Gam0=Gam0, T0=T0, lambda_mult=lam_mult, exponent=exponent,
        evec_u=_norm(vu), evec_s=_norm(vs), kind=kind, mono_det=det,
        i_range=i_range)


def scan_periodic(E_grid, params: ModelParams,
                  settings: FlowSettings = FlowSettings(),
                  check_period: bool = False):
    """Per-energy records; per-point failures recorded as None, scan continues."""
    records = []
    for E in np.asarray(E_grid, dtype=float):
        try:
            records.append(solve_periodic(float(E), params, settings,
                                          check_period=check_period))
        except (IntegrationError, ValueError):
            records.append(None)
    return records


def period_of_energy(E: float, params: ModelParams,
                     settings: FlowSettings = FlowSettings()) -> float:
    Gam0 = solve_gamma0(E, params)
    y = flow_reparam([0.0, Gam0, 0.0, 0.0, 0.0], -TWO_PI, params, settings)
    return y[4] / params.n_OmegaM


def find_Jres(params: ModelParams, settings: FlowSettings = FlowSettings(),
              E_window: tuple | None = None) -> tuple[float, float]:
    """(J_res, E_res) with n_OmegaM * T0(J_res) = 4*pi, |residual| < 1e-10."""
    if E_window is None:
        E_window = (-2.12e-7, 1.36e-6)
    f = lambda E: params.n_OmegaM * period_of_energy(E, params, settings) - 4.0 * math.pi
    lo, hi = E_window
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0.0:
        raise ValueError("resonance not bracketed in the window")
    E_res = brentq(f, lo, hi, xtol=1e-18, rtol=8.9e-16)
    # verify the bisection converged in the n*T0 residual
    if abs(f(E_res)) > 1e-10:
        raise IntegrationError("resonance refinement stalled")
    return j_of_e(E_res, params), E_res


def classify_averaged(Gam: float, params: ModelParams,
                      tol: float = 0.0) -> AveragedEquilibrium:
    """Character of (xi, eta) = (0, 0) for the h-averaged system at this Gamma."""
    a, b = hav_plane_hessian(Gam, params)
    eigsq = -a * b
    if eigsq > tol:
        kind = "saddle"
    elif eigsq < -tol:
        kind = "center"
    else:
        kind = "degenerate"
    return AveragedEquilibrium(Gam=Gam, kind=kind, eigsq=eigsq)


def find_Gamma12(params: ModelParams) -> tuple[float, float, float, float]:
    """(Gamma1, Gamma2, E1_AV, E2_AV): saddle-window edges of the averaged model."""
    L = params.L
    half_slope = 0.5 * RESONANCE_SLOPE * L

    def disc(G):
        a, b = hav_plane_hessian(G, params)
        return -a * b

    g1 = brentq(disc, 1e-9, half_slope, xtol=1e-13, rtol=8.9e-16)
    g2 = brentq(disc, half_slope, 0.5 * L - 1e-9, xtol=1e-13, rtol=8.9e-16)
    return (g1, g2,
            eval_Hav(0.0, g1, 0.0, params),
            eval_Hav(0.0, g2, 0.0, params))
