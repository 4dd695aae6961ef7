"""Flows of the coplanar system and the Poincare map on {h = 0}.

Two integration routes:

* the h-parametrized flow (dh/ds = 1), where the section condition is met
  exactly at s multiples of 2*pi — the production path for map iteration and
  Melnikov work; the *physical-forward* return map corresponds to s-spans of
  -2*pi because dh/dt < 0 throughout the domain;
* the physical-time flow with scipy DOP853, dense output and root-refined
  section events, used for cross-validation and for trajectories sampled in
  physical time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import _kernels as K
from . import _rkf78 as RK
from .constants import ModelParams
from .hamiltonians import DomainError

TWO_PI = 2.0 * math.pi


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class FlowSettings:
    abs_tol: float = 1e-13
    rel_tol: float = 1e-13
    max_step: float = 0.0          # 0 = unlimited (nd time or rad in h)
    event_tol: float = 1e-13       # |h - target| at accepted section crossings

    def __post_init__(self):
        for t in (self.abs_tol, self.rel_tol):
            if not 0.0 < t < 1e-6:
                raise ValueError("tolerances must lie in (0, 1e-6)")


@dataclass
class TangentState:
    base: np.ndarray     # (eta, Gam, xi, h)
    M: np.ndarray        # 4x4 variational matrix


def vf_physical(state, params: ModelParams) -> np.ndarray:
    """(eta', Gam', xi', h') = (-H_xi, -H_h, H_eta, H_Gam) for H = H_CP."""
    out = np.empty(4)
    y = np.asarray(state, dtype=float)
    K.rhs_phys(0.0, y, out, params.pack())
    if np.any(np.isnan(out)):
        raise DomainError("vector field evaluated outside domain")
    return out


def vf_reparam(state, params: ModelParams, with_omega: bool = False) -> np.ndarray:
    """h-parametrized field: dh/ds = 1, other components divided by dH/dGam.

    With with_omega=True appends the Moon-node phase rate n_OmegaM / dH_Gam.
    Raises if dH/dGam vanishes (reparametrization breakdown).
    """
    g = np.empty(5)
    y = np.asarray(state, dtype=float)
    if K.hcp_grad(y[0], y[1], y[2], y[3], params.pack(), g) != 0:
        raise DomainError("outside domain")
    if g[2] == 0.0:
        raise IntegrationError("dH/dGamma = 0: reparametrization breakdown")
    out = np.array([-g[3] / g[2], -g[4] / g[2], g[1] / g[2], 1.0])
    if with_omega:
        out = np.append(out, params.n_OmegaM / g[2])
    return out


def _c(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def flow_reparam(state, s_span: float, params: ModelParams,
                 settings: FlowSettings = FlowSettings()) -> np.ndarray:
    """Integrate the h-parametrized flow; state = (eta, Gam, xi, h[, Om_acc])."""
    y = _c(np.atleast_1d(np.asarray(state, dtype=float)))
    if y.shape[0] == 4:
        y = np.append(y, 0.0)
    status = RK.integrate(K.rhs_rep, y, 0.0, s_span, params.pack(),
                          settings.rel_tol, settings.abs_tol, settings.max_step)
    if status != RK.OK or np.any(np.isnan(y)):
        raise IntegrationError(f"reparam flow failed (status {status})")
    return y


def flow_physical(state, t_span: float, params: ModelParams,
                  settings: FlowSettings = FlowSettings(),
                  dense: bool = False):
    """Integrate the physical-time flow with scipy DOP853."""
    p = params.pack()

    def rhs(t, y):
        out = np.empty(4)
        K.rhs_phys(t, _c(y), out, p)
        return out

    sol = solve_ivp(rhs, (0.0, t_span), np.asarray(state, dtype=float),
                    method="DOP853", rtol=settings.rel_tol,
                    atol=settings.abs_tol, dense_output=dense)
    if not sol.success:
        raise IntegrationError(sol.message)
    return sol if dense else sol.y[:, -1]


def poincare_map(state, params: ModelParams,
                 settings: FlowSettings = FlowSettings(),
                 n: int = 1, method: str = "reparam",
                 inverse: bool = False) -> np.ndarray:
    """n-th return to {h = 0 mod 2pi} of the physical-forward flow.

    `method="reparam"` integrates h as the independent variable (the section
    is hit exactly); `method="physical"` integrates physical time and refines
    the crossing on the DOP853 dense output to |h - target| < event_tol.
    Physical-forward means h decreasing (dh/dt < 0 on the whole domain).
    """
    y0 = np.asarray(state, dtype=float)
    if method == "reparam":
        span = (TWO_PI if inverse else -TWO_PI) * n
        y = flow_reparam(np.append(y0, 0.0), span, params, settings)
        out = y[:4].copy()
        out[3] = y0[3]          # h returned to its starting value mod 2pi
        return out
    if method != "physical":
        raise ValueError(f"unknown method {method!r}")

    p = params.pack()

    def rhs(t, y):
        out = np.empty(4)
        K.rhs_phys(t, _c(y), out, p)
        return out

    hdot = rhs(0.0, y0)[3]
    if hdot == 0.0:
        raise IntegrationError("h' = 0 on the section")
    sign = -1.0 if inverse else 1.0
    target = y0[3] + sign * math.copysign(TWO_PI * n, hdot)
    # generous time bracket from the instantaneous rate
    t_max = sign * 1.5 * TWO_PI * n / abs(hdot) * 1.2
    ev = lambda t, y: y[3] - target
    ev.terminal = True
    ev.direction = 0.0
    sol = solve_ivp(rhs, (0.0, t_max), y0, method="DOP853",
                    rtol=settings.rel_tol, atol=settings.abs_tol,
                    dense_output=True, events=ev)
    if not sol.success or len(sol.t_events[0]) == 0:
        raise IntegrationError("no section return found")
    t_ev = sol.t_events[0][0]
    # polish on the dense output
    f = lambda t: sol.sol(t)[3] - target
    dt = max(abs(t_ev) * 1e-9, 1e-6)
    a, b = t_ev - dt, t_ev + dt
    if f(a) * f(b) < 0.0:
        t_ev = brentq(f, a, b, xtol=1e-13 / abs(hdot), rtol=8.9e-16)
    y = sol.sol(t_ev)
    if abs(y[3] - target) > settings.event_tol:
        raise IntegrationError(f"event refinement left |h - target| = {abs(y[3]-target)}")
    out = y.copy()
    out[3] = y0[3]
    return out


def poincare_return_time(state, params: ModelParams,
                         settings: FlowSettings = FlowSettings()) -> float:
    """Physical time elapsed over one forward return (positive)."""
    y = flow_reparam(np.append(np.asarray(state, float), 0.0), -TWO_PI,
                     params, settings)
    return y[4] / params.n_OmegaM


def variational_flow(state, M0: np.ndarray, span: float, params: ModelParams,
                     settings: FlowSettings = FlowSettings(),
                     kind: str = "physical") -> TangentState:
    """Joint state + first-variational integration with the analytic Jacobian.

    kind="physical": span is physical time; kind="reparam": span in h.
    """
    y = np.empty(20)
    y[:4] = np.asarray(state, dtype=float)
    y[4:] = np.asarray(M0, dtype=float).reshape(16)
    rhs = K.rhs_phys_var if kind == "physical" else K.rhs_rep_var
    status = RK.integrate(rhs, _c(y), 0.0, span, params.pack(),
                          settings.rel_tol, settings.abs_tol, settings.max_step)
    if status != RK.OK or np.any(np.isnan(y)):
        raise IntegrationError(f"variational flow failed (status {status})")
    return TangentState(base=y[:4].copy(), M=y[4:].reshape(4, 4).copy())


def dpoincare(state, params: ModelParams,
              settings: FlowSettings = FlowSettings(),
              inverse: bool = False) -> np.ndarray:
    """Jacobian of the physical-forward Poincare map at `state` (4x4)."""
    span = TWO_PI if inverse else -TWO_PI
    ts = variational_flow(state, np.eye(4), span, params, settings,
                          kind="reparam")
    return ts.M


def recover_gamma(eta: float, xi: float, E: float, params: ModelParams,
                  Gam_guess: float) -> float:
    """Gamma on the section {h = 0} at energy E, by Newton from Gam_guess."""
    g = K.gamma_recover(eta, xi, E, Gam_guess, params.pack())
    if math.isnan(g):
        raise IntegrationError("energy-level Gamma recovery failed")
    return g


def extended_flow(state6, s_span: float, params: ModelParams, i_M: float,
                  settings: FlowSettings = FlowSettings()) -> np.ndarray:
    """First-order extended flow (eta, Gam, xi, h, Omega_M, J) at inclination i_M."""
    y = _c(np.asarray(state6, dtype=float))
    status = RK.integrate(K.rhs_ext, y, 0.0, s_span, params.pack(i_M),
                          settings.rel_tol, settings.abs_tol, settings.max_step)
    if status != RK.OK or np.any(np.isnan(y)):
        raise IntegrationError(f"extended flow failed (status {status})")
    return y
