"""Coordinate chain: Delaunay <-> slow-fast <-> Poincare, osculating elements.

Angles are canonicalized to [0, 2pi).  The half-angle branch of the Poincare
chart is fixed by atan2(eta, xi); at the circular set xi = eta = 0 the inverse
is undefined in x and we return x = 0 with a flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi

# cos(i) at the prograde/retrograde 2g+h resonance
COS_I_PROGRADE = (1.0 + math.sqrt(21.0)) / 10.0
COS_I_RETROGRADE = (1.0 - math.sqrt(21.0)) / 10.0
#: slope of the prograde resonance line Gamma = m * y
RESONANCE_SLOPE = (-4.0 + math.sqrt(21.0)) / 5.0


def wrap_angle(a: float) -> float:
    a = math.fmod(a, TWO_PI)
    return a + TWO_PI if a < 0.0 else a


@dataclass(frozen=True)
class DelaunayState:
    L: float
    G: float
    H: float
    l: float
    g: float
    h: float

    def __post_init__(self):
        if not 0.0 < self.G <= self.L:
            raise ValueError(f"need 0 < G <= L, got G={self.G}, L={self.L}")
        if abs(self.H) > self.G * (1.0 + 1e-14):
            raise ValueError(f"need |H| <= G, got H={self.H}, G={self.G}")

    @property
    def e(self) -> float:
        return math.sqrt(max(0.0, 1.0 - (self.G / self.L) ** 2))

    @property
    def inc(self) -> float:
        return math.acos(min(1.0, max(-1.0, self.H / self.G)))


@dataclass(frozen=True)
class SlowFastState:
    y: float
    Gam: float
    x: float
    h: float

    def __post_init__(self):
        if self.y <= 0.0:
            raise ValueError("y must be positive")


@dataclass(frozen=True)
class PoincareState:
    eta: float
    Gam: float
    xi: float
    h: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.eta, self.Gam, self.xi, self.h)


@dataclass(frozen=True)
class ExtendedState:
    eta: float
    Gam: float
    J: float
    xi: float
    h: float
    OmegaM: float


def delaunay_to_slowfast(d: DelaunayState) -> SlowFastState:
    """x = 2g + h, y = G/2, Gamma = H - G/2."""
    return SlowFastState(y=0.5 * d.G, Gam=d.H - 0.5 * d.G,
                         x=wrap_angle(2.0 * d.g + d.h), h=wrap_angle(d.h))


def slowfast_to_delaunay(s: SlowFastState, L: float, l: float = 0.0) -> DelaunayState:
    G = 2.0 * s.y
    return DelaunayState(L=L, G=G, H=s.Gam + 0.5 * G, l=wrap_angle(l),
                         g=wrap_angle(0.5 * (s.x - s.h)), h=wrap_angle(s.h))


def slowfast_to_poincare(s: SlowFastState, L: float) -> PoincareState:
    """xi = sqrt(2L - 4y) cos(x/2), eta = sqrt(2L - 4y) sin(x/2)."""
    r2 = 2.0 * L - 4.0 * s.y
    if r2 < 0.0:
        raise ValueError(f"y = {s.y} exceeds L/2 = {L / 2}")
    r = math.sqrt(max(0.0, r2))
    return PoincareState(eta=r * math.sin(0.5 * s.x), Gam=s.Gam,
                         xi=r * math.cos(0.5 * s.x), h=wrap_angle(s.h))


def poincare_to_slowfast(p: PoincareState, L: float) -> tuple[SlowFastState, bool]:
    """Inverse chart.  Returns (state, on_circular_set).

    On the circular set (xi = eta = 0) x is undefined; x = 0 by convention and
    the flag is True.
    """
    M = p.xi * p.xi + p.eta * p.eta
    y = 0.25 * (2.0 * L - M)
    circ = (M == 0.0)
    x = 0.0 if circ else wrap_angle(2.0 * math.atan2(p.eta, p.xi))
    return SlowFastState(y=y, Gam=p.Gam, x=x, h=p.h), circ


def osculating_elements(p: PoincareState, L: float) -> tuple[float, float]:
    """(eccentricity, inclination [rad]) of a Poincare-chart state."""
    M = p.xi * p.xi + p.eta * p.eta
    if M >= 2.0 * L:
        raise ValueError("unphysical state: e >= 1")
    G = 0.5 * (2.0 * L - M)
    H = p.Gam + 0.5 * G
    if abs(H) > G:
        raise ValueError(f"|H| = {abs(H)} > G = {G}")
    e = math.sqrt(max(0.0, 1.0 - (G / L) ** 2))
    return e, math.acos(H / G)


def eccentricity_from_M(M: float, L: float) -> float:
    """e from the Poincare radius M = xi^2 + eta^2 = 2L(1 - sqrt(1 - e^2))."""
    G = 0.5 * (2.0 * L - M)
    return math.sqrt(max(0.0, 1.0 - (G / L) ** 2))


def inclination_from(M: float, Gam: float, L: float) -> float:
    G = 0.5 * (2.0 * L - M)
    return math.acos(min(1.0, max(-1.0, (Gam + 0.5 * G) / G)))


def i_star(prograde: bool = True) -> float:
    """Resonant inclination [rad]: 56.06 deg prograde, 110.99 deg retrograde."""
    return math.acos(COS_I_PROGRADE if prograde else COS_I_RETROGRADE)
