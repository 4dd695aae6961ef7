"""Physical constants, derived coefficients and the non-dimensional unit system.

Single source of truth for every other module.  Internally the whole package
works in non-dimensional units: the satellite semi-major axis is the unit of
distance and the time unit makes the satellite orbital period equal to 2*pi
(so the two-body mean motion is 1 and the Delaunay action L = 1).

Defaults reproduce the published model for the Galileo constellation
(a = 29600 km).  Two lunar-coupling configurations are shipped, see
``LUNAR_CAL_BOUNDARY`` below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

DAY_S = 86400.0

# Calibration of the lunar coupling alpha^3*rho1 that reproduces the published
# circular-orbit boundary energies E1/E2 and the averaged-model thresholds
# Gamma1/Gamma2, E1_AV/E2_AV to machine precision.  The plain printed constants
# (lunar_cal = 1, the default) reproduce the published dynamical quantities
# (double-resonance energy, period window, tangency table) instead.  The two
# published data sets are mutually inconsistent at the 0.45% level of the lunar
# coupling; no single value satisfies both.  See README.
LUNAR_CAL_BOUNDARY = 0.9955273023357

#: Giacaglia obliquity functions U_2^{m,s} at the default obliquity, keyed by
#: (m, s).  These six-decimal values are canonical for the default model; the
#: closed forms in :func:`giacaglia_closed_form` reproduce them to ~1e-6.
GIACAGLIA_DEFAULT = {
    (0, 0): 0.762646, (0, -1): 0.364961, (0, 1): 0.364961,
    (0, -2): 0.039558, (0, 2): 0.039558,
    (1, 0): 0.547442, (1, -1): 0.116974, (1, 1): 0.800502,
    (1, -2): 0.008206, (1, 2): -0.190687,
    (2, 0): 0.237353, (2, -1): 0.032826, (2, 1): 0.762750,
    (2, -2): 0.001702, (2, 2): 0.919179,
}

EPS_DEFAULT_DEG = 23.44


def giacaglia_closed_form(eps_rad: float) -> dict[tuple[int, int], float]:
    """U_2^{m,s}(eps) from the C = cos(eps/2), S = sin(eps/2) closed forms."""
    C, S = math.cos(eps_rad / 2.0), math.sin(eps_rad / 2.0)
    return {
        (0, 0): 1 - 6 * C**2 + 6 * C**4,
        (0, -1): -2 * C / S * (2 * C**4 - 3 * C**2 + 1),
        (0, 1): -2 * C * S * (1 - 2 * C**2),
        (0, -2): C**2 / S**2 * (C**2 - 1) ** 2,
        (0, 2): C**2 * S**2,
        (1, 0): -3 * C / S * (2 * C**4 - 3 * C**2 + 1),
        (1, -1): (4 * C**6 - 9 * C**4 + 6 * C**2 - 1) / S**2,
        (1, 1): C**2 * (4 * C**2 - 3),
        (1, -2): -C / S**3 * (C**2 - 1) ** 3,
        (1, 2): -(C**3) * S,
        (2, 0): 6 * C**2 / S**2 * (C**2 - 1) ** 2,
        (2, -1): -4 * C / S**3 * (C**2 - 1) ** 3,
        (2, 1): -4 * C**3 / S * (C**2 - 1),
        (2, -2): (C**2 - 1) ** 4 / S**4,
        (2, 2): C**4,
    }


# Raw inputs (km, s, rad, days).  Every entry may be overridden by config file.
RAW_DEFAULTS = {
    "mu": 398600.44,        # Earth gravitational parameter [km^3/s^2]
    "mu_M": 4902.87,        # Moon gravitational parameter [km^3/s^2]
    "a_M": 384400.0,        # Moon semi-major axis [km]
    "e_M": 0.0549006,       # Moon eccentricity
    "J2": 1.08e-3,          # second zonal harmonic
    "R_E": 6378.14,         # Earth equatorial radius [km]
    "eps_deg": 23.44,       # obliquity of the ecliptic [deg]
    "a_sat": 29600.0,       # satellite semi-major axis [km]
    "T_saros": 6585.321347, # lunar-node period [days]
    "lunar_cal": 1.0,       # lunar coupling calibration (see LUNAR_CAL_BOUNDARY)
}


class ConfigError(ValueError):
    """Bad configuration input (unknown key, non-positive constant, ...)."""


@dataclass(frozen=True)
class ModelParams:
    """All constants of the model in both physical and non-dimensional form.

    Immutable after construction; safe to share across threads/processes.
    """

    # physical inputs
    mu: float
    mu_M: float
    a_M: float
    e_M: float
    J2: float
    R_E: float
    eps: float          # obliquity [rad]
    a_sat: float
    T_saros: float      # [days]
    lunar_cal: float

    # derived, non-dimensional
    L: float
    alpha: float
    rho0: float
    rho1: float
    n_OmegaM: float
    time_unit_s: float  # seconds per non-dimensional time unit

    # Giacaglia table and harmonic coefficient vectors (m = 0, 1, 2)
    U: dict = field(repr=False, default_factory=dict)
    c_hat: tuple = (0.5, 1.0 / 3.0, -1.0 / 12.0)
    f0: tuple = ()
    fplus: tuple = ()    # complex f_m^+; f_m^- is its conjugate

    @property
    def fminus(self) -> tuple:
        return tuple(np.conj(f) for f in self.fplus)

    @property
    def glun(self) -> float:
        """Effective lunar coupling alpha^3 * rho1 * lunar_cal."""
        return self.lunar_cal * self.alpha**3 * self.rho1

    def with_lunar_cal(self, cal: float) -> "ModelParams":
        return replace(self, lunar_cal=cal)

    def pack(self, i_M: float = 0.0) -> np.ndarray:
        """Flat float64 parameter vector consumed by the numba kernels."""
        p = np.empty(15)
        p[0] = self.L
        p[1] = self.rho0
        p[2] = self.glun
        p[3] = self.n_OmegaM
        p[4:7] = self.f0
        p[7] = self.fplus[0].real
        p[8] = self.fplus[0].imag
        p[9] = self.fplus[1].real
        p[10] = self.fplus[1].imag
        p[11] = self.fplus[2].real
        p[12] = self.fplus[2].imag
        p[13] = self.lunar_cal * self.rho1  # rho1 including calibration
        p[14] = i_M
        return p

    def as_dict(self) -> dict:
        return {
            "mu": self.mu, "mu_M": self.mu_M, "a_M": self.a_M, "e_M": self.e_M,
            "J2": self.J2, "R_E": self.R_E, "eps_deg": math.degrees(self.eps),
            "a_sat": self.a_sat, "T_saros": self.T_saros,
            "lunar_cal": self.lunar_cal, "L": self.L, "alpha": self.alpha,
            "rho0": self.rho0, "rho1": self.rho1, "n_OmegaM": self.n_OmegaM,
            "time_unit_s": self.time_unit_s,
        }


def nondimensionalize(raw: dict | None = None) -> ModelParams:
    """Build ModelParams from raw physical constants (km / s / deg / days).

    Distance unit = a_sat, time unit chosen so the satellite orbital period is
    2*pi.  With the defaults this makes L = 1 exactly.
    """
    r = dict(RAW_DEFAULTS)
    if raw:
        unknown = set(raw) - set(RAW_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown constant(s): {sorted(unknown)}")
        r.update(raw)

    for key in ("mu", "mu_M", "a_M", "J2", "R_E", "a_sat", "T_saros"):
        if not r[key] > 0:
            raise ConfigError(f"{key} must be positive, got {r[key]!r}")
    if not r["a_sat"] > r["R_E"]:
        raise ConfigError("a_sat must exceed R_E")
    if not 0 <= r["e_M"] < 1:
        raise ConfigError("e_M must lie in [0, 1)")

    a = r["a_sat"]
    n_sat = math.sqrt(r["mu"] / a**3)           # [rad/s]
    time_unit = 1.0 / n_sat                     # nd time unit in seconds
    eps = math.radians(r["eps_deg"])

    alpha = a / r["a_M"]
    rho0 = r["J2"] * (r["R_E"] / a) ** 2        # mu_nd^4 J2 R_nd^2 with mu_nd = 1
    rho1 = (r["mu_M"] / r["mu"]) * (1.0 - r["e_M"] ** 2) ** -1.5
    n_OmegaM = 2.0 * math.pi * time_unit / (r["T_saros"] * DAY_S)

    if r["eps_deg"] == EPS_DEFAULT_DEG:
        U = dict(GIACAGLIA_DEFAULT)
    else:
        U = giacaglia_closed_form(eps)

    c_hat = (0.5, 1.0 / 3.0, -1.0 / 12.0)
    f0 = tuple(c_hat[m] * U[(m, 0)] for m in range(3))
    fplus = tuple(
        0.5 * c_hat[m] * complex(U[(m, 1)] - U[(m, -1)], -(U[(m, 1)] + U[(m, -1)]))
        for m in range(3)
    )

    return ModelParams(
        mu=r["mu"], mu_M=r["mu_M"], a_M=r["a_M"], e_M=r["e_M"], J2=r["J2"],
        R_E=r["R_E"], eps=eps, a_sat=a, T_saros=r["T_saros"],
        lunar_cal=r["lunar_cal"],
        L=1.0, alpha=alpha, rho0=rho0, rho1=rho1, n_OmegaM=n_OmegaM,
        time_unit_s=time_unit, U=U, c_hat=c_hat, f0=f0, fplus=fplus,
    )


def dimensionalize(params: ModelParams) -> dict:
    """Invert the non-dimensionalization back to raw physical constants."""
    return {
        "mu": params.mu, "mu_M": params.mu_M, "a_M": params.a_M,
        "e_M": params.e_M, "J2": params.J2, "R_E": params.R_E,
        "eps_deg": math.degrees(params.eps), "a_sat": params.a_sat,
        "T_saros": params.T_saros, "lunar_cal": params.lunar_cal,
    }


def load_config(path: str) -> dict:
    """Parse a flat ``name = value`` config file (one pair per line, # comments)."""
    out: dict[str, float] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'name = value'")
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in RAW_DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown constant {key!r}")
            try:
                out[key] = float(val.strip())
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}") from exc
    return out


def default_params(lunar_cal: float = 1.0) -> ModelParams:
    if lunar_cal == 1.0:
        return nondimensionalize()
    return nondimensionalize({"lunar_cal": lunar_cal})


def boundary_params() -> ModelParams:
    """Parameters calibrated to the published boundary/averaged-model values."""
    return default_params(LUNAR_CAL_BOUNDARY)
