"""Stable/unstable manifolds of the circular fixed point of the return map,
homoclinic intersections on the symmetry axes, splitting angles, tangency
scans and eccentricity excursions.

All computations happen on the section {h = h_section} inside one energy
level: points are (xi, eta) with Gamma recovered from the energy.

Two complementary techniques are used:

* `globalize` grows a branch polyline by iterating a fundamental segment
  seeded at `seed_disp` along an eigendirection (output, plots, invariants);
* homoclinic points are located by *axis shooting*: a point of the symmetry
  axis is iterated backward (forward for the stable side) until it passes
  the saddle and exits, and the exit side flips exactly where the axis meets
  the manifold.  The axis coordinate is the root variable, so the location
  is not limited by the stretched seed parametrization of the polyline; this
  resolves in particular the secondary channel, whose orbits approach the
  saddle twice.

The involutions ((xi, eta) -> (xi, -eta) fixing the primary axis {eta = 0},
(xi, eta) -> (-xi, eta) fixing the secondary axis {xi = 0}) make every axis
intersection of W^u a symmetric homoclinic point and give W^s as the mirror
image of W^u.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import _kernels as K
from . import _rkf78 as RK
from .constants import ModelParams
from .dynamics import FlowSettings, IntegrationError, recover_gamma
from .periodic import PeriodicOrbitRecord, solve_periodic

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ManifoldSettings:
    seed_disp: float = 1e-8       # displacement along the eigendirection
    delta_max: float = 1e-3       # maximal spacing of consecutive image points
    iter_depth: int = 60          # polyline map-iteration cap
    guard: float = 0.05           # excludes trivial axis touches near the orbit
    fit_window: int = 4           # points each side for tangent fits
    fit_spacing: float = 2e-4     # target (xi, eta) spacing of fit samples
    r_loose: float = 0.08         # saddle-passage radius of the shooting
    root_dip_max: float = 1e-3    # converged-dip bound separating true roots
    m_max: int = 140              # shooting iteration cap
    sweep_n: int = 240            # axis sweep resolution
    sweep_hi: float = 1.05        # axis sweep upper end
    flow: FlowSettings = field(default_factory=FlowSettings)
    sweep_tol: float = 1e-11      # integrator tolerance during sweeps


@dataclass
class ManifoldBranch:
    E: float
    side: str                     # 'u' | 's'
    sign: int                     # +1 | -1 (seed orientation)
    points: np.ndarray            # (N, 4): xi, eta, Gamma, sigma + depth
    iter_depth: int
    h_section: float = 0.0

    @property
    def xi(self):
        return self.points[:, 0]

    @property
    def eta(self):
        return self.points[:, 1]

    @property
    def Gam(self):
        return self.points[:, 2]

    def eccentricity(self, L: float = 1.0) -> np.ndarray:
        M = self.points[:, 0] ** 2 + self.points[:, 1] ** 2
        G = 0.5 * (2.0 * L - M)
        return np.sqrt(np.maximum(0.0, 1.0 - (G / L) ** 2))


@dataclass
class HomoclinicRecord:
    E: float
    channel: str                  # 'pri' | 'sec'
    coord: float                  # xi0 (pri) or eta0 (sec), positive
    Gam: float
    depth: int                    # returns between the saddle passage and axis
    phi: float = math.nan         # unsigned splitting angle [rad]
    phi_signed: float = math.nan
    e_max: float = math.nan
    i_range: tuple = ()
    h_section: float = 0.0
    # W^u-parametrization of the crossing: seeds a_center + j*delta along the
    # unstable eigendirection mapped `window_depth` returns forward
    window_anchor: tuple | None = None    # (a_center, window_depth)

    @property
    def point(self) -> np.ndarray:
        """Section point (eta, Gam, xi, h)."""
        if self.channel == "pri":
            return np.array([0.0, self.Gam, self.coord, self.h_section])
        return np.array([self.coord, self.Gam, 0.0, self.h_section])


class _Mapper:
    """Fixed-point data and the iterated return map on one energy level."""

    def __init__(self, E: float, params: ModelParams,
                 settings: ManifoldSettings,
                 record: PeriodicOrbitRecord | None = None,
                 h_section: float = 0.0):
        self.E = E
        self.params = params
        self.st = settings
        self.h_section = h_section
        self.p = params.pack()
        if record is None:
            record = solve_periodic(E, params, settings.flow,
                                    check_period=False)
        if record.kind != "hyperbolic":
            raise ValueError(f"orbit at E = {E} is not hyperbolic")
        if h_section != 0.0:
            record = self._shift_record(record, h_section)
        self.record = record
        self.Gam0 = record.Gam0
        self.lam = record.lambda_mult
        self.vu = record.evec_u    # (eta, xi) components
        self.vs = record.evec_s

    def _shift_record(self, rec: PeriodicOrbitRecord, h_section: float):
        """Fixed-point data on the section {h = h_section}."""
        import dataclasses

        from .dynamics import variational_flow
        y = np.ascontiguousarray([0.0, rec.Gam0, 0.0, 0.0, 0.0])
        status = RK.integrate(K.rhs_rep, y, 0.0, -(TWO_PI - h_section), self.p,
                              self.st.flow.rel_tol, self.st.flow.abs_tol, 0.0)
        if status != RK.OK:
            raise IntegrationError("section shift failed")
        ts = variational_flow([0.0, y[1], 0.0, h_section], np.eye(4),
                              -TWO_PI, self.params, self.st.flow,
                              kind="reparam")
        T2 = ts.M[np.ix_([0, 2], [0, 2])]
        eigvals, eigvecs = np.linalg.eig(T2)
        order = np.argsort(np.abs(eigvals))
        lam = abs(float(np.real(eigvals[order[1]])))

        def norm(v):
            v = np.real(v)
            v = v / np.linalg.norm(v)
            if v[1] < 0.0 or (v[1] == 0.0 and v[0] < 0.0):
                v = -v
            return v

        return dataclasses.replace(
            rec, Gam0=float(y[1]), lambda_mult=lam,
            exponent=math.log(lam) / rec.T0,
            evec_u=norm(eigvecs[:, order[1]]),
            evec_s=norm(eigvecs[:, order[0]]))

    # ------------------------------------------------------------- polyline
    def seed(self, sigma: float, side: str, sign: int) -> np.ndarray:
        """Section point (eta, Gam, xi) on the fundamental segment."""
        v = self.vu if side == "u" else self.vs
        d = sign * self.st.seed_disp * self.lam ** (sigma % 1.0)
        eta = d * v[0]
        xi = d * v[1]
        Gam = K.gamma_recover(eta, xi, self.E, self.Gam0, self.p)
        if math.isnan(Gam):
            raise IntegrationError("seed Gamma recovery failed")
        return np.array([eta, Gam, xi])

    def map_k(self, pt3, k: int, side: str) -> np.ndarray:
        span = TWO_PI if side == "s" else -TWO_PI
        e, G, x, status = K.map_k(pt3[0], pt3[1], pt3[2], self.h_section,
                                  k, span, self.p, self.st.flow.rel_tol,
                                  self.st.flow.abs_tol)
        if status != 0:
            raise IntegrationError("map iteration failed")
        return np.array([e, G, x])

    def at(self, sigma: float, side: str, sign: int) -> np.ndarray:
        """Image of the fundamental seed after floor(sigma) iterations."""
        return self.map_k(self.seed(sigma, side, sign), int(math.floor(sigma)),
                          side)

    # ------------------------------------------------------------- shooting
    def axis_point(self, c: float, channel: str) -> np.ndarray:
        """(eta, Gam, xi) on the channel axis at energy E; NaN Gam on failure."""
        eta, xi = (0.0, c) if channel == "pri" else (c, 0.0)
        Gam = K.gamma_recover(eta, xi, self.E, self.Gam0, self.p)
        return np.array([eta, Gam, xi])

    def classify(self, c: float, channel: str, side: str = "u",
                 tol: float | None = None):
        """(exit side, m_near, d_near) of the shooting from axis point c."""
        pt = self.axis_point(c, channel)
        if math.isnan(pt[1]):
            return 0, -1, math.inf
        span = TWO_PI if side == "u" else -TWO_PI
        va, vb = (self.vu, self.vs) if side == "u" else (self.vs, self.vu)
        tol = self.st.sweep_tol if tol is None else tol
        s, m_near, d_near = K.shoot_classify(
            pt[0], pt[1], pt[2], self.h_section, span, self.p, tol, tol,
            va[0], va[1], vb[0], vb[1], self.st.r_loose, self.lam,
            self.st.m_max)
        return s, m_near, d_near

    def seed_like(self, a: float, v: np.ndarray) -> np.ndarray:
        """Energy-level point at displacement a along the direction v."""
        eta = a * v[0]
        xi = a * v[1]
        Gam = K.gamma_recover(eta, xi, self.E, self.Gam0, self.p)
        if math.isnan(Gam):
            raise IntegrationError("window Gamma recovery failed")
        return np.array([eta, Gam, xi])


def globalize(E: float, params: ModelParams,
              side: str = "u", sign: int = -1,
              settings: ManifoldSettings = ManifoldSettings(),
              record: PeriodicOrbitRecord | None = None,
              h_section: float = 0.0,
              stop=None) -> ManifoldBranch:
    """Grow one branch of W^u/W^s by iterating the fundamental segment.

    `stop(level_points) -> bool` (rows (xi, eta, Gam)) may end the growth
    early.  Polyline rows are (xi, eta, Gamma, sigma + depth).
    """
    mp = _Mapper(E, params, settings, record, h_section)
    n0 = 12
    sigmas = list(np.linspace(0.0, 1.0, n0, endpoint=False))
    pts = [mp.seed(s, side, sign) for s in sigmas]
    rows = [np.array([p[2], p[0], p[1], s]) for p, s in zip(pts, sigmas)]
    level_pts = list(pts)
    level_sig = list(sigmas)
    max_pts = 40000
    depth = 0
    for depth in range(1, settings.iter_depth + 1):
        nxt = [mp.map_k(p, 1, side) for p in level_pts]
        nsig = list(level_sig)
        i = 0
        while i < len(nxt) - 1 and len(rows) + len(nxt) < max_pts:
            d = math.hypot(nxt[i][2] - nxt[i + 1][2],
                           nxt[i][0] - nxt[i + 1][0])
            if d > settings.delta_max and (nsig[i + 1] - nsig[i]) > 1e-7:
                smid = 0.5 * (nsig[i] + nsig[i + 1])
                pm = mp.map_k(mp.seed(smid, side, sign), depth, side)
                nxt.insert(i + 1, pm)
                nsig.insert(i + 1, smid)
            else:
                i += 1
        for p, s in zip(nxt, nsig):
            rows.append(np.array([p[2], p[0], p[1], s + depth]))
        level_pts, level_sig = nxt, nsig
        if stop is not None and stop(np.array([[p[2], p[0], p[1]]
                                               for p in nxt])):
            break
        if len(rows) >= max_pts:
            break
    return ManifoldBranch(E=E, side=side, sign=sign,
                          points=np.array(rows), iter_depth=depth,
                          h_section=h_section)


def axis_crossings(E: float, params: ModelParams, channel: str,
                   settings: ManifoldSettings = ManifoldSettings(),
                   record: PeriodicOrbitRecord | None = None,
                   h_section: float = 0.0,
                   c_window: tuple | None = None,
                   n_sweep: int | None = None,
                   side: str = "u"):
    """All W^u (or W^s) intersections with the channel axis, by shooting.

    Returns a list of (c_root, m_near) sorted by m_near then by c; m_near is
    the number of returns to the closest saddle passage (branch order).
    """
    mp = _Mapper(E, params, settings, record, h_section)
    lo, hi = c_window if c_window is not None else (settings.guard,
                                                    settings.sweep_hi)
    n = n_sweep if n_sweep is not None else settings.sweep_n
    cs = list(np.linspace(lo, hi, n))
    sides = [mp.classify(float(c), channel, side)[0] for c in cs]

    # the classified zone shrinks towards a crossing asymmetrically, so a
    # flip can hide inside a gap of unclassified cells between two runs of
    # the same sign; refine such gaps recursively on a limited budget
    budget = [max(200, n)]

    def refine_gap(c0, s0, c1, s1, depth):
        # invariant: s0 != s1, at least one of them nonzero
        if depth <= 0 or budget[0] <= 0:
            return []
        pts = [(c0, s0)]
        for c in np.linspace(c0, c1, 6)[1:-1]:
            budget[0] -= 1
            pts.append((float(c), mp.classify(float(c), channel, side)[0]))
        pts.append((c1, s1))
        out = []
        for (ca, sa), (cb, sb) in zip(pts[:-1], pts[1:]):
            if sa != 0 and sb != 0 and sa != sb:
                out.append((ca, cb))
            elif sa != sb:
                out.extend(refine_gap(ca, sa, cb, sb, depth - 1))
        return out

    brackets = []
    for i in range(len(cs) - 1):
        s0, s1 = sides[i], sides[i + 1]
        if s0 != 0 and s1 != 0 and s0 != s1:
            brackets.append((cs[i], cs[i + 1]))
        elif (s0 != 0 or s1 != 0) and s0 != s1:
            brackets.extend(refine_gap(cs[i], s0, cs[i + 1], s1, 3))

    roots = []
    for a, b in brackets:
        c_root = _bisect_side(mp, channel, side, a, b)
        if c_root is None:
            continue
        _, m, d = mp.classify(c_root, channel, side,
                              tol=settings.flow.rel_tol)
        # a true manifold crossing has its saddle-passage distance collapse
        # as the bisection converges; stray sign flips of the classifier
        # (orbits circulating far from the saddle) stay at O(r_loose)
        if not d < settings.root_dip_max:
            continue
        if any(abs(c_root - r[0]) < 1e-10 for r in roots):
            continue
        roots.append((float(c_root), int(m)))
    roots.sort(key=lambda t: (t[1], -t[0]))
    return roots, mp


def dip_minima(E: float, params: ModelParams, channel: str,
               settings: ManifoldSettings = ManifoldSettings(),
               record: PeriodicOrbitRecord | None = None,
               c_window: tuple | None = None,
               n_sweep: int | None = None,
               side: str = "u",
               zoom_levels: int = 7,
               mapper: _Mapper | None = None):
    """Manifold/axis crossings via the saddle-approach landscape d(c).

    The closest-approach distance of the shooting orbit has a V-shaped local
    minimum at every axis crossing of the manifold (depth -> 0), including
    crossings whose classification zone is far narrower than any reasonable
    sweep (the secondary channel reaches the saddle only after a full
    excursion, which amplifies the transverse scale).  Local minima of d(c)
    are zoomed until the classifier activates, then bisected as usual.
    Returns (roots, mapper) like axis_crossings.
    """
    mp = mapper if mapper is not None else _Mapper(E, params, settings,
                                                   record, h_section=0.0)
    lo, hi = c_window if c_window is not None else (settings.guard,
                                                    settings.sweep_hi)
    n = n_sweep if n_sweep is not None else settings.sweep_n

    def dval(c):
        s, m, d = mp.classify(float(c), channel, side)
        return s, d

    cs = np.linspace(lo, hi, n)
    vals = [dval(c) for c in cs]
    roots = []
    for i in range(1, n - 1):
        d0, d1, d2 = vals[i - 1][1], vals[i][1], vals[i + 1][1]
        if not (d1 < d0 and d1 <= d2) or not d1 < 0.6:
            continue
        a, b = float(cs[i - 1]), float(cs[i + 1])
        found = None
        best_prev = d1
        for level in range(zoom_levels):
            sub = np.linspace(a, b, 17)
            subv = [dval(c) for c in sub]
            sides_nz = [(c, s) for c, (s, _) in zip(sub, subv) if s != 0]
            for (c1, s1), (c2, s2) in zip(sides_nz[:-1], sides_nz[1:]):
                if s1 != s2:
                    found = (float(c1), float(c2))
                    break
            if found:
                break
            j = int(np.argmin([d for _, d in subv]))
            if level > 0 and subv[j][1] > 0.9 * best_prev:
                break  # minimum no longer descending: spurious dip
            best_prev = min(best_prev, subv[j][1])
            jlo = max(0, j - 1)
            jhi = min(len(sub) - 1, j + 1)
            a, b = float(sub[jlo]), float(sub[jhi])
        if found is None:
            continue
        c_root = _bisect_side(mp, channel, side, found[0], found[1])
        if c_root is None:
            continue
        _, m, d = mp.classify(c_root, channel, side,
                              tol=settings.flow.rel_tol)
        if not d < settings.root_dip_max:
            continue
        if any(abs(c_root - r[0]) < 1e-10 for r in roots):
            continue
        roots.append((float(c_root), int(m)))
    roots.sort(key=lambda t: (t[1], -t[0]))
    return roots, mp


def _bisect_side(mp: _Mapper, channel: str, side: str, a: float, b: float,
                 xtol: float = 1e-13):
    """Bisection on the +-1 classifier; unclassified midpoints are dodged."""
    sa = mp.classify(a, channel, side)[0]
    sb = mp.classify(b, channel, side)[0]
    if sa == 0 or sb == 0 or sa == sb:
        return None
    while b - a > xtol:
        mid = 0.5 * (a + b)
        sm = mp.classify(mid, channel, side)[0]
        if sm == 0:
            for frac in (0.45, 0.55, 0.4, 0.6, 0.35, 0.65, 0.3, 0.7):
                mid = a + frac * (b - a)
                sm = mp.classify(mid, channel, side)[0]
                if sm != 0:
                    break
            else:
                break
        if sm == sa:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def find_homoclinic(E: float, params: ModelParams, channel: str = "pri",
                    settings: ManifoldSettings = ManifoldSettings(),
                    record: PeriodicOrbitRecord | None = None,
                    h_section: float = 0.0,
                    warm: float | None = None,
                    with_angle: bool = True,
                    crossing_index: int = 0) -> HomoclinicRecord:
    """First intersection of W^u with the channel's symmetry axis.

    pri: {eta = 0, xi > 0};  sec: {xi = 0, eta > 0}.  `warm` carries the
    crossing coordinate from a neighbouring energy to shrink the search.
    The secondary channel is computed by re-seeding the returning lobe at
    the saddle (second_pass_crossings); its orbits approach the saddle twice
    and cannot be resolved by direct axis shooting.
    """
    if channel == "sec":
        recs, mp = second_pass_crossings(E, params, settings, record,
                                         h_section, warm=warm)
        if not recs:
            raise IntegrationError(
                f"no sec homoclinic crossing found at E = {E}")
        if crossing_index >= len(recs):
            raise IntegrationError(
                f"only {len(recs)} sec crossings found at E = {E}")
        rec = recs[crossing_index]
    else:
        window = None
        if warm is not None:
            window = (max(settings.guard, warm * 0.9), warm * 1.1)
        roots, mp = axis_crossings(E, params, channel, settings, record,
                                   h_section, c_window=window,
                                   n_sweep=48 if warm is not None else None)
        if not roots and warm is not None:
            roots, mp = axis_crossings(E, params, channel, settings, record,
                                       h_section)
        if not roots:
            raise IntegrationError(
                f"no pri homoclinic crossing found at E = {E}")
        if crossing_index >= len(roots):
            raise IntegrationError(
                f"only {len(roots)} crossings found at E = {E}, "
                f"wanted #{crossing_index}")
        c0, m_near = roots[crossing_index]
        pt = mp.axis_point(c0, channel)
        rec = HomoclinicRecord(E=E, channel=channel, coord=c0,
                               Gam=float(pt[1]), depth=m_near,
                               h_section=h_section)
    if with_angle:
        phi_s = splitting_angle(rec, params, settings, mapper=mp)
        rec.phi_signed = phi_s
        rec.phi = abs(phi_s)
    return rec


def second_pass_crossings(E: float, params: ModelParams,
                          settings: ManifoldSettings = ManifoldSettings(),
                          record: PeriodicOrbitRecord | None = None,
                          h_section: float = 0.0,
                          warm: float | None = None,
                          k_extra: int = 60,
                          max_pts: int = 20000):
    """Secondary-axis intersections of W^u, via the returning lobe.

    The unstable segment is re-parametrized at the primary orbit's saddle
    passage (offsets along the unstable eigendirection are clean doubles
    there, unlike the exponentially stretched fundamental-domain parameter)
    and marched forward; crossings of {xi = 0, eta > guard} are refined by
    root-finding in the offset.  Returns (records, mapper).
    """
    mp = _Mapper(E, params, settings, record, h_section)
    pri = find_homoclinic(E, params, "pri", settings, record=mp.record,
                          h_section=h_section, with_angle=False)
    a_star, depth_w = _window_anchor(mp, pri)
    scale = abs(a_star)
    vu = mp.vu

    def seed(tau: float) -> np.ndarray:
        return mp.seed_like(a_star + tau, vu)

    # geometric tau ladder on both sides of the primary tail (tau = 0)
    lad = scale * np.power(10.0, np.linspace(-8.0, -0.3, 20))
    taus = sorted(set((-lad).tolist() + lad.tolist()))
    pts = [seed(t) for t in taus]
    records = []
    total = depth_w + k_extra
    res_coarse = 0.35     # lobe-wide resolution
    res_axis = 0.03       # near the target axis; brentq supplies precision
    for k in range(1, total + 1):
        pts = [mp.map_k(q, 1, "u") for q in pts]
        if k <= depth_w + 4:
            continue
        i = 0
        while i < len(pts) - 1 and len(pts) < max_pts:
            d = math.hypot(pts[i][2] - pts[i + 1][2],
                           pts[i][0] - pts[i + 1][0])
            near_axis = (min(abs(pts[i][2]), abs(pts[i + 1][2])) < 0.12
                         or pts[i][2] * pts[i + 1][2] < 0.0)
            res = res_axis if near_axis else res_coarse
            if d > res and (taus[i + 1] - taus[i]) > 1e-18 * scale:
                tm = 0.5 * (taus[i] + taus[i + 1])
                pts.insert(i + 1, mp.map_k(seed(tm), k, "u"))
                taus.insert(i + 1, tm)
            else:
                i += 1
        # crossings of {xi = 0} with |eta| > guard; eta < 0 crossings belong
        # to the mirror branch (pi-rotation symmetry) and are folded back
        for i in range(len(pts) - 1):
            x0, x1 = pts[i][2], pts[i + 1][2]
            e0, e1 = pts[i][0], pts[i + 1][0]
            if x0 * x1 < 0.0 and abs(e0) > settings.guard \
                    and abs(e1) > settings.guard and e0 * e1 > 0.0:
                f = lambda t: mp.map_k(seed(t), k, "u")[2]
                try:
                    t_root = brentq(f, taus[i], taus[i + 1],
                                    xtol=1e-16 * scale, rtol=8.9e-16)
                except ValueError:
                    continue
                q = mp.map_k(seed(t_root), k, "u")
                eta0 = abs(float(q[0]))
                if warm is not None and abs(eta0 - warm) > 0.15 * warm + 1e-3:
                    continue
                if any(abs(eta0 - r.coord) < 1e-9 for r in records):
                    continue
                records.append(HomoclinicRecord(
                    E=E, channel="sec", coord=eta0, Gam=float(q[1]),
                    depth=k - depth_w, h_section=h_section,
                    window_anchor=(a_star + t_root, k)))
        if records:
            break
    records.sort(key=lambda r: -r.coord)
    return records, mp


def _window_anchor(mp: _Mapper, rec: HomoclinicRecord) -> tuple:
    """Unstable-segment anchor (a_center, depth) for the crossing window.

    Shoots the intersection backward into the linear zone of the saddle;
    the backward depth targets |z| ~ 1e-4: deep enough that the straight
    segment approximates W^u well, shallow enough that the coordinate error
    of the intersection has not been amplified.
    """
    pt = rec.point
    p3 = np.array([pt[0], pt[1], pt[2]])
    depth = max(3, int(math.ceil(math.log(rec.coord / 1e-4) /
                                 math.log(mp.lam))))
    zs = mp.map_k(p3, depth, "s")           # backward: span +2pi per return
    vu, vs = mp.vu, mp.vs
    den = vs[0] * vu[1] - vs[1] * vu[0]
    a = (vs[0] * zs[2] - vs[1] * zs[0]) / den     # vu-coefficient
    return float(a), depth


def _wu_window(mp: _Mapper, rec: HomoclinicRecord,
               settings: ManifoldSettings) -> np.ndarray:
    """(2k+1, 2) window of W^u points around the homoclinic intersection."""
    if rec.window_anchor is not None:
        a, depth = rec.window_anchor
    else:
        a, depth = _window_anchor(mp, rec)
    vu = mp.vu
    k = settings.fit_window
    # calibrate the local stretch with a probe pair
    d0 = 1e-3 * abs(a)
    ws = []
    for j in (-1, 1):
        q = mp.seed_like(a + j * d0, vu)
        ws.append(mp.map_k(q, depth, "u"))
    stretch = math.hypot(ws[1][2] - ws[0][2], ws[1][0] - ws[0][0]) / (2 * d0)
    d = settings.fit_spacing / max(stretch, 1e-12)
    d = min(d, 0.05 * abs(a))
    W = np.empty((2 * k + 1, 2))
    for idx, j in enumerate(range(-k, k + 1)):
        q = mp.seed_like(a + j * d, vu)
        img = mp.map_k(q, depth, "u")
        W[idx] = (img[2], img[0])            # (xi, eta)
    return W


def _tangent_angle(W: np.ndarray) -> float:
    """Tangent direction (radians, mod pi) of a sampled curve window.

    A PCA direction fixes the frame; a least-squares quadratic fit of the
    transverse residual then refines the slope, which keeps full accuracy
    when the window is curvature-dominated (near-perpendicular crossings).
    """
    W0 = W - W.mean(axis=0)
    _, _, vt = np.linalg.svd(W0, full_matrices=False)
    t, nvec = vt[0], vt[1]
    x = W0 @ t
    y = W0 @ nvec
    # fit y = c0 + c1 x + c2 x^2; evaluate dy/dx at the window centre x = 0
    A = np.stack([np.ones_like(x), x, x * x], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    base = math.atan2(t[1], t[0])
    return base + math.atan(coef[1])


def splitting_angle(rec: HomoclinicRecord, params: ModelParams,
                    settings: ManifoldSettings = ManifoldSettings(),
                    mapper: _Mapper | None = None) -> float:
    """Signed angle between W^u and W^s at the axis intersection.

    W^s is the mirror of W^u under the involution fixing the axis, so the
    angle is twice the (mod-pi) inclination of the W^u tangent to the axis;
    its magnitude is the splitting angle and it vanishes at a tangency
    (tangent parallel to the axis) and at a perpendicular crossing (tangent
    lines mirror onto each other in both cases).
    """
    if mapper is None:
        mapper = _Mapper(rec.E, params, settings, None, rec.h_section)
    W = _wu_window(mapper, rec, settings)
    theta = _tangent_angle(W)                # angle of (d xi, d eta)
    if rec.channel != "pri":
        theta = 0.5 * math.pi - theta        # measure from the eta-axis
    while theta > 0.5 * math.pi:
        theta -= math.pi
    while theta <= -0.5 * math.pi:
        theta += math.pi
    return 2.0 * theta


@dataclass
class TangencyRecord:
    E: float
    bracket: tuple
    channel: str
    coord: float            # axis coordinate of the (near-)tangent crossing
    phi_sec: float = math.nan   # splitting angle of the other channel there


def scan_tangencies(E_grid, params: ModelParams, channel: str = "pri",
                    settings: ManifoldSettings = ManifoldSettings(),
                    refine_tol: float = 1e-10,
                    progress=None):
    """Tangency energies of the first-crossing branch over the grid.

    The splitting angle is twice the tangent inclination to the axis, so
    sin(phi_signed) vanishes at both tangency types (tangent parallel or
    perpendicular to the axis) and changes sign through them; each grid
    bracket with a sign change is refined by root-finding in energy, with
    the crossing tracked by continuation.
    """
    E_grid = np.asarray(E_grid, dtype=float)
    gvals = np.full(len(E_grid), np.nan)
    coords = np.full(len(E_grid), np.nan)
    warm = None
    for i, E in enumerate(E_grid):
        try:
            rec = find_homoclinic(float(E), params, channel, settings,
                                  warm=warm)
            gvals[i] = math.sin(rec.phi_signed)
            coords[i] = rec.coord
            warm = rec.coord
        except (IntegrationError, ValueError):
            warm = None
        if progress is not None:
            progress(i, len(E_grid), gvals[i])

    tangencies = []
    n = len(E_grid)
    for i in range(n - 1):
        if math.isnan(gvals[i]) or math.isnan(gvals[i + 1]):
            continue
        if gvals[i] == 0.0 or gvals[i] * gvals[i + 1] >= 0.0:
            continue
        state = {"c": coords[i]}

        def g(E):
            rec = find_homoclinic(float(E), params, channel, settings,
                                  warm=state["c"])
            state["c"] = rec.coord
            return math.sin(rec.phi_signed)

        try:
            Estar = brentq(g, E_grid[i], E_grid[i + 1],
                           xtol=refine_tol, rtol=8.9e-16)
        except (IntegrationError, ValueError):
            continue
        tangencies.append(TangencyRecord(
            E=float(Estar), bracket=(float(E_grid[i]), float(E_grid[i + 1])),
            channel=channel, coord=state["c"]))
    return tangencies


def max_eccentricity(rec: HomoclinicRecord, params: ModelParams,
                     settings: ManifoldSettings = ManifoldSettings(),
                     max_blocks: int = 60,
                     nodes_per_block: int = 256):
    """(e_max, (i_min, i_max)) along the homoclinic orbit through rec.point.

    Integrates the excursion in both physical-time directions until the
    orbit has collapsed back onto the circular set (or max_blocks is hit),
    sampling eccentricity and inclination densely along the way.
    """
    p = params.pack()
    L = params.L
    e_max = 0.0
    i_min, i_max = math.inf, -math.inf
    rad_fp = 10.0 * settings.seed_disp
    for span in (-TWO_PI, TWO_PI):
        y = np.ascontiguousarray([rec.point[0], rec.point[1], rec.point[2],
                                  rec.h_section, 0.0])
        nodes = np.linspace(0.0, span, nodes_per_block + 1)
        out = np.empty((nodes_per_block + 1, 5))
        prev_r = math.hypot(y[0], y[2])
        for _ in range(max_blocks):
            status = RK.integrate_path(K.rhs_rep, y, nodes, p,
                                       settings.flow.rel_tol,
                                       settings.flow.abs_tol,
                                       settings.flow.max_step, out)
            if status != RK.OK:
                raise IntegrationError("homoclinic excursion integration failed")
            M = out[:, 0] ** 2 + out[:, 2] ** 2
            G = 0.5 * (2.0 * L - M)
            e = np.sqrt(np.maximum(0.0, 1.0 - (G / L) ** 2))
            ci = np.clip((out[:, 1] + 0.5 * G) / G, -1.0, 1.0)
            inc = np.arccos(ci)
            e_max = max(e_max, float(e.max()))
            i_min = min(i_min, float(inc.min()))
            i_max = max(i_max, float(inc.max()))
            y[3] = rec.h_section
            r = math.hypot(y[0], y[2])
            # stop once the orbit has collapsed onto the circular set (the
            # excursion is over; beyond it the tangle wanders elsewhere)
            if r < rad_fp or (r < 1e-3 and r > prev_r):
                break
            prev_r = r
    return e_max, (i_min, i_max)
