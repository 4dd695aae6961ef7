"""Numba kernels: Hamiltonian evaluations, analytic derivatives, vector fields.

State layout everywhere: q = (eta, Gamma, xi, h).  Parameter vector layout is
fixed by ModelParams.pack():

    p[0]=L  p[1]=rho0  p[2]=glun  p[3]=n_OmegaM  p[4:7]=f0[m]
    p[7:13]=Re/Im fplus[m]  p[13]=rho1 (incl. calibration)  p[14]=i_M

The perturbing structure is shared: with M = xi^2 + eta^2, X = 2L - M,
A = X - 4G, B = 3X + 4G, V = X + 2L, W = X + 4G, R = X^2 - 24XG - 48G^2 and
Q = 8L^2 + 12LM - 3M^2, each harmonic m contributes

    S_m = D_m0 * P^-(m) + D_m1 * Q * cos(m h) + D_m2 * P^+(m),
    P^{-/+}(m) = (xi^2-eta^2)/2 * cos((1 -/+ m) h) + xi*eta * sin((1 -/+ m) h),

and the coplanar Hamiltonian and the first Moon-inclination harmonic are

    Hcp = H0(M,G) + glun/L^2 * sum_m f0[m] S_m,
    R1+ = 3 rho1 / (2 L^2) * sum_m fplus[m] S_m.

All derivatives below are hand-derived from these closed forms and validated
against Richardson-extrapolated finite differences in the test suite.
"""

import numpy as np
from numba import njit

from ._rkf78 import integrate as _integ

# D_{m,p} numeric front factors (excluding the common L^-2 X^-2)
_K00 = -15.0 / 128.0
_K01 = 1.0 / 128.0
_K10 = 15.0 / 64.0
_K11 = -3.0 / 64.0
_K12 = -15.0 / 64.0
_K20 = 15.0 / 64.0
_K21 = 3.0 / 64.0
_K22 = 15.0 / 64.0


@njit(cache=True, fastmath=False)
def _h0_terms(M, G, L, rho0, order):
    """H0 and its (M, Gamma)-partials up to `order` (0, 1 or 2)."""
    X = 2.0 * L - M
    iX = 1.0 / X
    iX3 = iX * iX * iX
    iX4 = iX3 * iX
    iX5 = iX4 * iX
    iX6 = iX5 * iX
    iX7 = iX6 * iX
    c = 0.5 * rho0 / (L * L * L)
    v = c * (iX3 - 24.0 * G * iX4 - 48.0 * G * G * iX5)
    vM = vG = vMM = vMG = vGG = 0.0
    if order >= 1:
        vM = c * (3.0 * iX4 - 96.0 * G * iX5 - 240.0 * G * G * iX6)
        vG = c * (-24.0 * iX4 - 96.0 * G * iX5)
    if order >= 2:
        vMM = c * (12.0 * iX5 - 480.0 * G * iX6 - 1440.0 * G * G * iX7)
        vMG = c * (-96.0 * iX5 - 480.0 * G * iX6)
        vGG = c * (-96.0 * iX5)
    return v, vM, vG, vMM, vMG, vGG


@njit(cache=True, fastmath=False)
def _dcoefs(M, G, L, order, D, DM, DG, DMM, DMG, DGG):
    """Fill the nine D_{m,p}(M, Gamma) and partials up to `order`.

    Returns 0 on success, 1 on domain violation (sqrt argument <= 0).
    The p = 1 entries include the Hansen factor Q(M).
    """
    X = 2.0 * L - M
    if X <= 0.0:
        return 1
    A = X - 4.0 * G
    B = 3.0 * X + 4.0 * G
    V = X + 2.0 * L
    W = X + 4.0 * G
    if A <= 0.0 or B <= 0.0 or W <= 0.0:
        return 1
    R = X * X - 24.0 * X * G - 48.0 * G * G
    Q = 8.0 * L * L + 12.0 * L * M - 3.0 * M * M
    QM = 12.0 * L - 6.0 * M
    iL2 = 1.0 / (L * L)
    iX2 = 1.0 / (X * X)
    g2 = iL2 * iX2            # common L^-2 X^-2
    g2M = 2.0 * iL2 * iX2 / X  # d(g2)/dM  (dX/dM = -1)
    g2MM = 6.0 * iL2 * iX2 * iX2 * (X * X) / (X * X)  # placeholder, set below
    g2MM = 6.0 * iL2 / (X * X * X * X)
    sA = np.sqrt(A)
    sB = np.sqrt(B)

    # ---- inner products F(M, Gamma) for each (m, p), with their partials
    # (0,0) and (0,2): F = A*B*V
    F = A * B * V
    FM = -B * V - 3.0 * A * V - A * B
    FG = 4.0 * V * (A - B)
    FMM = 2.0 * (3.0 * V + B + 3.0 * A)
    FMG = 8.0 * V + 4.0 * B - 4.0 * A
    FGG = -32.0 * V
    for idx in (0, 2):
        D[0, idx] = _K00 * g2 * F
        if order >= 1:
            DM[0, idx] = _K00 * (g2M * F + g2 * FM)
            DG[0, idx] = _K00 * g2 * FG
        if order >= 2:
            DMM[0, idx] = _K00 * (g2MM * F + 2.0 * g2M * FM + g2 * FMM)
            DMG[0, idx] = _K00 * (g2M * FG + g2 * FMG)
            DGG[0, idx] = _K00 * g2 * FGG

    # (0,1): F = R*Q  (R quadratic; folded with Q here)
    RM = -2.0 * X + 24.0 * G
    RG = -24.0 * X - 96.0 * G
    D[0, 1] = _K01 * g2 * R * Q
    if order >= 1:
        DM[0, 1] = _K01 * (g2M * R * Q + g2 * (RM * Q + R * QM))
        DG[0, 1] = _K01 * g2 * RG * Q
    if order >= 2:
        DMM[0, 1] = _K01 * (g2MM * R * Q
                            + 2.0 * g2M * (RM * Q + R * QM)
                            + g2 * (2.0 * Q + 2.0 * RM * QM - 6.0 * R))
        DMG[0, 1] = _K01 * (g2M * RG * Q + g2 * (24.0 * Q + RG * QM))
        DGG[0, 1] = _K01 * g2 * (-96.0) * Q

    # (1,0): F = sqrt(A) B^{3/2} V
    F = sA * sB * B * V
    lM = -0.5 / A - 4.5 / B - 1.0 / V
    lG = -2.0 / A + 6.0 / B
    D[1, 0] = _K10 * g2 * F
    if order >= 1:
        DM[1, 0] = _K10 * (g2M * F + g2 * F * lM)
        DG[1, 0] = _K10 * g2 * F * lG
    if order >= 2:
        FMM = F * (lM * lM - (0.5 / (A * A) + 13.5 / (B * B) + 1.0 / (V * V)))
        FMG = F * (lM * lG - (2.0 / (A * A) - 18.0 / (B * B)))
        FGG = F * (lG * lG - (8.0 / (A * A) + 24.0 / (B * B)))
        DMM[1, 0] = _K10 * (g2MM * F + 2.0 * g2M * F * lM + g2 * FMM)
        DMG[1, 0] = _K10 * (g2M * F * lG + g2 * FMG)
        DGG[1, 0] = _K10 * g2 * FGG

    # (1,1): F = sqrt(A) sqrt(B) W, with Hansen factor Q
    F = sA * sB * W
    lM = -0.5 / A - 1.5 / B - 1.0 / W
    lG = -2.0 / A + 2.0 / B + 4.0 / W
    G11 = F * Q
    D[1, 1] = _K11 * g2 * G11
    if order >= 1:
        GM = F * lM * Q + F * QM
        GG = F * lG * Q
        DM[1, 1] = _K11 * (g2M * G11 + g2 * GM)
        DG[1, 1] = _K11 * g2 * GG
    if order >= 2:
        FMM = F * (lM * lM - (0.5 / (A * A) + 4.5 / (B * B) + 1.0 / (W * W)))
        FMG = F * (lM * lG - (2.0 / (A * A) - 6.0 / (B * B) - 4.0 / (W * W)))
        FGG = F * (lG * lG - (8.0 / (A * A) + 8.0 / (B * B) + 16.0 / (W * W)))
        GMM = FMM * Q + 2.0 * F * lM * QM - 6.0 * F
        GMG = FMG * Q + F * lG * QM
        GGG = FGG * Q
        DMM[1, 1] = _K11 * (g2MM * G11 + 2.0 * g2M * GM + g2 * GMM)
        DMG[1, 1] = _K11 * (g2M * GG + g2 * GMG)
        DGG[1, 1] = _K11 * g2 * GGG

    # (1,2): F = A^{3/2} sqrt(B) V
    F = A * sA * sB * V
    lM = -1.5 / A - 1.5 / B - 1.0 / V
    lG = -6.0 / A + 2.0 / B
    D[1, 2] = _K12 * g2 * F
    if order >= 1:
        DM[1, 2] = _K12 * (g2M * F + g2 * F * lM)
        DG[1, 2] = _K12 * g2 * F * lG
    if order >= 2:
        FMM = F * (lM * lM - (1.5 / (A * A) + 4.5 / (B * B) + 1.0 / (V * V)))
        FMG = F * (lM * lG - (6.0 / (A * A) - 6.0 / (B * B)))
        FGG = F * (lG * lG - (24.0 / (A * A) + 8.0 / (B * B)))
        DMM[1, 2] = _K12 * (g2MM * F + 2.0 * g2M * F * lM + g2 * FMM)
        DMG[1, 2] = _K12 * (g2M * F * lG + g2 * FMG)
        DGG[1, 2] = _K12 * g2 * FGG

    # (2,0): F = B^2 V
    F = B * B * V
    FM = -6.0 * B * V - B * B
    FG = 8.0 * B * V
    D[2, 0] = _K20 * g2 * F
    if order >= 1:
        DM[2, 0] = _K20 * (g2M * F + g2 * FM)
        DG[2, 0] = _K20 * g2 * FG
    if order >= 2:
        DMM[2, 0] = _K20 * (g2MM * F + 2.0 * g2M * FM + g2 * (18.0 * V + 12.0 * B))
        DMG[2, 0] = _K20 * (g2M * FG + g2 * (-24.0 * V - 8.0 * B))
        DGG[2, 0] = _K20 * g2 * 32.0 * V

    # (2,1): F = A*B, with Hansen factor Q
    F = A * B
    FM = -B - 3.0 * A
    FG = 4.0 * (A - B)
    G21 = F * Q
    D[2, 1] = _K21 * g2 * G21
    if order >= 1:
        GM = FM * Q + F * QM
        GG = FG * Q
        DM[2, 1] = _K21 * (g2M * G21 + g2 * GM)
        DG[2, 1] = _K21 * g2 * GG
    if order >= 2:
        GMM = 6.0 * Q + 2.0 * FM * QM - 6.0 * F
        GMG = 8.0 * Q + FG * QM
        GGG = -32.0 * Q
        DMM[2, 1] = _K21 * (g2MM * G21 + 2.0 * g2M * GM + g2 * GMM)
        DMG[2, 1] = _K21 * (g2M * GG + g2 * GMG)
        DGG[2, 1] = _K21 * g2 * GGG

    # (2,2): F = A^2 V
    F = A * A * V
    FM = -2.0 * A * V - A * A
    FG = -8.0 * A * V
    D[2, 2] = _K22 * g2 * F
    if order >= 1:
        DM[2, 2] = _K22 * (g2M * F + g2 * FM)
        DG[2, 2] = _K22 * g2 * FG
    if order >= 2:
        DMM[2, 2] = _K22 * (g2MM * F + 2.0 * g2M * FM + g2 * (2.0 * V + 4.0 * A))
        DMG[2, 2] = _K22 * (g2M * FG + g2 * (8.0 * V + 8.0 * A))
        DGG[2, 2] = _K22 * g2 * 32.0 * V
    return 0


@njit(cache=True, fastmath=False)
def _trig(h):
    c1 = np.cos(h)
    s1 = np.sin(h)
    c2 = c1 * c1 - s1 * s1
    s2 = 2.0 * s1 * c1
    c3 = c2 * c1 - s2 * s1
    s3 = s2 * c1 + c2 * s1
    # cos/sin of (1-m)h, m h, (1+m)h for m = 0,1,2
    ckm = np.empty(3); skm = np.empty(3)
    cm = np.empty(3); sm = np.empty(3)
    ckp = np.empty(3); skp = np.empty(3)
    ckm[0], skm[0] = c1, s1
    ckm[1], skm[1] = 1.0, 0.0
    ckm[2], skm[2] = c1, -s1
    cm[0], sm[0] = 1.0, 0.0
    cm[1], sm[1] = c1, s1
    cm[2], sm[2] = c2, s2
    ckp[0], skp[0] = c1, s1
    ckp[1], skp[1] = c2, s2
    ckp[2], skp[2] = c3, s3
    return ckm, skm, cm, sm, ckp, skp


@njit(cache=True, fastmath=False)
def hcp(eta, Gam, xi, h, p):
    """Coplanar Hamiltonian H_CP(eta, Gamma, xi, h).  NaN outside the domain."""
    L = p[0]
    M = xi * xi + eta * eta
    if M >= 2.0 * L:
        return np.nan
    D = np.zeros((3, 3)); Z = np.zeros((3, 3))
    if _dcoefs(M, Gam, L, 0, D, Z, Z, Z, Z, Z) != 0:
        return np.nan
    h0 = _h0_terms(M, Gam, L, p[1], 0)[0]
    ckm, skm, cm, _, ckp, skp = _trig(h)
    u = 0.5 * (xi * xi - eta * eta)
    v = xi * eta
    acc = 0.0
    for m in range(3):
        S = (D[m, 0] * (u * ckm[m] + v * skm[m])
             + D[m, 1] * cm[m]
             + D[m, 2] * (u * ckp[m] + v * skp[m]))
        acc += p[4 + m] * S
    return h0 + p[2] / (L * L) * acc


@njit(cache=True, fastmath=False)
def hcp_grad(eta, Gam, xi, h, p, out):
    """Value and gradient of H_CP.  out[0:5] = (H, dEta, dGam, dXi, dH).

    Returns 0 on success, nonzero on domain violation.
    """
    L = p[0]
    M = xi * xi + eta * eta
    if M >= 2.0 * L:
        return 1
    D = np.zeros((3, 3)); DM = np.zeros((3, 3)); DG = np.zeros((3, 3))
    Z = np.zeros((3, 3))
    if _dcoefs(M, Gam, L, 1, D, DM, DG, Z, Z, Z) != 0:
        return 1
    h0, h0M, h0G, _, _, _ = _h0_terms(M, Gam, L, p[1], 1)
    ckm, skm, cm, sm, ckp, skp = _trig(h)
    u = 0.5 * (xi * xi - eta * eta)
    v = xi * eta
    val = h0
    dM = h0M
    dG = h0G
    dX = 0.0   # explicit (xi,eta,h) parts beyond M-chain
    dE = 0.0
    dH = 0.0
    cL = p[2] / (L * L)
    for m in range(3):
        f = p[4 + m] * cL
        km = 1.0 - m
        kp = 1.0 + m
        Pm = u * ckm[m] + v * skm[m]
        Pp = u * ckp[m] + v * skp[m]
        val += f * (D[m, 0] * Pm + D[m, 1] * cm[m] + D[m, 2] * Pp)
        dM += f * (DM[m, 0] * Pm + DM[m, 1] * cm[m] + DM[m, 2] * Pp)
        dG += f * (DG[m, 0] * Pm + DG[m, 1] * cm[m] + DG[m, 2] * Pp)
        # explicit xi/eta dependence of P
        dX += f * (D[m, 0] * (xi * ckm[m] + eta * skm[m])
                   + D[m, 2] * (xi * ckp[m] + eta * skp[m]))
        dE += f * (D[m, 0] * (-eta * ckm[m] + xi * skm[m])
                   + D[m, 2] * (-eta * ckp[m] + xi * skp[m]))
        dH += f * (D[m, 0] * km * (-u * skm[m] + v * ckm[m])
                   - D[m, 1] * m * sm[m]
                   + D[m, 2] * kp * (-u * skp[m] + v * ckp[m]))
    out[0] = val
    out[1] = dM * 2.0 * eta + dE
    out[2] = dG
    out[3] = dM * 2.0 * xi + dX
    out[4] = dH
    return 0


@njit(cache=True, fastmath=False)
def hcp_hess(eta, Gam, xi, h, p, grad, hess):
    """Gradient and 4x4 Hessian of H_CP wrt (eta, Gamma, xi, h)."""
    L = p[0]
    M = xi * xi + eta * eta
    if M >= 2.0 * L:
        return 1
    D = np.zeros((3, 3)); DM = np.zeros((3, 3)); DG = np.zeros((3, 3))
    DMM = np.zeros((3, 3)); DMG = np.zeros((3, 3)); DGG = np.zeros((3, 3))
    if _dcoefs(M, Gam, L, 2, D, DM, DG, DMM, DMG, DGG) != 0:
        return 1
    h0, h0M, h0G, h0MM, h0MG, h0GG = _h0_terms(M, Gam, L, p[1], 2)
    ckm, skm, cm, sm, ckp, skp = _trig(h)
    u = 0.5 * (xi * xi - eta * eta)
    v = xi * eta
    cL = p[2] / (L * L)

    # accumulate scalar (M,Gamma)-chain pieces and explicit pieces
    gM = h0M; gG = h0G; gMM = h0MM; gMG = h0MG; gGG = h0GG
    dE = 0.0; dX = 0.0; dH = 0.0
    # second-order explicit accumulators
    tEE = 0.0; tXX = 0.0; tEX = 0.0; tEH = 0.0; tXH = 0.0; tHH = 0.0
    tGH = 0.0
    # cross (M-chain grad) x (explicit P-grad) pieces: sum of D_M * P_q etc.
    mE = 0.0; mX = 0.0; mH = 0.0   # sums of (dS/dM-coefficient times P_q)
    for m in range(3):
        f = p[4 + m] * cL
        km = 1.0 - m
        kp = 1.0 + m
        Pm = u * ckm[m] + v * skm[m]
        Pp = u * ckp[m] + v * skp[m]
        PmE = -eta * ckm[m] + xi * skm[m]
        PmX = xi * ckm[m] + eta * skm[m]
        PpE = -eta * ckp[m] + xi * skp[m]
        PpX = xi * ckp[m] + eta * skp[m]
        PmH = km * (-u * skm[m] + v * ckm[m])
        PpH = kp * (-u * skp[m] + v * ckp[m])
        gM += f * (DM[m, 0] * Pm + DM[m, 1] * cm[m] + DM[m, 2] * Pp)
        gG += f * (DG[m, 0] * Pm + DG[m, 1] * cm[m] + DG[m, 2] * Pp)
        gMM += f * (DMM[m, 0] * Pm + DMM[m, 1] * cm[m] + DMM[m, 2] * Pp)
        gMG += f * (DMG[m, 0] * Pm + DMG[m, 1] * cm[m] + DMG[m, 2] * Pp)
        gGG += f * (DGG[m, 0] * Pm + DGG[m, 1] * cm[m] + DGG[m, 2] * Pp)
        dE += f * (D[m, 0] * PmE + D[m, 2] * PpE)
        dX += f * (D[m, 0] * PmX + D[m, 2] * PpX)
        dH += f * (D[m, 0] * PmH - D[m, 1] * m * sm[m] + D[m, 2] * PpH)
        mE += f * (DM[m, 0] * PmE + DM[m, 2] * PpE)
        mX += f * (DM[m, 0] * PmX + DM[m, 2] * PpX)
        mH += f * (DM[m, 0] * PmH - DM[m, 1] * m * sm[m] + DM[m, 2] * PpH)
        tGH += f * (DG[m, 0] * PmH - DG[m, 1] * m * sm[m] + DG[m, 2] * PpH)
        tEE += f * (-D[m, 0] * ckm[m] - D[m, 2] * ckp[m])
        tXX += f * (D[m, 0] * ckm[m] + D[m, 2] * ckp[m])
        tEX += f * (D[m, 0] * skm[m] + D[m, 2] * skp[m])
        tEH += f * (D[m, 0] * km * (eta * skm[m] + xi * ckm[m])
                    + D[m, 2] * kp * (eta * skp[m] + xi * ckp[m]))
        tXH += f * (D[m, 0] * km * (-xi * skm[m] + eta * ckm[m])
                    + D[m, 2] * kp * (-xi * skp[m] + eta * ckp[m]))
        tHH += f * (-D[m, 0] * km * km * Pm
                    - D[m, 1] * m * m * cm[m]
                    - D[m, 2] * kp * kp * Pp)

    grad[0] = gM * 2.0 * eta + dE
    grad[1] = gG
    grad[2] = gM * 2.0 * xi + dX
    grad[3] = dH

    Hee = gMM * 4.0 * eta * eta + 2.0 * gM + 2.0 * 2.0 * eta * mE + tEE
    Hxx = gMM * 4.0 * xi * xi + 2.0 * gM + 2.0 * 2.0 * xi * mX + tXX
    Hex = gMM * 4.0 * eta * xi + 2.0 * eta * mX + 2.0 * xi * mE + tEX
    Heg = gMG * 2.0 * eta + (0.0)  # explicit P has no Gamma dependence
    Hxg = gMG * 2.0 * xi
    # Gamma-derivative of explicit parts: D_G * P_q terms
    Heg2 = 0.0; Hxg2 = 0.0
    for m in range(3):
        f = p[4 + m] * cL
        km = 1.0 - m
        kp = 1.0 + m
        Heg2 += f * (DG[m, 0] * (-eta * ckm[m] + xi * skm[m])
                     + DG[m, 2] * (-eta * ckp[m] + xi * skp[m]))
        Hxg2 += f * (DG[m, 0] * (xi * ckm[m] + eta * skm[m])
                     + DG[m, 2] * (xi * ckp[m] + eta * skp[m]))
    Heg += Heg2
    Hxg += Hxg2
    Heh = 2.0 * eta * mH + tEH
    Hxh = 2.0 * xi * mH + tXH
    Hgg = gGG
    Hgh = tGH
    Hhh = tHH

    hess[0, 0] = Hee; hess[0, 1] = Heg; hess[0, 2] = Hex; hess[0, 3] = Heh
    hess[1, 0] = Heg; hess[1, 1] = Hgg; hess[1, 2] = Hxg; hess[1, 3] = Hgh
    hess[2, 0] = Hex; hess[2, 1] = Hxg; hess[2, 2] = Hxx; hess[2, 3] = Hxh
    hess[3, 0] = Heh; hess[3, 1] = Hgh; hess[3, 2] = Hxh; hess[3, 3] = Hhh
    return 0


@njit(cache=True, fastmath=False)
def r1plus(eta, Gam, xi, h, p):
    """First Moon-inclination harmonic amplitude R1+ (complex as re, im)."""
    L = p[0]
    M = xi * xi + eta * eta
    D = np.zeros((3, 3)); Z = np.zeros((3, 3))
    if M >= 2.0 * L or _dcoefs(M, Gam, L, 0, D, Z, Z, Z, Z, Z) != 0:
        return np.nan, np.nan
    ckm, skm, cm, _, ckp, skp = _trig(h)
    u = 0.5 * (xi * xi - eta * eta)
    v = xi * eta
    re = 0.0; im = 0.0
    for m in range(3):
        S = (D[m, 0] * (u * ckm[m] + v * skm[m])
             + D[m, 1] * cm[m]
             + D[m, 2] * (u * ckp[m] + v * skp[m]))
        re += p[7 + 2 * m] * S
        im += p[8 + 2 * m] * S
    c = 1.5 * p[13] / (L * L)
    return c * re, c * im


@njit(cache=True, fastmath=False)
def r1plus_grad(eta, Gam, xi, h, p, out):
    """R1+ and its gradient: out = (re, im, re_q[4], im_q[4]) -> length 10."""
    L = p[0]
    M = xi * xi + eta * eta
    if M >= 2.0 * L:
        return 1
    D = np.zeros((3, 3)); DM = np.zeros((3, 3)); DG = np.zeros((3, 3))
    Z = np.zeros((3, 3))
    if _dcoefs(M, Gam, L, 1, D, DM, DG, Z, Z, Z) != 0:
        return 1
    ckm, skm, cm, sm, ckp, skp = _trig(h)
    u = 0.5 * (xi * xi - eta * eta)
    v = xi * eta
    c = 1.5 * p[13] / (L * L)
    for j in range(10):
        out[j] = 0.0
    for m in range(3):
        km = 1.0 - m
        kp = 1.0 + m
        Pm = u * ckm[m] + v * skm[m]
        Pp = u * ckp[m] + v * skp[m]
        S = D[m, 0] * Pm + D[m, 1] * cm[m] + D[m, 2] * Pp
        SM = DM[m, 0] * Pm + DM[m, 1] * cm[m] + DM[m, 2] * Pp
        SG = DG[m, 0] * Pm + DG[m, 1] * cm[m] + DG[m, 2] * Pp
        SE = (D[m, 0] * (-eta * ckm[m] + xi * skm[m])
              + D[m, 2] * (-eta * ckp[m] + xi * skp[m]) + SM * 2.0 * eta)
        SX = (D[m, 0] * (xi * ckm[m] + eta * skm[m])
              + D[m, 2] * (xi * ckp[m] + eta * skp[m]) + SM * 2.0 * xi)
        SH = (D[m, 0] * km * (-u * skm[m] + v * ckm[m])
              - D[m, 1] * m * sm[m]
              + D[m, 2] * kp * (-u * skp[m] + v * ckp[m]))
        fr = c * p[7 + 2 * m]
        fi = c * p[8 + 2 * m]
        out[0] += fr * S
        out[1] += fi * S
        out[2] += fr * SE
        out[3] += fi * SE
        out[4] += fr * SG
        out[5] += fi * SG
        out[6] += fr * SX
        out[7] += fi * SX
        out[8] += fr * SH
        out[9] += fi * SH
    return 0


# ----------------------------------------------------------------- vector fields

@njit(cache=True)
def rhs_phys(t, y, out, p):
    """Canonical equations of H_CP in physical time; y = (eta, Gam, xi, h)."""
    g = np.empty(5)
    if hcp_grad(y[0], y[1], y[2], y[3], p, g) != 0:
        out[0] = np.nan; out[1] = np.nan; out[2] = np.nan; out[3] = np.nan
        return
    out[0] = -g[3]   # eta'  = -dH/dxi
    out[1] = -g[4]   # Gam'  = -dH/dh
    out[2] = g[1]    # xi'   =  dH/deta
    out[3] = g[2]    # h'    =  dH/dGam


@njit(cache=True)
def rhs_phys_var(t, y, out, p):
    """Physical flow + first variational system; y = state(4) + M(16, row-major)."""
    g = np.empty(4)
    H = np.empty((4, 4))
    if hcp_hess(y[0], y[1], y[2], y[3], p, g, H) != 0:
        for j in range(20):
            out[j] = np.nan
        return
    out[0] = -g[2]
    out[1] = -g[3]
    out[2] = g[0]
    out[3] = g[1]
    # dM/dt = J*M with J rows (-Hess[2], -Hess[3], Hess[0], Hess[1]);
    # M stored row-major: y[4 + 4*i + j]
    for jcol in range(4):
        m0 = y[4 + 0 * 4 + jcol]
        m1 = y[4 + 1 * 4 + jcol]
        m2 = y[4 + 2 * 4 + jcol]
        m3 = y[4 + 3 * 4 + jcol]
        out[4 + 0 * 4 + jcol] = -(H[2, 0] * m0 + H[2, 1] * m1 + H[2, 2] * m2 + H[2, 3] * m3)
        out[4 + 1 * 4 + jcol] = -(H[3, 0] * m0 + H[3, 1] * m1 + H[3, 2] * m2 + H[3, 3] * m3)
        out[4 + 2 * 4 + jcol] = (H[0, 0] * m0 + H[0, 1] * m1 + H[0, 2] * m2 + H[0, 3] * m3)
        out[4 + 3 * 4 + jcol] = (H[1, 0] * m0 + H[1, 1] * m1 + H[1, 2] * m2 + H[1, 3] * m3)


@njit(cache=True)
def rhs_rep(s, y, out, p):
    """h-parametrized coplanar flow; y = (eta, Gam, xi, h, Omega_acc).

    dh/ds = 1; Omega_acc accumulates the Moon-node phase n/dH_Gam.
    """
    g = np.empty(5)
    if hcp_grad(y[0], y[1], y[2], y[3], p, g) != 0:
        for j in range(5):
            out[j] = np.nan
        return
    iD = 1.0 / g[2]
    out[0] = -g[3] * iD
    out[1] = -g[4] * iD
    out[2] = g[1] * iD
    out[3] = 1.0
    out[4] = p[3] * iD


@njit(cache=True)
def rhs_rep_w(s, y, out, p):
    """h-parametrized flow + complex Melnikov quadrature component.

    y = (eta, Gam, xi, h, Omega_acc, W_re, W_im); dW/ds = R1+ e^{i Omega_acc} / dH_Gam.
    """
    g = np.empty(5)
    if hcp_grad(y[0], y[1], y[2], y[3], p, g) != 0:
        for j in range(7):
            out[j] = np.nan
        return
    iD = 1.0 / g[2]
    out[0] = -g[3] * iD
    out[1] = -g[4] * iD
    out[2] = g[1] * iD
    out[3] = 1.0
    out[4] = p[3] * iD
    rre, rim = r1plus(y[0], y[1], y[2], y[3], p)
    co = np.cos(y[4])
    si = np.sin(y[4])
    out[5] = (rre * co - rim * si) * iD
    out[6] = (rre * si + rim * co) * iD


@njit(cache=True)
def rhs_rep_var(s, y, out, p):
    """h-parametrized flow + variational of its (eta, Gam, xi) block.

    y = (eta, Gam, xi, h) + M(16).  The h-row of the tangent map is constant
    (dh/ds = 1 regardless of the state), handled here with zero derivatives.
    """
    g = np.empty(4)
    H = np.empty((4, 4))
    if hcp_hess(y[0], y[1], y[2], y[3], p, g, H) != 0:
        for j in range(20):
            out[j] = np.nan
        return
    iD = 1.0 / g[1]
    F0 = -g[2] * iD
    F1 = -g[3] * iD
    F2 = g[0] * iD
    out[0] = F0
    out[1] = F1
    out[2] = F2
    out[3] = 1.0
    # d(F_i)/d(q_k) by quotient rule; D = H_Gam so D_qk = Hess[1][k]
    J = np.empty((4, 4))
    for k in range(4):
        Dq = H[1, k]
        J[0, k] = (-H[2, k] - F0 * Dq) * iD
        J[1, k] = (-H[3, k] - F1 * Dq) * iD
        J[2, k] = (H[0, k] - F2 * Dq) * iD
        J[3, k] = 0.0
    for i in range(4):
        for j in range(4):
            acc = 0.0
            for k in range(4):
                acc += J[i, k] * y[4 + 4 * k + j]
            out[4 + 4 * i + j] = acc


@njit(cache=True)
def rhs_ext(s, y, out, p):
    """h-parametrized extended flow at first order in the Moon inclination.

    y = (eta, Gam, xi, h, Omega_M, J); H = H_CP + alpha^3 i_M R1(.., Omega_M).
    """
    g = np.empty(5)
    r = np.empty(10)
    ok1 = hcp_grad(y[0], y[1], y[2], y[3], p, g)
    ok2 = r1plus_grad(y[0], y[1], y[2], y[3], p, r)
    if ok1 != 0 or ok2 != 0:
        for j in range(6):
            out[j] = np.nan
        return
    a3im = (p[2] / p[13]) * p[14]    # alpha^3 (calibrated) * i_M
    co = np.cos(y[4])
    si = np.sin(y[4])
    # R1 = 2 Re(e^{i Om} R1+); gradients wrt q and Omega
    gE = g[1] + a3im * 2.0 * (co * r[2] - si * r[3])
    gG = g[2] + a3im * 2.0 * (co * r[4] - si * r[5])
    gX = g[3] + a3im * 2.0 * (co * r[6] - si * r[7])
    gH = g[4] + a3im * 2.0 * (co * r[8] - si * r[9])
    gOm = a3im * (-2.0) * (si * r[0] + co * r[1])
    iD = 1.0 / gG
    out[0] = -gX * iD
    out[1] = -gH * iD
    out[2] = gE * iD
    out[3] = 1.0
    out[4] = p[3] * iD
    out[5] = -gOm * iD


@njit(cache=False)
def map_k(eta, Gam, xi, h_section, k, span, p, rtol, atol):
    """k-fold section return map.  span = -2pi forward, +2pi backward.

    Returns (eta, Gam, xi, status); h is pinned back to h_section after
    every return to avoid unbounded angles.
    """
    y = np.empty(5)
    y[0] = eta; y[1] = Gam; y[2] = xi; y[3] = h_section; y[4] = 0.0
    for _ in range(k):
        status = _integ(rhs_rep, y, 0.0, span, p, rtol, atol, 0.0)
        if status != 0 or y[0] != y[0]:
            return np.nan, np.nan, np.nan, 1
        y[3] = h_section
    return y[0], y[1], y[2], 0


@njit(cache=False)
def shoot_classify(eta0, Gam0, xi0, h_section, span, p, rtol, atol,
                   va_e, va_x, vb_e, vb_x, r_loose, lam, m_max):
    """Iterate the return map and classify the side of the saddle passage.

    Tracks the distance to the section fixed point.  A local minimum below
    r_loose counts as a saddle passage only if the next point matches the
    linearized hyperbolic prediction (va-coordinate divided by lam, the
    vb-coordinate multiplied by lam); sweeps through the nonlinear region
    that merely dip in distance are thereby rejected.  At the first genuine
    passage the sign of the vb-eigencoordinate is returned; it flips exactly
    where the start point crosses the va-manifold.  Output: (side, m_near,
    d_near); side = 0 means no classification.  An orbit still descending at
    m_max (numerically on the manifold) is classified at its final point.
    """
    y = np.empty(5)
    y[0] = eta0; y[1] = Gam0; y[2] = xi0; y[3] = h_section; y[4] = 0.0
    den = va_e * vb_x - va_x * vb_e
    prev_r = np.sqrt(eta0 * eta0 + xi0 * xi0)
    ze = eta0
    zx = xi0
    descending = False
    for m in range(1, m_max + 1):
        status = _integ(rhs_rep, y, 0.0, span, p, rtol, atol, 0.0)
        if status != 0 or y[0] != y[0]:
            return 0, m, prev_r
        y[3] = h_section
        r = np.sqrt(y[0] * y[0] + y[2] * y[2])
        if r > prev_r:
            if descending and prev_r < r_loose:
                a = (ze * vb_x - zx * vb_e) / den
                b = (va_e * zx - va_x * ze) / den
                pe = (a / lam) * va_e + (b * lam) * vb_e
                px = (a / lam) * va_x + (b * lam) * vb_x
                err = np.sqrt((pe - y[0]) ** 2 + (px - y[2]) ** 2)
                if err < 0.35 * r + 1e-14:
                    side = 1 if b > 0.0 else -1
                    return side, m - 1, prev_r
            descending = False
        else:
            descending = True
        prev_r = r
        ze = y[0]
        zx = y[2]
    if descending and prev_r < r_loose:
        b = (va_e * zx - va_x * ze) / den
        side = 1 if b > 0.0 else -1
        return side, m_max, prev_r
    return 0, m_max, prev_r


@njit(cache=True)
def gamma_recover(eta, xi, E, Gam_guess, p):
    """Solve H_CP(eta, Gam, xi, 0) = E for Gam by Newton.  NaN on failure."""
    g = np.empty(5)
    Gam = Gam_guess
    for _ in range(30):
        if hcp_grad(eta, Gam, xi, 0.0, p, g) != 0:
            return np.nan
        f = g[0] - E
        step = f / g[2]
        Gam -= step
        if abs(step) < 1e-16 + 1e-12 * abs(Gam):
            return Gam
    if abs(f) < 1e-18:
        return Gam
    return np.nan
