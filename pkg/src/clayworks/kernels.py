"""Numba kernels for the per-substep hot path.

Everything here runs single-threaded on purpose: scatter order is then
fixed, so repeated runs produce bitwise-identical state. Matrix math is
spelled out on scalars (no small-array allocation inside loops).

The 3x3 SVD is computed as a Jacobi eigendecomposition of F^T F, which
is accurate to ~1e-15 for the well-conditioned gradients clay produces
(det(F) is kept positive by the engine).
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .types import (
    PLASTICITY_CLAMP,
    PLASTICITY_NONE,
    PLASTICITY_VON_MISES,
    STRESS_COROTATED,
)

# primitive type tags shared with medial.py
PRIM_SPHERE = 0
PRIM_CONE = 1
PRIM_SLAB = 2

_JACOBI_SWEEPS = 12


@njit(cache=True, inline="always")
def _sym_eig3(a00, a01, a02, a11, a12, a22):
    """Eigen-decompose a symmetric 3x3 matrix; returns eigenvalues and the
    eigenvector matrix V (columns), unsorted."""
    v00 = 1.0; v01 = 0.0; v02 = 0.0
    v10 = 0.0; v11 = 1.0; v12 = 0.0
    v20 = 0.0; v21 = 0.0; v22 = 1.0
    for _ in range(_JACOBI_SWEEPS):
        off = a01 * a01 + a02 * a02 + a12 * a12
        if off < 1e-30:
            break
        if a01 * a01 > 1e-32:
            tau = (a11 - a00) / (2.0 * a01)
            t = (1.0 if tau >= 0.0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            n00 = c * c * a00 - 2.0 * s * c * a01 + s * s * a11
            n11 = s * s * a00 + 2.0 * s * c * a01 + c * c * a11
            n02 = c * a02 - s * a12
            n12 = s * a02 + c * a12
            a00 = n00; a11 = n11; a01 = 0.0; a02 = n02; a12 = n12
            t0 = c * v00 - s * v01; t1 = s * v00 + c * v01
            v00 = t0; v01 = t1
            t0 = c * v10 - s * v11; t1 = s * v10 + c * v11
            v10 = t0; v11 = t1
            t0 = c * v20 - s * v21; t1 = s * v20 + c * v21
            v20 = t0; v21 = t1
        if a02 * a02 > 1e-32:
            tau = (a22 - a00) / (2.0 * a02)
            t = (1.0 if tau >= 0.0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            n00 = c * c * a00 - 2.0 * s * c * a02 + s * s * a22
            n22 = s * s * a00 + 2.0 * s * c * a02 + c * c * a22
            n01 = c * a01 - s * a12
            n12 = s * a01 + c * a12
            a00 = n00; a22 = n22; a02 = 0.0; a01 = n01; a12 = n12
            t0 = c * v00 - s * v02; t1 = s * v00 + c * v02
            v00 = t0; v02 = t1
            t0 = c * v10 - s * v12; t1 = s * v10 + c * v12
            v10 = t0; v12 = t1
            t0 = c * v20 - s * v22; t1 = s * v20 + c * v22
            v20 = t0; v22 = t1
        if a12 * a12 > 1e-32:
            tau = (a22 - a11) / (2.0 * a12)
            t = (1.0 if tau >= 0.0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            n11 = c * c * a11 - 2.0 * s * c * a12 + s * s * a22
            n22 = s * s * a11 + 2.0 * s * c * a12 + c * c * a22
            n01 = c * a01 - s * a02
            n02 = s * a01 + c * a02
            a11 = n11; a22 = n22; a12 = 0.0; a01 = n01; a02 = n02
            t0 = c * v01 - s * v02; t1 = s * v01 + c * v02
            v01 = t0; v02 = t1
            t0 = c * v11 - s * v12; t1 = s * v11 + c * v12
            v11 = t0; v12 = t1
            t0 = c * v21 - s * v22; t1 = s * v21 + c * v22
            v21 = t0; v22 = t1
    return a00, a11, a22, v00, v01, v02, v10, v11, v12, v20, v21, v22


@njit(cache=True)
def svd_sigma_v(F, sig_out, V_out):
    """Batch SVD helper: singular values and right singular vectors of F.

    F: (N, 3, 3). Fills sig_out (N, 3) and V_out (N, 3, 3); U is implied by
    U = F V diag(1/sigma) and never materialized.
    """
    for p in range(F.shape[0]):
        f = F[p]
        a00 = f[0, 0] * f[0, 0] + f[1, 0] * f[1, 0] + f[2, 0] * f[2, 0]
        a01 = f[0, 0] * f[0, 1] + f[1, 0] * f[1, 1] + f[2, 0] * f[2, 1]
        a02 = f[0, 0] * f[0, 2] + f[1, 0] * f[1, 2] + f[2, 0] * f[2, 2]
        a11 = f[0, 1] * f[0, 1] + f[1, 1] * f[1, 1] + f[2, 1] * f[2, 1]
        a12 = f[0, 1] * f[0, 2] + f[1, 1] * f[1, 2] + f[2, 1] * f[2, 2]
        a22 = f[0, 2] * f[0, 2] + f[1, 2] * f[1, 2] + f[2, 2] * f[2, 2]
        e0, e1, e2, v00, v01, v02, v10, v11, v12, v20, v21, v22 = _sym_eig3(
            a00, a01, a02, a11, a12, a22)
        sig_out[p, 0] = np.sqrt(max(e0, 0.0))
        sig_out[p, 1] = np.sqrt(max(e1, 0.0))
        sig_out[p, 2] = np.sqrt(max(e2, 0.0))
        V_out[p, 0, 0] = v00; V_out[p, 0, 1] = v01; V_out[p, 0, 2] = v02
        V_out[p, 1, 0] = v10; V_out[p, 1, 1] = v11; V_out[p, 1, 2] = v12
        V_out[p, 2, 0] = v20; V_out[p, 2, 1] = v21; V_out[p, 2, 2] = v22


@njit(cache=True)
def update_deformation(F, C, active, dt, err):
    """F <- (I + dt C) F for active particles.

    err[0] is set to 1 and err[1] to the particle index on the first
    non-finite or inverted gradient.
    """
    for p in range(F.shape[0]):
        if not active[p]:
            continue
        f = F[p]
        c = C[p]
        g00 = 1.0 + dt * c[0, 0]; g01 = dt * c[0, 1]; g02 = dt * c[0, 2]
        g10 = dt * c[1, 0]; g11 = 1.0 + dt * c[1, 1]; g12 = dt * c[1, 2]
        g20 = dt * c[2, 0]; g21 = dt * c[2, 1]; g22 = 1.0 + dt * c[2, 2]
        n00 = g00 * f[0, 0] + g01 * f[1, 0] + g02 * f[2, 0]
        n01 = g00 * f[0, 1] + g01 * f[1, 1] + g02 * f[2, 1]
        n02 = g00 * f[0, 2] + g01 * f[1, 2] + g02 * f[2, 2]
        n10 = g10 * f[0, 0] + g11 * f[1, 0] + g12 * f[2, 0]
        n11 = g10 * f[0, 1] + g11 * f[1, 1] + g12 * f[2, 1]
        n12 = g10 * f[0, 2] + g11 * f[1, 2] + g12 * f[2, 2]
        n20 = g20 * f[0, 0] + g21 * f[1, 0] + g22 * f[2, 0]
        n21 = g20 * f[0, 1] + g21 * f[1, 1] + g22 * f[2, 1]
        n22 = g20 * f[0, 2] + g21 * f[1, 2] + g22 * f[2, 2]
        det = (n00 * (n11 * n22 - n12 * n21)
               - n01 * (n10 * n22 - n12 * n20)
               + n02 * (n10 * n21 - n11 * n20))
        if not (det > 0.0) or not np.isfinite(det):
            if err[0] == 0:
                err[0] = 1
                err[1] = p
        f[0, 0] = n00; f[0, 1] = n01; f[0, 2] = n02
        f[1, 0] = n10; f[1, 1] = n11; f[1, 2] = n12
        f[2, 0] = n20; f[2, 1] = n21; f[2, 2] = n22


@njit(cache=True)
def p2g(x, v, C, F, m, vol0, material_id, mu_tab, lam_tab, smodel_tab, active,
        grid_m, grid_mv, dx, dt, err):
    """Particle-to-grid transfer with the fused MLS stress term.

    Scatters mass and momentum w * (m v + (m C + E) (x_i - x_p)) onto the
    3x3x3 stencil, E = -(4 dt / dx^2) vol0 P F^T. Inactive particles
    contribute nothing.
    """
    inv_dx = 1.0 / dx
    coeff = -4.0 * dt * inv_dx * inv_dx
    w0 = np.empty(3); w1 = np.empty(3); w2 = np.empty(3)
    for p in range(x.shape[0]):
        if not active[p]:
            continue
        f = F[p]
        mid = material_id[p]
        mu = mu_tab[mid]
        lam = lam_tab[mid]

        # Kirchhoff stress tau = P F^T of the current (trial) gradient
        J = (f[0, 0] * (f[1, 1] * f[2, 2] - f[1, 2] * f[2, 1])
             - f[0, 1] * (f[1, 0] * f[2, 2] - f[1, 2] * f[2, 0])
             + f[0, 2] * (f[1, 0] * f[2, 1] - f[1, 1] * f[2, 0]))
        t00 = 0.0; t01 = 0.0; t02 = 0.0
        t11 = 0.0; t12 = 0.0; t22 = 0.0
        if smodel_tab[mid] == STRESS_COROTATED:
            a00 = f[0, 0] * f[0, 0] + f[1, 0] * f[1, 0] + f[2, 0] * f[2, 0]
            a01 = f[0, 0] * f[0, 1] + f[1, 0] * f[1, 1] + f[2, 0] * f[2, 1]
            a02 = f[0, 0] * f[0, 2] + f[1, 0] * f[1, 2] + f[2, 0] * f[2, 2]
            a11 = f[0, 1] * f[0, 1] + f[1, 1] * f[1, 1] + f[2, 1] * f[2, 1]
            a12 = f[0, 1] * f[0, 2] + f[1, 1] * f[1, 2] + f[2, 1] * f[2, 2]
            a22 = f[0, 2] * f[0, 2] + f[1, 2] * f[1, 2] + f[2, 2] * f[2, 2]
            e0, e1, e2, q00, q01, q02, q10, q11, q12, q20, q21, q22 = _sym_eig3(
                a00, a01, a02, a11, a12, a22)
            s0 = np.sqrt(max(e0, 1e-24))
            s1 = np.sqrt(max(e1, 1e-24))
            s2 = np.sqrt(max(e2, 1e-24))
            # R = F V diag(1/sigma) V^T (polar rotation for det F > 0)
            h00 = q00 / s0; h01 = q01 / s1; h02 = q02 / s2
            h10 = q10 / s0; h11 = q11 / s1; h12 = q12 / s2
            h20 = q20 / s0; h21 = q21 / s1; h22 = q22 / s2
            # B = V diag(1/sigma) V^T (symmetric)
            b00 = h00 * q00 + h01 * q01 + h02 * q02
            b01 = h00 * q10 + h01 * q11 + h02 * q12
            b02 = h00 * q20 + h01 * q21 + h02 * q22
            b11 = h10 * q10 + h11 * q11 + h12 * q12
            b12 = h10 * q20 + h11 * q21 + h12 * q22
            b22 = h20 * q20 + h21 * q21 + h22 * q22
            r00 = f[0, 0] * b00 + f[0, 1] * b01 + f[0, 2] * b02
            r01 = f[0, 0] * b01 + f[0, 1] * b11 + f[0, 2] * b12
            r02 = f[0, 0] * b02 + f[0, 1] * b12 + f[0, 2] * b22
            r10 = f[1, 0] * b00 + f[1, 1] * b01 + f[1, 2] * b02
            r11 = f[1, 0] * b01 + f[1, 1] * b11 + f[1, 2] * b12
            r12 = f[1, 0] * b02 + f[1, 1] * b12 + f[1, 2] * b22
            r20 = f[2, 0] * b00 + f[2, 1] * b01 + f[2, 2] * b02
            r21 = f[2, 0] * b01 + f[2, 1] * b11 + f[2, 2] * b12
            r22 = f[2, 0] * b02 + f[2, 1] * b12 + f[2, 2] * b22
            # tau = 2 mu (F - R) F^T + lam (J - 1) J I
            d00 = f[0, 0] - r00; d01 = f[0, 1] - r01; d02 = f[0, 2] - r02
            d10 = f[1, 0] - r10; d11 = f[1, 1] - r11; d12 = f[1, 2] - r12
            d20 = f[2, 0] - r20; d21 = f[2, 1] - r21; d22 = f[2, 2] - r22
            vol = lam * (J - 1.0) * J
            t00 = 2.0 * mu * (d00 * f[0, 0] + d01 * f[0, 1] + d02 * f[0, 2]) + vol
            t01 = 2.0 * mu * (d00 * f[1, 0] + d01 * f[1, 1] + d02 * f[1, 2])
            t02 = 2.0 * mu * (d00 * f[2, 0] + d01 * f[2, 1] + d02 * f[2, 2])
            t11 = 2.0 * mu * (d10 * f[1, 0] + d11 * f[1, 1] + d12 * f[1, 2]) + vol
            t12 = 2.0 * mu * (d10 * f[2, 0] + d11 * f[2, 1] + d12 * f[2, 2])
            t22 = 2.0 * mu * (d20 * f[2, 0] + d21 * f[2, 1] + d22 * f[2, 2]) + vol
        else:
            # neo-hookean: tau = mu (F F^T - I) + lam log(J) I
            if not (J > 0.0) or not np.isfinite(J):
                if err[0] == 0:
                    err[0] = 2
                    err[1] = p
                continue
            lj = lam * np.log(J)
            t00 = mu * (f[0, 0] * f[0, 0] + f[0, 1] * f[0, 1] + f[0, 2] * f[0, 2] - 1.0) + lj
            t01 = mu * (f[0, 0] * f[1, 0] + f[0, 1] * f[1, 1] + f[0, 2] * f[1, 2])
            t02 = mu * (f[0, 0] * f[2, 0] + f[0, 1] * f[2, 1] + f[0, 2] * f[2, 2])
            t11 = mu * (f[1, 0] * f[1, 0] + f[1, 1] * f[1, 1] + f[1, 2] * f[1, 2] - 1.0) + lj
            t12 = mu * (f[1, 0] * f[2, 0] + f[1, 1] * f[2, 1] + f[1, 2] * f[2, 2])
            t22 = mu * (f[2, 0] * f[2, 0] + f[2, 1] * f[2, 1] + f[2, 2] * f[2, 2] - 1.0) + lj
        if not (np.isfinite(t00) and np.isfinite(t01) and np.isfinite(t02)
                and np.isfinite(t11) and np.isfinite(t12) and np.isfinite(t22)):
            if err[0] == 0:
                err[0] = 2
                err[1] = p
            continue

        scale = coeff * vol0[p]
        mp = m[p]
        c = C[p]
        # affine = m C + E (tau is symmetric)
        a00 = mp * c[0, 0] + scale * t00
        a01 = mp * c[0, 1] + scale * t01
        a02 = mp * c[0, 2] + scale * t02
        a10 = mp * c[1, 0] + scale * t01
        a11 = mp * c[1, 1] + scale * t11
        a12 = mp * c[1, 2] + scale * t12
        a20 = mp * c[2, 0] + scale * t02
        a21 = mp * c[2, 1] + scale * t12
        a22 = mp * c[2, 2] + scale * t22

        xp0 = x[p, 0] * inv_dx; xp1 = x[p, 1] * inv_dx; xp2 = x[p, 2] * inv_dx
        b0 = int(np.floor(xp0 - 0.5)); b1 = int(np.floor(xp1 - 0.5)); b2 = int(np.floor(xp2 - 0.5))
        f0 = xp0 - b0; f1 = xp1 - b1; f2 = xp2 - b2
        w0[0] = 0.5 * (1.5 - f0) ** 2; w0[1] = 0.75 - (f0 - 1.0) ** 2; w0[2] = 0.5 * (f0 - 0.5) ** 2
        w1[0] = 0.5 * (1.5 - f1) ** 2; w1[1] = 0.75 - (f1 - 1.0) ** 2; w1[2] = 0.5 * (f1 - 0.5) ** 2
        w2[0] = 0.5 * (1.5 - f2) ** 2; w2[1] = 0.75 - (f2 - 1.0) ** 2; w2[2] = 0.5 * (f2 - 0.5) ** 2
        mv0 = mp * v[p, 0]; mv1 = mp * v[p, 1]; mv2 = mp * v[p, 2]
        for i in range(3):
            wi = w0[i]
            d0 = (b0 + i - xp0) * dx
            gi = b0 + i
            for j in range(3):
                wij = wi * w1[j]
                d1 = (b1 + j - xp1) * dx
                gj = b1 + j
                for k in range(3):
                    wt = wij * w2[k]
                    d2 = (b2 + k - xp2) * dx
                    gk = b2 + k
                    grid_m[gi, gj, gk] += wt * mp
                    grid_mv[gi, gj, gk, 0] += wt * (mv0 + a00 * d0 + a01 * d1 + a02 * d2)
                    grid_mv[gi, gj, gk, 1] += wt * (mv1 + a10 * d0 + a11 * d1 + a12 * d2)
                    grid_mv[gi, gj, gk, 2] += wt * (mv2 + a20 * d0 + a21 * d1 + a22 * d2)


@njit(cache=True)
def scatter_impulses(x, forces, indices, grid_mv, dx, dt):
    """Add dt * w * f impulses of a sparse per-particle force field."""
    inv_dx = 1.0 / dx
    w0 = np.empty(3); w1 = np.empty(3); w2 = np.empty(3)
    for s in range(indices.shape[0]):
        p = indices[s]
        xp0 = x[p, 0] * inv_dx; xp1 = x[p, 1] * inv_dx; xp2 = x[p, 2] * inv_dx
        b0 = int(np.floor(xp0 - 0.5)); b1 = int(np.floor(xp1 - 0.5)); b2 = int(np.floor(xp2 - 0.5))
        f0 = xp0 - b0; f1 = xp1 - b1; f2 = xp2 - b2
        w0[0] = 0.5 * (1.5 - f0) ** 2; w0[1] = 0.75 - (f0 - 1.0) ** 2; w0[2] = 0.5 * (f0 - 0.5) ** 2
        w1[0] = 0.5 * (1.5 - f1) ** 2; w1[1] = 0.75 - (f1 - 1.0) ** 2; w1[2] = 0.5 * (f1 - 0.5) ** 2
        w2[0] = 0.5 * (1.5 - f2) ** 2; w2[1] = 0.75 - (f2 - 1.0) ** 2; w2[2] = 0.5 * (f2 - 0.5) ** 2
        i0 = dt * forces[s, 0]; i1 = dt * forces[s, 1]; i2 = dt * forces[s, 2]
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    wt = w0[i] * w1[j] * w2[k]
                    grid_mv[b0 + i, b1 + j, b2 + k, 0] += wt * i0
                    grid_mv[b0 + i, b1 + j, b2 + k, 1] += wt * i1
                    grid_mv[b0 + i, b1 + j, b2 + k, 2] += wt * i2


@njit(cache=True)
def g2p(x, v, C, grid_v, active, dx, dt, clamp_lo, clamp_hi):
    """Grid-to-particle gather: v, C = (4/dx^2) sum w v (x_i - x_p)^T, advect.

    Positions are clamped to [clamp_lo, clamp_hi]; returns the number of
    particles that needed clamping.
    """
    inv_dx = 1.0 / dx
    four_inv_dx2 = 4.0 * inv_dx * inv_dx
    clamped = 0
    w0 = np.empty(3); w1 = np.empty(3); w2 = np.empty(3)
    for p in range(x.shape[0]):
        if not active[p]:
            continue
        xp0 = x[p, 0] * inv_dx; xp1 = x[p, 1] * inv_dx; xp2 = x[p, 2] * inv_dx
        b0 = int(np.floor(xp0 - 0.5)); b1 = int(np.floor(xp1 - 0.5)); b2 = int(np.floor(xp2 - 0.5))
        f0 = xp0 - b0; f1 = xp1 - b1; f2 = xp2 - b2
        w0[0] = 0.5 * (1.5 - f0) ** 2; w0[1] = 0.75 - (f0 - 1.0) ** 2; w0[2] = 0.5 * (f0 - 0.5) ** 2
        w1[0] = 0.5 * (1.5 - f1) ** 2; w1[1] = 0.75 - (f1 - 1.0) ** 2; w1[2] = 0.5 * (f1 - 0.5) ** 2
        w2[0] = 0.5 * (1.5 - f2) ** 2; w2[1] = 0.75 - (f2 - 1.0) ** 2; w2[2] = 0.5 * (f2 - 0.5) ** 2
        nv0 = 0.0; nv1 = 0.0; nv2 = 0.0
        c00 = 0.0; c01 = 0.0; c02 = 0.0
        c10 = 0.0; c11 = 0.0; c12 = 0.0
        c20 = 0.0; c21 = 0.0; c22 = 0.0
        for i in range(3):
            wi = w0[i]
            d0 = (b0 + i - xp0) * dx
            gi = b0 + i
            for j in range(3):
                wij = wi * w1[j]
                d1 = (b1 + j - xp1) * dx
                gj = b1 + j
                for k in range(3):
                    wt = wij * w2[k]
                    d2 = (b2 + k - xp2) * dx
                    gk = b2 + k
                    gv0 = grid_v[gi, gj, gk, 0]
                    gv1 = grid_v[gi, gj, gk, 1]
                    gv2 = grid_v[gi, gj, gk, 2]
                    nv0 += wt * gv0; nv1 += wt * gv1; nv2 += wt * gv2
                    c00 += wt * gv0 * d0; c01 += wt * gv0 * d1; c02 += wt * gv0 * d2
                    c10 += wt * gv1 * d0; c11 += wt * gv1 * d1; c12 += wt * gv1 * d2
                    c20 += wt * gv2 * d0; c21 += wt * gv2 * d1; c22 += wt * gv2 * d2
        v[p, 0] = nv0; v[p, 1] = nv1; v[p, 2] = nv2
        C[p, 0, 0] = four_inv_dx2 * c00; C[p, 0, 1] = four_inv_dx2 * c01; C[p, 0, 2] = four_inv_dx2 * c02
        C[p, 1, 0] = four_inv_dx2 * c10; C[p, 1, 1] = four_inv_dx2 * c11; C[p, 1, 2] = four_inv_dx2 * c12
        C[p, 2, 0] = four_inv_dx2 * c20; C[p, 2, 1] = four_inv_dx2 * c21; C[p, 2, 2] = four_inv_dx2 * c22
        hit = False
        for a in range(3):
            nx = x[p, a] + dt * v[p, a]
            if nx < clamp_lo:
                nx = clamp_lo
                hit = True
            elif nx > clamp_hi:
                nx = clamp_hi
                hit = True
            x[p, a] = nx
        if hit:
            clamped += 1
    return clamped


@njit(cache=True)
def apply_plasticity_batch(F, material_id, plast_tab, mu_tab, lam_tab,
                           alpha_tab, tauy_tab, cmin_tab, cmax_tab, active):
    """Return-map all active particles in place (see plasticity.py for the
    single-matrix reference these kernels are tested against)."""
    for p in range(F.shape[0]):
        if not active[p]:
            continue
        mid = material_id[p]
        model = plast_tab[mid]
        if model == PLASTICITY_NONE:
            continue
        f = F[p]
        a00 = f[0, 0] * f[0, 0] + f[1, 0] * f[1, 0] + f[2, 0] * f[2, 0]
        a01 = f[0, 0] * f[0, 1] + f[1, 0] * f[1, 1] + f[2, 0] * f[2, 1]
        a02 = f[0, 0] * f[0, 2] + f[1, 0] * f[1, 2] + f[2, 0] * f[2, 2]
        a11 = f[0, 1] * f[0, 1] + f[1, 1] * f[1, 1] + f[2, 1] * f[2, 1]
        a12 = f[0, 1] * f[0, 2] + f[1, 1] * f[1, 2] + f[2, 1] * f[2, 2]
        a22 = f[0, 2] * f[0, 2] + f[1, 2] * f[1, 2] + f[2, 2] * f[2, 2]
        e0, e1, e2, v00, v01, v02, v10, v11, v12, v20, v21, v22 = _sym_eig3(
            a00, a01, a02, a11, a12, a22)
        s0 = np.sqrt(max(e0, 1e-24))
        s1 = np.sqrt(max(e1, 1e-24))
        s2 = np.sqrt(max(e2, 1e-24))

        # target singular values
        if model == PLASTICITY_CLAMP:
            n0 = min(max(s0, cmin_tab[mid]), cmax_tab[mid])
            n1 = min(max(s1, cmin_tab[mid]), cmax_tab[mid])
            n2 = min(max(s2, cmin_tab[mid]), cmax_tab[mid])
        else:
            le0 = np.log(s0); le1 = np.log(s1); le2 = np.log(s2)
            tr = le0 + le1 + le2
            h0 = le0 - tr / 3.0; h1 = le1 - tr / 3.0; h2 = le2 - tr / 3.0
            norm_hat = np.sqrt(h0 * h0 + h1 * h1 + h2 * h2)
            mu = mu_tab[mid]
            if model == PLASTICITY_VON_MISES:
                dgamma = norm_hat - tauy_tab[mid] / (2.0 * mu)
            else:  # Drucker-Prager
                if tr > 0.0:
                    n0 = 1.0; n1 = 1.0; n2 = 1.0
                    _reconstruct(F, p, n0 / s0, n1 / s1, n2 / s2,
                                 v00, v01, v02, v10, v11, v12, v20, v21, v22)
                    continue
                dgamma = norm_hat + alpha_tab[mid] * (
                    (3.0 * lam_tab[mid] + 2.0 * mu) / (2.0 * mu)) * tr
            if dgamma <= 0.0 or norm_hat < 1e-300:
                continue
            k = dgamma / norm_hat
            n0 = np.exp(le0 - k * h0)
            n1 = np.exp(le1 - k * h1)
            n2 = np.exp(le2 - k * h2)
        _reconstruct(F, p, n0 / s0, n1 / s1, n2 / s2,
                     v00, v01, v02, v10, v11, v12, v20, v21, v22)


@njit(cache=True, inline="always")
def _reconstruct(F, p, g0, g1, g2, v00, v01, v02, v10, v11, v12, v20, v21, v22):
    """F[p] <- F[p] V diag(g) V^T, i.e. U diag(new_sigma) V^T with
    g = new_sigma / sigma and U implied by the SVD."""
    # M = V diag(g) V^T (symmetric)
    m00 = g0 * v00 * v00 + g1 * v01 * v01 + g2 * v02 * v02
    m01 = g0 * v00 * v10 + g1 * v01 * v11 + g2 * v02 * v12
    m02 = g0 * v00 * v20 + g1 * v01 * v21 + g2 * v02 * v22
    m11 = g0 * v10 * v10 + g1 * v11 * v11 + g2 * v12 * v12
    m12 = g0 * v10 * v20 + g1 * v11 * v21 + g2 * v12 * v22
    m22 = g0 * v20 * v20 + g1 * v21 * v21 + g2 * v22 * v22
    f = F[p]
    n00 = f[0, 0] * m00 + f[0, 1] * m01 + f[0, 2] * m02
    n01 = f[0, 0] * m01 + f[0, 1] * m11 + f[0, 2] * m12
    n02 = f[0, 0] * m02 + f[0, 1] * m12 + f[0, 2] * m22
    n10 = f[1, 0] * m00 + f[1, 1] * m01 + f[1, 2] * m02
    n11 = f[1, 0] * m01 + f[1, 1] * m11 + f[1, 2] * m12
    n12 = f[1, 0] * m02 + f[1, 1] * m12 + f[1, 2] * m22
    n20 = f[2, 0] * m00 + f[2, 1] * m01 + f[2, 2] * m02
    n21 = f[2, 0] * m01 + f[2, 1] * m11 + f[2, 2] * m12
    n22 = f[2, 0] * m02 + f[2, 1] * m12 + f[2, 2] * m22
    f[0, 0] = n00; f[0, 1] = n01; f[0, 2] = n02
    f[1, 0] = n10; f[1, 1] = n11; f[1, 2] = n12
    f[2, 0] = n20; f[2, 1] = n21; f[2, 2] = n22


# ---------------------------------------------------------------------------
# medial primitive distance queries

@njit(cache=True, inline="always")
def _sphere_query(px, py, pz, cx, cy, cz, r):
    dx = px - cx; dy = py - cy; dz = pz - cz
    g = np.sqrt(dx * dx + dy * dy + dz * dz)
    if g > 1e-12:
        nx = dx / g; ny = dy / g; nz = dz / g
    else:
        nx = 1.0; ny = 0.0; nz = 0.0
    return g - r, nx, ny, nz


@njit(cache=True, inline="always")
def _cone_t(px, py, pz, c1x, c1y, c1z, r1, c2x, c2y, c2z, r2):
    """Minimizing interpolation parameter of a medial cone (two-sphere lerp)."""
    ax = c2x - c1x; ay = c2y - c1y; az = c2z - c1z
    qx = px - c1x; qy = py - c1y; qz = pz - c1z
    A = ax * ax + ay * ay + az * az
    R = r2 - r1
    if A < 1e-24:
        return 0.0
    if A - R * R < 1e-12 * A:
        # radius growth dominates the axis: distance is monotone in t
        d0 = np.sqrt(qx * qx + qy * qy + qz * qz) - r1
        ex = px - c2x; ey = py - c2y; ez = pz - c2z
        d1 = np.sqrt(ex * ex + ey * ey + ez * ez) - r2
        return 0.0 if d0 <= d1 else 1.0
    B = qx * ax + qy * ay + qz * az
    qq = qx * qx + qy * qy + qz * qz
    disc = (A * qq - B * B) / (A - R * R)
    if disc < 0.0:
        disc = 0.0
    t = (B + R * np.sqrt(disc)) / A
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return t


@njit(cache=True, inline="always")
def _lerp_sphere_query(px, py, pz, c1x, c1y, c1z, r1, c2x, c2y, c2z, r2, t):
    cx = c1x + t * (c2x - c1x); cy = c1y + t * (c2y - c1y); cz = c1z + t * (c2z - c1z)
    r = r1 + t * (r2 - r1)
    return _sphere_query(px, py, pz, cx, cy, cz, r)


@njit(cache=True)
def _primitive_query(px, py, pz, ptype, cent, rad, vel):
    """Distance query for one primitive.

    Returns (d, nx, ny, nz, w0, w1, w2): signed distance, outward normal and
    the barycentric velocity weights of the three control spheres.
    """
    if ptype == PRIM_SPHERE:
        d, nx, ny, nz = _sphere_query(px, py, pz, cent[0, 0], cent[0, 1], cent[0, 2], rad[0])
        return d, nx, ny, nz, 1.0, 0.0, 0.0
    if ptype == PRIM_CONE:
        t = _cone_t(px, py, pz, cent[0, 0], cent[0, 1], cent[0, 2], rad[0],
                    cent[1, 0], cent[1, 1], cent[1, 2], rad[1])
        d, nx, ny, nz = _lerp_sphere_query(px, py, pz, cent[0, 0], cent[0, 1], cent[0, 2],
                                           rad[0], cent[1, 0], cent[1, 1], cent[1, 2], rad[1], t)
        return d, nx, ny, nz, 1.0 - t, t, 0.0

    # slab: interior critical point of the three-sphere interpolation, with
    # the three edge cones as boundary candidates
    best_d = np.inf
    best_nx = 1.0; best_ny = 0.0; best_nz = 0.0
    best_w0 = 1.0; best_w1 = 0.0; best_w2 = 0.0

    e1x = cent[1, 0] - cent[0, 0]; e1y = cent[1, 1] - cent[0, 1]; e1z = cent[1, 2] - cent[0, 2]
    e2x = cent[2, 0] - cent[0, 0]; e2y = cent[2, 1] - cent[0, 1]; e2z = cent[2, 2] - cent[0, 2]
    qx = px - cent[0, 0]; qy = py - cent[0, 1]; qz = pz - cent[0, 2]
    E11 = e1x * e1x + e1y * e1y + e1z * e1z
    E12 = e1x * e2x + e1y * e2y + e1z * e2z
    E22 = e2x * e2x + e2y * e2y + e2z * e2z
    det = E11 * E22 - E12 * E12
    if det > 1e-20:
        rho1 = rad[1] - rad[0]
        rho2 = rad[2] - rad[0]
        qe1 = qx * e1x + qy * e1y + qz * e1z
        qe2 = qx * e2x + qy * e2y + qz * e2z
        b01 = (E22 * qe1 - E12 * qe2) / det
        b02 = (-E12 * qe1 + E11 * qe2) / det
        br1 = (E22 * rho1 - E12 * rho2) / det
        br2 = (-E12 * rho1 + E11 * rho2) / det
        m0x = b01 * e1x + b02 * e2x - qx
        m0y = b01 * e1y + b02 * e2y - qy
        m0z = b01 * e1z + b02 * e2z - qz
        m1x = br1 * e1x + br2 * e2x
        m1y = br1 * e1y + br2 * e2y
        m1z = br1 * e1z + br2 * e2z
        s2 = 1.0 - (m1x * m1x + m1y * m1y + m1z * m1z)
        if s2 > 1e-12:
            g = np.sqrt(m0x * m0x + m0y * m0y + m0z * m0z) / np.sqrt(s2)
            beta1 = b01 + g * br1
            beta2 = b02 + g * br2
            if beta1 >= 0.0 and beta2 >= 0.0 and beta1 + beta2 <= 1.0:
                cbx = cent[0, 0] + beta1 * e1x + beta2 * e2x
                cby = cent[0, 1] + beta1 * e1y + beta2 * e2y
                cbz = cent[0, 2] + beta1 * e1z + beta2 * e2z
                rb = rad[0] + beta1 * rho1 + beta2 * rho2
                d, nx, ny, nz = _sphere_query(px, py, pz, cbx, cby, cbz, rb)
                if g <= 1e-12:
                    # on the medial sheet: fall back to the plane normal
                    nx = e1y * e2z - e1z * e2y
                    ny = e1z * e2x - e1x * e2z
                    nz = e1x * e2y - e1y * e2x
                    nl = np.sqrt(nx * nx + ny * ny + nz * nz)
                    nx /= nl; ny /= nl; nz /= nl
                best_d = d
                best_nx = nx; best_ny = ny; best_nz = nz
                best_w0 = 1.0 - beta1 - beta2; best_w1 = beta1; best_w2 = beta2

    for edge in range(3):
        if edge == 0:
            i0 = 0; i1 = 1
        elif edge == 1:
            i0 = 1; i1 = 2
        else:
            i0 = 0; i1 = 2
        t = _cone_t(px, py, pz, cent[i0, 0], cent[i0, 1], cent[i0, 2], rad[i0],
                    cent[i1, 0], cent[i1, 1], cent[i1, 2], rad[i1])
        d, nx, ny, nz = _lerp_sphere_query(
            px, py, pz, cent[i0, 0], cent[i0, 1], cent[i0, 2], rad[i0],
            cent[i1, 0], cent[i1, 1], cent[i1, 2], rad[i1], t)
        if d < best_d:
            best_d = d
            best_nx = nx; best_ny = ny; best_nz = nz
            w0 = 0.0; w1 = 0.0; w2 = 0.0
            if i0 == 0:
                w0 = 1.0 - t
            elif i0 == 1:
                w1 = 1.0 - t
            else:
                w2 = 1.0 - t
            if i1 == 1:
                w1 = t
            else:
                w2 = t
            best_w0 = w0; best_w1 = w1; best_w2 = w2
    return best_d, best_nx, best_ny, best_nz, best_w0, best_w1, best_w2


@njit(cache=True, inline="always")
def _hash_cell(coord, hash_h, hash_n):
    c = int(np.floor(coord / hash_h))
    if c < 0:
        c = 0
    elif c >= hash_n:
        c = hash_n - 1
    return c


@njit(cache=True)
def _world_query(px, py, pz, ptype, cent, rad, vel,
                 cell_start, cell_items, hash_n, hash_h):
    """Minimum-distance query over the 3^3 hash cell neighborhood.

    Returns (d, nx, ny, nz, vx, vy, vz, prim_index); d = +inf and index -1
    when no primitive is registered nearby.
    """
    best_d = np.inf
    best_nx = 0.0; best_ny = 0.0; best_nz = 0.0
    best_vx = 0.0; best_vy = 0.0; best_vz = 0.0
    best_i = -1
    ci = _hash_cell(px, hash_h, hash_n)
    cj = _hash_cell(py, hash_h, hash_n)
    ck = _hash_cell(pz, hash_h, hash_n)
    for oi in range(-1, 2):
        gi = ci + oi
        if gi < 0 or gi >= hash_n:
            continue
        for oj in range(-1, 2):
            gj = cj + oj
            if gj < 0 or gj >= hash_n:
                continue
            for ok in range(-1, 2):
                gk = ck + ok
                if gk < 0 or gk >= hash_n:
                    continue
                cell = (gi * hash_n + gj) * hash_n + gk
                for s in range(cell_start[cell], cell_start[cell + 1]):
                    idx = cell_items[s]
                    d, nx, ny, nz, w0, w1, w2 = _primitive_query(
                        px, py, pz, ptype[idx], cent[idx], rad[idx], vel[idx])
                    if d < best_d:
                        best_d = d
                        best_nx = nx; best_ny = ny; best_nz = nz
                        best_vx = w0 * vel[idx, 0, 0] + w1 * vel[idx, 1, 0] + w2 * vel[idx, 2, 0]
                        best_vy = w0 * vel[idx, 0, 1] + w1 * vel[idx, 1, 1] + w2 * vel[idx, 2, 1]
                        best_vz = w0 * vel[idx, 0, 2] + w1 * vel[idx, 1, 2] + w2 * vel[idx, 2, 2]
                        best_i = idx
    return best_d, best_nx, best_ny, best_nz, best_vx, best_vy, best_vz, best_i


@njit(cache=True)
def query_points(points, ptype, cent, rad, vel, cell_start, cell_items,
                 hash_n, hash_h, out_d, out_n, out_v, out_idx):
    for i in range(points.shape[0]):
        d, nx, ny, nz, vx, vy, vz, pi = _world_query(
            points[i, 0], points[i, 1], points[i, 2],
            ptype, cent, rad, vel, cell_start, cell_items, hash_n, hash_h)
        out_d[i] = d
        out_n[i, 0] = nx; out_n[i, 1] = ny; out_n[i, 2] = nz
        out_v[i, 0] = vx; out_v[i, 1] = vy; out_v[i, 2] = vz
        out_idx[i] = pi


@njit(cache=True)
def query_points_exhaustive(points, ptype, cent, rad, vel, out_d, out_n, out_v, out_idx):
    """Reference scan over every primitive (no hash); used as the oracle."""
    for i in range(points.shape[0]):
        best_d = np.inf
        best_nx = 0.0; best_ny = 0.0; best_nz = 0.0
        best_vx = 0.0; best_vy = 0.0; best_vz = 0.0
        best_i = -1
        px = points[i, 0]; py = points[i, 1]; pz = points[i, 2]
        for idx in range(ptype.shape[0]):
            d, nx, ny, nz, w0, w1, w2 = _primitive_query(
                px, py, pz, ptype[idx], cent[idx], rad[idx], vel[idx])
            if d < best_d:
                best_d = d
                best_nx = nx; best_ny = ny; best_nz = nz
                best_vx = w0 * vel[idx, 0, 0] + w1 * vel[idx, 1, 0] + w2 * vel[idx, 2, 0]
                best_vy = w0 * vel[idx, 0, 1] + w1 * vel[idx, 1, 1] + w2 * vel[idx, 2, 1]
                best_vz = w0 * vel[idx, 0, 2] + w1 * vel[idx, 1, 2] + w2 * vel[idx, 2, 2]
                best_i = idx
        out_d[i] = best_d
        out_n[i, 0] = best_nx; out_n[i, 1] = best_ny; out_n[i, 2] = best_nz
        out_v[i, 0] = best_vx; out_v[i, 1] = best_vy; out_v[i, 2] = best_vz
        out_idx[i] = best_i


@njit(cache=True)
def eval_sdf_region(lo0, lo1, lo2, hi0, hi1, hi2, dx,
                    ptype, cent, rad, vel, cell_start, cell_items, hash_n, hash_h,
                    out_d, out_n, out_v):
    """Evaluate the rig SDF on grid nodes [lo, hi) of the simulation lattice.

    Output arrays are sized to the region (hi - lo per axis)."""
    for i in range(lo0, hi0):
        px = i * dx
        for j in range(lo1, hi1):
            py = j * dx
            for k in range(lo2, hi2):
                pz = k * dx
                d, nx, ny, nz, vx, vy, vz, _ = _world_query(
                    px, py, pz, ptype, cent, rad, vel,
                    cell_start, cell_items, hash_n, hash_h)
                oi = i - lo0; oj = j - lo1; ok = k - lo2
                out_d[oi, oj, ok] = d
                out_n[oi, oj, ok, 0] = nx; out_n[oi, oj, ok, 1] = ny; out_n[oi, oj, ok, 2] = nz
                out_v[oi, oj, ok, 0] = vx; out_v[oi, oj, ok, 1] = vy; out_v[oi, oj, ok, 2] = vz


@njit(cache=True)
def project_particles(x, v, active, ptype, cent, rad, vel,
                      cell_start, cell_items, hash_n, hash_h,
                      clamp_lo, clamp_hi, max_rounds):
    """Particle-level boundary projection.

    Penetrating particles move to the closest surface point and take the
    boundary velocity there. Overlapping primitives can re-capture a
    projected particle, so the move repeats up to max_rounds times.
    Returns (particles adjusted, deepest penetration seen).
    """
    adjusted = 0
    deepest = 0.0
    for p in range(x.shape[0]):
        if not active[p]:
            continue
        moved = False
        for _ in range(max_rounds):
            d, nx, ny, nz, vx, vy, vz, pi = _world_query(
                x[p, 0], x[p, 1], x[p, 2], ptype, cent, rad, vel,
                cell_start, cell_items, hash_n, hash_h)
            if pi < 0 or d >= -1e-12:
                break
            if -d > deepest:
                deepest = -d
            # x += D with D = closest_point - x = -d * n (d < 0)
            x[p, 0] -= d * nx
            x[p, 1] -= d * ny
            x[p, 2] -= d * nz
            v[p, 0] = vx
            v[p, 1] = vy
            v[p, 2] = vz
            moved = True
        if moved:
            adjusted += 1
            for a in range(3):
                if x[p, a] < clamp_lo:
                    x[p, a] = clamp_lo
                elif x[p, a] > clamp_hi:
                    x[p, a] = clamp_hi
    return adjusted, deepest


@njit(cache=True)
def min_sdf_over_points(x, active, ptype, cent, rad, vel,
                        cell_start, cell_items, hash_n, hash_h):
    """Minimum signed distance over active points (penetration audit)."""
    best = np.inf
    for p in range(x.shape[0]):
        if not active[p]:
            continue
        d, _, _, _, _, _, _, pi = _world_query(
            x[p, 0], x[p, 1], x[p, 2], ptype, cent, rad, vel,
            cell_start, cell_items, hash_n, hash_h)
        if pi >= 0 and d < best:
            best = d
    return best
