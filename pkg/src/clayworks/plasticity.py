"""Plastic return mappings on the deformation gradient.

All models act on the SVD F = U diag(sigma) W^T through the Hencky
strain eps = log(sigma):

* von_mises:      dgamma = |eps_hat| - tau_y / (2 mu)
* drucker_prager: dgamma = |eps_hat| + alpha (3 lam + 2 mu)/(2 mu) tr(eps)
                  for tr(eps) <= 0; expanding states (tr(eps) > 0) project
                  to the cone tip F <- U W^T
* clamp:          sigma <- clip(sigma, sigma_min, sigma_max)

For dgamma > 0 the shear models return U exp(eps - dgamma eps_hat/|eps_hat|) W^T.
Each mapping is a projection: applying it twice equals applying it once.
"""

from __future__ import annotations

import numpy as np

from .types import (
    PLASTICITY_CLAMP,
    PLASTICITY_DRUCKER_PRAGER,
    PLASTICITY_NONE,
    PLASTICITY_VON_MISES,
    MaterialParams,
)


def hencky_strain(F: np.ndarray) -> np.ndarray:
    """log of the singular values of F (requires det(F) > 0)."""
    sig = np.linalg.svd(np.asarray(F, dtype=np.float64), compute_uv=False)
    return np.log(sig)


def apply_plasticity(F: np.ndarray, material: MaterialParams) -> np.ndarray:
    """Return-map a single deformation gradient; F is not modified."""
    F = np.asarray(F, dtype=np.float64)
    if not np.all(np.isfinite(F)):
        raise ValueError("non-finite deformation gradient")
    if material.plasticity == PLASTICITY_NONE:
        return F.copy()

    U, sig, Wt = np.linalg.svd(F)
    if material.plasticity == PLASTICITY_CLAMP:
        sig = np.clip(sig, material.clamp_min, material.clamp_max)
        return (U * sig) @ Wt

    eps = np.log(sig)
    tr = eps.sum()
    eps_hat = eps - tr / 3.0
    norm_hat = float(np.linalg.norm(eps_hat))

    if material.plasticity == PLASTICITY_VON_MISES:
        dgamma = norm_hat - material.tau_y / (2.0 * material.mu)
    elif material.plasticity == PLASTICITY_DRUCKER_PRAGER:
        if tr > 0.0:
            # expansion: the sand separates; snap to the undeformed cone tip
            return U @ Wt
        dgamma = norm_hat + material.dp_alpha * (
            (3.0 * material.lam + 2.0 * material.mu) / (2.0 * material.mu)) * tr
    else:
        raise ValueError(f"unknown plasticity model {material.plasticity}")

    if dgamma <= 0.0 or norm_hat == 0.0:
        return F.copy()
    new_sig = np.exp(eps - dgamma * eps_hat / norm_hat)
    return (U * new_sig) @ Wt
