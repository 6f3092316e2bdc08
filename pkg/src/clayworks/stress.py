"""Constitutive models: first Piola stress, strain energy, fused force term.

Two hyperelastic models are supported:

* corotated:   P(F) = 2 mu (F - R) + lam (J - 1) J F^{-T},  R from the SVD
* neo_hookean: P(F) = mu (F - F^{-T}) + lam log(J) F^{-T}

whose Kirchhoff forms P F^T are 2 mu (F - R) F^T + lam (J - 1) J I and
mu (F F^T - I) + lam log(J) I respectively. Both vanish at F = I.

The force term fused into the momentum transfer is
E = -(4 dt / dx^2) vol0 P F^T; it enters the per-particle affine matrix
as (m C + E), so a stretched sample pulls grid nodes back toward it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import STRESS_COROTATED, STRESS_NEOHOOKEAN, MaterialParams


class SingularConfigurationError(ValueError):
    """det(F) <= 0: the deformation gradient has turned inside out."""


@dataclass
class StressEvaluation:
    piola: np.ndarray   # (3, 3) first Piola stress
    fused: np.ndarray   # (3, 3) -(4 dt / dx^2) vol0 P F^T


def _checked_det(F: np.ndarray) -> float:
    J = float(np.linalg.det(F))
    if not J > 0.0:
        raise SingularConfigurationError(f"det(F) = {J} <= 0")
    return J


def piola_stress(F: np.ndarray, material: MaterialParams) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    J = _checked_det(F)
    Finv_T = np.linalg.inv(F).T
    if material.stress_model == STRESS_COROTATED:
        U, _, Wt = np.linalg.svd(F)
        R = U @ Wt
        return 2.0 * material.mu * (F - R) + material.lam * (J - 1.0) * J * Finv_T
    if material.stress_model == STRESS_NEOHOOKEAN:
        return material.mu * (F - Finv_T) + material.lam * np.log(J) * Finv_T
    raise ValueError(f"unknown stress model {material.stress_model}")


def kirchhoff_stress(F: np.ndarray, material: MaterialParams) -> np.ndarray:
    """P F^T, the form the transfer kernels actually consume."""
    F = np.asarray(F, dtype=np.float64)
    J = _checked_det(F)
    if material.stress_model == STRESS_COROTATED:
        U, _, Wt = np.linalg.svd(F)
        R = U @ Wt
        return 2.0 * material.mu * (F - R) @ F.T + material.lam * (J - 1.0) * J * np.eye(3)
    if material.stress_model == STRESS_NEOHOOKEAN:
        return material.mu * (F @ F.T - np.eye(3)) + material.lam * np.log(J) * np.eye(3)
    raise ValueError(f"unknown stress model {material.stress_model}")


def strain_energy(F: np.ndarray, material: MaterialParams) -> float:
    """Energy density whose F-gradient is piola_stress (finite-difference tested)."""
    F = np.asarray(F, dtype=np.float64)
    J = _checked_det(F)
    if material.stress_model == STRESS_COROTATED:
        sig = np.linalg.svd(F, compute_uv=False)
        return float(material.mu * np.sum((sig - 1.0) ** 2)
                     + 0.5 * material.lam * (J - 1.0) ** 2)
    if material.stress_model == STRESS_NEOHOOKEAN:
        logJ = np.log(J)
        return float(0.5 * material.mu * (np.trace(F @ F.T) - 3.0)
                     - material.mu * logJ + 0.5 * material.lam * logJ**2)
    raise ValueError(f"unknown stress model {material.stress_model}")


def evaluate_stress(F: np.ndarray, material: MaterialParams, *,
                    dt: float, dx: float, vol0: float) -> StressEvaluation:
    P = piola_stress(F, material)
    fused = -(4.0 * dt / dx**2) * vol0 * (P @ np.asarray(F, dtype=np.float64).T)
    return StressEvaluation(piola=P, fused=fused)
