import numpy as np
import pytest

from clayworks import kernels
from clayworks.plasticity import apply_plasticity, hencky_strain
from clayworks.types import (
    PLASTICITY_CLAMP,
    PLASTICITY_DRUCKER_PRAGER,
    PLASTICITY_NONE,
    PLASTICITY_VON_MISES,
    MaterialParams,
    material_table_arrays,
)


def mat(plasticity, mu=1.0, lam=1.0, **kw):
    return MaterialParams(mu=mu, lam=lam, density=1000.0, plasticity=plasticity, **kw)


ALL_MODELS = [
    mat(PLASTICITY_VON_MISES, tau_y=0.1),
    mat(PLASTICITY_DRUCKER_PRAGER, dp_alpha=0.3),
    mat(PLASTICITY_CLAMP, clamp_min=0.8, clamp_max=1.2),
]


def random_f(rng, spread=0.4):
    while True:
        F = np.eye(3) + spread * rng.standard_normal((3, 3))
        if np.linalg.det(F) > 0.05:
            return F


def deviatoric_norm(F):
    eps = hencky_strain(F)
    return float(np.linalg.norm(eps - eps.sum() / 3.0))


def test_identity_unchanged_all_models():
    for m in ALL_MODELS:
        np.testing.assert_allclose(apply_plasticity(np.eye(3), m), np.eye(3), atol=1e-12)


def test_von_mises_projects_to_yield_surface():
    m = mat(PLASTICITY_VON_MISES, mu=1.0, tau_y=0.1)
    out = apply_plasticity(np.diag([2.0, 0.5, 1.0]), m)
    assert abs(deviatoric_norm(out) - 0.05) < 1e-8


def test_clamp_example():
    m = mat(PLASTICITY_CLAMP, clamp_min=0.8, clamp_max=1.2)
    out = apply_plasticity(np.diag([1.5, 1.0, 0.5]), m)
    sig = np.sort(np.linalg.svd(out, compute_uv=False))[::-1]
    np.testing.assert_allclose(sig, [1.2, 1.0, 0.8], atol=1e-12)


def test_drucker_prager_expansion_projects_to_tip():
    # tr(eps) > 0: output is the pure rotation part
    rng = np.random.default_rng(5)
    A = rng.standard_normal((3, 3))
    Q = np.linalg.qr(A)[0]
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    F = Q @ np.diag([1.3, 1.1, 1.05])
    out = apply_plasticity(F, mat(PLASTICITY_DRUCKER_PRAGER, dp_alpha=0.3))
    np.testing.assert_allclose(out, Q, atol=1e-9)


@pytest.mark.parametrize("m", ALL_MODELS, ids=["von_mises", "drucker_prager", "clamp"])
def test_return_mapping_idempotent(m):
    rng = np.random.default_rng(11)
    for _ in range(1000):
        F = random_f(rng)
        once = apply_plasticity(F, m)
        twice = apply_plasticity(once, m)
        np.testing.assert_allclose(twice, once, atol=1e-9)


def test_yield_admissibility():
    rng = np.random.default_rng(12)
    vm = mat(PLASTICITY_VON_MISES, mu=2.0, tau_y=0.3)
    cl = mat(PLASTICITY_CLAMP, clamp_min=0.7, clamp_max=1.4)
    for _ in range(1000):
        F = random_f(rng)
        out = apply_plasticity(F, vm)
        assert deviatoric_norm(out) <= 0.3 / (2 * 2.0) + 1e-8
        sig = np.linalg.svd(apply_plasticity(F, cl), compute_uv=False)
        assert np.all(sig >= 0.7 - 1e-9) and np.all(sig <= 1.4 + 1e-9)


def test_von_mises_preserves_volumetric_strain():
    rng = np.random.default_rng(13)
    m = mat(PLASTICITY_VON_MISES, tau_y=0.05)
    for _ in range(50):
        F = random_f(rng)
        out = apply_plasticity(F, m)
        assert abs(hencky_strain(out).sum() - hencky_strain(F).sum()) < 1e-9


def test_batch_kernel_matches_reference():
    rng = np.random.default_rng(14)
    mats = [mat(PLASTICITY_NONE)] + ALL_MODELS
    tab = material_table_arrays(mats)
    n = 1000
    F = np.stack([random_f(rng) for _ in range(n)])
    mid = rng.integers(0, len(mats), n).astype(np.int32)
    expected = np.stack([apply_plasticity(F[i], mats[mid[i]]) for i in range(n)])
    Fk = F.copy()
    kernels.apply_plasticity_batch(
        Fk, mid, tab["plasticity"], tab["mu"], tab["lam"], tab["dp_alpha"],
        tab["tau_y"], tab["clamp_min"], tab["clamp_max"], np.ones(n, dtype=bool))
    np.testing.assert_allclose(Fk, expected, atol=2e-11)


def test_batch_kernel_skips_inactive():
    rng = np.random.default_rng(15)
    tab = material_table_arrays([mat(PLASTICITY_CLAMP, clamp_min=0.9, clamp_max=1.1)])
    F = np.stack([random_f(rng) for _ in range(10)])
    orig = F.copy()
    active = np.zeros(10, dtype=bool)
    kernels.apply_plasticity_batch(
        F, np.zeros(10, dtype=np.int32), tab["plasticity"], tab["mu"], tab["lam"],
        tab["dp_alpha"], tab["tau_y"], tab["clamp_min"], tab["clamp_max"], active)
    np.testing.assert_array_equal(F, orig)


def test_non_finite_input_rejected():
    m = mat(PLASTICITY_VON_MISES, tau_y=0.1)
    F = np.eye(3)
    F[0, 0] = np.nan
    with pytest.raises(ValueError):
        apply_plasticity(F, m)
