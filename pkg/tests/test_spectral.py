import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fixture_mesh, icosphere
from speciso.errors import DegenerateGeometryError, MeshValidationError, ParameterError, PreconditionError
from speciso.geometry import surface_area
from speciso.mesh_core import TriangleMesh, make_dumbbell
from speciso.spectral import (
    RESIDUAL_LIMIT,
    assemble_operators,
    cotangent_weights,
    count_eigenvalues_below,
    eigenvalues,
    lumped_vertex_areas,
    minmax_bound_from_functions,
    rayleigh_quotient,
)

SPHERE = [0, 2, 2, 2, 6, 6, 6, 6, 6]


def test_stiffness_kills_constants():
    for scheme in ("lumped", "consistent"):
        K, M = assemble_operators(icosphere(3), scheme)
        assert np.abs(K @ np.ones(K.shape[0])).max() < 1e-10
        assert abs(K - K.T).max() == 0
        assert abs(M - M.T).max() == 0


def test_mass_totals_area():
    m = icosphere(3)
    for scheme in ("lumped", "consistent"):
        _, M = assemble_operators(m, scheme)
        assert M.sum() == pytest.approx(surface_area(m), rel=1e-12)
    assert lumped_vertex_areas(m).sum() == pytest.approx(surface_area(m), rel=1e-12)


def test_degenerate_face_named():
    m = icosphere(1)
    v = m.vertices.copy()
    a, b, c = m.faces[0]
    v[c] = v[a]
    bad = TriangleMesh(v, m.faces)
    # validation refuses the mesh first; the weight routine names the face itself
    with pytest.raises(MeshValidationError, match="degenerate"):
        assemble_operators(bad, "lumped")
    with pytest.raises(DegenerateGeometryError, match="face 0"):
        cotangent_weights(bad)


def test_unknown_scheme():
    with pytest.raises(ParameterError):
        assemble_operators(icosphere(1), "diagonal")


@pytest.mark.parametrize("scheme", ["lumped", "consistent"])
def test_sphere_spectrum(scheme):
    res = eigenvalues(icosphere(4), 9, scheme)
    lam = res.eigenvalues
    assert lam[0] == pytest.approx(0, abs=1e-9)
    np.testing.assert_allclose(lam[1:4], 2, rtol=0.02)
    np.testing.assert_allclose(lam[4:9], 6, rtol=0.03)
    assert res.solver_residuals.max() <= RESIDUAL_LIMIT
    assert np.all(np.diff(lam) >= 0)


def test_sparse_path_matches_dense():
    m = icosphere(4)  # 2562 vertices: sparse path
    K, M = assemble_operators(m, "lumped")
    dense = scipy.linalg.eigh(K.toarray(), M.toarray(), eigvals_only=True, subset_by_index=[0, 39])
    sparse = eigenvalues(m, 40).eigenvalues
    np.testing.assert_allclose(sparse, dense, rtol=1e-9, atol=1e-10)


def test_inertia_count_matches_dense():
    m = icosphere(2)
    K, M = assemble_operators(m, "lumped")
    lam = scipy.linalg.eigh(K.toarray(), M.toarray(), eigvals_only=True)
    for tau in (0.5, 3.0, 7.0, 21.0):
        assert count_eigenvalues_below(K, M, tau) == int(np.sum(lam < tau))


def test_degenerate_cluster_complete():
    # The five-fold l=2 cluster must be fully present even when the window
    # cuts right after it; shift-invert alone tends to drop a copy here.
    lam = eigenvalues(icosphere(4), 9).eigenvalues
    assert np.sum(np.abs(lam - 6) < 0.1) == 5


@settings(max_examples=6, deadline=None)
@given(t=st.floats(0.1, 10))
def test_scale_law(t):
    m = icosphere(3)
    a = eigenvalues(m, 12).eigenvalues
    b = eigenvalues(m.scaled(t), 12).eigenvalues
    np.testing.assert_allclose(b[1:], a[1:] / t**2, rtol=1e-6)


def test_radius_two_quarter():
    a = eigenvalues(icosphere(4), 9).eigenvalues
    b = eigenvalues(icosphere(4, 2.0), 9).eigenvalues
    np.testing.assert_allclose(b[1:], a[1:] / 4, rtol=1e-6)


def test_two_components_zero_pair():
    lam = eigenvalues(fixture_mesh("twin_spheres.off"), 4).eigenvalues
    assert lam[0] == pytest.approx(0, abs=1e-9)
    assert lam[1] == pytest.approx(0, abs=1e-9)
    assert lam[2] > 0.5


def test_dumbbell_neck_lowers_lambda2():
    def norm2(neck):
        m = make_dumbbell(neck, 64)
        return eigenvalues(m, 2).eigenvalues[1] * surface_area(m)

    assert norm2(0.1) < norm2(0.9)


def test_dumbbell_fat_neck_close_to_sphere():
    m = make_dumbbell(0.9, 64)
    ratio = eigenvalues(m, 2).eigenvalues[1] * surface_area(m) / (8 * math.pi)
    assert 0.8 <= ratio <= 1.2


def test_spectrum_json():
    d = eigenvalues(icosphere(2), 4).to_dict()
    assert set(d) >= {"eigenvalues", "mass_scheme", "residuals"}
    assert len(d["eigenvalues"]) == 4


def test_k_too_large():
    with pytest.raises(ParameterError):
        eigenvalues(icosphere(0), 13)


def test_rayleigh_constant_zero():
    m = icosphere(3)
    assert rayleigh_quotient(m, np.ones(m.n_vertices)) == pytest.approx(0, abs=1e-12)


def test_rayleigh_z_coordinate():
    m = icosphere(4)
    assert rayleigh_quotient(m, m.vertices[:, 2]) == pytest.approx(2, rel=0.02)


def test_rayleigh_zero_function():
    m = icosphere(2)
    with pytest.raises(PreconditionError):
        rayleigh_quotient(m, np.zeros(m.n_vertices))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_rayleigh_above_lambda2_for_mean_free(seed):
    m = icosphere(2)
    K, M = assemble_operators(m, "lumped")
    f = np.random.default_rng(seed).standard_normal(m.n_vertices)
    f -= (f @ (M @ np.ones(m.n_vertices))) / M.sum()
    lam2 = eigenvalues(m, 2).eigenvalues[1]
    assert rayleigh_quotient(m, f, operators=(K, M)) >= lam2 * (1 - 1e-9)


def test_minmax_constant():
    m = icosphere(2)
    assert minmax_bound_from_functions(m, [np.ones(m.n_vertices)]) == pytest.approx(0, abs=1e-12)


def test_minmax_hemispheres():
    m = icosphere(3)
    z = m.vertices[:, 2]
    feather = 0.2
    up = np.clip((z - 0.02) / feather, 0, 1)
    down = np.clip((-z - 0.02) / feather, 0, 1)
    bound = minmax_bound_from_functions(m, [up, down])
    assert bound >= eigenvalues(m, 2).eigenvalues[1]


def test_minmax_overlap_names_vertex():
    m = icosphere(2)
    f = np.ones(m.n_vertices)
    with pytest.raises(PreconditionError, match="vertex"):
        minmax_bound_from_functions(m, [f, f])


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 6))
def test_minmax_dominates(seed, k):
    m = icosphere(2)
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, k, m.n_vertices)
    # cluster labels by nearest random centre so supports are patches
    centres = m.vertices[rng.choice(m.n_vertices, k, replace=False)]
    labels = np.argmin(((m.vertices[:, None, :] - centres[None]) ** 2).sum(-1), axis=1)
    F = np.stack([(labels == j) * rng.uniform(0.5, 1.5, m.n_vertices) for j in range(k)])
    lam_k = eigenvalues(m, k).eigenvalues[k - 1]
    assert minmax_bound_from_functions(m, F) >= lam_k - 1e-9
