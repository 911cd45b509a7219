import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speciso.errors import MeshFormatError, ParameterError
from speciso.geometry import enclosed_volume
from speciso.mesh_core import (
    TriangleMesh,
    load_mesh,
    make_dumbbell,
    make_ellipsoid,
    make_family,
    make_icosphere,
    save_mesh,
    validate,
)


@pytest.mark.parametrize("level, nv, nf", [(0, 12, 20), (1, 42, 80), (2, 162, 320), (3, 642, 1280)])
def test_icosphere_counts(level, nv, nf):
    m = make_icosphere(level)
    assert (m.n_vertices, m.n_faces) == (nv, nf)
    assert nv == 10 * 4**level + 2


def test_icosphere_radius_projection():
    m = make_icosphere(3, 2.0)
    np.testing.assert_allclose(np.linalg.norm(m.vertices, axis=1), 2.0, rtol=0, atol=1e-12)


@pytest.mark.parametrize("level", [-1, 8, 2.5])
def test_icosphere_bad_level(level):
    with pytest.raises(ParameterError):
        make_icosphere(level)


def test_unit_ellipsoid_is_icosphere():
    a = make_ellipsoid(1, 1, 1, 3)
    b = make_icosphere(3, 1.0)
    np.testing.assert_array_equal(a.faces, b.faces)
    np.testing.assert_allclose(a.vertices, b.vertices, atol=1e-15)


def test_ellipsoid_volume_doubles():
    assert enclosed_volume(make_ellipsoid(2, 1, 1, 3)) == pytest.approx(2 * enclosed_volume(make_icosphere(3)), rel=1e-12)


@pytest.mark.parametrize("axes", [(0, 1, 1), (1, -2, 1), (1, 1, float("nan"))])
def test_ellipsoid_bad_axes(axes):
    with pytest.raises(ParameterError):
        make_ellipsoid(*axes, 2)


@pytest.mark.parametrize("neck", [0.0, 1.0, -0.2, 1.5])
def test_dumbbell_bad_neck(neck):
    with pytest.raises(ParameterError):
        make_dumbbell(neck, 16)


def test_dumbbell_small_valid():
    assert validate(make_dumbbell(0.5, 16)) == []


def test_validate_clean_icosphere():
    assert validate(make_icosphere(2)) == []


def test_validate_swapped_face_orientation():
    m = make_icosphere(2)
    f = m.faces.copy()
    f[7] = f[7][[0, 2, 1]]
    problems = validate(m.with_faces(f))
    assert any(p.startswith("orientation") for p in problems)


def test_validate_deleted_face():
    m = make_icosphere(2)
    problems = validate(m.with_faces(m.faces[1:]))
    assert any(p.startswith("non_closed_edge") for p in problems)


def test_validate_inverted_mesh():
    m = make_icosphere(1)
    problems = validate(m.with_faces(m.faces[:, ::-1]))
    assert any(p.startswith("volume") for p in problems)


def test_validate_non_finite_and_index():
    m = make_icosphere(1)
    v = m.vertices.copy()
    v[3, 0] = np.nan
    assert any(p.startswith("non_finite") for p in validate(TriangleMesh(v, m.faces)))
    f = m.faces.copy()
    f[0, 0] = 999
    assert any(p.startswith("index") for p in validate(m.with_faces(f)))


@pytest.mark.parametrize("fmt", ["off", "obj"])
def test_round_trip(tmp_path, fmt):
    m = make_icosphere(2)
    path = tmp_path / f"m.{fmt}"
    save_mesh(m, path)
    back = load_mesh(path)
    np.testing.assert_array_equal(back.faces, m.faces)
    np.testing.assert_allclose(back.vertices, m.vertices, rtol=0, atol=1e-9)


def test_quad_face_rejected(fixtures_dir):
    with pytest.raises(MeshFormatError, match="line"):
        load_mesh(fixtures_dir / "quad.off")


def test_empty_file_rejected(fixtures_dir):
    with pytest.raises(MeshFormatError):
        load_mesh(fixtures_dir / "empty.off")


def test_bad_number_has_line(tmp_path):
    p = tmp_path / "bad.off"
    p.write_text("OFF\n3 1 0\n0 0 0\n1 zero 0\n0 1 0\n3 0 1 2\n")
    with pytest.raises(MeshFormatError, match="line 4"):
        load_mesh(p)


def test_mesh_is_immutable():
    m = make_icosphere(1)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5.0


def test_make_family():
    assert make_family("icosphere:2").n_vertices == 162
    assert make_family("ellipsoid:2,1,1,1").n_vertices == 42
    assert validate(make_family("dumbbell:0.4,20")) == []
    with pytest.raises(ParameterError):
        make_family("torus:1,2")


@settings(max_examples=25, deadline=None)
@given(level=st.integers(0, 4), radius=st.floats(0.01, 100))
def test_icosphere_valid_and_euler(level, radius):
    m = make_icosphere(level, radius)
    assert validate(m) == []
    assert m.euler_characteristic() == 2


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0.2, 5), b=st.floats(0.2, 5), c=st.floats(0.2, 5), level=st.integers(0, 3))
def test_ellipsoid_valid_and_euler(a, b, c, level):
    m = make_ellipsoid(a, b, c, level)
    assert validate(m) == []
    assert m.euler_characteristic() == 2


@settings(max_examples=25, deadline=None)
@given(neck=st.floats(0.01, 0.99), sub=st.integers(16, 48))
def test_dumbbell_valid_and_euler(neck, sub):
    m = make_dumbbell(neck, sub)
    assert validate(m) == []
    assert m.euler_characteristic() == 2


@settings(max_examples=10, deadline=None)
@given(neck=st.floats(0.05, 0.95), fmt=st.sampled_from(["off", "obj"]))
def test_round_trip_property(tmp_path_factory, neck, fmt):
    m = make_dumbbell(neck, 16)
    path = tmp_path_factory.mktemp("rt") / f"d.{fmt}"
    save_mesh(m, path)
    back = load_mesh(path)
    np.testing.assert_array_equal(back.faces, m.faces)
    np.testing.assert_allclose(back.vertices, m.vertices, rtol=0, atol=1e-9)
