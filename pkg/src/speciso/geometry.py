"""Area, enclosed volume, isoperimetric ratio and vertex distances of a mesh."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial.distance import cdist

from .errors import MeshValidationError, OrientationError, ParameterError, TopologyError
from .mesh_core import TriangleMesh, validate


@dataclass(frozen=True)
class DomainMeasures:
    area: float
    volume: float
    iso_ratio: float

    def to_dict(self):
        return asdict(self)


def _require_valid(mesh):
    problems = validate(mesh)
    if problems:
        raise MeshValidationError(problems)


def face_areas(mesh: TriangleMesh) -> np.ndarray:
    v, f = mesh.vertices, mesh.faces
    return 0.5 * np.linalg.norm(np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1)


def surface_area(mesh: TriangleMesh, check: bool = True) -> float:
    if check:
        _require_valid(mesh)
    return float(face_areas(mesh).sum())


def enclosed_volume(mesh: TriangleMesh, check: bool = True) -> float:
    """Signed volume via tetrahedra to the mesh centroid.

    Using the centroid rather than the origin keeps the cancellation error
    small for meshes far from the origin; for a closed mesh the two agree.
    """
    if check:
        problems = [p for p in validate(mesh) if not p.startswith("volume")]
        if problems:
            raise MeshValidationError(problems)
    v = mesh.vertices - mesh.vertices.mean(axis=0)
    f = mesh.faces
    vol = float(np.einsum("ij,ij->i", v[f[:, 0]], np.cross(v[f[:, 1]], v[f[:, 2]])).sum() / 6.0)
    if not vol > 0:
        raise OrientationError(f"enclosed volume {vol:.6g} is not positive; faces are not outward oriented")
    return vol


def isoperimetric_ratio(mesh: TriangleMesh) -> DomainMeasures:
    """|Sigma| / |Omega|^(2/3) for a closed surface in R^3."""
    _require_valid(mesh)
    area = surface_area(mesh, check=False)
    vol = enclosed_volume(mesh, check=False)
    return DomainMeasures(area=area, volume=vol, iso_ratio=area / vol ** (2.0 / 3.0))


def edge_graph(mesh: TriangleMesh) -> sparse.csr_matrix:
    e = mesh.edges()
    w = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    n = mesh.n_vertices
    g = sparse.coo_matrix((w, (e[:, 0], e[:, 1])), shape=(n, n))
    return (g + g.T).tocsr()


def _hinge_chords(mesh: TriangleMesh):
    """Straight paths across each interior edge between the two opposite corners.

    The two triangles are unfolded into the plane; the chord is kept only when
    it crosses the shared edge, so its length is that of a path on the surface.
    """
    v, f = mesh.vertices, mesh.faces
    # directed half-edge (a, b) of face i has opposite corner f[i, c]
    a = f.ravel()
    b = np.roll(f, -1, axis=1).ravel()
    c = np.roll(f, -2, axis=1).ravel()
    key = a.astype(np.int64) * len(v) + b
    twin = b.astype(np.int64) * len(v) + a
    order = np.argsort(key)
    pos = np.searchsorted(key[order], twin)
    pos = np.minimum(pos, len(order) - 1)
    has = key[order][pos] == twin
    first = has & (a < b)
    i = np.flatnonzero(first)
    j = order[pos[i]]
    pa, pb = v[a[i]], v[b[i]]
    L = np.linalg.norm(pb - pa, axis=1)
    e = (pb - pa) / L[:, None]

    def planar(p):
        rel = p - pa
        x = np.einsum("ij,ij->i", rel, e)
        y = np.linalg.norm(rel - x[:, None] * e, axis=1)
        return x, y

    xc, yc = planar(v[c[i]])
    xd, yd = planar(v[c[j]])
    t = yc / np.maximum(yc + yd, 1e-300)
    xcross = xc + (xd - xc) * t
    ok = (xcross > 0) & (xcross < L)
    length = np.hypot(xc - xd, yc + yd)
    return c[i][ok], c[j][ok], length[ok]


def surface_graph(mesh: TriangleMesh) -> sparse.csr_matrix:
    """Edge graph plus unfolded hinge chords; path lengths bound mesh geodesics from above."""
    e = mesh.edges()
    w = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    p, q, h = _hinge_chords(mesh)
    rows = np.concatenate([e[:, 0], p])
    cols = np.concatenate([e[:, 1], q])
    vals = np.concatenate([w, h])
    return _symmetric_min(rows, cols, vals, mesh.n_vertices)


def _symmetric_min(rows, cols, vals, n):
    # keep the shortest weight per unordered pair; coo->csr would sum duplicates
    lo = np.minimum(rows, cols).astype(np.int64)
    hi = np.maximum(rows, cols).astype(np.int64)
    key = lo * n + hi
    order = np.lexsort((vals, key))
    key, vals = key[order], vals[order]
    keep = np.r_[True, key[1:] != key[:-1]]
    key, vals = key[keep], vals[keep]
    lo, hi = key // n, key % n
    g = sparse.coo_matrix((np.r_[vals, vals], (np.r_[lo, hi], np.r_[hi, lo])), shape=(n, n))
    return g.tocsr()


def vertex_distances(mesh: TriangleMesh, metric: str = "ambient") -> np.ndarray:
    """Dense (V, V) distance matrix.

    ``ambient`` gives Euclidean chord lengths. ``intrinsic`` gives shortest
    paths in the edge graph augmented by unfolded chords across each edge; every
    such path lies on the surface, so these over-estimate mesh geodesics.
    """
    _require_valid(mesh)
    if metric == "ambient":
        d = cdist(mesh.vertices, mesh.vertices)
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
        return d
    if metric == "intrinsic":
        g = surface_graph(mesh)
        ncomp, _ = connected_components(g, directed=False)
        if ncomp != 1:
            raise TopologyError(f"edge graph has {ncomp} connected components; intrinsic distances undefined")
        d = shortest_path(g, method="D", directed=False)
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
        return d
    raise ParameterError(f"unknown metric {metric!r} (ambient or intrinsic)")
