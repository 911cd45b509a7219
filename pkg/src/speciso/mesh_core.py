"""Closed triangulated surfaces in R^3: construction, validation and I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MeshFormatError, ParameterError

MAX_ICOSPHERE_LEVEL = 7
DEGENERATE_REL_AREA = 1e-12


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Immutable triangle mesh.

    ``vertices`` is (V, 3) float, ``faces`` is (F, 3) int with outward
    (counter-clockwise seen from outside) orientation.
    """

    vertices: np.ndarray
    faces: np.ndarray
    family_tag: str | None = None

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float, copy=True)
        f = np.array(self.faces, dtype=np.int64, copy=True)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ParameterError(f"vertices must have shape (V, 3), got {v.shape}")
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise ParameterError(f"faces must have shape (F, 3), got {f.shape}")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted (E, 2) index pairs."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges()) + self.n_faces

    def scaled(self, t: float) -> "TriangleMesh":
        return TriangleMesh(self.vertices * t, self.faces, self.family_tag)

    def translated(self, offset) -> "TriangleMesh":
        return TriangleMesh(self.vertices + np.asarray(offset, float), self.faces, self.family_tag)

    def with_faces(self, faces) -> "TriangleMesh":
        return TriangleMesh(self.vertices, faces, self.family_tag)


def _icosahedron():
    t = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def _subdivide(v, f):
    """One 4-to-1 split; new vertices are edge midpoints projected to the unit sphere."""
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    e_sorted = np.sort(e, axis=1)
    uniq, inv = np.unique(e_sorted, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    mid = v[uniq[:, 0]] + v[uniq[:, 1]]
    mid /= np.linalg.norm(mid, axis=1, keepdims=True)
    nf = len(f)
    m01 = inv[:nf] + len(v)
    m12 = inv[nf:2 * nf] + len(v)
    m20 = inv[2 * nf:] + len(v)
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    new_f = np.concatenate([
        np.stack([a, m01, m20], 1),
        np.stack([b, m12, m01], 1),
        np.stack([c, m20, m12], 1),
        np.stack([m01, m12, m20], 1),
    ])
    return np.vstack([v, mid]), new_f


def make_icosphere(subdivision_level: int, radius: float = 1.0) -> TriangleMesh:
    """Subdivided icosahedron with ``10*4**level + 2`` vertices on a sphere."""
    if not isinstance(subdivision_level, (int, np.integer)) or not 0 <= subdivision_level <= MAX_ICOSPHERE_LEVEL:
        raise ParameterError(f"subdivision_level must be an integer in [0, {MAX_ICOSPHERE_LEVEL}], got {subdivision_level!r}")
    if not radius > 0:
        raise ParameterError(f"radius must be positive, got {radius!r}")
    v, f = _icosahedron()
    for _ in range(subdivision_level):
        v, f = _subdivide(v, f)
    return TriangleMesh(v * radius, f, f"icosphere:{subdivision_level},{radius:g}")


def make_ellipsoid(a: float, b: float, c: float, subdivision_level: int) -> TriangleMesh:
    for name, val in (("a", a), ("b", b), ("c", c)):
        if not val > 0:
            raise ParameterError(f"semi-axis {name} must be positive, got {val!r}")
    s = make_icosphere(subdivision_level, 1.0)
    v = s.vertices * np.array([a, b, c], dtype=float)
    return TriangleMesh(v, s.faces, f"ellipsoid:{a:g},{b:g},{c:g},{subdivision_level}")


# Lobe centres sit at z = +-DUMBBELL_HALF_SEP; the neck blend spans |z| < DUMBBELL_HALF_SEP.
DUMBBELL_HALF_SEP = 0.3


def dumbbell_profile(z, neck_radius: float, half_sep: float = DUMBBELL_HALF_SEP):
    """Radius of the dumbbell surface of revolution at height ``z``.

    Unit circular arcs beyond the lobe centres, a cosine blend from radius 1
    down to ``neck_radius`` in between. The blend has zero slope at both ends,
    so the profile is C^1.
    """
    z = np.abs(np.asarray(z, dtype=float))
    outer = np.sqrt(np.clip(1.0 - (z - half_sep) ** 2, 0.0, None))
    inner = neck_radius + (1.0 - neck_radius) * 0.5 * (1.0 - np.cos(np.pi * z / half_sep))
    return np.where(z >= half_sep, outer, inner)


def _profile_curve(neck_radius, half_sep, samples=20001):
    # Parametrize the upper half of the meridian by angle on the lobes and by z on the neck
    # so the dense polyline resolves the poles.
    zmax = half_sep + 1.0
    theta = np.linspace(0.0, np.pi / 2, samples // 2)
    z_lobe = half_sep + np.cos(theta)  # from the pole zmax down to half_sep
    z_neck = np.linspace(half_sep, 0.0, samples // 2)[1:]
    z = np.concatenate([z_lobe, z_neck])
    z[0] = zmax
    rho = dumbbell_profile(z, neck_radius, half_sep)
    rho[0] = 0.0
    zz = np.concatenate([z, -z[-2::-1]])
    rr = np.concatenate([rho, rho[-2::-1]])
    seg = np.hypot(np.diff(zz), np.diff(rr))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return s, zz, rr


def make_dumbbell(neck_radius: float, subdivision: int) -> TriangleMesh:
    """Two unit lobes joined by a neck, meshed on a longitude/latitude grid with two poles.

    ``subdivision`` longitudes and ``subdivision - 1`` latitude rings, spaced
    uniformly in meridian arc length.
    """
    if not 0.0 < neck_radius < 1.0:
        raise ParameterError(f"neck_radius must lie in (0, 1), got {neck_radius!r}")
    if not isinstance(subdivision, (int, np.integer)) or subdivision < 16:
        raise ParameterError(f"subdivision must be an integer >= 16, got {subdivision!r}")
    s, zz, rr = _profile_curve(neck_radius, DUMBBELL_HALF_SEP)
    n_lon = int(subdivision)
    n_rings = int(subdivision) - 1
    targets = np.linspace(0.0, s[-1], n_rings + 2)[1:-1]
    z_ring = np.interp(targets, s, zz)
    r_ring = np.interp(targets, s, rr)

    phi = 2.0 * np.pi * np.arange(n_lon) / n_lon
    top = np.array([[0.0, 0.0, zz[0]]])
    bottom = np.array([[0.0, 0.0, zz[-1]]])
    ring_pts = np.stack([
        np.outer(r_ring, np.cos(phi)),
        np.outer(r_ring, np.sin(phi)),
        np.repeat(z_ring[:, None], n_lon, axis=1),
    ], axis=-1).reshape(-1, 3)
    verts = np.vstack([top, ring_pts, bottom])

    def idx(ring, j):
        return 1 + ring * n_lon + (j % n_lon)

    faces = []
    south = len(verts) - 1
    for j in range(n_lon):
        faces.append([0, idx(0, j + 1), idx(0, j)])
    for ring in range(n_rings - 1):
        for j in range(n_lon):
            a, b = idx(ring, j), idx(ring, j + 1)
            c, d = idx(ring + 1, j), idx(ring + 1, j + 1)
            faces.append([a, b, d])
            faces.append([a, d, c])
    for j in range(n_lon):
        faces.append([south, idx(n_rings - 1, j), idx(n_rings - 1, j + 1)])
    faces = np.array(faces, dtype=np.int64)
    if _signed_volume(verts, faces) < 0:
        faces = faces[:, ::-1]
    return TriangleMesh(verts, faces, f"dumbbell:{neck_radius:g},{subdivision}")


def _signed_volume(v, f):
    return float(np.einsum("ij,ij->i", v[f[:, 0]], np.cross(v[f[:, 1]], v[f[:, 2]])).sum() / 6.0)


def validate(mesh: TriangleMesh) -> list[str]:
    """Return a list of invariant violations; empty means the mesh is valid.

    Each entry starts with a machine-readable code (``index``, ``unreferenced``,
    ``degenerate``, ``non_closed_edge``, ``non_manifold_edge``, ``orientation``,
    ``volume``) followed by a colon and details.
    """
    out = []
    v, f = mesh.vertices, mesh.faces
    nv = len(v)
    if nv == 0 or len(f) == 0:
        return ["empty: mesh has no vertices or no faces"]
    if not np.all(np.isfinite(v)):
        out.append("non_finite: vertex coordinates contain NaN or inf")
    if f.min() < 0 or f.max() >= nv:
        out.append(f"index: face indices out of range [0, {nv})")
        return out
    used = np.zeros(nv, bool)
    used[f.ravel()] = True
    if not used.all():
        out.append(f"unreferenced: {int((~used).sum())} vertices not used by any face (first {int(np.argmin(used))})")
    repeated = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 2] == f[:, 0])
    diag2 = float(np.sum((v.max(0) - v.min(0)) ** 2))
    area = 0.5 * np.linalg.norm(np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1)
    bad = np.flatnonzero(repeated | (area <= DEGENERATE_REL_AREA * diag2))
    if len(bad):
        out.append(f"degenerate: {len(bad)} faces with area <= {DEGENERATE_REL_AREA:g} * diag^2 (first face {int(bad[0])})")

    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    und = np.sort(directed, axis=1)
    uniq, counts = np.unique(und, axis=0, return_counts=True)
    open_edges = uniq[counts == 1]
    if len(open_edges):
        e = open_edges[0]
        out.append(f"non_closed_edge: {len(open_edges)} edges bound a single face (first {int(e[0])}-{int(e[1])})")
    nm = uniq[counts > 2]
    if len(nm):
        e = nm[0]
        out.append(f"non_manifold_edge: {len(nm)} edges shared by more than two faces (first {int(e[0])}-{int(e[1])})")
    d_uniq, d_counts = np.unique(directed, axis=0, return_counts=True)
    dup = d_uniq[d_counts > 1]
    if len(dup):
        e = dup[0]
        out.append(f"orientation: {len(dup)} directed edges used twice (first {int(e[0])}->{int(e[1])})")
    if not out:
        vol = _signed_volume(v, f)
        if not vol > 0:
            out.append(f"volume: signed enclosed volume {vol:.6g} is not positive (inward orientation)")
    return out


# --- file I/O --------------------------------------------------------------

def _fmt(x):
    return repr(float(x))


def save_mesh(mesh: TriangleMesh, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).upper()
    lines = []
    if fmt == "OFF":
        lines.append("OFF")
        lines.append(f"{mesh.n_vertices} {mesh.n_faces} 0")
        lines += [" ".join(_fmt(c) for c in p) for p in mesh.vertices]
        lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    elif fmt == "OBJ":
        if mesh.family_tag:
            lines.append(f"# {mesh.family_tag}")
        lines += ["v " + " ".join(_fmt(c) for c in p) for p in mesh.vertices]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    else:
        raise ParameterError(f"unsupported mesh format {fmt!r} (use OFF or OBJ)")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _content_lines(text):
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield i, line


def _floats(tokens, lineno):
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise MeshFormatError(f"expected numbers, got {' '.join(tokens)!r}", lineno) from None


def _ints(tokens, lineno):
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise MeshFormatError(f"expected integers, got {' '.join(tokens)!r}", lineno) from None


def _load_off(text, tag):
    lines = list(_content_lines(text))
    if not lines:
        raise MeshFormatError("empty file", 1)
    lineno, head = lines[0]
    tokens = head.split()
    if tokens[0] != "OFF":
        raise MeshFormatError("missing OFF header", lineno)
    rest = tokens[1:]
    pos = 1
    if not rest:
        if len(lines) < 2:
            raise MeshFormatError("missing vertex/face counts", lineno)
        lineno, counts_line = lines[1]
        rest = counts_line.split()
        pos = 2
    counts = _ints(rest, lineno)
    if len(counts) < 2:
        raise MeshFormatError("counts line needs at least 2 integers", lineno)
    nv, nf = counts[0], counts[1]
    if len(lines) < pos + nv + nf:
        last = lines[-1][0]
        raise MeshFormatError(f"expected {nv} vertices and {nf} faces, file ends early", last)
    verts = []
    for lineno, line in lines[pos:pos + nv]:
        xyz = _floats(line.split(), lineno)
        if len(xyz) < 3:
            raise MeshFormatError("vertex needs 3 coordinates", lineno)
        verts.append(xyz[:3])
    faces = []
    for lineno, line in lines[pos + nv:pos + nv + nf]:
        vals = _ints(line.split(), lineno)
        if not vals or len(vals) < vals[0] + 1:
            raise MeshFormatError("face record shorter than its vertex count", lineno)
        if vals[0] != 3:
            raise MeshFormatError(f"non-triangular face with {vals[0]} vertices", lineno)
        faces.append(vals[1:4])
    return TriangleMesh(np.array(verts, float), np.array(faces, np.int64).reshape(-1, 3), tag)


def _load_obj(text, tag):
    verts, faces = [], []
    any_line = False
    for lineno, line in _content_lines(text):
        any_line = True
        tokens = line.split()
        kind = tokens[0]
        if kind == "v":
            xyz = _floats(tokens[1:], lineno)
            if len(xyz) < 3:
                raise MeshFormatError("vertex needs 3 coordinates", lineno)
            verts.append(xyz[:3])
        elif kind == "f":
            refs = [t.split("/")[0] for t in tokens[1:]]
            if len(refs) != 3:
                raise MeshFormatError(f"non-triangular face with {len(refs)} vertices", lineno)
            idx = _ints(refs, lineno)
            n = len(verts)
            idx = [i - 1 if i > 0 else n + i for i in idx]
            faces.append(idx)
        # other records (vn, vt, o, g, s, ...) are ignored
    if not any_line:
        raise MeshFormatError("empty file", 1)
    if not verts or not faces:
        raise MeshFormatError("file has no vertices or no faces", None)
    return TriangleMesh(np.array(verts, float), np.array(faces, np.int64), tag)


def load_mesh(path, format: str | None = None) -> TriangleMesh:
    """Read an OFF (0-based) or OBJ (1-based) triangle mesh.

    The result is not validated; call :func:`validate` on it.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).upper()
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise MeshFormatError(f"no such file: {path}") from None
    tag = f"file:{path.name}"
    if fmt == "OFF":
        return _load_off(text, tag)
    if fmt == "OBJ":
        return _load_obj(text, tag)
    raise ParameterError(f"unsupported mesh format {fmt!r} (use OFF or OBJ)")


def make_family(spec: str) -> TriangleMesh:
    """Build a mesh from ``NAME:P1,P2,...``.

    ``icosphere:LEVEL[,RADIUS]``, ``ellipsoid:A,B,C,LEVEL``,
    ``dumbbell:NECK,SUBDIVISION``.
    """
    name, _, params = spec.partition(":")
    try:
        vals = [p for p in params.split(",") if p.strip()] if params else []
        if name == "icosphere":
            if len(vals) not in (1, 2):
                raise ParameterError("icosphere expects LEVEL[,RADIUS]")
            radius = float(vals[1]) if len(vals) == 2 else 1.0
            return make_icosphere(int(vals[0]), radius)
        if name == "ellipsoid":
            if len(vals) != 4:
                raise ParameterError("ellipsoid expects A,B,C,LEVEL")
            return make_ellipsoid(float(vals[0]), float(vals[1]), float(vals[2]), int(vals[3]))
        if name == "dumbbell":
            if len(vals) != 2:
                raise ParameterError("dumbbell expects NECK,SUBDIVISION")
            return make_dumbbell(float(vals[0]), int(vals[1]))
    except ValueError as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(f"bad family parameters in {spec!r}: {exc}") from None
    raise ParameterError(f"unknown mesh family {name!r} (icosphere, ellipsoid, dumbbell)")
