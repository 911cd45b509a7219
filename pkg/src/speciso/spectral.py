"""Laplace-Beltrami spectrum of a triangle mesh (linear FEM, cotangent weights)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu

from .errors import ConvergenceError, DegenerateGeometryError, ParameterError, PreconditionError
from .geometry import _require_valid, face_areas

log = logging.getLogger(__name__)

MASS_SCHEMES = ("lumped", "consistent")
SHIFT = -1e-8
MAX_ITER = 10_000
SOLVER_TOL = 1e-12
DEFAULT_SEED = 20240917
DENSE_LIMIT = 1200  # vertex count at or below which the dense solver is used
RESIDUAL_LIMIT = 1e-8


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray
    mass_scheme: str
    mesh_area: float
    solver_residuals: np.ndarray
    eigenvectors: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __len__(self):
        return len(self.eigenvalues)

    def to_dict(self):
        return {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "mass_scheme": self.mass_scheme,
            "mesh_area": float(self.mesh_area),
            "residuals": [float(x) for x in self.solver_residuals],
        }


def _check_scheme(mass_scheme):
    if mass_scheme not in MASS_SCHEMES:
        raise ParameterError(f"mass_scheme must be one of {MASS_SCHEMES}, got {mass_scheme!r}")


def cotangent_weights(mesh) -> np.ndarray:
    """(F, 3) array; column c holds cot of the angle at corner c."""
    v, f = mesh.vertices, mesh.faces
    cots = np.empty(f.shape, dtype=float)
    for c in range(3):
        p = v[f[:, c]]
        a = v[f[:, (c + 1) % 3]] - p
        b = v[f[:, (c + 2) % 3]] - p
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        dot = np.einsum("ij,ij->i", a, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            cots[:, c] = dot / cross
    bad = ~np.isfinite(cots).all(axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise DegenerateGeometryError(f"non-finite cotangent weight in face {i} {tuple(int(x) for x in f[i])}")
    return cots


def assemble_operators(mesh, mass_scheme: str = "lumped"):
    """Return ``(K, M)``: cotangent stiffness and lumped or consistent mass, both CSR."""
    _check_scheme(mass_scheme)
    _require_valid(mesh)
    f = mesh.faces
    n = mesh.n_vertices
    cots = cotangent_weights(mesh)
    rows, cols, vals = [], [], []
    for c in range(3):
        i = f[:, (c + 1) % 3]
        j = f[:, (c + 2) % 3]
        w = 0.5 * cots[:, c]
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-w, -w, w, w]
    K = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    K = 0.5 * (K + K.T)

    areas = face_areas(mesh)
    if mass_scheme == "lumped":
        m = np.zeros(n)
        np.add.at(m, f.ravel(), np.repeat(areas / 3.0, 3))
        M = sparse.diags(m).tocsr()
    else:
        local = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]], float) / 12.0
        r = np.repeat(f, 3, axis=1).ravel()
        c = np.tile(f, (1, 3)).ravel()
        d = (areas[:, None] * local.ravel()[None, :]).ravel()
        M = sparse.coo_matrix((d, (r, c)), shape=(n, n)).tocsr()
        M = 0.5 * (M + M.T)
    return K, M


def lumped_vertex_areas(mesh) -> np.ndarray:
    m = np.zeros(mesh.n_vertices)
    np.add.at(m, mesh.faces.ravel(), np.repeat(face_areas(mesh) / 3.0, 3))
    return m


def _residuals(K, M, lam, U):
    R = K @ U - (M @ U) * lam[None, :]
    mnorm = np.sqrt(np.einsum("ij,ij->j", U, M @ U))
    return np.linalg.norm(R, axis=0) / mnorm


def _normalize(K, M, lam, U, area):
    order = np.argsort(lam, kind="stable")
    lam, U = lam[order], U[:, order]
    U = U / np.sqrt(np.einsum("ij,ij->j", U, M @ U))[None, :]
    # roundoff around the constant kernel
    lam = np.where((lam < 0) & (lam > -1e-10), 0.0, lam)
    return lam, U


def count_eigenvalues_below(K, M, tau: float) -> int:
    """Number of eigenvalues of (K, M) below ``tau``, by Sylvester's law of inertia.

    Factorizes K - tau*M symmetrically without pivoting and counts negative
    pivots. ``tau`` must not sit on an eigenvalue.
    """
    lu = splu((K - tau * M).tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
              options=dict(SymmetricMode=True))
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise ConvergenceError("symmetric factorization pivoted; inertia count unavailable")
    return int(np.count_nonzero(lu.U.diagonal() < 0))


def _separating_shift(lam, k):
    """Midpoint of the first clear gap at or after position k (1-based), or None."""
    for j in range(k - 1, len(lam) - 1):
        a, b = lam[j], lam[j + 1]
        if b - a > 1e-6 * max(abs(a), abs(b), 1.0):
            return j + 1, 0.5 * (a + b)
    return None


def _arpack_pairs(K, M, count, seed, lu, found=None):
    """``count`` lowest pairs by shift-invert Lanczos, deflating the M-orthonormal ``found`` block."""
    n = K.shape[0]
    if found is None or found.shape[1] == 0:
        def solve(x):
            return lu.solve(np.asarray(x, dtype=float).ravel())
    else:
        MU = M @ found

        def solve(x):
            # project on both sides so the operator stays M-self-adjoint
            x = np.asarray(x, dtype=float).ravel()
            y = lu.solve(x - MU @ (found.T @ x))
            return y - found @ (MU.T @ y)
    op = LinearOperator((n, n), matvec=solve, dtype=float)
    v0 = np.random.default_rng(seed).standard_normal(n)
    if found is not None and found.shape[1]:
        v0 = v0 - found @ ((M @ found).T @ v0)
    try:
        lam, U = eigsh(K, k=count, M=M, sigma=SHIFT, which="LM", OPinv=op,
                       v0=v0, tol=SOLVER_TOL, maxiter=MAX_ITER)
    except ArpackNoConvergence as exc:
        lam_p = np.sort(np.asarray(exc.eigenvalues, float))
        raise ConvergenceError(
            f"eigensolver did not converge within {MAX_ITER} iterations "
            f"({len(lam_p)}/{count} pairs)", eigenvalues=lam_p,
        ) from None
    return np.asarray(lam, float), np.asarray(U, float)


def _rayleigh_ritz(K, M, U):
    A = U.T @ (K @ U)
    B = U.T @ (M @ U)
    lam, V = scipy.linalg.eigh(0.5 * (A + A.T), 0.5 * (B + B.T))
    return lam, U @ V


def _sparse_pairs(K, M, k_max, seed):
    """Lanczos pairs certified complete by an inertia count, repaired by deflation.

    A single-vector Krylov method can return fewer copies of an exactly repeated
    eigenvalue than its multiplicity (symmetric meshes hit this). The inertia
    count below a separating shift detects any missing copy, and a deflated
    re-run recovers it.
    """
    n = K.shape[0]
    lu = splu((K - SHIFT * M).tocsc())
    pad = max(6, k_max // 5)
    want = min(k_max + pad, n - 2)
    lam, U = _arpack_pairs(K, M, want, seed, lu)
    for round_ in range(50):
        lam, U = _rayleigh_ritz(K, M, U)
        cut = _separating_shift(lam, k_max)
        if cut is None:
            if U.shape[1] >= n - 2:
                raise ConvergenceError("cannot separate the requested eigenvalues", eigenvalues=lam)
            extra = min(pad, n - 2 - U.shape[1])
            lam_e, U_e = _arpack_pairs(K, M, extra, seed + round_ + 1, lu, found=U)
            U = np.hstack([U, U_e])
            continue
        found_below, tau = cut
        true_below = count_eigenvalues_below(K, M, tau)
        if true_below == found_below:
            return lam[:k_max], U[:, :k_max]
        if true_below < found_below:
            raise ConvergenceError(
                f"inertia count {true_below} below shift {tau:.6g} is smaller than "
                f"the {found_below} computed eigenvalues", eigenvalues=lam)
        missing = true_below - found_below
        log.debug("recovering %d eigenpairs missed below %.6g", missing, tau)
        extra = min(missing + 2, n - 2 - U.shape[1])
        lam_e, U_e = _arpack_pairs(K, M, extra, seed + round_ + 1, lu, found=U)
        U = np.hstack([U, U_e])
    raise ConvergenceError("eigenvalue count did not stabilize", eigenvalues=lam)


def eigenvalues(mesh, k_max: int, mass_scheme: str = "lumped", seed: int = DEFAULT_SEED,
                keep_vectors: bool = False) -> SpectrumResult:
    """Smallest ``k_max`` eigenvalues of the pencil (K, M), ascending.

    Small meshes use a dense symmetric-definite solver; larger ones shift-invert
    Lanczos around ``SHIFT`` from a seeded start vector, with the count of
    returned eigenvalues certified by inertia.
    """
    K, M = assemble_operators(mesh, mass_scheme)
    n = mesh.n_vertices
    if not isinstance(k_max, (int, np.integer)) or not 1 <= k_max <= n - 1:
        raise ParameterError(f"k_max must be an integer in [1, {n - 1}], got {k_max!r}")
    area = float(face_areas(mesh).sum())
    if n <= DENSE_LIMIT or k_max + max(6, k_max // 5) >= n - 2:
        lam, U = scipy.linalg.eigh(K.toarray(), M.toarray(), subset_by_index=[0, k_max - 1])
    else:
        lam, U = _sparse_pairs(K.tocsc(), M.tocsc(), k_max, seed)
    lam, U = _normalize(K, M, np.asarray(lam, float), np.asarray(U, float), area)
    res = _residuals(K, M, lam, U)
    if np.any(res > RESIDUAL_LIMIT):
        raise ConvergenceError(
            f"eigenpair residual {float(res.max()):.3g} exceeds {RESIDUAL_LIMIT:g}",
            eigenvalues=lam, residuals=res,
        )
    return SpectrumResult(lam, mass_scheme, area, res, U if keep_vectors else None)


def rayleigh_quotient(mesh, f, mass_scheme: str = "lumped", operators=None) -> float:
    """f^T K f / f^T M f for a piecewise-linear vertex function."""
    K, M = operators if operators is not None else assemble_operators(mesh, mass_scheme)
    f = np.asarray(f, dtype=float)
    if f.shape != (mesh.n_vertices,):
        raise ParameterError(f"vertex function has shape {f.shape}, expected ({mesh.n_vertices},)")
    if not np.all(np.isfinite(f)):
        raise ParameterError("vertex function has non-finite values")
    den = float(f @ (M @ f))
    area = float(M.sum())
    if den <= 1e-14 * float(np.max(np.abs(f), initial=0.0)) ** 2 * area or den <= 0:
        raise PreconditionError("zero function: f^T M f vanishes")
    return max(float(f @ (K @ f)), 0.0) / den


def check_disjoint_supports(functions) -> None:
    F = np.asarray(functions, dtype=float)
    counts = (F != 0).sum(axis=0)
    if np.any(counts > 1):
        v = int(np.flatnonzero(counts > 1)[0])
        owners = [int(i) for i in np.flatnonzero(F[:, v] != 0)]
        raise PreconditionError(f"supports overlap at vertex {v} (functions {owners})")


def projected_pencil(functions, operators):
    """Gram matrices (F K F^T, F M F^T) of the test functions."""
    K, M = operators
    F = np.asarray(functions, dtype=float)
    return F @ (K @ F.T), F @ (M @ F.T)


def minmax_bound_from_functions(mesh, functions, mass_scheme: str = "lumped", operators=None) -> float:
    """Upper bound on lambda_k from k test functions with disjoint vertex supports.

    Returns the largest Ritz value of the span, i.e. the maximum Rayleigh
    quotient over the k-dimensional subspace. When no two supports share a
    mesh edge this equals ``max_i R(f_i)``; when neighbouring supports touch,
    the stiffness couples them and the Ritz value can be slightly larger, and
    only the Ritz value is guaranteed to dominate lambda_k.
    """
    ops = operators if operators is not None else assemble_operators(mesh, mass_scheme)
    F = np.atleast_2d(np.asarray(functions, dtype=float))
    if F.shape[1] != mesh.n_vertices:
        raise ParameterError(f"functions have {F.shape[1]} values, mesh has {mesh.n_vertices} vertices")
    check_disjoint_supports(F)
    rq = [rayleigh_quotient(mesh, f, operators=ops) for f in F]
    A, B = projected_pencil(F, ops)
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    ritz = scipy.linalg.eigh(A, B, eigvals_only=True)
    return float(max(ritz[-1], max(rq)))
