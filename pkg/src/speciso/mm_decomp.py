"""Ball decompositions of finite metric-measure spaces and certified eigenvalue bounds.

All balls are closed: ``B(x, r) = {y : d(x, y) <= r}``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import bounds
from .errors import AuditError, ParameterError, PreconditionError, RadiusTooLargeError
from .geometry import isoperimetric_ratio, vertex_distances
from .spectral import DEFAULT_SEED, assemble_operators, eigenvalues, lumped_vertex_areas, minmax_bound_from_functions

log = logging.getLogger(__name__)

METRIC_RTOL = 1e-9
EXHAUSTIVE_SEED_LIMIT = 300
SEED_CAP = 64


@dataclass(frozen=True, eq=False)
class MMSpace:
    """Finite metric-measure space: a distance matrix and positive point weights."""

    distances: np.ndarray
    measure: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        d = np.array(self.distances, dtype=float, copy=True)
        w = np.array(self.measure, dtype=float, copy=True).ravel()
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ParameterError(f"distance matrix must be square, got {d.shape}")
        if len(w) != d.shape[0]:
            raise ParameterError(f"{len(w)} weights for {d.shape[0]} points")
        if len(w) == 0:
            raise ParameterError("empty space")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ParameterError("distances must be finite and nonnegative")
        if not np.array_equal(d, d.T):
            raise ParameterError("distance matrix is not symmetric")
        if np.any(np.diag(d) != 0):
            raise ParameterError("distance matrix has a nonzero diagonal")
        if not np.all(w > 0) or not np.all(np.isfinite(w)):
            raise ParameterError("weights must be finite and positive")
        labels = None if self.labels is None else np.asarray(self.labels)
        d.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "measure", w)
        object.__setattr__(self, "labels", labels)

    @property
    def point_count(self) -> int:
        return len(self.measure)

    @property
    def total_measure(self) -> float:
        return float(self.measure.sum())

    @property
    def diameter(self) -> float:
        return float(self.distances.max())

    @property
    def metric_tol(self) -> float:
        return METRIC_RTOL * max(self.diameter, 1e-300)

    def ball_measures(self, r: float, weights=None) -> np.ndarray:
        w = self.measure if weights is None else weights
        return (self.distances <= r) @ w

    def subspace(self, indices) -> "MMSpace":
        idx = np.asarray(indices, dtype=np.int64)
        labels = idx if self.labels is None else self.labels[idx]
        return MMSpace(self.distances[np.ix_(idx, idx)], self.measure[idx], labels)

    @classmethod
    def from_points(cls, points, weights=None) -> "MMSpace":
        from scipy.spatial.distance import cdist

        p = np.atleast_2d(np.asarray(points, dtype=float))
        d = cdist(p, p)
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
        w = np.ones(len(p)) if weights is None else weights
        return cls(d, w)


def triangle_violations(space: MMSpace, n_triples: int | None = None, seed: int = 0):
    """Triples (i, j, k) with d(i,k) > d(i,j) + d(j,k) + tol.

    Checks every triple when ``n_triples`` is None, else a seeded random sample.
    """
    d = space.distances
    tol = space.metric_tol
    if n_triples is None:
        bad = []
        for j in range(space.point_count):
            viol = d > d[:, j][:, None] + d[j, :][None, :] + tol
            if viol.any():
                i, k = np.argwhere(viol)[0]
                bad.append((int(i), j, int(k)))
        return bad
    rng = np.random.default_rng(seed)
    t = rng.integers(0, space.point_count, size=(n_triples, 3))
    i, j, k = t.T
    viol = d[i, k] > d[i, j] + d[j, k] + tol
    return [tuple(int(x) for x in row) for row in t[viol]]


def from_mesh(mesh, distance_mode: str = "ambient") -> MMSpace:
    """Vertices with lumped areas as weights and ambient (or edge-path) distances."""
    d = vertex_distances(mesh, distance_mode)
    return MMSpace(d, lumped_vertex_areas(mesh), np.arange(mesh.n_vertices))


# --- covering and packing ----------------------------------------------------

def _greedy_cover(d, members, r):
    """Greedy cover of ``members`` by r-balls centred at members; lowest index first."""
    centers = []
    left = np.asarray(members)
    while len(left):
        c = int(left[0])
        centers.append(c)
        left = left[d[c, left] > r]
    return centers


@dataclass
class CoveringResult:
    N: int
    argmax: int
    centers: list = field(repr=False)


def covering_number(space: MMSpace, r: float) -> CoveringResult:
    """Max over x of the greedy count of r-balls covering B(x, 4r)."""
    if not r > 0:
        raise ParameterError("r must be positive")
    d = space.distances
    best, arg, all_centers = 0, 0, []
    for x in range(space.point_count):
        members = np.flatnonzero(d[x] <= 4.0 * r)
        cs = _greedy_cover(d, members, r)
        all_centers.append(cs)
        if len(cs) > best:
            best, arg = len(cs), x
    return CoveringResult(best, arg, all_centers)


def packing_bound_check(space: MMSpace, r: float, R: float, V: float) -> dict:
    """Check the doubling-ratio hypothesis and the covering conclusion at every point.

    ``holds`` is the conclusion (each R-ball covered by at most floor(V)
    r-balls); ``hypothesis_holds`` reports the measure-ratio condition.
    """
    if not 0 < r < R:
        raise ParameterError("need 0 < r < R")
    d = space.distances
    w = space.measure
    big = (d <= 2.0 * R) @ w
    small = (d <= r / 4.0) @ w
    ratio = big / small
    hyp_bad = np.flatnonzero(ratio > V)
    cap = math.floor(V)
    witness = None
    max_count = 0
    for x in range(space.point_count):
        cs = _greedy_cover(d, np.flatnonzero(d[x] <= R), r)
        max_count = max(max_count, len(cs))
        if len(cs) > cap and witness is None:
            witness = {"point": x, "count": len(cs), "centers": cs}
    return {
        "holds": witness is None,
        "hypothesis_holds": len(hyp_bad) == 0,
        "hypothesis_witness": int(hyp_bad[0]) if len(hyp_bad) else None,
        "max_ratio": float(ratio.max()),
        "max_count": max_count,
        "floor_V": cap,
        "witness": witness,
    }


# --- separated pairs and decompositions -------------------------------------

@dataclass
class SeparatedPair:
    A: np.ndarray
    D: np.ndarray
    centers: list
    strategy: str
    measure_A: float
    measure_D: float
    separation: float


def _grow(Br, B4, w, beta, seed):
    """Add r-ball centres until mu(A) >= beta.

    With ``seed`` None each step takes the centre of largest marginal gain in A.
    Otherwise start at ``seed`` and take the centre with the smallest ratio of
    marginal D-mass to marginal A-mass, which keeps D compact.
    """
    n = len(w)
    inA = np.zeros(n, bool)
    inD = np.zeros(n, bool)
    centers = []
    while w[inA].sum() < beta:
        gainA = Br @ np.where(inA, 0.0, w)
        if seed is not None and not centers:
            c = seed
        elif seed is None:
            c = int(np.argmax(gainA))
        else:
            gainD = B4 @ np.where(inD, 0.0, w)
            with np.errstate(divide="ignore", invalid="ignore"):
                score = np.where(gainA > 0, gainD / gainA, np.inf)
            c = int(np.argmin(score))
        if gainA[c] <= 0:
            return None
        centers.append(c)
        inA[Br.indices[Br.indptr[c]:Br.indptr[c + 1]]] = True
        inD[B4.indices[B4.indptr[c]:B4.indptr[c + 1]]] = True
    return centers, inA, inD


def _audit_pair(d, w, inA, inD, beta, N, r, tol):
    mA = float(w[inA].sum())
    mD = float(w[inD].sum())
    if inA.any() and (~inD).any():
        sep = float(d[np.ix_(inA, ~inD)].min())
    else:
        sep = math.inf
    ok = mA >= beta and mD <= 2 * N * beta and sep >= 3 * r - tol and not np.any(inA & ~inD)
    return ok, mA, mD, sep


def grow_separated_pair(space: MMSpace, beta: float, r: float, N: int, weights=None,
                        avoid=None) -> SeparatedPair:
    """Sets A subset D with mu(A) >= beta, mu(D) <= 2 N beta and d(A, X minus D) >= 3r.

    A is a union of r-balls and D the union of the 4r-balls with the same
    centres. ``weights`` overrides the space measure (zeros allowed), which is
    how restricted measures are passed in. Seeds of equal ball measure are
    tried farthest-from-``avoid`` first (a boolean mask, e.g. earlier shields).
    """
    w = space.measure if weights is None else np.asarray(weights, dtype=float)
    total = float(w.sum())
    if not beta > 0:
        raise PreconditionError("beta must be positive")
    if beta > total / 2:
        raise PreconditionError(f"beta = {beta:.6g} exceeds half the total measure {total / 2:.6g}")
    if N < 1:
        raise PreconditionError("N must be >= 1")
    d = space.distances
    Br = sparse.csr_matrix(d <= r, dtype=float)
    B4 = sparse.csr_matrix(d <= 4.0 * r, dtype=float)
    bm = Br @ w
    cap = beta / (2.0 * N)
    over = np.flatnonzero(bm > cap)
    if len(over):
        x = int(over[0])
        raise PreconditionError(
            f"mu(B(x, r)) = {bm[x]:.6g} exceeds beta/(2N) = {cap:.6g} at point {x}")

    tol = space.metric_tol
    if avoid is not None and np.any(avoid):
        far = d[:, np.asarray(avoid, bool)].min(axis=1)
    else:
        far = np.zeros(len(w))
    order = np.lexsort((-far, -bm))
    limit = len(order) if len(order) <= EXHAUSTIVE_SEED_LIMIT else SEED_CAP
    plans = [("local", int(order[0])), ("global", None)]
    plans += [("local", int(s)) for s in order[1:limit]]
    trace = []
    for name, seed in plans:
        if seed is not None and bm[seed] <= 0:
            continue
        grown = _grow(Br, B4, w, beta, seed)
        if grown is None:
            trace.append((name, seed, "stalled"))
            continue
        centers, inA, inD = grown
        ok, mA, mD, sep = _audit_pair(d, w, inA, inD, beta, N, r, tol)
        trace.append((name, seed, len(centers), mA, mD, sep))
        if ok:
            label = name if seed is None else f"{name}:{seed}"
            return SeparatedPair(np.flatnonzero(inA), np.flatnonzero(inD), centers, label, mA, mD, sep)
    raise AuditError("no centre set met mu(A) >= beta, mu(D) <= 2N beta, d(A, D^c) >= 3r", trace)


@dataclass
class DecompositionResult:
    sets: list
    shields: list
    r: float
    N: int
    beta: float
    K: int
    total_measure: float
    centers: list = field(default_factory=list)
    strategies: list = field(default_factory=list)
    audit: dict = field(default_factory=dict)
    labels: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self):
        def lab(ix):
            if self.labels is None:
                return [int(i) for i in ix]
            return [int(self.labels[i]) for i in ix]

        return {
            "K": self.K,
            "r": self.r,
            "N": self.N,
            "beta": self.beta,
            "total_measure": self.total_measure,
            "sets": [lab(a) for a in self.sets],
            "shields": [lab(s) for s in self.shields],
            "centers": [lab(c) for c in self.centers],
            "strategies": list(self.strategies),
            "audit": dict(self.audit),
        }


def audit_decomposition(space: MMSpace, result: DecompositionResult, tol: float = 0.0) -> dict:
    """Recheck the three output properties from scratch."""
    w = space.measure
    d = space.distances
    floor_ok = all(float(w[a].sum()) >= result.beta for a in result.sets)
    cap = result.total_measure / result.K
    shield_ok = all(float(w[s].sum()) <= cap * (1 + 1e-12) for s in result.shields)
    min_sep = math.inf
    for i in range(len(result.sets)):
        for j in range(i + 1, len(result.sets)):
            min_sep = min(min_sep, float(d[np.ix_(result.sets[i], result.sets[j])].min()))
    contained = all(np.isin(a, s).all() for a, s in zip(result.sets, result.shields))
    disjoint = len(np.unique(np.concatenate(result.sets))) == sum(len(a) for a in result.sets)
    return {
        "count_ok": len(result.sets) == result.K,
        "measure_floor_ok": floor_ok,
        "separation_ok": min_sep >= 3 * result.r - tol,
        "shield_measure_ok": shield_ok,
        "sets_in_shields": contained,
        "sets_disjoint": disjoint,
        "min_separation": min_sep if math.isfinite(min_sep) else None,
    }


def decompose(space: MMSpace, K: int, r: float, N: int | None = None) -> DecompositionResult:
    """K sets of measure >= mu(X)/(2NK), pairwise at least 3r apart.

    Requires mu(B(x, r)) <= mu(X)/(4 N^2 K) for every x. ``N`` defaults to the
    greedy covering number of the space at radius r.
    """
    if not isinstance(K, (int, np.integer)) or K < 1:
        raise ParameterError(f"K must be a positive integer, got {K!r}")
    if not r > 0:
        raise ParameterError("r must be positive")
    if N is None:
        N = covering_number(space, r).N
    total = space.total_measure
    bm = space.ball_measures(r)
    cap = total / (4.0 * N * N * K)
    over = np.flatnonzero(bm > cap)
    if len(over):
        x = int(over[0])
        raise PreconditionError(
            f"mu(B(x, r)) = {bm[x]:.6g} exceeds mu(X)/(4 N^2 K) = {cap:.6g} at point {x} (N = {N}, K = {K})")
    alpha = total / (2.0 * N * K)
    removed = np.zeros(space.point_count, bool)
    sets, shields, centers, strategies = [], [], [], []
    for _ in range(K):
        w_j = np.where(removed, 0.0, space.measure)
        pair = grow_separated_pair(space, alpha, r, N, weights=w_j, avoid=removed)
        A = np.zeros(space.point_count, bool)
        A[pair.A] = True
        D = np.zeros(space.point_count, bool)
        D[pair.D] = True
        A &= ~removed
        D &= ~removed
        sets.append(np.flatnonzero(A))
        shields.append(np.flatnonzero(D))
        centers.append(pair.centers)
        strategies.append(pair.strategy)
        removed |= D
    result = DecompositionResult(sets, shields, float(r), int(N), alpha, int(K), total,
                                 centers, strategies, labels=space.labels)
    audit = audit_decomposition(space, result, tol=space.metric_tol)
    result.audit = audit
    if not all(v for key, v in audit.items() if key.endswith("_ok") or key.startswith("sets_")):
        raise AuditError(f"decomposition failed its audit: {audit}")
    return result


def admissible_radius(space: MMSpace, K: int, steps: int = 40):
    """Largest radius on a geometric grid meeting the decomposition hypothesis.

    The grid runs from diameter/8 down to 1/8 of the smallest nonzero
    distance. Returns ``(r, N)`` or None when no grid radius qualifies.
    """
    d = space.distances
    positive = d[d > 0]
    if positive.size == 0:
        return None
    cap1 = space.total_measure / (4.0 * K)
    for r in np.geomspace(space.diameter / 8.0, positive.min() / 8.0, steps):
        bm = space.ball_measures(r).max()
        if bm > cap1:
            continue
        N = covering_number(space, r).N
        if bm <= space.total_measure / (4.0 * N * N * K):
            return float(r), N
    return None


# --- certified eigenvalue upper bounds ---------------------------------------

@dataclass
class Certificate:
    k: int
    upper_bound: float
    branch: str
    r: float
    k0: int
    r_k: float
    lambda_k: float
    metric_bound: float
    branches: dict
    centers: list
    functions: np.ndarray = field(repr=False)
    audits: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "k": self.k,
            "upper_bound": self.upper_bound,
            "branch": self.branch,
            "r": self.r,
            "k0": self.k0,
            "r_k": self.r_k,
            "fem_lambda_k": self.lambda_k,
            "tightness": (self.upper_bound / self.lambda_k) if self.lambda_k > 0 else None,
            "metric_bound": self.metric_bound,
            "below_metric_bound": self.upper_bound <= self.metric_bound,
            "branches": self.branches,
            "centers": [int(c) for c in self.centers],
            "audits": self.audits,
        }


def greedy_centers(space: MMSpace, r: float, count: int):
    """Successive maximizers of mu(B(x, r)) outside the 4r-balls of earlier picks."""
    d = space.distances
    bm = space.ball_measures(r)
    free = np.ones(space.point_count, bool)
    centers = []
    while len(centers) < count and free.any():
        c = int(np.argmax(np.where(free, bm, -np.inf)))
        centers.append(c)
        free &= d[c] > 4.0 * r
    return centers, bm, free


def _plateau_functions(d, centers, r):
    return np.stack([np.clip(2.0 - d[c] / r, 0.0, 1.0) for c in centers]) if centers else np.zeros((0, d.shape[0]))


def certify_lambda_k(mesh, k: int, r_override: float | None = None, mass_scheme: str = "lumped",
                     seed: int = DEFAULT_SEED, space: MMSpace | None = None) -> Certificate:
    """Upper bound on the discrete lambda_k from disjointly supported test functions.

    Radius r_k comes from the Euclidean isoperimetric data (r0 = inf) unless
    ``r_override`` is given. Two constructions are tried: plateau functions on
    the heaviest well-separated balls, and distance functions around the sets
    of a K = 2k decomposition of the complement of those balls. The smaller
    successful bound is returned and checked against the FEM eigenvalue.
    """
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ParameterError(f"k must be a positive integer, got {k!r}")
    if 2 * k > mesh.n_vertices:
        raise ParameterError(f"2k = {2 * k} exceeds the vertex count {mesh.n_vertices}")
    n = 2
    measures = isoperimetric_ratio(mesh)
    area, vol, iso = measures.area, measures.volume, measures.iso_ratio
    spec = bounds.AmbientSpec.euclidean(n)
    kr = bounds.k0_and_rk(n, spec.I0, vol, math.inf, k)
    r = float(r_override) if r_override is not None else kr["r_k"]
    if not r > 0:
        raise ParameterError("radius must be positive")
    space = space or from_mesh(mesh, "ambient")
    d = space.distances
    w = space.measure
    ops = assemble_operators(mesh, mass_scheme)
    N_euc = spec.packing_N(math.inf)

    centers, bm, free = greedy_centers(space, r, 2 * k)
    audits = {
        "centers_found": len(centers),
        "monotone_ball_measures": bool(np.all(np.diff(bm[centers]) <= 0)),
        "double_balls_disjoint": bool(all(d[a, b] > 4.0 * r for i, a in enumerate(centers) for b in centers[i + 1:])),
    }
    if len(centers) == 2 * k:
        audits["residual_suppressed"] = bool(np.all(bm[free] <= bm[centers[-1]]))
        heavy_cut = spec.I0 * vol ** (n / (n + 1)) / (16.0 * k * N_euc ** 2)
        audits["heavy_case"] = bool(bm[centers[-1]] >= heavy_cut)
    sigma0 = float(w[free].sum())
    audits["sigma0_measure"] = sigma0
    audits["sigma0_lower_bound_holds"] = sigma0 > 0.5 * spec.I0 * vol ** (n / (n + 1))

    branches = {}
    candidates = []

    # plateau functions on the k lightest double balls
    if len(centers) >= k:
        mass2 = np.array([w[d[c] <= 2.0 * r].sum() for c in centers])
        pick = sorted(np.argsort(mass2, kind="stable")[:k].tolist())
        chosen = [centers[i] for i in pick]
        F = _plateau_functions(d, chosen, r)
        bound = minmax_bound_from_functions(mesh, F, operators=ops)
        branches["step3"] = {"ok": True, "bound": bound, "centers": [int(c) for c in chosen],
                             "light_double_balls": bool(np.all(mass2[pick] <= area / k))}
        candidates.append((bound, "step3", chosen, F))
    else:
        branches["step3"] = {"ok": False, "reason": f"only {len(centers)} separated centres at r = {r:.6g}"}

    # distance functions around a decomposition of the residual set
    residual = np.flatnonzero(free)
    if len(residual) == 0:
        branches["step4"] = {"ok": False, "reason": "residual set is empty"}
    else:
        try:
            sub = space.subspace(residual)
            dec = decompose(sub, 2 * k, r)
        except (PreconditionError, AuditError) as exc:
            branches["step4"] = {"ok": False, "reason": str(exc)}
        else:
            sets = [residual[a] for a in dec.sets]
            dist_to = [d[:, s].min(axis=1) for s in sets]
            nbhd_mass = np.array([w[dt < r].sum() for dt in dist_to])
            pick = sorted(np.argsort(nbhd_mass, kind="stable")[:k].tolist())
            F = np.stack([np.clip(1.0 - dist_to[i] / r, 0.0, None) for i in pick])
            bound = minmax_bound_from_functions(mesh, F, operators=ops)
            branches["step4"] = {"ok": True, "bound": bound, "N": dec.N, "sets": [[int(x) for x in sets[i]] for i in pick]}
            candidates.append((bound, "step4", [int(sets[i][0]) for i in pick], F))

    if not candidates:
        raise RadiusTooLargeError(
            f"could not build {k} disjointly supported test functions at r = {r:.6g}; "
            "try a smaller r_override")
    bound, branch, chosen, F = min(candidates, key=lambda c: c[0])
    lam_k = 0.0 if k == 1 else float(eigenvalues(mesh, k, mass_scheme, seed=seed).eigenvalues[k - 1])
    if bound < lam_k - 1e-9 * max(1.0, lam_k):
        raise AuditError(f"certified bound {bound:.10g} is below the FEM eigenvalue {lam_k:.10g}")
    mb = bounds.metric_bound(spec, iso, area, math.inf, k)
    return Certificate(k=k, upper_bound=bound, branch=branch, r=r, k0=kr["k0"], r_k=kr["r_k"],
                       lambda_k=lam_k, metric_bound=mb, branches=branches, centers=chosen,
                       functions=F, audits=audits)
