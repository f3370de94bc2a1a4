"""Oriented triangle meshes as discrete manifolds: validation, the discrete
metric, the cotangent stiffness/lumped-mass pair (from angles and,
equivalently, from edge lengths alone), icosphere test geometry, controlled
vertex jitter, and OFF/OBJ-subset file IO.

The Laplacian is stored as the pair ``(L, M)``: a symmetric positive
semidefinite stiffness matrix with constants in its kernel plus a diagonal
matrix of barycentric vertex areas.  The geometric operator is ``M^{-1} L``
and all spectral analysis runs on the generalized problem ``L phi = lambda
M phi``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .rng import substream

AREA_FLOOR = 1e-12  # triangles below AREA_FLOOR * (mean edge length)^2 are degenerate


@dataclass(frozen=True)
class TriMesh:
    """Vertex positions (n, 3) and oriented faces (m, 3)."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        f = np.asarray(self.faces, dtype=int)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must be (n, 3)")
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError("faces must be (m, 3)")
        if f.size and (f.min() < 0 or f.max() >= v.shape[0]):
            raise ValueError("face index out of range")
        if np.any(f[:, 0] == f[:, 1]) or np.any(f[:, 1] == f[:, 2]) or np.any(f[:, 0] == f[:, 2]):
            raise ValueError("degenerate face with repeated vertex")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite vertex positions")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    def edges(self):
        """Sorted unique undirected edges as an (e, 2) array."""
        f = self.faces
        pairs = np.vstack([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        pairs = np.sort(pairs, axis=1)
        return np.unique(pairs, axis=0)

    def face_areas(self):
        v = self.vertices
        f = self.faces
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def mean_edge_length(self):
        e = self.edges()
        return float(np.mean(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)))


@dataclass
class ManifoldReport:
    """Findings of :func:`validate_manifold`; empty lists mean clean."""

    nonmanifold_edges: list
    boundary_edges: list
    nonmanifold_vertices: list
    orientation_conflicts: list

    def is_clean_closed(self):
        return not (self.nonmanifold_edges or self.boundary_edges
                    or self.nonmanifold_vertices or self.orientation_conflicts)


def validate_manifold(mesh):
    """Flag non-manifold edges (more than two incident faces), boundary
    edges (exactly one), vertices whose link is not a single path or loop,
    and directed edges traversed twice in the same direction."""
    edge_faces = {}
    directed_seen = {}
    orientation_conflicts = []
    for fi, (a, b, c) in enumerate(mesh.faces):
        for u, v in ((a, b), (b, c), (c, a)):
            edge_faces.setdefault((min(u, v), max(u, v)), []).append(fi)
            if (u, v) in directed_seen:
                orientation_conflicts.append((int(u), int(v)))
            directed_seen[(u, v)] = fi
    nonmanifold_edges = [e for e, fs in edge_faces.items() if len(fs) > 2]
    boundary_edges = [e for e, fs in edge_faces.items() if len(fs) == 1]

    nonmanifold_vertices = []
    incident = [[] for _ in range(mesh.n_vertices)]
    for fi, face in enumerate(mesh.faces):
        for u in face:
            incident[u].append(fi)
    for u in range(mesh.n_vertices):
        if not incident[u]:
            continue
        # link edges: the sides opposite u in each incident face
        link = []
        for fi in incident[u]:
            others = [int(w) for w in mesh.faces[fi] if w != u]
            link.append(tuple(others))
        # walk the link; a manifold star is a single open path or cycle
        adj = {}
        for a, b in link:
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        if any(len(nbrs) > 2 for nbrs in adj.values()):
            nonmanifold_vertices.append(u)
            continue
        start = next((w for w, nbrs in adj.items() if len(nbrs) == 1), next(iter(adj)))
        seen = {start}
        prev, cur = None, start
        while True:
            nxt = [w for w in adj[cur] if w != prev]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            if cur in seen:
                break
            seen.add(cur)
        if len(seen) != len(adj):
            nonmanifold_vertices.append(u)
    return ManifoldReport(
        nonmanifold_edges=nonmanifold_edges,
        boundary_edges=boundary_edges,
        nonmanifold_vertices=nonmanifold_vertices,
        orientation_conflicts=orientation_conflicts,
    )


@dataclass(frozen=True)
class DiscreteMetric:
    """Edge lengths keyed by sorted vertex pair, plus the face list."""

    lengths: dict
    faces: np.ndarray

    def length(self, u, v):
        return self.lengths[(min(u, v), max(u, v))]


def discrete_metric(mesh):
    """Euclidean edge lengths; raises when a face violates the strict
    triangle inequality (degenerate face)."""
    lengths = {}
    e = mesh.edges()
    d = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    for (u, v), length in zip(e, d):
        lengths[(int(u), int(v))] = float(length)
    metric = DiscreteMetric(lengths=lengths, faces=mesh.faces.copy())
    _check_triangle_inequality(metric)
    return metric


def _check_triangle_inequality(metric):
    for (a, b, c) in metric.faces:
        la = metric.length(b, c)
        lb = metric.length(a, c)
        lc = metric.length(a, b)
        if la + lb <= lc or la + lc <= lb or lb + lc <= la:
            raise ValueError(f"triangle inequality violated on face ({a}, {b}, {c})")


@dataclass(frozen=True)
class LaplacianPair:
    """Symmetric stiffness ``L`` (constants in kernel) and diagonal mass ``M``."""

    stiffness: sp.csr_matrix
    mass: sp.csr_matrix

    @property
    def n(self):
        return self.stiffness.shape[0]

    def operator_apply(self, x):
        """The geometric Laplacian ``M^{-1} L x``."""
        return (self.stiffness @ x) / self.mass.diagonal().reshape(
            (-1,) + (1,) * (np.ndim(x) - 1))


def _assemble_pair(n, faces, cot_weights, face_areas, mean_edge):
    """Shared assembly: per-face per-edge half-cotangents into L, barycentric
    thirds of face areas into M."""
    floor = AREA_FLOOR * mean_edge**2
    if np.any(face_areas < floor):
        bad = int(np.argmin(face_areas))
        raise ValueError(f"degenerate triangle {bad}: area {face_areas[bad]:.3e}")
    off_diag = [dict() for _ in range(n)]
    for (a, b, c), (wa, wb, wc) in zip(faces, cot_weights):
        # w* is half the cotangent of the angle at that corner, written
        # against the edge opposite it
        for (u, v), w in (((b, c), wa), ((a, c), wb), ((a, b), wc)):
            off_diag[u][v] = off_diag[u].get(v, 0.0) - w
            off_diag[v][u] = off_diag[v].get(u, 0.0) - w
    # The diagonal is the negated left-to-right sum of the row's off-diagonal
    # entries and is stored after them, so the sparse matvec (which folds
    # entries in storage order) cancels each row against it bit-exactly:
    # constants lie in the kernel not just approximately but as floats.
    indices, data, indptr = [], [], [0]
    for u in range(n):
        acc = 0.0
        for v in sorted(off_diag[u]):
            w = off_diag[u][v]
            indices.append(v)
            data.append(w)
            acc += w
        indices.append(u)
        data.append(-acc)
        indptr.append(len(indices))
    stiffness = sp.csr_matrix(
        (np.array(data), np.array(indices), np.array(indptr)), shape=(n, n))
    mass_diag = np.zeros(n)
    for (a, b, c), area in zip(faces, face_areas):
        share = area / 3.0
        mass_diag[a] += share
        mass_diag[b] += share
        mass_diag[c] += share
    if np.any(mass_diag <= 0):
        raise ValueError("mesh has a vertex with no incident face")
    return LaplacianPair(stiffness=stiffness, mass=sp.diags(mass_diag).tocsr())


def cotan_laplacian(mesh):
    """Cotangent stiffness from corner angles of the embedded mesh.

    Off-diagonal ``L_uv = -(cot alpha + cot beta) / 2`` over the angles
    opposite edge (u, v); boundary edges take the single available
    cotangent; diagonal entries make rows sum to zero.  Obtuse angles keep
    their negative cotangents (no clamping).
    """
    v = mesh.vertices
    f = mesh.faces
    areas = mesh.face_areas()
    mean_edge = mesh.mean_edge_length()
    floor = AREA_FLOOR * mean_edge**2
    if np.any(areas < floor):
        bad = int(np.argmin(areas))
        raise ValueError(f"degenerate triangle {bad}: area {areas[bad]:.3e}")
    cots = np.empty((mesh.n_faces, 3))
    for corner, (i, j, k) in enumerate(((0, 1, 2), (1, 2, 0), (2, 0, 1))):
        e1 = v[f[:, j]] - v[f[:, i]]
        e2 = v[f[:, k]] - v[f[:, i]]
        cross = np.linalg.norm(np.cross(e1, e2), axis=1)
        cots[:, corner] = 0.5 * np.einsum("ij,ij->i", e1, e2) / cross
    return _assemble_pair(mesh.n_vertices, f, cots, areas, mean_edge)


def cotan_laplacian_intrinsic(metric):
    """Same operator pair computed from the discrete metric alone: per-face
    weights ``(-l_uv^2 + l_vq^2 + l_uq^2) / (8 a)`` with Heron areas."""
    _check_triangle_inequality(metric)
    faces = metric.faces
    n = int(faces.max()) + 1
    cots = np.empty((faces.shape[0], 3))
    areas = np.empty(faces.shape[0])
    all_lengths = []
    for fi, (a, b, c) in enumerate(faces):
        la = metric.length(b, c)  # opposite corner a
        lb = metric.length(a, c)
        lc = metric.length(a, b)
        s = 0.5 * (la + lb + lc)
        area = np.sqrt(s * (s - la) * (s - lb) * (s - lc))
        areas[fi] = area
        # half-cotangent at each corner, written against its opposite edge
        cots[fi, 0] = (-la**2 + lb**2 + lc**2) / (8.0 * area)
        cots[fi, 1] = (-lb**2 + la**2 + lc**2) / (8.0 * area)
        cots[fi, 2] = (-lc**2 + la**2 + lb**2) / (8.0 * area)
        all_lengths.extend((la, lb, lc))
    mean_edge = float(np.mean(all_lengths))
    return _assemble_pair(n, faces, cots, areas, mean_edge)


# ---------------------------------------------------------------------------
# test geometry


def icosahedron():
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    verts /= np.linalg.norm(verts[0])
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=int)
    return TriMesh(vertices=verts, faces=faces)


def icosphere(subdivisions):
    """Unit sphere by 4-way subdivision of the icosahedron with midpoint
    reprojection; closed manifold with ``20 * 4^k`` faces."""
    if not (0 <= subdivisions <= 6):
        raise ValueError("subdivision count must be in 0..6")
    mesh = icosahedron()
    for _ in range(subdivisions):
        verts = [row for row in mesh.vertices]
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = (mesh.vertices[a] + mesh.vertices[b]) / 2.0
                m = m / np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(m)
            return cache[key]

        faces = []
        for a, b, c in mesh.faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            faces.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
        mesh = TriMesh(vertices=np.array(verts), faces=np.array(faces, dtype=int))
    return mesh


def jitter_mesh(mesh, epsilon, seed):
    """Displace each vertex by an independent uniform vector of norm at most
    ``epsilon * mean edge length``; connectivity unchanged, determinism from
    the seed.  Raises if the perturbation degenerates a face."""
    if not (0 <= epsilon < 0.1):
        raise ValueError("jitter amplitude must be below 0.1")
    rng = substream(seed, "mesh-jitter")
    n = mesh.n_vertices
    direction = rng.normal(size=(n, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = mesh.mean_edge_length() * epsilon * rng.uniform(size=n) ** (1.0 / 3.0)
    jittered = TriMesh(vertices=mesh.vertices + radius[:, None] * direction,
                       faces=mesh.faces.copy())
    floor = AREA_FLOOR * jittered.mean_edge_length() ** 2
    if np.any(jittered.face_areas() < floor):
        raise ValueError("jitter produced a degenerate face")
    return jittered


# ---------------------------------------------------------------------------
# file formats


def save_mesh(path, mesh, fmt=None):
    fmt = fmt or _format_from_path(path)
    with open(path, "w", encoding="utf-8") as fh:
        if fmt == "off":
            fh.write("OFF\n")
            fh.write(f"{mesh.n_vertices} {mesh.n_faces} 0\n")
            for v in mesh.vertices:
                fh.write(" ".join(repr(float(c)) for c in v) + "\n")
            for f in mesh.faces:
                fh.write("3 " + " ".join(str(int(i)) for i in f) + "\n")
        elif fmt == "obj":
            for v in mesh.vertices:
                fh.write("v " + " ".join(repr(float(c)) for c in v) + "\n")
            for f in mesh.faces:
                fh.write("f " + " ".join(str(int(i) + 1) for i in f) + "\n")
        else:
            raise ValueError(f"unknown mesh format {fmt!r}")


def load_mesh(path, fmt=None):
    fmt = fmt or _format_from_path(path)
    if fmt == "off":
        return _load_off(path)
    if fmt == "obj":
        return _load_obj(path)
    raise ValueError(f"unknown mesh format {fmt!r}")


def _format_from_path(path):
    lower = str(path).lower()
    if lower.endswith(".off"):
        return "off"
    if lower.endswith(".obj"):
        return "obj"
    raise ValueError(f"cannot infer mesh format from {path!r}")


def _load_off(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0] != "OFF":
        raise ValueError("malformed OFF header")
    counts = lines[1].split()
    nv, nf = int(counts[0]), int(counts[1])
    if len(lines) < 2 + nv + nf:
        raise ValueError("truncated OFF file")
    verts = np.array([[float(t) for t in lines[2 + i].split()] for i in range(nv)])
    faces = []
    for i in range(nf):
        tokens = lines[2 + nv + i].split()
        if int(tokens[0]) != 3:
            raise ValueError("non-triangle face")
        faces.append([int(t) for t in tokens[1:4]])
    faces = np.array(faces, dtype=int)
    if faces.size and (faces.min() < 0 or faces.max() >= nv):
        raise ValueError("index out of range")
    return TriMesh(vertices=verts, faces=faces)


def _load_obj(path):
    verts, faces = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            if tokens[0] == "v":
                verts.append([float(t) for t in tokens[1:4]])
            elif tokens[0] == "f":
                if len(tokens) != 4:
                    raise ValueError("non-triangle face")
                idx = [int(t.split("/")[0]) for t in tokens[1:4]]
                if any(i < 1 for i in idx):
                    raise ValueError("index out of range")
                faces.append([i - 1 for i in idx])
            # other OBJ statements are outside the supported subset
    verts = np.array(verts)
    faces = np.array(faces, dtype=int)
    if faces.size and faces.max() >= len(verts):
        raise ValueError("index out of range")
    return TriMesh(vertices=verts, faces=faces)
