"""Geometric equivariance beyond permutations.

Two constructions live here:

* E(3)-equivariant message passing on geometric graphs: scalar features
  stay invariant while coordinates transform with rotations, reflections
  and translations of the input.

* Gauge-equivariant convolution on triangle meshes: per-vertex tangent
  frames are an arbitrary choice (a gauge), neighbour directions are
  expressed in geodesic polar coordinates from a one-ring log map,
  features are moved between frames by parallel transport, and the filter
  matrices are constrained to a linear subspace so the output transforms
  predictably under any per-vertex frame rotation.

The rotation group is discretised to the cyclic grid ``C_N``: all angles
entering the convolution are snapped to the grid, which makes the kernel
constraint set finite and the equivariance property exact rather than
approximate.
"""

from dataclasses import dataclass

import numpy as np

from .graph_nn import MlpParams, tree_sum
from .numkit import nullspace_basis

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# E(3)-equivariant message passing


@dataclass(frozen=True)
class GeometricGraph:
    """3-D node positions, node features and undirected neighbour lists."""

    positions: np.ndarray
    features: np.ndarray
    edges: list

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        f = np.asarray(self.features, dtype=float)
        if p.ndim != 2 or p.shape[1] != 3 or f.shape[0] != p.shape[0]:
            raise ValueError("positions must be (n, 3) with matching feature rows")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(f))):
            raise ValueError("non-finite inputs")
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "features", f)

    @property
    def n(self):
        return self.positions.shape[0]

    def neighbours(self, u):
        out = set()
        for a, b in self.edges:
            if a == u:
                out.add(b)
            elif b == u:
                out.add(a)
        return np.array(sorted(out), dtype=int)


@dataclass(frozen=True)
class EgnnParams:
    """``psi_f`` builds messages from (f_u, f_v, squared distance), ``psi_c``
    maps the same inputs to one scalar coordinate weight, ``phi`` updates
    node features from (f_u, aggregate)."""

    psi_f: MlpParams
    psi_c: MlpParams
    phi: MlpParams

    def __post_init__(self):
        if self.psi_c.out_width != 1:
            raise ValueError("coordinate network must output one scalar")


def egnn_layer(g, params):
    """One equivariant message-passing step.

    Features update through distances only; coordinates move along the
    difference vectors weighted by a learned scalar, so rigid motions of
    the input rigidly move the output and features stay invariant.  Both
    sums run over the declared neighbourhoods with fixed-tree reduction;
    isolated nodes keep their position and see a zero aggregate.
    """
    f = g.features
    x = g.positions
    width = params.psi_f.out_width
    new_f = np.empty((g.n, params.phi.out_width))
    new_x = x.copy()
    for u in range(g.n):
        nbrs = g.neighbours(u)
        if nbrs.shape[0] == 0:
            aggregate = np.zeros(width)
        else:
            sq = np.sum((x[u] - x[nbrs]) ** 2, axis=1, keepdims=True)
            pair = np.concatenate(
                [np.repeat(f[u][None, :], nbrs.shape[0], axis=0), f[nbrs], sq], axis=1)
            aggregate = tree_sum(params.psi_f.apply(pair))
            weights = params.psi_c.apply(pair)[:, 0]
            new_x[u] = x[u] + tree_sum(weights[:, None] * (x[u] - x[nbrs]))
        new_f[u] = params.phi.apply(np.concatenate([f[u], aggregate]))
    return new_f, new_x


def e3_transform(g, rotation, translation):
    """Apply a rigid motion (orthogonal matrix, reflections allowed, plus a
    translation) to the positions; features and edges untouched."""
    rotation = np.asarray(rotation, dtype=float)
    translation = np.asarray(translation, dtype=float)
    if np.max(np.abs(rotation.T @ rotation - np.eye(3))) > 1e-10:
        raise ValueError("rotation matrix is not orthogonal")
    return GeometricGraph(positions=g.positions @ rotation.T + translation,
                          features=g.features.copy(), edges=list(g.edges))


# ---------------------------------------------------------------------------
# tangent frames, one-ring log maps, parallel transport


@dataclass(frozen=True)
class GaugeFrameField:
    """Orthonormal tangent pair plus normal per vertex, ``n = e1 x e2``."""

    e1: np.ndarray
    e2: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        for name in ("e1", "e2", "normal"):
            v = getattr(self, name)
            if np.max(np.abs(np.linalg.norm(v, axis=1) - 1.0)) > 1e-10:
                raise ValueError(f"{name} is not unit length everywhere")
        if np.max(np.abs(np.einsum("ij,ij->i", self.e1, self.e2))) > 1e-10:
            raise ValueError("tangent pair is not orthogonal")
        if np.max(np.abs(np.cross(self.e1, self.e2) - self.normal)) > 1e-8:
            raise ValueError("normal must equal e1 x e2")


def _vertex_rings(mesh):
    """Ordered one-ring neighbour cycles (or open fans) per vertex.

    Face corners (u, v, w) contribute the directed link edge v -> w, so for
    consistently outward-oriented faces the ring runs counterclockwise
    around the outward normal.  Returns (rings, boundary_flags).
    """
    succ = [dict() for _ in range(mesh.n_vertices)]
    for a, b, c in mesh.faces:
        succ[a][int(b)] = int(c)
        succ[b][int(c)] = int(a)
        succ[c][int(a)] = int(b)
    rings, boundary = [], []
    for u in range(mesh.n_vertices):
        nxt = succ[u]
        if not nxt:
            rings.append([])
            boundary.append(False)
            continue
        starts = set(nxt) - set(nxt.values())
        is_boundary = bool(starts)
        start = min(starts) if starts else min(nxt)
        ring = [start]
        while len(ring) <= len(nxt):
            cur = ring[-1]
            if cur not in nxt:
                break
            follower = nxt[cur]
            if follower == ring[0]:
                break
            ring.append(follower)
        if len(ring) != len(set(ring)) or len(ring) < len(nxt):
            raise ValueError(f"vertex {u} has a non-manifold star")
        rings.append(ring)
        boundary.append(is_boundary)
    return rings, boundary


def tangent_frames(mesh):
    """Area-weighted vertex normals with the reference direction taken from
    the lowest-index one-ring neighbour (an arbitrary but fixed gauge)."""
    v = mesh.vertices
    f = mesh.faces
    face_normal = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    normals = np.zeros((mesh.n_vertices, 3))
    for fi, face in enumerate(f):
        for u in face:
            normals[u] += face_normal[fi]  # cross product length = 2 * area
    norms = np.linalg.norm(normals, axis=1)
    if np.any(norms < 1e-14):
        raise ValueError("degenerate vertex star: zero normal")
    normals /= norms[:, None]
    rings, _ = _vertex_rings(mesh)
    e1 = np.empty_like(normals)
    for u in range(mesh.n_vertices):
        if not rings[u]:
            raise ValueError(f"vertex {u} has no incident face")
        ref = min(rings[u])
        edge = v[ref] - v[u]
        proj = edge - (edge @ normals[u]) * normals[u]
        norm = np.linalg.norm(proj)
        if norm < 1e-14:
            raise ValueError(f"reference edge at vertex {u} is parallel to the normal")
        e1[u] = proj / norm
    e2 = np.cross(normals, e1)
    return GaugeFrameField(e1=e1, e2=e2, normal=normals)


@dataclass
class Connection:
    """Geodesic polar coordinates and parallel transport per directed edge.

    ``theta[(u, v)]`` is the angle of neighbour ``v`` around ``u`` measured
    from the frame's reference direction; ``radius[(u, v)]`` the edge
    length; ``transport[(v, u)]`` the rotation a coordinate vector picks up
    when carried from the frame at ``v`` to the frame at ``u``.
    ``boundary_vertices`` lists vertices whose ring is an open fan.
    """

    theta: dict
    radius: dict
    transport: dict
    boundary_vertices: list


def one_ring_log_map(mesh, frames):
    """Fill polar coordinates by unrolling each vertex star into the plane.

    Interior corner angles are accumulated in ring order and rescaled by
    ``2 pi / total angle`` so the flattened star closes up; the offset puts
    the frame's reference edge (lowest neighbour index) at angle zero.
    """
    v = mesh.vertices
    rings, boundary = _vertex_rings(mesh)
    theta, radius = {}, {}
    boundary_vertices = [u for u, b in enumerate(boundary) if b]
    for u in range(mesh.n_vertices):
        ring = rings[u]
        if not ring:
            continue
        m = len(ring)
        corners = np.empty(m)
        count = m if not boundary[u] else m - 1
        cumulative = np.zeros(m)
        for i in range(count):
            a = v[ring[i]] - v[u]
            b = v[ring[(i + 1) % m]] - v[u]
            cosang = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
            corners[i] = np.arccos(np.clip(cosang, -1.0, 1.0))
        total = float(np.sum(corners[:count]))
        scale = TWO_PI / total
        for i in range(1, m):
            cumulative[i] = cumulative[i - 1] + corners[i - 1] * scale
        ref = min(ring)
        offset = cumulative[ring.index(ref)]
        for i, nbr in enumerate(ring):
            theta[(u, nbr)] = (cumulative[i] - offset) % TWO_PI
            radius[(u, nbr)] = float(np.linalg.norm(v[nbr] - v[u]))
    return Connection(theta=theta, radius=radius, transport={},
                      boundary_vertices=boundary_vertices)


def transport_angles(mesh, frames, conn):
    """Fill parallel-transport angles from the log maps.

    Unfolding the two faces sharing edge (u, v) into a plane, the direction
    u -> v seen at u, reversed, must coincide with v -> u seen at v:
    ``g_{v->u} = (theta_uv + pi) - theta_vu``.  Antisymmetry holds by
    construction.
    """
    transport = {}
    for (u, nbr) in conn.theta:
        transport[(nbr, u)] = (conn.theta[(u, nbr)] + np.pi - conn.theta[(nbr, u)]) % TWO_PI
    return Connection(theta=dict(conn.theta), radius=dict(conn.radius),
                      transport=transport, boundary_vertices=list(conn.boundary_vertices))


def angle_defect(mesh, u):
    """``2 pi`` minus the interior angles at ``u`` (discrete curvature)."""
    v = mesh.vertices
    total = 0.0
    for face in mesh.faces:
        if u in face:
            others = [w for w in face if w != u]
            a = v[others[0]] - v[u]
            b = v[others[1]] - v[u]
            cosang = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
            total += np.arccos(np.clip(cosang, -1.0, 1.0))
    return TWO_PI - total


def ring_holonomy(mesh, conn, u):
    """Net rotation from composing edge transports around the one-ring of ``u``.

    The loop runs along the ring edges, so it encloses the centre's angle
    defect plus each ring vertex's curvature share inside the star (the
    flattening rescale distributes a vertex's defect over its corners);
    :func:`enclosed_curvature` computes that reference value.
    """
    rings, _ = _vertex_rings(mesh)
    ring = rings[u]
    total = 0.0
    for i, a in enumerate(ring):
        b = ring[(i + 1) % len(ring)]
        total += conn.transport[(a, b)]
    return total % TWO_PI


def _corner_angle(mesh, u, a, b):
    v = mesh.vertices
    e1, e2 = v[a] - v[u], v[b] - v[u]
    cosang = np.dot(e1, e2) / (np.linalg.norm(e1) * np.linalg.norm(e2))
    return float(np.arccos(np.clip(cosang, -1.0, 1.0)))


def enclosed_curvature(mesh, u):
    """Curvature enclosed by the one-ring edge loop of ``u``: the centre's
    defect plus, for each ring vertex, its defect share over the corners
    lying inside the star (sum of corner-angle defects)."""
    rings, _ = _vertex_rings(mesh)
    ring = rings[u]
    m = len(ring)
    total = TWO_PI - sum(_corner_angle(mesh, u, ring[i], ring[(i + 1) % m])
                         for i in range(m))
    for i, w in enumerate(ring):
        prev_v, next_v = ring[(i - 1) % m], ring[(i + 1) % m]
        ring_w = rings[w]
        mw = len(ring_w)
        theta_w = sum(_corner_angle(mesh, w, ring_w[j], ring_w[(j + 1) % mw])
                      for j in range(mw))
        inside = _corner_angle(mesh, w, prev_v, u) + _corner_angle(mesh, w, u, next_v)
        total += (TWO_PI / theta_w - 1.0) * inside
    return total % TWO_PI


def star_unfolding_holonomy(mesh, u):
    """Net rotation of a vector carried once around ``u`` through its star,
    unfolding face after face across the shared spokes.

    Transport inside each flat face is trivial and the transition at each
    spoke is the in-plane rotation by that face's corner angle at ``u``, so
    the composition around the loop returns the vector rotated by the angle
    defect (discrete Gauss-Bonnet for a loop enclosing only ``u``).
    """
    rings, _ = _vertex_rings(mesh)
    ring = rings[u]
    m = len(ring)
    rotation = np.eye(2)
    for i in range(m):
        ang = _corner_angle(mesh, u, ring[i], ring[(i + 1) % m])
        c, s = np.cos(ang), np.sin(ang)
        rotation = np.array([[c, -s], [s, c]]) @ rotation
    return (-np.arctan2(rotation[1, 0], rotation[0, 0])) % TWO_PI


# ---------------------------------------------------------------------------
# gauge-equivariant convolution


def rep_dimension(orders):
    return sum(1 if m == 0 else 2 for m in orders)


def rep_matrix(orders, angle):
    """Block-diagonal action: order 0 blocks are scalars, order m blocks
    rotate by ``m * angle``."""
    dim = rep_dimension(orders)
    out = np.zeros((dim, dim))
    pos = 0
    for m in orders:
        if m == 0:
            out[pos, pos] = 1.0
            pos += 1
        else:
            c, s = np.cos(m * angle), np.sin(m * angle)
            out[pos:pos + 2, pos:pos + 2] = [[c, -s], [s, c]]
            pos += 2
    return out


@dataclass(frozen=True)
class GaugeKernel:
    """Self and per-angle-bin neighbour filter matrices for fixed feature
    types; valid kernels satisfy the equivariance constraints."""

    orders_in: tuple
    orders_out: tuple
    theta_self: np.ndarray
    theta_neigh: np.ndarray  # (n_bins, d_out, d_in)

    @property
    def n_bins(self):
        return self.theta_neigh.shape[0]


def _constraint_matrix(orders_in, orders_out, n_bins):
    """Stacked linear constraints on (theta_self, theta_neigh bins).

    For every grid angle ``a`` the kernel must satisfy
    ``Theta_self rho_in(a) = rho_out(a) Theta_self`` and
    ``Theta_neigh(b + a) rho_in(a) = rho_out(a) Theta_neigh(b)`` for every
    bin ``b`` -- precisely the conditions that make the convolution output
    transform by ``rho_out`` of the (inverse) gauge rotation.
    """
    d_in = rep_dimension(orders_in)
    d_out = rep_dimension(orders_out)
    block = d_out * d_in
    n_unknowns = block * (1 + n_bins)
    rows = []
    eye_in = np.eye(d_in)
    eye_out = np.eye(d_out)
    for step in range(n_bins):
        alpha = TWO_PI * step / n_bins
        rin = rep_matrix(orders_in, alpha)
        rout = rep_matrix(orders_out, alpha)
        # row-major vec: vec(X A) = (I kron A^T) vec(X); vec(B X) = (B kron I) vec(X)
        right = np.kron(eye_out, rin.T)
        left = np.kron(rout, eye_in)
        block_rows = np.zeros((block, n_unknowns))
        block_rows[:, :block] = right - left
        rows.append(block_rows)
        for b in range(n_bins):
            shifted = (b + step) % n_bins
            block_rows = np.zeros((block, n_unknowns))
            block_rows[:, block * (1 + shifted):block * (2 + shifted)] += right
            block_rows[:, block * (1 + b):block * (2 + b)] -= left
            rows.append(block_rows)
    return np.concatenate(rows, axis=0)


def kernel_constraint_basis(orders_in, orders_out, n_bins, tol=1e-7):
    """Orthonormal basis of kernels satisfying the gauge constraints."""
    if n_bins < 1:
        raise ValueError("at least one angle bin required")
    orders_in = tuple(orders_in)
    orders_out = tuple(orders_out)
    d_in = rep_dimension(orders_in)
    d_out = rep_dimension(orders_out)
    block = d_out * d_in
    constraints = _constraint_matrix(orders_in, orders_out, n_bins)
    basis = nullspace_basis(constraints, tol=tol)
    kernels = []
    for col in basis.T:
        theta_self = col[:block].reshape(d_out, d_in)
        theta_neigh = col[block:].reshape(n_bins, d_out, d_in)
        kernels.append(GaugeKernel(orders_in=orders_in, orders_out=orders_out,
                                   theta_self=theta_self, theta_neigh=theta_neigh))
    return kernels


def kernel_from_coefficients(basis_kernels, coefficients):
    """Linear combination of constraint-basis kernels."""
    coefficients = np.asarray(coefficients, dtype=float)
    if len(basis_kernels) != coefficients.shape[0]:
        raise ValueError("one coefficient per basis kernel required")
    first = basis_kernels[0]
    theta_self = sum(c * k.theta_self for c, k in zip(coefficients, basis_kernels))
    theta_neigh = sum(c * k.theta_neigh for c, k in zip(coefficients, basis_kernels))
    return GaugeKernel(orders_in=first.orders_in, orders_out=first.orders_out,
                       theta_self=theta_self, theta_neigh=theta_neigh)


def kernel_constraint_residual(kernel):
    """Largest violation of the two constraint families; valid kernels are
    at numerical zero."""
    n_bins = kernel.n_bins
    worst = 0.0
    for step in range(n_bins):
        alpha = TWO_PI * step / n_bins
        rin = rep_matrix(kernel.orders_in, alpha)
        rout = rep_matrix(kernel.orders_out, alpha)
        worst = max(worst, np.max(np.abs(kernel.theta_self @ rin - rout @ kernel.theta_self)))
        for b in range(n_bins):
            lhs = kernel.theta_neigh[(b + step) % n_bins] @ rin
            rhs = rout @ kernel.theta_neigh[b]
            worst = max(worst, np.max(np.abs(lhs - rhs)))
    return float(worst)


def snap_angle(angle, n_bins):
    """Nearest grid angle in ``C_N``."""
    step = TWO_PI / n_bins
    return (np.round(angle / step) % n_bins) * step


def gauge_conv(mesh, conn, kernel, x):
    """Gauge-equivariant message passing
    ``h_u = Theta_self x_u + sum_v Theta_neigh(theta_uv) rho(g_{v->u}) x_v``
    with all angles snapped to the kernel's ``C_N`` grid."""
    x = np.asarray(x, dtype=float)
    d_in = rep_dimension(kernel.orders_in)
    d_out = rep_dimension(kernel.orders_out)
    if x.shape != (mesh.n_vertices, d_in):
        raise ValueError("feature width must match the input type")
    if kernel_constraint_residual(kernel) > 1e-8:
        raise ValueError("kernel violates the gauge constraints")
    n_bins = kernel.n_bins
    step = TWO_PI / n_bins
    neighbours = {}
    for (u, v) in conn.theta:
        neighbours.setdefault(u, []).append(v)
    out = np.zeros((mesh.n_vertices, d_out))
    for u in range(mesh.n_vertices):
        h = kernel.theta_self @ x[u]
        for v in sorted(neighbours.get(u, ())):
            b = int(np.round(conn.theta[(u, v)] / step)) % n_bins
            g = snap_angle(conn.transport[(v, u)], n_bins)
            h = h + kernel.theta_neigh[b] @ (rep_matrix(kernel.orders_in, g) @ x[v])
        out[u] = h
    return out


def gauge_transform(frames, conn, x, angles, orders):
    """Rotate the frame at each vertex by its angle and update everything
    that was expressed in the old gauges: polar angles shift by ``-angle_u``,
    transports by ``angle_v - angle_u``, features by ``rho(-angle_u)``."""
    angles = np.asarray(angles, dtype=float)
    x = np.asarray(x, dtype=float)
    n = angles.shape[0]
    if frames.e1.shape[0] != n or x.shape[0] != n:
        raise ValueError("one angle per vertex required")
    cos = np.cos(angles)[:, None]
    sin = np.sin(angles)[:, None]
    new_frames = GaugeFrameField(
        e1=cos * frames.e1 + sin * frames.e2,
        e2=-sin * frames.e1 + cos * frames.e2,
        normal=frames.normal.copy(),
    )
    theta = {(u, v): (ang - angles[u]) % TWO_PI for (u, v), ang in conn.theta.items()}
    transport = {(v, u): (g - angles[u] + angles[v]) % TWO_PI
                 for (v, u), g in conn.transport.items()}
    new_conn = Connection(theta=theta, radius=dict(conn.radius), transport=transport,
                          boundary_vertices=list(conn.boundary_vertices))
    new_x = np.stack([rep_matrix(orders, -angles[u]) @ x[u] for u in range(n)])
    return new_frames, new_conn, new_x
