"""Triangulations, boundary curves, and periodic node identification.

Three kinds of domains are meshed: axis-aligned squares (macroscopic
tissue domains and periodicity cells), star-shaped cell interiors built by
mapping a structured disc mesh, and perforated squares (a square with one
star-shaped hole) built by a transfinite radial blend between the hole
boundary and the outer square.  The blend places hole nodes exactly on the
true curve, guarantees translationally matching node layouts on opposite
outer faces, and grades the radial spacing geometrically so element sizes
transition smoothly from the hole to the outer boundary.

Meshes round-trip through a plain-text format (``TSFEM-MESH 1``) described
in :func:`write_mesh`.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import (
    GeometryError,
    InputError,
    MatchingError,
    MeshFormatError,
    TopologyError,
)

DOMAIN_TAGS = ("macro", "cell_interior", "cell_exterior")


@dataclass
class TriMesh:
    """Conforming triangulation with boundary markers and periodic classes.

    nodes: (N, 2) float array of coordinates.
    triangles: (T, 3) int array, counter-clockwise vertex triples.
    boundary_edges: (B, 2) int array, oriented with the domain on the left.
    boundary_markers: length-B list of marker labels ('outer' or 'hole').
    periodic_classes: list of int arrays, each an equivalence class of
        nodes identified across the periodic boundary (empty by default).
    domain_tag: one of 'macro', 'cell_interior', 'cell_exterior'.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_markers: list
    periodic_classes: list = field(default_factory=list)
    domain_tag: str = "macro"

    @property
    def node_count(self):
        return self.nodes.shape[0]

    @property
    def triangle_count(self):
        return self.triangles.shape[0]


@dataclass
class CurveMesh:
    """Closed polygonal curve extracted from a bulk mesh boundary.

    nodes: (M, 2) coordinates in loop order.
    segments: (M, 2) node-index pairs chaining the loop.
    parent_indices: (M,) indices of the corresponding bulk-mesh nodes.
    """

    nodes: np.ndarray
    segments: np.ndarray
    parent_indices: np.ndarray

    @property
    def node_count(self):
        return self.nodes.shape[0]

    def segment_lengths(self):
        d = self.nodes[self.segments[:, 1]] - self.nodes[self.segments[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def total_length(self):
        return float(self.segment_lengths().sum())


@dataclass
class MeshStats:
    h_max: float
    min_angle: float
    total_area: float
    node_count: int
    triangle_count: int


# ---------------------------------------------------------------------------
# geometry specifications


@dataclass(frozen=True)
class SquareSpec:
    """Axis-aligned square/rectangle split into a uniform triangle grid."""

    bounds: tuple = ((0.0, 1.0), (0.0, 1.0))
    n: int = 1


@dataclass(frozen=True)
class MappedDiscSpec:
    """Structured disc mesh pushed through a smooth coordinate map.

    map_kind 'identity' keeps the unit disc; 'ellipse' scales by the
    semi-axes (a, b); 'dziuk' applies (u1, u2) -> (u1 - 0.2 + u2**2, u2),
    whose image is the region (x1 + 0.2 - x2**2)**2 + x2**2 < 1.
    """

    map_kind: str = "identity"
    a: float = 1.0
    b: float = 1.0
    rings: int = 1
    segments: int = 8


@dataclass(frozen=True)
class CircleHole:
    radius: float = 1.0

    centre = (0.0, 0.0)

    def implicit(self, x):
        return x[..., 0] ** 2 + x[..., 1] ** 2 - self.radius**2


@dataclass(frozen=True)
class EllipseHole:
    """Axis-aligned ellipse x1^2/a^2 + x2^2/b^2 < 1 given by semi-axes."""

    a: float = 1.0
    b: float = 1.0

    centre = (0.0, 0.0)

    @classmethod
    def from_coefficients(cls, c1, c2):
        """Build from the quadratic-form coefficients c1*x1^2 + c2*x2^2 < 1."""
        if c1 <= 0 or c2 <= 0:
            raise GeometryError("ellipse coefficients must be positive")
        return cls(a=1.0 / math.sqrt(c1), b=1.0 / math.sqrt(c2))

    def implicit(self, x):
        return (x[..., 0] / self.a) ** 2 + (x[..., 1] / self.b) ** 2 - 1.0


@dataclass(frozen=True)
class DziukHole:
    """Region (x1 + 0.2 - x2^2)^2 + x2^2 < 1, star-shaped about (-0.2, 0)."""

    centre = (-0.2, 0.0)

    def implicit(self, x):
        return (x[..., 0] + 0.2 - x[..., 1] ** 2) ** 2 + x[..., 1] ** 2 - 1.0


@dataclass(frozen=True)
class PolygonHole:
    """Simple closed polygon given by its vertices (counter-clockwise)."""

    points: tuple = ()

    @property
    def centre(self):
        pts = np.asarray(self.points, dtype=float)
        return tuple(pts.mean(axis=0))

    def implicit(self, x):
        # Signed "inside" indicator via winding: negative inside, positive
        # outside.  Distance-like magnitude is not needed by the mesher,
        # which intersects rays with the polygon edges directly.
        pts = np.asarray(self.points, dtype=float)
        x = np.asarray(x, dtype=float)
        inside = _points_in_polygon(np.atleast_2d(x), pts)
        out = np.where(inside, -1.0, 1.0)
        return out if x.ndim > 1 else float(out[0])


@dataclass(frozen=True)
class PerforatedSquareSpec:
    """Square with one star-shaped hole, meshed by a radial blend.

    segments_per_side outer-boundary segments per square side and ``layers``
    radial element layers between the hole and the outer boundary; a
    refinement level doubles both.
    """

    hole: object = CircleHole(1.0)
    bounds: tuple = ((-2.0, 2.0), (-2.0, 2.0))
    segments_per_side: int = 8
    layers: int = 4


# ---------------------------------------------------------------------------
# shared helpers


def triangle_areas(nodes, triangles):
    """Signed areas; positive for counter-clockwise triangles."""
    p0 = nodes[triangles[:, 0]]
    p1 = nodes[triangles[:, 1]]
    p2 = nodes[triangles[:, 2]]
    return 0.5 * (
        (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
        - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
    )


def _directed_boundary_edges(triangles):
    """Directed edges appearing in exactly one triangle, in triangle order.

    With all triangles counter-clockwise these edges keep the domain on
    their left.
    """
    tri = np.asarray(triangles)
    edges = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    key_lo = np.minimum(edges[:, 0], edges[:, 1])
    key_hi = np.maximum(edges[:, 0], edges[:, 1])
    n = int(tri.max()) + 1 if tri.size else 0
    keys = key_lo.astype(np.int64) * n + key_hi.astype(np.int64)
    uniq, inv, counts = np.unique(keys, return_inverse=True, return_counts=True)
    if np.any(counts > 2):
        bad = int(np.argmax(counts > 2))
        raise TopologyError(
            f"edge ({uniq[bad] // n}, {uniq[bad] % n}) shared by more than 2 triangles"
        )
    return edges[counts[inv] == 1]


def _finish_mesh(nodes, triangles, marker_of_edge, domain_tag):
    """Derive boundary edges from the triangle set and attach markers."""
    nodes = np.ascontiguousarray(nodes, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    areas = triangle_areas(nodes, triangles)
    if np.any(areas <= 0):
        bad = int(np.argmin(areas))
        raise GeometryError(
            f"triangle {bad} has non-positive area {areas[bad]:.3e}"
        )
    bedges = _directed_boundary_edges(triangles)
    markers = [marker_of_edge(a, b) for a, b in bedges]
    return TriMesh(
        nodes=nodes,
        triangles=triangles,
        boundary_edges=bedges,
        boundary_markers=markers,
        periodic_classes=[],
        domain_tag=domain_tag,
    )


def _split_quads(q00, q10, q11, q01, nodes):
    """Split quads (given as index arrays in CCW corner order) into
    triangles along the shorter diagonal of each quad."""
    d_a = np.linalg.norm(nodes[q11] - nodes[q00], axis=1)
    d_b = np.linalg.norm(nodes[q01] - nodes[q10], axis=1)
    use_a = d_a <= d_b
    t1 = np.where(use_a[:, None], np.stack([q00, q10, q11], 1), np.stack([q00, q10, q01], 1))
    t2 = np.where(use_a[:, None], np.stack([q00, q11, q01], 1), np.stack([q10, q11, q01], 1))
    return np.concatenate([t1, t2])


# ---------------------------------------------------------------------------
# generators


def generate_mesh(spec, level=0):
    """Build the triangulation described by ``spec`` at a refinement level.

    Each level increment doubles the resolution of every structured
    direction of the generator.
    """
    if level < 0 or int(level) != level:
        raise InputError(f"refinement level must be a nonnegative integer, got {level}")
    level = int(level)
    if isinstance(spec, SquareSpec):
        return _generate_square(spec, level)
    if isinstance(spec, MappedDiscSpec):
        return _generate_mapped_disc(spec, level)
    if isinstance(spec, PerforatedSquareSpec):
        return _generate_perforated_square(spec, level)
    raise InputError(f"unsupported geometry spec {type(spec).__name__}")


def _generate_square(spec, level):
    (x0, x1), (y0, y1) = spec.bounds
    if not (x1 > x0 and y1 > y0):
        raise GeometryError(f"empty square bounds {spec.bounds}")
    n = spec.n * (1 << level)
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    # Fixed diagonal from the lower-left to the upper-right corner.
    tris = np.concatenate(
        [np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)]
    )
    return _finish_mesh(nodes, tris, lambda a, b: "outer", "macro")


_DISC_MAPS = {
    "identity": lambda u, s: u,
    "ellipse": lambda u, s: u * np.array([s.a, s.b]),
    "dziuk": lambda u, s: np.column_stack(
        [u[:, 0] - 0.2 + u[:, 1] ** 2, u[:, 1]]
    ),
}


def _generate_mapped_disc(spec, level):
    if spec.map_kind not in _DISC_MAPS:
        raise InputError(f"unknown disc map '{spec.map_kind}'")
    if spec.map_kind == "ellipse" and spec.a * spec.b <= 0:
        raise GeometryError(
            f"ellipse map has degenerate Jacobian (a={spec.a}, b={spec.b})"
        )
    rings = spec.rings * (1 << level)
    segs = spec.segments * (1 << level)
    if rings < 1 or segs < 3:
        raise GeometryError("disc mesh needs rings >= 1 and segments >= 3")

    theta = 2.0 * np.pi * np.arange(segs) / segs
    radii = np.arange(1, rings + 1) / rings
    u = [np.zeros((1, 2))]
    for r in radii:
        u.append(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))
    u = np.concatenate(u)
    nodes = _DISC_MAPS[spec.map_kind](u, spec)

    def ring_idx(r):  # ring r >= 1
        return 1 + (r - 1) * segs + np.arange(segs)

    k = np.arange(segs)
    kn = (k + 1) % segs
    tris = [np.stack([np.zeros(segs, dtype=np.int64), ring_idx(1)[k], ring_idx(1)[kn]], 1)]
    for r in range(1, rings):
        inner, outer = ring_idx(r), ring_idx(r + 1)
        tris.append(_split_quads(inner[k], outer[k], outer[kn], inner[kn], nodes))
    tris = np.concatenate(tris)
    return _finish_mesh(nodes, tris, lambda a, b: "outer", "cell_interior")



def _point(p):
    return f"({float(p[0]):.6g}, {float(p[1]):.6g})"

def _ray_hole_intersection(hole, centre, target):
    """Parameter t in (0, 1) where centre + t*(target - centre) meets the
    hole boundary; validates star-shapedness along this ray."""
    if isinstance(hole, PolygonHole):
        pts = np.asarray(hole.points, dtype=float)
        hits = _ray_polygon_hits(centre, target, pts)
        if len(hits) != 1:
            raise GeometryError(
                f"ray to {_point(target)} crosses the hole boundary "
                f"{len(hits)} times; hole is not star-shaped about {_point(centre)}"
            )
        return hits[0]

    def g(t):
        return float(hole.implicit(centre + t * (target - centre)))

    if g(0.0) >= 0.0:
        raise GeometryError(f"star centre {_point(centre)} is not inside the hole")
    if g(1.0) <= 0.0:
        raise GeometryError(
            f"outer boundary point {_point(target)} lies inside the hole"
        )
    t_hit = brentq(g, 0.0, 1.0, xtol=1e-15, rtol=1e-15)
    # A star-shaped hole is left for good once the ray exits it.
    probes = np.linspace(t_hit, 1.0, 18)[1:]
    vals = hole.implicit(centre + probes[:, None] * (target - centre))
    if np.any(vals <= 0.0):
        raise GeometryError(
            f"ray to {_point(target)} re-enters the hole; "
            f"hole is not star-shaped about {_point(centre)}"
        )
    return t_hit


def _ray_polygon_hits(centre, target, pts):
    d = target - centre
    hits = []
    m = len(pts)
    for s in range(m):
        a, b = pts[s], pts[(s + 1) % m]
        e = b - a
        denom = d[0] * (-e[1]) - d[1] * (-e[0])
        if abs(denom) < 1e-300:
            continue
        rhs = a - centre
        t = (rhs[0] * (-e[1]) - rhs[1] * (-e[0])) / denom
        s_par = (d[0] * rhs[1] - d[1] * rhs[0]) / denom
        if 0.0 < t <= 1.0 and -1e-12 <= s_par < 1.0 - 1e-12:
            hits.append(t)
    return sorted(hits)


def _points_in_polygon(x, pts):
    inside = np.zeros(len(x), dtype=bool)
    m = len(pts)
    for s in range(m):
        a, b = pts[s], pts[(s + 1) % m]
        cond = (a[1] > x[:, 1]) != (b[1] > x[:, 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            xs = a[0] + (x[:, 1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
        inside ^= cond & (x[:, 0] < xs)
    return inside


def _square_boundary_nodes(bounds, s):
    """4*s nodes walking the square boundary counter-clockwise from the
    lower-left corner, s segments per side."""
    (x0, x1), (y0, y1) = bounds
    tx = np.linspace(x0, x1, s + 1)
    ty = np.linspace(y0, y1, s + 1)
    bottom = np.column_stack([tx[:-1], np.full(s, y0)])
    right = np.column_stack([np.full(s, x1), ty[:-1]])
    top = np.column_stack([tx[::-1][:-1], np.full(s, y1)])
    left = np.column_stack([np.full(s, x0), ty[::-1][:-1]])
    return np.concatenate([bottom, right, top, left])


def _geometric_fractions(first_frac, n_steps):
    """Cumulative fractions 0 = s_0 < ... < s_K = 1 with geometrically
    growing spacing whose first step is ``first_frac`` of the total."""
    if n_steps == 1:
        return np.array([0.0, 1.0])
    if abs(first_frac * n_steps - 1.0) < 1e-12:
        return np.linspace(0.0, 1.0, n_steps + 1)

    def total(q):
        return first_frac * (q**n_steps - 1.0) / (q - 1.0) - 1.0

    lo, hi = (1.0 + 1e-14, 64.0) if first_frac * n_steps < 1.0 else (1.0 / 64.0, 1.0 - 1e-14)
    q = brentq(total, lo, hi, xtol=1e-15, rtol=1e-14)
    steps = first_frac * q ** np.arange(n_steps)
    s = np.concatenate([[0.0], np.cumsum(steps)])
    s[-1] = 1.0
    return s


def _generate_perforated_square(spec, level):
    (x0, x1), (y0, y1) = spec.bounds
    if not (x1 > x0 and y1 > y0):
        raise GeometryError(f"empty square bounds {spec.bounds}")
    s = spec.segments_per_side * (1 << level)
    layers = spec.layers * (1 << level)
    hole = spec.hole
    centre = np.asarray(hole.centre, dtype=float)

    outer = _square_boundary_nodes(spec.bounds, s)
    n_rays = outer.shape[0]
    t_hit = np.array(
        [_ray_hole_intersection(hole, centre, outer[r]) for r in range(n_rays)]
    )
    hole_pts = centre + t_hit[:, None] * (outer - centre)

    # Local hole spacing controls the first radial step of each ray.
    nb = np.roll(hole_pts, -1, axis=0)
    pb = np.roll(hole_pts, 1, axis=0)
    local_h = 0.5 * (
        np.linalg.norm(nb - hole_pts, axis=1) + np.linalg.norm(pb - hole_pts, axis=1)
    )
    ray_len = np.linalg.norm(outer - hole_pts, axis=1)
    first_frac = np.clip(local_h / ray_len, 1e-3, None)
    # Never grade coarser than uniform spacing would be.
    first_frac = np.minimum(first_frac, 1.0 / layers)

    rings = [hole_pts]
    fracs = np.stack(
        [_geometric_fractions(first_frac[r], layers) for r in range(n_rays)]
    )
    for k in range(1, layers):
        w = fracs[:, k][:, None]
        rings.append(hole_pts + w * (outer - hole_pts))
    rings.append(outer)
    nodes = np.concatenate(rings)

    r = np.arange(n_rays)
    rn = (r + 1) % n_rays
    tris = []
    for k in range(layers):
        inner = k * n_rays
        outer_off = (k + 1) * n_rays
        # CCW quad: radially outward first, then in the angular direction.
        tris.append(
            _split_quads(inner + r, outer_off + r, outer_off + rn, inner + rn, nodes)
        )
    tris = np.concatenate(tris)

    n_nodes = nodes.shape[0]

    def marker(a, b):
        ring_a, ring_b = a // n_rays, b // n_rays
        if ring_a == 0 and ring_b == 0:
            return "hole"
        if ring_a == layers and ring_b == layers:
            return "outer"
        raise TopologyError(
            f"unexpected boundary edge ({a}, {b}) off the hole/outer rings"
        )

    mesh = _finish_mesh(nodes, tris, marker, "cell_exterior")
    assert mesh.node_count == n_nodes
    return mesh


# ---------------------------------------------------------------------------
# boundary curve extraction


def extract_boundary_curve(mesh, marker):
    """Closed polygonal curve formed by the boundary edges carrying
    ``marker``, oriented consistently around the loop."""
    sel = [i for i, m in enumerate(mesh.boundary_markers) if m == marker]
    if not sel:
        raise TopologyError(f"no boundary edges carry marker '{marker}'")
    edges = mesh.boundary_edges[sel]
    succ = {}
    for a, b in edges:
        if a in succ:
            raise TopologyError(f"marked edges branch at node {a}")
        succ[int(a)] = int(b)
    start = min(succ)
    loop = [start]
    node = succ[start]
    while node != start:
        loop.append(node)
        if node not in succ:
            raise TopologyError(f"marked edges do not close a loop at node {node}")
        node = succ[node]
        if len(loop) > len(edges):
            raise TopologyError("marked edges contain a repeated node")
    if len(loop) != len(edges):
        raise TopologyError(
            f"marker '{marker}' edges form multiple loops "
            f"({len(loop)} of {len(edges)} edges in the first)"
        )
    parent = np.asarray(loop, dtype=np.int64)
    m = len(parent)
    segments = np.column_stack([np.arange(m), (np.arange(m) + 1) % m])
    curve = CurveMesh(
        nodes=mesh.nodes[parent].copy(), segments=segments, parent_indices=parent
    )
    if np.any(curve.segment_lengths() <= 0.0):
        raise TopologyError("boundary curve has a zero-length segment")
    return curve


# ---------------------------------------------------------------------------
# periodic identification


def match_periodic_nodes(mesh, period, tol=None):
    """Populate periodic classes on a square/perforated-square mesh.

    ``period`` is the pair of lattice vectors, e.g. ((4, 0), (0, 4)) for
    the cell [-2, 2]^2.  Opposite-face nodes are paired by translation;
    the four outer corners form a single class of size 4.
    """
    p1 = np.asarray(period[0], dtype=float)
    p2 = np.asarray(period[1], dtype=float)
    diam = float(np.linalg.norm(mesh.nodes.max(0) - mesh.nodes.min(0)))
    if tol is None:
        tol = 1e-9 * diam

    outer_sel = [i for i, m in enumerate(mesh.boundary_markers) if m == "outer"]
    if not outer_sel:
        raise MatchingError("mesh has no 'outer' boundary edges to identify")
    bnodes = np.unique(mesh.boundary_edges[outer_sel].ravel())
    pos = mesh.nodes[bnodes]
    x_lo, y_lo = pos.min(0)
    x_hi, y_hi = pos.max(0)

    on_left = np.abs(pos[:, 0] - x_lo) <= tol
    on_right = np.abs(pos[:, 0] - x_hi) <= tol
    on_bottom = np.abs(pos[:, 1] - y_lo) <= tol
    on_top = np.abs(pos[:, 1] - y_hi) <= tol
    stray = ~(on_left | on_right | on_bottom | on_top)
    if np.any(stray):
        bad = pos[np.argmax(stray)]
        raise MatchingError(
            f"outer boundary node at ({bad[0]:.12g}, {bad[1]:.12g}) lies on no face"
        )
    corner = (on_left | on_right) & (on_bottom | on_top)

    def pair_faces(src_mask, dst_mask, shift):
        classes = []
        dst_idx = np.flatnonzero(dst_mask & ~corner)
        dst_pos = pos[dst_idx]
        for i in np.flatnonzero(src_mask & ~corner):
            target = pos[i] + shift
            d = np.linalg.norm(dst_pos - target, axis=1)
            j = int(np.argmin(d)) if d.size else -1
            if j < 0 or d[j] > tol:
                raise MatchingError(
                    f"boundary node at ({pos[i][0]:.12g}, {pos[i][1]:.12g}) has no "
                    f"periodic partner within tol={tol:.3g}"
                )
            classes.append(
                np.array([bnodes[i], bnodes[dst_idx[j]]], dtype=np.int64)
            )
        return classes

    classes = pair_faces(on_left, on_right, p1)
    classes += pair_faces(on_bottom, on_top, p2)
    corner_nodes = bnodes[corner]
    if corner_nodes.size != 4:
        raise MatchingError(
            f"expected 4 outer corner nodes, found {corner_nodes.size}"
        )
    classes.append(np.sort(corner_nodes))
    return dataclasses.replace(mesh, periodic_classes=classes)


# ---------------------------------------------------------------------------
# validation and statistics


def validate_mesh(mesh):
    """Check every structural invariant; raises on the first violation."""
    nodes, tris = mesh.nodes, mesh.triangles
    n = nodes.shape[0]
    if nodes.ndim != 2 or nodes.shape[1] != 2:
        raise TopologyError("nodes must be an (N, 2) array")
    if not np.all(np.isfinite(nodes)):
        raise TopologyError("non-finite node coordinate")
    if tris.size and (tris.min() < 0 or tris.max() >= n):
        raise TopologyError("triangle node index out of range")
    if mesh.boundary_edges.size and (
        mesh.boundary_edges.min() < 0 or mesh.boundary_edges.max() >= n
    ):
        raise TopologyError("boundary edge node index out of range")
    areas = triangle_areas(nodes, tris)
    if np.any(areas <= 0):
        bad = int(np.argmin(areas))
        raise TopologyError(
            f"triangle {bad} is clockwise or degenerate (signed area {areas[bad]:.3e})"
        )
    derived = _directed_boundary_edges(tris)
    derived_set = {(int(a), int(b)) for a, b in derived}
    listed = [(int(a), int(b)) for a, b in mesh.boundary_edges]
    if len(set(listed)) != len(listed):
        raise TopologyError("duplicate boundary edge")
    for a, b in listed:
        if (a, b) not in derived_set and (b, a) not in derived_set:
            raise TopologyError(f"listed boundary edge ({a}, {b}) is interior or absent")
    if len(listed) != len(derived_set):
        raise TopologyError(
            f"boundary edge list has {len(listed)} entries, mesh boundary has "
            f"{len(derived_set)}"
        )
    if len(mesh.boundary_markers) != len(listed):
        raise TopologyError("boundary_markers length mismatch")
    seen = set()
    for cls in mesh.periodic_classes:
        for idx in np.asarray(cls).ravel():
            idx = int(idx)
            if idx < 0 or idx >= n:
                raise TopologyError(f"periodic class index {idx} out of range")
            if idx in seen:
                raise TopologyError(f"node {idx} appears in two periodic classes")
            seen.add(idx)
    if mesh.domain_tag not in DOMAIN_TAGS:
        raise TopologyError(f"unknown domain tag '{mesh.domain_tag}'")
    return mesh


def mesh_stats(mesh):
    nodes, tris = mesh.nodes, mesh.triangles
    p = nodes[tris]
    e0 = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    e1 = np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
    e2 = np.linalg.norm(p[:, 0] - p[:, 2], axis=1)
    h_max = float(np.max(np.stack([e0, e1, e2])))

    def angle(a, b, c):
        # angle opposite side a, via the law of cosines
        cosv = np.clip((b**2 + c**2 - a**2) / (2 * b * c), -1.0, 1.0)
        return np.degrees(np.arccos(cosv))

    ang = np.stack([angle(e1, e2, e0), angle(e2, e0, e1), angle(e0, e1, e2)])
    return MeshStats(
        h_max=h_max,
        min_angle=float(ang.min()),
        total_area=float(triangle_areas(nodes, tris).sum()),
        node_count=int(nodes.shape[0]),
        triangle_count=int(tris.shape[0]),
    )


# ---------------------------------------------------------------------------
# plain-text mesh files


def write_mesh(mesh, path):
    """Write the TSFEM-MESH 1 plain-text format.

    Line 1: ``TSFEM-MESH 1``; line 2: node, triangle, and boundary-edge
    counts; then ``x y`` node lines (17 significant digits), ``i j k``
    triangle lines (0-based), ``i j marker`` boundary-edge lines, and an
    optional ``PERIODIC <class_count>`` section with one whitespace-
    separated index list per class.
    """
    validate_mesh(mesh)
    lines = ["TSFEM-MESH 1"]
    lines.append(
        f"{mesh.node_count} {mesh.triangle_count} {len(mesh.boundary_markers)}"
    )
    for x, y in mesh.nodes:
        lines.append(f"{x:.17g} {y:.17g}")
    for i, j, k in mesh.triangles:
        lines.append(f"{i} {j} {k}")
    for (i, j), m in zip(mesh.boundary_edges, mesh.boundary_markers):
        lines.append(f"{i} {j} {m}")
    if mesh.periodic_classes:
        lines.append(f"PERIODIC {len(mesh.periodic_classes)}")
        for cls in mesh.periodic_classes:
            lines.append(" ".join(str(int(v)) for v in np.asarray(cls).ravel()))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path, domain_tag="macro"):
    """Parse a TSFEM-MESH 1 file; validates all structural invariants.

    The file format does not record the domain tag, so the caller may
    supply one (defaults to 'macro').
    """
    with open(path, encoding="utf-8") as fh:
        raw = fh.read().splitlines()

    def err(msg, lineno):
        raise MeshFormatError(msg, line=lineno)

    if not raw or raw[0].strip() != "TSFEM-MESH 1":
        err("missing 'TSFEM-MESH 1' header", 1)
    if len(raw) < 2:
        err("missing counts line", 2)
    parts = raw[1].split()
    if len(parts) != 3:
        err("counts line must hold three integers", 2)
    try:
        nn, nt, nb = (int(p) for p in parts)
    except ValueError:
        err("counts line must hold three integers", 2)
    if nn < 0 or nt < 0 or nb < 0:
        err("negative count", 2)
    need = 2 + nn + nt + nb
    if len(raw) < need:
        err(f"file truncated: expected at least {need} lines", len(raw))

    nodes = np.empty((nn, 2))
    for i in range(nn):
        lineno = 3 + i
        parts = raw[2 + i].split()
        if len(parts) != 2:
            err("node line must hold two floats", lineno)
        try:
            nodes[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            err(f"bad node coordinate '{raw[2 + i]}'", lineno)
    if nn and not np.all(np.isfinite(nodes)):
        err("non-finite node coordinate", 3 + int(np.argmin(np.isfinite(nodes).all(1))))

    tris = np.empty((nt, 3), dtype=np.int64)
    for t in range(nt):
        lineno = 3 + nn + t
        parts = raw[2 + nn + t].split()
        if len(parts) != 3:
            err("triangle line must hold three integers", lineno)
        try:
            tris[t] = [int(p) for p in parts]
        except ValueError:
            err(f"bad triangle indices '{raw[2 + nn + t]}'", lineno)
        if tris[t].min() < 0 or tris[t].max() >= nn:
            err(f"triangle {t} node index out of range", lineno)

    bedges = np.empty((nb, 2), dtype=np.int64)
    markers = []
    for b in range(nb):
        lineno = 3 + nn + nt + b
        parts = raw[2 + nn + nt + b].split()
        if len(parts) != 3:
            err("boundary edge line must hold 'i j marker'", lineno)
        try:
            bedges[b] = [int(parts[0]), int(parts[1])]
        except ValueError:
            err(f"bad boundary edge indices '{raw[2 + nn + nt + b]}'", lineno)
        if bedges[b].min() < 0 or bedges[b].max() >= nn:
            err(f"boundary edge {b} node index out of range", lineno)
        markers.append(parts[2])

    classes = []
    cursor = 2 + nn + nt + nb
    rest = [(cursor + i, ln) for i, ln in enumerate(raw[cursor:]) if ln.strip()]
    if rest:
        lineno0, header = rest[0]
        parts = header.split()
        if parts[0] != "PERIODIC" or len(parts) != 2:
            err(f"unexpected trailing content '{header}'", lineno0 + 1)
        try:
            nc = int(parts[1])
        except ValueError:
            err("PERIODIC count must be an integer", lineno0 + 1)
        if len(rest) - 1 != nc:
            err(f"PERIODIC section holds {len(rest) - 1} classes, expected {nc}",
                lineno0 + 1)
        for lineno, ln in rest[1:]:
            try:
                cls = np.array([int(v) for v in ln.split()], dtype=np.int64)
            except ValueError:
                err(f"bad periodic class '{ln}'", lineno + 1)
            if cls.size < 2:
                err("periodic class needs at least two nodes", lineno + 1)
            classes.append(cls)

    areas = triangle_areas(nodes, tris)
    if nt and np.any(areas <= 0):
        bad = int(np.argmin(areas))
        err(
            f"triangle {bad} is clockwise or degenerate (signed area {areas[bad]:.3e})",
            3 + nn + bad,
        )
    mesh = TriMesh(
        nodes=nodes,
        triangles=tris,
        boundary_edges=bedges,
        boundary_markers=markers,
        periodic_classes=classes,
        domain_tag=domain_tag,
    )
    try:
        validate_mesh(mesh)
    except TopologyError as exc:
        raise MeshFormatError(str(exc)) from exc
    return mesh
