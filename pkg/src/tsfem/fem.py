"""P1 finite element assembly, linear solvers, and discrete norms.

Bulk operators live on :class:`~tsfem.mesh.TriMesh`; curve operators treat
a closed polygonal loop as a 1D arc-length domain, which is exactly the
Laplace-Beltrami operator of the polygonal curve.  All P1 integrals are
evaluated analytically (constant gradients, exact low-order mass rules),
so quadrature contributes no error.

Sparse operators are scipy CSR matrices; diagonal (lumped) operators are
plain 1-D arrays of positive weights.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import AssemblyError, InputError, SolverError
from .mesh import CurveMesh, TriMesh, triangle_areas


def coefficient_tensor(coeff):
    """Normalise a scalar or 2x2 coefficient to a symmetric 2x2 array."""
    c = np.asarray(coeff, dtype=float)
    if c.ndim == 0:
        c = np.array([[float(c), 0.0], [0.0, float(c)]])
    if c.shape != (2, 2):
        raise InputError(f"diffusion coefficient must be scalar or 2x2, got shape {c.shape}")
    if not np.allclose(c, c.T, rtol=0.0, atol=1e-14 * max(1.0, np.abs(c).max())):
        raise InputError("diffusion coefficient must be symmetric")
    return 0.5 * (c + c.T)


def p1_gradients(mesh):
    """Per-triangle constant P1 shape gradients and areas.

    Returns (grads, areas) with grads[t, i] the gradient of the basis
    function of local vertex i on triangle t.
    """
    p = mesh.nodes[mesh.triangles]
    areas = triangle_areas(mesh.nodes, mesh.triangles)
    if np.any(areas <= 0.0):
        bad = int(np.argmin(areas))
        raise AssemblyError(f"triangle {bad} degenerate (area {areas[bad]:.3e})")
    # grad phi_i = rot90(edge opposite vertex i) / (2 A)
    b = np.stack(
        [p[:, 1, 1] - p[:, 2, 1], p[:, 2, 1] - p[:, 0, 1], p[:, 0, 1] - p[:, 1, 1]], 1
    )
    c = np.stack(
        [p[:, 2, 0] - p[:, 1, 0], p[:, 0, 0] - p[:, 2, 0], p[:, 1, 0] - p[:, 0, 0]], 1
    )
    grads = np.stack([b, c], axis=2) / (2.0 * areas[:, None, None])
    return grads, areas


def _accumulate(rows, cols, vals, n):
    m = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n))
    return m.tocsr()


def assemble_stiffness(mesh, coeff):
    """Bulk stiffness: entry (i, j) = sum_K area(K) grad(phi_i) . coeff grad(phi_j)."""
    d = coefficient_tensor(coeff)
    grads, areas = p1_gradients(mesh)
    dg = np.einsum("ab,tib->tia", d, grads)
    local = np.einsum("tia,tja,t->tij", grads, dg, areas)
    tri = mesh.triangles
    rows = np.repeat(tri[:, :, None], 3, axis=2)
    cols = np.repeat(tri[:, None, :], 3, axis=1)
    return _accumulate(rows, cols, local, mesh.node_count)


def assemble_mass(mesh):
    """Consistent bulk mass: exact P1 rule area/12 * [[2,1,1],[1,2,1],[1,1,2]]."""
    _, areas = p1_gradients(mesh)
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = areas[:, None, None] * base[None, :, :]
    tri = mesh.triangles
    rows = np.repeat(tri[:, :, None], 3, axis=2)
    cols = np.repeat(tri[:, None, :], 3, axis=1)
    return _accumulate(rows, cols, local, mesh.node_count)


def assemble_lumped_mass(mesh):
    """Lumped bulk mass: node weight = sum of adjacent triangle areas / 3."""
    _, areas = p1_gradients(mesh)
    out = np.zeros(mesh.node_count)
    np.add.at(out, mesh.triangles.ravel(), np.repeat(areas / 3.0, 3))
    return out


def _segment_lengths(curve):
    lengths = curve.segment_lengths()
    if np.any(lengths <= 0.0):
        bad = int(np.argmin(lengths))
        raise AssemblyError(f"curve segment {bad} has non-positive length")
    return lengths


def assemble_curve_stiffness(curve, coeff):
    """Arc-length 1D stiffness per segment: (coeff/h) [[1,-1],[-1,1]]."""
    if coeff < 0:
        raise InputError(f"curve diffusion coefficient must be >= 0, got {coeff}")
    h = _segment_lengths(curve)
    w = coeff / h
    seg = curve.segments
    base = np.array([[1.0, -1.0], [-1.0, 1.0]])
    local = w[:, None, None] * base[None, :, :]
    rows = np.repeat(seg[:, :, None], 2, axis=2)
    cols = np.repeat(seg[:, None, :], 2, axis=1)
    return _accumulate(rows, cols, local, curve.node_count)


def assemble_curve_mass(curve):
    """Consistent 1D mass per segment: h/6 [[2,1],[1,2]]."""
    h = _segment_lengths(curve)
    seg = curve.segments
    base = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    local = h[:, None, None] * base[None, :, :]
    rows = np.repeat(seg[:, :, None], 2, axis=2)
    cols = np.repeat(seg[:, None, :], 2, axis=1)
    return _accumulate(rows, cols, local, curve.node_count)


def assemble_curve_lumped_mass(curve):
    """Lumped curve mass: node weight = half the adjacent segment lengths."""
    h = _segment_lengths(curve)
    out = np.zeros(curve.node_count)
    np.add.at(out, curve.segments.ravel(), np.repeat(h / 2.0, 2))
    return out


def boundary_load(mesh, marker, fn):
    """Natural boundary load vector by edge-wise nodal quadrature.

    ``fn(points, normals)`` receives the marked edge endpoints (E, 2) and
    the outward unit normal of each edge (E, 2) and returns nodal flux
    values (E,); each endpoint of an edge of length L receives L/2 times
    the flux evaluated there with that edge's normal.  Corner nodes
    accumulate contributions from both adjacent edges, each with its own
    normal.
    """
    sel = [i for i, m in enumerate(mesh.boundary_markers) if m == marker]
    out = np.zeros(mesh.node_count)
    if not sel:
        return out
    edges = mesh.boundary_edges[sel]
    a = mesh.nodes[edges[:, 0]]
    b = mesh.nodes[edges[:, 1]]
    tang = b - a
    lengths = np.hypot(tang[:, 0], tang[:, 1])
    tang = tang / lengths[:, None]
    # Domain lies left of boundary edges, so outward is the right normal.
    normals = np.column_stack([tang[:, 1], -tang[:, 0]])
    va = np.asarray(fn(a, normals), dtype=float)
    vb = np.asarray(fn(b, normals), dtype=float)
    np.add.at(out, edges[:, 0], 0.5 * lengths * va)
    np.add.at(out, edges[:, 1], 0.5 * lengths * vb)
    return out


# ---------------------------------------------------------------------------
# periodic constraint reduction


def periodic_index_map(classes, n):
    """Old-to-new index map collapsing each class onto one representative."""
    rep = np.arange(n, dtype=np.int64)
    for cls in classes:
        cls = np.asarray(cls, dtype=np.int64)
        rep[cls] = cls.min()
    keep = np.flatnonzero(rep == np.arange(n))
    new_of_keep = np.empty(n, dtype=np.int64)
    new_of_keep[keep] = np.arange(keep.size)
    return new_of_keep[rep]


def apply_periodic_constraints(op, classes):
    """Sum rows/columns of each periodic class onto its representative.

    Accepts a sparse operator or a lumped-mass vector; returns the reduced
    operator together with the old-to-new index map.
    """
    flat = [int(v) for cls in classes for v in np.asarray(cls).ravel()]
    if len(flat) != len(set(flat)):
        raise InputError("periodic classes overlap")
    if isinstance(op, np.ndarray) and op.ndim == 1:
        imap = periodic_index_map(classes, op.shape[0])
        out = np.zeros(imap.max() + 1 if imap.size else 0)
        np.add.at(out, imap, op)
        return out, imap
    A = op.tocsr()
    n = A.shape[0]
    imap = periodic_index_map(classes, n)
    m = int(imap.max()) + 1 if n else 0
    P = sp.csr_matrix((np.ones(n), (np.arange(n), imap)), shape=(n, m))
    return (P.T @ A @ P).tocsr(), imap


def expand_periodic(u_reduced, index_map):
    """Transfer a reduced-space vector back to all nodes of the full mesh."""
    return np.asarray(u_reduced)[index_map]


# ---------------------------------------------------------------------------
# linear solvers


def solve_spd(op, rhs, tol=1e-10, precond="diagonal", project_constants=False):
    """Preconditioned conjugate gradients for SPD systems.

    precond: 'diagonal' (default), None, or a callable z = M(r) applying
    an SPD preconditioner.  With ``project_constants`` the system may be
    semidefinite with the constants spanning its kernel; the right-hand
    side must then be consistent and iterates are kept mean-free, which
    realises the zero-mean gauge without a saddle system.

    Stops when ||op x - rhs|| <= tol ||rhs||; raises SolverError with the
    achieved residual after 20 * dimension iterations.
    """
    A = op.tocsr() if sp.issparse(op) else sp.csr_matrix(op)
    b = np.asarray(rhs, dtype=float).copy()
    n = b.shape[0]
    if A.shape != (n, n):
        raise InputError(f"system is {A.shape}, rhs has length {n}")
    if precond == "diagonal":
        d = A.diagonal().copy()
        d[d <= 0.0] = 1.0
        apply_m = lambda r: r / d
    elif precond is None:
        apply_m = lambda r: r
    else:
        apply_m = precond

    def project(v):
        v -= v.mean()
        return v

    if project_constants:
        b = project(b)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros(n)
    def true_residual(x):
        r = b - A @ x
        if project_constants:
            r = project(r)
        return r

    x = np.zeros(n)
    r = b.copy()
    z = apply_m(r)
    if project_constants:
        z = project(np.asarray(z, dtype=float).copy())
    p = z.copy()
    rz = float(r @ z)
    max_iter = max(20 * n, 20)
    res = b_norm
    for _ in range(max_iter):
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if project_constants:
            r = project(r)
        res = float(np.linalg.norm(r))
        restarted = False
        if res <= tol * b_norm or not np.isfinite(res):
            # The recurrence residual can drift from b - A x (badly so on
            # inconsistent singular systems), so acceptance is decided on
            # the recomputed residual; otherwise restart from it.
            r = true_residual(x)
            res = float(np.linalg.norm(r))
            if res <= tol * b_norm:
                if project_constants:
                    x = project(x)
                return x
            if not np.isfinite(res):
                break
            restarted = True
        z = apply_m(r)
        if project_constants:
            z = project(np.asarray(z, dtype=float).copy())
        rz_new = float(r @ z)
        p = z.copy() if restarted else z + (rz_new / rz) * p
        rz = rz_new
    res = float(np.linalg.norm(true_residual(x)))
    raise SolverError(
        f"conjugate gradients stalled after {max_iter} iterations "
        f"(achieved relative residual {res / b_norm:.3e}, target {tol:.1e})"
    )


class FactoredSpd:
    """Reusable direct factorisation of a fixed SPD sparse operator.

    Solving twice with the same right-hand side is bit-identical; the
    factorisation is computed once and shared by every subsequent solve,
    including multi-column right-hand sides.
    """

    def __init__(self, op, tol=1e-10):
        A = op.tocsc() if sp.issparse(op) else sp.csc_matrix(op)
        skew = abs(A - A.T)
        scale = max(1.0, abs(A).max())
        if skew.nnz and skew.max() > 1e-12 * scale:
            raise InputError("operator is not symmetric")
        self.dimension = A.shape[0]
        self.tol = tol
        self._lu = splu(A)

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        return self._lu.solve(rhs)


def factored_preconditioner(op, shift_scale=1e-8):
    """Callable preconditioner from a slightly shifted direct factorisation.

    Shifting by ``shift_scale`` times the mean stiffness diagonal makes a
    semidefinite operator invertible; used as a CG preconditioner it does
    not perturb the converged solution, only the iteration count.
    """
    A = op.tocsc() if sp.issparse(op) else sp.csc_matrix(op)
    sigma = shift_scale * float(A.diagonal().mean())
    lu = splu(A + sigma * sp.identity(A.shape[0], format="csc"))
    return lu.solve


# ---------------------------------------------------------------------------
# interpolation and norms


def interpolate(fn, domain, t=None):
    """Nodal interpolation of a position (and optionally time) function.

    ``fn`` may be vectorised over an (N, 2) coordinate array or act on a
    single 2-vector; both calling conventions are attempted.
    """
    nodes = domain.nodes
    args = (nodes,) if t is None else (nodes, t)
    values = None
    try:
        values = np.asarray(fn(*args), dtype=float)
        if values.shape != (nodes.shape[0],):
            values = None
    except Exception:
        values = None
    if values is None:
        one = (lambda x: fn(x)) if t is None else (lambda x: fn(x, t))
        values = np.array([float(one(nodes[i])) for i in range(nodes.shape[0])])
    if not np.all(np.isfinite(values)):
        bad = int(np.argmin(np.isfinite(values)))
        raise InputError(
            f"non-finite value {values[bad]} at node {bad} "
            f"({nodes[bad][0]:.6g}, {nodes[bad][1]:.6g})"
        )
    return values


def discrete_norms(u, domain):
    """L2 norm and H1 seminorm of a nodal vector.

    Uses the consistent (exact P1) mass matrix and the unit-coefficient
    stiffness of the bulk mesh or curve.
    """
    u = np.asarray(u, dtype=float)
    if isinstance(domain, TriMesh):
        if u.shape != (domain.node_count,):
            raise InputError(f"vector has length {u.shape}, mesh has {domain.node_count} nodes")
        M = assemble_mass(domain)
        K = assemble_stiffness(domain, 1.0)
    elif isinstance(domain, CurveMesh):
        if u.shape != (domain.node_count,):
            raise InputError(f"vector has length {u.shape}, curve has {domain.node_count} nodes")
        M = assemble_curve_mass(domain)
        K = assemble_curve_stiffness(domain, 1.0)
    else:
        raise InputError(f"unsupported domain {type(domain).__name__}")
    l2_sq = float(u @ (M @ u))
    h1_sq = float(u @ (K @ u))
    return {"l2": np.sqrt(max(l2_sq, 0.0)), "h1_semi": np.sqrt(max(h1_sq, 0.0))}
