"""Independent reference solvers used as oracles by the test suite.

The quarter-cell solver below computes the effective diffusion tensor of a
square periodicity cell with an axis-symmetric insulating hole by a completely
different route from the library: the corrector for direction j is odd in y_j
and even in the other coordinate, so on one quarter of the cell the periodic
boundary conditions collapse to homogeneous Dirichlet strips and natural
conditions, and no periodic identification is needed.  The mesh is a
transfinite O-grid built here from scratch.
"""

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.linalg import splu


def _quarter_mesh(boundary_point, half_width, nseg, layers):
    """O-grid between a quarter-hole arc and the outer square corner path."""
    t = np.linspace(0.0, np.pi / 2, nseg + 1)
    inner = np.array([boundary_point(ti) for ti in t])
    s = t / (np.pi / 2)
    w = half_width
    outer = np.where((s < 0.5)[:, None],
                     np.stack([np.full_like(s, w), 2 * w * s], axis=1),
                     np.stack([2 * w * (1.0 - s), np.full_like(s, w)], axis=1))
    nodes = np.empty(((nseg + 1) * (layers + 1), 2))
    for r in range(nseg + 1):
        d = outer[r] - inner[r]
        ray = np.hypot(*d)
        lo, hi = max(r - 1, 0), min(r + 1, nseg)
        local = np.linalg.norm(inner[hi] - inner[lo]) / (hi - lo)
        f0 = min(max(local / ray, 1e-3), 1.0 / layers)
        if abs(f0 * layers - 1.0) < 1e-12:
            frac = np.linspace(0.0, 1.0, layers + 1)
        else:
            q = brentq(lambda q: f0 * (q ** layers - 1) / (q - 1) - 1.0,
                       1.0 + 1e-12, 16.0)
            frac = np.concatenate([[0.0], np.cumsum(f0 * q ** np.arange(layers))])
            frac[-1] = 1.0
        nodes[r * (layers + 1):(r + 1) * (layers + 1)] = inner[r] + np.outer(frac, d)
    tris = []
    for r in range(nseg):
        for k in range(layers):
            i00 = r * (layers + 1) + k
            i01, i10 = i00 + 1, i00 + layers + 1
            i11 = i10 + 1
            if (np.linalg.norm(nodes[i00] - nodes[i11])
                    <= np.linalg.norm(nodes[i10] - nodes[i01])):
                tris += [[i00, i10, i11], [i00, i11, i01]]
            else:
                tris += [[i00, i10, i01], [i10, i11, i01]]
    tris = np.array(tris)
    v1 = nodes[tris[:, 1]] - nodes[tris[:, 0]]
    v2 = nodes[tris[:, 2]] - nodes[tris[:, 0]]
    flip = v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0] < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return nodes, tris


def quarter_cell_tensor(boundary_point, half_width, diffusion,
                        nseg=256, layers=48):
    """Diagonal effective-tensor entries via the quarter-cell reduction.

    boundary_point: angle -> (y1, y2) point on the hole boundary in the first
    quadrant, with boundary_point(0) on the y1 axis and boundary_point(pi/2)
    on the y2 axis.  Returns (d11, d22).
    """
    nodes, tris = _quarter_mesh(boundary_point, half_width, nseg, layers)
    n = len(nodes)
    p = nodes[tris]
    v1 = p[:, 1] - p[:, 0]
    v2 = p[:, 2] - p[:, 0]
    det = v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0]
    area = det / 2.0
    assert (area > 0).all()
    grads = np.empty((len(tris), 3, 2))
    grads[:, 1, 0] = v2[:, 1] / det
    grads[:, 1, 1] = -v2[:, 0] / det
    grads[:, 2, 0] = -v1[:, 1] / det
    grads[:, 2, 1] = v1[:, 0] / det
    grads[:, 0] = -grads[:, 1] - grads[:, 2]
    local = diffusion * np.einsum("t,tid,tjd->tij", area, grads, grads)
    rows = np.repeat(tris, 3, axis=1).reshape(-1)
    cols = np.tile(tris, (1, 3)).reshape(-1)
    stiff = sp.coo_matrix((local.reshape(-1), (rows, cols)), shape=(n, n)).tocsr()

    cell_measure = (2.0 * half_width) ** 2
    out = []
    for comp in (0, 1):
        e = np.zeros(2)
        e[comp] = 1.0
        load_t = -diffusion * np.einsum("t,tid,d->ti", area, grads, e)
        rhs = np.zeros(n)
        np.add.at(rhs, tris.reshape(-1), load_t.reshape(-1))
        tol = 1e-9 * half_width
        fixed = (np.abs(nodes[:, comp]) < tol) | (np.abs(nodes[:, comp] - half_width) < tol)
        free = ~fixed
        w = np.zeros(n)
        w[free] = splu(stiff[free][:, free].tocsc()).solve(rhs[free])
        grad_w = np.einsum("tid,ti->td", grads, w[tris])
        value = diffusion * (area.sum() + np.einsum("t,t->", area, grad_w[:, comp]))
        out.append(4.0 * value / cell_measure)
    return tuple(out)
