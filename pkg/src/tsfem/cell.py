"""Periodic unit-cell problems and the effective diffusion tensor.

On the perforated periodicity cell Y_e the two corrector fields w^1, w^2
solve div(d_e (grad w^j + e_j)) = 0 with natural zero-flux on the hole
boundary, periodicity across the outer faces, and a zero-mean gauge.  The
effective tensor is the cell average of d_e (grad w^j + e_j); its
eigenvalues are bounded above by the coefficient times the exterior
volume fraction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError
from .fem import (
    apply_periodic_constraints,
    assemble_lumped_mass,
    assemble_stiffness,
    coefficient_tensor,
    expand_periodic,
    factored_preconditioner,
    p1_gradients,
    solve_spd,
)
from .mesh import mesh_stats


@dataclass
class HomogenizedData:
    """Effective tensor with its ingredients.

    d_hom: symmetric positive definite 2x2 tensor.
    theta_e: exterior volume fraction |Y_e| / |Y| in (0, 1].
    cell_solutions: (w1, w2) nodal vectors on the reduced periodic mesh.
    mesh_h: mesh statistics of the cell mesh used.
    index_map: old-to-new node map of the periodic reduction, for
        transferring the correctors back onto the full mesh.
    """

    d_hom: np.ndarray
    theta_e: float
    cell_solutions: tuple
    mesh_h: object
    index_map: np.ndarray


def _direction_loads(mesh, d):
    """Load vectors b^j with entries integral (d e_j) . grad(phi_i)."""
    grads, areas = p1_gradients(mesh)
    loads = []
    for j in range(2):
        flux = d[:, j]  # d e_j
        contrib = areas[:, None] * (grads @ flux)
        b = np.zeros(mesh.node_count)
        np.add.at(b, mesh.triangles.ravel(), contrib.ravel())
        loads.append(b)
    return loads


def solve_cell_problems(mesh_ye, d_e, tol=1e-10):
    """Correctors (w1, w2) on the reduced periodic mesh plus the index map.

    Solves the reduced singular system K w^j = -b^j by conjugate
    gradients gauged to the mean-zero subspace, preconditioned with a
    shifted direct factorisation (robust on thin graded elements), and
    normalised to lumped-mass zero mean.
    """
    if not mesh_ye.periodic_classes:
        raise ConfigError(
            "cell mesh has no periodic classes; run match_periodic_nodes first"
        )
    d = coefficient_tensor(d_e)
    K = assemble_stiffness(mesh_ye, d)
    K_red, imap = apply_periodic_constraints(K, mesh_ye.periodic_classes)
    m_red, _ = apply_periodic_constraints(
        assemble_lumped_mass(mesh_ye), mesh_ye.periodic_classes
    )
    precond = factored_preconditioner(K_red)
    solutions = []
    for b in _direction_loads(mesh_ye, d):
        b_red = np.zeros(K_red.shape[0])
        np.add.at(b_red, imap, b)
        if float(np.linalg.norm(b_red)) == 0.0:
            solutions.append(np.zeros(K_red.shape[0]))
            continue
        w = solve_spd(K_red, -b_red, tol=tol, precond=precond, project_constants=True)
        w -= (m_red @ w) / m_red.sum()
        solutions.append(w)
    return solutions[0], solutions[1], imap


def homogenized_tensor(mesh_ye, d_e, cell_solutions, cell_volume, index_map=None):
    """Cell average (1/|Y|) integral over Y_e of d_e (grad w^j + e_j).

    ``cell_solutions`` may live on the reduced periodic mesh (pass the
    index map) or directly on the full mesh.  The assembled tensor is
    symmetrised by averaging, since the two off-diagonal integrals agree
    analytically and differ only by rounding.
    """
    if cell_volume <= 0:
        raise InputError(f"cell volume must be positive, got {cell_volume}")
    d = coefficient_tensor(d_e)
    grads, areas = p1_gradients(mesh_ye)
    area_e = float(areas.sum())
    tensor = np.zeros((2, 2))
    for j, w in enumerate(cell_solutions):
        w = np.asarray(w, dtype=float)
        if index_map is not None:
            w = expand_periodic(w, index_map)
        if w.shape != (mesh_ye.node_count,):
            raise InputError(
                f"cell solution {j} has length {w.shape[0]}, mesh has "
                f"{mesh_ye.node_count} nodes"
            )
        grad_w = np.einsum("tid,ti->td", grads, w[mesh_ye.triangles])
        flux = grad_w @ d.T
        tensor[:, j] = d[:, j] * area_e + areas @ flux
    tensor /= cell_volume
    return 0.5 * (tensor + tensor.T)


def energy_tensor(mesh_ye, d_e, cell_solutions, cell_volume, index_map=None):
    """Equivalent symmetric energy form of the effective tensor.

    (1/|Y|) integral of (grad w^i + e_i) . d_e (grad w^j + e_j); equals
    :func:`homogenized_tensor` when the correctors solve the discrete
    problem exactly, so the agreement of the two formulas bounds the
    solver error.
    """
    d = coefficient_tensor(d_e)
    grads, areas = p1_gradients(mesh_ye)
    full = []
    for w in cell_solutions:
        w = np.asarray(w, dtype=float)
        if index_map is not None:
            w = expand_periodic(w, index_map)
        full.append(np.einsum("tid,ti->td", grads, w[mesh_ye.triangles]))
    tensor = np.zeros((2, 2))
    eye = np.eye(2)
    for i in range(2):
        for j in range(2):
            gi = full[i] + eye[i]
            gj = full[j] + eye[j]
            tensor[i, j] = areas @ np.einsum("td,de,te->t", gi, d, gj)
    return tensor / cell_volume


def porosity(mesh_ye, cell_volume):
    """Exterior volume fraction |Y_e| / |Y|."""
    if cell_volume <= 0:
        raise InputError(f"cell volume must be positive, got {cell_volume}")
    _, areas = p1_gradients(mesh_ye)
    return float(areas.sum()) / cell_volume


def compute_homogenized(mesh_ye, d_e, cell_volume, tol=1e-10):
    """Solve both cell problems and package the homogenised data."""
    w1, w2, imap = solve_cell_problems(mesh_ye, d_e, tol=tol)
    tensor = homogenized_tensor(
        mesh_ye, d_e, (w1, w2), cell_volume, index_map=imap
    )
    return HomogenizedData(
        d_hom=tensor,
        theta_e=porosity(mesh_ye, cell_volume),
        cell_solutions=(w1, w2),
        mesh_h=mesh_stats(mesh_ye),
        index_map=imap,
    )


def check_homogenized(data, d_e, lumped_mass_reduced=None):
    """Raise if the homogenised data violates a structural bound.

    Checks symmetry, positive definiteness, and the volume-fraction upper
    bound on the eigenvalues; with the reduced lumped mass also checks the
    zero-mean gauge of the correctors.
    """
    d = coefficient_tensor(d_e)
    t = data.d_hom
    if abs(t[0, 1] - t[1, 0]) > 1e-12 * max(1.0, np.abs(t).max()):
        raise InputError("effective tensor is not symmetric")
    eig = np.linalg.eigvalsh(t)
    if eig.min() <= 0:
        raise InputError(f"effective tensor not positive definite (eig {eig})")
    bound = np.linalg.eigvalsh(d).max() * data.theta_e
    if eig.max() > bound * (1.0 + 1e-10):
        raise InputError(
            f"effective eigenvalue {eig.max():.6g} exceeds the volume-fraction "
            f"bound {bound:.6g}"
        )
    if lumped_mass_reduced is not None:
        total = lumped_mass_reduced.sum()
        for j, w in enumerate(data.cell_solutions):
            scale = max(np.abs(w).max(), 1e-300)
            if abs(lumped_mass_reduced @ w) > 1e-10 * total * scale:
                raise InputError(f"corrector {j + 1} violates the zero-mean gauge")
    return data
