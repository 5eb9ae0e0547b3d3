"""Macroscopic ligand stepping and the coupled two-scale time loop.

The macro field advances by an implicit diffusion step with the effective
tensor, lumped mass, and explicit coupling data taken from the previous
time level; below every macro node one membrane/interior micro system
advances with the same step size.  Both halves consume level n-1 data, so
their update order within a step is immaterial and the whole step is
deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .cell import HomogenizedData, compute_homogenized
from .config import Resolution, ScenarioConfig, TimeSpec
from .errors import ConfigError, InputError, StepError
from .fem import (
    FactoredSpd,
    assemble_lumped_mass,
    assemble_stiffness,
    coefficient_tensor,
)
from .mesh import (
    CircleHole,
    DziukHole,
    EllipseHole,
    MappedDiscSpec,
    PerforatedSquareSpec,
    SquareSpec,
    extract_boundary_curve,
    generate_mesh,
    match_periodic_nodes,
)
from .micro import (
    SPECIES,
    MicroState,
    ReactionSpec,
    build_micro_operators,
    coupling_flux,
    micro_step,
)


@dataclass
class MacroField:
    """Nodal ligand concentration on the macro mesh at one time level."""

    values: np.ndarray
    time_index: int = 0


@dataclass(frozen=True)
class BoundarySpec:
    """Dirichlet patch on the macro boundary; everything else is zero flux.

    ``dirichlet`` receives the coordinates of boundary nodes as an (K, 2)
    array and returns a boolean mask; ``None`` keeps the whole boundary
    natural.  The predicate never sees interior nodes, so a condition such
    as max(x1, x2) < cutoff selects a boundary patch even though it would
    also hold in the interior.
    """

    dirichlet: object = None
    value: float = 0.0

    @staticmethod
    def neumann():
        return BoundarySpec(None, 0.0)

    @staticmethod
    def threshold(value=1.0, cutoff=5e-2):
        """Dirichlet where both coordinates stay below ``cutoff``."""
        return BoundarySpec(
            lambda pts: np.maximum(pts[:, 0], pts[:, 1]) < cutoff, value)


@dataclass(eq=False)
class MacroOperators:
    """Factored macro system with its masks, reused across all steps."""

    system: FactoredSpd
    lumped: np.ndarray
    stiffness: object
    free: np.ndarray
    dirichlet_values: np.ndarray
    shift: np.ndarray
    tau: float
    theta: float

    @property
    def node_count(self):
        return self.free.shape[0]


@dataclass(eq=False)
class TwoScaleField:
    """All micro states of a run, batched column-per-macro-node."""

    state: MicroState
    species: tuple = SPECIES

    @property
    def column_count(self):
        return self.state.columns

    def node_state(self, i):
        """The micro state below macro node ``i`` as plain vectors."""
        return MicroState(
            r_f=self.state.r_f[:, i].copy(), r_b=self.state.r_b[:, i].copy(),
            p_d=self.state.p_d[:, i].copy(), p_a=self.state.p_a[:, i].copy(),
            c_i=self.state.c_i[:, i].copy(), time_index=self.state.time_index)


@dataclass(eq=False)
class Trajectory:
    """Sampled history of a two-scale run.

    ``times`` and the per-sample arrays follow the output cadence;
    ``probe_times``/``probe_values`` record the macro field at the probe
    nodes every single step.  ``extrema`` holds the running (min, max) of
    every species over all steps, initial data included.  The end-of-run
    fields stay available for snapshot writing.
    """

    times: np.ndarray
    macro_values: np.ndarray
    coupling: np.ndarray
    species_means: dict
    extrema: dict
    probe_indices: np.ndarray
    probe_points: np.ndarray
    probe_times: np.ndarray
    probe_values: np.ndarray
    tau: float
    final_macro: object = None
    final_micro: object = None


def boundary_node_mask(mesh):
    mask = np.zeros(mesh.node_count, dtype=bool)
    if mesh.boundary_edges.size:
        mask[np.unique(mesh.boundary_edges)] = True
    return mask


def build_macro_operator(omega_mesh, hom, tau, bc):
    """Factor theta_e * M_lumped + tau * K(d_hom) with Dirichlet elimination.

    The lumped mass keeps the system an M-matrix for every step size, which
    preserves the discrete maximum principle, and makes the per-step mass
    balance close exactly against the nodal coupling values.
    """
    if omega_mesh.node_count == 0 or len(omega_mesh.triangles) == 0:
        raise ConfigError("macro mesh is empty")
    if not np.isfinite(tau) or tau <= 0.0:
        raise ConfigError(f"step size tau = {tau} must be finite and > 0")
    theta = float(hom.theta_e)
    if not (0.0 < theta <= 1.0):
        raise ConfigError(f"volume fraction theta_e = {theta} must lie in (0, 1]")
    d = coefficient_tensor(hom.d_hom)
    lumped = assemble_lumped_mass(omega_mesh)
    K = assemble_stiffness(omega_mesh, d).tocsr()
    n = omega_mesh.node_count

    dirichlet = np.zeros(n, dtype=bool)
    values = np.zeros(n)
    if bc.dirichlet is not None:
        on_boundary = boundary_node_mask(omega_mesh)
        ids = np.flatnonzero(on_boundary)
        mask = np.asarray(bc.dirichlet(omega_mesh.nodes[ids]), dtype=bool)
        if mask.shape != (ids.size,):
            raise ConfigError(
                f"Dirichlet predicate returned shape {mask.shape} for "
                f"{ids.size} boundary nodes")
        dirichlet[ids[mask]] = True
        values[dirichlet] = bc.value
    free = ~dirichlet
    if not free.any():
        raise ConfigError("Dirichlet data constrains every node of the macro mesh")
    A = (sp.diags(theta * lumped) + tau * K).tocsr()
    system = FactoredSpd(A[free][:, free].tocsc())
    if dirichlet.any():
        shift = A[free][:, dirichlet] @ values[dirichlet]
    else:
        shift = np.zeros(int(free.sum()))
    return MacroOperators(system=system, lumped=lumped, stiffness=K, free=free,
                          dirichlet_values=values, shift=shift,
                          tau=tau, theta=theta)


def macro_step(c_e, coupling, spec, ops):
    """One implicit macro step consuming level n-1 coupling data."""
    c = np.asarray(c_e.values, dtype=float)
    if c.shape != (ops.node_count,):
        raise InputError(
            f"macro field has length {c.shape}, operator expects {ops.node_count}")
    g = np.zeros_like(c) if coupling is None else np.broadcast_to(
        np.asarray(coupling, dtype=float), c.shape)
    load = ops.theta * spec.source_e(c) - g
    rhs = ops.lumped * (ops.theta * c + ops.tau * load)
    if not np.all(np.isfinite(rhs)):
        bad = int(np.argmin(np.isfinite(rhs)))
        raise StepError(f"ligand field: non-finite explicit load at node {bad}")
    out = ops.dirichlet_values.copy()
    out[ops.free] = ops.system.solve(rhs[ops.free] - ops.shift)
    return MacroField(values=out, time_index=c_e.time_index + 1)


def first_crossing(times, values, threshold):
    """Earliest sampled time at which ``values`` reaches ``threshold``.

    Returns NaN when the series never crosses.
    """
    values = np.asarray(values, dtype=float)
    hits = np.flatnonzero(values >= threshold)
    if hits.size == 0:
        return math.nan
    return float(np.asarray(times, dtype=float)[hits[0]])


# ---------------------------------------------------------------------------
# scenario assembly


def _hole_for(geometry):
    if geometry.cell_kind == "circle":
        return CircleHole(geometry.cell_params[0])
    if geometry.cell_kind == "ellipse":
        return EllipseHole.from_coefficients(*geometry.cell_params)
    if geometry.cell_kind == "dziuk":
        return DziukHole()
    return None


def _micro_spec(geometry, resolution):
    if geometry.cell_kind == "circle":
        r = geometry.cell_params[0]
        kind, a, b = ("identity", 1.0, 1.0) if r == 1.0 else ("ellipse", r, r)
    elif geometry.cell_kind == "ellipse":
        c1, c2 = geometry.cell_params
        kind, a, b = "ellipse", 1.0 / math.sqrt(c1), 1.0 / math.sqrt(c2)
    elif geometry.cell_kind == "dziuk":
        kind, a, b = "dziuk", 1.0, 1.0
    else:
        return None
    return MappedDiscSpec(kind, a=a, b=b, rings=resolution.micro_rings,
                          segments=resolution.micro_segments)


def build_scenario_meshes(config):
    """Generate the macro mesh and, when a cell shape is set, the interior
    mesh, its boundary curve, and the periodic exterior mesh."""
    res = config.resolution
    macro = generate_mesh(SquareSpec(bounds=config.geometry.macro_bounds,
                                     n=res.macro_n), level=res.level)
    micro_spec = _micro_spec(config.geometry, res)
    if micro_spec is None:
        return macro, None, None, None
    micro = generate_mesh(micro_spec, level=res.level)
    curve = extract_boundary_curve(micro, "outer")
    hole = _hole_for(config.geometry)
    exterior = generate_mesh(
        PerforatedSquareSpec(hole, bounds=config.geometry.cell_bounds,
                             segments_per_side=res.cell_segments,
                             layers=res.cell_layers),
        level=res.level)
    return macro, micro, curve, exterior


def homogenized_for(config, exterior_mesh=None):
    """Effective tensor data: precomputed from the config, the identity
    specialisation for an unperforated cell, or solved on the exterior mesh."""
    diff = config.diffusion
    if diff.d_hom is not None:
        theta = 1.0 if diff.theta_e is None else diff.theta_e
        return HomogenizedData(d_hom=np.asarray(diff.d_hom, dtype=float),
                               theta_e=theta, cell_solutions=(),
                               mesh_h=None, index_map=None)
    if config.geometry.cell_kind == "none":
        return HomogenizedData(d_hom=np.diag([diff.d_e, diff.d_e]),
                               theta_e=1.0, cell_solutions=(),
                               mesh_h=None, index_map=None)
    if exterior_mesh is None:
        raise ConfigError("an exterior cell mesh is required to compute d_hom")
    (x0, x1), (y0, y1) = config.geometry.cell_bounds
    period = ((x1 - x0, 0.0), (0.0, y1 - y0))
    matched = match_periodic_nodes(exterior_mesh, period)
    return compute_homogenized(matched, diff.d_e, config.geometry.cell_volume())


def initial_fields(config, macro_mesh, curve, cell_mesh):
    """Initial macro vector and batched micro state for the configured preset."""
    n_macro = macro_mesh.node_count
    c_e = np.zeros(n_macro)
    if curve is None:
        return c_e, None
    m_curve, m_bulk = curve.node_count, cell_mesh.node_count

    def flat(value, rows):
        return np.full((rows, n_macro), float(value))

    if config.initial.preset == "zero":
        state = MicroState(r_f=flat(0.0, m_curve), r_b=flat(0.0, m_curve),
                           p_d=flat(0.0, m_curve), p_a=flat(0.0, m_curve),
                           c_i=flat(0.0, m_bulk))
        return c_e, state

    amp = config.initial.amplitude
    x = macro_mesh.nodes
    ax = np.hypot(x[:, 0], x[:, 1])
    y = cell_mesh.nodes
    z = curve.nodes
    c_i = 1.0 + amp * np.outer(np.sin(np.pi * (2.0 * y[:, 0] + 0.5 * y[:, 1])),
                               np.sin(5.0 * np.pi * ax))
    r_f = 0.17 * (1.0 + amp * np.outer(np.cos(np.pi * (z[:, 0] + 4.0 * z[:, 1])),
                                       np.cos(30.0 * np.pi * ax)))
    p_d = 0.065 * (1.0 + amp * np.outer(np.cos(np.pi * (2.0 * z[:, 0] + 0.5 * z[:, 1])),
                                        np.cos(10.0 * np.pi * ax)))
    state = MicroState(r_f=r_f, r_b=flat(0.0, m_curve), p_d=p_d,
                       p_a=flat(0.0, m_curve), c_i=c_i)
    return c_e, state


def _boundary_spec(config):
    if config.bc.kind == "neumann":
        return BoundarySpec.neumann()
    return BoundarySpec.threshold(config.bc.value, config.bc.cutoff)


def _probe_indices(macro_mesh, probes):
    if not probes:
        return np.zeros(0, dtype=np.int64)
    pts = np.asarray(probes, dtype=float)
    d2 = ((macro_mesh.nodes[None, :, :] - pts[:, None, :]) ** 2).sum(axis=2)
    return np.asarray(np.argmin(d2, axis=1), dtype=np.int64)


class _ExtremaTracker:
    def __init__(self, names):
        self.low = {name: math.inf for name in names}
        self.high = {name: -math.inf for name in names}

    def update(self, name, values):
        self.low[name] = min(self.low[name], float(values.min()))
        self.high[name] = max(self.high[name], float(values.max()))

    def as_dict(self):
        return {name: (self.low[name], self.high[name]) for name in self.low}


def run_two_scale(config, meshes=None):
    """Run the coupled scheme defined by ``config``; returns a Trajectory.

    ``meshes`` may carry prebuilt (macro, micro, curve, exterior) meshes,
    exactly as :func:`build_scenario_meshes` returns them, to reuse across
    runs; geometry must match the config.
    """
    macro_mesh, micro_mesh, curve, exterior = (
        meshes if meshes is not None else build_scenario_meshes(config))
    hom = homogenized_for(config, exterior)
    tau = config.time.tau
    steps = config.time.step_count()
    cadence = config.time.sample_cadence()
    rspec = config.reactions
    diff = config.diffusion

    macro_ops = build_macro_operator(macro_mesh, hom, tau, _boundary_spec(config))
    micro_ops = None
    if micro_mesh is not None:
        micro_ops = build_micro_operators(
            curve, micro_mesh,
            {"f": diff.d_f, "b": diff.d_b, "d": diff.d_d, "a": diff.d_a, "i": diff.d_i},
            rspec, tau, config.geometry.cell_volume())

    c_e0, micro_state = initial_fields(config, macro_mesh, curve, micro_mesh)
    macro = MacroField(values=c_e0, time_index=0)
    two_scale = TwoScaleField(state=micro_state) if micro_state is not None else None

    probe_ids = _probe_indices(macro_mesh, config.output.probes)
    probe_times = np.zeros(steps + 1)
    probe_values = np.zeros((steps + 1, probe_ids.size))
    probe_values[0] = macro.values[probe_ids]

    names = ("c_e",) + (SPECIES if micro_state is not None else ())
    extrema = _ExtremaTracker(names)
    extrema.update("c_e", macro.values)
    if micro_state is not None:
        for name in SPECIES:
            extrema.update(name, micro_state.species(name))

    def micro_means(state):
        out = {}
        for name in SPECIES:
            weights = micro_ops.bulk_mass if name == "c_i" else micro_ops.curve_mass
            out[name] = (weights @ state.species(name)) / weights.sum()
        return out

    sample_times = [0.0]
    sample_macro = [macro.values.copy()]
    sample_coupling = []
    sample_means = {name: [] for name in (SPECIES if micro_state is not None else ())}
    if micro_state is not None:
        for name, mean in micro_means(micro_state).items():
            sample_means[name].append(mean)

    def coupling_now(state, values):
        if state is None:
            return np.zeros(macro_mesh.node_count)
        return coupling_flux(state, values, rspec, micro_ops)

    g = coupling_now(micro_state, macro.values)
    sample_coupling.append(g.copy())

    for n in range(1, steps + 1):
        try:
            new_macro = macro_step(macro, g, rspec, macro_ops)
            if micro_state is not None:
                micro_state = micro_step(micro_state, macro.values, rspec, micro_ops)
        except StepError as exc:
            raise StepError(f"step {n}: {exc}") from exc
        macro = new_macro
        if two_scale is not None:
            two_scale.state = micro_state

        probe_times[n] = n * tau
        probe_values[n] = macro.values[probe_ids]
        extrema.update("c_e", macro.values)
        if micro_state is not None:
            for name in SPECIES:
                extrema.update(name, micro_state.species(name))

        g = coupling_now(micro_state, macro.values)
        if n % cadence == 0 or n == steps:
            sample_times.append(n * tau)
            sample_macro.append(macro.values.copy())
            sample_coupling.append(g.copy())
            if micro_state is not None:
                for name, mean in micro_means(micro_state).items():
                    sample_means[name].append(mean)

    return Trajectory(
        times=np.asarray(sample_times),
        macro_values=np.asarray(sample_macro),
        coupling=np.asarray(sample_coupling),
        species_means={k: np.asarray(v) for k, v in sample_means.items()},
        extrema=extrema.as_dict(),
        probe_indices=probe_ids,
        probe_points=macro_mesh.nodes[probe_ids].copy() if probe_ids.size else np.zeros((0, 2)),
        probe_times=probe_times,
        probe_values=probe_values,
        tau=tau,
        final_macro=macro,
        final_micro=two_scale,
    )


def bio_scenario(geometry, resolution=None, tau=2e-3, t_end=250.0):
    """Receptor-ligand scenario configuration on the chosen cell geometry.

    Dimensionless parameter set: binding a_e=100, b_e=5, activation
    a_i=6e3, b_i=10, exchange gamma_i=2, kappa_i=1; ligand and membrane
    diffusivities 1e-2, interior 10; no sources or decays; ligand source
    modelled by a unit Dirichlet patch near the corner of the macro square.
    """
    from .config import (BcSpec, DiffusionSpec, GeometrySpec, InitialSpec,
                         OutputSpec, ScenarioConfig)

    if geometry == "ellipse":
        geo = GeometrySpec(cell_kind="ellipse", cell_params=(0.26, 5.0))
    elif geometry == "dziuk":
        geo = GeometrySpec(cell_kind="dziuk")
    else:
        raise ConfigError(f"unsupported bio geometry '{geometry}'")
    return ScenarioConfig(
        geometry=geo,
        resolution=resolution if resolution is not None else Resolution(),
        time=TimeSpec(tau=tau, t_end=t_end),
        reactions=ReactionSpec(a_e=100.0, b_e=5.0, a_i=6e3, b_i=10.0,
                               gamma_i=2.0, kappa_i=1.0),
        diffusion=DiffusionSpec(d_e=1e-2, d_i=10.0, d_f=1e-2, d_b=1e-2,
                                d_d=1e-2, d_a=1e-2),
        bc=BcSpec(kind="dirichlet-threshold", value=1.0, cutoff=5e-2),
        initial=InitialSpec(preset="bio", amplitude=0.95),
        output=OutputSpec(probes=((0.0, 0.0), (0.05, 0.05), (0.1, 0.1))),
        nondim_record=(("t_hat_seconds", 1e3), ("x_hat_metres", 1e-2),
                       ("r_hat_mol_per_m2", 1e-9), ("c_hat_mol_per_m3", 1e-4),
                       ("epsilon", 1e-3)),
    )
