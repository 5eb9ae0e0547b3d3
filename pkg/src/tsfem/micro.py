"""Membrane and intracellular dynamics below one macroscopic node.

Four membrane species diffuse along the cell boundary curve while an
intracellular field diffuses in the cell interior; the two meet in a linear
exchange through the shared boundary nodes.  Reactions are taken explicitly
from the previous time level, so a step solves five independent linear
systems whose matrices never change and are factored once.

States may hold a single node column (vectors) or one column per macroscopic
node (2-D arrays); the arithmetic is identical column by column, and batching
only shares the factorisations.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, StepError
from .fem import (
    FactoredSpd,
    assemble_curve_lumped_mass,
    assemble_curve_stiffness,
    assemble_lumped_mass,
    assemble_stiffness,
)
from .mesh import CurveMesh, TriMesh

SURFACE_SPECIES = ("r_f", "r_b", "p_d", "p_a")
SPECIES = SURFACE_SPECIES + ("c_i",)


@dataclass(frozen=True)
class SourceTerm:
    """Autonomous per-species source: zero, a constant, or a linear term."""

    kind: str = "zero"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "linear"):
            raise ConfigError(f"unknown source kind '{self.kind}'")
        if not np.isfinite(self.value):
            raise ConfigError(f"source value {self.value} is not finite")

    @classmethod
    def zero(cls) -> "SourceTerm":
        return cls()

    @classmethod
    def constant(cls, c: float) -> "SourceTerm":
        return cls("constant", float(c))

    @classmethod
    def linear(cls, alpha: float) -> "SourceTerm":
        return cls("linear", float(alpha))

    def __call__(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.full_like(u, self.value)
        if self.kind == "linear":
            return self.value * u
        return np.zeros_like(u)


@dataclass(frozen=True)
class ReactionSpec:
    """Rate constants, linear decays, and source presets for the reactions.

    a_e, b_e: ligand binding and unbinding at free/bound receptors.
    a_i, b_i: activation and deactivation of the membrane protein by bound
        receptors.
    gamma_i, kappa_i: exchange between active protein and the interior field.
    d_f..d_a: linear decay of the four membrane species (handled inside the
        implicit operators, not here).
    source_*: autonomous sources for the ligand, interior, free-receptor and
        inactive-protein equations.
    """

    a_e: float = 0.0
    b_e: float = 0.0
    a_i: float = 0.0
    b_i: float = 0.0
    gamma_i: float = 0.0
    kappa_i: float = 0.0
    d_f: float = 0.0
    d_b: float = 0.0
    d_d: float = 0.0
    d_a: float = 0.0
    source_e: SourceTerm = field(default_factory=SourceTerm)
    source_i: SourceTerm = field(default_factory=SourceTerm)
    source_f: SourceTerm = field(default_factory=SourceTerm)
    source_d: SourceTerm = field(default_factory=SourceTerm)

    def __post_init__(self):
        for name in ("a_e", "b_e", "a_i", "b_i", "gamma_i", "kappa_i",
                     "d_f", "d_b", "d_d", "d_a"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise ConfigError(f"rate {name} = {v} must be finite and >= 0")


@dataclass(frozen=True, eq=False)
class MicroState:
    """Nodal species values at one time level.

    The leading axis of each array matches the curve (membrane species) or
    the interior mesh (c_i); a trailing axis, when present, enumerates
    macroscopic node columns stepped together.
    """

    r_f: np.ndarray
    r_b: np.ndarray
    p_d: np.ndarray
    p_a: np.ndarray
    c_i: np.ndarray
    time_index: int = 0

    @property
    def columns(self):
        """Number of macro-node columns held (1 for plain vectors)."""
        return 1 if self.r_f.ndim == 1 else self.r_f.shape[1]

    def species(self, name: str) -> np.ndarray:
        if name not in SPECIES:
            raise ConfigError(f"unknown species '{name}'")
        return getattr(self, name)


@dataclass(frozen=True, eq=False)
class MicroOperators:
    """Factored implicit systems plus the geometry bookkeeping they share.

    system_f..system_a: curve operators M + tau*(D_s K + d_s M), lumped M.
    system_i: interior operator M + tau*D_i K, lumped M.
    trace: curve-node -> interior-node index map.
    curve_mass, bulk_mass: lumped mass weights of the two meshes.
    cell_volume: measure of the full periodicity cell (interior plus
        exterior), normalising the membrane integral fed back to the
        macroscopic equation.
    """

    system_f: FactoredSpd
    system_b: FactoredSpd
    system_d: FactoredSpd
    system_a: FactoredSpd
    system_i: FactoredSpd
    trace: np.ndarray
    curve_mass: np.ndarray
    bulk_mass: np.ndarray
    tau: float
    cell_volume: float

    @property
    def curve_count(self):
        return self.curve_mass.shape[0]

    @property
    def bulk_count(self):
        return self.bulk_mass.shape[0]

    def surface_system(self, name: str) -> FactoredSpd:
        return getattr(self, "system_" + name[-1])


def _rate_table(values, keys, label, require_all=False):
    if hasattr(values, "keys"):
        table = dict(values)
    else:
        raise ConfigError(f"{label} must be a mapping with keys {sorted(keys)}")
    unknown = set(table) - set(keys)
    if unknown:
        raise ConfigError(f"unknown {label} keys {sorted(unknown)}")
    missing = set(keys) - set(table)
    if require_all and missing:
        raise ConfigError(f"missing {label} keys {sorted(missing)}")
    out = {}
    for key in keys:
        v = float(table.get(key, 0.0))
        if not np.isfinite(v) or v < 0.0:
            raise ConfigError(f"{label}['{key}'] = {v} must be finite and >= 0")
        out[key] = v
    return out


def build_micro_operators(curve: CurveMesh, cell_mesh: TriMesh, diffusions,
                          decays, tau: float, cell_volume: float,
                          tol: float = 1e-10) -> MicroOperators:
    """Assemble and factor the five implicit systems reused by every step.

    diffusions: mapping with keys 'f', 'b', 'd', 'a', 'i' (all required).
    decays: mapping with keys among 'f', 'b', 'd', 'a' (missing means 0),
        or a ReactionSpec, whose d_* fields are used.
    cell_volume: measure of the periodicity cell containing this cell shape.
    """
    if not tau > 0.0:
        raise ConfigError(f"timestep tau = {tau} must be positive")
    if not cell_volume > 0.0:
        raise ConfigError(f"cell volume {cell_volume} must be positive")
    diff = _rate_table(diffusions, ("f", "b", "d", "a", "i"), "diffusion",
                       require_all=True)
    if isinstance(decays, ReactionSpec):
        decays = {k: getattr(decays, "d_" + k) for k in ("f", "b", "d", "a")}
    dec = _rate_table(decays, ("f", "b", "d", "a"), "decay")

    trace = np.asarray(curve.parent_indices, dtype=np.int64)
    if trace.shape != (curve.node_count,):
        raise ConfigError("curve parent index array does not match the curve")
    if trace.min() < 0 or trace.max() >= cell_mesh.node_count:
        raise ConfigError("curve parent indices fall outside the cell mesh")
    if not np.allclose(curve.nodes, cell_mesh.nodes[trace], atol=1e-12):
        raise ConfigError("curve nodes do not coincide with their parents")

    m_curve = assemble_curve_lumped_mass(curve)
    k_curve = assemble_curve_stiffness(curve, 1.0)
    m_bulk = assemble_lumped_mass(cell_mesh)
    k_bulk = assemble_stiffness(cell_mesh, 1.0)

    def curve_system(name):
        scale = 1.0 + tau * dec[name]
        return FactoredSpd(sp.diags(m_curve * scale) + (tau * diff[name]) * k_curve, tol)

    return MicroOperators(
        system_f=curve_system("f"),
        system_b=curve_system("b"),
        system_d=curve_system("d"),
        system_a=curve_system("a"),
        system_i=FactoredSpd(sp.diags(m_bulk) + (tau * diff["i"]) * k_bulk, tol),
        trace=trace,
        curve_mass=m_curve,
        bulk_mass=m_bulk,
        tau=tau,
        cell_volume=float(cell_volume),
    )


def _check_state(state: MicroState, ops: MicroOperators):
    cols = state.columns
    for name in SURFACE_SPECIES:
        u = state.species(name)
        lead = u.shape[0] if u.ndim in (1, 2) else -1
        if lead != ops.curve_count or (u.ndim == 2 and u.shape[1] != cols):
            raise ConfigError(f"species {name} has shape {u.shape}, "
                              f"curve has {ops.curve_count} nodes")
    if state.c_i.shape[0] != ops.bulk_count or state.c_i.ndim != state.r_f.ndim:
        raise ConfigError(f"species c_i has shape {state.c_i.shape}, "
                          f"cell mesh has {ops.bulk_count} nodes")


def _check_load(load: np.ndarray, name: str):
    finite = np.isfinite(load)
    if finite.all():
        return
    where = np.argwhere(~finite)[0]
    place = f"node {where[0]}"
    if load.ndim == 2:
        place += f", column {where[1]}"
    raise StepError(f"species {name}: non-finite explicit load at {place}")


def _reaction_loads(state, c_e_node, spec, ops):
    """Explicit nodal reaction terms evaluated at the previous time level."""
    c_e = np.asarray(c_e_node, dtype=float)
    if c_e.ndim == 1 and state.r_f.ndim == 2:
        c_e = c_e[None, :]
    elif c_e.ndim != 0:
        raise ConfigError(f"ligand value has shape {c_e.shape}, expected a "
                          "scalar (or one value per column for 2-D states)")
    # A diverging run overflows here first; the caller reports the resulting
    # non-finite load with its location, so the intermediate warning is noise.
    with np.errstate(over="ignore", invalid="ignore"):
        g_e = spec.a_e * c_e * state.r_f - spec.b_e * state.r_b
        g_d = spec.a_i * state.r_b * state.p_d - spec.b_i * state.p_a
        g_i = spec.gamma_i * state.p_a - spec.kappa_i * state.c_i[ops.trace]
    return g_e, g_d, g_i


def _solve_all(tasks):
    """Run (system, rhs) solves, optionally on a small thread pool.

    The solves are independent, so the thread count changes timing only;
    results are bit-identical either way.
    """
    workers = int(os.environ.get("TSFEM_THREADS", "1") or "1")
    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            return list(pool.map(lambda t: t[0].solve(t[1]), tasks))
    return [system.solve(rhs) for system, rhs in tasks]


def micro_step(state: MicroState, c_e_node, spec: ReactionSpec,
               ops: MicroOperators) -> MicroState:
    """Advance all five species one step from time level n-1 to n.

    Reactions and the boundary exchange use level n-1 values; diffusion and
    decay sit inside the factored systems.  ``c_e_node`` is the macroscopic
    ligand value above this cell at level n-1 (one scalar per column).
    """
    _check_state(state, ops)
    g_e, g_d, g_i = _reaction_loads(state, c_e_node, spec, ops)
    tau = ops.tau

    loads = {
        "r_f": spec.source_f(state.r_f) - g_e,
        "r_b": g_e - g_d,
        "p_d": spec.source_d(state.p_d) - g_d,
        "p_a": g_d - g_i,
    }
    mc = ops.curve_mass if state.r_f.ndim == 1 else ops.curve_mass[:, None]
    mb = ops.bulk_mass if state.c_i.ndim == 1 else ops.bulk_mass[:, None]

    tasks = []
    for name in SURFACE_SPECIES:
        _check_load(loads[name], name)
        tasks.append((ops.surface_system(name),
                      mc * (state.species(name) + tau * loads[name])))

    bulk_load = spec.source_i(state.c_i)
    _check_load(bulk_load, "c_i")
    _check_load(g_i, "c_i")
    rhs_i = mb * (state.c_i + tau * bulk_load)
    boundary = tau * (ops.curve_mass if g_i.ndim == 1 else ops.curve_mass[:, None]) * g_i
    np.add.at(rhs_i, ops.trace, boundary)
    tasks.append((ops.system_i, rhs_i))

    r_f, r_b, p_d, p_a, c_i = _solve_all(tasks)
    return MicroState(r_f=r_f, r_b=r_b, p_d=p_d, p_a=p_a, c_i=c_i,
                      time_index=state.time_index + 1)


def coupling_flux(state: MicroState, c_e_node, spec: ReactionSpec,
                  ops: MicroOperators):
    """Membrane binding integral per unit cell volume, fed to the macro step.

    Returns a scalar for vector states, one value per column for 2-D states.
    """
    _check_state(state, ops)
    g_e, _, _ = _reaction_loads(state, c_e_node, spec, ops)
    if g_e.ndim == 2:
        # One dot per contiguous column copy: blocked reductions and stride
        # games are not bit-stable under column permutation; this is, and it
        # reproduces the single-column path exactly.
        total = np.array([ops.curve_mass @ np.ascontiguousarray(g_e[:, j])
                          for j in range(g_e.shape[1])])
    else:
        total = ops.curve_mass @ np.ascontiguousarray(g_e)
    return total / ops.cell_volume


def trace_mass_ratio(ops: MicroOperators) -> float:
    """Largest curve-to-bulk lumped mass ratio over the boundary nodes.

    The interior field receives the membrane exchange through curve weights
    divided by bulk weights, so its effective nodal exchange rate is the
    nominal rate times this factor (which grows like one over the mesh size).
    """
    return float((ops.curve_mass / ops.bulk_mass[ops.trace]).max())


def explicit_step_bound(spec: ReactionSpec, c_e_max: float, p_d_max: float,
                        exchange_ratio: float = 1.0) -> float:
    """Largest timestep with nonnegativity-preserving explicit reactions.

    The loss terms of each species are linear in that species with rate at
    most the bracketed sum; keeping tau times the total loss rate below 1/2
    keeps every explicitly updated value nonnegative.  ``p_d_max`` must bound
    both activation-pair species (r_b and p_d); ``exchange_ratio`` is the
    trace_mass_ratio of the operators in use, scaling the interior uptake
    rate (the nominal formula with ratio 1 underestimates that sink).
    """
    rate = (spec.a_e * max(c_e_max, 0.0) + spec.b_e
            + spec.a_i * max(p_d_max, 0.0) + spec.b_i
            + spec.gamma_i + spec.kappa_i * max(exchange_ratio, 1.0)
            + max(spec.d_f, spec.d_b, spec.d_d, spec.d_a))
    if rate <= 0.0:
        return np.inf
    return 0.5 / rate
