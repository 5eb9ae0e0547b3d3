import numpy as np
import pytest
import scipy.sparse as sp
from dataclasses import replace

from tsfem.cell import HomogenizedData
from tsfem.config import (
    BcSpec,
    DiffusionSpec,
    GeometrySpec,
    InitialSpec,
    OutputSpec,
    Resolution,
    ScenarioConfig,
    TimeSpec,
)
from tsfem.errors import ConfigError, InputError, StepError
from tsfem.fem import FactoredSpd, assemble_lumped_mass, assemble_stiffness
from tsfem.macro import (
    BoundarySpec,
    MacroField,
    build_macro_operator,
    build_scenario_meshes,
    bio_scenario,
    first_crossing,
    homogenized_for,
    initial_fields,
    macro_step,
    run_two_scale,
)
from tsfem.mesh import SquareSpec, TriMesh, generate_mesh
from tsfem.micro import ReactionSpec, SourceTerm

UNIT = SquareSpec(bounds=((0.0, 1.0), (0.0, 1.0)), n=4)


def plain_hom(d=1.0, theta=1.0):
    return HomogenizedData(d_hom=np.diag([d, d]), theta_e=theta,
                           cell_solutions=(), mesh_h=None, index_map=None)


@pytest.fixture(scope="module")
def unit_mesh():
    return generate_mesh(UNIT)


def test_pure_neumann_preserves_constants(unit_mesh):
    ops = build_macro_operator(unit_mesh, plain_hom(theta=0.7), 0.05,
                               BoundarySpec.neumann())
    state = MacroField(np.full(unit_mesh.node_count, 3.5))
    out = macro_step(state, None, ReactionSpec(), ops)
    np.testing.assert_allclose(out.values, 3.5, rtol=1e-13)
    assert out.time_index == 1


def test_heat_step_specialisation_matches_direct_solve(unit_mesh, rng):
    tau = 0.02
    ops = build_macro_operator(unit_mesh, plain_hom(), tau, BoundarySpec.neumann())
    c = rng.uniform(0.0, 1.0, unit_mesh.node_count)
    out = macro_step(MacroField(c), None, ReactionSpec(), ops)
    lumped = assemble_lumped_mass(unit_mesh)
    K = assemble_stiffness(unit_mesh, 1.0)
    direct = FactoredSpd((sp.diags(lumped) + tau * K).tocsc()).solve(lumped * c)
    np.testing.assert_allclose(out.values, direct, rtol=1e-13)


def test_dirichlet_boundary_drives_interior_monotonically(unit_mesh):
    bc = BoundarySpec(lambda pts: np.ones(pts.shape[0], dtype=bool), 1.0)
    ops = build_macro_operator(unit_mesh, plain_hom(), 0.05, bc)
    state = MacroField(np.zeros(unit_mesh.node_count))
    interior = ops.free
    previous = state.values[interior]
    for _ in range(20):
        state = macro_step(state, None, ReactionSpec(), ops)
        assert np.all(state.values[~interior] == 1.0)
        current = state.values[interior]
        assert np.all(current > previous)
        assert np.all(current < 1.0 + 1e-12)
        previous = current
    for _ in range(200):
        state = macro_step(state, None, ReactionSpec(), ops)
    np.testing.assert_allclose(state.values, 1.0, atol=1e-6)


def test_dirichlet_fixed_point_is_exact(unit_mesh):
    bc = BoundarySpec(lambda pts: np.ones(pts.shape[0], dtype=bool), 1.0)
    ops = build_macro_operator(unit_mesh, plain_hom(), 0.1, bc)
    state = macro_step(MacroField(np.ones(unit_mesh.node_count)), None,
                       ReactionSpec(), ops)
    np.testing.assert_allclose(state.values, 1.0, rtol=1e-12)


def test_constant_coupling_drains_mass_exactly(unit_mesh):
    theta = 0.8
    ops = build_macro_operator(unit_mesh, plain_hom(theta=theta), 0.05,
                               BoundarySpec.neumann())
    lumped = ops.lumped
    state = MacroField(np.full(unit_mesh.node_count, 2.0))
    g = 0.25
    for _ in range(5):
        new = macro_step(state, g, ReactionSpec(), ops)
        drained = theta * (lumped @ state.values - lumped @ new.values)
        assert drained == pytest.approx(ops.tau * g * lumped.sum(), rel=1e-12)
        state = new


def test_constant_source_adds_mass_exactly(unit_mesh):
    theta = 0.6
    ops = build_macro_operator(unit_mesh, plain_hom(theta=theta), 0.05,
                               BoundarySpec.neumann())
    spec = ReactionSpec(source_e=SourceTerm.constant(1.5))
    state = MacroField(np.zeros(unit_mesh.node_count))
    new = macro_step(state, None, spec, ops)
    added = theta * (ops.lumped @ new.values)
    assert added == pytest.approx(ops.tau * theta * 1.5 * ops.lumped.sum(), rel=1e-12)


def test_operator_validation(unit_mesh):
    with pytest.raises(ConfigError, match="tau"):
        build_macro_operator(unit_mesh, plain_hom(), 0.0, BoundarySpec.neumann())
    empty = TriMesh(nodes=np.zeros((0, 2)), triangles=np.zeros((0, 3), dtype=np.int64),
                    boundary_edges=np.zeros((0, 2), dtype=np.int64), boundary_markers=[])
    with pytest.raises(ConfigError, match="empty"):
        build_macro_operator(empty, plain_hom(), 0.1, BoundarySpec.neumann())
    with pytest.raises(ConfigError, match="shape"):
        build_macro_operator(unit_mesh, plain_hom(), 0.1,
                             BoundarySpec(lambda pts: np.ones(3, dtype=bool), 1.0))
    with pytest.raises(ConfigError, match="every node"):
        # a 2x2 grid of one square: every node lies on the boundary
        tiny = generate_mesh(SquareSpec(bounds=((0.0, 1.0), (0.0, 1.0)), n=1))
        build_macro_operator(tiny, plain_hom(), 0.1,
                             BoundarySpec(lambda pts: np.ones(pts.shape[0], dtype=bool), 1.0))


def test_macro_step_reports_nonfinite_load(unit_mesh):
    ops = build_macro_operator(unit_mesh, plain_hom(), 0.05, BoundarySpec.neumann())
    values = np.zeros(unit_mesh.node_count)
    values[7] = np.nan
    with pytest.raises(StepError, match="node 7"):
        macro_step(MacroField(values), None, ReactionSpec(), ops)
    with pytest.raises(InputError, match="length"):
        macro_step(MacroField(np.zeros(3)), None, ReactionSpec(), ops)


def test_first_crossing():
    times = np.array([0.0, 1.0, 2.0, 3.0])
    assert first_crossing(times, np.array([0.0, 0.05, 0.2, 0.5]), 0.1) == 2.0
    assert np.isnan(first_crossing(times, np.array([0.0, 0.01, 0.02, 0.03]), 0.1))
    assert first_crossing(times, np.array([1.0, 0.0, 0.0, 0.0]), 0.5) == 0.0


# ---------------------------------------------------------------------------
# scenario plumbing


def small_config(**overrides):
    base = dict(
        geometry=GeometrySpec(cell_kind="circle", cell_params=(1.0,)),
        resolution=Resolution(macro_n=4, micro_rings=2, micro_segments=8,
                              cell_segments=16, cell_layers=6),
        time=TimeSpec(tau=1e-3, t_end=5e-2, cadence=1),
        reactions=ReactionSpec(a_e=2.0, b_e=1.0, a_i=1.0, b_i=0.5,
                               gamma_i=1.0, kappa_i=0.5),
        diffusion=DiffusionSpec(d_e=1e-2, d_i=1.0, d_f=1e-2, d_b=1e-2,
                                d_d=1e-2, d_a=1e-2),
        bc=BcSpec(kind="neumann"),
        initial=InitialSpec(preset="bio", amplitude=0.5),
        output=OutputSpec(probes=((0.05, 0.05),)),
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def test_zero_dynamics_reproduces_initial_data():
    cfg = small_config(
        time=TimeSpec(tau=0.1, t_end=1.0, cadence=1),
        reactions=ReactionSpec(),
        diffusion=DiffusionSpec(d_e=0.0, d_i=0.0, d_f=0.0, d_b=0.0, d_d=0.0,
                                d_a=0.0, d_hom=((0.0, 0.0), (0.0, 0.0)), theta_e=1.0),
    )
    traj = run_two_scale(cfg)
    assert np.abs(traj.macro_values - traj.macro_values[0]).max() < 1e-12
    for arr in traj.species_means.values():
        assert np.abs(arr - arr[0]).max() < 1e-12
    assert np.all(np.diff(traj.times) > 0)


def test_two_identical_runs_are_bit_identical():
    cfg = small_config()
    a = run_two_scale(cfg)
    b = run_two_scale(cfg)
    np.testing.assert_array_equal(a.macro_values, b.macro_values)
    np.testing.assert_array_equal(a.coupling, b.coupling)
    np.testing.assert_array_equal(a.probe_values, b.probe_values)
    for name in a.species_means:
        np.testing.assert_array_equal(a.species_means[name], b.species_means[name])
    for name in a.extrema:
        assert a.extrema[name] == b.extrema[name]


def test_per_step_macro_mass_balance_closes():
    cfg = small_config()
    meshes = build_scenario_meshes(cfg)
    macro_mesh = meshes[0]
    hom = homogenized_for(cfg, meshes[3])
    traj = run_two_scale(cfg, meshes=meshes)
    lumped = assemble_lumped_mass(macro_mesh)
    masses = traj.macro_values @ lumped
    for k in range(len(masses) - 1):
        change = hom.theta_e * (masses[k + 1] - masses[k])
        expected = -cfg.time.tau * (lumped @ traj.coupling[k])
        assert change == pytest.approx(expected, rel=1e-10, abs=1e-16)


def test_receptor_ligand_exchange_is_conservative_in_total():
    # with binding only (no activation/exchange), theta * macro mass plus
    # the cell-averaged bound+free receptor surface mass is constant
    cfg = small_config(
        reactions=ReactionSpec(a_e=2.0, b_e=1.0),
        initial=InitialSpec(preset="bio", amplitude=0.5),
    )
    meshes = build_scenario_meshes(cfg)
    macro_mesh, micro_mesh, curve, exterior = meshes
    hom = homogenized_for(cfg, exterior)
    traj = run_two_scale(cfg, meshes=meshes)
    lumped = assemble_lumped_mass(macro_mesh)
    from tsfem.fem import assemble_curve_lumped_mass

    m_curve = assemble_curve_lumped_mass(curve)
    cell_volume = cfg.geometry.cell_volume()
    # receptors bound at each macro node, weighted by the macro mass
    state = traj.final_micro.state
    receptors = (m_curve @ (state.r_f + state.r_b)) / cell_volume
    total_end = hom.theta_e * (lumped @ traj.macro_values[-1]) + lumped @ receptors
    r0_f = traj.species_means["r_f"][0] * m_curve.sum() / cell_volume
    r0_b = traj.species_means["r_b"][0] * m_curve.sum() / cell_volume
    total_start = hom.theta_e * (lumped @ traj.macro_values[0]) + lumped @ (r0_f + r0_b)
    assert total_end == pytest.approx(total_start, rel=1e-10)


def test_macro_only_run_without_a_cell():
    cfg = small_config(
        geometry=GeometrySpec(cell_kind="none"),
        diffusion=DiffusionSpec(d_e=1e-2),
        initial=InitialSpec(preset="zero"),
        bc=BcSpec(kind="dirichlet-threshold", value=1.0, cutoff=5e-2),
        reactions=ReactionSpec(),
    )
    traj = run_two_scale(cfg)
    assert traj.species_means == {}
    assert traj.final_micro is None
    assert set(traj.extrema) == {"c_e"}
    assert traj.extrema["c_e"][1] == 1.0
    assert np.all(traj.coupling == 0.0)


def test_bio_initial_field_anchors():
    cfg = small_config()
    macro_mesh, micro_mesh, curve, _ = build_scenario_meshes(cfg)
    cfg95 = replace(cfg, initial=InitialSpec(preset="bio", amplitude=0.95))
    c_e0, state = initial_fields(cfg95, macro_mesh, curve, micro_mesh)
    assert np.all(c_e0 == 0.0)
    assert np.all(state.r_b == 0.0)
    assert np.all(state.p_a == 0.0)
    origin = int(np.flatnonzero((macro_mesh.nodes == 0.0).all(axis=1))[0])
    # the unit-circle node (0, 1) has cos(pi*(z1 + 4 z2)) = 1, so the
    # free-receptor field peaks at exactly 0.17 * 1.95 above the origin
    top = int(np.flatnonzero(np.abs(curve.nodes - [0.0, 1.0]).max(axis=1) < 1e-12)[0])
    assert state.r_f[top, origin] == pytest.approx(0.3315, abs=1e-15)
    right = int(np.flatnonzero(np.abs(curve.nodes - [1.0, 0.0]).max(axis=1) < 1e-12)[0])
    assert state.r_f[right, origin] == pytest.approx(0.17 * 0.05, abs=1e-15)
    assert state.p_d[right, origin] == pytest.approx(0.065 * 1.95, abs=1e-15)
    # the interior perturbation vanishes on the whole column above x = 0
    np.testing.assert_array_equal(state.c_i[:, origin], 1.0)
    for name in ("r_f", "p_d", "c_i"):
        assert state.species(name).min() >= 0.0


def test_probes_snap_to_nearest_node():
    cfg = small_config(output=OutputSpec(probes=((0.049, 0.051), (0.1, 0.1))))
    traj = run_two_scale(cfg)
    assert traj.probe_points.shape == (2, 2)
    np.testing.assert_allclose(traj.probe_points[0], [0.05, 0.05], atol=1e-12)
    np.testing.assert_allclose(traj.probe_points[1], [0.1, 0.1], atol=1e-12)
    assert traj.probe_values.shape[0] == cfg.time.step_count() + 1


def test_sampling_cadence_includes_endpoints():
    cfg = small_config(time=TimeSpec(tau=1e-3, t_end=1e-2, cadence=3))
    traj = run_two_scale(cfg)
    steps = np.round(traj.times / cfg.time.tau).astype(int)
    assert steps[0] == 0
    assert steps[-1] == 10
    assert list(steps) == [0, 3, 6, 9, 10]


def test_node_state_matches_batched_columns():
    cfg = small_config()
    traj = run_two_scale(cfg)
    two_scale = traj.final_micro
    column = two_scale.node_state(5)
    np.testing.assert_array_equal(column.r_f, two_scale.state.r_f[:, 5])
    np.testing.assert_array_equal(column.c_i, two_scale.state.c_i[:, 5])
    assert column.time_index == two_scale.state.time_index


def test_bio_scenario_configuration():
    cfg = bio_scenario("ellipse")
    assert cfg.reactions.a_e == 100.0
    assert cfg.reactions.a_i == 6e3
    assert cfg.reactions.kappa_i == 1.0
    assert cfg.diffusion.d_i == 10.0
    assert cfg.bc.kind == "dirichlet-threshold"
    assert cfg.bc.cutoff == 5e-2
    assert cfg.geometry.cell_params == (0.26, 5.0)
    assert cfg.initial.preset == "bio"
    assert len(cfg.output.probes) == 3
    assert dict(cfg.nondim_record)["epsilon"] == 1e-3
    assert bio_scenario("dziuk").geometry.cell_kind == "dziuk"
    with pytest.raises(ConfigError, match="geometry"):
        bio_scenario("cube")
