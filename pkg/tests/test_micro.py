import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from tsfem.errors import ConfigError, StepError
from tsfem.fem import FactoredSpd
from tsfem.micro import (
    MicroOperators,
    MicroState,
    ReactionSpec,
    SourceTerm,
    build_micro_operators,
    coupling_flux,
    explicit_step_bound,
    micro_step,
    trace_mass_ratio,
)

DIFF0 = {"f": 0.0, "b": 0.0, "d": 0.0, "a": 0.0, "i": 0.0}


def make_ops(curve, mesh, tau=0.1, diffusions=None, decays=None, volume=16.0):
    return build_micro_operators(curve, mesh, diffusions or DIFF0,
                                 decays or {}, tau, volume)


def make_state(ops, rng=None, columns=None, fill=0.0):
    def arr(n):
        shape = (n,) if columns is None else (n, columns)
        if rng is None:
            return np.full(shape, float(fill))
        return rng.uniform(0.0, 1.0, size=shape)

    return MicroState(r_f=arr(ops.curve_count), r_b=arr(ops.curve_count),
                      p_d=arr(ops.curve_count), p_a=arr(ops.curve_count),
                      c_i=arr(ops.bulk_count))


def total_mass(state, ops):
    surface = ops.curve_mass @ (state.r_f + state.r_b + state.p_a)
    return surface + ops.bulk_mass @ state.c_i


def single_node_ops(tau):
    """All masses one, no diffusion: the step reduces to explicit Euler."""
    one = FactoredSpd(sp.identity(1, format="csc"))
    return MicroOperators(system_f=one, system_b=one, system_d=one,
                          system_a=one, system_i=one,
                          trace=np.array([0]), curve_mass=np.ones(1),
                          bulk_mass=np.ones(1), tau=tau, cell_volume=1.0)


def test_zero_dynamics_preserves_state(disc_curve, disc_mesh, rng):
    ops = make_ops(disc_curve, disc_mesh)
    state = make_state(ops, rng)
    out = micro_step(state, 0.7, ReactionSpec(), ops)
    for name in ("r_f", "r_b", "p_d", "p_a", "c_i"):
        np.testing.assert_allclose(out.species(name), state.species(name), rtol=1e-13)
    assert out.time_index == state.time_index + 1


def test_unit_decay_with_unit_step_halves_surface_species(disc_curve, disc_mesh, rng):
    ops = make_ops(disc_curve, disc_mesh, tau=1.0,
                   decays={"f": 1.0, "b": 1.0, "d": 1.0, "a": 1.0})
    state = make_state(ops, rng)
    out = micro_step(state, 0.0, ReactionSpec(), ops)
    for name in ("r_f", "r_b", "p_d", "p_a"):
        np.testing.assert_allclose(out.species(name), state.species(name) / 2.0,
                                   rtol=1e-13)
    np.testing.assert_allclose(out.c_i, state.c_i, rtol=1e-13)


def test_diffusion_preserves_constants(disc_curve, disc_mesh):
    ops = make_ops(disc_curve, disc_mesh,
                   diffusions={"f": 0.3, "b": 0.5, "d": 0.2, "a": 0.9, "i": 1.4})
    state = make_state(ops, fill=3.0)
    out = micro_step(state, 0.0, ReactionSpec(), ops)
    for name in ("r_f", "r_b", "p_d", "p_a", "c_i"):
        np.testing.assert_allclose(out.species(name), 3.0, rtol=1e-12)


def test_single_node_binding_arithmetic():
    ops = single_node_ops(tau=0.1)
    state = MicroState(r_f=np.ones(1), r_b=np.zeros(1), p_d=np.zeros(1),
                       p_a=np.zeros(1), c_i=np.zeros(1))
    out = micro_step(state, 1.0, ReactionSpec(a_e=1.0), ops)
    assert out.r_f[0] == pytest.approx(0.9, rel=1e-15)
    assert out.r_b[0] == pytest.approx(0.1, rel=1e-15)
    assert out.p_d[0] == out.p_a[0] == out.c_i[0] == 0.0


def test_membrane_interior_exchange_balances(disc_curve, disc_mesh):
    ops = make_ops(disc_curve, disc_mesh,
                   diffusions={"f": 0.0, "b": 0.0, "d": 0.0, "a": 0.4, "i": 1.0})
    spec = ReactionSpec(gamma_i=1.0)
    state = make_state(ops, fill=0.0)
    state = MicroState(r_f=state.r_f, r_b=state.r_b, p_d=state.p_d,
                       p_a=np.full(ops.curve_count, 2.0), c_i=state.c_i)
    out = micro_step(state, 0.0, spec, ops)
    lost = ops.curve_mass @ (state.p_a - out.p_a)
    gained = ops.bulk_mass @ (out.c_i - state.c_i)
    assert lost > 0.0
    assert gained == pytest.approx(lost, rel=1e-12)


def test_reaction_transfers_conserve_total_mass(disc_curve, disc_mesh, rng):
    ops = make_ops(disc_curve, disc_mesh, tau=0.01,
                   diffusions={"f": 0.1, "b": 0.2, "d": 0.3, "a": 0.4, "i": 1.0})
    spec = ReactionSpec(a_i=1.5, b_i=0.7, gamma_i=1.0, kappa_i=0.8)
    state = make_state(ops, rng)
    q0 = total_mass(state, ops)
    for _ in range(100):
        state = micro_step(state, 0.0, spec, ops)
    assert total_mass(state, ops) == pytest.approx(q0, rel=1e-10)


def test_receptor_total_conserved_under_binding(disc_curve, disc_mesh, rng):
    ops = make_ops(disc_curve, disc_mesh, tau=0.05)
    spec = ReactionSpec(a_e=2.0, b_e=0.5)
    state = make_state(ops, rng)
    c_e = 0.8
    receptors = ops.curve_mass @ (state.r_f + state.r_b)
    free = ops.curve_mass @ state.r_f
    flux = coupling_flux(state, c_e, spec, ops)
    out = micro_step(state, c_e, spec, ops)
    assert ops.curve_mass @ (out.r_f + out.r_b) == pytest.approx(receptors, rel=1e-12)
    expected_free = free - ops.tau * ops.cell_volume * flux
    assert ops.curve_mass @ out.r_f == pytest.approx(expected_free, rel=1e-12)


def test_coupling_flux_closed_form(disc_curve, disc_mesh):
    ops = make_ops(disc_curve, disc_mesh, volume=16.0)
    spec = ReactionSpec(a_e=3.0, b_e=0.25)
    state = make_state(ops, fill=0.0)
    state = MicroState(r_f=np.full(ops.curve_count, 2.0),
                       r_b=np.full(ops.curve_count, 4.0),
                       p_d=state.p_d, p_a=state.p_a, c_i=state.c_i)
    length = disc_curve.total_length()
    expected = length / 16.0 * (3.0 * 0.5 * 2.0 - 0.25 * 4.0)
    assert coupling_flux(state, 0.5, spec, ops) == pytest.approx(expected, rel=1e-12)

    zero = make_state(ops, fill=0.0)
    assert coupling_flux(zero, 0.5, spec, ops) == 0.0
    assert coupling_flux(state, 0.5, ReactionSpec(), ops) == 0.0


@settings(max_examples=60, deadline=None)
@given(a_e=st.floats(0.0, 5.0), b_e=st.floats(0.0, 5.0),
       a_i=st.floats(0.0, 5.0), b_i=st.floats(0.0, 5.0),
       gamma=st.floats(0.0, 5.0), kappa=st.floats(0.0, 5.0),
       c_e=st.floats(0.0, 2.0), seed=st.integers(0, 2**31 - 1))
def test_nonnegativity_under_step_bound(disc_curve, disc_mesh,
                                        a_e, b_e, a_i, b_i, gamma, kappa, c_e, seed):
    spec = ReactionSpec(a_e=a_e, b_e=b_e, a_i=a_i, b_i=b_i,
                        gamma_i=gamma, kappa_i=kappa)
    sample = np.random.default_rng(seed)
    probe = make_ops(disc_curve, disc_mesh, tau=1.0)
    ratio = trace_mass_ratio(probe)
    tau = 0.999 * explicit_step_bound(spec, c_e, 1.0, exchange_ratio=ratio)
    if not np.isfinite(tau):
        tau = 1.0
    ops = make_ops(disc_curve, disc_mesh, tau=tau,
                   diffusions={"f": 0.1, "b": 0.1, "d": 0.1, "a": 0.1, "i": 1.0})
    state = make_state(ops, sample)
    out = micro_step(state, c_e, spec, ops)
    for name in ("r_f", "r_b", "p_d", "p_a", "c_i"):
        assert out.species(name).min() >= -1e-12, name


def test_batched_columns_permute_bit_exactly(disc_curve, disc_mesh, rng):
    ops = make_ops(disc_curve, disc_mesh,
                   diffusions={"f": 0.1, "b": 0.2, "d": 0.3, "a": 0.4, "i": 1.0})
    spec = ReactionSpec(a_e=1.0, b_e=0.5, a_i=2.0, b_i=0.3,
                        gamma_i=0.9, kappa_i=0.4)
    state = make_state(ops, rng, columns=6)
    c_e = rng.uniform(0.0, 1.0, size=6)
    out = micro_step(state, c_e, spec, ops)

    perm = np.array([4, 2, 0, 5, 1, 3])
    shuffled = MicroState(r_f=state.r_f[:, perm], r_b=state.r_b[:, perm],
                          p_d=state.p_d[:, perm], p_a=state.p_a[:, perm],
                          c_i=state.c_i[:, perm])
    out_perm = micro_step(shuffled, c_e[perm], spec, ops)
    for name in ("r_f", "r_b", "p_d", "p_a", "c_i"):
        assert np.array_equal(out_perm.species(name), out.species(name)[:, perm]), name

    flux = coupling_flux(state, c_e, spec, ops)
    flux_perm = coupling_flux(shuffled, c_e[perm], spec, ops)
    assert np.array_equal(flux_perm, flux[perm])


def test_batch_agrees_with_per_column_steps(disc_curve, disc_mesh, rng):
    ops = make_ops(disc_curve, disc_mesh,
                   diffusions={"f": 0.1, "b": 0.2, "d": 0.3, "a": 0.4, "i": 1.0})
    spec = ReactionSpec(a_e=1.0, b_e=0.5, a_i=2.0, b_i=0.3,
                        gamma_i=0.9, kappa_i=0.4)
    state = make_state(ops, rng, columns=3)
    c_e = rng.uniform(0.0, 1.0, size=3)
    out = micro_step(state, c_e, spec, ops)
    for j in range(3):
        column = MicroState(r_f=state.r_f[:, j], r_b=state.r_b[:, j],
                            p_d=state.p_d[:, j], p_a=state.p_a[:, j],
                            c_i=state.c_i[:, j])
        single = micro_step(column, float(c_e[j]), spec, ops)
        for name in ("r_f", "r_b", "p_d", "p_a", "c_i"):
            np.testing.assert_allclose(out.species(name)[:, j],
                                       single.species(name), rtol=1e-13)


def test_thread_count_does_not_change_results(disc_curve, disc_mesh, rng, monkeypatch):
    ops = make_ops(disc_curve, disc_mesh,
                   diffusions={"f": 0.1, "b": 0.2, "d": 0.3, "a": 0.4, "i": 1.0})
    spec = ReactionSpec(a_e=1.0, b_e=0.5, gamma_i=0.9, kappa_i=0.4)
    state = make_state(ops, rng, columns=4)
    c_e = rng.uniform(0.0, 1.0, size=4)
    monkeypatch.delenv("TSFEM_THREADS", raising=False)
    serial = micro_step(state, c_e, spec, ops)
    monkeypatch.setenv("TSFEM_THREADS", "4")
    threaded = micro_step(state, c_e, spec, ops)
    for name in ("r_f", "r_b", "p_d", "p_a", "c_i"):
        assert np.array_equal(serial.species(name), threaded.species(name))


def test_overflowing_load_names_species_and_node(disc_curve, disc_mesh):
    ops = make_ops(disc_curve, disc_mesh)
    state = make_state(ops, fill=0.0)
    state.r_f[3] = np.inf
    with pytest.raises(StepError, match=r"species r_f: .*node 3"):
        micro_step(state, 1.0, ReactionSpec(a_e=1.0), ops)


def test_source_presets():
    u = np.array([1.0, 2.0, -3.0])
    np.testing.assert_array_equal(SourceTerm.zero()(u), np.zeros(3))
    np.testing.assert_array_equal(SourceTerm.constant(2.5)(u), np.full(3, 2.5))
    np.testing.assert_array_equal(SourceTerm.linear(-0.5)(u), -0.5 * u)
    with pytest.raises(ConfigError, match="source kind"):
        SourceTerm("cubic", 1.0)


def test_constant_source_accumulates(disc_curve, disc_mesh):
    ops = make_ops(disc_curve, disc_mesh, tau=0.25)
    spec = ReactionSpec(source_f=SourceTerm.constant(2.0))
    state = make_state(ops, fill=0.0)
    out = micro_step(state, 0.0, spec, ops)
    np.testing.assert_allclose(out.r_f, 0.5, rtol=1e-13)


def test_validation_rejects_bad_inputs(disc_curve, disc_mesh):
    with pytest.raises(ConfigError, match="rate a_e"):
        ReactionSpec(a_e=-1.0)
    with pytest.raises(ConfigError, match="tau"):
        make_ops(disc_curve, disc_mesh, tau=0.0)
    with pytest.raises(ConfigError, match="diffusion"):
        build_micro_operators(disc_curve, disc_mesh, {"f": 0.1}, {}, 0.1, 16.0)
    with pytest.raises(ConfigError, match="unknown diffusion keys"):
        build_micro_operators(disc_curve, disc_mesh, {**DIFF0, "x": 1.0}, {}, 0.1, 16.0)
    with pytest.raises(ConfigError, match=r"diffusion\['i'\]"):
        build_micro_operators(disc_curve, disc_mesh, {**DIFF0, "i": -2.0}, {}, 0.1, 16.0)
    with pytest.raises(ConfigError, match="cell volume"):
        make_ops(disc_curve, disc_mesh, volume=0.0)

    ops = make_ops(disc_curve, disc_mesh)
    bad = MicroState(r_f=np.zeros(3), r_b=np.zeros(3), p_d=np.zeros(3),
                     p_a=np.zeros(3), c_i=np.zeros(ops.bulk_count))
    with pytest.raises(ConfigError, match="species r_f"):
        micro_step(bad, 0.0, ReactionSpec(), ops)


def test_decays_may_come_from_reaction_spec(disc_curve, disc_mesh, rng):
    spec = ReactionSpec(d_f=1.0, d_b=1.0, d_d=1.0, d_a=1.0)
    ops = build_micro_operators(disc_curve, disc_mesh, DIFF0, spec, 1.0, 16.0)
    state = make_state(ops, rng)
    out = micro_step(state, 0.0, spec, ops)
    np.testing.assert_allclose(out.r_b, state.r_b / 2.0, rtol=1e-13)
