import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcap.channels import ChannelSpec
from qcap.circuit import GateKind, basis_embed, measurement_probabilities, run_circuit
from qcap.metrics import coherent_information, mutual_information
from qcap.optim import TrainConfig, train
from qcap.qmath import PreconditionError, partial_trace, von_neumann_entropy
from qcap.tasks import (
    ModelParameters,
    Setting,
    TaskSpec,
    build_model,
    build_pooling_layer,
    conditional_distribution,
    ghz_state,
    task_diagnostics,
)

from conftest import bell_state, h2, random_density

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def classical(kind="bit_flip", p=0.0, **kw):
    return TaskSpec(Setting.CLASSICAL, ChannelSpec(kind, p), **kw)


def superdense_params(model):
    """Bell pair from the entangler, conditional RY(pi) and RZ(pi), Bell-basis decoder."""
    mp = model.split(np.zeros(model.n_params))
    mp.lambda_[4] = np.pi / 2
    mp.theta[4] = np.pi
    mp.theta[9] = np.pi
    mp.phi[7] = -np.pi / 2
    return model.join(mp)


def ea_spec(kind, p, idler=0.0):
    return TaskSpec(
        Setting.EA_CLASSICAL,
        ChannelSpec(kind, p),
        n_message_bits=2,
        entangler_layers=1,
        decoder_layers=2,
        idler_noise_p=idler,
    )


# ------------------------------------------------------------- diagnostics


def test_valid_specs_have_no_diagnostics():
    assert task_diagnostics(classical()) == []
    assert task_diagnostics(ea_spec("phase_flip", 0.1)) == []
    assert task_diagnostics(TaskSpec("quantum", ChannelSpec("depolarizing", 0.1), ghz_size=5)) == []


@pytest.mark.parametrize(
    "spec",
    [
        classical(pooling=True),
        classical(n_message_bits=2, n_channel_uses=1),
        classical(idler_noise_p=0.1),
        TaskSpec("ea_classical", ChannelSpec("bit_flip", 0.1), n_message_bits=1),
        TaskSpec("quantum", ChannelSpec("bit_flip", 0.1), ghz_size=1),
    ],
)
def test_inconsistent_specs_are_rejected(spec):
    assert task_diagnostics(spec)
    with pytest.raises(PreconditionError):
        build_model(spec)


def test_spec_round_trips_through_dict():
    spec = TaskSpec("quantum", ChannelSpec("amplitude_damping", 0.0, 0.3), ghz_size=3, idler_noise_p=0.05)
    assert TaskSpec.from_dict(spec.to_dict()) == spec


# ---------------------------------------------------------------- classical


@pytest.mark.parametrize("p", [0.0, 0.1, 0.3, 0.5])
def test_trivial_code_is_binary_symmetric(p):
    m = build_model(classical(p=p, use_encoder=False, decoder_layers=1))
    cond = conditional_distribution(m, np.zeros(m.n_params))
    np.testing.assert_allclose(cond, [[1 - p, p], [p, 1 - p]], atol=1e-12)


@pytest.mark.parametrize("p", [0.1, 0.3, 0.5, 0.9])
def test_x_basis_code_survives_bit_flip(p):
    m = build_model(classical(p=p, encoder_layers=1, decoder_layers=1))
    mp = m.split(np.zeros(m.n_params))
    mp.theta[1] = np.pi / 2
    mp.phi[1] = -np.pi / 2
    cond = conditional_distribution(m, m.join(mp))
    np.testing.assert_allclose(np.diag(cond), [1, 1], atol=1e-12)


def test_pooling_structure():
    m = build_model(classical(p=0.1, n_channel_uses=3, pooling=True))
    assert m.n_channel_insertions == 3
    assert m.readout_wires == [2]
    assert m.layout["pi"].stop - m.layout["pi"].start == 12


def test_repetition_tiles_message():
    m = build_model(classical(n_message_bits=2, n_channel_uses=3))
    assert [np.argmax(np.diag(p.rho0).real) for p in m.programs] == [0b000, 0b010, 0b101, 0b111]


def test_noiseless_identity_model_is_identity_matrix():
    m = build_model(classical(n_message_bits=2, n_channel_uses=2, use_encoder=False, decoder_layers=0))
    np.testing.assert_allclose(conditional_distribution(m, np.zeros(m.n_params)), np.eye(4), atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(seeds, st.sampled_from(["bit_flip", "depolarizing", "amplitude_damping"]), st.floats(0, 1))
def test_conditional_distribution_is_row_stochastic(seed, kind, p):
    spec = TaskSpec("classical", ChannelSpec(kind, p, 0.5), n_message_bits=2, n_channel_uses=2, encoder_layers=1, decoder_layers=1)
    m = build_model(spec)
    cond = conditional_distribution(m, np.random.default_rng(seed).uniform(-np.pi, np.pi, m.n_params))
    assert cond.shape == (4, 4)
    np.testing.assert_allclose(cond.sum(axis=1), 1, atol=1e-9)
    assert cond.min() >= 0


def test_conditional_distribution_batched(rng):
    m = build_model(classical(p=0.2, encoder_layers=1))
    batch = rng.uniform(-1, 1, size=(3, m.n_params))
    out = conditional_distribution(m, batch)
    for b in range(3):
        np.testing.assert_allclose(out[b], conditional_distribution(m, batch[b]), atol=1e-13)


def test_conditional_distribution_rejects_quantum():
    m = build_model(TaskSpec("quantum", ChannelSpec("phase_flip", 0.1)))
    with pytest.raises(PreconditionError):
        conditional_distribution(m, np.zeros(m.n_params))


# ------------------------------------------------------------------ pooling


def test_pooling_layer_counts():
    pool = build_pooling_layer(2, 1)
    kinds = [g.kind for g in pool.gates]
    assert kinds == [GateKind.ROT3, GateKind.CONTROLLED_ROT3]
    assert pool.n_params == 6
    assert pool.gates[1].wires == (0, 1)


def test_pooling_identity_keeps_marginal(rng):
    rho = random_density(3, rng)
    pool = build_pooling_layer(3, 2)
    out = run_circuit(rho, pool, np.zeros(pool.n_params))
    np.testing.assert_allclose(measurement_probabilities(out, [2]), measurement_probabilities(rho, [2]), atol=1e-12)


def test_pooling_rejects_single_wire():
    with pytest.raises(PreconditionError):
        build_pooling_layer(1)


def test_pooled_repetition_beats_single_use():
    m = build_model(classical(p=0.2, n_channel_uses=3, pooling=True, use_encoder=False, decoder_layers=1))
    errors = []
    for seed in range(2):
        r = train(m, TrainConfig(steps=200, loss="cross_entropy", seed=seed, init_scale=1.0))
        cond = conditional_distribution(m, r.flat_params)
        errors.append(0.5 * (cond[0, 1] + cond[1, 0]))
    assert min(errors) < 0.2


# ----------------------------------------------------------------------- EA


def test_ea_layout():
    m = build_model(TaskSpec("ea_classical", ChannelSpec("bit_flip", 0.1), n_message_bits=4, idler_noise_p=0.05))
    assert m.n_qubits == 4
    assert m.transmitted_wires == [0, 1]
    assert m.n_channel_insertions == 2
    noise_wires = sorted(w for _, _, w in m.programs[0].noise)
    assert noise_wires == [0, 1, 2, 3]
    assert m.layout["theta"].stop - m.layout["theta"].start == 24


def test_superdense_noiseless_is_two_bits():
    m = build_model(ea_spec("phase_flip", 0.0))
    cond = conditional_distribution(m, superdense_params(m))
    np.testing.assert_allclose(np.sort(cond, axis=1)[:, -1], 1.0, atol=1e-12)
    assert mutual_information(cond) == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("p", [0.05, 0.1, 0.2, 0.4])
def test_superdense_phase_flip_rate(p):
    m = build_model(ea_spec("phase_flip", p))
    assert mutual_information(conditional_distribution(m, superdense_params(m))) == pytest.approx(2 - h2(p), abs=1e-12)


def test_idler_noise_lowers_superdense_rate():
    rates = []
    for idler in (0.0, 0.05, 0.1):
        m = build_model(ea_spec("phase_flip", 0.1, idler))
        rates.append(mutual_information(conditional_distribution(m, superdense_params(m))))
    assert rates[0] > rates[1] > rates[2]


# ------------------------------------------------------------------ quantum


def test_quantum_identity_channel():
    m = build_model(TaskSpec("quantum", ChannelSpec("bit_flip", 0.0)))
    out = m.output_states(np.zeros(m.n_params))[0]
    np.testing.assert_allclose(out, bell_state(), atol=1e-12)
    assert coherent_information(out, m.transmitted_wires) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("p", [0.05, 0.1, 0.2])
def test_quantum_dephasing_identity_code(p):
    m = build_model(TaskSpec("quantum", ChannelSpec("phase_flip", p)))
    out = m.output_states(np.zeros(m.n_params))[0]
    assert coherent_information(out, [1]) == pytest.approx(1 - h2(p), abs=1e-12)


def test_quantum_ghz3_structure():
    m = build_model(TaskSpec("quantum", ChannelSpec("depolarizing", 0.1), ghz_size=3))
    assert m.n_channel_insertions == 2
    assert m.output_states(np.zeros(m.n_params))[0].shape == (8, 8)


def test_idler_noise_hits_reference_only():
    m = build_model(TaskSpec("quantum", ChannelSpec("phase_flip", 0.1), idler_noise_p=0.05))
    assert m.n_channel_insertions == 1
    assert sorted(w for _, _, w in m.programs[0].noise) == [0, 1]


def test_ghz_states():
    np.testing.assert_allclose(ghz_state(2), bell_state(), atol=1e-15)
    g3 = ghz_state(3)
    assert np.linalg.matrix_rank(g3) == 1
    assert von_neumann_entropy(g3) == pytest.approx(0.0, abs=1e-12)
    for w in range(3):
        np.testing.assert_allclose(partial_trace(g3, [w]), np.eye(2) / 2, atol=1e-12)
    g5 = ghz_state(5)
    assert g5.shape == (32, 32)
    assert np.trace(g5).real == pytest.approx(1.0)
    with pytest.raises(PreconditionError):
        ghz_state(1)


# ------------------------------------------------------------------- params


def test_split_join_round_trip(rng):
    m = build_model(ea_spec("bit_flip", 0.1))
    flat = rng.normal(size=m.n_params)
    mp = m.split(flat)
    assert isinstance(mp, ModelParameters)
    np.testing.assert_array_equal(m.join(mp), flat)
    assert set(mp.as_dict()) == {"theta", "phi", "lambda", "pi"}
    mp.theta = mp.theta[:-1]
    with pytest.raises(PreconditionError):
        m.join(mp)


def test_output_states_batched_shape(rng):
    m = build_model(classical(p=0.1, n_message_bits=2, n_channel_uses=2, encoder_layers=1))
    out = m.output_states(rng.normal(size=(3, m.n_params)))
    assert out.shape == (3, 4, 4, 4)
    m = build_model(ea_spec("bit_flip", 0.1))
    out = m.output_states(rng.normal(size=(3, m.n_params)))
    assert out.shape == (3, 4, 4, 4)


def test_basis_embed_used_for_messages():
    m = build_model(classical(n_message_bits=1, n_channel_uses=1))
    np.testing.assert_array_equal(m.programs[1].rho0, basis_embed("1", 1))
