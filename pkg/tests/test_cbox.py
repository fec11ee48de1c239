import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccbounds.cbox import (CBox, CBoxError, InputPrior, Measurement, QuantumEnsemble, SchemaError,
                           bloch_qubit, born_cbox, cbox_from_dict, cbox_to_dict, check_prior,
                           constant_box, ensemble_from_dict, ensemble_to_dict, identity_box,
                           load_any_box, load_cbox, random_box, save_cbox, sequence_digits,
                           sequence_index, validate_cbox)
from conftest import EXAMPLE_BOXES


def test_identity_box_is_valid():
    box = identity_box(3, 2)
    assert box.shape == (3, 3, 2)
    assert validate_cbox(box)
    assert box.prob[1, 1, 0] == 1.0 and box.prob[0, 1, 0] == 0.0


def test_rank_and_emptiness_checked():
    with pytest.raises(CBoxError):
        CBox(np.ones((2, 2)))
    with pytest.raises(CBoxError):
        CBox(np.ones((0, 2, 1)))


def test_validation_reports_worst_index():
    prob = identity_box(2, 2).prob.copy()
    prob[0, 1, 1] = 0.3
    res = validate_cbox(CBox(prob))
    assert not res and res.index == (1, 1) and res.worst == pytest.approx(0.3)
    prob[0, 1, 1] = -0.1
    res = validate_cbox(CBox(prob))
    assert not res and res.reason == "negative entry" and res.index == (0, 1, 1)


def test_validation_tolerance_and_declared_shape():
    prob = identity_box(2, 1).prob.copy()
    prob[0, 0, 0] += 1e-11
    assert validate_cbox(CBox(prob))
    assert not validate_cbox(CBox(prob), tol=1e-12)
    assert not validate_cbox(CBox(prob), shape=(2, 3, 1))


def test_box_is_immutable():
    box = identity_box()
    with pytest.raises(ValueError):
        box.prob[0, 0, 0] = 0.5


def test_prior_checks():
    with pytest.raises(CBoxError):
        InputPrior([0.5, 0.6])
    with pytest.raises(CBoxError):
        InputPrior([1.5, -0.5])
    with pytest.raises(CBoxError):
        check_prior(identity_box(3), InputPrior.uniform(2))


def test_sequence_encoding():
    d = sequence_digits(3, 2)
    assert d.shape == (9, 2)
    assert list(d[5]) == [2, 1]  # 5 = 2 + 1*3
    assert all(sequence_index(row, 3) == k for k, row in enumerate(d))


def test_json_round_trip(tmp_path, rng):
    box = random_box(rng, 3, 2, 2)
    path = tmp_path / "b.json"
    save_cbox(CBox(box.prob, {"name": "r"}), path)
    back = load_cbox(path)
    assert back == box and back.metadata == {"name": "r"}


@pytest.mark.parametrize("mutate,field", [
    (lambda d: d.pop("probabilities"), "probabilities"),
    (lambda d: d.update(num_states=5), "probabilities"),
    (lambda d: d.update(num_outcomes=0), "num_outcomes"),
    (lambda d: d.update(probabilities=[[1.0, 0.0]]), "probabilities"),
    (lambda d: d.update(metadata=[1]), "metadata"),
])
def test_schema_errors_name_the_field(mutate, field):
    doc = cbox_to_dict(identity_box(2, 1))
    mutate(doc)
    with pytest.raises(SchemaError) as info:
        cbox_from_dict(doc)
    assert info.value.field_path.startswith(field)


def test_unnormalized_file_rejected(tmp_path):
    doc = cbox_to_dict(identity_box(2, 1))
    doc["probabilities"][0][0][0] = 0.9
    with pytest.raises(SchemaError):
        cbox_from_dict(doc)


def test_malformed_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(SchemaError):
        load_cbox(p)


def test_born_rule_two_outcome():
    psi = [bloch_qubit(0.0), bloch_qubit(np.pi / 2)]
    ens = QuantumEnsemble(2, tuple(psi), (Measurement.two_outcome(bloch_qubit(0.0)),))
    box = born_cbox(ens)
    assert box.prob[:, 0, 0] == pytest.approx([1.0, 0.0])
    assert box.prob[:, 1, 0] == pytest.approx([0.5, 0.5])


def test_born_rule_basis_is_normalized(rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
    states = tuple(v / np.linalg.norm(v) for v in rng.normal(size=(4, 3)) + 1j * rng.normal(size=(4, 3)))
    box = born_cbox(QuantumEnsemble(3, states, (Measurement.basis(q.T),)))
    assert validate_cbox(box, tol=1e-12)


def test_ensemble_validation():
    with pytest.raises(CBoxError):
        QuantumEnsemble(2, ([1.0, 1.0],), (Measurement.basis(np.eye(2)),))
    with pytest.raises(CBoxError):
        QuantumEnsemble(2, ([1.0, 0.0],), (Measurement.basis([[1, 0], [1, 0]]),))
    with pytest.raises(CBoxError):
        QuantumEnsemble(3, ([1.0, 0.0, 0.0],), (Measurement.basis(np.eye(3)),
                                                 Measurement.two_outcome([0.6, 0.8j, 0.0])))
    with pytest.raises(CBoxError):
        Measurement("povm", np.eye(2))


def test_ensemble_round_trip_with_complex_entries():
    ens = QuantumEnsemble(2, (bloch_qubit(1.0, 0.3),), (Measurement.two_outcome(bloch_qubit(0.4, -1.0)),))
    back = ensemble_from_dict(json.loads(json.dumps(ensemble_to_dict(ens))))
    assert np.allclose(back.states[0], ens.states[0])
    assert born_cbox(back) == born_cbox(ens)


def test_unknown_measurement_type():
    doc = {"dimension": 2, "states": [[[1, 0], [0, 0]]], "measurements": [{"type": "povm"}]}
    with pytest.raises(SchemaError) as info:
        ensemble_from_dict(doc)
    assert info.value.field_path == "measurements[0].type"


@pytest.mark.parametrize("name", EXAMPLE_BOXES)
def test_shipped_examples_load(data_dir, name):
    box = load_any_box(data_dir / name)
    assert validate_cbox(box)


def test_constant_box_shapes():
    box = constant_box([[0.2, 0.5], [0.8, 0.5]], 3)
    assert box.shape == (2, 3, 2)
    assert np.all(box.prob[:, 0] == box.prob[:, 2])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_random_boxes_are_valid(S, A, M, seed):
    assert validate_cbox(random_box(np.random.default_rng(seed), S, A, M))
