"""Model loading, validation, and forward-pass checks."""

import json

import numpy as np
import pytest

from oracle_adapter.model import (
    ModelError,
    ServedModel,
    builtin_model,
    load_model,
    model_from_weights,
)


def pair_doc():
    return {
        "version": 1,
        "input_dim": 2,
        "num_classes": 2,
        "layers": [
            {
                "activation": "identity",
                "weights": [[1.0, 2.0], [1.0, 2.0]],
                "bias": [4.0, 4.0],
            }
        ],
    }


def test_equal_logits_give_exact_half_split():
    model = model_from_weights(json.dumps(pair_doc()))
    probs = model.probabilities([0.25, 0.5])
    assert probs.tolist() == [0.5, 0.5]
    assert model.label(probs) == 0


def test_identity_layer_matches_hand_softmax():
    doc = pair_doc()
    doc["layers"][0]["bias"] = [0.0, float(np.log(3.0))]
    model = model_from_weights(json.dumps(doc))
    # Logits differ by ln 3, so the class odds are 1:3.
    probs = model.probabilities([0.0, 0.0])
    assert abs(probs[0] - 0.25) < 1e-12
    assert abs(probs[1] - 0.75) < 1e-12


def test_tanh_stack_stays_a_distribution():
    rng = np.random.default_rng(11)
    doc = {
        "version": 1,
        "input_dim": 3,
        "num_classes": 4,
        "layers": [
            {
                "activation": "tanh",
                "weights": rng.normal(size=(5, 3)).tolist(),
                "bias": rng.normal(size=5).tolist(),
            },
            {
                "activation": "identity",
                "weights": rng.normal(size=(4, 5)).tolist(),
                "bias": rng.normal(size=4).tolist(),
            },
        ],
    }
    model = model_from_weights(json.dumps(doc))
    for _ in range(50):
        probs = model.probabilities(rng.uniform(-2, 2, size=3))
        assert probs.shape == (4,)
        assert abs(float(probs.sum()) - 1.0) < 1e-9
        assert np.all(probs > 0)


def test_weight_validation_rejects_bad_documents():
    cases = []

    doc = pair_doc()
    doc["version"] = 2
    cases.append((json.dumps(doc), "version"))

    doc = pair_doc()
    del doc["input_dim"]
    cases.append((json.dumps(doc), "input_dim"))

    doc = pair_doc()
    doc["layers"] = []
    cases.append((json.dumps(doc), "layers"))

    doc = pair_doc()
    doc["layers"][0]["bias"] = [4.0]
    cases.append((json.dumps(doc), "bias"))

    doc = pair_doc()
    doc["layers"][0]["activation"] = "relu"
    cases.append((json.dumps(doc), "activation"))

    doc = pair_doc()
    doc["input_dim"] = 3
    cases.append((json.dumps(doc), "input_dim"))

    doc = pair_doc()
    doc["num_classes"] = 5
    cases.append((json.dumps(doc), "num_classes"))

    doc = pair_doc()
    doc["layers"][0]["weights"] = [[1.0, float("nan")], [1.0, 2.0]]
    cases.append((json.dumps(doc), "finite"))

    cases.append(("{broken", "JSON"))
    cases.append(("[1, 2]", "object"))

    for payload, hint in cases:
        with pytest.raises(ModelError) as err:
            model_from_weights(payload)
        assert hint.lower() in str(err.value).lower()


def test_layers_must_chain():
    doc = pair_doc()
    doc["layers"].append(
        {
            "activation": "identity",
            "weights": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            "bias": [0.0, 0.0],
        }
    )
    with pytest.raises(ModelError, match="chain"):
        model_from_weights(json.dumps(doc))


def test_builtin_labels_split_between_clusters():
    model = builtin_model("blobs-2d")
    assert (model.input_dim, model.num_classes) == (2, 2)
    near_first = model.probabilities([0.35, 0.42])
    near_second = model.probabilities([0.63, 0.58])
    assert model.label(near_first) == 0
    assert model.label(near_second) == 1
    assert abs(float(near_first.sum()) - 1.0) < 1e-9

    with pytest.raises(ModelError, match="unknown builtin"):
        builtin_model("blobs-3d")


def test_load_model_resolves_builtin_path_and_missing(tmp_path):
    assert load_model("blobs-2d").name == "blobs-2d"

    path = tmp_path / "pair.json"
    path.write_text(json.dumps(pair_doc()))
    model = load_model(str(path))
    assert model.name == "pair.json"
    assert model.input_dim == 2

    with pytest.raises(ModelError, match="neither a builtin"):
        load_model(str(tmp_path / "missing.json"))


def test_predict_contract_is_enforced():
    bad_shape = ServedModel(
        predict=lambda x: np.zeros(3), input_dim=2, num_classes=2, name="bad"
    )
    with pytest.raises(ModelError, match="shape"):
        bad_shape.probabilities([0.1, 0.2])

    bad_sum = ServedModel(
        predict=lambda x: np.array([0.9, 0.9]), input_dim=2, num_classes=2, name="bad"
    )
    with pytest.raises(ModelError, match="sum"):
        bad_sum.probabilities([0.1, 0.2])

    negative = ServedModel(
        predict=lambda x: np.array([1.2, -0.2]), input_dim=2, num_classes=2, name="bad"
    )
    with pytest.raises(ModelError, match="invalid"):
        negative.probabilities([0.1, 0.2])
