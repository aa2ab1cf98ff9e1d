import math

import pytest

import secla


def test_loss_oracles():
    assert secla.contrastive_fn([[1, 0], [0, 1]]) == pytest.approx(-math.log(math.e / (math.e + 1)), abs=1e-9)
    assert secla.contrastive_nf([[0.3] * 4] * 4) == pytest.approx(math.log(4), abs=1e-9)
    a = [[0.5, 0.2], [0.4, 0.3]]
    assert secla.dense_similarity(a, "face_to_name") == pytest.approx(0.45, abs=1e-12)
    assert secla.dense_similarity(a, "name_to_face") == pytest.approx(0.4, abs=1e-12)
    assert secla.agreement_loss([[0.4, 0], [0, 0.2]], [[0.1, 0], [0, 0.2]]) == pytest.approx(0.045)
    assert secla.precision_recall_f1(0.7696, 0.8511)[2] == pytest.approx(0.8083, abs=1e-4)


def test_align_pair():
    links = secla.align_pair([[0.1, 0.9]], ["Alice", "NONAME"])
    assert {(l["face"], l["name"]) for l in links} == {(0, "NONAME"), (None, 0)}


def test_errors_map_to_python_exceptions():
    with pytest.raises(secla.ContractError):
        secla.dense_similarity([], "face_to_name")
    with pytest.raises(ValueError):
        secla.dense_similarity([[1.0]], "sideways")
    with pytest.raises(secla.ValidationError):
        secla.load_dataset("/nonexistent/data.jsonl")


def test_train_align_evaluate(tmp_path):
    ds = secla.synth(pairs=40, identities=5, min_faces=1, max_faces=1, min_names=1, max_names=1,
                     face_dim=8, name_dim=6, seed=3)
    assert len(ds) == 40
    path = tmp_path / "data.jsonl"
    ds.save(path)
    ds = secla.load_dataset(path)

    config = secla.TrainConfig()
    config.epochs = 3
    config.hidden = [16, 8]
    config.proj_dim = 4
    config.seed = 1
    model, log = secla.train(ds, config)
    assert len(log) == 3
    assert all(math.isfinite(e["total"]) for e in log)

    model.save(tmp_path / "model.json")
    again = secla.load_model(tmp_path / "model.json")
    assert again.similarity([[0.1] * 8], [[0.2] * 6]) == model.similarity([[0.1] * 8], [[0.2] * 6])

    preds = model.align(ds)
    assert len(preds) == 40
    metrics = secla.evaluate(preds, ds)
    assert 0.0 <= metrics["f1"] <= 1.0
    assert secla.evaluate(ds.ground_truth(), ds)["f1"] == 1.0

    # Same seed, same model.
    model2, _ = secla.train(ds, config)
    assert model2.align(ds) == preds


def test_two_stage_modes():
    ds = secla.synth(pairs=40, identities=5, max_faces=2, max_names=3, face_dim=8, name_dim=6, seed=4)
    config = secla.TrainConfig()
    config.stage1_epochs = 1
    config.stage2_epochs = 1
    config.hidden = [8, 8]
    config.proj_dim = 4
    for mode in ("pipeline", "secla-b"):
        model, log = secla.train(ds, config, mode=mode, easy_keep_null=True)
        assert len(log) == 2
        assert model.proj_dim == 4


def test_gradcheck():
    assert secla.gradcheck(instances=2)["passed"]
    assert not secla.gradcheck(instances=2, inject_bug=True)["passed"]
