import math

import numpy as np
import pytest

import suta


@pytest.fixture(scope="module")
def trained():
    corpus = suta.generate_corpus(count=30, seed=3)
    model, losses = suta.train_source(suta.init_model(seed=0), corpus, epochs=4)
    assert len(losses) == 4
    return model


def test_losses_and_decoding():
    logits = np.array([[math.log(4.0), 0.0]])
    p = suta.softmax_temperature(logits, 1.0)
    assert p[0, 0] == pytest.approx(0.8)
    assert suta.softmax_temperature(logits, 2.0)[0, 0] == pytest.approx(2.0 / 3.0)

    rng = np.random.default_rng(0)
    o = rng.normal(size=(7, suta.VOCAB_SIZE))
    v = suta.combined_loss(o, alpha=0.3, temperature=2.5)
    assert v["total"] == pytest.approx(0.3 * v["entropy"] + 0.7 * v["mcc"])

    tokens = suta.encode("ab c")
    assert len(tokens) == 4 and tokens[:2] == [1, 2] and tokens[3] == 3
    path = np.full((4, suta.VOCAB_SIZE), -5.0)
    for t, k in enumerate([1, 1, suta.BLANK, 2]):
        path[t, k] = 5.0
    assert suta.greedy_decode(path) == "AB"


def test_wer():
    r = suta.wer("A B", "B X")
    assert (r["substitutions"], r["deletions"], r["insertions"]) == (2, 0, 0)
    assert suta.werr(0.312, 0.25) == pytest.approx(0.1987, rel=1e-3)
    with pytest.raises(suta.DataError):
        suta.wer("", "A")
    with pytest.raises(suta.DataError):
        suta.werr(0.0, 0.1)


def test_corpus_round_trip(tmp_path):
    corpus = suta.generate_corpus(count=5, seed=1)
    assert corpus[0].id == "utt-0"
    assert corpus[0].features.shape[1] == 16
    noisy = suta.add_gaussian_noise(corpus, 0.3, 7)
    assert noisy[0].domain_tag.endswith("+delta=0.3")
    assert noisy[0].transcript == corpus[0].transcript
    path = tmp_path / "c.bin"
    suta.save_corpus(path, corpus)
    loaded = suta.load_corpus(path)
    assert [u.id for u in loaded] == [u.id for u in corpus]
    assert np.array_equal(loaded[2].features, corpus[2].features)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(suta.FormatError):
        suta.load_corpus(path)


def test_adaptation(trained, tmp_path):
    u = suta.add_gaussian_noise(suta.generate_corpus(count=2, seed=4), 0.4, 1)[0]
    before = trained.parameter_hash()
    out = suta.adapt(trained, u, iterations=3, lr=1e-3)
    assert len(out["trace"]) == 4
    assert out["hypothesis"] == out["trace"][-1]["hypothesis"]
    assert trained.parameter_hash() == before
    assert out["model"].parameter_hash() != before

    none = suta.adapt(trained, u, method="none")
    assert none["hypothesis"] == suta.greedy_decode(trained.logits(u.features))
    with pytest.raises(suta.ContractViolation):
        suta.adapt(trained, u, method="sdpl", params="all")
    with pytest.raises(ValueError):
        suta.adapt(trained, u, alpha=1.5)

    path = tmp_path / "m.json"
    trained.save(path)
    assert suta.Model.load(path).parameter_hash() == before


def test_run_corpus_jobs_agree(trained):
    corpus = suta.generate_corpus(count=6, seed=5, delta=0.4)
    one = suta.run_corpus(trained, corpus, iterations=2, lr=1e-3, jobs=1)
    three = suta.run_corpus(trained, corpus, iterations=2, lr=1e-3, jobs=3)
    assert one == three
    assert [r["id"] for r in one] == [u.id for u in corpus]
