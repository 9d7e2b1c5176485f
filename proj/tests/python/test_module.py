import math

import pytest

import helpd


def test_preset_is_a_plain_dict():
    p = helpd.desk_preset(3)
    assert p["corpus"]["seed"] == 3
    assert p["model"]["prefix_len"] == 8
    assert p["decode"]["strategy"] == "beam"


def test_extract_and_score():
    assert helpd.extract_objects("a woman eats a hot dog.") == ["person", "hot dog"]
    assert helpd.extract_objects("nothing here") == []
    assert helpd.mock_score("a cat.", ["cat"]) == 1.0
    # half coverage, no hallucination
    assert helpd.mock_score("a cat.", ["cat", "dog"]) == 0.5
    assert helpd.map_answer("Yes, there is.") == (True, False)
    assert helpd.map_answer("maybe") == (False, True)


def test_corpus_generation_is_deterministic(small, tmp_path):
    a = helpd.Corpus.generate(small, seed=2, save_to=tmp_path / "c")
    b = helpd.Corpus.generate(small, seed=2)
    assert a.n_scenes == 140
    assert a.scene_ids("heldout") == b.scene_ids("heldout")
    ids = a.scene_ids("train")
    assert [a.caption(i) for i in ids] == [b.caption(i) for i in ids]
    back = helpd.Corpus.load(tmp_path / "c")
    assert [back.caption(i) for i in ids] == [a.caption(i) for i in ids]
    text = a.caption(ids[0])
    assert a.detokenize(a.tokenize(text)) == text


def test_reference_captions_have_no_hallucination(small):
    c = helpd.Corpus.generate(small, seed=1)
    ids = c.scene_ids("heldout")
    rep = helpd.chair([(i, c.caption(i)) for i in ids], {i: c.objects(i) for i in ids})
    assert rep["instance_ratio"] == 0.0
    assert rep["sentence_ratio"] == 0.0
    assert rep["n_captions"] == len(ids)


def test_chair_counts_a_hallucinated_mention():
    rep = helpd.chair([(0, "a cat and a dog."), (1, "a fork.")], {0: ["cat"], 1: ["fork"]})
    assert rep["instance_ratio"] == pytest.approx(1 / 3)
    assert rep["sentence_ratio"] == pytest.approx(1 / 2)


def test_log_probs_normalise(small):
    c = helpd.Corpus.generate(small, seed=0)
    m = helpd.Model(small, seed=0)
    toks = c.tokenize(c.caption(0))
    rows = m.log_probs(c, 0, toks)
    assert len(rows) == len(toks)
    for r in rows:
        assert math.isclose(sum(math.exp(v) for v in r), 1.0, rel_tol=1e-9)


def test_train_decode_pope_end_to_end(small, tmp_path):
    c = helpd.Corpus.generate(small, seed=0)
    m1 = helpd.Model(small, seed=0)
    m2 = helpd.Model(small, seed=0)
    log1 = helpd.train(m1, c, small, seed=0)
    log2 = helpd.train(m2, c, small, seed=0)
    assert log1 == log2
    assert len(log1) == 24
    assert {r["phase"] for r in log1} == {"ce-only", "combined"}
    assert log1[-1]["l_ce"] < log1[0]["l_ce"]

    small["decode"]["strategy"] = "vep"
    caps = helpd.describe(m1, c, "heldout", small)
    assert len(caps) == 20
    assert all(1 <= x["n_tokens"] <= 12 for x in caps)

    m1.save(tmp_path / "m.bin")
    again = helpd.describe(helpd.Model.load(tmp_path / "m.bin"), c, "heldout", small)
    assert again == caps

    rep = helpd.pope(m1, c, small)
    assert rep["n"] == rep["tp"] + rep["fp"] + rep["tn"] + rep["fn"]
    assert 0.0 <= rep["f1"] <= 1.0


def test_bad_config_raises(small):
    c = helpd.Corpus.generate(small, seed=0)
    m = helpd.Model(small, seed=0)
    small["decode"]["gamma"] = -1.0
    with pytest.raises(ValueError):
        helpd.describe(m, c, "heldout", small)
