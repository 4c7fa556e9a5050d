import math

import pytest

import mtop

TABLE1 = "[IN:GET_EVENT [SL:CATEGORY_EVENT festivals ] [SL:DATE_TIME this weekend ] ]"
TABLE3 = "[IN:GET_EVENT [SL:CATEGORY_EVENT festival ] [SL:DATE_TIME questo fine settimana ] ]"


def table1():
    return mtop.Example("t1", "en", ["Any", "festivals", "this", "weekend"], TABLE1)


def test_mrl_round_trip_and_adaptation():
    assert mtop.normalize_mrl("[IN:X [SL:A a ]]") == "[IN:X [SL:A a ] ]"
    assert mtop.adapt_top_annotation(TABLE1.replace("[IN:GET_EVENT", "[IN:GET_EVENT Any")) == TABLE1
    assert mtop.adapt_top_annotation("[IN:UNSUPPORTED whatever ]") is None
    with pytest.raises(ValueError):
        mtop.normalize_mrl("[IN:X [SL:A a")


def test_template_and_projection():
    t = mtop.make_template(table1())
    assert t.tagged() == "Any festivals|x0 this|x1 weekend|x1"
    assert t.skeleton == "[IN:GET_EVENT [SL:CATEGORY_EVENT x0 ] [SL:DATE_TIME x1 ] ]"
    alignment = mtop.Alignment([(0, 0), (1, 2), (2, 3), (3, 4), (3, 5)])
    out = mtop.project_example(t, ["Tutti", "i", "festival", "questo", "fine", "settimana"], alignment)
    assert out.ok
    assert out.example.mrl == TABLE3
    assert mtop.restore_template(t, {0: ["festival"], 1: ["questo", "fine", "settimana"]}) == TABLE3


def test_aligner_identity_corpus():
    pairs = [(["a", "b", "c"], ["a", "b", "c"])] * 10
    model, loglik = mtop.train_aligner(pairs)
    assert model.prob("a", "a") > 0.9
    assert all(b >= a - 1e-9 for a, b in zip(loglik, loglik[1:]))
    assert mtop.viterbi_align(model, ["a", "b", "c"], ["a", "b", "c"]).pharaoh() == "0-0 1-1 2-2"


def test_bpe_hand_oracle_and_round_trip():
    bpe = mtop.learn_bpe({"low": 3, "lower": 2}, 10)
    assert bpe.merges() == [("l", "o"), ("lo", "w</w>"), ("e", "r</w>"), ("lo", "w"), ("low", "er</w>")]
    tokens = ["Any", "festivals", "this", "weekend"]
    assert mtop.BpeModel.decode(bpe.encode(tokens)) == tokens


def test_translation_and_bootstrap():
    lexicon = {"any": "tutti", "festivals": "festival", "this": "questo", "weekend": "fine settimana"}
    assert mtop.translate_dict(lexicon, ["Any festivals this weekend"], "en", "it") == [
        "tutti festival questo fine settimana"
    ]
    source = mtop.synthetic_corpus(count=50, seed=3)
    examples, yield_fraction = mtop.bootstrap_corpus(source, {}, "xx")
    assert yield_fraction == 1.0
    assert [e.mrl for e in examples] == [e.mrl for e in source]


def test_metrics():
    gold = "[IN:GET_EVENT [SL:CATEGORY_EVENT i fuochi d'artificio ] [SL:DATE_TIME questa sera ] ]"
    pred = "[IN:GET_EVENT [SL:CATEGORY_EVENT fuochi artificio ] [SL:DATE_TIME questa sera ] ]"
    assert mtop.exact_match({"x": pred}, {"x": gold}).exact_match_accuracy == 0.0
    report = mtop.filtered_match({"x": pred}, {"x": gold}, mtop.FilterList.defaults_for("it"))
    assert report.filtered_accuracy == 1.0
    hand = 100.0 * ((1 / 3) * (1 / 3) * (1 / 2) * 1.0) ** 0.25
    assert math.isclose(mtop.corpus_bleu([["the", "the", "the"]], [["the", "cat"]]), hand, rel_tol=1e-9)


def test_parser_trains_and_decodes(tmp_path):
    train = mtop.synthetic_corpus(count=200, seed=1)
    dev = mtop.synthetic_corpus(count=20, seed=2)
    freqs = {}
    for e in train:
        for w in e.question_tokens:
            freqs[w] = freqs.get(w, 0) + 1
    bpe = mtop.learn_bpe(freqs, 30)
    config = mtop.ParserConfig(
        {"model_dim": "16", "heads": "2", "ffn_dim": "32", "enc_layers": "1", "dec_layers": "1",
         "max_epochs": "2", "beam_size": "2"}
    )
    model = mtop.ParserModel.create(config, bpe, train)
    history = mtop.train_parser(model, train, dev)
    assert len(history.strip().splitlines()) >= 1
    path = tmp_path / "m.ckpt"
    model.save(path)
    loaded = mtop.ParserModel.load(path)
    q = dev[0].question_tokens
    assert mtop.decode_beam(loaded, q, 2) == mtop.decode_beam(model, q, 2)
