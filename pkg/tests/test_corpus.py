import json

import pytest

from storysalad.corpus import (UNK, UNK_ID, CorpusError, Vocabulary, build_vocabulary,
                               build_vocabulary_from_sentences, encode_sentence, load_corpus,
                               write_corpus)


def test_load_lowercases_and_keeps_order(write_jsonl):
    path = write_jsonl("c.jsonl", [
        {"id": "b", "group_key": "k", "paragraphs": [[["The", "Cat"]], [["Sat"]]]},
        {"id": "a", "paragraphs": [[["x"]]]},
    ])
    docs = load_corpus(path)
    assert [d.id for d in docs] == ["b", "a"]
    assert docs[0].sentences == [["the", "cat"], ["sat"]]
    assert docs[1].group_key == ""
    assert docs[0].n_sentences == 2


def test_roundtrip(tmp_path, docs):
    path = tmp_path / "c.jsonl"
    write_corpus(docs, path)
    again = load_corpus(path)
    assert [d.to_json() for d in again] == [d.to_json() for d in docs]


@pytest.mark.parametrize("row, fragment", [
    ({"paragraphs": [[["x"]]]}, "missing field 'id'"),
    ({"id": "a", "paragraphs": [[[]]]}, "empty sentence"),
    ({"id": "a", "paragraphs": [[["x", 3]]]}, "token strings"),
    ({"id": "a", "paragraphs": []}, "no paragraphs"),
])
def test_malformed_documents_report_line(write_jsonl, row, fragment):
    good = {"id": "ok", "paragraphs": [[["x"]]]}
    path = write_jsonl("c.jsonl", [good, row])
    with pytest.raises(CorpusError) as err:
        load_corpus(path)
    assert str(err.value).startswith("line 2:")
    assert fragment in str(err.value)


def test_invalid_json_and_duplicates(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"id": "a", "paragraphs": [[["x"]]]}\n{oops\n')
    with pytest.raises(CorpusError, match="line 2: invalid JSON"):
        load_corpus(p)
    row = json.dumps({"id": "a", "paragraphs": [[["x"]]]})
    p.write_text(row + "\n" + row + "\n")
    with pytest.raises(CorpusError, match="duplicate document id a"):
        load_corpus(p)


def test_vocabulary_frequency_cut_and_ties():
    sents = [["b", "a", "c"], ["a", "b"], ["d"]]
    v = build_vocabulary_from_sentences(sents, limit=2)
    # a and b both occur twice; c and d once, cut by the limit
    assert v.tokens == [UNK, "a", "b"]
    assert v.lookup("c") == UNK_ID
    assert v.lookup("A") == 1
    assert len(v) == 3


def test_vocabulary_reserved_tokens_do_not_count():
    v = build_vocabulary_from_sentences([["x", "y"]], limit=1, reserved=("<none>",))
    assert v.tokens == [UNK, "<none>", "x"]


def test_vocabulary_from_tokens_roundtrip(docs):
    v = build_vocabulary(docs, limit=5)
    again = Vocabulary.from_tokens(v.tokens, size_limit=v.size_limit)
    assert again.token_to_id == v.token_to_id
    with pytest.raises(ValueError):
        Vocabulary.from_tokens(["x", UNK])


def test_encode_sentence_maps_unknowns():
    v = build_vocabulary_from_sentences([["known"]], limit=10)
    assert encode_sentence(["Known", "other"], v) == [1, UNK_ID]
