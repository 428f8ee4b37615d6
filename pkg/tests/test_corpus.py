import json

import pytest
from hypothesis import given, strategies as st

from cmcvar.corpus import (
    AuthorMeta,
    CorpusError,
    Post,
    TokenRecord,
    load_corpus,
    load_tokens,
    save_tokens,
)


def write_corpus(tmp_path, lines):
    path = tmp_path / "corpus.jsonl"
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return path


def record_line(post_id="p1", author_id="a1", age=17, gender="f", region="brabant", text="hoi"):
    return json.dumps(
        {
            "post_id": post_id,
            "author_id": author_id,
            "age": age,
            "gender": gender,
            "region": region,
            "text": text,
        }
    )


def test_empty_file_gives_empty_sequence(tmp_path):
    assert load_corpus(write_corpus(tmp_path, [])) == []


def test_three_lines_in_order(tmp_path):
    path = write_corpus(
        tmp_path,
        [record_line(post_id=f"p{i}", author_id=f"a{i}") for i in (1, 2, 3)],
    )
    posts = load_corpus(path)
    assert [p.post_id for p in posts] == ["p1", "p2", "p3"]


def test_unknown_region_names_line_and_field(tmp_path):
    path = write_corpus(tmp_path, [record_line(), record_line(post_id="p2", region="Holland")])
    with pytest.raises(CorpusError, match="line 2.*region"):
        load_corpus(path)


def test_non_integer_age_rejected(tmp_path):
    path = write_corpus(tmp_path, [record_line(age="seventeen")])
    with pytest.raises(CorpusError, match="age"):
        load_corpus(path)


def test_duplicate_post_id_rejected(tmp_path):
    path = write_corpus(tmp_path, [record_line(), record_line(author_id="a2")])
    with pytest.raises(CorpusError, match="duplicate post_id"):
        load_corpus(path)


def test_conflicting_author_metadata_rejected(tmp_path):
    path = write_corpus(
        tmp_path, [record_line(), record_line(post_id="p2", age=18)]
    )
    with pytest.raises(CorpusError, match="conflicting metadata"):
        load_corpus(path)


def test_same_author_identical_metadata_ok(tmp_path):
    path = write_corpus(tmp_path, [record_line(), record_line(post_id="p2")])
    assert len(load_corpus(path)) == 2


def test_age_below_minimum_rejected(tmp_path):
    path = write_corpus(tmp_path, [record_line(age=12)])
    with pytest.raises(CorpusError, match="minimum"):
        load_corpus(path)


def make_record(surface="hoi", category="std", **kwargs):
    defaults = dict(
        surface=surface,
        nonstandard=category != "std",
        category=category,
        post_id="p1",
        author_id="a1",
        age=17,
        gender="f",
        region="brabant",
    )
    defaults.update(kwargs)
    return TokenRecord(**defaults)


def test_empty_sequence_writes_header_only(tmp_path):
    path = tmp_path / "tokens.tsv"
    assert save_tokens([], path) == 0
    assert path.read_text(encoding="utf-8").count("\n") == 1
    assert load_tokens(path) == []


def test_five_records_round_trip(tmp_path):
    records = [make_record(surface=f"w{i}", post_id=f"p{i}") for i in range(5)]
    path = tmp_path / "tokens.tsv"
    assert save_tokens(records, path) == 5
    assert load_tokens(path) == records


def test_tab_in_surface_round_trips(tmp_path):
    record = make_record(surface="a\tb", category="chat")
    path = tmp_path / "tokens.tsv"
    save_tokens([record], path)
    assert load_tokens(path) == [record]


def test_category_flag_consistency_enforced():
    with pytest.raises(CorpusError):
        TokenRecord(
            surface="x",
            nonstandard=True,
            category="std",
            post_id="p",
            author_id="a",
            age=15,
            gender="m",
            region="limburg",
        )


surfaces = st.text(
    st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=12
)


@given(
    st.lists(
        st.tuples(surfaces, st.sampled_from(["std", "chat", "reg"])),
        max_size=20,
    )
)
def test_round_trip_property(tmp_path_factory, items):
    records = [
        make_record(surface=surface, category=category, post_id=f"p{i}")
        for i, (surface, category) in enumerate(items)
    ]
    path = tmp_path_factory.mktemp("rt") / "tokens.tsv"
    save_tokens(records, path)
    assert load_tokens(path) == records
