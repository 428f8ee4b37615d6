import pytest
from hypothesis import given, strategies as st

from cmcvar.annotate import (
    LexiconSet,
    age_profile,
    annotate_corpus,
    categorize,
    classify_nonstandard,
    detect_concatenation,
    has_digit_substitution,
    has_flooding,
    load_overrides,
    load_regional,
    load_wordlist,
)
from cmcvar.corpus import AuthorMeta, Post, TokenRecord
from cmcvar.normalize import NormalizerConfig

LEX = LexiconSet(
    standard_words=frozenset({"waarom", "wacht", "voor", "schone", "zo", "slecht"}),
    names_and_foreign=frozenset({"kevin"}),
    regional_variants={"veu": frozenset({"brabant"}), "skone": None},
    chat_forms=frozenset({"vr", "bff"}),
    overrides={"gy": "reg", "lol": "chat"},
)


class TestClassify:
    def test_standard_word(self):
        assert classify_nonstandard("waarom", LEX) is False

    def test_abbreviation_is_nonstandard(self):
        assert classify_nonstandard("wrm", LEX) is True

    def test_name_counts_as_standard(self):
        assert classify_nonstandard("kevin", LEX) is False

    def test_empty_token_rejected(self):
        with pytest.raises(ValueError):
            classify_nonstandard("", LEX)


class TestCategorize:
    def test_regional_variant_wins_over_abbreviation(self):
        assert categorize("veu", LEX) == "reg"
        assert categorize("vr", LEX) == "chat"

    def test_consonant_variant_regional(self):
        assert categorize("skone", LEX) == "reg"

    def test_digit_substitution_is_chat(self):
        assert categorize("w8", LEX) == "chat"

    def test_default_residue_is_chat(self):
        assert categorize("disign", LEX) == "chat"

    def test_flooding_trace_is_chat(self):
        assert categorize("niiice", LEX) == "chat"

    def test_concatenation_signal_is_chat(self):
        assert categorize("zonderu", LEX, concatenated=True) == "chat"

    @given(st.sampled_from(sorted(LEX.regional_variants) + ["gy", "lol", "vr", "qqq"]))
    def test_overrides_always_win(self, word):
        lex = LexiconSet(
            standard_words=LEX.standard_words,
            regional_variants=LEX.regional_variants,
            chat_forms=LEX.chat_forms,
            overrides={word: "reg"},
        )
        assert categorize(word, lex) == "reg"


class TestRules:
    def test_digit_rule(self):
        assert has_digit_substitution("w8")
        assert has_digit_substitution("2day")
        assert not has_digit_substitution("1234")
        assert not has_digit_substitution("abc")

    def test_flooding_rule(self):
        assert has_flooding("niiice", 3)
        assert not has_flooding("nice", 3)
        assert not has_flooding("zoo", 3)  # run of 2 < cap


class TestConcatenation:
    def test_paper_style_concatenation(self):
        assert detect_concatenation("IkKanOokNiiiZonderU") == [
            "Ik", "Kan", "Ook", "Niii", "Zonder", "U",
        ]

    def test_ordinary_capitalization_untouched(self):
        assert detect_concatenation("Hallo") is None

    def test_no_lower_to_upper_boundary(self):
        assert detect_concatenation("ABCdef") is None

    def test_single_boundary_untouched(self):
        assert detect_concatenation("McDonald") is None


def make_post(text, author_id="a1", age=15, post_id="p1"):
    meta = AuthorMeta(author_id=author_id, age=age, gender="f", region="brabant")
    return Post(post_id=post_id, author=meta, raw_text=text)


class TestAnnotateCorpus:
    def test_all_standard_post(self):
        records, counts = annotate_corpus([make_post("zo slecht waarom")], LEX)
        assert all(not r.nonstandard for r in records)
        assert counts == {"std": 3, "chat": 0, "reg": 0}

    def test_counts_and_share(self):
        posts = [
            make_post("zo zo zo zo zo zo zo zo zo wrm", author_id=f"a{i}", post_id=f"p{i}")
            for i in range(5)
        ]
        records, counts = annotate_corpus(posts, LEX)
        share = counts["std"] / len(records)
        assert share == pytest.approx(0.9)

    def test_permutation_equivariance(self):
        posts = [
            make_post("zo wrm veu", author_id="a1", post_id="p1"),
            make_post("slecht skone w8", author_id="a2", post_id="p2"),
        ]
        forward, _ = annotate_corpus(posts, LEX)
        backward, _ = annotate_corpus(list(reversed(posts)), LEX)
        assert sorted(forward, key=lambda r: r.post_id) == sorted(
            backward, key=lambda r: r.post_id
        )

    def test_concatenated_parts_flow_through(self):
        records, _ = annotate_corpus([make_post("WachtZoSlechtVoor!")], LEX)
        assert [r.surface for r in records] == ["wacht", "zo", "slecht", "voor"]
        # parts are standard words so the chat signal does not flip them
        assert all(r.category == "std" for r in records)

    def test_regional_never_in_standard_list(self):
        posts = [make_post("veu skone zo wrm w8 waarom")]
        records, _ = annotate_corpus(posts, LEX)
        for rec in records:
            if rec.category == "reg":
                assert rec.surface not in LEX.standard_words


class TestAgeProfile:
    def record(self, author, age, nonstandard):
        return TokenRecord(
            surface="x",
            nonstandard=nonstandard,
            category="chat" if nonstandard else "std",
            post_id=f"p{author}",
            author_id=author,
            age=age,
            gender="f",
            region="brabant",
        )

    def test_all_standard(self):
        records = [self.record("a1", 15, False), self.record("a2", 16, False)]
        assert age_profile(records) == [(15, 0.0, 1), (16, 0.0, 1)]

    def test_direct_ratio(self):
        records = [self.record("a1", 14, i < 3) for i in range(10)]
        assert age_profile(records) == [(14, 0.3, 1)]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            age_profile([])


class TestLexiconFiles:
    def test_wordlist_comments_and_casefold(self, tmp_path):
        path = tmp_path / "w.txt"
        path.write_text("# comment\nWaarom\n\nzo\n", encoding="utf-8")
        assert load_wordlist(path) == {"waarom", "zo"}

    def test_regional_regions_parsed(self, tmp_path):
        path = tmp_path / "r.tsv"
        path.write_text("veu\tbrabant\nskone\twest-flanders,east-flanders\nmokkes\n", encoding="utf-8")
        got = load_regional(path)
        assert got["veu"] == {"brabant"}
        assert got["skone"] == {"west-flanders", "east-flanders"}
        assert got["mokkes"] is None

    def test_overrides_validated(self, tmp_path):
        path = tmp_path / "o.tsv"
        path.write_text("gy\treg\n", encoding="utf-8")
        assert load_overrides(path) == {"gy": "reg"}
        path.write_text("gy\tstandard\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_overrides(path)
