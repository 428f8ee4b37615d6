"""Lexicon- and rule-based labelling of tokens as standard / chat / regional.

A token is non-standard when it appears in neither the standard-word lists
nor the names/foreign list. Non-standard tokens are categorized with the
precedence: manual override > regional-variant lexicon > chat rules > chat
(the default for unexplained residue: spelling deviations and typos count as
chat language). The override file is the escape hatch that can reproduce any
manual labelling exactly.
"""

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .corpus import Post, TokenRecord
from .normalize import NormalizerConfig, clean_token, raw_tokens


@dataclass(frozen=True)
class LexiconSet:
    standard_words: frozenset = frozenset()
    names_and_foreign: frozenset = frozenset()
    regional_variants: dict = field(default_factory=dict)  # word -> set(regions) | None
    chat_forms: frozenset = frozenset()
    overrides: dict = field(default_factory=dict)  # word -> "chat" | "reg"


def _read_lines(path):
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def load_wordlist(path) -> frozenset:
    """Flat word list, one case-folded entry per line, '#' comments."""
    return frozenset(line.casefold() for _, line in _read_lines(path))


def load_regional(path) -> dict:
    """Regional variants: `word` or `word<TAB>region[,region...]` per line."""
    variants = {}
    for lineno, line in _read_lines(path):
        parts = line.split("\t")
        word = parts[0].casefold()
        if len(parts) == 1:
            variants[word] = None
        else:
            variants[word] = frozenset(r.strip() for r in parts[1].split(","))
    return variants


def load_overrides(path) -> dict:
    """Forced categories: `word<TAB>chat|reg` per line."""
    overrides = {}
    for lineno, line in _read_lines(path):
        parts = line.split("\t")
        if len(parts) != 2 or parts[1] not in ("chat", "reg"):
            raise ValueError(f"{path}: line {lineno}: expected 'word<TAB>chat|reg', got {line!r}")
        overrides[parts[0].casefold()] = parts[1]
    return overrides


def classify_nonstandard(token: str, lexicons: LexiconSet) -> bool:
    """True when the token is in neither the standard nor the names list."""
    if not token:
        raise ValueError("empty token")
    return token not in lexicons.standard_words and token not in lexicons.names_and_foreign


_DIGIT_IN_WORD_RE = re.compile(r"[^\W\d_]\d|\d[^\W\d_]")


def has_digit_substitution(token: str) -> bool:
    """Digit adjacent to a letter inside the token, e.g. 'w8'."""
    return bool(_DIGIT_IN_WORD_RE.search(token))


def has_flooding(token: str, cap: int = 3) -> bool:
    """A maximal run of exactly ``cap`` identical characters (the reduced
    trace of character flooding)."""
    return bool(re.search(r"(.)\1{%d}(?!\1)" % (cap - 1), token))


def detect_concatenation(raw_token: str) -> Optional[list[str]]:
    """Split CamelCase-concatenated sentences ('IkKanOokNiiiZonderU').

    Splits at every lowercase-to-uppercase boundary; returns the parts only
    when at least two boundaries are present, otherwise None.
    """
    parts = re.split(r"(?<=[a-zà-öø-þ])(?=[A-ZÀ-ÖØ-Þ])", raw_token)
    if len(parts) >= 3:
        return parts
    return None


def categorize(
    token: str,
    lexicons: LexiconSet,
    *,
    flooding_cap: int = 3,
    concatenated: bool = False,
) -> str:
    """Category ('chat' or 'reg') for a token already known to be non-standard.

    Regional influence takes precedence over chat signals: an abbreviated form
    listed as a regional variant stays regional.
    """
    forced = lexicons.overrides.get(token)
    if forced is not None:
        return forced
    if token in lexicons.regional_variants:
        return "reg"
    # chat rules (membership, digit substitution, flooding trace,
    # concatenation signal); unexplained residue defaults to chat too
    if (
        token in lexicons.chat_forms
        or concatenated
        or has_digit_substitution(token)
        or has_flooding(token, flooding_cap)
    ):
        return "chat"
    return "chat"


def annotate_corpus(
    posts: Iterable[Post],
    lexicons: LexiconSet,
    config: NormalizerConfig = NormalizerConfig(),
) -> tuple[list[TokenRecord], dict]:
    """One TokenRecord per token occurrence, plus per-category counts.

    Concatenation splitting happens on the raw (case-preserved) tokens before
    the per-part cleaning, so 'IkKanOokNiiiZonderU!' yields six tokens that
    carry the concatenation chat signal.
    """
    records: list[TokenRecord] = []
    counts = {"std": 0, "chat": 0, "reg": 0}
    for post in posts:
        meta = post.author
        for raw in raw_tokens(post.raw_text, config):
            parts = detect_concatenation(raw)
            concatenated = parts is not None
            for part in parts if concatenated else [raw]:
                token = clean_token(part, config)
                if not token:
                    continue
                if classify_nonstandard(token, lexicons):
                    category = categorize(
                        token,
                        lexicons,
                        flooding_cap=config.flooding_cap,
                        concatenated=concatenated,
                    )
                else:
                    category = "std"
                counts[category] += 1
                records.append(
                    TokenRecord(
                        surface=token,
                        nonstandard=category != "std",
                        category=category,
                        post_id=post.post_id,
                        author_id=meta.author_id,
                        age=meta.age,
                        gender=meta.gender,
                        region=meta.region,
                    )
                )
    return records, counts


def age_profile(records: Iterable[TokenRecord]) -> list[tuple[int, float, int]]:
    """Mean per-author non-standard proportion at each age.

    The knot-placement aid: per author the proportion of non-standard tokens,
    averaged within each age. Returns (age, mean proportion, author count)
    rows sorted by age.
    """
    per_author: dict[str, list] = {}
    for rec in records:
        entry = per_author.setdefault(rec.author_id, [rec.age, 0, 0])
        entry[1] += rec.nonstandard
        entry[2] += 1
    if not per_author:
        raise ValueError("no records")
    by_age: dict[int, list[float]] = {}
    for age, nonstd, total in per_author.values():
        by_age.setdefault(age, []).append(nonstd / total)
    return [
        (age, sum(props) / len(props), len(props))
        for age, props in sorted(by_age.items())
    ]
