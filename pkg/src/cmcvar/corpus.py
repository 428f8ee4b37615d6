"""Shared data model plus readers/writers for corpora and annotated token tables.

A corpus file holds one JSON object per line; annotated tokens persist as a
tab-separated table with a fixed column order so outputs are byte-comparable.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

GENDERS = ("f", "m")
REGIONS = ("brabant", "east-flanders", "limburg", "west-flanders")
CATEGORIES = ("std", "chat", "reg")

MIN_AGE = 13

TOKEN_HEADER = (
    "surface",
    "nonstandard",
    "category",
    "post_id",
    "author_id",
    "age",
    "gender",
    "region",
)


class CorpusError(ValueError):
    """Malformed corpus or token-table input."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class AuthorMeta:
    author_id: str
    age: int
    gender: str
    region: str

    def __post_init__(self):
        if not self.author_id:
            raise CorpusError("author_id must be non-empty")
        if not isinstance(self.age, int) or isinstance(self.age, bool):
            raise CorpusError(f"age must be an integer, got {self.age!r}")
        if self.age < MIN_AGE:
            raise CorpusError(f"age {self.age} below platform minimum {MIN_AGE}")
        if self.gender not in GENDERS:
            raise CorpusError(f"unknown gender {self.gender!r} (expected one of {GENDERS})")
        if self.region not in REGIONS:
            raise CorpusError(f"unknown region {self.region!r} (expected one of {REGIONS})")


@dataclass(frozen=True)
class Post:
    post_id: str
    author: AuthorMeta
    raw_text: str


@dataclass(frozen=True)
class TokenRecord:
    surface: str
    nonstandard: bool
    category: str
    post_id: str
    author_id: str
    age: int
    gender: str
    region: str

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise CorpusError(f"unknown category {self.category!r}")
        if self.nonstandard != (self.category != "std"):
            raise CorpusError(
                f"nonstandard={self.nonstandard} inconsistent with category={self.category!r}"
            )


_REQUIRED_FIELDS = ("post_id", "author_id", "age", "gender", "region", "text")


def load_corpus(path) -> list[Post]:
    """Read a line-delimited JSON corpus, validating every record.

    Duplicate post_ids are rejected; an author may appear on many lines but
    the metadata must be identical on each of them.
    """
    posts: list[Post] = []
    seen_posts: set[str] = set()
    authors: dict[str, AuthorMeta] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"invalid JSON ({exc.msg})", line=lineno) from exc
            for field in _REQUIRED_FIELDS:
                if field not in obj:
                    raise CorpusError(f"missing field {field!r}", line=lineno)
            try:
                meta = AuthorMeta(
                    author_id=str(obj["author_id"]),
                    age=obj["age"],
                    gender=obj["gender"],
                    region=obj["region"],
                )
            except CorpusError as exc:
                raise CorpusError(str(exc), line=lineno) from exc
            post_id = str(obj["post_id"])
            if post_id in seen_posts:
                raise CorpusError(f"duplicate post_id {post_id!r}", line=lineno)
            seen_posts.add(post_id)
            known = authors.get(meta.author_id)
            if known is None:
                authors[meta.author_id] = meta
            elif known != meta:
                raise CorpusError(
                    f"conflicting metadata for author {meta.author_id!r}: "
                    f"{known} vs {meta}",
                    line=lineno,
                )
            posts.append(Post(post_id=post_id, author=meta, raw_text=str(obj["text"])))
    return posts


def _escape(value: str) -> str:
    return (
        value.replace("\\", "\\\\")
        .replace("\t", "\\t")
        .replace("\n", "\\n")
        .replace("\r", "\\r")
    )


def _unescape(value: str) -> str:
    out = []
    it = iter(value)
    for ch in it:
        if ch != "\\":
            out.append(ch)
            continue
        nxt = next(it, "")
        out.append({"t": "\t", "n": "\n", "r": "\r", "\\": "\\"}.get(nxt, "\\" + nxt))
    return "".join(out)


def save_tokens(records: Iterable[TokenRecord], path) -> int:
    """Write token records as TSV; returns the number of rows written."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\t".join(TOKEN_HEADER) + "\n")
        for rec in records:
            handle.write(
                "\t".join(
                    (
                        _escape(rec.surface),
                        "1" if rec.nonstandard else "0",
                        rec.category,
                        _escape(rec.post_id),
                        _escape(rec.author_id),
                        str(rec.age),
                        rec.gender,
                        rec.region,
                    )
                )
                + "\n"
            )
            count += 1
    return count


def load_tokens(path) -> list[TokenRecord]:
    """Read a token table written by :func:`save_tokens`."""
    records: list[TokenRecord] = []
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().rstrip("\n")
        if tuple(header.split("\t")) != TOKEN_HEADER:
            raise CorpusError(f"unexpected token-table header {header!r}", line=1)
        for lineno, line in enumerate(handle, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != len(TOKEN_HEADER):
                raise CorpusError(
                    f"expected {len(TOKEN_HEADER)} fields, got {len(fields)}", line=lineno
                )
            surface, nonstd, category, post_id, author_id, age, gender, region = fields
            if nonstd not in ("0", "1"):
                raise CorpusError(f"nonstandard flag must be 0/1, got {nonstd!r}", line=lineno)
            try:
                age_val = int(age)
            except ValueError as exc:
                raise CorpusError(f"age not an integer: {age!r}", line=lineno) from exc
            try:
                records.append(
                    TokenRecord(
                        surface=_unescape(surface),
                        nonstandard=nonstd == "1",
                        category=category,
                        post_id=_unescape(post_id),
                        author_id=_unescape(author_id),
                        age=age_val,
                        gender=gender,
                        region=region,
                    )
                )
            except CorpusError as exc:
                raise CorpusError(str(exc), line=lineno) from exc
    return records
