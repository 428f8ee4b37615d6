"""Cleaning of raw post text into lowercase word tokens plus post eligibility.

The cleaning order is: strip hyperlinks / e-mail addresses / phone numbers,
split on whitespace, drop emoticons and punctuation-only tokens, lowercase,
strip edge punctuation (word-internal apostrophes and hyphens survive) and
reduce character flooding to at most ``flooding_cap`` repetitions.
"""

import random
import re
import unicodedata
from dataclasses import dataclass, field

from .corpus import Post

DEFAULT_EMOTICONS = (
    ":)", ":(", ":-)", ":-(", ";)", ";-)", ":p", ":-p", ":d", ":-d",
    "xd", "xp", "=d", "=)", "=(", ":o", ":s", ":/", ":\\", "<3", ":3",
    ":'(", "^^", "^_^", "-_-", "o_o",
)

_URL_RE = re.compile(r"\S*(?:https?://|www\.|://)\S*", re.IGNORECASE)
_EMAIL_RE = re.compile(r"\S+@\S+\.\S+")
_PHONE_RE = re.compile(r"(?<!\w)\+?(?:[0-9][\s\-.()/]?){7,}(?!\w)")


@dataclass(frozen=True)
class NormalizerConfig:
    flooding_cap: int = 3
    min_words: int = 3
    emoticons: tuple[str, ...] = DEFAULT_EMOTICONS

    def __post_init__(self):
        if self.flooding_cap < 2:
            raise ValueError("flooding_cap must be >= 2")
        if self.min_words < 1:
            raise ValueError("min_words must be >= 1")


def flood_reduce(token: str, cap: int = 3) -> str:
    """Reduce every run of more than ``cap`` identical characters to ``cap``."""
    if cap < 2:
        raise ValueError("cap must be >= 2")
    out = []
    run_char = None
    run_len = 0
    for ch in token:
        if ch == run_char:
            run_len += 1
        else:
            run_char = ch
            run_len = 1
        if run_len <= cap:
            out.append(ch)
    return "".join(out)


def _is_word_char(ch: str) -> bool:
    cat = unicodedata.category(ch)
    return cat[0] in ("L", "N")


def is_emoticon(token: str, config: NormalizerConfig) -> bool:
    """Emoticon = known eyes/mouth sequence or a symbol/punctuation-only token."""
    low = token.lower()
    if low in config.emoticons:
        return True
    return bool(token) and not any(_is_word_char(ch) for ch in token)


def strip_noise(text: str, config: NormalizerConfig) -> str:
    """Replace hyperlinks, e-mail addresses and phone numbers with spaces."""
    text = _URL_RE.sub(" ", text)
    text = _EMAIL_RE.sub(" ", text)
    text = _PHONE_RE.sub(" ", text)
    return text


def raw_tokens(text: str, config: NormalizerConfig) -> list[str]:
    """Whitespace tokens after noise stripping, emoticons dropped, case kept."""
    return [tok for tok in strip_noise(text, config).split() if not is_emoticon(tok, config)]


def clean_token(token: str, config: NormalizerConfig) -> str:
    """Lowercase, strip punctuation (keeping word-internal ' and -) and
    reduce flooding. Returns "" when nothing word-like remains."""
    token = token.lower()
    chars = []
    for i, ch in enumerate(token):
        if _is_word_char(ch):
            chars.append(ch)
        elif ch in "'’-" and 0 < i < len(token) - 1:
            # keep only between word characters ("'k" clitics come in edge-
            # stripped already, "rock-'n'-roll" internals survive)
            if _is_word_char(token[i - 1]) and _is_word_char(token[i + 1]):
                chars.append("'" if ch == "’" else ch)
    cleaned = "".join(chars).strip("'-")
    return flood_reduce(cleaned, config.flooding_cap)


def normalize_post(raw_text: str, config: NormalizerConfig = NormalizerConfig()) -> list[str]:
    """Full per-post normalization producing the cleaned word-token stream."""
    out = []
    for tok in raw_tokens(raw_text, config):
        cleaned = clean_token(tok, config)
        if cleaned:
            out.append(cleaned)
    return out


def select_eligible(
    posts: list[Post],
    config: NormalizerConfig = NormalizerConfig(),
    seed: int = 0,
) -> list[Post]:
    """Keep posts with >= min_words normalized tokens and exactly one post
    per author, chosen uniformly from that author's eligible posts.

    The choice uses a per-author substream keyed on (seed, author_id), so the
    result does not depend on input order. Output is sorted by author_id.
    """
    eligible: dict[str, list[Post]] = {}
    for post in posts:
        if len(normalize_post(post.raw_text, config)) >= config.min_words:
            eligible.setdefault(post.author.author_id, []).append(post)
    selected = []
    for author_id in sorted(eligible):
        candidates = sorted(eligible[author_id], key=lambda p: p.post_id)
        rng = random.Random(f"{seed}:{author_id}")
        selected.append(rng.choice(candidates))
    return selected
