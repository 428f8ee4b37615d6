"""Balanced author sampling over age x gender x region cells and the
construction of the two contrast datasets (chat vs. standard, regional vs.
standard)."""

import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import GENDERS, REGIONS, Post, TokenRecord


@dataclass(frozen=True)
class CellGrid:
    """The full crossing over which balance is enforced."""

    min_age: int = 13
    max_age: int = 49
    genders: tuple[str, ...] = GENDERS
    regions: tuple[str, ...] = REGIONS

    def cells(self):
        for age in range(self.min_age, self.max_age + 1):
            for gender in self.genders:
                for region in self.regions:
                    yield (age, gender, region)

    def contains(self, post: Post) -> bool:
        a = post.author
        return (
            self.min_age <= a.age <= self.max_age
            and a.gender in self.genders
            and a.region in self.regions
        )


class BalanceError(ValueError):
    pass


def _by_cell(posts: Iterable[Post], grid: CellGrid) -> dict:
    cells = {cell: [] for cell in grid.cells()}
    seen_authors = set()
    for post in posts:
        a = post.author
        if a.author_id in seen_authors:
            raise BalanceError(f"author {a.author_id!r} has more than one post")
        seen_authors.add(a.author_id)
        if grid.contains(post):
            cells[(a.age, a.gender, a.region)].append(post)
    return cells


def min_cell_size(posts: Iterable[Post], grid: CellGrid = CellGrid()) -> tuple[int, tuple]:
    """Smallest distinct-author count over the grid, with its argmin cell.

    Errors if any cell of the configured grid is empty.
    """
    cells = _by_cell(posts, grid)
    empty = [cell for cell, members in cells.items() if not members]
    if empty:
        raise BalanceError(f"empty cell(s) in grid, e.g. {empty[0]}")
    smallest = min(cells, key=lambda c: (len(cells[c]), c))
    return len(cells[smallest]), smallest


def balanced_sample(
    posts: Iterable[Post],
    n_per_cell: int,
    seed: int = 0,
    grid: CellGrid = CellGrid(),
) -> list[Post]:
    """Exactly n_per_cell authors per cell, sampled uniformly without
    replacement. Deterministic given (input set, n, seed); per-cell
    substreams are keyed on the cell so input order is irrelevant."""
    cells = _by_cell(posts, grid)
    sampled: list[Post] = []
    for cell in grid.cells():
        members = sorted(cells[cell], key=lambda p: p.author.author_id)
        if len(members) < n_per_cell:
            raise BalanceError(
                f"cell {cell} has only {len(members)} authors, need {n_per_cell}"
            )
        rng = random.Random(f"{seed}:{cell[0]}:{cell[1]}:{cell[2]}")
        sampled.extend(rng.sample(members, n_per_cell))
    sampled.sort(key=lambda p: p.author.author_id)
    return sampled


def balance_report(posts: Iterable[Post], sampled: Iterable[Post], grid: CellGrid, path):
    """Audit TSV: per cell, available vs. sampled author counts."""
    avail = _by_cell(posts, grid)
    taken = _by_cell(sampled, grid)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("age\tgender\tregion\tavailable\tsampled\n")
        for cell in grid.cells():
            handle.write(
                f"{cell[0]}\t{cell[1]}\t{cell[2]}\t{len(avail[cell])}\t{len(taken[cell])}\n"
            )


@dataclass(frozen=True)
class ContrastSpec:
    positive_category: str  # "chat" or "reg"; negative class is always "std"

    def __post_init__(self):
        if self.positive_category not in ("chat", "reg"):
            raise ValueError(f"positive_category must be 'chat' or 'reg', got {self.positive_category!r}")


@dataclass(frozen=True)
class ContrastData:
    """One analysis dataset: standard rows (response 0) plus one non-standard
    category (response 1); the other category is dropped entirely."""

    records: tuple[TokenRecord, ...]
    spec: ContrastSpec

    @property
    def responses(self) -> list[int]:
        return [1 if rec.nonstandard else 0 for rec in self.records]

    def counts(self) -> dict:
        n_pos = sum(1 for r in self.records if r.nonstandard)
        return {
            "words": len(self.records),
            "standard": len(self.records) - n_pos,
            "positive": n_pos,
            "authors": len({r.author_id for r in self.records}),
        }


def build_contrast(records: Sequence[TokenRecord], spec: ContrastSpec) -> ContrastData:
    """Filter annotated records down to one contrast. Authors whose every
    token falls in the dropped category disappear from the clustering."""
    kept = tuple(
        rec for rec in records if rec.category in ("std", spec.positive_category)
    )
    responses = {rec.nonstandard for rec in kept}
    if len(responses) < 2:
        raise BalanceError(
            f"degenerate contrast {spec.positive_category!r}: "
            "needs both standard and positive-category tokens"
        )
    return ContrastData(records=kept, spec=spec)
