"""Synthetic annotated corpora from a fully known generating model.

Used as the oracle for fitting, selection and end-to-end tests: the true age
curve is tabulated and linearly interpolated (deliberately not spline-
parameterized, so recovery tests do not share the fitted model's basis).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from .corpus import GENDERS, REGIONS, TokenRecord
from .glmm import FittedGlmm, GlmmError

# paper-shaped default: sharp adolescent peak then decay
DEFAULT_CURVE = ((13, 0.15), (15, 0.19), (28, 0.05), (41, 0.03), (49, 0.03))


@dataclass(frozen=True)
class SimSpec:
    n_per_cell: int = 1
    ages: tuple[int, int] = (13, 49)
    genders: tuple[str, ...] = GENDERS
    regions: tuple[str, ...] = REGIONS
    tokens_per_author: int = 12
    token_distribution: str = "fixed"  # or "poisson" (truncated at 3)
    true_curve: tuple = DEFAULT_CURVE  # (age, probability) table for the reference cell
    region_offsets: dict = field(default_factory=dict)  # log-odds shifts
    gender_offsets: dict = field(default_factory=dict)
    sigma: float = 0.0
    positive_category: str = "chat"
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.token_distribution not in ("fixed", "poisson"):
            raise ValueError("token_distribution must be 'fixed' or 'poisson'")
        ages = [a for a, _ in self.true_curve]
        probs = [p for _, p in self.true_curve]
        if not all(0.0 < p < 1.0 for p in probs):
            raise ValueError("curve probabilities must lie in (0, 1)")
        if ages[0] > self.ages[0] or ages[-1] < self.ages[1]:
            raise ValueError("true_curve must cover the configured age range")


def curve_probability(spec: SimSpec, age: float) -> float:
    """Baseline (reference-cell) probability at an age, by interpolation."""
    xs = np.array([a for a, _ in spec.true_curve], dtype=float)
    ps = np.array([p for _, p in spec.true_curve], dtype=float)
    return float(np.interp(age, xs, ps))


def generate_corpus(spec: SimSpec) -> tuple[list[TokenRecord], dict]:
    """Draw one synthetic annotated corpus plus its exact generating truth.

    Each author gets an independent substream spawned from the master seed,
    so generation is reproducible regardless of iteration scheme.
    """
    master = np.random.SeedSequence(spec.seed)
    cells = [
        (age, gender, region)
        for age in range(spec.ages[0], spec.ages[1] + 1)
        for gender in spec.genders
        for region in spec.regions
    ]
    n_authors = len(cells) * spec.n_per_cell
    children = master.spawn(n_authors)
    records: list[TokenRecord] = []
    idx = 0
    for age, gender, region in cells:
        base = logit(curve_probability(spec, age))
        eta0 = (
            base
            + spec.region_offsets.get(region, 0.0)
            + spec.gender_offsets.get(gender, 0.0)
        )
        for _ in range(spec.n_per_cell):
            rng = np.random.default_rng(children[idx])
            author_id = f"a{idx:06d}"
            idx += 1
            b = rng.normal(0.0, spec.sigma) if spec.sigma > 0 else 0.0
            prob = expit(eta0 + b)
            if spec.token_distribution == "fixed":
                n_tok = spec.tokens_per_author
            else:
                n_tok = max(3, int(rng.poisson(spec.tokens_per_author)))
            flags = rng.random(n_tok) < prob
            for t, nonstd in enumerate(flags):
                records.append(
                    TokenRecord(
                        surface="xx" if nonstd else "ww",
                        nonstandard=bool(nonstd),
                        category=spec.positive_category if nonstd else "std",
                        post_id=f"p-{author_id}",
                        author_id=author_id,
                        age=age,
                        gender=gender,
                        region=region,
                    )
                )
    truth = {
        "curve": tuple(spec.true_curve),
        "region_offsets": dict(spec.region_offsets),
        "gender_offsets": dict(spec.gender_offsets),
        "sigma": spec.sigma,
        "seed": spec.seed,
    }
    return records, truth


def recovery_report(fitted: FittedGlmm, truth: dict) -> list[dict]:
    """Standardized estimation errors against the generating truth.

    Covers the treatment-coded region/gender coefficients and sigma; rows with
    |error| / SE > 4 are flagged. Raises when the truth names a shifted level
    the fitted model has no coefficient for.
    """
    rows = []

    def add(name, estimate, true_value, se):
        z = abs(estimate - true_value) / se if se > 0 else math.inf
        rows.append(
            {
                "parameter": name,
                "estimate": estimate,
                "truth": true_value,
                "se": se,
                "abs_z": z,
                "flag": z > 4.0,
            }
        )

    for kind, offsets in (("region", truth.get("region_offsets", {})),
                          ("gender", truth.get("gender_offsets", {}))):
        for level, offset in offsets.items():
            name = f"{kind}[{level}]"
            if name not in fitted.column_names:
                if offset != 0.0:
                    raise GlmmError(
                        f"truth has a nonzero {name} offset but the model has no such term"
                    )
                continue
            idx = fitted.column_names.index(name)
            add(name, float(fitted.beta[idx]), float(offset), float(fitted.se[idx]))
    add("sigma", fitted.sigma, float(truth["sigma"]), fitted.sigma_se)
    return rows
