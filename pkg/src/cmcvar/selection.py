"""Forward stepwise construction of the fixed-effects structure.

Stage 1 adds main effects one at a time, each time accepting the candidate
with the smallest likelihood-ratio p-value below alpha; stage 2 does the same
over two-way interactions whose parent mains were both accepted. Candidates
that never enter are still reported with their test against the final model
of their stage, so the trace always covers every candidate exactly once.
Ties break on fewest degrees of freedom, then term name.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import chi2 as chi2_dist

from .balance import ContrastData, ContrastSpec
from .glmm import (
    INTERACTION_TERMS,
    MAIN_TERMS,
    FittedGlmm,
    GlmmError,
    LrTestResult,
    design_matrix,
    fit_glmm,
    lr_test,
)
from .rcs import validate_knots


@dataclass(frozen=True)
class AnalysisSpec:
    contrast: ContrastSpec
    knots: tuple
    candidate_mains: tuple[str, ...] = MAIN_TERMS
    alpha: float = 0.05
    region_ref: str = "brabant"
    gender_ref: str = "f"
    method: object = "laplace"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        validate_knots(self.knots)
        unknown = set(self.candidate_mains) - set(MAIN_TERMS)
        if unknown:
            raise ValueError(f"unknown candidate mains {sorted(unknown)}")

    def candidate_interactions(self, included_mains) -> list[str]:
        included = set(included_mains)
        return [
            term
            for term in INTERACTION_TERMS
            if set(term.split(":")) <= included
        ]


@dataclass(frozen=True)
class StepRecord:
    term: str
    chi2: Optional[float]
    df: Optional[int]
    p: Optional[float]
    accepted: bool
    loglik: Optional[float]  # of the model including the term
    note: str = ""


class _FitCache:
    """Refit-from-scratch per term set, memoized within one stepwise run."""

    def __init__(self, data: ContrastData, spec: AnalysisSpec):
        self.data = data
        self.spec = spec
        self._fits: dict[frozenset, FittedGlmm] = {}

    def fit(self, terms) -> FittedGlmm:
        key = frozenset(terms)
        if key not in self._fits:
            design = design_matrix(
                self.data,
                self.spec.knots,
                terms=sorted(key),
                region_ref=self.spec.region_ref,
                gender_ref=self.spec.gender_ref,
            )
            self._fits[key] = fit_glmm(design, method=self.spec.method)
        return self._fits[key]


def _stage(cache, base_terms, candidates, alpha, trace):
    """One greedy stage; returns the accepted term list (base included)."""
    current = list(base_terms)
    remaining = list(candidates)
    while remaining:
        base_fit = cache.fit(current)
        results = []
        for term in remaining:
            try:
                fit = cache.fit(current + [term])
                test = lr_test(fit, base_fit)
            except GlmmError as exc:
                results.append((term, None, None, str(exc)))
                continue
            results.append((term, fit, test, ""))
        testable = [r for r in results if r[2] is not None]
        best = None
        if testable:
            best = min(testable, key=lambda r: (r[2].p, r[2].df, r[0]))
        if best is None or best[2].p >= alpha:
            break
        term, fit, test, _ = best
        trace.append(
            StepRecord(
                term=term,
                chi2=test.chi2,
                df=test.df,
                p=test.p,
                accepted=True,
                loglik=fit.loglik,
            )
        )
        current.append(term)
        remaining.remove(term)
    # report the never-accepted candidates against the stage-final model
    final_fit = cache.fit(current)
    for term in remaining:
        try:
            fit = cache.fit(current + [term])
            test = lr_test(fit, final_fit)
        except GlmmError as exc:
            trace.append(
                StepRecord(term=term, chi2=None, df=None, p=None,
                           accepted=False, loglik=None, note=f"untestable: {exc}")
            )
            continue
        trace.append(
            StepRecord(
                term=term,
                chi2=test.chi2,
                df=test.df,
                p=test.p,
                accepted=False,
                loglik=fit.loglik,
            )
        )
    return current


def forward_stepwise(
    data: ContrastData, spec: AnalysisSpec
) -> tuple[FittedGlmm, list[StepRecord]]:
    """Two-stage forward selection: mains first, then two-way interactions
    between accepted mains. Returns the final fit and the full trace."""
    cache = _FitCache(data, spec)
    trace: list[StepRecord] = []
    mains = _stage(cache, [], list(spec.candidate_mains), spec.alpha, trace)
    interactions = spec.candidate_interactions(mains)
    final_terms = _stage(cache, mains, interactions, spec.alpha, trace)
    return cache.fit(final_terms), trace


def included_terms(trace: Sequence[StepRecord]) -> list[str]:
    return [rec.term for rec in trace if rec.accepted]


def nonlinearity_check(
    data: ContrastData,
    spec: AnalysisSpec,
    extra_knot: float,
    final_terms: Sequence[str],
) -> LrTestResult:
    """LR test of one added interior knot against the accepted model."""
    knots = np.asarray(spec.knots, dtype=float)
    if np.any(knots == extra_knot):
        raise ValueError(f"extra knot {extra_knot} coincides with an existing knot")
    bigger = tuple(sorted([*knots.tolist(), float(extra_knot)]))
    cache = _FitCache(data, spec)
    base = cache.fit(list(final_terms))
    wide_design = design_matrix(
        data,
        bigger,
        terms=sorted(final_terms),
        region_ref=spec.region_ref,
        gender_ref=spec.gender_ref,
    )
    wide = fit_glmm(wide_design, method=spec.method)
    # nested by function-space inclusion even though column names differ
    df = wide.beta.size - base.beta.size
    chi2 = max(0.0, 2.0 * (wide.loglik - base.loglik))
    return LrTestResult(chi2=chi2, df=df, p=float(chi2_dist.sf(chi2, df)))


def trace_to_tsv(trace: Sequence[StepRecord], path):
    """Serialize a step trace as TSV (term, chi2, df, p, accepted)."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("term\tchi2\tdf\tp\taccepted\tnote\n")
        for rec in trace:
            chi2 = f"{rec.chi2:.4f}" if rec.chi2 is not None else "NA"
            df = str(rec.df) if rec.df is not None else "NA"
            p = f"{rec.p:.6g}" if rec.p is not None else "NA"
            handle.write(
                f"{rec.term}\t{chi2}\t{df}\t{p}\t{int(rec.accepted)}\t{rec.note}\n"
            )
