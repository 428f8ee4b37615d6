"""Corpus toolkit for quantifying age, gender and region effects on
non-standard word use in social-network posts."""

__version__ = "0.1.0"

from .corpus import AuthorMeta, Post, TokenRecord, load_corpus, load_tokens, save_tokens
from .normalize import NormalizerConfig, flood_reduce, normalize_post, select_eligible
from .annotate import LexiconSet, annotate_corpus, categorize, classify_nonstandard
from .balance import CellGrid, ContrastSpec, balanced_sample, build_contrast, min_cell_size
from .rcs import age_term_df, rcs_basis, rcs_matrix
from .glmm import (
    FittedGlmm,
    GlmmData,
    design_matrix,
    fit_glmm,
    lr_test,
    marginal_loglik,
    predict_probability,
    wald_test,
)
from .selection import AnalysisSpec, StepRecord, forward_stepwise, nonlinearity_check
from .simulate import SimSpec, generate_corpus, recovery_report
