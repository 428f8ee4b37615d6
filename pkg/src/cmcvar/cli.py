"""Command-line orchestration of the full pipeline.

Subcommands read and write the documented file formats, so every stage is
independently scriptable; ``pipeline`` chains them all and writes a stage-
count ledger, step traces, fitted models, effect-curve tables and plots into
the output directory. Outputs are a pure function of (inputs, config, seed).
"""

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import annotate, balance, corpus, glmm, normalize, selection, simulate
from .balance import BalanceError, CellGrid, ContrastSpec
from .corpus import CorpusError
from .glmm import ConvergenceError, FittedGlmm, GlmmError, SeparationError
from .selection import AnalysisSpec

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CONVERGENCE = 4

CONTRAST_KEYS = {"chat": "chat", "regional": "reg"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    corpus_path: Path
    standard_words: Path
    names_and_foreign: Path
    regional_variants: Path
    chat_forms: Path
    overrides: Path | None
    out_dir: Path
    normalizer: normalize.NormalizerConfig
    grid: CellGrid
    n_per_cell: object  # int or "auto"
    analyses: dict  # contrast name -> AnalysisSpec
    seed: int
    quadrature: object = "laplace"


def load_config(path, overrides_cli=None) -> PipelineConfig:
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    overrides_cli = overrides_cli or {}

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else path.parent / p

    try:
        paths = raw["paths"]
        norm = raw.get("normalize", {})
        bal = raw.get("balance", {})
        seed = overrides_cli.get("seed", raw.get("seed", 0))
        quadrature = overrides_cli.get("quadrature", raw.get("quadrature", "laplace"))
        grid = CellGrid(
            min_age=bal.get("min_age", 13),
            max_age=bal.get("max_age", 49),
            genders=tuple(bal.get("genders", corpus.GENDERS)),
            regions=tuple(bal.get("regions", corpus.REGIONS)),
        )
        analyses = {}
        for name, section in raw.get("analysis", {}).items():
            if name not in CONTRAST_KEYS:
                raise ConfigError(f"unknown analysis {name!r} (expected chat|regional)")
            analyses[name] = AnalysisSpec(
                contrast=ContrastSpec(CONTRAST_KEYS[name]),
                knots=tuple(float(k) for k in section["knots"]),
                alpha=float(overrides_cli.get("alpha", section.get("alpha", 0.05))),
                gender_ref=section.get("gender_ref", "f"),
                method=quadrature,
            )
        required = {
            "corpus": "corpus_path",
            "standard_words": "standard_words",
            "names_and_foreign": "names_and_foreign",
            "regional_variants": "regional_variants",
            "chat_forms": "chat_forms",
        }
        kwargs = {}
        for key, attr in required.items():
            if key not in paths:
                raise ConfigError(f"missing paths.{key} in {path}")
            kwargs[attr] = resolve(paths[key])
        overrides_path = resolve(paths["overrides"]) if "overrides" in paths else None
        out_dir = Path(overrides_cli.get("out", resolve(paths.get("out", "out"))))
        config = PipelineConfig(
            out_dir=out_dir,
            overrides=overrides_path,
            normalizer=normalize.NormalizerConfig(
                flooding_cap=int(norm.get("flooding_cap", 3)),
                min_words=int(norm.get("min_words", 3)),
            ),
            grid=grid,
            n_per_cell=bal.get("n_per_cell", "auto"),
            analyses=analyses,
            seed=int(seed),
            quadrature=quadrature,
            **kwargs,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc
    for attr in ("corpus_path", "standard_words", "names_and_foreign",
                 "regional_variants", "chat_forms"):
        p = getattr(config, attr)
        if not p.exists():
            raise ConfigError(f"missing input file for {attr}: {p}")
    if config.overrides is not None and not config.overrides.exists():
        raise ConfigError(f"missing input file for overrides: {config.overrides}")
    return config


def load_lexicons(config: PipelineConfig) -> annotate.LexiconSet:
    return annotate.LexiconSet(
        standard_words=annotate.load_wordlist(config.standard_words),
        names_and_foreign=annotate.load_wordlist(config.names_and_foreign),
        regional_variants=annotate.load_regional(config.regional_variants),
        chat_forms=annotate.load_wordlist(config.chat_forms),
        overrides=annotate.load_overrides(config.overrides) if config.overrides else {},
    )


def effect_curve(model: FittedGlmm, spec: AnalysisSpec, ages, region, gender):
    """Predicted probability per age for one region/gender combination."""
    grid = CellGrid()
    if region not in corpus.REGIONS:
        raise GlmmError(f"unknown region {region!r}")
    if gender not in corpus.GENDERS:
        raise GlmmError(f"unknown gender {gender!r}")
    from .rcs import rcs_matrix

    curve = []
    for age in ages:
        x = np.zeros(model.beta.size)
        x[model.term_map["(intercept)"][0]] = 1.0
        values = {}
        if "age_spline" in model.term_map:
            basis = rcs_matrix([age], spec.knots)[0]
            for idx, val in zip(model.term_map["age_spline"], basis):
                x[idx] = val
                values[model.column_names[idx]] = val
        name = f"region[{region}]"
        if name in model.column_names:
            values[name] = 1.0
            x[model.column_names.index(name)] = 1.0
        name = f"gender[{gender}]"
        if name in model.column_names:
            values[name] = 1.0
            x[model.column_names.index(name)] = 1.0
        # interaction columns are products of their parents' values
        for term, idxs in model.term_map.items():
            if ":" not in term:
                continue
            for idx in idxs:
                a, b = model.column_names[idx].split(":")
                x[idx] = values.get(a, 0.0) * values.get(b, 0.0)
        curve.append((float(age), glmm.predict_probability(model, x)))
    return curve


def round_curves(curves: dict) -> dict:
    """Quantize curves to the TSV serialization precision, so a plot drawn
    now and one regenerated from the saved table are byte-identical."""
    return {
        region: [(float(f"{age:g}"), float(f"{prob:.6f}")) for age, prob in curve]
        for region, curve in curves.items()
    }


def curves_to_tsv(curves: dict, path):
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("region\tage\tprobability\n")
        for region, curve in curves.items():
            for age, prob in curve:
                handle.write(f"{region}\t{age:g}\t{prob:.6f}\n")


def emit_plots(curves: dict, knots, path):
    """One vector-graphic file with one labeled curve per region and knot
    markers on the age axis."""
    if not curves:
        raise ValueError("no curves to plot")
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "cmcvar"
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for region, curve in sorted(curves.items()):
        ages = [a for a, _ in curve]
        probs = [p for _, p in curve]
        ax.plot(ages, probs, label=region)
    for knot in knots:
        ax.annotate(
            "",
            xy=(knot, 0.0),
            xytext=(knot, -0.02),
            xycoords=("data", "axes fraction"),
            textcoords=("data", "axes fraction"),
            arrowprops={"arrowstyle": "->"},
            annotation_clip=False,
        )
    ax.set_xlabel("age")
    ax.set_ylabel("probability")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def run_pipeline(config: PipelineConfig) -> int:
    """ingest -> normalize/select -> annotate -> balance -> contrasts ->
    stepwise fits -> reports. Writes all artifacts under config.out_dir."""
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    ledger: list[tuple[str, object]] = []

    posts = corpus.load_corpus(config.corpus_path)
    ledger.append(("posts_loaded", len(posts)))
    ledger.append(("authors_loaded", len({p.author.author_id for p in posts})))

    eligible = normalize.select_eligible(posts, config.normalizer, seed=config.seed)
    ledger.append(("posts_eligible", len(eligible)))

    if config.n_per_cell == "auto":
        n_per_cell, smallest = balance.min_cell_size(eligible, config.grid)
        ledger.append(("smallest_cell", f"{smallest[0]}/{smallest[1]}/{smallest[2]}"))
    else:
        n_per_cell = int(config.n_per_cell)
    ledger.append(("n_per_cell", n_per_cell))

    sampled = balance.balanced_sample(eligible, n_per_cell, seed=config.seed, grid=config.grid)
    balance.balance_report(eligible, sampled, config.grid, out / "balance_report.tsv")
    ledger.append(("posts_balanced", len(sampled)))

    lexicons = load_lexicons(config)
    records, counts = annotate.annotate_corpus(sampled, lexicons, config.normalizer)
    corpus.save_tokens(records, out / "tokens.tsv")
    ledger.append(("words_total", len(records)))
    ledger.append(("words_standard", counts["std"]))
    ledger.append(("words_chat", counts["chat"]))
    ledger.append(("words_regional", counts["reg"]))

    profile = annotate.age_profile(records)
    with open(out / "age_profile.tsv", "w", encoding="utf-8", newline="\n") as handle:
        handle.write("age\tmean_nonstandard_proportion\tauthors\n")
        for age, prop, count in profile:
            handle.write(f"{age}\t{prop:.6f}\t{count}\n")

    for name, spec in sorted(config.analyses.items()):
        data = balance.build_contrast(records, spec.contrast)
        ccounts = data.counts()
        ledger.append((f"{name}_words", ccounts["words"]))
        ledger.append((f"{name}_standard", ccounts["standard"]))
        ledger.append((f"{name}_positive", ccounts["positive"]))
        ledger.append((f"{name}_authors", ccounts["authors"]))
        model, trace = selection.forward_stepwise(data, spec)
        selection.trace_to_tsv(trace, out / f"steptrace_{name}.tsv")
        with open(out / f"model_{name}.txt", "w", encoding="utf-8", newline="\n") as handle:
            handle.write(glmm.format_model(model))
        ages = np.linspace(spec.knots[0], spec.knots[-1], 73)
        curves = round_curves({
            region: effect_curve(model, spec, ages, region, spec.gender_ref)
            for region in config.grid.regions
        })
        curves_to_tsv(curves, out / f"curves_{name}.tsv")
        emit_plots(curves, spec.knots, out / f"curves_{name}.svg")

    with open(out / "stage_counts.tsv", "w", encoding="utf-8", newline="\n") as handle:
        handle.write("stage\tvalue\n")
        for stage, value in ledger:
            handle.write(f"{stage}\t{value}\n")
    return EXIT_OK


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--out", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmcvar",
        description="Age/gender/region effects on non-standard word use",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="run the full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--quadrature", default=None, help="laplace | agq:N")
    _add_common(p)

    p = sub.add_parser("ingest", help="validate a corpus file and report counts")
    p.add_argument("corpus")

    p = sub.add_parser("normalize", help="print normalized tokens per post")
    p.add_argument("corpus")
    p.add_argument("--flooding-cap", type=int, default=3)
    p.add_argument("--min-words", type=int, default=3)

    p = sub.add_parser("annotate", help="annotate eligible posts into a token table")
    p.add_argument("--config", required=True)
    _add_common(p)

    p = sub.add_parser("balance", help="report cell sizes of eligible posts")
    p.add_argument("--config", required=True)
    _add_common(p)

    p = sub.add_parser("fit", help="fit one contrast from a saved token table")
    p.add_argument("tokens")
    p.add_argument("--contrast", choices=("chat", "regional"), required=True)
    p.add_argument("--knots", required=True, help="comma-separated, e.g. 13,15,17,33,49")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--quadrature", default="laplace")
    _add_common(p)

    p = sub.add_parser("simulate", help="generate a synthetic annotated corpus")
    p.add_argument("--n-per-cell", type=int, default=1)
    p.add_argument("--sigma", type=float, default=0.86)
    p.add_argument("--tokens-per-author", type=int, default=12)
    p.add_argument("--out", required=True, help="token-table output path")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("report", help="re-emit curve plots from a saved curve table")
    p.add_argument("curves")
    p.add_argument("--knots", required=True)
    p.add_argument("--out", required=True)
    return parser


def _parse_quadrature(value):
    if value is None or value == "laplace":
        return "laplace"
    if value.startswith("agq:"):
        return ("agq", int(value.split(":", 1)[1]))
    raise ConfigError(f"unknown quadrature {value!r} (expected laplace or agq:N)")


def _cli_overrides(args):
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["out"] = args.out
    if getattr(args, "alpha", None) is not None:
        overrides["alpha"] = args.alpha
    if getattr(args, "quadrature", None) is not None:
        overrides["quadrature"] = _parse_quadrature(args.quadrature)
    return overrides


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError,) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CorpusError, BalanceError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SeparationError, ConvergenceError, GlmmError) as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


def _dispatch(args) -> int:
    if args.command == "pipeline":
        config = load_config(args.config, _cli_overrides(args))
        return run_pipeline(config)
    if args.command == "ingest":
        posts = corpus.load_corpus(args.corpus)
        print(f"posts\t{len(posts)}")
        print(f"authors\t{len({p.author.author_id for p in posts})}")
        return EXIT_OK
    if args.command == "normalize":
        cfg = normalize.NormalizerConfig(
            flooding_cap=args.flooding_cap, min_words=args.min_words
        )
        for post in corpus.load_corpus(args.corpus):
            tokens = normalize.normalize_post(post.raw_text, cfg)
            print(f"{post.post_id}\t{' '.join(tokens)}")
        return EXIT_OK
    if args.command == "annotate":
        config = load_config(args.config, _cli_overrides(args))
        config.out_dir.mkdir(parents=True, exist_ok=True)
        posts = corpus.load_corpus(config.corpus_path)
        eligible = normalize.select_eligible(posts, config.normalizer, seed=config.seed)
        records, counts = annotate.annotate_corpus(
            eligible, load_lexicons(config), config.normalizer
        )
        n = corpus.save_tokens(records, config.out_dir / "tokens.tsv")
        print(f"tokens\t{n}")
        for key in ("std", "chat", "reg"):
            print(f"{key}\t{counts[key]}")
        return EXIT_OK
    if args.command == "balance":
        config = load_config(args.config, _cli_overrides(args))
        posts = corpus.load_corpus(config.corpus_path)
        eligible = normalize.select_eligible(posts, config.normalizer, seed=config.seed)
        n, smallest = balance.min_cell_size(eligible, config.grid)
        print(f"min_cell_size\t{n}")
        print(f"smallest_cell\t{smallest[0]}/{smallest[1]}/{smallest[2]}")
        return EXIT_OK
    if args.command == "fit":
        records = corpus.load_tokens(args.tokens)
        spec = AnalysisSpec(
            contrast=ContrastSpec(CONTRAST_KEYS[args.contrast]),
            knots=tuple(float(k) for k in args.knots.split(",")),
            alpha=args.alpha,
            method=_parse_quadrature(args.quadrature),
        )
        data = balance.build_contrast(records, spec.contrast)
        model, trace = selection.forward_stepwise(data, spec)
        out = Path(args.out) if args.out else Path(".")
        out.mkdir(parents=True, exist_ok=True)
        selection.trace_to_tsv(trace, out / f"steptrace_{args.contrast}.tsv")
        with open(out / f"model_{args.contrast}.txt", "w", encoding="utf-8", newline="\n") as handle:
            handle.write(glmm.format_model(model))
        print(glmm.format_model(model), end="")
        return EXIT_OK
    if args.command == "simulate":
        spec = simulate.SimSpec(
            n_per_cell=args.n_per_cell,
            sigma=args.sigma,
            tokens_per_author=args.tokens_per_author,
            seed=args.seed,
        )
        records, truth = simulate.generate_corpus(spec)
        n = corpus.save_tokens(records, args.out)
        truth_path = Path(args.out).with_suffix(".truth.json")
        with open(truth_path, "w", encoding="utf-8") as handle:
            json.dump(truth, handle, indent=2, sort_keys=True)
        print(f"tokens\t{n}")
        return EXIT_OK
    if args.command == "report":
        curves: dict[str, list] = {}
        with open(args.curves, encoding="utf-8") as handle:
            header = handle.readline()
            if header.rstrip("\n") != "region\tage\tprobability":
                raise ValueError(f"unexpected curve-table header {header!r}")
            for line in handle:
                region, age, prob = line.rstrip("\n").split("\t")
                curves.setdefault(region, []).append((float(age), float(prob)))
        knots = tuple(float(k) for k in args.knots.split(","))
        emit_plots(curves, knots, args.out)
        return EXIT_OK
    raise ConfigError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
