"""Command-line entry point for the corpus, training, generation and evaluation pipeline."""

from __future__ import annotations

import argparse
import inspect
import json
import logging
import os
import sys
from dataclasses import replace

import pandas as pd
from dotenv import load_dotenv
from tqdm import tqdm

from . import __version__
from .context import DAConfig, Registry, create_run_context
from .corpus import corpus_stats as compute_corpus_stats
from .corpus import deduplicate, expand, read_targets, split, targets_from_instances, write_targets
from .dataset_io import read_corpus, read_outputs, write_corpus, write_manifest, write_outputs, write_review
from .delex import consistency_check, prepare_instance
from .dialogue_acts import parse_da, serialize_da
from .evaluation import EvalPair, bootstrap_test, evaluate, read_per_instance
from .exceptions import (
    CheckpointFormatError,
    CommandNotFoundError,
    CorpusFormatError,
    DASyntaxError,
    EmptyCorpusError,
    EmptyDialogueActError,
    MisalignedRowError,
    MissingAssignmentError,
    MissingPrerequisiteError,
    MorphoNLGError,
    TagAlphabetError,
    TagLengthError,
    TargetCountError,
    UnknownDATypeError,
    UnknownSlotError,
    UnknownSlotValueError,
)
from .experiment import ExperimentConfig, variant_grid
from .generator import (
    InputMode,
    OutputMode,
    Seq2SeqGenerator,
    beam_decode,
    deinterleave,
    realize_lemma_tags,
    train_generator,
)
from .gradcheck import CHECKS, TOLERANCE, results_frame, run_gradcheck
from .lexicalization import (
    BiRnnLm,
    LexStrategy,
    LexStrategyKind,
    form_frequencies,
    lexicalize_output,
    merged_tokens,
    train_bi_lm,
)
from .morphology import (
    ingest_dictionary,
    lexicon_rows,
    load_dictionary,
    load_lexicon,
    save_dictionary,
    save_lexicon,
)
from .ngram_lm import load_lm, save_lm, train_lm
from .reranker import Reranker, rerank, train_reranker
from .training_log import TrainingLog, plot_log

logger = logging.getLogger(__name__)

load_dotenv()

EXIT_OK = 0
EXIT_INCONSISTENT = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# malformed or inconsistent input data
DATA_ERRORS = (
    CheckpointFormatError,
    CorpusFormatError,
    DASyntaxError,
    EmptyCorpusError,
    EmptyDialogueActError,
    MisalignedRowError,
    MissingAssignmentError,
    TagAlphabetError,
    TagLengthError,
    TargetCountError,
    UnknownDATypeError,
    UnknownSlotError,
    UnknownSlotValueError,
)

GENERATOR_OVERRIDES = (
    "mode", "input_mode", "embedding_size", "cell_size", "attention_size", "learning_rate", "dropout",
    "batch_size", "min_passes", "max_passes", "patience", "beam_size", "max_output_len",
)
RERANKER_OVERRIDES = ("passes", "validation_start", "learning_rate", "batch_size")
LM_OVERRIDES = ("max_passes", "learning_rate", "batch_size", "embedding_size", "cell_size")


def process_command(command, args, context):
    command_dispatcher = {
        "bootstrap": bootstrap,
        "evaluate": evaluate_command,
        "expand": expand_command,
        "generate": generate,
        "gradcheck": gradcheck,
        "lexicalize": lexicalize,
        "plot": plot,
        "prepare": prepare,
        "split": split_command,
        "stats": stats,
        "sweep": sweep,
        "targets": targets,
        "train generator": train_generator_command,
        "train lexicalizer-lm": train_lexicalizer_lm,
        "train ngram-lm": train_ngram_lm,
        "train reranker": train_reranker_command,
    }

    if command in command_dispatcher:
        command_function = command_dispatcher[command]

        sig = inspect.signature(command_function)
        params = list(sig.parameters)

        kwargs = {"args": args, "context": context}
        dynamic_args = [kwargs[param] for param in params if param in kwargs]

        return command_function(*dynamic_args)
    else:
        raise CommandNotFoundError(command)


def _require(context, path, what="Input file"):
    if path is None or not os.path.exists(path):
        raise MissingPrerequisiteError(path, what)
    context.inputs[str(path)] = what
    return path


def _out(context, name, override=None):
    path = override or os.path.join(context.output_dir, name)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    context.outputs.append(str(path))
    return path


def _fresh_log(context, name, stage):
    path = _out(context, name)
    if os.path.exists(path):
        os.remove(path)
    return TrainingLog(path, stage=stage)


def _load_corpus(context, path, what="Corpus"):
    return read_corpus(_require(context, path, what), context.da_config)


def _load_lexicon(context, path):
    return load_lexicon(_require(context, path, "Lexicon"))


def _tokens(value):
    return value.split() if isinstance(value, str) else list(value)


def _override(config, args, names):
    changes = {name: getattr(args, name) for name in names if getattr(args, name, None) is not None}
    return replace(config, **changes) if changes else config


def _unique_das(instances):
    seen = {}
    for inst in instances:
        seen.setdefault(serialize_da(inst.da), inst.da)
    return list(seen.values())


def _references(instances):
    refs = {}
    for inst in instances:
        refs.setdefault(serialize_da(inst.da), []).append(list(inst.text))
    return refs


def prepare(args, context):
    instances = _load_corpus(context, args.dataset, "Dataset")
    lex = _load_lexicon(context, args.lexicon)
    da_config = context.da_config

    report = consistency_check(instances, lex, da_config)
    prepared = []
    rows = []
    for inst in tqdm(instances, desc="prepare", disable=None):
        prepared_inst, _ = prepare_instance(inst, lex, da_config)
        prepared.append(prepared_inst)
        if inst.lemmas is not None and inst.tags is not None and len(inst.lemmas) == len(inst.text):
            rows.extend(zip(inst.text, inst.lemmas, inst.tags))
    lex = lex.with_frequencies(form_frequencies(instances, lex, da_config))
    dictionary = ingest_dictionary([*rows, *lexicon_rows(lex)])

    write_corpus(prepared, _out(context, "prepared.jsonl"))
    with open(_out(context, "consistency.txt"), "w", encoding="utf-8") as f:
        f.write(report.summary() + "\n")
    save_lexicon(lex, _out(context, "lexicon.tsv"))
    save_dictionary(dictionary, _out(context, "dictionary.tsv"))

    n_signatures = len(deduplicate(prepared, da_config))
    print(report.summary())
    print(f"{n_signatures} signatures")
    if not report.clean and not args.allow_missing:
        print(f"Error: {report.n_missing} missing mentions; rerun with --allow-missing to accept them")
        return EXIT_INCONSISTENT
    return EXIT_OK


def stats(args, context):
    instances = _load_corpus(context, args.corpus)
    lex = _load_lexicon(context, args.lexicon) if args.lexicon else None
    frame = compute_corpus_stats(instances, lex, context.da_config).to_frame()
    frame.to_csv(_out(context, "stats.csv"), index=False, float_format="%.4f")
    print(frame.to_string(index=False))


def split_command(args, context):
    instances = _load_corpus(context, args.corpus)
    ratios = tuple(args.ratios) if args.ratios else context.experiment.split_ratios
    spec = split(instances, ratios, context.seed, config=context.da_config)
    for part, part_instances in spec.partition(instances, context.da_config).items():
        write_corpus(part_instances, _out(context, f"{part}.jsonl"))
    summary = spec.summary_frame()
    summary.to_csv(_out(context, "split.csv"), float_format="%.6f")
    print(summary.to_string(float_format=lambda x: f"{x:.4f}"))
    for warning in spec.warnings:
        print(f"Warning: {warning}")


def targets(args, context):
    instances = _load_corpus(context, args.corpus)
    counts = targets_from_instances(instances, context.da_config)
    path = _out(context, "targets.json", args.out)
    write_targets(counts, path)
    print(f"Wrote targets for {len(counts)} signatures ({sum(counts.values())} instances) to {path}")


def expand_command(args, context):
    instances = _load_corpus(context, args.corpus)
    counts = read_targets(_require(context, args.targets, "Targets file"))
    lm = load_lm(_require(context, args.lm, "N-gram LM"))
    lex = _load_lexicon(context, args.lexicon)
    temperature = args.temperature if args.temperature is not None else context.experiment.lm_temperature

    uniques = deduplicate(instances, context.da_config)
    result = expand(uniques, counts, lm, lex, context.seed, context.da_config, temperature)
    write_corpus(result.instances, _out(context, "expanded.jsonl"))
    write_review(result.review, _out(context, "review.tsv"))
    print(f"{len(result.instances)} instances ({len(result.review)} relexicalized copies)")


def train_generator_command(args, context):
    config = _override(context.experiment.generator, args, GENERATOR_OVERRIDES).validate()
    train = _load_corpus(context, args.train, "Training corpus")
    dev = _load_corpus(context, args.dev, "Development corpus") if args.dev else []
    log = _fresh_log(context, "log-generator.csv", "generator")
    model, _ = train_generator(config, train, dev, context.seed, context.da_config, log)
    path = _out(context, "generator.ckpt", args.out)
    model.save(path, {"seed": context.seed})
    print(f"Saved generator checkpoint to {path}")


def train_reranker_command(args, context):
    config = _override(context.experiment.reranker, args, RERANKER_OVERRIDES).validate()
    mode = OutputMode(args.mode or context.experiment.generator.mode)
    train = _load_corpus(context, args.train, "Training corpus")
    dev = _load_corpus(context, args.dev, "Development corpus") if args.dev else []
    log = _fresh_log(context, "log-reranker.csv", "reranker")
    reranker, _ = train_reranker(config, train, dev, context.seed, mode, context.da_config, log)
    path = _out(context, "reranker.ckpt", args.out)
    reranker.save(path)
    print(f"Saved reranker checkpoint to {path}")


def train_lexicalizer_lm(args, context):
    config = _override(context.experiment.lm, args, LM_OVERRIDES).validate()
    lex = _load_lexicon(context, args.lexicon)
    train = _load_corpus(context, args.train, "Training corpus")
    dev = _load_corpus(context, args.dev, "Development corpus") if args.dev else []
    merge = config.merge_multiword
    corpus = [merged_tokens(inst, lex, context.da_config, merge) for inst in train]
    dev_corpus = [merged_tokens(inst, lex, context.da_config, merge) for inst in dev]
    log = _fresh_log(context, "log-lexicalizer-lm.csv", "lexicalizer-lm")
    lm, _ = train_bi_lm(corpus, config, dev_corpus, context.seed, log)
    path = _out(context, "bi_lm.ckpt", args.out)
    lm.save(path)
    print(f"Saved lexicalizer LM checkpoint to {path}")


def train_ngram_lm(args, context):
    instances = _load_corpus(context, args.train, "Training corpus")
    order = args.order or context.experiment.ngram_order
    sentences = [u.lm_tokens for group in deduplicate(instances, context.da_config).values() for u in group]
    lm = train_lm(sentences, order)
    path = _out(context, "ngram.lm", args.out)
    save_lm(lm, path)
    print(f"Saved order-{order} n-gram LM over {len(lm.vocab)} tokens to {path}")


def _generate_rows(model, das, reranker=None, da_config=None, beam_size=None, max_len=None, penalty_weight=None):
    beam_size = beam_size or model.config.beam_size
    max_len = max_len or model.config.max_output_len
    rows = []
    for da in tqdm(das, desc="generate", disable=None):
        candidates = beam_decode(model, model.encode_da(da, da_config), beam_size, max_len)
        if reranker is not None:
            candidates = rerank(candidates, da, reranker, da_config, penalty_weight)
        rows.append({"da": serialize_da(da), "mode": model.config.mode.value, "delex": candidates[0].output})
    return rows


def generate(args, context):
    model = Seq2SeqGenerator.load(_require(context, args.checkpoint, "checkpoint"))
    reranker = Reranker.load(_require(context, args.reranker, "reranker checkpoint")) if args.reranker else None
    instances = _load_corpus(context, args.corpus)
    weight = args.rerank_weight if args.rerank_weight is not None else context.experiment.rerank_weight
    rows = _generate_rows(
        model, _unique_das(instances), reranker, context.da_config, args.beam_size, args.max_len, weight
    )
    path = _out(context, "outputs.jsonl", args.out)
    write_outputs(rows, path)
    print(f"Generated {len(rows)} outputs to {path}")


def _lexicalize_rows(rows, lex, strategy, dictionary=None, da_config=None, mode=None):
    out = []
    for row in tqdm(rows, desc="lexicalize", disable=None):
        row_mode = OutputMode(row.get("mode") or mode or OutputMode.WORD_FORMS)
        tokens = _tokens(row["delex"])
        if row_mode is OutputMode.LEMMA_TAG:
            if dictionary is None:
                raise MissingPrerequisiteError(None, "Morphological dictionary for lemma-tag outputs")
            lemmas, tags = deinterleave(tokens)
            tokens = realize_lemma_tags(lemmas, tags, dictionary, keep_placeholder_tags=True)
        da = parse_da(row["da"], da_config)
        out.append({**row, "output": lexicalize_output(tokens, da, lex, strategy, row_mode, da_config)})
    return out


def lexicalize(args, context):
    rows = read_outputs(_require(context, args.outputs, "System outputs"), required=("da", "delex"))
    lex = _load_lexicon(context, args.lexicon)
    dictionary = load_dictionary(_require(context, args.dictionary, "Dictionary")) if args.dictionary else None
    kind = LexStrategyKind(args.strategy or context.experiment.lexicalizer)
    lm = BiRnnLm.load(_require(context, args.lm, "lexicalizer LM checkpoint")) if args.lm else None
    if kind is LexStrategyKind.RNN_LM and lm is None:
        raise MissingPrerequisiteError(args.lm, "lexicalizer LM checkpoint")
    strategy = LexStrategy(kind, context.seed, lm)

    lexicalized = _lexicalize_rows(rows, lex, strategy, dictionary, context.da_config, args.mode)
    path = _out(context, "lexicalized.jsonl", args.out)
    write_outputs(lexicalized, path)
    print(f"Lexicalized {len(lexicalized)} outputs with the {kind.value} strategy to {path}")


def _evaluation_pairs(rows, references, da_config=None, path="<outputs>"):
    pairs = []
    for index, row in enumerate(rows):
        refs = references.get(row["da"])
        if refs is None:
            raise CorpusFormatError(path, index + 1, f"no reference for DA {row['da']}")
        delex = _tokens(row["delex"]) if "delex" in row else None
        pairs.append(EvalPair(_tokens(row["output"]), refs, parse_da(row["da"], da_config), delex))
    return pairs


def _save_report(context, report, name):
    report.save(_out(context, f"{name}.csv"), _out(context, f"{name}-per-instance.csv"))
    with open(_out(context, f"{name}.txt"), "w", encoding="utf-8") as f:
        f.write(report.to_string() + "\n")


def evaluate_command(args, context):
    rows = read_outputs(_require(context, args.outputs, "System outputs"))
    references = _references(_load_corpus(context, args.corpus, "Reference corpus"))
    report = evaluate(_evaluation_pairs(rows, references, context.da_config, args.outputs), context.da_config)
    _save_report(context, report, args.name)
    print(report.to_string())


def bootstrap(args, context):
    a = read_per_instance(_require(context, args.system_a, "Per-instance scores"), args.metric)
    b = read_per_instance(_require(context, args.system_b, "Per-instance scores"), args.metric)
    p = bootstrap_test(a, b, args.resamples, context.seed)
    print(f"p = {p:.4f} ({args.metric}, {args.resamples} resamples): share of resamples where B >= A")


def gradcheck(args, context):
    results = run_gradcheck(args.instances, context.seed, args.tolerance, args.ops)
    frame = results_frame(results)
    frame.to_csv(_out(context, "gradcheck.csv"), index=False)
    print(frame.groupby("op", sort=False)["max_relative_error"].max().to_string())
    failed = sorted({r.op for r in results if not r.passed})
    if failed:
        print(f"Error: gradient check failed for {', '.join(failed)}")
        return EXIT_INCONSISTENT
    print(f"All {len(results)} gradient checks passed")
    return EXIT_OK


def plot(args, context):
    path = plot_log(_require(context, args.log, "Training log"), context.output_dir, args.stage, args.size)
    context.outputs.append(path)
    print(f"Saved plot to {path}")


def _sweep_plan(experiment, output_dir):
    return [
        {
            "variant": v.name,
            "mode": v.mode.value,
            "input_mode": v.input_mode.value,
            "lexicalizer": v.lexicalizer.value,
            "model_dir": os.path.join(output_dir, "sweep", v.model_name),
            "seeds": list(experiment.seeds),
        }
        for v in variant_grid()
    ]


def sweep(args, context):
    """Write the variant grid; with ``--run``, train and evaluate every variant for every seed.

    Variants differing only in the lexicalizer share one generator and reranker per seed.
    """
    experiment = context.experiment
    seeds = args.seeds or experiment.seeds
    plan = _sweep_plan(replace(experiment, seeds=seeds), context.output_dir)
    with open(_out(context, "sweep.json"), "w", encoding="utf-8") as f:
        json.dump(plan, f, ensure_ascii=False, indent=2)
        f.write("\n")
    print(f"Sweep plan: {len(plan)} variants x {len(seeds)} seeds")
    if not args.run:
        return EXIT_OK

    da_config = context.da_config
    train = _load_corpus(context, args.train, "Training corpus")
    dev = _load_corpus(context, args.dev, "Development corpus")
    test = _load_corpus(context, args.test, "Test corpus")
    lex = _load_lexicon(context, args.lexicon)
    dictionary = load_dictionary(_require(context, args.dictionary, "Dictionary"))
    lex = lex.with_frequencies(form_frequencies(train, lex, da_config))
    das = _unique_das(test)
    references = _references(test)

    variants = variant_grid()
    rows_by_variant = {v.name: [] for v in variants}
    for seed in seeds:
        seed_dir = f"seed{seed}"
        merge = experiment.lm.merge_multiword
        bi_lm, _ = train_bi_lm(
            [merged_tokens(inst, lex, da_config, merge) for inst in train],
            experiment.lm,
            [merged_tokens(inst, lex, da_config, merge) for inst in dev],
            seed,
            _fresh_log(context, os.path.join("sweep", seed_dir, "log-lexicalizer-lm.csv"), "lexicalizer-lm"),
        )
        for model_name in dict.fromkeys(v.model_name for v in variants):
            group = [v for v in variants if v.model_name == model_name]
            config = replace(experiment.generator, mode=group[0].mode, input_mode=group[0].input_mode)
            model_dir = os.path.join("sweep", model_name, seed_dir)
            generator_log = _fresh_log(context, os.path.join(model_dir, "log-generator.csv"), "generator")
            model, _ = train_generator(config, train, dev, seed, da_config, generator_log)
            model.save(_out(context, os.path.join(model_dir, "generator.ckpt")), {"seed": seed})
            reranker, _ = train_reranker(
                experiment.reranker, train, dev, seed, config.mode, da_config,
                _fresh_log(context, os.path.join(model_dir, "log-reranker.csv"), "reranker"),
            )
            reranker.save(_out(context, os.path.join(model_dir, "reranker.ckpt")))
            outputs = _generate_rows(model, das, reranker, da_config, penalty_weight=experiment.rerank_weight)

            for variant in group:
                strategy = LexStrategy(variant.lexicalizer, seed, bi_lm)
                lexicalized = _lexicalize_rows(outputs, lex, strategy, dictionary, da_config)
                write_outputs(lexicalized, _out(context, os.path.join(model_dir, f"{variant.name}.jsonl")))
                report = evaluate(_evaluation_pairs(lexicalized, references, da_config), da_config)
                _save_report(context, report, os.path.join(model_dir, f"report-{variant.name}"))
                rows_by_variant[variant.name].append(report.to_frame().assign(seed=seed))

    frames = []
    for variant in variants:
        frame = pd.concat(rows_by_variant[variant.name], ignore_index=True)
        frame.to_csv(_out(context, os.path.join("sweep", "reports", f"{variant.name}.csv")), index=False,
                     float_format="%.6f")
        frames.append(frame.drop(columns="seed").mean(numeric_only=True).to_frame().T.assign(variant=variant.name))
    summary = pd.concat(frames, ignore_index=True).set_index("variant")
    summary.to_csv(_out(context, os.path.join("sweep", "summary.csv")), float_format="%.6f")
    print(summary.to_string(float_format=lambda x: f"{x:.4f}"))
    return EXIT_OK


def _add_seed(parser, required=True):
    parser.add_argument("--seed", type=int, required=required, help="random seed (recorded in the manifest)")


def _add_out(parser, help_text):
    parser.add_argument("--out", default=None, help=help_text)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="morpho-nlg",
        description="Data-to-text generation with delexicalization and morphological lexicalization.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-o", "--output", default=None, help="output directory (env: MORPHO_NLG_OUTPUT_DIR)")
    parser.add_argument("--config", default=None, help="experiment config JSON")
    parser.add_argument("--da-types", default=None, help="DA type key list replacing the built-in registry")
    parser.add_argument("--slots", default=None, help="slot key list replacing the built-in registry")
    parser.add_argument("--abstract-dont-care", action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument("--abstract-counts", action=argparse.BooleanOptionalAction, default=None)
    commands = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = commands.add_parser("prepare", help="validate and delexicalize a dataset")
    p.add_argument("dataset")
    p.add_argument("lexicon")
    p.add_argument("--allow-missing", action="store_true", help="exit 0 even with missing slot mentions")

    p = commands.add_parser("stats", help="corpus statistics")
    p.add_argument("corpus")
    p.add_argument("--lexicon", default=None)

    p = commands.add_parser("split", help="overlap-free train/dev/test split by DA signature")
    p.add_argument("corpus")
    p.add_argument("--ratios", type=float, nargs=3, default=None, metavar=("TRAIN", "DEV", "TEST"))
    _add_seed(p)

    p = commands.add_parser("targets", help="per-signature instance counts of a corpus")
    p.add_argument("corpus")
    _add_out(p, "targets file (default: <output>/targets.json)")

    p = commands.add_parser("expand", help="sample relexicalized copies up to per-signature targets")
    p.add_argument("corpus")
    p.add_argument("--targets", required=True)
    p.add_argument("--lm", required=True, help="n-gram LM file")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--temperature", type=float, default=None)
    _add_seed(p)

    train = commands.add_parser("train", help="train a model")
    models = train.add_subparsers(dest="model", required=True, metavar="model")

    p = models.add_parser("generator")
    p.add_argument("train")
    p.add_argument("--dev", default=None)
    p.add_argument("--mode", choices=[m.value for m in OutputMode], default=None)
    p.add_argument("--input-mode", choices=[m.value for m in InputMode], default=None)
    for name, kind in (
        ("embedding-size", int), ("cell-size", int), ("attention-size", int), ("learning-rate", float),
        ("dropout", float), ("batch-size", int), ("min-passes", int), ("max-passes", int), ("patience", int),
        ("beam-size", int), ("max-output-len", int),
    ):
        p.add_argument(f"--{name}", type=kind, default=None)
    _add_seed(p)
    _add_out(p, "checkpoint path (default: <output>/generator.ckpt)")

    p = models.add_parser("reranker")
    p.add_argument("train")
    p.add_argument("--dev", default=None)
    p.add_argument("--mode", choices=[m.value for m in OutputMode], default=None)
    for name, kind in (("passes", int), ("validation-start", int), ("learning-rate", float), ("batch-size", int)):
        p.add_argument(f"--{name}", type=kind, default=None)
    _add_seed(p)
    _add_out(p, "checkpoint path (default: <output>/reranker.ckpt)")

    p = models.add_parser("lexicalizer-lm")
    p.add_argument("train")
    p.add_argument("--dev", default=None)
    p.add_argument("--lexicon", required=True)
    for name, kind in (("max-passes", int), ("learning-rate", float), ("batch-size", int), ("embedding-size", int),
                       ("cell-size", int)):
        p.add_argument(f"--{name}", type=kind, default=None)
    _add_seed(p)
    _add_out(p, "checkpoint path (default: <output>/bi_lm.ckpt)")

    p = models.add_parser("ngram-lm")
    p.add_argument("train")
    p.add_argument("--order", type=int, default=None)
    _add_out(p, "LM path (default: <output>/ngram.lm)")

    p = commands.add_parser("generate", help="decode delexicalized outputs for a corpus's DAs")
    p.add_argument("corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--reranker", default=None)
    p.add_argument("--beam-size", type=int, default=None)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--rerank-weight", type=float, default=None)
    _add_seed(p, required=False)
    _add_out(p, "outputs path (default: <output>/outputs.jsonl)")

    p = commands.add_parser("lexicalize", help="fill placeholders of generated outputs")
    p.add_argument("outputs")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--dictionary", default=None, help="morphological dictionary for lemma-tag outputs")
    p.add_argument("--strategy", choices=[k.value for k in LexStrategyKind], default=None)
    p.add_argument("--lm", default=None, help="lexicalizer LM checkpoint")
    p.add_argument("--mode", choices=[m.value for m in OutputMode], default=None)
    _add_seed(p)
    _add_out(p, "outputs path (default: <output>/lexicalized.jsonl)")

    p = commands.add_parser("evaluate", help="score lexicalized outputs against a reference corpus")
    p.add_argument("outputs")
    p.add_argument("corpus")
    p.add_argument("--name", default="report", help="report file stem")

    p = commands.add_parser("bootstrap", help="paired bootstrap test of two per-instance score files")
    p.add_argument("system_a")
    p.add_argument("system_b")
    p.add_argument("--metric", default="bleu")
    p.add_argument("--resamples", type=int, default=1000)
    _add_seed(p)

    p = commands.add_parser("gradcheck", help="finite-difference check of the backward passes")
    p.add_argument("--instances", type=int, default=5)
    p.add_argument("--tolerance", type=float, default=TOLERANCE)
    p.add_argument("--ops", nargs="+", choices=list(CHECKS), default=None)
    _add_seed(p)

    p = commands.add_parser("plot", help="plot a training log")
    p.add_argument("log")
    p.add_argument("--stage", default=None)
    p.add_argument("--size", type=int, nargs=2, default=None, metavar=("WIDTH", "HEIGHT"))

    p = commands.add_parser("sweep", help="the output mode x input mode x lexicalizer grid")
    p.add_argument("--run", action="store_true", help="train and evaluate every variant")
    p.add_argument("--train", default=None)
    p.add_argument("--dev", default=None)
    p.add_argument("--test", default=None)
    p.add_argument("--lexicon", default=None)
    p.add_argument("--dictionary", default=None)
    p.add_argument("--seeds", type=int, nargs="+", default=None)

    return parser


def _experiment(args):
    experiment = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    if args.abstract_dont_care is not None:
        experiment.abstract_dont_care = args.abstract_dont_care
    if args.abstract_counts is not None:
        experiment.abstract_counts = args.abstract_counts
    return experiment.validate()


def _da_config(args, experiment):
    if (args.da_types is None) != (args.slots is None):
        raise ValueError("--da-types and --slots must be given together")
    registry = Registry.from_files(args.da_types, args.slots) if args.da_types else Registry.default()
    return DAConfig.default(
        registry, abstract_dont_care=experiment.abstract_dont_care, abstract_counts=experiment.abstract_counts
    )


def _args_record(args):
    return {k: v for k, v in vars(args).items() if k != "verbose"}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    command = f"{args.command} {args.model}" if args.command == "train" else args.command

    try:
        if args.config and not os.path.exists(args.config):
            raise MissingPrerequisiteError(args.config, "Config file")
        experiment = _experiment(args)
        output_dir = args.output or os.getenv("MORPHO_NLG_OUTPUT_DIR") or experiment.output_dir
        context = create_run_context(
            da_config=_da_config(args, experiment), output_dir=output_dir, seed=getattr(args, "seed", None)
        )
        context.experiment = experiment
        code = process_command(command, args, context)
        manifest = os.path.join(context.output_dir, f"manifest-{command.replace(' ', '-')}.json")
        write_manifest(
            manifest,
            command=command,
            args=_args_record(args),
            seed=context.seed,
            config=experiment.to_dict(),
            inputs=list(context.inputs),
            outputs=context.outputs,
        )
    except DATA_ERRORS as e:
        print(e, file=sys.stderr)
        return EXIT_INCONSISTENT
    except (CommandNotFoundError, MissingPrerequisiteError, ValueError) as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except MorphoNLGError as e:
        print(e, file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as e:
        logger.exception("Unexpected failure in '%s'", command)
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
