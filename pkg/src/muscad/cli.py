"""Command-line pipeline: preprocess, embed, cluster, train, lexicon, label, evaluate, sweep, pipeline.

Every stage reads its inputs from the work directory, writes its artifacts
there and records a ``<stage>.manifest.json`` with input/output hashes, the
stage's config hash, the seed, the tool version and the exact command line.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .aspect_model import dump_model, init_params, load_model
from .clustering import candidate_words, cluster_report, kmeans
from .config import PipelineConfig, all_dotted_fields, load_config
from .corpus import (CoocStats, build_corpus, compute_cooc_stats, dump_corpus, load_corpus)
from .embedding import dump_binary, dump_text, load_text, train_cbow
from .errors import ConfigError, MuscadError
from .lexicon import (AspectLexicon, LabelSet, extract_lexicon, label_reviews, label_reviews_model,
                      name_categories)
from .metrics import coherence_report, format_table, multilabel_f1, rank_average
from .training import predict, sentence_blocks, train

log = logging.getLogger("muscad")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_DEGRADED = 0, 1, 2, 3

# config keys each stage depends on, cumulative along the pipeline
_PRE = ["paths.inputs", "corpus", "metrics.window", "metrics.doc_unit"]
_EMB = _PRE + ["cbow"]
_CLU = _EMB + ["clustering"]
_TRN = _CLU + ["aspect", "train"]
_LEX = _TRN + ["lexicon.top_n", "naming"]
_LAB = _LEX + ["lexicon.labeling_mode", "lexicon.tau"]
_EVA = _LAB + ["metrics", "paths.gold"]
_SWP = _TRN + ["lexicon.sweep", "naming"]

STAGES = {
    "preprocess": {"keys": _PRE, "needs": [], "outputs": ["corpus.jsonl", "vocab.tsv", "cooc.json"]},
    "embed": {"keys": _EMB, "needs": ["corpus.jsonl"], "outputs": ["embeddings.txt", "embeddings.bin"]},
    "cluster": {"keys": _CLU, "needs": ["corpus.jsonl", "embeddings.txt"], "outputs": ["clusters.json"]},
    "train": {"keys": _TRN, "needs": ["corpus.jsonl", "embeddings.txt", "clusters.json"],
              "outputs": ["model.bin", "model.json", "train_log.jsonl"]},
    "lexicon": {"keys": _LEX, "needs": ["corpus.jsonl", "embeddings.txt", "model.bin"], "outputs": ["lexicon.json"]},
    "label": {"keys": _LAB, "needs": ["corpus.jsonl", "lexicon.json"], "outputs": ["labels.jsonl"]},
    "evaluate": {"keys": _EVA, "needs": ["corpus.jsonl", "cooc.json", "embeddings.txt", "lexicon.json",
                                         "labels.jsonl"], "outputs": ["report.json", "report.txt"]},
    "sweep": {"keys": _SWP, "needs": ["corpus.jsonl", "embeddings.txt", "model.bin"], "outputs": ["sweep.json"]},
}
PRODUCER = {out: stage for stage, info in STAGES.items() for out in info["outputs"]}


class StageError(MuscadError):
    def __init__(self, message, code=EXIT_RUNTIME):
        super().__init__(message)
        self.code = code


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write(path: Path, data: str | bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, bytes):
        path.write_bytes(data)
    else:
        path.write_text(data, encoding="utf-8")


class Stage:
    """Bookkeeping shared by every command: dependency checks, manifests, overwrite policy."""

    def __init__(self, name: str, cfg: PipelineConfig, argv: list[str], force: bool, strict: bool):
        self.name, self.cfg, self.argv, self.force, self.strict = name, cfg, argv, force, strict
        self.info = STAGES[name]
        self.workdir = cfg.workdir

    def path(self, name: str) -> Path:
        return self.workdir / name

    def manifest_path(self, stage: str | None = None) -> Path:
        return self.workdir / f"{stage or self.name}.manifest.json"

    def check_inputs(self) -> dict[str, str]:
        hashes = {}
        for need in self.info["needs"]:
            p = self.path(need)
            if not p.exists():
                producer = PRODUCER[need]
                raise StageError(f"{need} not found in {self.workdir}: run cmd_{producer} first "
                                 f"(muscad {producer})", EXIT_USAGE)
            hashes[need] = _sha(p)
        for upstream in dict.fromkeys(PRODUCER[n] for n in self.info["needs"]):
            mpath = self.manifest_path(upstream)
            if not mpath.exists():
                continue
            recorded = json.loads(mpath.read_text())["config_hash"]
            if recorded != self.cfg.hash_of(STAGES[upstream]["keys"]):
                msg = f"config for stage {upstream!r} changed since its artifacts were built"
                if self.strict:
                    raise StageError(msg + " (--strict)", EXIT_USAGE)
                log.warning(msg)
        for extra in (self.cfg.paths.inputs if self.name == "preprocess" else []):
            hashes[extra] = _sha(Path(extra))
        return hashes

    def expected_manifest(self, input_hashes: dict[str, str]) -> dict:
        return {"stage": self.name, "tool_version": __version__, "seed": self.cfg.seed,
                "config_hash": self.cfg.hash_of(self.info["keys"]), "inputs": input_hashes}

    def up_to_date(self, expected: dict) -> bool:
        outputs = [self.path(o) for o in self.info["outputs"]]
        mpath = self.manifest_path()
        if not mpath.exists() or not all(p.exists() for p in outputs):
            if any(p.exists() for p in outputs) and not self.force:
                raise StageError(f"stage {self.name}: outputs exist without a manifest; use --force to overwrite",
                                 EXIT_USAGE)
            return False
        old = json.loads(mpath.read_text())
        same = all(old.get(k) == v for k, v in expected.items())
        recorded = old.get("outputs", {})
        intact = all(p.name in recorded for p in outputs) and all(
            self.path(n).exists() and _sha(self.path(n)) == h for n, h in recorded.items())
        if same and intact:
            return True
        if not self.force:
            raise StageError(f"stage {self.name}: inputs or config changed and outputs exist; "
                             f"use --force to overwrite", EXIT_USAGE)
        return False

    def recorded_status(self) -> int:
        return json.loads(self.manifest_path().read_text()).get("exit_status", EXIT_OK)

    def finish(self, expected: dict, extra_outputs: list[str] = (), status: int = EXIT_OK) -> None:
        outs = {o: _sha(self.path(o)) for o in [*self.info["outputs"], *extra_outputs] if self.path(o).exists()}
        manifest = {**expected, "outputs": outs, "exit_status": status, "command": self.argv}
        _write(self.manifest_path(), json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- loaders


def _corpus(wd: Path):
    return load_corpus((wd / "corpus.jsonl").read_text(encoding="utf-8"))


def _embeddings(wd: Path, vocab):
    return load_text((wd / "embeddings.txt").read_text(encoding="utf-8"), vocab)[1]


def _lexicon(wd: Path) -> AspectLexicon:
    return AspectLexicon.from_json(json.loads((wd / "lexicon.json").read_text(encoding="utf-8")))


def _json(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------- commands
# each returns an exit status; artifacts are written through the Stage


def cmd_preprocess(st: Stage) -> int:
    cfg = st.cfg
    if not cfg.paths.inputs:
        raise StageError("no input files: set paths.inputs or pass --input", EXIT_USAGE)
    corpus, vocab = build_corpus(cfg.paths.inputs, cfg.corpus)
    stats = compute_cooc_stats(corpus, cfg.metrics.window, cfg.metrics.doc_unit, threads=cfg.threads)
    _write(st.path("corpus.jsonl"), dump_corpus(corpus, vocab))
    _write(st.path("vocab.tsv"), vocab.to_tsv())
    _write(st.path("cooc.json"), json.dumps(stats.to_json(), separators=(",", ":")) + "\n")
    log.info("corpus: %d reviews, %d sentences, %d word types", corpus.n_reviews, len(corpus), len(vocab))
    return EXIT_OK


def cmd_embed(st: Stage) -> int:
    corpus, vocab = _corpus(st.workdir)
    emb = train_cbow(corpus, vocab, st.cfg.cbow)
    _write(st.path("embeddings.txt"), dump_text(emb, vocab.id_to_token))
    _write(st.path("embeddings.bin"), dump_binary(emb, vocab.id_to_token))
    return EXIT_OK


def cmd_cluster(st: Stage) -> int:
    cfg = st.cfg.clustering
    corpus, vocab = _corpus(st.workdir)
    emb = _embeddings(st.workdir, vocab)
    allowed = None
    if cfg.allowed_tokens_path:
        words = Path(cfg.allowed_tokens_path).read_text(encoding="utf-8").split()
        allowed = [vocab.token_to_id[w] for w in words if w in vocab]
    cand = candidate_words(vocab.frequency, cfg.frequency_floor, allowed)
    if len(cand) < cfg.k:
        raise StageError(f"only {len(cand)} words reach frequency {cfg.frequency_floor}; cannot form "
                         f"{cfg.k} clusters", EXIT_USAGE)
    result = kmeans(emb.vectors, cfg.k, cand, cfg.max_iter, cfg.tol, cfg.seed, n_init=cfg.n_init)
    _write(st.path("clusters.json"), _json(cluster_report(result, emb.vectors, vocab.id_to_token)))
    return EXIT_OK


def cmd_train(st: Stage) -> int:
    cfg = st.cfg
    corpus, vocab = _corpus(st.workdir)
    emb = _embeddings(st.workdir, vocab)
    clusters = json.loads(st.path("clusters.json").read_text())
    ec = np.array([c["centroid_unit"] for c in clusters["clusters"]])
    params = init_params(emb.dim, cfg.aspect.heads, ec, cfg.aspect.seed)
    trained, report = train(params, corpus, emb, cfg.train)
    _write(st.path("model.bin"), dump_model(trained))
    _write(st.path("model.json"), _json({"dim": trained.dim, "heads": trained.heads, "head_dim": trained.head_dim,
                                         "k_aspects": trained.k_aspects, "train": cfg.to_dict()["train"],
                                         "m_negatives_used": report.m_negatives}))
    _write(st.path("train_log.jsonl"), "".join(json.dumps(r) + "\n" for r in report.epoch_records()))
    _write(st.path("train_timing.json"), _json({"epoch_seconds": report.epoch_seconds}))
    return EXIT_OK


def cmd_lexicon(st: Stage) -> int:
    cfg = st.cfg
    corpus, vocab = _corpus(st.workdir)
    emb = _embeddings(st.workdir, vocab)
    model = load_model(st.path("model.bin").read_bytes())
    top_n = min(cfg.lexicon.top_n, len(vocab))
    if top_n < cfg.lexicon.top_n:
        log.warning("lexicon.top_n=%d exceeds the vocabulary; using %d", cfg.lexicon.top_n, top_n)
    lexicon = extract_lexicon(model, emb, vocab, top_n)
    status = EXIT_OK
    if cfg.naming.endpoint or cfg.naming.mapping_path:
        naming = cfg.naming
        if naming.endpoint and not naming.audit_path:
            naming = type(naming)(**{**naming.__dict__, "audit_path": str(st.path("naming_audit.jsonl"))})
        result = name_categories(lexicon, naming)
        for w in result.warnings:
            log.warning("naming: %s", w)
        lexicon = result.lexicon
        if result.degraded:
            status = EXIT_DEGRADED
    _write(st.path("lexicon.json"), _json(lexicon.to_json()))
    return status


def _labels(cfg: PipelineConfig, wd: Path, corpus, vocab, lexicon) -> LabelSet:
    if cfg.lexicon.labeling_mode == "model":
        emb = _embeddings(wd, vocab)
        model = load_model((wd / "model.bin").read_bytes())
        idx, blocks = sentence_blocks(corpus, emb)
        probs = dict(zip(idx, predict(model, blocks)))
        return label_reviews_model(corpus, probs, lexicon, cfg.lexicon.tau)
    return label_reviews(corpus, vocab, lexicon)


def cmd_label(st: Stage) -> int:
    corpus, vocab = _corpus(st.workdir)
    labels = _labels(st.cfg, st.workdir, corpus, vocab, _lexicon(st.workdir))
    _write(st.path("labels.jsonl"), labels.to_jsonl())
    log.info("labels: sentence coverage %.3f", labels.coverage())
    return EXIT_OK


def random_term_lists(term_ids: list[list[int]], n_vocab: int, seed: int) -> list[list[int]]:
    """Shuffle the pooled lexicon terms into lists of the same sizes (topped up from the vocabulary)."""
    rng = np.random.default_rng(seed)
    pool = list(dict.fromkeys(w for t in term_ids for w in t))
    need = sum(len(t) for t in term_ids)
    if len(pool) < need:
        rest = [w for w in range(n_vocab) if w not in set(pool)]
        pool += [int(w) for w in rng.permutation(rest)[:need - len(pool)]]
    pool = [int(w) for w in rng.permutation(pool)]
    out, i = [], 0
    for t in term_ids:
        out.append(pool[i:i + len(t)])
        i += len(t)
    return out


def evaluate_lexicon(cfg: PipelineConfig, stats: CoocStats, emb, vocab, lexicon: AspectLexicon) -> dict:
    m = cfg.metrics
    top_n = min(m.top_n, lexicon.top_n)
    ids = [[vocab.token_to_id[t] for t in terms] for terms in lexicon.term_lists(top_n)]
    ours = coherence_report(stats, emb, ids, top_n, m.epsilon, m.epsilon_mode)
    baseline = coherence_report(stats, emb, random_term_lists(ids, len(vocab), cfg.seed), top_n,
                                m.epsilon, m.epsilon_mode)
    table = {"MUSCAD": ours.summary(), "random": baseline.summary()}
    return {"coherence": ours.to_json(), "random_baseline": baseline.to_json(), "table": table,
            "rank_avg": rank_average(table)}


def cmd_evaluate(st: Stage) -> int:
    cfg = st.cfg
    corpus, vocab = _corpus(st.workdir)
    stats = CoocStats.from_json(json.loads(st.path("cooc.json").read_text()))
    emb = _embeddings(st.workdir, vocab)
    lexicon = _lexicon(st.workdir)
    report = evaluate_lexicon(cfg, stats, emb, vocab, lexicon)
    labels = LabelSet.from_jsonl(st.path("labels.jsonl").read_text(encoding="utf-8"))
    report["coverage"] = {"reviews_labeled": sum(1 for v in labels.labels.values() if v) / max(len(labels.labels), 1),
                          "sentences_labeled": len([s for s, m in labels.matches.items() if m]) / max(len(corpus), 1)}
    if cfg.paths.gold:
        gold = LabelSet.from_jsonl(Path(cfg.paths.gold).read_text(encoding="utf-8")).labels
        universe = sorted(set(lexicon.names()) | {l for v in gold.values() for l in v})
        report["f1"] = multilabel_f1(labels.labels, gold, universe).to_json()
    _write(st.path("report.json"), _json(report))
    _write(st.path("report.txt"), format_table(report["table"], report["rank_avg"]))
    return EXIT_OK


def cmd_sweep(st: Stage) -> int:
    """Lexicon and sentence coverage for each top-N value."""
    cfg = st.cfg
    corpus, vocab = _corpus(st.workdir)
    emb = _embeddings(st.workdir, vocab)
    model = load_model(st.path("model.bin").read_bytes())
    names = None
    if st.path("lexicon.json").exists():
        names = _lexicon(st.workdir)
    rows, extra = [], []
    for n in sorted(cfg.lexicon.sweep):
        eff = min(n, len(vocab))
        lexicon = extract_lexicon(model, emb, vocab, eff)
        if names is not None:
            for a, named in zip(lexicon.aspects, names.aspects):
                a.category_name, a.provenance = named.category_name, named.provenance
        labels = label_reviews(corpus, vocab, lexicon)
        lex_name, lab_name = f"sweep/lexicon_top{n}.json", f"sweep/labels_top{n}.jsonl"
        _write(st.path(lex_name), _json(lexicon.to_json()))
        _write(st.path(lab_name), labels.to_jsonl())
        extra += [lex_name, lab_name]
        rows.append({"top_n": n, "effective_top_n": eff, "coverage": labels.coverage(),
                     "lexicon": lex_name, "labels": lab_name})
        log.info("sweep top_n=%d coverage %.4f", n, rows[-1]["coverage"])
    _write(st.path("sweep.json"), _json({"rows": rows}))
    st.extra_outputs = extra
    return EXIT_OK


COMMANDS: dict[str, Callable[[Stage], int]] = {
    "preprocess": cmd_preprocess, "embed": cmd_embed, "cluster": cmd_cluster, "train": cmd_train,
    "lexicon": cmd_lexicon, "label": cmd_label, "evaluate": cmd_evaluate, "sweep": cmd_sweep,
}
PIPELINE = ["preprocess", "embed", "cluster", "train", "lexicon", "label", "evaluate"]


def run_stage(name: str, cfg: PipelineConfig, argv: list[str], force=False, strict=False) -> int:
    st = Stage(name, cfg, argv, force, strict)
    inputs = st.check_inputs()
    expected = st.expected_manifest(inputs)
    if st.up_to_date(expected):
        log.info("%s: up to date", name)
        return st.recorded_status()
    log.info("running %s", name)
    st.extra_outputs = []
    status = COMMANDS[name](st)
    st.finish(expected, st.extra_outputs, status)
    return status


def cmd_pipeline(cfg: PipelineConfig, argv: list[str], force=False, strict=False) -> int:
    worst = EXIT_OK
    for name in PIPELINE:
        worst = max(worst, run_stage(name, cfg, argv, force, strict))
    return worst


# ---------------------------------------------------------------- argument parsing

ALIASES = {
    "--k": "clustering.k", "--max-iter": "clustering.max_iter", "--tol": "clustering.tol",
    "--top-n": "metrics.top_n", "--window": "metrics.window", "--epsilon-mode": "metrics.epsilon_mode",
    "--workdir": "paths.workdir", "--seed": "seed", "--threads": "threads", "--gold": "paths.gold",
    "--mapping": "naming.mapping_path", "--endpoint": "naming.endpoint",
}


HELP = {
    "preprocess": "tokenize reviews, build the vocabulary and co-occurrence counts",
    "embed": "train CBOW word embeddings",
    "cluster": "k-means over word embeddings to seed the aspect matrix",
    "train": "fit the attention aspect model with the max-margin loss",
    "lexicon": "extract top-N aspect terms and name each aspect",
    "label": "assign aspect labels to every review",
    "evaluate": "coherence, diversity and optional F1 against gold labels",
    "sweep": "lexicon and sentence coverage for each top-N value",
    "pipeline": "run preprocess through evaluate in order",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline config")
    common.add_argument("--input", action="append", dest="inputs", help="input JSONL file (repeatable)")
    common.add_argument("--force", action="store_true", help="overwrite existing artifacts")
    common.add_argument("--strict", action="store_true", help="fail on config mismatch between stages")
    common.add_argument("-v", "--verbose", action="store_true")
    for flag, dotted in ALIASES.items():
        common.add_argument(flag, dest=dotted, default=None, help=f"alias for --{dotted}")
    for dotted in all_dotted_fields():
        common.add_argument(f"--{dotted}", dest=dotted, default=None, metavar="VALUE")

    parser = argparse.ArgumentParser(prog="muscad", description="unsupervised multi-aspect review labeling")
    parser.add_argument("--version", action="version", version=f"muscad {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in [*PIPELINE, "sweep", "pipeline"]:
        sub.add_parser(name, parents=[common], help=HELP[name], description=HELP[name])
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    overrides = {k: v for k, v in vars(args).items() if "." in k or k in ("seed", "threads")}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.inputs:
        overrides["paths.inputs"] = args.inputs
    try:
        cfg = load_config(args.config, overrides)
        cfg.validate_paths()
        cmdline = ["muscad", *argv]
        if args.command == "pipeline":
            return cmd_pipeline(cfg, cmdline, args.force, args.strict)
        return run_stage(args.command, cfg, cmdline, args.force, args.strict)
    except StageError as exc:
        log.error("%s", exc)
        return exc.code
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_USAGE
    except (MuscadError, OSError, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
