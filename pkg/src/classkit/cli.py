"""Command-line pipeline driver.

Subcommands: synth, ingest, build-vocab, featurize, train, cv, irr, score,
explain, heatmap. All state lives under the configured workdir; every command
is deterministic given identical inputs, so reruns produce identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import bow, explain, lasso, render, synth
from .aggregate import SessionFeatures, fit_standardizer, standardize
from .config import ConfigError, RunConfig, config_to_yaml, load_config
from .corpus import (
    Corpus,
    CorpusError,
    Dimension,
    EmptySessionError,
    build_corpus,
    import_whisper,
    load_labels,
    load_session,
    mean_target,
    save_session,
)
from .evaluate import cross_validate, irr, render_cv_table, render_irr_table
from .features import FeatureConfig, compute_features, features_from_names
from .llm import FeatureCache, MockBackend, RemoteBackend


class CliError(RuntimeError):
    pass


def _workdir(cfg: RunConfig) -> Path:
    path = Path(cfg.paths.workdir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _mode_slug(feature_mode: str) -> str:
    return feature_mode.replace(":", "_")


def _load_corpus(cfg: RunConfig) -> Corpus:
    corpus_dir = _workdir(cfg) / "corpus"
    session_files = sorted(corpus_dir.glob("*.json"))
    if not session_files:
        raise CliError(f"no ingested sessions under {corpus_dir}; run `classkit ingest` first")
    sessions = [load_session(path) for path in session_files]
    labels = load_labels(cfg.paths.labels) if cfg.paths.labels else {}
    return build_corpus(sessions, labels, protocol=cfg.protocol)


def _backend(cfg: RunConfig):
    if cfg.llm.backend == "mock":
        seed = cfg.llm.mock_seed if cfg.llm.mock_seed is not None else cfg.cv.seed
        return MockBackend(seed=seed, policy=cfg.llm.mock_policy)
    return RemoteBackend(
        endpoint_url=cfg.llm.endpoint_url,
        model=cfg.llm.model,
        credential_env=cfg.llm.credential_env,
    )


def _cache_key(cfg: RunConfig, corpus: Corpus) -> str:
    hasher = hashlib.sha256()
    relevant = {
        "protocol": cfg.protocol,
        "mode": cfg.llm.mode,
        "context": cfg.llm.context,
        "backend": cfg.llm.backend,
        "endpoint": cfg.llm.endpoint_url,
        "model": cfg.llm.model,
        "mock_policy": cfg.llm.mock_policy,
        "mock_seed": cfg.llm.mock_seed if cfg.llm.mock_seed is not None else cfg.cv.seed,
    }
    hasher.update(json.dumps(relevant, sort_keys=True).encode("utf-8"))
    for session in corpus.sessions:
        hasher.update(json.dumps(
            [[u.start_s, u.end_s, u.text] for u in session.utterances], sort_keys=True
        ).encode("utf-8"))
    return hasher.hexdigest()[:16]


def _feature_config(cfg: RunConfig, corpus: Corpus, feature_mode: str | None = None) -> FeatureConfig:
    mode = feature_mode or cfg.feature_mode
    config = FeatureConfig(
        mode=mode,
        bow_k=cfg.bow.k,
        vocab_scope=cfg.bow.vocab_scope,
        llm_mode=cfg.llm.mode,
        llm_context=cfg.llm.context,
        max_concurrency=cfg.llm.max_concurrency,
    )
    if config.uses_llm:
        config.backend = _backend(cfg)
        cache_dir = _workdir(cfg) / "cache"
        cache_dir.mkdir(parents=True, exist_ok=True)
        config.cache = FeatureCache(cache_dir / f"llm_{_cache_key(cfg, corpus)}.csv")
    return config


def _write_utterance_features(features: dict[str, SessionFeatures], path: Path) -> None:
    first = next(iter(features.values()))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["session_id", "utterance_index", *first.feature_names])
        for sid in sorted(features):
            feats = features[sid]
            for u in range(feats.n_utterances):
                writer.writerow([sid, u, *[repr(float(v)) for v in feats.per_utterance[u]]])


def _write_session_features(features: dict[str, SessionFeatures], path: Path) -> None:
    first = next(iter(features.values()))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["session_id", *first.feature_names])
        for sid in sorted(features):
            writer.writerow([sid, *[repr(float(v)) for v in features[sid].g]])


def cmd_synth(args) -> int:
    corpus, info = synth.generate_corpus(
        seed=args.seed if args.seed is not None else 0,
        n_sessions=args.sessions,
        n_teachers=args.teachers,
        planted=not args.noise_labels,
        n_labelers=args.labelers,
        protocol=args.protocol,
    )
    out = Path(args.out)
    synth.write_corpus_files(corpus, info, out)
    cfg = RunConfig()
    cfg.protocol = args.protocol
    cfg.paths.transcripts = str(out / "transcripts")
    cfg.paths.manifest = str(out / "manifest.csv")
    cfg.paths.labels = str(out / "labels.csv")
    cfg.paths.workdir = str(out / "work")
    (out / "config.yaml").write_text(config_to_yaml(cfg), encoding="utf-8")
    print(f"wrote {len(corpus.sessions)} sessions to {out}")
    if info["planted"]:
        print(f"planted n-grams: {', '.join(info['planted_ngrams'])}")
        for dim, r in info["oracle_r"].items():
            print(f"oracle R [{dim}]: {r:.4f}")
    else:
        print("labels are pure noise (no planted signal)")
    print(f"starter config: {out / 'config.yaml'}")
    return 0


def cmd_ingest(cfg: RunConfig, args) -> int:
    transcripts = Path(cfg.paths.transcripts)
    if not transcripts.is_dir():
        raise CliError(f"transcripts directory not found: {transcripts}")
    manifest = Path(cfg.paths.manifest) if cfg.paths.manifest else transcripts / "manifest.csv"
    plan: list[tuple[Path, str, str]] = []
    if manifest.exists():
        with open(manifest, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["session_id", "teacher_id"]:
                raise CliError(f"{manifest}: header must be session_id,teacher_id")
            for sid, teacher in reader:
                plan.append((transcripts / f"{sid}.json", sid, teacher))
    else:
        for path in sorted(transcripts.glob("*.json")):
            teacher, sep, sid = path.stem.partition("__")
            if not sep:
                raise CliError(
                    f"{path.name}: no manifest found and filename is not <teacher>__<session>.json"
                )
            plan.append((path, sid, teacher))
    if not plan:
        raise CliError(f"no transcripts to ingest under {transcripts}")
    corpus_dir = _workdir(cfg) / "corpus"
    corpus_dir.mkdir(parents=True, exist_ok=True)
    kept = 0
    skipped = 0
    for path, sid, teacher in plan:
        if not path.exists():
            raise CliError(f"transcript listed in manifest is missing: {path}")
        try:
            session = import_whisper(path, session_id=sid, teacher_id=teacher)
        except EmptySessionError:
            skipped += 1
            continue
        save_session(session, corpus_dir / f"{sid}.json")
        kept += 1
    print(f"ingested {kept} sessions into {corpus_dir} ({skipped} empty sessions excluded)")
    return 0


def cmd_build_vocab(cfg: RunConfig, args) -> int:
    corpus = _load_corpus(cfg)
    vocab = bow.build_vocabulary(corpus, k=cfg.bow.k, source="corpus")
    out = _workdir(cfg) / "vocab.txt"
    bow.save_vocabulary(vocab, out)
    print(f"wrote {vocab.size}-entry vocabulary ({cfg.bow.k} n-grams + 2 pseudo-tokens) to {out}")
    return 0


def cmd_featurize(cfg: RunConfig, args) -> int:
    corpus = _load_corpus(cfg)
    config = _feature_config(cfg, corpus)
    features = compute_features(corpus.sessions, corpus.sessions, corpus.protocol, config)
    out_dir = _workdir(cfg) / "features" / _mode_slug(config.mode)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_utterance_features(features, out_dir / "utterance_features.csv")
    _write_session_features(features, out_dir / "session_features.csv")
    print(f"wrote feature files for {len(features)} sessions to {out_dir}")
    return 0


def _fit_on_corpus(cfg: RunConfig, corpus: Corpus, dimension: Dimension):
    sessions, n_excluded = corpus.sessions_with_target(dimension)
    if len(sessions) < 2:
        raise CliError(f"need at least 2 sessions labeled for {dimension.value}")
    config = _feature_config(cfg, corpus)
    features = compute_features(sessions, sessions, corpus.protocol, config)
    names = features[sessions[0].session_id].feature_names
    gs = [features[s.session_id].g for s in sessions]
    std = fit_standardizer(gs)
    X = np.vstack([standardize(g, std) for g in gs])
    y = np.array([mean_target(s, dimension) for s in sessions])
    model = lasso.fit(
        X, y, cfg.lasso.lambda_, cfg.lasso.non_negative, standardizer=std, feature_names=names
    )
    model.meta = {
        "protocol": corpus.protocol,
        "feature_mode": config.mode,
        "dimension": dimension.value,
    }
    return model, n_excluded


def cmd_train(cfg: RunConfig, args) -> int:
    corpus = _load_corpus(cfg)
    dimension = Dimension(args.dimension)
    model, n_excluded = _fit_on_corpus(cfg, corpus, dimension)
    out = _workdir(cfg) / f"model_{_mode_slug(cfg.feature_mode)}_{dimension.value}.json"
    lasso.save_model(model, out)
    nonzero = int(np.count_nonzero(model.w))
    print(f"trained on {model.standardizer.n_train} sessions ({n_excluded} excluded, no label)")
    print(f"model: {out} ({nonzero} nonzero weights, b={model.b:.4f})")
    return 0


def cmd_cv(cfg: RunConfig, args) -> int:
    corpus = _load_corpus(cfg)
    dimension = Dimension(args.dimension)
    config = _feature_config(cfg, corpus)
    report = cross_validate(
        corpus,
        config,
        dimension,
        lam=cfg.lasso.lambda_,
        non_negative=cfg.lasso.non_negative,
        k=cfg.cv.k,
        seed=cfg.cv.seed,
    )
    slug = _mode_slug(config.mode)
    out_json = _workdir(cfg) / f"cv_{slug}_{dimension.value}.json"
    out_json.write_text(report.to_json(), encoding="utf-8")
    table = render_cv_table([report])
    out_txt = _workdir(cfg) / f"cv_{slug}_{dimension.value}.txt"
    out_txt.write_text(table, encoding="utf-8")
    print(table, end="")
    print(f"report: {out_json}")
    return 0


def cmd_irr(cfg: RunConfig, args) -> int:
    corpus = _load_corpus(cfg)
    dimension = Dimension(args.dimension)
    report = irr(corpus, dimension)
    out = _workdir(cfg) / f"irr_{dimension.value}.json"
    out.write_text(report.to_json(), encoding="utf-8")
    table = render_irr_table(report, corpus.protocol)
    print(table, end="")
    print(f"report: {out}")
    return 0


def _model_and_features(cfg: RunConfig, corpus: Corpus, model_path: str, sessions):
    model = lasso.load_model(model_path)
    feature_mode = model.meta.get("feature_mode") or cfg.feature_mode
    config = _feature_config(cfg, corpus, feature_mode)
    protocol = model.meta.get("protocol") or corpus.protocol
    features = features_from_names(sessions, feature_mode, model.feature_names, protocol, config)
    return model, features


def cmd_score(cfg: RunConfig, args) -> int:
    corpus = _load_corpus(cfg)
    sessions = [corpus.get(args.session)] if args.session else corpus.sessions
    model, features = _model_and_features(cfg, corpus, args.model, sessions)
    out = _workdir(cfg) / "predictions.csv"
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["session_id", "y_hat"])
        for session in sessions:
            y_hat = lasso.predict(model, features[session.session_id].g)
            writer.writerow([session.session_id, repr(y_hat)])
    print(f"wrote predictions for {len(sessions)} sessions to {out}")
    return 0


def cmd_explain(cfg: RunConfig, args) -> int:
    corpus = _load_corpus(cfg)
    session = corpus.get(args.session)
    model, features = _model_and_features(cfg, corpus, args.model, [session])
    feats = features[session.session_id]
    report = explain.explanation_report(model, session, feats)
    out = _workdir(cfg) / f"explain_{session.session_id}.json"
    out.write_text(explain.report_to_json(report), encoding="utf-8")
    marginals = explain.marginal_scores(model, feats)
    print(explain.render_digest(session, marginals, k=args.top), end="")
    print(f"estimated score: {report['y_hat']:.3f}")
    print(f"report: {out}")
    return 0


def cmd_heatmap(cfg: RunConfig, args) -> int:
    corpus = _load_corpus(cfg)
    sessions = [corpus.get(args.session)] if args.session else corpus.sessions
    model, features = _model_and_features(cfg, corpus, args.model, sessions)
    spec = render.HeatmapSpec(k_callouts=args.top)
    for session in sessions:
        marginals = explain.marginal_scores(model, features[session.session_id])
        svg = render.heatmap_svg(session, marginals, spec)
        out = _workdir(cfg) / f"heatmap_{session.session_id}.svg"
        out.write_text(svg, encoding="utf-8")
        print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="classkit",
        description="Estimate classroom observation scores from transcripts and explain them.",
    )
    parser.add_argument("--config", default="config.yaml", help="path to the run configuration")
    parser.add_argument("--workdir", default=None, help="override paths.workdir")
    parser.add_argument("--seed", type=int, default=None, help="override cv.seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus with a planted signal")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="synthetic")
    p.add_argument("--sessions", type=int, default=50)
    p.add_argument("--teachers", type=int, default=10)
    p.add_argument("--labelers", type=int, default=1)
    p.add_argument("--protocol", default="prek", choices=("prek", "toddler"))
    p.add_argument("--noise-labels", action="store_true", help="labels independent of the text")

    sub.add_parser("ingest", help="convert transcriber output into native session files")
    sub.add_parser("build-vocab", help="build the n-gram vocabulary over the whole corpus")
    sub.add_parser("featurize", help="write per-utterance and per-session feature tables")

    for name, help_text in (
        ("train", "fit a model on every labeled session"),
        ("cv", "teacher-disjoint cross-validation with a metrics table"),
        ("irr", "leave-one-labeler-out inter-rater reliability"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--dimension", default="domain", choices=[d.value for d in Dimension])

    p = sub.add_parser("score", help="predict session scores with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--session", default=None)

    p = sub.add_parser("explain", help="rank a session's utterances by marginal score")
    p.add_argument("--model", required=True)
    p.add_argument("--session", required=True)
    p.add_argument("--top", type=int, default=4)

    p = sub.add_parser("heatmap", help="render the temporal heatmap SVG for sessions")
    p.add_argument("--model", required=True)
    p.add_argument("--session", default=None)
    p.add_argument("--top", type=int, default=4)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args)
        cfg = load_config(args.config)
        if args.workdir is not None:
            cfg.paths.workdir = args.workdir
        if args.seed is not None:
            cfg.cv.seed = args.seed
        handlers = {
            "ingest": cmd_ingest,
            "build-vocab": cmd_build_vocab,
            "featurize": cmd_featurize,
            "train": cmd_train,
            "cv": cmd_cv,
            "irr": cmd_irr,
            "score": cmd_score,
            "explain": cmd_explain,
            "heatmap": cmd_heatmap,
        }
        return handlers[args.command](cfg, args)
    except (CliError, ConfigError, CorpusError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
