"""Single entry point: orchestrates the full pipeline from one run manifest.

The manifest is a flat "key: value" text document. Stage-specific keys reuse
the run-config names (lr-decay-style, optimizer.params.betas, warmup,
weight-decay, max-steps, eval-steps, save-steps, num-train-epochs, batch
size, learning rate, max-position-embeddings, fp16.enabled) under `adapt.`
and `finetune.` prefixes. Unknown keys are errors.

Exit codes: 0 ok, 2 config error, 3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import abtest, bpe, corpus, loadtest, model, scaling, serve, train
from .errors import ContractError, ManifestError, NumericError

_TOP_KEYS = {"out-dir", "seed"}
_CORPUS_KEYS = {"n-cases": int, "catalog-size": int, "ambiguity": float, "max-len": int}
_TOKENIZER_KEYS = {"vocab-size": int, "train-cases": int}
_MODEL_KEYS = {"context-length": int, "positional": str}
_SWEEP_KEYS = {"presets": str}
_FINETUNE_EXTRA = {"train-fraction": float}

PRESET_NAMES = ("nano", "micro", "mini")


@dataclass
class RunManifest:
    text: str
    out_dir: Path
    seed: int
    corpus_keys: dict
    tokenizer_keys: dict
    model_keys: dict
    adapt_keys: dict
    finetune_keys: dict
    sweep_presets: list[str]
    train_fraction: float

    @property
    def run_id(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()[:12]

    @property
    def run_dir(self) -> Path:
        return self.out_dir / self.run_id

    def context_length(self) -> int:
        return int(self.model_keys.get("context-length", 256))

    def adapt_config(self, preset: model.Preset) -> train.AdaptConfig:
        keys = dict(self.adapt_keys)
        mpe = keys.pop("max-position-embeddings", None)
        if mpe is not None and int(mpe) != self.context_length():
            raise ManifestError(
                f"adapt.max-position-embeddings {mpe} != model.context-length {self.context_length()}")
        # larger runs may be interrupted early: per-preset step overrides
        for name in PRESET_NAMES:
            override = keys.pop(f"max-steps-{name}", None)
            if override is not None and name == preset.name:
                keys["max-steps"] = override
        keys.setdefault("learning rate", preset.lr_peak)
        keys.setdefault("seed", self.seed)
        return train.adapt_config_from_keys(keys)

    def finetune_config(self) -> train.FineTuneConfig:
        keys = dict(self.finetune_keys)
        keys.setdefault("seed", self.seed)
        return train.finetune_config_from_keys(keys)

    def preset(self, name: str) -> model.Preset:
        vocab_size = int(self.tokenizer_keys.get("vocab-size", 512))
        p = model.family_preset(name, vocab_size=vocab_size,
                                context_length=self.context_length())
        positional = self.model_keys.get("positional")
        if positional:
            cfg = model.ModelConfig(**{**p.config.__dict__, "positional": positional})
            p = model.Preset(name=p.name, config=cfg, lr_peak=p.lr_peak)
        override = self.adapt_keys.get("learning rate")
        if override is not None:
            p = model.Preset(name=p.name, config=p.config, lr_peak=float(override))
        return p


def parse_manifest(path: str | Path) -> RunManifest:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ManifestError(f"cannot read manifest {path}: {e}") from e
    sections = {"corpus": {}, "tokenizer": {}, "model": {}, "adapt": {}, "finetune": {}, "sweep": {}}
    top: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if ":" not in line:
            raise ManifestError(f"line {lineno}: expected 'key: value', got {raw!r}")
        key, value = line.split(":", 1)
        key, value = key.strip(), value.strip()
        if "." in key and key.split(".", 1)[0] in sections:
            prefix, rest = key.split(".", 1)
            sections[prefix][rest] = value
        elif key in _TOP_KEYS:
            top[key] = value
        else:
            raise ManifestError(f"line {lineno}: unknown key {key!r}")

    def typed(section: str, table: dict) -> dict:
        out = {}
        for k, v in sections[section].items():
            if k not in table:
                raise ManifestError(f"unknown key {section}.{k!r}")
            try:
                out[k] = table[k](v)
            except ValueError as e:
                raise ManifestError(f"bad value for {section}.{k}: {e}") from e
        return out

    corpus_keys = typed("corpus", _CORPUS_KEYS)
    tokenizer_keys = typed("tokenizer", _TOKENIZER_KEYS)
    model_keys = typed("model", _MODEL_KEYS)

    finetune_keys = dict(sections["finetune"])
    train_fraction = float(finetune_keys.pop("train-fraction", 0.5))
    if not (0.0 < train_fraction < 1.0):
        raise ManifestError("finetune.train-fraction must lie in (0, 1)")

    sweep_keys = typed("sweep", _SWEEP_KEYS)
    presets = [p.strip() for p in sweep_keys.get("presets", "nano,micro,mini").split(",") if p.strip()]
    for p in presets:
        if p not in PRESET_NAMES:
            raise ManifestError(f"unknown preset {p!r} in sweep.presets")

    manifest = RunManifest(
        text=text,
        out_dir=Path(top.get("out-dir", "runs")),
        seed=int(top.get("seed", 0)),
        corpus_keys=corpus_keys,
        tokenizer_keys=tokenizer_keys,
        model_keys=model_keys,
        adapt_keys=dict(sections["adapt"]),
        finetune_keys=finetune_keys,
        sweep_presets=presets,
        train_fraction=train_fraction,
    )
    # fail fast on malformed stage configs before any work starts
    manifest.adapt_config(model.family_preset("nano"))
    manifest.finetune_config()
    return manifest


# ---------------------------------------------------------------------------
# artifacts, stamps
# ---------------------------------------------------------------------------


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_stamp(m: RunManifest, command: str, artifacts: list[Path]) -> Path:
    stamps = m.run_dir / "stamps"
    stamps.mkdir(parents=True, exist_ok=True)
    payload = {
        "command": command,
        "seed": m.seed,
        "config_hash": hashlib.sha256(m.text.encode()).hexdigest(),
        "artifacts": {str(p.relative_to(m.run_dir)): _sha256_file(p)
                      for p in artifacts if p.is_file()},
    }
    path = stamps / f"{command}.json"
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
    return path


def _corpus_paths(m: RunManifest) -> tuple[Path, Path]:
    return m.run_dir / "corpus.ndjson", m.run_dir / "catalog.csv"


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise ManifestError(f"missing artifact {path} (run `{hint}` first)")
    return path


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen_corpus(m: RunManifest) -> None:
    m.run_dir.mkdir(parents=True, exist_ok=True)
    (m.run_dir / "manifest.txt").write_text(m.text)
    catalog = corpus.default_catalog(int(m.corpus_keys.get("catalog-size", 64)))
    cases = corpus.generate_corpus(
        seed=m.seed,
        n_cases=int(m.corpus_keys.get("n-cases", 8000)),
        catalog=catalog,
        ambiguity=float(m.corpus_keys.get("ambiguity", 0.5)))
    corpus_path, catalog_path = _corpus_paths(m)
    corpus.save_transcripts(cases, corpus_path)
    corpus.save_catalog(catalog, catalog_path)
    write_stamp(m, "gen-corpus", [corpus_path, catalog_path])
    print(f"wrote {corpus_path} ({len(cases)} cases), {catalog_path} ({catalog.size} templates)")


def cmd_train_tokenizer(m: RunManifest) -> None:
    corpus_path, _ = _corpus_paths(m)
    _require(corpus_path, "gen-corpus")
    cases = corpus.load_transcripts(corpus_path)
    cap = int(m.tokenizer_keys.get("train-cases", len(cases)))
    text = "\n".join(corpus.format_pretraining(t) for t in cases[:cap])
    vocab = bpe.train_bpe(text.encode(), int(m.tokenizer_keys.get("vocab-size", 512)))
    vocab_path = m.run_dir / "vocab.txt"
    bpe.save_vocab(vocab, vocab_path)
    write_stamp(m, "train-tokenizer", [vocab_path])
    print(f"wrote {vocab_path} (size {vocab.size})")


def _load_inputs(m: RunManifest):
    corpus_path, catalog_path = _corpus_paths(m)
    _require(corpus_path, "gen-corpus")
    _require(catalog_path, "gen-corpus")
    vocab_path = _require(m.run_dir / "vocab.txt", "train-tokenizer")
    cases = corpus.load_transcripts(corpus_path)
    catalog = corpus.load_catalog(catalog_path)
    vocab = bpe.load_vocab(vocab_path)
    return cases, catalog, vocab


def cmd_adapt(m: RunManifest, preset_name: str) -> list[train.Checkpoint]:
    cases, catalog, vocab = _load_inputs(m)
    preset = m.preset(preset_name)
    cfg = m.adapt_config(preset)
    docs = [bpe.encode(corpus.format_pretraining(t), vocab) for t in cases]
    seqs = corpus.pack_sequences(docs, m.context_length(), eot_id=vocab.eot_id)
    net = model.DecoderModel(preset.config, seed=m.seed)
    out_dir = m.run_dir / "adapt" / preset_name
    ledger = out_dir / "ledger.ndjson"
    out_dir.mkdir(parents=True, exist_ok=True)
    ledger.unlink(missing_ok=True)
    cks = train.domain_adapt(net, seqs, cfg, vocab=vocab, out_dir=out_dir,
                             vocab_hash=model.hash_vocab(vocab), ledger_path=ledger,
                             preset_name=preset_name)
    write_stamp(m, f"adapt-{preset_name}",
                [ledger] + [p for ck in cks for p in sorted(Path(ck.path).iterdir())])
    print(f"{preset_name}: {len(cks)} checkpoints under {out_dir}")
    return cks


def _build_examples(m: RunManifest, cases, vocab):
    max_len = int(m.corpus_keys.get("max-len", 128))
    examples = corpus.examples_from_corpus(cases, max_len, vocab)
    return corpus.split_by_case(examples, m.train_fraction, m.seed)


def _finetune_one(m: RunManifest, preset_name: str, ckpt_dir: Path | None,
                  tag: str) -> dict:
    cases, catalog, vocab = _load_inputs(m)
    preset = m.preset(preset_name)
    fcfg = m.finetune_config()
    train_set, test_set = _build_examples(m, cases, vocab)
    if ckpt_dir is None:
        net = model.DecoderModel(preset.config, seed=m.seed)
        step, tokens_seen, lm_loss = 0, 0, None
    else:
        net, _, manifest = model.load_checkpoint(ckpt_dir)
        step = manifest["step"]
        tokens_seen = manifest["tokens_seen"]
        lm_loss = manifest["eval_loss"]
    head, metrics = train.fine_tune(net, train_set, test_set, fcfg, catalog,
                                    pad_id=vocab.pad_id)
    out_dir = m.run_dir / "finetune" / preset_name / tag
    version = f"{preset_name}-{tag}-{m.run_id[:6]}"
    model.save_checkpoint(out_dir, net, step=step, tokens_seen=tokens_seen,
                          vocab_hash=model.hash_vocab(vocab), head=head,
                          eval_loss=lm_loss,
                          extra={"max_len": fcfg.max_len, "model_version": version,
                                 "catalog_size": catalog.size, "preset": preset_name})
    record = {
        "model_name": preset_name, "n_params": model.count_params(preset.config),
        "tokens_seen": tokens_seen, "lm_loss": lm_loss,
        "cls_loss": metrics.cls_loss,
        "top_k": {str(k): v for k, v in metrics.top_k.items()},
        "n_examples": metrics.n_examples, "checkpoint_step": step,
        "model_version": version,
    }
    (out_dir / "metrics.json").write_text(json.dumps(record, sort_keys=True, indent=1) + "\n")
    return record


def cmd_finetune(m: RunManifest, preset_name: str, checkpoint: str | None,
                 from_init: bool) -> dict:
    if from_init:
        ckpt_dir, tag = None, "init"
    elif checkpoint is not None:
        ckpt_dir, tag = Path(checkpoint), Path(checkpoint).name
    else:
        adapt_dir = _require(m.run_dir / "adapt" / preset_name, f"adapt --preset {preset_name}")
        ckpts = sorted(adapt_dir.glob("ckpt_*"))
        if not ckpts:
            raise ManifestError(f"no checkpoints under {adapt_dir}")
        ckpt_dir, tag = ckpts[-1], ckpts[-1].name
    record = _finetune_one(m, preset_name, ckpt_dir, tag)
    write_stamp(m, f"finetune-{preset_name}-{tag}",
                sorted((m.run_dir / "finetune" / preset_name / tag).iterdir()))
    print(json.dumps(record, sort_keys=True))
    return record


def _sweep_job(args: tuple) -> dict:
    manifest_path, preset_name, ckpt_dir, tag = args
    m = parse_manifest(manifest_path)
    return _finetune_one(m, preset_name, Path(ckpt_dir), tag)


def cmd_sweep(m: RunManifest, manifest_path: str, workers: int) -> None:
    jobs = []
    for preset_name in m.sweep_presets:
        adapt_dir = m.run_dir / "adapt" / preset_name
        if not adapt_dir.exists() or not sorted(adapt_dir.glob("ckpt_*")):
            cmd_adapt(m, preset_name)
        for ckpt in sorted(adapt_dir.glob("ckpt_*")):
            jobs.append((manifest_path, preset_name, str(ckpt), ckpt.name))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_sweep_job, jobs))
    else:
        records = [_sweep_job(j) for j in jobs]
    points, warnings = scaling.collect(records)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    scaling_dir = m.run_dir / "scaling"
    scaling_dir.mkdir(parents=True, exist_ok=True)
    scaling.write_points_csv(points, scaling_dir / "points.csv")
    write_stamp(m, "sweep", [scaling_dir / "points.csv"])
    print(f"{len(jobs)} fine-tune runs -> {len(points)} points in {scaling_dir / 'points.csv'}")


def cmd_scaling_report(m: RunManifest) -> None:
    points_path = _require(m.run_dir / "scaling" / "points.csv", "sweep")
    points = scaling.read_points_csv(points_path)
    fits = scaling.standard_fits(points)
    written = scaling.emit_report(points, fits, m.run_dir / "scaling")
    write_stamp(m, "scaling-report", written)
    for p in written:
        print(f"wrote {p}")


def cmd_gen_pool(m: RunManifest, out: str, size: int) -> None:
    cases, _, _ = _load_inputs(m)
    rng = np.random.default_rng(m.seed)
    pool = []
    for _ in range(size):
        t = cases[int(rng.integers(len(cases)))]
        labeled = [i for i in t.labeled_indices() if i >= 1]
        cut = labeled[0] if labeled else len(t.messages)
        pool.append({"case_id": t.case_id,
                     "messages": [{"role": msg.role, "text": msg.text}
                                  for msg in t.messages[:cut]],
                     "k": 5})
    with open(out, "w") as f:
        for p in pool:
            f.write(json.dumps(p, sort_keys=True) + "\n")
    print(f"wrote {out} ({len(pool)} request payloads)")


def cmd_serve(args) -> None:
    if args.mock_delay is not None:
        runtime = loadtest.FixedDelayRuntime(args.mock_delay, catalog_size=args.mock_catalog_size)
        svc = serve.PredictionService(runtime=runtime, queue_depth=args.queue_depth,
                                      events_path=args.events_out,
                                      predictions_log=args.predictions_log)
    else:
        if args.checkpoint is None or args.vocab is None:
            raise ManifestError("serve requires --checkpoint and --vocab (or --mock-delay)")
        runtime = serve.load_runtime(args.checkpoint, args.vocab)
        if args.catalog:
            catalog = corpus.load_catalog(args.catalog)
            if catalog.size != runtime.catalog_size:
                raise ManifestError(
                    f"catalog size {catalog.size} != head classes {runtime.catalog_size}")
        svc = serve.PredictionService(runtime=runtime, queue_depth=args.queue_depth,
                                      events_path=args.events_out,
                                      predictions_log=args.predictions_log)
    serve.run_server(svc, host=args.host, port=args.port)


def cmd_loadtest(args) -> None:
    pool = []
    with open(args.pool) as f:
        for line in f:
            if line.strip():
                pool.append(json.loads(line))
    rates = [float(r) for r in args.rps.split(",") if r]
    plan = loadtest.LoadTestPlan(rates=rates, duration_sec=args.duration, pool=pool,
                                 seed=args.seed)
    results = loadtest.run_load_test(plan, args.url, timeout=args.timeout)
    reports = loadtest.reports_for_run(results, window_sec=args.window,
                                       duration_sec=args.duration)
    loadtest.write_report_csv(reports, args.out)
    for r in reports:
        print(f"rate {r.rate}: avg {r.peak_1min_avg_ms} p99 {r.p99_ms} max {r.max_ms} "
              f"errors {r.error_count}")
    print(f"wrote {args.out}")


def cmd_abtest(args) -> None:
    events = abtest.load_events(args.events)
    if args.action == "summarize":
        summaries = abtest.selection_time_summary(events)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        abtest.write_summary_csv(summaries, out_dir / "weekly_summary.csv")
        rows = []
        if args.predictions:
            rows = abtest.accuracy_vs_savings(events, abtest.load_predictions(args.predictions),
                                              args.top_n)
            abtest.write_savings_csv(rows, out_dir / "savings_vs_accuracy.csv")
        abtest.plot_summaries(summaries, rows, out_dir)
        print(f"wrote summaries under {out_dir}")
    elif args.action == "trend":
        summaries = abtest.selection_time_summary(events)
        series = [s.difference for s in summaries if s.difference is not None]
        r = abtest.mann_kendall(series)
        print(json.dumps({"S": r.S, "var_S": r.var_S, "z": r.z, "p_value": r.p_value,
                          "direction": r.direction}, sort_keys=True))
    elif args.action == "compare":
        versions = sorted({e.model_version for e in events})
        if args.versions:
            va, vb = args.versions.split(",")
        elif len(versions) >= 2:
            va, vb = versions[0], versions[1]
        else:
            raise ManifestError("need two model versions for compare")
        a = [e.selection_time_sec for e in events
             if e.model_version == va and e.group == abtest.GROUP_TREATMENT]
        b = [e.selection_time_sec for e in events
             if e.model_version == vb and e.group == abtest.GROUP_TREATMENT]
        r = abtest.welch_t_test(a, b)
        print(json.dumps({"a": va, "b": vb, "mean_a": r.mean_a, "mean_b": r.mean_b,
                          "t_stat": r.t_stat, "dof": r.dof, "p_value": r.p_value},
                         sort_keys=True))
    elif args.action == "savings":
        if not args.predictions:
            raise ManifestError("savings requires --predictions")
        rows = abtest.accuracy_vs_savings(events, abtest.load_predictions(args.predictions),
                                          args.top_n)
        for r in rows:
            print(f"{r.template_id},{r.volume},{r.accuracy},{r.mean_saving}")


def cmd_simulate_events(args) -> None:
    cfg = abtest.SimulatorConfig(
        n_sessions=args.sessions, n_templates=args.templates,
        holdout_fraction=args.holdout, salt=args.salt, seed=args.seed,
        weeks=args.weeks, model_version=args.model_version)
    events, predictions = abtest.simulate_events(cfg)
    abtest.save_events(events, args.out)
    if args.predictions:
        abtest.save_predictions(predictions, args.predictions)
    n_holdout = sum(e.group == abtest.GROUP_HOLDOUT for e in events)
    print(f"wrote {args.out} ({len(events)} events, {n_holdout} holdout)")


# ---------------------------------------------------------------------------
# argument parsing / dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="suggestlab")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_manifest(p):
        p.add_argument("--manifest", required=True)
        return p

    with_manifest(sub.add_parser("gen-corpus"))
    with_manifest(sub.add_parser("train-tokenizer"))
    p = with_manifest(sub.add_parser("adapt"))
    p.add_argument("--preset", required=True, choices=PRESET_NAMES)
    p = with_manifest(sub.add_parser("finetune"))
    p.add_argument("--preset", required=True, choices=PRESET_NAMES)
    p.add_argument("--checkpoint")
    p.add_argument("--from-init", action="store_true")
    p = with_manifest(sub.add_parser("sweep"))
    p.add_argument("--workers", type=int, default=1)
    with_manifest(sub.add_parser("scaling-report"))
    p = with_manifest(sub.add_parser("gen-pool"))
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=10000)

    p = sub.add_parser("serve")
    p.add_argument("--checkpoint")
    p.add_argument("--vocab")
    p.add_argument("--catalog")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--queue-depth", type=int, default=64)
    p.add_argument("--events-out")
    p.add_argument("--predictions-log")
    p.add_argument("--mock-delay", type=float, default=None,
                   help="serve a fixed-delay mock backend (load-test methodology)")
    p.add_argument("--mock-catalog-size", type=int, default=64)

    p = sub.add_parser("loadtest")
    p.add_argument("--rps", default="1,2,5,10,20")
    p.add_argument("--duration", type=float, default=300.0)
    p.add_argument("--pool", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--url", default="http://127.0.0.1:8080/v1/predict")
    p.add_argument("--window", type=float, default=60.0)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("abtest")
    p.add_argument("action", choices=["summarize", "trend", "compare", "savings"])
    p.add_argument("--events", required=True)
    p.add_argument("--predictions")
    p.add_argument("--out-dir", default="abtest-out")
    p.add_argument("--top-n", type=int, default=300)
    p.add_argument("--versions")

    p = sub.add_parser("simulate-events")
    p.add_argument("--out", required=True)
    p.add_argument("--predictions")
    p.add_argument("--sessions", type=int, default=10000)
    p.add_argument("--templates", type=int, default=64)
    p.add_argument("--holdout", type=float, default=0.02)
    p.add_argument("--salt", default="sim")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weeks", type=int, default=8)
    p.add_argument("--model-version", default="sim-v1")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("gen-corpus", "train-tokenizer", "adapt", "finetune",
                            "sweep", "scaling-report", "gen-pool"):
            m = parse_manifest(args.manifest)
            if args.command == "gen-corpus":
                cmd_gen_corpus(m)
            elif args.command == "train-tokenizer":
                cmd_train_tokenizer(m)
            elif args.command == "adapt":
                cmd_adapt(m, args.preset)
            elif args.command == "finetune":
                cmd_finetune(m, args.preset, args.checkpoint, args.from_init)
            elif args.command == "sweep":
                cmd_sweep(m, args.manifest, args.workers)
            elif args.command == "scaling-report":
                cmd_scaling_report(m)
            elif args.command == "gen-pool":
                cmd_gen_pool(m, args.out, args.size)
        elif args.command == "serve":
            cmd_serve(args)
        elif args.command == "loadtest":
            cmd_loadtest(args)
        elif args.command == "abtest":
            cmd_abtest(args)
        elif args.command == "simulate-events":
            cmd_simulate_events(args)
        return 0
    except (ManifestError, ContractError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
