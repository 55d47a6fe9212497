"""Command-line front end.

Subcommands: ``train``, ``eval``, ``prune``, ``verify``, ``synth``.
Exit codes: 0 ok, 1 property/eval failure, 2 usage error, 3 data error.
Every run takes a mandatory ``--seed``; same seed, same outputs.
Flag precedence: command line > config file (key=value lines) > defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import corpus as corpus_mod
from .errors import (ConfigError, ConsistencyError, CorpusFormatError,
                     SpikeTopicsError, TrainingDiverged)
from .evaluate import (export_features, fold_in_corpus, fold_in_theta,
                       perplexity, weights_to_model)
from .gibbs import cgs_train, spikecgs_init, spikecgs_train
from .network import Hyperparams, load_checkpoint, save_checkpoint
from .online import du_train, ed_train, semi_train
from .pruning import PrunedNetwork, prune
from .schedules import make_schedule
from .verify import CHECK_NAMES, run_checks

METRICS_SCHEMA = 1

ALGORITHMS = ("cgs", "spikecgs", "ed-spikelda", "du-spikelda",
              "semi-spikelda", "ed-spikeplsi")

ENV_DATA_DIR = "SPIKETOPICS_DATA"


@dataclass
class RunConfig:
    """Resolved training configuration (flags over config file over
    defaults)."""

    algorithm: str = "cgs"
    k: int = 10
    lam: float = 0.1
    phi: float = 0.01
    schedule: str = "rm:a=0.5,b=1000,c=0.7"
    schedule_beta: str = ""
    iters: int = 10
    batch: int = 0
    T: int = 0
    seed: int = -1
    report_every: int = 0
    docword: str = ""
    vocab: str = ""
    toy: bool = False
    out_checkpoint: str = ""
    metrics: str = ""
    format: str = "csv"
    test_fraction: float = 0.0
    split_seed: int = 0
    fold_in_sweeps: int = 200
    threads: int = 1

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"--algo must be one of {ALGORITHMS}")
        if self.seed < 0:
            raise ConfigError("--seed is mandatory (reproducibility contract)")
        if self.k < 1:
            raise ConfigError("--k must be >= 1")
        if self.algorithm == "semi-spikelda":
            if self.T < 1:
                raise ConfigError("--T is required (>= 1) for semi-spikelda")
            if self.batch < 1:
                raise ConfigError("--batch is required (>= 1) for semi-spikelda")
        if self.algorithm == "du-spikelda" and self.batch < 1:
            raise ConfigError("--batch is required (>= 1) for du-spikelda")
        if self.format not in ("csv", "json"):
            raise ConfigError("--format must be csv or json")


def _read_config_file(path):
    values = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line not of form key=value: {raw!r}")
            key, _, val = line.partition("=")
            values[key.strip().replace("-", "_")] = val.strip()
    return values


_BOOL = {"true": True, "1": True, "yes": True,
         "false": False, "0": False, "no": False}


def resolve_config(args):
    """Every parser default is None, so a non-None attribute means the
    flag was given explicitly and beats the config file."""
    cfg = RunConfig()
    file_values = _read_config_file(args.config) if args.config else {}
    for fname in cfg.__dataclass_fields__:
        argname = {"lam": "lambda_", "format": "format_"}.get(fname, fname)
        cli_val = getattr(args, argname, None)
        if cli_val is not None:
            setattr(cfg, fname, cli_val)
        elif fname in file_values:
            raw = file_values[fname]
            cur = getattr(cfg, fname)
            if isinstance(cur, bool):
                setattr(cfg, fname, _BOOL.get(raw.lower(), False))
            elif isinstance(cur, int):
                setattr(cfg, fname, int(raw))
            elif isinstance(cur, float):
                setattr(cfg, fname, float(raw))
            else:
                setattr(cfg, fname, raw)
    return cfg


def _data_path(path):
    if os.path.exists(path):
        return path
    base = os.environ.get(ENV_DATA_DIR)
    if base:
        candidate = os.path.join(base, path)
        if os.path.exists(candidate):
            return candidate
    return path


def _load_corpus(cfg):
    if cfg.toy:
        return corpus_mod.load_toy_corpus()
    if not cfg.docword:
        raise ConfigError("provide --docword (and optionally --vocab) or --toy")
    docword = _data_path(cfg.docword)
    vocab = _data_path(cfg.vocab) if cfg.vocab else None
    return corpus_mod.parse_uci(docword, vocab)


def _write_metric_rows(path, fmt, rows, fieldnames):
    """Append rows to a metrics file; CSV gets a header only when the
    file starts empty, JSON lines carry the schema tag per record."""
    mode = "a"
    exists = os.path.exists(path) and os.path.getsize(path) > 0
    with open(path, mode) as fh:
        if fmt == "csv":
            writer = csv.DictWriter(fh, fieldnames=fieldnames)
            if not exists:
                writer.writeheader()
            for row in rows:
                writer.writerow(row)
        else:
            for row in rows:
                fh.write(json.dumps({"schema": METRICS_SCHEMA, **row},
                                    sort_keys=True) + "\n")


def _trajectory_rows(records, algo, seed):
    rows = []
    for r in records:
        rows.append({
            "algo": algo, "seed": seed, "iteration": r.iteration,
            "eta": f"{r.eta:.8g}",
            "max_zeta_alpha": f"{r.max_zeta_alpha:.8g}",
            "max_zeta_beta": f"{r.max_zeta_beta:.8g}",
            "objective": "" if r.objective is None else f"{r.objective:.10g}",
            "wall_clock": f"{r.wall_clock:.3f}",
        })
    return rows


TRAJECTORY_FIELDS = ["algo", "seed", "iteration", "eta", "max_zeta_alpha",
                     "max_zeta_beta", "objective", "wall_clock"]
PERPLEXITY_FIELDS = ["algo", "iter", "perplexity", "seed"]


def cmd_train(cfg):
    cfg.validate()
    corpus = _load_corpus(cfg)
    corpus = corpus_mod.drop_empty_docs(corpus)
    rng = np.random.default_rng(cfg.seed)
    hp = Hyperparams.symmetric(cfg.k, corpus.vocab_size, cfg.lam, cfg.phi)
    sched = make_schedule(cfg.schedule)
    sched_beta = make_schedule(cfg.schedule_beta) if cfg.schedule_beta else None
    algo = cfg.algorithm
    records = []

    if algo == "cgs":
        counts = cgs_train(corpus, hp, cfg.iters, rng)
        weights = spikecgs_init(counts, hp)
        mode = "cgs"
    elif algo == "spikecgs":
        weights, _ = spikecgs_train(corpus, hp, cfg.iters, rng)
        mode = "spikecgs"
    elif algo in ("ed-spikelda", "ed-spikeplsi"):
        opt_mode = "map" if algo == "ed-spikelda" else "plsi"
        events = cfg.iters * corpus.total_tokens
        report = cfg.report_every * corpus.total_tokens if cfg.report_every else 0
        result = ed_train(corpus, hp, sched, events, rng, mode=opt_mode,
                          report_every=report, schedule_beta=sched_beta)
        weights, records = result.weights, result.records
        mode = algo
    elif algo == "du-spikelda":
        result = du_train(corpus, hp, sched, cfg.iters, cfg.batch, rng,
                          mode="map", report_every=cfg.report_every,
                          schedule_beta=sched_beta)
        weights, records = result.weights, result.records
        mode = algo
    else:  # semi-spikelda
        result = semi_train(corpus, hp, sched, cfg.iters, cfg.batch, cfg.T,
                            rng, report_every=cfg.report_every)
        weights, records = result.weights, result.records
        mode = algo

    if cfg.out_checkpoint:
        save_checkpoint(cfg.out_checkpoint, weights, hp, mode,
                        extra={"algorithm": algo, "seed": cfg.seed,
                               "iters": cfg.iters})
        print(f"checkpoint written to {cfg.out_checkpoint}")
    if cfg.metrics and records:
        _write_metric_rows(cfg.metrics, cfg.format,
                           _trajectory_rows(records, algo, cfg.seed),
                           TRAJECTORY_FIELDS)

    if cfg.test_fraction > 0:
        split = corpus_mod.split_fold_in(corpus, cfg.test_fraction,
                                         cfg.split_seed)
        # retrain on the training split would be the full protocol; for
        # the in-run report we decode and score the held-out documents
        model = weights_to_model(weights)
        thetas = fold_in_corpus(model.phi, split.test_observed, hp.lam,
                                sweeps=cfg.fold_in_sweeps, rng=rng)
        perp = perplexity(model.phi, thetas, split.test_holdout)
        print(f"fold-in perplexity: {perp:.4f}")
        if cfg.metrics:
            _write_metric_rows(cfg.metrics, cfg.format,
                               [{"algo": algo, "iter": cfg.iters,
                                 "perplexity": f"{perp:.6g}",
                                 "seed": cfg.seed}], PERPLEXITY_FIELDS)
    return 0


def cmd_eval(cfg, checkpoint, export_path=None, labels_path=None):
    corpus = _load_corpus(cfg)
    weights, hp, mode, extra = load_checkpoint(_data_path(checkpoint))
    if weights.V != corpus.vocab_size:
        raise ConsistencyError(
            f"checkpoint vocabulary size {weights.V} != corpus {corpus.vocab_size}")
    rng = np.random.default_rng(cfg.seed if cfg.seed >= 0 else 0)
    model = weights_to_model(weights)

    if export_path:
        if weights.D == corpus.num_docs and weights.D > 0:
            thetas = model.theta
        else:
            # document side absent from the checkpoint: infer mixtures
            thetas = np.vstack([
                fold_in_theta(model.phi, corpus.docs[d], hp.lam,
                              sweeps=cfg.fold_in_sweeps, rng=rng)
                for d in range(corpus.num_docs)])
        labels = None
        if labels_path:
            with open(_data_path(labels_path)) as fh:
                labels = [line.strip() for line in fh if line.strip()]
        with open(export_path, "w") as fh:
            export_features(thetas, fh, labels=labels)
        print(f"features written to {export_path}")

    if cfg.test_fraction <= 0:
        if export_path:
            return 0
        raise ConfigError("--test-fraction must be positive for eval")
    split = corpus_mod.split_fold_in(corpus, cfg.test_fraction, cfg.split_seed)
    thetas = fold_in_corpus(model.phi, split.test_observed, hp.lam,
                            sweeps=cfg.fold_in_sweeps, rng=rng)
    perp = perplexity(model.phi, thetas, split.test_holdout)
    print(f"{extra.get('algorithm', mode)} perplexity: {perp:.4f}")
    if cfg.metrics:
        _write_metric_rows(cfg.metrics, cfg.format,
                           [{"algo": extra.get("algorithm", mode),
                             "iter": extra.get("iters", ""),
                             "perplexity": f"{perp:.6g}",
                             "seed": cfg.seed}], PERPLEXITY_FIELDS)
    return 0


def cmd_prune(cfg, checkpoint, out, top_words, resident_docs, store):
    corpus = _load_corpus(cfg)
    weights, hp, mode, extra = load_checkpoint(_data_path(checkpoint))
    result = prune(weights, corpus, top_words=top_words,
                   resident_docs=resident_docs, store_path=store or None)
    if isinstance(result, PrunedNetwork):
        print(f"fan-in per topic neuron: {result.fan_in()}")
        np.savez(out, top_ids=result.top_ids, top_weights=result.top_weights,
                 tied_weight=result.tied_weight,
                 resident_ids=result.resident_ids,
                 resident_cols=result.resident_cols)
        print(f"pruned network written to {out}")
    else:
        print("pruning skipped (vocabulary not larger than --top-words)")
    return 0


def cmd_verify(modes, checks, seed, json_out):
    results = run_checks(modes=modes, checks=checks, seed=seed)
    payload = [r.to_dict() for r in results]
    text = json.dumps(payload, indent=2)
    if json_out:
        with open(json_out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    failed = [r for r in results if not r.passed]
    for r in failed:
        print(f"FAILED: {r.name} [{r.mode}] measured={r.measured:.3e} "
              f"tolerance={r.tolerance:.3e}", file=sys.stderr)
    return 1 if failed else 0


def cmd_synth(num_docs, vocab_size, k, doc_len, seed, out_docword, out_vocab):
    corpus, _, _ = corpus_mod.synthetic_corpus(num_docs, vocab_size, k,
                                               doc_len, seed)
    with open(out_docword, "w") as fh:
        if out_vocab:
            with open(out_vocab, "w") as vh:
                corpus_mod.write_uci(corpus, fh, vh)
        else:
            corpus_mod.write_uci(corpus, fh)
    print(f"synthetic corpus: D={corpus.num_docs} V={corpus.vocab_size} "
          f"N={corpus.total_tokens} -> {out_docword}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spiketopics",
        description="train, evaluate, prune and verify spiking topic models")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", default=None,
                       help="key=value config file (flags win)")
        p.add_argument("--docword", default=None, help="UCI docword file")
        p.add_argument("--vocab", default=None, help="UCI vocab file")
        p.add_argument("--toy", action="store_true", default=None,
                       help="use the bundled toy corpus")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--metrics", default=None, help="metrics output file")
        p.add_argument("--format", dest="format_", choices=("csv", "json"),
                       default=None)
        p.add_argument("--test-fraction", type=float, default=None)
        p.add_argument("--split-seed", type=int, default=None)
        p.add_argument("--fold-in-sweeps", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--dump-config", action="store_true")

    p_train = sub.add_parser("train", help="train a topic model")
    add_common(p_train)
    p_train.add_argument("--algo", dest="algorithm", choices=ALGORITHMS,
                         default=None)
    p_train.add_argument("--k", type=int, default=None)
    p_train.add_argument("--lambda", dest="lambda_", type=float, default=None,
                         help="topic-side Dirichlet (effective value; "
                              "prior-regularized algorithms need > 1)")
    p_train.add_argument("--phi", type=float, default=None,
                         help="word-side Dirichlet")
    p_train.add_argument("--schedule", default=None,
                         help="rm:a=..,b=..,c=.. | rmsprop:eta=.. | "
                              "adagrad:eta=..,amplify_c=.. | vt:window=..")
    p_train.add_argument("--schedule-beta", dest="schedule_beta", default=None,
                         help="separate schedule for the document side")
    p_train.add_argument("--iters", type=int, default=None,
                         help="sweeps (cgs/spikecgs), full passes (ed-*), "
                              "global iterations (du/semi)")
    p_train.add_argument("--batch", type=int, default=None)
    p_train.add_argument("--T", dest="T", type=int, default=None,
                         help="kept semi-collapsed sweeps per document")
    p_train.add_argument("--report-every", type=int, default=None)
    p_train.add_argument("--out-checkpoint", default=None)

    p_eval = sub.add_parser("eval", help="fold-in perplexity of a checkpoint")
    add_common(p_eval)
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("--export-features", dest="export_features",
                        default=None, help="write sparse document features")
    p_eval.add_argument("--labels", default=None,
                        help="one label per document for the feature file")

    p_prune = sub.add_parser("prune", help="fan-in-bounded pruning transform")
    add_common(p_prune)
    p_prune.add_argument("checkpoint")
    p_prune.add_argument("--out", required=True)
    p_prune.add_argument("--top-words", type=int, default=200)
    p_prune.add_argument("--resident-docs", type=int, default=50)
    p_prune.add_argument("--store", default=None,
                         help="external store file for non-resident documents")

    p_verify = sub.add_parser("verify", help="mean-limit theory checks")
    p_verify.add_argument("--mode", choices=("plsi", "map", "semi", "all"),
                          default="all")
    p_verify.add_argument("--check", action="append", choices=CHECK_NAMES,
                          default=None, help="run only the named check(s)")
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--json-out", default=None)

    p_synth = sub.add_parser("synth", help="generate a synthetic corpus")
    p_synth.add_argument("--docs", type=int, default=200)
    p_synth.add_argument("--vocab-size", type=int, default=100)
    p_synth.add_argument("--k", type=int, default=3)
    p_synth.add_argument("--doc-len", type=int, default=100)
    p_synth.add_argument("--seed", type=int, required=True)
    p_synth.add_argument("--out-docword", required=True)
    p_synth.add_argument("--out-vocab", default=None)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            modes = ("plsi", "map", "semi") if args.mode == "all" else (args.mode,)
            checks = tuple(args.check) if args.check else CHECK_NAMES
            return cmd_verify(modes, checks, args.seed, args.json_out)
        if args.command == "synth":
            return cmd_synth(args.docs, args.vocab_size, args.k, args.doc_len,
                             args.seed, args.out_docword, args.out_vocab)

        cfg = resolve_config(args)
        if getattr(args, "dump_config", False):
            print(json.dumps(cfg.__dict__, indent=2, sort_keys=True))
            return 0
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            if cfg.seed < 0:
                cfg.seed = 0
            return cmd_eval(cfg, args.checkpoint,
                            export_path=args.export_features,
                            labels_path=args.labels)
        if args.command == "prune":
            return cmd_prune(cfg, args.checkpoint, args.out, args.top_words,
                             args.resident_docs, args.store)
        parser.error(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CorpusFormatError, ConsistencyError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (SpikeTopicsError, TrainingDiverged) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
