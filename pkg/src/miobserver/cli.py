"""Command line front end.

Subcommands: gen-data, train, eval, predict, ablate, serve. Model
choice comes from --preset, --config (flat key = value file), and --set
overrides, applied in that order. Corpora are JSONL session files.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import apply_overrides, build_configs, load_config
from .data import corpus_windows, load_corpus, save_corpus, split_sessions
from .embed import build_vocab, load_static_vectors
from .errors import (
    ConfigError,
    ContractError,
    ParseError,
    ShapeError,
    TrainingError,
)
from .model import Model, ModelConfig, PRESETS, preset
from .service import forecast_payload, make_server, predict_payload
from .synth import gen_synthetic
from .train import (
    MtlModel,
    MtlSchedule,
    TrainConfig,
    alternate_schedule,
    evaluate_model,
    fit,
    joint_schedule,
    load_checkpoint,
    save_checkpoint,
)

MTL_MODES = (
    "joint:client", "joint:therapist",
    "alternate:categorize", "alternate:forecast",
    "ct_all",
)

ABLATE_AXES = {
    "window": (0, 1, 4, 8, 16),
    "word_attention": ("none", "bidaf", "gmgru"),
    "utterance_attention": ("none", "anchor", "self"),
    "skeleton": ("hgru", "concat"),
    "loss": ("ce", "wce", "focal"),
}


def _mtl_plan(mode: str) -> tuple[dict[str, ModelConfig], MtlSchedule]:
    """Preset configs and round structure for each multi-task mode."""
    by_key = {
        "categorize:client": preset("C_C"),
        "categorize:therapist": preset("C_T"),
        "forecast:client": preset("F_C"),
        "forecast:therapist": preset("F_T"),
    }
    if mode == "joint:client":
        keys = ("categorize:client", "forecast:client")
        sched = joint_schedule(keys)
    elif mode == "joint:therapist":
        keys = ("categorize:therapist", "forecast:therapist")
        sched = joint_schedule(keys)
    elif mode == "alternate:categorize":
        keys = ("categorize:client", "categorize:therapist")
        sched = alternate_schedule(keys)
    elif mode == "alternate:forecast":
        keys = ("forecast:client", "forecast:therapist")
        sched = alternate_schedule(keys)
    elif mode == "ct_all":
        keys = ("categorize:client", "forecast:client",
                "categorize:therapist", "forecast:therapist")
        sched = MtlSchedule(groups=(
            ("categorize:client", "forecast:client"),
            ("categorize:therapist", "forecast:therapist"),
        ))
    else:
        raise ConfigError(f"unknown mtl mode {mode!r}")
    return {k: by_key[k] for k in keys}, sched


def _resolve_configs(args) -> tuple[ModelConfig, TrainConfig]:
    if getattr(args, "config", None):
        mcfg, tcfg = load_config(args.config)
        if getattr(args, "preset", None):
            raise ConfigError("give either --preset or --config, not both")
    elif getattr(args, "preset", None):
        mcfg, tcfg = preset(args.preset), TrainConfig()
    else:
        mcfg, tcfg = build_configs(None, {}, {})
    if getattr(args, "set", None):
        mcfg, tcfg = apply_overrides(mcfg, tcfg, args.set)
    return mcfg, tcfg


def _split(sessions, tcfg: TrainConfig, which: str):
    train, dev, test = split_sessions(sessions, seed=tcfg.seed)
    return {"train": train, "dev": dev, "test": test, "all": sessions}[which]


def _print_report(report, heading: str, out) -> None:
    print(heading, file=out)
    support = report.confusion.sum(axis=1)
    print(f"  {'label':<6} {'prec':>8} {'rec':>8} {'f1':>8} {'n':>7}", file=out)
    for i, lab in enumerate(report.labels):
        print(
            f"  {lab:<6} {report.precision[i]:8.4f} {report.recall[i]:8.4f}"
            f" {report.f1[i]:8.4f} {int(support[i]):7d}",
            file=out,
        )
    print(f"  macro F1 {report.macro_f1:.4f}  ({report.n_examples} examples)",
          file=out)
    for k in sorted(report.recall_at_k):
        print(f"  recall@{k} {report.recall_at_k[k]:.4f}", file=out)


def _epoch_logger(quiet: bool, out):
    if quiet:
        return None

    def log(stats):
        star = " *" if stats.improved else ""
        print(
            f"epoch {stats.epoch:3d}  loss {stats.train_loss:.4f}"
            f"  dev {stats.dev_metric:.4f}{star}",
            file=out,
            flush=True,
        )

    return log


# ---------------------------------------------------------------- commands

def cmd_gen_data(args, out) -> int:
    lo = args.length
    hi = args.length_max if args.length_max is not None else lo
    sessions = gen_synthetic(args.seed, args.sessions, length_range=(lo, hi))
    save_corpus(sessions, args.out)
    n_utt = sum(len(s.utterances) for s in sessions)
    print(f"wrote {len(sessions)} sessions / {n_utt} utterances to {args.out}",
          file=out)
    return 0


def _fit_single(mcfg, tcfg, sessions, args, out):
    train_s, dev_s, _ = split_sessions(sessions, seed=tcfg.seed)
    vocab = build_vocab(
        [u.text for s in train_s for u in s.utterances], min_count=mcfg.min_count
    )
    init = None
    if getattr(args, "vectors", None):
        rng = np.random.default_rng(tcfg.seed)
        init = load_static_vectors(args.vectors, vocab, mcfg.d_w, rng)
    model = Model(mcfg, vocab, seed=tcfg.seed, static_init=init)
    train_w = corpus_windows(train_s, mcfg.window, mcfg.task, mcfg.role)
    dev_w = corpus_windows(dev_s, mcfg.window, mcfg.task, mcfg.role)
    result = fit(model, train_w, dev_w, tcfg, log=_epoch_logger(args.quiet, out))
    return model, result


def cmd_train(args, out) -> int:
    sessions = load_corpus(args.corpus)
    mcfg, tcfg = _resolve_configs(args)
    if args.mtl:
        configs, sched = _mtl_plan(args.mtl)
        if args.set:
            configs = {
                k: apply_overrides(c, tcfg, args.set)[0] for k, c in configs.items()
            }
        train_s, dev_s, _ = split_sessions(sessions, seed=tcfg.seed)
        any_cfg = next(iter(configs.values()))
        vocab = build_vocab(
            [u.text for s in train_s for u in s.utterances],
            min_count=any_cfg.min_count,
        )
        mtl = MtlModel(configs, vocab, seed=tcfg.seed)
        train_w = {
            k: corpus_windows(train_s, c.window, c.task, c.role)
            for k, c in configs.items()
        }
        dev_w = {
            k: corpus_windows(dev_s, c.window, c.task, c.role)
            for k, c in configs.items()
        }
        result = fit(mtl, train_w, dev_w, tcfg, schedule=sched,
                     log=_epoch_logger(args.quiet, out))
        target = mtl
    else:
        target, result = _fit_single(mcfg, tcfg, sessions, args, out)
    extra = {
        "best_metric": result.best_metric,
        "best_epoch": result.best_epoch,
        "split_seed": tcfg.seed,
        "train_config": tcfg.to_dict(),
        "mtl": args.mtl,
    }
    save_checkpoint(args.out, target, extra=extra)
    print(
        f"best dev {result.best_metric:.4f} at epoch {result.best_epoch};"
        f" saved {args.out}",
        file=out,
    )
    return 0


def cmd_eval(args, out) -> int:
    model, extra = load_checkpoint(args.model)
    sessions = load_corpus(args.corpus)
    seed = extra.get("split_seed", 0)
    tcfg = TrainConfig(seed=seed)
    chosen = _split(sessions, tcfg, args.split)
    if not chosen:
        raise ContractError(f"the {args.split} split is empty")
    models = model.models if isinstance(model, MtlModel) else {"": model}
    reports = {}
    for key, m in models.items():
        windows = corpus_windows(chosen, m.config.window, m.config.task,
                                 m.config.role)
        ks = (1, 2, 3) if m.config.task == "forecast" else ()
        report = evaluate_model(m, windows, ks=ks)
        name = key or f"{m.config.task}:{m.config.role}"
        reports[name] = report
        _print_report(report, f"{name} on {args.split}", out)
    if args.json:
        blob = {name: json.loads(r.to_json()) for name, r in reports.items()}
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(blob, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_predict(args, out) -> int:
    model, extra = load_checkpoint(args.model)
    if isinstance(model, MtlModel):
        raise ConfigError("predict works on single-task checkpoints; use eval")
    sessions = load_corpus(args.corpus)
    cfg = model.config
    windows = corpus_windows(sessions, cfg.window, cfg.task, cfg.role)
    if args.limit is not None:
        windows = windows[: args.limit]
    for w in windows:
        if cfg.task == "categorize":
            payload = predict_payload(model, w)
        else:
            payload = forecast_payload(model, w, args.k)
        print(json.dumps(payload, sort_keys=True), file=out)
    return 0


def cmd_ablate(args, out) -> int:
    sessions = load_corpus(args.corpus)
    mcfg, tcfg = _resolve_configs(args)
    if args.epochs is not None:
        tcfg = TrainConfig(**dict(tcfg.to_dict(), max_epochs=args.epochs))
    values = args.values or [str(v) for v in ABLATE_AXES[args.axis]]
    rows = []
    for raw in values:
        if args.axis == "window":
            n_eff = max(1, int(raw))
            variant = ModelConfig.from_dict(
                dict(mcfg.to_dict(), window=n_eff)
            )
        elif args.axis == "loss":
            d = dict(mcfg.to_dict(), loss_variant=raw)
            if raw == "ce":
                d["gamma"] = 0.0
                d["alpha"] = []
            elif raw == "wce":
                d["gamma"] = 0.0
            variant = ModelConfig.from_dict(d)
        elif args.axis == "skeleton":
            # head inputs are skeleton-specific; fall back to each one's default
            variant = ModelConfig.from_dict(
                dict(mcfg.to_dict(), skeleton=raw, head_inputs=[])
            )
        else:
            variant = ModelConfig.from_dict(dict(mcfg.to_dict(), **{args.axis: raw}))
        ns = argparse.Namespace(vectors=getattr(args, "vectors", None),
                                quiet=True)
        _, result = _fit_single(variant, tcfg, sessions, ns, out)
        rows.append((raw, result.best_metric, result.best_epoch))
        print(f"{args.axis}={raw:<8} dev {result.best_metric:.4f}"
              f" (epoch {result.best_epoch})", file=out, flush=True)
    if args.json:
        blob = [
            {"value": v, "dev_macro_f1": m, "best_epoch": e} for v, m, e in rows
        ]
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(blob, fh, indent=2, sort_keys=True)
            fh.write("\n")
    best = max(rows, key=lambda r: r[1])
    print(f"best {args.axis}={best[0]} dev {best[1]:.4f}", file=out)
    return 0


def cmd_serve(args, out) -> int:
    models = {}
    for path in args.model:
        loaded, _ = load_checkpoint(path)
        if isinstance(loaded, MtlModel):
            parts = dict(loaded.models)
        else:
            parts = {f"{loaded.config.task}:{loaded.config.role}": loaded}
        for key, m in parts.items():
            if key in models:
                raise ConfigError(f"two checkpoints provide {key}")
            models[key] = m
    server = make_server(args.host, args.port, models, replay_path=args.replay)
    host, port = server.server_address[:2]
    print(f"listening on http://{host}:{port}  models: {sorted(models)}",
          file=out, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="miobserver",
        description="Dialogue observer: categorize and forecast session codes.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic session corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--sessions", type=int, default=200)
    g.add_argument("--length", type=int, default=40)
    g.add_argument("--length-max", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model and save a checkpoint")
    t.add_argument("--corpus", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--preset", choices=PRESETS)
    t.add_argument("--config")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    t.add_argument("--mtl", choices=MTL_MODES)
    t.add_argument("--vectors", help="static word vectors, one token per line")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="metrics for a checkpoint on a corpus split")
    e.add_argument("--model", required=True)
    e.add_argument("--corpus", required=True)
    e.add_argument("--split", choices=("train", "dev", "test", "all"),
                   default="test")
    e.add_argument("--json", help="also write the report(s) to this file")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("predict", help="print one JSON line per window")
    r.add_argument("--model", required=True)
    r.add_argument("--corpus", required=True)
    r.add_argument("--limit", type=int, default=None)
    r.add_argument("--k", type=int, default=3, help="top-k for forecast models")
    r.set_defaults(func=cmd_predict)

    a = sub.add_parser("ablate", help="train a grid along one config axis")
    a.add_argument("--corpus", required=True)
    a.add_argument("--axis", choices=sorted(ABLATE_AXES), required=True)
    a.add_argument("--values", nargs="*", default=None)
    a.add_argument("--preset", choices=PRESETS)
    a.add_argument("--config")
    a.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    a.add_argument("--epochs", type=int, default=None)
    a.add_argument("--vectors")
    a.add_argument("--json")
    a.set_defaults(func=cmd_ablate)

    s = sub.add_parser("serve", help="serve live sessions over HTTP")
    s.add_argument("--model", action="append", required=True,
                   help="checkpoint path; repeat for more models")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=832)
    s.add_argument("--replay", help="append each state change as a JSON line")
    s.set_defaults(func=cmd_serve)
    return p


def main(argv: list[str] | None = None, out=None) -> int:
    out = out if out is not None else sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, out)
    except (ParseError, ConfigError, ContractError, ShapeError,
            TrainingError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
