"""Batch entry point: reproducible, config-driven pipeline runs.

Value precedence: command-line flags > key=value config file > profile
defaults. Profiles bundle the reference hyperparameters: `tacred-like`
(k_cred 250, h 0.25, beta 0.5, phi 0.3, mu 0.35) and `docred-like`
(h 0.1, phi 0.15, mu 0.02). Every subcommand prints a single JSON summary
line; identical flags and seeds produce byte-identical artifacts. Exit codes:
0 success, 1 validation error, 2 I/O error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import (
    SynthConfig,
    build_index,
    fit_density,
    make_folds,
    read_datastore,
    read_revisions,
    synth_generate,
    write_datastore,
    write_revisions,
)
from .corrector import (
    ContrastiveConfig,
    NeighborEncoderConfig,
    TrainConfig,
    apply_corrections,
    read_corrections,
    train_crossval,
    write_corrections,
)
from .datastore import write_jsonl
from .detector import (
    INCONSISTENT,
    classify_threshold,
    credibility_scores,
    rank_eval,
    read_report,
    vote_detect,
    write_report,
)
from .metrics import classification_metrics, cohen_kappa, write_metric_report
from .softening import (
    SofteningConfig,
    kde_soften,
    knn_replace,
    read_targets,
    write_change_log,
    write_targets,
)

PROFILES = {
    "tacred-like": {
        "k_vote": 3, "k_cred": 250, "beta": 0.5, "h": 0.25,
        "phi": 0.3, "soften_h": 0.25, "mu": 0.35, "tau": 0.1,
        "n_retrieved": 100, "n_peers": 5, "projection_dim": 189,
        "enc_layers": 2, "enc_heads": 8, "k_context": 10,
        "folds": 4, "epochs": 5, "lr": 5e-4, "dropout": 0.2,
        "warmup_ratio": 0.1, "batch_size": 64,
    },
    "docred-like": {
        "k_vote": 3, "k_cred": 250, "beta": 0.5, "h": 0.1,
        "phi": 0.15, "soften_h": 0.1, "mu": 0.02, "tau": 0.1,
        "n_retrieved": 100, "n_peers": 5, "projection_dim": 189,
        "enc_layers": 2, "enc_heads": 8, "k_context": 10,
        "folds": 4, "epochs": 5, "lr": 5e-4, "dropout": 0.2,
        "warmup_ratio": 0.1, "batch_size": 64,
    },
}


class CliError(ValueError):
    pass


def _read_config_file(path) -> dict:
    values = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"config line without '=': {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _resolve(args, key: str, cast, flag_value):
    """flags > config file > profile default."""
    if flag_value is not None:
        return flag_value
    if key in args._config_values:
        return cast(args._config_values[key])
    return PROFILES[args.profile][key]


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("REANNO_THREADS")
    return int(env) if env else 1


def _summary(subcommand: str, **fields) -> None:
    print(json.dumps({"subcommand": subcommand, **fields}, sort_keys=True))


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--profile", choices=sorted(PROFILES), default="tacred-like",
                   help="hyperparameter profile supplying defaults")
    p.add_argument("--config", default=None,
                   help="key=value file overriding profile defaults")
    p.add_argument("--seed", type=int, default=7, help="run seed")
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap (falls back to REANNO_THREADS, then 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reanno",
        description="Detect and correct annotation noise over an embedding datastore.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate a synthetic noisy datastore")
    _add_common(p)
    p.add_argument("--clusters", type=int, default=5)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--per-cluster", type=int, default=400)
    p.add_argument("--flip", type=float, default=0.1, help="label flip rate in [0,1)")
    p.add_argument("--spread", type=float, default=1.0, help="per-cluster sigma")
    p.add_argument("--center-radius", type=float, default=6.0)
    p.add_argument("--out", required=True, help="datastore output path")
    p.add_argument("--revisions", required=True, help="true-label file output path")

    p = sub.add_parser("detect", help="flag inconsistent annotations")
    _add_common(p)
    p.add_argument("--store", required=True)
    p.add_argument("--mode", choices=("vote", "credibility"), default="credibility")
    p.add_argument("--k", type=int, default=None,
                   help="neighbours (vote: profile k_vote 3, credibility: k_cred 250)")
    p.add_argument("--h", type=float, default=None, help="KDE bandwidth (profile 0.25)")
    p.add_argument("--beta", type=float, default=None, help="threshold (profile 0.5)")
    p.add_argument("--report", required=True, help="report output path (jsonl)")

    p = sub.add_parser("rank-eval", help="rank retrieval quality against revisions")
    _add_common(p)
    p.add_argument("--store", required=True)
    p.add_argument("--revisions", required=True)
    p.add_argument("--k-list", default="1,5,10")
    p.add_argument("--out", required=True, help="metric report output path")

    p = sub.add_parser("soften", help="derive uncertain training targets")
    _add_common(p)
    p.add_argument("--store", required=True)
    p.add_argument("--method", choices=("knn", "kde"), required=True)
    p.add_argument("--phi", type=float, default=None,
                   help="replacement rate (profile: 0.3 tacred-like, 0.15 docred-like)")
    p.add_argument("--h", type=float, default=None,
                   help="soft-label bandwidth (profile: 0.25 tacred-like, 0.1 docred-like)")
    p.add_argument("--targets", required=True, help="targets output path (jsonl)")
    p.add_argument("--change-log", default=None, help="knn change-log output path")

    p = sub.add_parser("correct", help="cross-validated label correction")
    _add_common(p)
    p.add_argument("--store", required=True)
    p.add_argument("--targets", default=None, help="softened targets from `soften`")
    p.add_argument("--folds", type=int, default=None, help="cross-validation folds (profile 4)")
    p.add_argument("--epochs", type=int, default=None, help="epochs per fold (profile 5)")
    p.add_argument("--lr", type=float, default=None, help="learning rate (profile 5e-4)")
    p.add_argument("--batch-size", type=int, default=None, help="batch size (profile 64)")
    p.add_argument("--dropout", type=float, default=None, help="classifier dropout (profile 0.2)")
    p.add_argument("--neighbor-mode", choices=("none", "encoder", "contrastive"),
                   default="none")
    p.add_argument("--embedding-mode", choices=("static", "dynamic"), default=None,
                   help="keybase refresh mode (encoder forces static)")
    p.add_argument("--mu", type=float, default=None,
                   help="contrastive weight (profile: 0.35 tacred-like, 0.02 docred-like)")
    p.add_argument("--projection-dim", type=int, default=None,
                   help="contrastive projection width (profile 189)")
    p.add_argument("--h", type=float, default=None, help="peer soft-label bandwidth")
    p.add_argument("--checkpoint-dir", default=None)
    p.add_argument("--out", required=True, help="corrections output path (jsonl)")

    p = sub.add_parser("apply", help="apply corrections to a datastore")
    _add_common(p)
    p.add_argument("--store", required=True)
    p.add_argument("--corrections", required=True)
    p.add_argument("--out", required=True, help="corrected datastore path")
    p.add_argument("--change-log", required=True)

    p = sub.add_parser("eval", help="score predictions against true labels")
    _add_common(p)
    p.add_argument("--pred", required=True, help="corrections file")
    p.add_argument("--gold", required=True, help="revision file with true labels")
    p.add_argument("--out", required=True, help="metric report output path")

    p = sub.add_parser("kappa", help="agreement between two revision files")
    _add_common(p)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("serve", help="run the review service")
    _add_common(p)
    p.add_argument("--store", required=True)
    p.add_argument("--report", required=True, help="detector report (jsonl)")
    p.add_argument("--corrections", required=True)
    p.add_argument("--metadata", default=None)
    p.add_argument("--audit-log", required=True)
    p.add_argument("--export-dir", default=".")
    p.add_argument("--reviewer", default="reviewer")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8601)

    return parser


def _cmd_synth(args) -> dict:
    cfg = SynthConfig(clusters=args.clusters, dim=args.dim,
                      per_cluster=args.per_cluster, flip_rate=args.flip,
                      spread=args.spread, seed=args.seed,
                      center_radius=args.center_radius)
    store, revisions = synth_generate(cfg)
    write_datastore(store, args.out)
    write_revisions(revisions, args.revisions)
    flipped = sum(1 for r in store.records
                  if r.observed_label != revisions.entries[r.id])
    return {"records": len(store), "flipped": flipped,
            "store": args.out, "revisions": args.revisions}


def _cmd_detect(args) -> dict:
    store = read_datastore(args.store)
    index = build_index(store)
    if args.mode == "vote":
        k = args.k if args.k is not None else _resolve(args, "k_vote", int, None)
        verdicts = vote_detect(index, store, store.ids, k)
        rows = [{"id": id, "psi": None, "verdict": verdicts[id]} for id in store.ids]
        write_jsonl(args.report, rows)
        flagged = sum(1 for v in verdicts.values() if v == INCONSISTENT)
        return {"mode": "vote", "k": k, "flagged": flagged, "report": args.report}
    k = args.k if args.k is not None else _resolve(args, "k_cred", int, None)
    h = _resolve(args, "h", float, args.h)
    beta = _resolve(args, "beta", float, args.beta)
    density = fit_density(store, h=h)
    k = min(k, len(index) - 1)
    report = classify_threshold(
        credibility_scores(index, density, store, store.ids, k,
                           threads=_threads(args)),
        beta,
    )
    write_report(report, args.report)
    flagged = report.verdicts.count(INCONSISTENT)
    return {"mode": "credibility", "k": k, "h": h, "beta": beta,
            "flagged": flagged, "report": args.report}


def _cmd_rank_eval(args) -> dict:
    store = read_datastore(args.store)
    revisions = read_revisions(args.revisions)
    k_list = tuple(int(k) for k in args.k_list.split(","))
    metrics = rank_eval(build_index(store), store, revisions, k_list=k_list)
    write_metric_report(args.out, metrics.as_dict())
    return {"out": args.out, **metrics.as_dict()}


def _cmd_soften(args) -> dict:
    store = read_datastore(args.store)
    if args.method == "knn":
        phi = _resolve(args, "phi", float, args.phi)
        cfg = SofteningConfig(phi=phi, seed=args.seed)
        out = knn_replace(store, build_index(store), cfg)
        write_targets(out, args.targets)
        if args.change_log:
            write_change_log(out, args.change_log)
        return {"method": "knn", "phi": phi, "replaced": len(out.change_log),
                "targets": args.targets}
    h = _resolve(args, "soften_h", float, args.h)
    out = kde_soften(store, fit_density(store, h=h))
    write_targets(out, args.targets)
    return {"method": "kde", "h": h, "targets": args.targets}


def _cmd_correct(args) -> dict:
    store = read_datastore(args.store)
    targets = read_targets(args.targets) if args.targets else None
    train_cfg = TrainConfig(
        n_folds=_resolve(args, "folds", int, args.folds),
        epochs_per_fold=_resolve(args, "epochs", int, args.epochs),
        lr=_resolve(args, "lr", float, args.lr),
        dropout=_resolve(args, "dropout", float, args.dropout),
        warmup_ratio=_resolve(args, "warmup_ratio", float, None),
        batch_size=_resolve(args, "batch_size", int, args.batch_size),
        seed=args.seed,
    )
    contrastive_cfg = None
    encoder_cfg = None
    if args.neighbor_mode == "contrastive":
        contrastive_cfg = ContrastiveConfig(
            tau=_resolve(args, "tau", float, None),
            mu=_resolve(args, "mu", float, args.mu),
            n_retrieved=_resolve(args, "n_retrieved", int, None),
            n_peers=_resolve(args, "n_peers", int, None),
            projection_dim=_resolve(args, "projection_dim", int, args.projection_dim),
            embedding_mode=args.embedding_mode or "dynamic",
        )
    elif args.neighbor_mode == "encoder":
        if args.embedding_mode == "dynamic":
            raise CliError("the neighbour encoder forces static embeddings")
        encoder_cfg = NeighborEncoderConfig(
            layers=_resolve(args, "enc_layers", int, None),
            heads=_resolve(args, "enc_heads", int, None),
            k_context=_resolve(args, "k_context", int, None),
        )
    bandwidth = _resolve(args, "soften_h", float, args.h)
    result = train_crossval(store, targets, train_cfg,
                            contrastive_cfg=contrastive_cfg,
                            encoder_cfg=encoder_cfg,
                            bandwidth=bandwidth,
                            checkpoint_dir=args.checkpoint_dir)
    write_corrections(result, store, args.out)
    changed = sum(1 for id in store.ids
                  if result.predicted[id] != store.by_id(id).observed_label)
    return {"corrections": args.out, "changed": changed,
            "folds": train_cfg.n_folds, "neighbor_mode": args.neighbor_mode}


def _cmd_apply(args) -> dict:
    store = read_datastore(args.store)
    result = read_corrections(args.corrections)
    corrected, change_log = apply_corrections(store, result)
    write_datastore(corrected, args.out)
    write_jsonl(args.change_log, change_log)
    return {"out": args.out, "changed": len(change_log),
            "change_log": args.change_log}


def _cmd_eval(args) -> dict:
    pred = read_corrections(args.pred)
    gold = read_revisions(args.gold)
    pred_labels = {id: pred.predicted[id] for id in gold.entries}
    metrics = classification_metrics(pred_labels, gold.entries)
    write_metric_report(args.out, metrics.as_dict())
    return {"out": args.out, **metrics.as_dict()}


def _cmd_kappa(args) -> dict:
    a = read_revisions(args.a).entries
    b = read_revisions(args.b).entries
    kappa = cohen_kappa(a, b)
    if args.out:
        write_metric_report(args.out, {"cohen_kappa": kappa})
    return {"cohen_kappa": kappa}


def _cmd_serve(args) -> dict:  # pragma: no cover - long-running
    import uvicorn

    from .service import ReviewService, create_app

    service = ReviewService.from_files(
        store_path=args.store,
        report_path=args.report,
        corrections_path=args.corrections,
        metadata_path=args.metadata,
        audit_log_path=args.audit_log,
        export_dir=args.export_dir,
        reviewer=args.reviewer,
        seed=args.seed,
    )
    app = create_app(service)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return {"host": args.host, "port": args.port}


_COMMANDS = {
    "synth": _cmd_synth,
    "detect": _cmd_detect,
    "rank-eval": _cmd_rank_eval,
    "soften": _cmd_soften,
    "correct": _cmd_correct,
    "apply": _cmd_apply,
    "eval": _cmd_eval,
    "kappa": _cmd_kappa,
    "serve": _cmd_serve,
}


def dispatch(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args._config_values = _read_config_file(args.config) if args.config else {}
    try:
        summary = _COMMANDS[args.subcommand](args)
    except (OSError, FileNotFoundError) as exc:
        print(json.dumps({"error": str(exc), "kind": "io"}), file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(json.dumps({"error": str(exc), "kind": "validation"}), file=sys.stderr)
        return 1
    _summary(args.subcommand, **summary)
    return 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
