"""Command-line entry point wiring the pipeline end to end.

Subcommands: simulate, build-graphs, train, evaluate, ablate, report.
Exit codes: 0 success, 1 runtime failure, 2 usage error. All randomness
derives from the single --seed flag.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import sys
from pathlib import Path

from . import evaluation, gcn, graphs, simulate
from .telemetry import CLASS_INDEX, CLASS_LABELS, read_run_specs

MODALITY_CHOICES = graphs.MODALITIES
SPLIT_CHOICES = ("random_stratified", "trial_level")
MODEL_CHOICES = ("gcn", "forest", "mlp")


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--run-spec-file", action="append", default=[], metavar="CSV",
                   help="run-spec CSV (repeatable; files merge in order)")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--log-dim", type=int, default=16)
    p.add_argument("--hidden-dim", type=int, default=32)
    p.add_argument("--test-size", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--output-dir", default="out/experiment")
    p.add_argument("--modality", choices=MODALITY_CHOICES, default="logs_plus_metrics")
    p.add_argument("--split", choices=SPLIT_CHOICES, default="random_stratified")
    p.add_argument("--model", choices=MODEL_CHOICES, default="gcn")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallelism cap; 1 is the canonical deterministic path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microids",
        description="Simulate microservice attack trials and reproduce the detection experiments.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="generate synthetic trials and a run-spec CSV")
    p.add_argument("--trials", type=int, default=50, help="total trials (round-robin over attack scenarios)")
    p.add_argument("--duration", type=int, default=simulate.DEFAULT_DURATION_S, metavar="SECONDS")
    p.add_argument("--normal-rps", type=float, default=simulate.DEFAULT_NORMAL_RPS)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--output-dir", default="data/trials")
    p.add_argument("--jobs", type=int, default=1)

    for name, help_text in (
        ("build-graphs", "assemble the labeled graph dataset for one modality"),
        ("train", "train a single GCN cell and write a checkpoint"),
        ("evaluate", "train and evaluate one (split, model, modality) cell"),
        ("ablate", "run the full split x model x modality grid"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common_flags(p)

    p = sub.add_parser("report", help="re-render tables and charts from an existing results.json")
    p.add_argument("--input", required=True, metavar="RESULTS_JSON")
    p.add_argument("--output-dir", default="out/report")

    return parser


def _load_specs(args) -> list:
    if not args.run_spec_file:
        raise SystemExit(2)
    rows = []
    for path in args.run_spec_file:
        rows.extend(read_run_specs(path))
    return rows


def _cmd_simulate(args) -> int:
    plan = simulate.default_trial_plan(
        n_trials=args.trials, seed=args.seed, duration_s=args.duration, normal_rps=args.normal_rps
    )
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            list(pool.map(_simulate_one, [(cfg, str(out_dir / cfg.run_id)) for cfg in plan]))
        rows = [(cfg.run_id, cfg.scenario, str(out_dir / cfg.run_id)) for cfg in plan]
        simulate.write_run_specs(rows, out_dir / "run_specs.csv")
    else:
        rows = simulate.simulate_corpus(plan, out_dir)
    print(f"simulated {len(rows)} trials under {out_dir}")
    return 0


def _simulate_one(item):
    cfg, trial_dir = item
    simulate.simulate_trial(cfg, trial_dir)


def _experiment_config(args) -> evaluation.ExperimentConfig:
    return evaluation.ExperimentConfig(
        epochs=args.epochs,
        log_dim=args.log_dim,
        hidden_dim=args.hidden_dim,
        test_size=args.test_size,
        seed=args.seed,
    )


def _cmd_build_graphs(args) -> int:
    specs = _load_specs(args)
    skeletons = graphs.load_skeletons(specs)
    spec = evaluation.SplitSpec(kind=args.split, test_size=args.test_size, seed=args.seed)
    train_ids, _ = evaluation.split(skeletons, spec)
    vocab, scaler = graphs.fit_features(skeletons, train_ids, args.log_dim)
    mode = graphs.ModalityConfig(args.modality, args.log_dim)
    dataset = graphs.featurize(skeletons, mode, vocab, scaler)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"dataset_{args.modality}.jsonl"
    graphs.save_dataset(dataset, vocab, scaler, mode, path)
    print(f"wrote {len(dataset)} graphs to {path}")
    return 0


def _prepare_cell(args):
    specs = _load_specs(args)
    skeletons = graphs.load_skeletons(specs)
    spec = evaluation.SplitSpec(kind=args.split, test_size=args.test_size, seed=args.seed)
    train_ids, test_ids = evaluation.split(skeletons, spec)
    vocab, scaler = graphs.fit_features(skeletons, train_ids, args.log_dim)
    mode = graphs.ModalityConfig(args.modality, args.log_dim)
    dataset = graphs.featurize(skeletons, mode, vocab, scaler)
    by_id = {g.graph_id: g for g in dataset}
    train_graphs = [by_id[i] for i in sorted(train_ids)]
    test_graphs = [by_id[i] for i in sorted(test_ids)]
    return train_graphs, test_graphs


def _cmd_train(args) -> int:
    train_graphs, _ = _prepare_cell(args)
    labels = [CLASS_INDEX[g.label] for g in train_graphs]
    model = gcn.init_model(train_graphs[0].features.shape[1], args.hidden_dim, seed=args.seed)
    config = gcn.TrainConfig(epochs=args.epochs, seed=args.seed)
    _, losses, seconds = gcn.train(model, train_graphs, labels, config)
    out_dir = Path(args.output_dir)
    (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    gcn.save_checkpoint(model, config, out_dir / "checkpoints" / "gcn.json")
    curve = "epoch,loss\n" + "\n".join(f"{i},{v:.8f}" for i, v in enumerate(losses)) + "\n"
    (out_dir / "loss_curve.csv").write_text(curve, encoding="utf-8")
    print(f"trained {args.epochs} epochs in {seconds:.1f}s; final loss {losses[-1]:.4f}")
    return 0


def _cmd_evaluate(args) -> int:
    specs = _load_specs(args)
    skeletons = graphs.load_skeletons(specs)
    config = _experiment_config(args)
    cells = ((args.split, args.model, args.modality),)
    output = evaluation.run_experiment_matrix(skeletons, config, cells)
    if output.failures:
        for cell, msg in output.failures.items():
            print(f"cell {cell} failed: {msg}", file=sys.stderr)
        return 1
    evaluation.emit_report(output, args.output_dir)
    report = output.reports[0]
    print(
        f"{report.cell_name}: accuracy {report.accuracy:.3f}, macro F1 {report.macro_f1:.3f}"
    )
    return 0


def _cmd_ablate(args) -> int:
    specs = _load_specs(args)
    skeletons = graphs.load_skeletons(specs)
    config = _experiment_config(args)
    output = evaluation.run_experiment_matrix(skeletons, config)
    evaluation.emit_report(output, args.output_dir)
    for report in output.reports:
        print(
            f"{report.cell_name}: accuracy {report.accuracy:.3f}, macro F1 {report.macro_f1:.3f}, "
            f"train {report.train_seconds:.2f}s"
        )
    for cell, msg in output.failures.items():
        print(f"cell {cell} failed: {msg}", file=sys.stderr)
    return 1 if output.failures else 0


def _cmd_report(args) -> int:
    with open(args.input, "r", encoding="utf-8") as fh:
        results = json.load(fh)
    reports = [
        evaluation.EvalReport(
            model=r["model"],
            split=r["split"],
            modality=r["modality"],
            per_class=r["per_class"],
            accuracy=r["accuracy"],
            macro_f1=r["macro_f1"],
            weighted_f1=r["weighted_f1"],
            confusion=r["confusion"],
            train_seconds=r["train_seconds"],
            predict_ms_per_graph=r["predict_ms_per_graph"],
        )
        for r in results["reports"]
    ]
    output = evaluation.ExperimentOutput(reports=reports, failures=results.get("failures", {}))
    evaluation.emit_report(output, args.output_dir)
    print(f"re-rendered {len(reports)} reports into {args.output_dir}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "build-graphs": _cmd_build_graphs,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "ablate": _cmd_ablate,
    "report": _cmd_report,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.subcommand](args)
    except SystemExit as exc:
        if exc.code == 2:
            print(f"error: {args.subcommand} requires at least one --run-spec-file", file=sys.stderr)
            parser.print_usage(sys.stderr)
        return int(exc.code or 0)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
