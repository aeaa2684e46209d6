"""Command-line interface for the full lifecycle: generate, train, eval,
predict, serve, stats.

The CLI is a thin layer over the library; the predict subcommand builds its
response through the same function as the HTTP service, so both produce
identical rankings for the same model and input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import TrainingConfig
from .data import (
    DatasetError,
    Taxonomy,
    TaxonomyError,
    dataset_stats,
    load_dataset,
    save_dataset,
    split_dataset,
)
from .evaluation import evaluate, format_metrics_table
from .synthetic import SyntheticSpec, generate_synthetic
from .training import CheckpointError, load_model, save_model, train


def _int_or_list(text: str) -> int | tuple[int, ...]:
    parts = [p for p in text.split(",") if p]
    if len(parts) == 1:
        return int(parts[0])
    return tuple(int(p) for p in parts)


def _ratios(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated ratios")
    return parts[0], parts[1], parts[2]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pomp",
        description="Two-tier disease prediction from patient narratives",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic dataset and taxonomy")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="dataset JSONL path")
    gen.add_argument("--taxonomy-out", help="taxonomy JSON path (default: <out base>.taxonomy.json)")
    gen.add_argument("--records-per-category", type=_int_or_list, default=200)
    gen.add_argument("--categories", type=int, default=6)
    gen.add_argument("--diseases-per-category", type=_int_or_list, default=5)
    gen.add_argument("--overlap", type=float, default=0.0)
    gen.add_argument("--demographic-dependence", action="store_true")
    gen.add_argument("--vocab-size", type=int, default=200)
    gen.add_argument("--tokens-per-field", type=int, default=8)

    tr = sub.add_parser("train", help="train a model and write a checkpoint")
    tr.add_argument("--data", required=True, help="dataset JSONL path")
    tr.add_argument("--taxonomy", required=True, help="taxonomy JSON path")
    tr.add_argument("--config", help="JSON config file (TrainingConfig keys)")
    tr.add_argument("--out", required=True, help="checkpoint output path")
    tr.add_argument("--history", help="training-history JSON output path")
    tr.add_argument("--split", type=_ratios, default=(0.8, 0.1, 0.1),
                    help="train,val,test ratios (default 0.8,0.1,0.1)")

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--mode", choices=["full", "text_only"], default="full")
    ev.add_argument("--out", help="metrics JSON output path")

    pr = sub.add_parser("predict", help="predict for one JSON record")
    pr.add_argument("--model", required=True)
    pr.add_argument("--input", default="-", help="record JSON path, or - for stdin")
    pr.add_argument("--top-k-categories", type=int, default=None)
    pr.add_argument("--top-k-diseases", type=int, default=None)

    sv = sub.add_parser("serve", help="run the HTTP prediction service")
    sv.add_argument("--model", help="checkpoint path (or POMP_MODEL env var)")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8080)
    sv.add_argument("--cors", action="store_true",
                    help="send permissive cross-origin headers")

    st = sub.add_parser("stats", help="print dataset statistics")
    st.add_argument("--data", required=True)
    st.add_argument("--taxonomy", required=True)

    return parser


def _cmd_generate(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(
        seed=args.seed,
        records_per_category=args.records_per_category,
        category_count=args.categories,
        diseases_per_category=args.diseases_per_category,
        overlap_fraction=args.overlap,
        demographic_dependence=args.demographic_dependence,
        vocabulary_size=args.vocab_size,
        tokens_per_field=args.tokens_per_field,
    )
    dataset, taxonomy, _ = generate_synthetic(spec)
    out = Path(args.out)
    taxonomy_out = Path(args.taxonomy_out) if args.taxonomy_out else out.with_suffix(".taxonomy.json")
    save_dataset(dataset, out)
    taxonomy.save(taxonomy_out)
    print(f"wrote {len(dataset)} records to {out} and taxonomy to {taxonomy_out}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    if args.config:
        config = TrainingConfig.from_dict(
            json.loads(Path(args.config).read_text(encoding="utf-8"))
        )
    else:
        config = TrainingConfig()
    taxonomy = Taxonomy.load(args.taxonomy)
    dataset = load_dataset(args.data, taxonomy)
    train_set, val_set, _ = split_dataset(dataset, args.split, seed=config.seed)
    model, history = train(train_set, val_set, config)
    save_model(model, args.out)
    if args.history:
        Path(args.history).write_text(json.dumps(history, indent=2), encoding="utf-8")
    last = history[-1]
    best = max(history, key=lambda h: h["val_joint_hit1"])
    print(
        f"trained {config.epochs} epochs; final loss {last['train_loss']:.4f}; "
        f"best val joint Hit@1 {best['val_joint_hit1']:.3f} (epoch {best['epoch']}); "
        f"checkpoint {args.out}"
    )
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    dataset = load_dataset(args.data, model.taxonomy)
    report = evaluate(model, dataset, mode=args.mode)
    if args.out:
        Path(args.out).write_text(
            json.dumps(report.to_dict(), indent=2), encoding="utf-8"
        )
    print(format_metrics_table(report))
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    from .server import PredictRequest, build_predict_response

    model = load_model(args.model)
    if args.input == "-":
        raw = sys.stdin.read()
    else:
        raw = Path(args.input).read_text(encoding="utf-8")
    payload = json.loads(raw)
    if args.top_k_categories is not None:
        payload["top_k_categories"] = args.top_k_categories
    if args.top_k_diseases is not None:
        payload["top_k_diseases"] = args.top_k_diseases
    request = PredictRequest.model_validate(payload)
    response = build_predict_response(model, request)
    print(response.model_dump_json(indent=2))
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import create_app

    model_path = args.model or os.environ.get("POMP_MODEL")
    if not model_path:
        print("error: supply --model or set POMP_MODEL", file=sys.stderr)
        return 1
    model = load_model(model_path)
    app = create_app(model, cors=args.cors)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    taxonomy = Taxonomy.load(args.taxonomy)
    dataset = load_dataset(args.data, taxonomy)
    report = dataset_stats(dataset)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "serve": _cmd_serve,
    "stats": _cmd_stats,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (DatasetError, TaxonomyError, CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON input: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
