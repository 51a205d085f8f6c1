"""Command-line interface: validate, train, predict, ensemble, evaluate, report.

Every command accepts ``--config FILE`` (JSON) plus flag overrides, flags
winning. Exit codes: 0 success, 1 data or validation failure, 2 usage error,
3 encoder backend unavailable.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .checkpoint import load_any_model, save_joint_model, save_pipeline_model
from .config import (
    EVIDENCE_SOURCE_CHOICES,
    POOLING_CHOICES,
    SYSTEM_CHOICES,
    RunConfig,
    load_run_config,
)
from .corpus import load_claims, load_corpus, validate_dataset
from .encode import ToyEncoder, create_encoder
from .ensemble import TASK_CHOICES, ensemble_predictions, load_predictions, save_predictions
from .errors import BackendUnavailable, CtrnliError
from .joint import predict_joint, train_joint
from .metrics import build_gold_view, build_report, load_report_obj, render_table, report_from_json_obj, write_report
from .pipeline import PipelineModel, predict_pipeline, train_entailment_model, train_evidence_model

logger = logging.getLogger(__name__)


class UsageError(Exception):
    """Bad invocation: missing inputs, contradictory flags."""


def _require(value, what: str):
    if value is None:
        raise UsageError(f"{what} is required (flag or config file)")
    return value


def _load_data(cfg: RunConfig, need_labels: bool = False):
    corpus_path = Path(_require(cfg.corpus, "--corpus"))
    claims_path = Path(_require(cfg.claims, "--claims"))
    if not corpus_path.exists():
        raise UsageError(f"corpus path {corpus_path} does not exist")
    if not claims_path.exists() and not claims_path.parent.is_dir():
        raise UsageError(f"claims path {claims_path} does not exist")
    corpus = load_corpus(corpus_path)
    claims = load_claims(claims_path, split=cfg.split, corpus=corpus, lenient=cfg.lenient)
    if need_labels:
        claims = [c for c in claims if c.is_labeled]
    return corpus, claims


def _hyperparam_overrides(args) -> dict:
    keys = (
        "learning_rate", "warmup_rate", "weight_decay", "epochs",
        "batch_size", "seed", "max_steps", "w_evidence", "w_entailment",
    )
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _encoder_overrides(args) -> dict:
    mapping = {
        "backend": "encoder_backend", "vocab_size": "vocab_size", "dim": "dim",
        "n_layers": "n_layers", "max_len": "max_len", "pooling": "pooling",
        "model_name": "model_name", "device": "device",
    }
    out = {k: getattr(args, flag) for k, flag in mapping.items()
           if getattr(args, flag, None) is not None}
    if getattr(args, "mixed_precision", None) is not None:
        out["mixed_precision"] = args.mixed_precision
    return out


def _run_config(args, extra: dict | None = None) -> RunConfig:
    overrides: dict = {
        k: getattr(args, k, None)
        for k in (
            "corpus", "claims", "split", "system", "threshold", "verdict_classes",
            "evidence_source", "jobs",
        )
    }
    if getattr(args, "inject_arm_prefix", False):
        overrides["inject_arm_prefix"] = True
    if getattr(args, "lenient", False):
        overrides["lenient"] = True
    overrides["hyperparams"] = _hyperparam_overrides(args)
    overrides["encoder"] = _encoder_overrides(args)
    ens = {
        k: getattr(args, flag)
        for k, flag in (
            ("w_pipeline", "w_pipeline"), ("w_joint", "w_joint"),
            ("max_evidence", "max_evidence"), ("tasks", "tasks"),
        )
        if getattr(args, flag, None) is not None
    }
    if getattr(args, "threshold", None) is not None:
        ens["threshold"] = args.threshold
    overrides["ensemble"] = ens
    overrides.update(extra or {})
    return load_run_config(getattr(args, "config", None), overrides)


def _make_encoders(cfg: RunConfig):
    """(shared ready encoder or None, seeded toy factory or None)."""
    enc = cfg.encoder
    if enc.backend == "toy":
        def factory(seed):
            return ToyEncoder(
                vocab_size=enc.vocab_size, dim=enc.dim, n_layers=enc.n_layers, seed=seed
            )

        return None, factory
    ready = create_encoder(
        backend=enc.backend,
        model_name=enc.model_name,
        device=enc.device,
        mixed_precision=enc.resolved_mixed_precision(),
    )
    return ready, None


# --- commands -----------------------------------------------------------------


def cmd_validate(args) -> int:
    cfg = _run_config(args)
    corpus_path = Path(_require(cfg.corpus, "--corpus"))
    claims_path = Path(_require(cfg.claims, "--claims"))
    if not corpus_path.exists():
        raise UsageError(f"corpus path {corpus_path} does not exist")
    corpus = load_corpus(corpus_path)
    # claims load unlinked so reference problems are reported, not raised
    claims = load_claims(claims_path, split=cfg.split)
    report = validate_dataset(corpus, claims)
    print(report.render())
    return 0 if report.ok else 1


def cmd_train(args) -> int:
    cfg = _run_config(args)
    if args.seed is None and "seed" not in _config_file_hyperparams(args.config):
        raise UsageError("--seed is required for training")
    corpus, claims = _load_data(cfg, need_labels=True)
    if not claims:
        raise UsageError("no labeled claims to train on")
    out_dir = Path(args.out)
    hp = cfg.hyperparams
    max_len = cfg.encoder.resolved_max_len(cfg.system)
    ready, factory = _make_encoders(cfg)

    if cfg.system == "pipeline":
        evidence = train_evidence_model(
            claims, corpus, hp,
            encoder=ready, encoder_factory=factory,
            max_len=max_len, pooling=cfg.encoder.pooling,
            inject_arm_prefix=cfg.inject_arm_prefix,
        )
        entailment = train_entailment_model(
            claims, corpus, hp,
            evidence_source=cfg.evidence_source,
            evidence_model=evidence if cfg.evidence_source == "predicted" else None,
            encoder=ready, encoder_factory=factory,
            max_len=max_len, threshold=cfg.threshold, pooling=cfg.encoder.pooling,
            inject_arm_prefix=cfg.inject_arm_prefix,
        )
        model = PipelineModel(
            evidence_encoder=evidence.encoder,
            evidence_head=evidence.head,
            entailment_encoder=entailment.encoder,
            entailment_head=entailment.head,
            max_len=max_len,
            threshold=cfg.threshold,
            pooling=cfg.encoder.pooling,
            inject_arm_prefix=cfg.inject_arm_prefix,
        )
        save_pipeline_model(model, out_dir)
        curves = {"evidence": evidence.loss_curve, "entailment": entailment.loss_curve}
    else:
        result = train_joint(
            claims, corpus, hp,
            encoder=ready, encoder_factory=factory,
            max_len=max_len, threshold=cfg.threshold, pooling=cfg.encoder.pooling,
            inject_arm_prefix=cfg.inject_arm_prefix,
            verdict_classes=cfg.verdict_classes,
        )
        save_joint_model(result.model, out_dir)
        curves = result.loss_curve
    (out_dir / "loss_curve.json").write_text(json.dumps(curves, sort_keys=True) + "\n")
    print(f"checkpoint written to {out_dir}")
    return 0


def _config_file_hyperparams(config_path) -> dict:
    if config_path is None:
        return {}
    try:
        obj = json.loads(Path(config_path).read_text())
    except (OSError, json.JSONDecodeError):
        return {}
    hp = obj.get("hyperparams", {})
    return hp if isinstance(hp, dict) else {}


def cmd_predict(args) -> int:
    cfg = _run_config(args)
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise UsageError(f"checkpoint {ckpt} does not exist")
    corpus, claims = _load_data(cfg)
    system, model = load_any_model(ckpt)
    if args.threshold is not None:
        model.threshold = args.threshold
    if system == "pipeline":
        def predict_one(claim):
            return predict_pipeline(claim, corpus, model)
    else:
        def predict_one(claim):
            return predict_joint(claim, corpus, model)

    if cfg.jobs > 1:
        # results are reduced in claim order regardless of worker count
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            preds = list(pool.map(predict_one, claims))
    else:
        preds = [predict_one(c) for c in claims]
    save_predictions(preds, args.out)
    print(f"{len(preds)} predictions written to {args.out}")
    return 0


def cmd_ensemble(args) -> int:
    cfg = _run_config(args)
    for path in (args.predictions_a, args.predictions_b):
        if not Path(path).exists():
            raise UsageError(f"prediction file {path} does not exist")
    preds_a = load_predictions(args.predictions_a)
    preds_b = load_predictions(args.predictions_b)
    combined = ensemble_predictions(preds_a, preds_b, cfg.ensemble)
    save_predictions(combined, args.out)
    print(f"{len(combined)} combined predictions written to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _run_config(args)
    if not Path(args.predictions).exists():
        raise UsageError(f"prediction file {args.predictions} does not exist")
    preds = load_predictions(args.predictions)
    corpus, claims = _load_data(cfg, need_labels=True)
    golds = build_gold_view(claims, corpus, cfg.inject_arm_prefix)
    metadata = {
        "predictions": str(args.predictions),
        "claims": str(cfg.claims),
        "n_claims": len(preds),
    }
    if cfg.split:
        metadata["split"] = cfg.split
    report = build_report(preds, golds, metadata)
    if args.out:
        write_report(report, args.out)
        print(f"report written to {args.out}")
    print(render_table(report))
    return 0


def cmd_report(args) -> int:
    if not Path(args.report).exists():
        raise UsageError(f"report file {args.report} does not exist")
    report = report_from_json_obj(load_report_obj(args.report))
    print(render_table(report))
    return 0


# --- parser ---------------------------------------------------------------------


def _add_data_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file; explicit flags override it")
    p.add_argument("--corpus", help="trial corpus JSON file or directory")
    p.add_argument("--claims", help="claim file or directory of {split}.json")
    p.add_argument("--split", help="split name when --claims is a directory")
    p.add_argument("--lenient", action="store_true", default=None,
                   help="skip claims referencing missing trials instead of failing")


def _add_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--system", choices=SYSTEM_CHOICES)
    p.add_argument("--encoder-backend", choices=("toy", "pretrained"))
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--n-layers", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--pooling", choices=POOLING_CHOICES)
    p.add_argument("--model-name", help="pretrained model identifier")
    p.add_argument("--device", help="pretrained backend device string")
    mp = p.add_mutually_exclusive_group()
    mp.add_argument("--mixed-precision", dest="mixed_precision", action="store_true",
                    default=None)
    mp.add_argument("--no-mixed-precision", dest="mixed_precision", action="store_false")
    p.add_argument("--threshold", type=float, help="evidence gating threshold")
    p.add_argument("--inject-arm-prefix", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctrnli",
        description="Evidence selection and entailment over clinical trial reports",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a corpus and claim file for violations")
    _add_data_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("train", help="train a system and write a checkpoint")
    _add_data_flags(p)
    _add_model_flags(p)
    p.add_argument("--out", required=True, help="checkpoint directory to create")
    p.add_argument("--seed", type=int, help="training seed (required)")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--warmup-rate", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--w-evidence", type=float, help="joint loss weight for the evidence task")
    p.add_argument("--w-entailment", type=float, help="joint loss weight for the verdict task")
    p.add_argument("--evidence-source", choices=EVIDENCE_SOURCE_CHOICES,
                   help="premise for entailment training: gold or predicted evidence")
    p.add_argument("--verdict-classes", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="run a checkpoint over claims")
    _add_data_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="prediction JSON file to write")
    p.add_argument("--threshold", type=float)
    p.add_argument("--jobs", type=int, help="parallel prediction threads")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ensemble", help="combine two prediction files")
    p.add_argument("predictions_a")
    p.add_argument("predictions_b")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--w-pipeline", type=float)
    p.add_argument("--w-joint", type=float)
    p.add_argument("--max-evidence", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--tasks", choices=TASK_CHOICES)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("evaluate", help="score predictions against gold claims")
    _add_data_flags(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", help="report JSON file to write")
    p.add_argument("--inject-arm-prefix", action="store_true", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="render a report file as a table")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"not found: {exc}", file=sys.stderr)
        return 2
    except BackendUnavailable as exc:
        print(f"backend unavailable: {exc}", file=sys.stderr)
        return 3
    except CtrnliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
