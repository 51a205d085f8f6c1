"""Weighted probability averaging over two systems' predictions.

Both tasks' probabilities are combined as p = w_a * p_a + w_b * p_b and the
selection and verdict are recomputed from the averaged numbers under the same
threshold and argmax rules the member systems use. A separate post-processing
step caps the evidence selection at a fixed sentence budget. Combining is
pure arithmetic on prediction objects, so it works just as well on prediction
files produced by external systems.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import IoError, MalformedJson, MismatchedClaim, MismatchedPremiseLength
from .pipeline import SystemPrediction, select_evidence, verdict_from_probs

TASK_CHOICES = ("both", "evidence", "entailment")


@dataclass(frozen=True)
class EnsembleConfig:
    """Member weights and shared inference settings.

    Weights must be non-negative and sum to one. ``tasks`` restricts the
    averaging to one task; the first prediction passes through unchanged for
    the other.
    """

    w_pipeline: float = 0.4
    w_joint: float = 0.6
    max_evidence: int = 20
    threshold: float = 0.5
    tasks: str = "both"

    def __post_init__(self):
        if self.w_pipeline < 0 or self.w_joint < 0:
            raise ValueError("ensemble weights must be non-negative")
        if abs(self.w_pipeline + self.w_joint - 1.0) > 1e-9:
            raise ValueError("ensemble weights must sum to 1")
        if self.max_evidence < 1:
            raise ValueError("max_evidence must be at least 1")
        if self.tasks not in TASK_CHOICES:
            raise ValueError(f"tasks must be one of {TASK_CHOICES}")


def combine(
    pred_a: SystemPrediction, pred_b: SystemPrediction, cfg: EnsembleConfig
) -> SystemPrediction:
    """Average two predictions for the same claim.

    Averaging alone; the evidence cap is a separate post-processing step so
    that equal inputs combine to themselves exactly.
    """
    if pred_a.claim_id != pred_b.claim_id:
        raise MismatchedClaim(
            f"cannot combine predictions for {pred_a.claim_id!r} and {pred_b.claim_id!r}"
        )
    if len(pred_a.evidence_probs) != len(pred_b.evidence_probs):
        raise MismatchedPremiseLength(
            f"claim {pred_a.claim_id}: premise lengths "
            f"{len(pred_a.evidence_probs)} != {len(pred_b.evidence_probs)}"
        )
    w_a, w_b = cfg.w_pipeline, cfg.w_joint

    if cfg.tasks in ("both", "evidence"):
        ev_probs = tuple(
            w_a * a + w_b * b for a, b in zip(pred_a.evidence_probs, pred_b.evidence_probs)
        )
        if ev_probs:
            selection = select_evidence(ev_probs, cfg.threshold)
            selected = tuple(sorted(selection.indices))
            fallback = selection.fallback_used
        else:
            selected, fallback = (), False
    else:
        ev_probs = pred_a.evidence_probs
        selected = pred_a.selected
        fallback = pred_a.fallback_used

    if cfg.tasks in ("both", "entailment"):
        class_probs = (
            w_a * pred_a.class_probs[0] + w_b * pred_b.class_probs[0],
            w_a * pred_a.class_probs[1] + w_b * pred_b.class_probs[1],
        )
        verdict = verdict_from_probs(class_probs)
    else:
        class_probs = pred_a.class_probs
        verdict = pred_a.verdict

    return SystemPrediction(
        claim_id=pred_a.claim_id,
        evidence_probs=ev_probs,
        selected=selected,
        class_probs=class_probs,
        verdict=verdict,
        fallback_used=fallback,
    )


def postprocess_evidence(
    evidence_probs: Sequence[float], selected: Sequence[int], cfg: EnsembleConfig
) -> frozenset[int]:
    """Cap a selection at ``max_evidence`` sentences.

    When over budget, the highest-probability indices are kept; ties break
    toward the lower index. Under budget the selection is returned unchanged.
    """
    indices = sorted(set(selected))
    if len(indices) <= cfg.max_evidence:
        return frozenset(indices)
    ranked = sorted(indices, key=lambda i: (-evidence_probs[i], i))
    return frozenset(ranked[: cfg.max_evidence])


def cap_prediction(pred: SystemPrediction, cfg: EnsembleConfig) -> SystemPrediction:
    """Apply the evidence cap to one prediction."""
    kept = postprocess_evidence(pred.evidence_probs, pred.selected, cfg)
    if len(kept) == len(pred.selected):
        return pred
    return dataclasses.replace(pred, selected=tuple(sorted(kept)))


def ensemble_predictions(
    preds_a: Sequence[SystemPrediction],
    preds_b: Sequence[SystemPrediction],
    cfg: EnsembleConfig,
) -> list[SystemPrediction]:
    """Combine two prediction lists claim by claim, then cap the evidence.

    Predictions are paired by claim id and the output keeps the first list's
    order. Both lists must cover exactly the same claims.
    """
    by_id = {p.claim_id: p for p in preds_b}
    missing = [p.claim_id for p in preds_a if p.claim_id not in by_id]
    extra = sorted(by_id.keys() - {p.claim_id for p in preds_a})
    if missing or extra:
        raise MismatchedClaim(
            f"prediction lists cover different claims (missing from second: {missing}, "
            f"only in second: {extra})"
        )
    return [cap_prediction(combine(p, by_id[p.claim_id], cfg), cfg) for p in preds_a]


def save_predictions(preds: Sequence[SystemPrediction], path: str | Path) -> None:
    """Write predictions as a JSON list, deterministically ordered."""
    payload = [p.to_json_obj() for p in preds]
    try:
        Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write predictions to {path}: {exc}") from exc


def load_predictions(path: str | Path) -> list[SystemPrediction]:
    """Read a prediction list written by :func:`save_predictions` or an
    external system emitting the same shape."""
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read predictions from {path}: {exc}") from exc
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"{path}: {exc}") from exc
    if not isinstance(payload, list):
        raise MalformedJson(f"{path}: expected a JSON list of predictions")
    return [SystemPrediction.from_json_obj(obj) for obj in payload]
