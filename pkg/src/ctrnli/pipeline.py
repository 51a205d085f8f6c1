"""The two-stage system: evidence selection, then entailment over selections.

Stage one scores every premise sentence independently by encoding the
[sentence, SEP, claim] pair and classifying the pooled vector. Sentences
whose evidence probability strictly exceeds the threshold are selected (with
a top-1 fallback when nothing clears it). Stage two concatenates the selected
sentences in premise order behind the claim and classifies the pooled
encoding into Entailment vs Contradiction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import (
    LABELS,
    ClaimInstance,
    ClinicalTrialRecord,
    PremiseDoc,
    gold_evidence_globals,
    resolve_premise,
)
from .encode import (
    ToyEncoder,
    build_entailment_sequence,
    build_pair_sequence,
    pool_span,
    pool_span_backward,
)
from .errors import (
    EmptyEvidence,
    EmptyPremise,
    MissingGoldEvidence,
    MissingGoldLabel,
)
from .nn import (
    EntailmentHead,
    EvidenceHead,
    Hyperparams,
    SgdwOptimizer,
    WarmupLinearSchedule,
    accumulate,
    cross_entropy,
    minibatches,
    mlp_backward,
    mlp_forward,
    softmax,
    zero_grads,
)

EVIDENCE_CLASS = 0  # logit index of the positive "is evidence" class
PROB_TOL = 1e-9

_EVIDENCE_SEED_SALT = 11
_ENTAILMENT_SEED_SALT = 23


def verdict_from_probs(class_probs: Sequence[float]) -> str:
    """Argmax verdict; an exact tie resolves to Entailment (lowest index)."""
    return LABELS[int(np.argmax(np.asarray(class_probs)))]


@dataclass(frozen=True)
class SystemPrediction:
    """Shared output shape of the pipeline, joint, and ensemble systems."""

    claim_id: str
    evidence_probs: tuple[float, ...]
    selected: tuple[int, ...]
    class_probs: tuple[float, float]
    verdict: str
    fallback_used: bool = False

    def __post_init__(self):
        for p in (*self.evidence_probs, *self.class_probs):
            if not (-PROB_TOL <= p <= 1.0 + PROB_TOL):
                raise ValueError(f"probability {p} outside [0, 1]")
        if abs(sum(self.class_probs) - 1.0) > PROB_TOL:
            raise ValueError(f"class probabilities sum to {sum(self.class_probs)}")
        if self.verdict != verdict_from_probs(self.class_probs):
            raise ValueError("verdict is not the argmax of class_probs")
        if list(self.selected) != sorted(set(self.selected)):
            raise ValueError("selected indices must be sorted and unique")
        n = len(self.evidence_probs)
        if any(not 0 <= i < n for i in self.selected):
            raise ValueError("selected indices outside the premise")

    def to_json_obj(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "evidence_probs": list(self.evidence_probs),
            "selected": list(self.selected),
            "class_probs": list(self.class_probs),
            "verdict": self.verdict,
            "fallback_used": self.fallback_used,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SystemPrediction":
        return cls(
            claim_id=str(obj["claim_id"]),
            evidence_probs=tuple(float(p) for p in obj["evidence_probs"]),
            selected=tuple(int(i) for i in obj["selected"]),
            class_probs=tuple(float(p) for p in obj["class_probs"]),  # type: ignore[arg-type]
            verdict=str(obj["verdict"]),
            fallback_used=bool(obj.get("fallback_used", False)),
        )


@dataclass(frozen=True)
class EvidenceSelection:
    indices: frozenset[int]
    fallback_used: bool = False


def select_evidence(probs: Sequence[float], threshold: float = 0.5) -> EvidenceSelection:
    """Select {i : p_i > threshold}; strictly greater, so p_i == threshold is out.

    When nothing clears the threshold the single highest-probability sentence
    is returned instead (lowest index on ties) and the selection is flagged,
    because the entailment stage needs a non-empty premise.
    """
    chosen = frozenset(i for i, p in enumerate(probs) if p > threshold)
    if chosen:
        return EvidenceSelection(chosen)
    best = int(np.argmax(np.asarray(probs)))
    return EvidenceSelection(frozenset({best}), fallback_used=True)


def _pooled_forward(encoder, head, token_ids, pooling: str):
    matrix, cache = (
        encoder.encode_with_cache(token_ids)
        if encoder.trainable
        else (encoder.encode(token_ids), None)
    )
    pooled = pool_span(matrix, (0, matrix.shape[0]), mode=pooling)
    logits, mlp_cache = mlp_forward(head.params, pooled)
    return logits, (matrix, cache, mlp_cache)


def score_evidence(
    claim: ClaimInstance,
    premise: PremiseDoc,
    encoder,
    head: EvidenceHead,
    max_len: int = 512,
    pooling: str = "mean",
) -> list[float]:
    """One evidence probability per premise sentence."""
    if premise.n == 0:
        raise EmptyPremise(f"claim {claim.claim_id} resolved to an empty premise")
    probs = []
    for i, text in enumerate(premise.texts()):
        pair = build_pair_sequence(encoder.tokenizer, text, claim.text, max_len, sentence_index=i)
        logits, _ = _pooled_forward(encoder, head, pair.token_ids, pooling)
        probs.append(float(softmax(logits)[EVIDENCE_CLASS]))
    return probs


def classify_entailment(
    claim: ClaimInstance,
    premise: PremiseDoc,
    selected: Sequence[int],
    encoder,
    head: EntailmentHead,
    max_len: int = 512,
    pooling: str = "mean",
) -> tuple[tuple[float, float], str]:
    """Class distribution and verdict for the claim given selected evidence.

    The selected indices are canonicalized to premise order before the
    evidence texts are concatenated, so callers may pass them in any order.
    """
    indices = sorted(set(selected))
    if not indices:
        raise EmptyEvidence(f"claim {claim.claim_id}: no evidence sentences selected")
    texts = [premise.sentences[i].text for i in indices]
    seq = build_entailment_sequence(encoder.tokenizer, claim.text, texts, max_len)
    logits, _ = _pooled_forward(encoder, head, seq.token_ids, pooling)
    probs = softmax(logits)
    class_probs = (float(probs[0]), float(probs[1]))
    return class_probs, verdict_from_probs(class_probs)


# --- training ------------------------------------------------------------------


def sequence_classification_grads(
    encoder, head, items: Sequence[tuple[tuple[int, ...], int]], pooling: str = "mean"
):
    """Mean cross-entropy over (token_ids, target) items, with gradients.

    Returns (loss, encoder grads or None for frozen encoders, head grads).
    """
    head_grads = zero_grads(head.params)
    enc_grads = zero_grads(encoder.params) if encoder.trainable else None
    total = 0.0
    scale = 1.0 / len(items)
    for token_ids, target in items:
        logits, (matrix, enc_cache, mlp_cache) = _pooled_forward(encoder, head, token_ids, pooling)
        loss, d_logits = cross_entropy(logits, target)
        total += loss
        grads, d_pooled = mlp_backward(head.params, mlp_cache, d_logits)
        accumulate(head_grads, grads, scale)
        if enc_grads is not None:
            d_matrix = pool_span_backward(d_pooled, matrix, (0, matrix.shape[0]), pooling)
            accumulate(enc_grads, encoder.backward(enc_cache, d_matrix), scale)
    return total * scale, enc_grads, head_grads


def _run_training(
    encoder, head, items, hp: Hyperparams, shuffle_rng, pooling: str = "mean"
) -> list[float]:
    schedule = WarmupLinearSchedule(hp.learning_rate, hp.total_steps(len(items)), hp.warmup_rate)
    optimizer = SgdwOptimizer(schedule, weight_decay=hp.weight_decay)
    groups = [head.params] + ([encoder.params] if encoder.trainable else [])
    curve = []
    for batch_idx in minibatches(len(items), hp, shuffle_rng):
        batch = [items[i] for i in batch_idx]
        loss, enc_grads, head_grads = sequence_classification_grads(encoder, head, batch, pooling)
        grad_groups = [head_grads] + ([enc_grads] if enc_grads is not None else [])
        optimizer.step(groups, grad_groups)
        curve.append(loss)
    return curve


def _seeds(hp: Hyperparams, salt: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence([salt, hp.seed]).spawn(3)


@dataclass
class EvidenceTrainResult:
    encoder: object
    head: EvidenceHead
    loss_curve: list[float] = field(default_factory=list)


@dataclass
class EntailmentTrainResult:
    encoder: object
    head: EntailmentHead
    loss_curve: list[float] = field(default_factory=list)


def evidence_training_items(
    claims: Sequence[ClaimInstance],
    corpus: Mapping[str, ClinicalTrialRecord],
    tokenizer,
    max_len: int,
    inject_arm_prefix: bool = False,
):
    """All (pair token ids, is-evidence target) items across the claims."""
    items = []
    for claim in claims:
        if claim.gold_evidence is None:
            raise MissingGoldEvidence(f"claim {claim.claim_id} has no gold evidence")
        premise = resolve_premise(claim, corpus, inject_arm_prefix)
        gold = gold_evidence_globals(claim, premise)
        for i, text in enumerate(premise.texts()):
            pair = build_pair_sequence(tokenizer, text, claim.text, max_len, sentence_index=i)
            target = EVIDENCE_CLASS if i in gold else 1 - EVIDENCE_CLASS
            items.append((pair.token_ids, target))
    return items


def train_evidence_model(
    train_claims: Sequence[ClaimInstance],
    corpus: Mapping[str, ClinicalTrialRecord],
    hyperparams: Hyperparams,
    encoder=None,
    max_len: int = 512,
    pooling: str = "mean",
    inject_arm_prefix: bool = False,
    encoder_factory=None,
) -> EvidenceTrainResult:
    """Fit the per-sentence evidence classifier (binary cross-entropy).

    A ready ``encoder`` is used as-is; otherwise ``encoder_factory`` (called
    with the derived init seed) or a default toy encoder supplies one.
    """
    enc_seed, head_seed, shuffle_seed = _seeds(hyperparams, _EVIDENCE_SEED_SALT)
    if encoder is None:
        encoder = encoder_factory(enc_seed) if encoder_factory else ToyEncoder(seed=enc_seed)
    head = EvidenceHead.create(encoder.dim, n_classes=2, seed=head_seed)
    items = evidence_training_items(train_claims, corpus, encoder.tokenizer, max_len, inject_arm_prefix)
    curve = _run_training(
        encoder, head, items, hyperparams, np.random.default_rng(shuffle_seed), pooling
    )
    return EvidenceTrainResult(encoder=encoder, head=head, loss_curve=curve)


def entailment_training_items(
    claims: Sequence[ClaimInstance],
    corpus: Mapping[str, ClinicalTrialRecord],
    tokenizer,
    max_len: int,
    evidence_source: str = "gold",
    evidence_model: EvidenceTrainResult | None = None,
    threshold: float = 0.5,
    pooling: str = "mean",
    inject_arm_prefix: bool = False,
):
    """All (sequence token ids, verdict target) items across the claims.

    With ``evidence_source="gold"`` the premise side of each sequence is the
    gold evidence (the stronger training signal); "predicted" runs the given
    evidence model's selection instead.
    """
    if evidence_source not in ("gold", "predicted"):
        raise ValueError(f"unknown evidence_source '{evidence_source}'")
    if evidence_source == "predicted" and evidence_model is None:
        raise ValueError("evidence_source='predicted' needs an evidence model")
    items = []
    for claim in claims:
        if claim.gold_label is None:
            raise MissingGoldLabel(f"claim {claim.claim_id} has no gold label")
        premise = resolve_premise(claim, corpus, inject_arm_prefix)
        if evidence_source == "gold":
            if claim.gold_evidence is None:
                raise MissingGoldEvidence(f"claim {claim.claim_id} has no gold evidence")
            indices = sorted(gold_evidence_globals(claim, premise))
        else:
            probs = score_evidence(
                claim, premise, evidence_model.encoder, evidence_model.head, max_len, pooling
            )
            indices = sorted(select_evidence(probs, threshold).indices)
        texts = [premise.sentences[i].text for i in indices]
        seq = build_entailment_sequence(tokenizer, claim.text, texts, max_len)
        items.append((seq.token_ids, LABELS.index(claim.gold_label)))
    return items


def train_entailment_model(
    train_claims: Sequence[ClaimInstance],
    corpus: Mapping[str, ClinicalTrialRecord],
    hyperparams: Hyperparams,
    evidence_source: str = "gold",
    evidence_model: EvidenceTrainResult | None = None,
    encoder=None,
    max_len: int = 512,
    threshold: float = 0.5,
    pooling: str = "mean",
    inject_arm_prefix: bool = False,
    encoder_factory=None,
) -> EntailmentTrainResult:
    """Fit the verdict classifier on gold (default) or predicted evidence."""
    enc_seed, head_seed, shuffle_seed = _seeds(hyperparams, _ENTAILMENT_SEED_SALT)
    if encoder is None:
        encoder = encoder_factory(enc_seed) if encoder_factory else ToyEncoder(seed=enc_seed)
    head = EntailmentHead.create(encoder.dim, n_classes=2, seed=head_seed)
    items = entailment_training_items(
        train_claims,
        corpus,
        encoder.tokenizer,
        max_len,
        evidence_source=evidence_source,
        evidence_model=evidence_model,
        threshold=threshold,
        pooling=pooling,
        inject_arm_prefix=inject_arm_prefix,
    )
    curve = _run_training(
        encoder, head, items, hyperparams, np.random.default_rng(shuffle_seed), pooling
    )
    return EntailmentTrainResult(encoder=encoder, head=head, loss_curve=curve)


# --- end-to-end prediction -------------------------------------------------------


@dataclass
class PipelineModel:
    """Both trained stages plus the inference settings they were built with."""

    evidence_encoder: object
    evidence_head: EvidenceHead
    entailment_encoder: object
    entailment_head: EntailmentHead
    max_len: int = 512
    threshold: float = 0.5
    pooling: str = "mean"
    inject_arm_prefix: bool = False


def predict_pipeline(
    claim: ClaimInstance,
    corpus: Mapping[str, ClinicalTrialRecord],
    models: PipelineModel,
) -> SystemPrediction:
    """score -> select -> classify, composed into one prediction."""
    premise = resolve_premise(claim, corpus, models.inject_arm_prefix)
    probs = score_evidence(
        claim, premise, models.evidence_encoder, models.evidence_head,
        models.max_len, models.pooling,
    )
    selection = select_evidence(probs, models.threshold)
    class_probs, verdict = classify_entailment(
        claim, premise, sorted(selection.indices),
        models.entailment_encoder, models.entailment_head,
        models.max_len, models.pooling,
    )
    return SystemPrediction(
        claim_id=claim.claim_id,
        evidence_probs=tuple(probs),
        selected=tuple(sorted(selection.indices)),
        class_probs=class_probs,
        verdict=verdict,
        fallback_used=selection.fallback_used,
    )
