"""The multi-task system: one claim-document pass feeding both task heads.

The claim and every premise sentence are packed into a single sequence and
encoded once. Each surviving sentence's token block is pooled to a vector;
the evidence head scores these vectors, gating keeps those above the
threshold, and the gated vectors are pooled again into an evidence summary
the verdict head classifies. Both heads train jointly against a weighted sum
of the per-sentence binary cross-entropy and the verdict cross-entropy.
During training the evidence summary pools the gold spans (teacher forcing);
at inference it pools the gated spans. The claim's own block is never fed to
the verdict head: its content already reaches the sentence vectors through
the shared encoding.
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
from .encode import ToyEncoder, build_joint_sequence, pool_span, pool_span_backward
from .errors import MissingGold, MissingGoldEvidence, MissingGoldLabel
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
from .pipeline import EVIDENCE_CLASS, SystemPrediction, select_evidence, verdict_from_probs

_JOINT_SEED_SALT = 37


@dataclass
class JointModel:
    """Shared encoder plus the two task heads and inference settings."""

    encoder: object
    evidence_head: EvidenceHead
    verdict_head: EntailmentHead
    max_len: int = 1024
    threshold: float = 0.5
    pooling: str = "mean"
    inject_arm_prefix: bool = False


@dataclass(frozen=True)
class JointOutput:
    """One forward pass: survivor evidence probabilities plus the verdict.

    ``evidence_probs[i]`` belongs to premise sentence ``i`` (survivors are
    the premise prefix); truncated sentences appear in ``dropped`` with an
    implicit probability of zero and can never be gated. ``pooled_from``
    records which sentence vectors formed the evidence summary.
    """

    evidence_probs: tuple[float, ...]
    gated: tuple[int, ...]
    pooled_from: tuple[int, ...]
    class_probs: tuple[float, ...]
    verdict: str
    fallback_used: bool
    dropped: tuple[int, ...]


def _verdict_probs(logits: np.ndarray) -> tuple[float, float]:
    """Two-label distribution from verdict logits.

    Heads configured with extra verdict slots are supported by renormalizing
    over the two task labels; with the default two-class head this is the
    plain softmax.
    """
    probs = softmax(logits)[:2]
    total = probs.sum()
    return (float(probs[0] / total), float(probs[1] / total))


def forward_joint(claim: ClaimInstance, premise: PremiseDoc, model: JointModel) -> JointOutput:
    """Single-pass inference over one claim-document sequence."""
    ji = build_joint_sequence(model.encoder.tokenizer, claim.text, premise, model.max_len)
    matrix = model.encoder.encode(ji.token_ids)
    sentence_vecs = [pool_span(matrix, span, model.pooling) for span in ji.span_map]
    probs = [
        float(softmax(model.evidence_head.logits(v))[EVIDENCE_CLASS]) for v in sentence_vecs
    ]
    if probs:
        selection = select_evidence(probs, model.threshold)
        gated = tuple(sorted(selection.indices))
        fallback = selection.fallback_used
    else:
        gated, fallback = (), False
    if gated:
        summary = np.mean([sentence_vecs[i] for i in gated], axis=0)
    else:
        summary = np.zeros(model.encoder.dim)
    class_probs = _verdict_probs(model.verdict_head.logits(summary))
    return JointOutput(
        evidence_probs=tuple(probs),
        gated=gated,
        pooled_from=gated,
        class_probs=class_probs,
        verdict=verdict_from_probs(class_probs),
        fallback_used=fallback,
        dropped=ji.dropped_sentences,
    )


def joint_loss(
    output: JointOutput,
    gold_evidence: frozenset[int] | set[int] | None,
    gold_label: str | None,
    weights: tuple[float, float] = (1.0, 1.0),
) -> float:
    """Weighted sum of mean per-sentence BCE and verdict cross-entropy.

    Truncated sentences carry no probability and stay out of the evidence
    term; a premise with no survivors contributes zero to it.
    """
    if gold_evidence is None or gold_label is None:
        raise MissingGold("joint loss needs both gold evidence and a gold label")
    w_ev, w_ent = weights
    bce = 0.0
    if output.evidence_probs:
        for i, p in enumerate(output.evidence_probs):
            p = min(max(p, 1e-300), 1.0 - 1e-16)
            bce -= np.log(p) if i in gold_evidence else np.log(1.0 - p)
        bce /= len(output.evidence_probs)
    ce = -float(np.log(max(output.class_probs[LABELS.index(gold_label)], 1e-300)))
    return float(w_ev * bce + w_ent * ce)


def joint_grads(
    model: JointModel,
    claim: ClaimInstance,
    premise: PremiseDoc,
    gold_evidence: frozenset[int],
    gold_label: str,
    weights: tuple[float, float] = (1.0, 1.0),
    teacher_forcing: bool = True,
):
    """Loss terms and analytic gradients for one claim.

    Returns (total, evidence_loss, verdict_loss, encoder grads or None,
    evidence-head grads, verdict-head grads). With ``teacher_forcing`` the
    evidence summary pools the gold spans that survived truncation (falling
    back to all survivors when none did); otherwise it pools the gated spans,
    matching inference.
    """
    w_ev, w_ent = weights
    encoder, pooling = model.encoder, model.pooling
    ji = build_joint_sequence(encoder.tokenizer, claim.text, premise, model.max_len)
    trainable = encoder.trainable
    if trainable:
        matrix, enc_cache = encoder.encode_with_cache(ji.token_ids)
    else:
        matrix, enc_cache = encoder.encode(ji.token_ids), None
    d_matrix = np.zeros_like(matrix)

    sentence_vecs = [pool_span(matrix, span, pooling) for span in ji.span_map]
    n_surv = len(sentence_vecs)

    # Evidence term: mean BCE over survivors.
    ev_grads = zero_grads(model.evidence_head.params)
    evidence_loss = 0.0
    probs = []
    for i, vec in enumerate(sentence_vecs):
        logits, cache = mlp_forward(model.evidence_head.params, vec)
        probs.append(float(softmax(logits)[EVIDENCE_CLASS]))
        target = EVIDENCE_CLASS if i in gold_evidence else 1 - EVIDENCE_CLASS
        loss, d_logits = cross_entropy(logits, target)
        evidence_loss += loss / n_surv
        grads, d_vec = mlp_backward(model.evidence_head.params, cache, d_logits * (w_ev / n_surv))
        accumulate(ev_grads, grads)
        d_matrix += pool_span_backward(d_vec, matrix, ji.span_map[i], pooling)

    # Verdict term over the pooled evidence summary.
    if teacher_forcing:
        pool_set = sorted(i for i in gold_evidence if i < n_surv)
        if not pool_set:
            pool_set = list(range(n_surv))
    else:
        pool_set = sorted(select_evidence(probs, model.threshold).indices) if probs else []
    if pool_set:
        summary = np.mean([sentence_vecs[i] for i in pool_set], axis=0)
    else:
        summary = np.zeros(encoder.dim)
    logits, cache = mlp_forward(model.verdict_head.params, summary)
    verdict_loss, d_logits = cross_entropy(logits, LABELS.index(gold_label))
    v_grads, d_summary = mlp_backward(model.verdict_head.params, cache, d_logits * w_ent)
    for i in pool_set:
        d_matrix += pool_span_backward(d_summary / len(pool_set), matrix, ji.span_map[i], pooling)

    enc_grads = encoder.backward(enc_cache, d_matrix) if trainable else None
    total = w_ev * evidence_loss + w_ent * verdict_loss
    return total, evidence_loss, verdict_loss, enc_grads, ev_grads, v_grads


@dataclass
class JointTrainResult:
    model: JointModel
    loss_curve: dict[str, list[float]] = field(default_factory=dict)


def train_joint(
    train_claims: Sequence[ClaimInstance],
    corpus: Mapping[str, ClinicalTrialRecord],
    hyperparams: Hyperparams,
    encoder=None,
    max_len: int = 1024,
    threshold: float = 0.5,
    pooling: str = "mean",
    inject_arm_prefix: bool = False,
    verdict_classes: int = 2,
    encoder_factory=None,
) -> JointTrainResult:
    """Jointly fit the shared encoder and both heads."""
    root = np.random.SeedSequence([_JOINT_SEED_SALT, hyperparams.seed])
    enc_seed, ev_seed, v_seed, shuffle_seed = root.spawn(4)
    if encoder is None:
        encoder = encoder_factory(enc_seed) if encoder_factory else ToyEncoder(seed=enc_seed)
    model = JointModel(
        encoder=encoder,
        evidence_head=EvidenceHead.create(encoder.dim, n_classes=2, seed=ev_seed),
        verdict_head=EntailmentHead.create(encoder.dim, n_classes=verdict_classes, seed=v_seed),
        max_len=max_len,
        threshold=threshold,
        pooling=pooling,
        inject_arm_prefix=inject_arm_prefix,
    )

    examples = []
    for claim in train_claims:
        if claim.gold_evidence is None:
            raise MissingGoldEvidence(f"claim {claim.claim_id} has no gold evidence")
        if claim.gold_label is None:
            raise MissingGoldLabel(f"claim {claim.claim_id} has no gold label")
        premise = resolve_premise(claim, corpus, inject_arm_prefix)
        examples.append((claim, premise, gold_evidence_globals(claim, premise), claim.gold_label))

    hp = hyperparams
    weights = (hp.w_evidence, hp.w_entailment)
    schedule = WarmupLinearSchedule(hp.learning_rate, hp.total_steps(len(examples)), hp.warmup_rate)
    optimizer = SgdwOptimizer(schedule, weight_decay=hp.weight_decay)
    groups = [model.evidence_head.params, model.verdict_head.params]
    if encoder.trainable:
        groups.append(encoder.params)

    curves: dict[str, list[float]] = {"total": [], "evidence": [], "entailment": []}
    rng = np.random.default_rng(shuffle_seed)
    for batch_idx in minibatches(len(examples), hp, rng):
        scale = 1.0 / len(batch_idx)
        batch_grads = [zero_grads(g) for g in groups]
        totals = np.zeros(3)
        for idx in batch_idx:
            claim, premise, gold, label = examples[idx]
            total, l_ev, l_ent, enc_g, ev_g, v_g = joint_grads(
                model, claim, premise, gold, label, weights, teacher_forcing=True
            )
            totals += (total, l_ev, l_ent)
            accumulate(batch_grads[0], ev_g, scale)
            accumulate(batch_grads[1], v_g, scale)
            if enc_g is not None:
                accumulate(batch_grads[2], enc_g, scale)
        optimizer.step(groups, batch_grads)
        totals *= scale
        curves["total"].append(float(totals[0]))
        curves["evidence"].append(float(totals[1]))
        curves["entailment"].append(float(totals[2]))
    return JointTrainResult(model=model, loss_curve=curves)


def predict_joint(
    claim: ClaimInstance,
    corpus: Mapping[str, ClinicalTrialRecord],
    model: JointModel,
) -> SystemPrediction:
    """Run the joint model and map its output to the shared prediction shape.

    The returned probability list covers the full premise: truncated
    sentences get probability 0.0 and are never selected.
    """
    premise = resolve_premise(claim, corpus, model.inject_arm_prefix)
    out = forward_joint(claim, premise, model)
    full_probs = list(out.evidence_probs) + [0.0] * len(out.dropped)
    return SystemPrediction(
        claim_id=claim.claim_id,
        evidence_probs=tuple(full_probs),
        selected=out.gated,
        class_probs=(out.class_probs[0], out.class_probs[1]),
        verdict=out.verdict,
        fallback_used=out.fallback_used,
    )
