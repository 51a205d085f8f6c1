"""Token sequences, sequence builders, and encoder backends.

Two backends produce per-token dense matrices: a deterministic CPU "toy"
encoder (trainable, with hand-written gradients) and an optional adapter
around a pretrained transformer (frozen features). Sequence builders own the
layout and truncation rules; span bookkeeping inside joint claim-document
sequences lives in :class:`JointInput`.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import PremiseDoc, normalize_text
from .errors import BackendUnavailable, ClaimAloneExceedsMaxLen, EmptySpan, EmptyText

PAD_ID = 0
SEP_ID = 1
NUM_RESERVED = 2


@dataclass(frozen=True)
class TokenSeq:
    """An immutable id sequence; plain text never carries separator ids."""

    token_ids: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.token_ids)


@dataclass(frozen=True)
class PairInput:
    """Candidate-sentence/claim pair laid out as [sentence, SEP, claim]."""

    token_ids: tuple[int, ...]
    sentence_index: int
    sep_position: int

    @property
    def length(self) -> int:
        return len(self.token_ids)


@dataclass(frozen=True)
class JointInput:
    """One claim-document sequence with per-sentence span bookkeeping.

    Layout is claim, SEP, then the surviving sentences separated by SEP.
    Sentences are packed whole and in order; the first sentence that would
    overflow ``max_len`` and everything after it land in
    ``dropped_sentences``. ``span_map[i]`` is the half-open token range of
    surviving sentence ``i`` (survivors are always the prefix 0..k-1 of the
    premise, so positions in ``span_map`` are global sentence indices too).
    """

    token_ids: tuple[int, ...]
    claim_span: tuple[int, int]
    span_map: tuple[tuple[int, int], ...]
    dropped_sentences: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.token_ids)


class HashingTokenizer:
    """Whitespace tokenizer with a stable hash into a fixed-size vocabulary.

    Ids 0 and 1 are reserved for padding and the separator; word ids live in
    [2, vocab_size). Hashing uses blake2b so ids are stable across processes
    and platforms.
    """

    def __init__(self, vocab_size: int = 1024):
        if vocab_size <= NUM_RESERVED:
            raise ValueError("vocab_size must exceed the reserved id count")
        self.vocab_size = vocab_size
        self.sep_id = SEP_ID

    def _word_id(self, word: str) -> int:
        digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
        return NUM_RESERVED + int.from_bytes(digest, "little") % (self.vocab_size - NUM_RESERVED)

    def tokenize(self, text: str) -> TokenSeq:
        words = normalize_text(text).lower().split()
        if not words:
            raise EmptyText(f"nothing to tokenize in {text!r}")
        return TokenSeq(tuple(self._word_id(w) for w in words))


# --- sequence builders --------------------------------------------------------


def build_pair_sequence(
    tokenizer, sentence: str, claim: str, max_len: int, sentence_index: int = 0
) -> PairInput:
    """Lay out [sentence tokens, SEP, claim tokens], truncated to ``max_len``.

    Truncation takes from the sentence tail first; the claim is never touched
    before the sentence is gone, and a claim that cannot fit alongside the
    separator and at least one sentence token is an error.
    """
    claim_ids = tokenizer.tokenize(claim).token_ids
    sent_ids = tokenizer.tokenize(sentence).token_ids
    if len(claim_ids) > max_len - 2:
        raise ClaimAloneExceedsMaxLen(
            f"claim has {len(claim_ids)} tokens, budget is {max_len - 2}"
        )
    sentence_budget = max_len - 1 - len(claim_ids)
    sent_ids = sent_ids[:sentence_budget]
    tokens = sent_ids + (tokenizer.sep_id,) + claim_ids
    return PairInput(
        token_ids=tokens, sentence_index=sentence_index, sep_position=len(sent_ids)
    )


def build_joint_sequence(tokenizer, claim: str, premise: PremiseDoc, max_len: int) -> JointInput:
    """Pack [claim, SEP, s_1, SEP, ..., s_k] greedily with whole sentences.

    Packing stops at the first sentence whose whole body (plus its separator)
    would push the sequence past ``max_len``; that sentence and all later
    ones are dropped. An empty premise yields just the claim and its
    separator.
    """
    claim_ids = tokenizer.tokenize(claim).token_ids
    if len(claim_ids) + 1 > max_len:
        raise ClaimAloneExceedsMaxLen(
            f"claim needs {len(claim_ids) + 1} tokens with its separator, max_len is {max_len}"
        )
    tokens = list(claim_ids) + [tokenizer.sep_id]
    claim_span = (0, len(claim_ids))
    span_map: list[tuple[int, int]] = []
    dropped: list[int] = []
    for i, text in enumerate(premise.texts()):
        sent_ids = tokenizer.tokenize(text).token_ids
        sep_cost = 1 if i > 0 else 0  # the claim's separator already stands before sentence 0
        if len(tokens) + sep_cost + len(sent_ids) > max_len:
            dropped = list(range(i, premise.n))
            break
        if sep_cost:
            tokens.append(tokenizer.sep_id)
        start = len(tokens)
        tokens.extend(sent_ids)
        span_map.append((start, len(tokens)))
    return JointInput(
        token_ids=tuple(tokens),
        claim_span=claim_span,
        span_map=tuple(span_map),
        dropped_sentences=tuple(dropped),
    )


def build_entailment_sequence(tokenizer, claim: str, evidence_texts: Sequence[str], max_len: int):
    """Lay out [claim, SEP, evidence...] for the verdict classifier.

    The evidence sentences are concatenated in the order given and truncated
    from the tail; the claim is protected, mirroring the pair builder.
    """
    claim_ids = tokenizer.tokenize(claim).token_ids
    if len(claim_ids) > max_len - 2:
        raise ClaimAloneExceedsMaxLen(
            f"claim has {len(claim_ids)} tokens, budget is {max_len - 2}"
        )
    evidence_ids: list[int] = []
    for text in evidence_texts:
        evidence_ids.extend(tokenizer.tokenize(text).token_ids)
    budget = max_len - 1 - len(claim_ids)
    evidence_ids = evidence_ids[:budget]
    return TokenSeq(claim_ids + (tokenizer.sep_id,) + tuple(evidence_ids))


# --- pooling -------------------------------------------------------------------


def pool_span(matrix: np.ndarray, span: tuple[int, int], mode: str = "mean") -> np.ndarray:
    """Reduce the token rows in half-open ``span`` to one vector."""
    start, end = span
    if not (0 <= start < end <= matrix.shape[0]):
        raise EmptySpan(f"span {span} invalid for matrix of {matrix.shape[0]} rows")
    block = matrix[start:end]
    if mode == "mean":
        return block.mean(axis=0)
    if mode == "first":
        return block[0]
    if mode == "max":
        return block.max(axis=0)
    raise ValueError(f"unknown pooling mode '{mode}'")


def pool_span_backward(
    d_pooled: np.ndarray, matrix: np.ndarray, span: tuple[int, int], mode: str = "mean"
) -> np.ndarray:
    """Gradient of :func:`pool_span` wrt the matrix (zero outside the span)."""
    start, end = span
    grad = np.zeros_like(matrix)
    if mode == "mean":
        grad[start:end] = d_pooled / (end - start)
    elif mode == "first":
        grad[start] = d_pooled
    elif mode == "max":
        winners = matrix[start:end].argmax(axis=0)
        grad[start + winners, np.arange(matrix.shape[1])] = d_pooled
    else:
        raise ValueError(f"unknown pooling mode '{mode}'")
    return grad


# --- toy encoder ----------------------------------------------------------------


def _smooth(x: np.ndarray) -> np.ndarray:
    """Window-3 neighborhood average with zero padding (self-adjoint)."""
    y = x.copy()
    y[1:] += x[:-1]
    y[:-1] += x[1:]
    return y / 3.0


class ToyEncoder:
    """Embedding table plus two mixing layers (position-wise affine, then
    neighborhood averaging). No attention: deterministic, CPU-fast, and
    differentiable by hand, which is all the training and gradient tests need.

    Parameters are float64 for clean finite-difference checks; checkpoints
    quantize to float32 on disk. ``encode_calls`` is a plain diagnostic
    counter (not synchronized) used to verify the one-pass property of the
    joint system.
    """

    backend = "toy"
    trainable = True

    def __init__(self, vocab_size: int = 1024, dim: int = 32, n_layers: int = 2, seed: int = 0):
        self.vocab_size = vocab_size
        self.dim = dim
        self.n_layers = n_layers
        self.tokenizer = HashingTokenizer(vocab_size)
        rng = np.random.default_rng(seed)
        self.params: dict[str, np.ndarray] = {
            "emb": rng.normal(0.0, 0.5, size=(vocab_size, dim))
        }
        for layer in range(n_layers):
            noise = rng.normal(0.0, 0.1 / np.sqrt(dim), size=(dim, dim))
            self.params[f"W{layer}"] = np.eye(dim) + noise
            self.params[f"b{layer}"] = np.zeros(dim)
        self.encode_calls = 0

    @property
    def sep_id(self) -> int:
        return self.tokenizer.sep_id

    def tokenize(self, text: str) -> TokenSeq:
        return self.tokenizer.tokenize(text)

    def parameters(self) -> dict[str, np.ndarray]:
        return self.params

    def encode(self, token_ids: Sequence[int]) -> np.ndarray:
        out, _ = self.encode_with_cache(token_ids)
        return out

    def encode_with_cache(self, token_ids: Sequence[int]):
        self.encode_calls += 1
        ids = np.asarray(token_ids, dtype=np.int64)
        x = self.params["emb"][ids]
        inputs = []
        for layer in range(self.n_layers):
            inputs.append(x)
            x = x @ self.params[f"W{layer}"] + self.params[f"b{layer}"]
            x = _smooth(x)
        return x, {"ids": ids, "inputs": inputs}

    def backward(self, cache, d_out: np.ndarray) -> dict[str, np.ndarray]:
        """Backpropagate d(loss)/d(output) to all encoder parameters."""
        grads = {name: np.zeros_like(p) for name, p in self.params.items()}
        dx = d_out
        for layer in reversed(range(self.n_layers)):
            dx = _smooth(dx)  # smoothing is symmetric, so its adjoint is itself
            x_in = cache["inputs"][layer]
            grads[f"W{layer}"] += x_in.T @ dx
            grads[f"b{layer}"] += dx.sum(axis=0)
            dx = dx @ self.params[f"W{layer}"].T
        np.add.at(grads["emb"], cache["ids"], dx)
        return grads


class PretrainedEncoder:
    """Adapter over a HuggingFace transformer used as a frozen feature source.

    Model name and device are opaque strings handed to the transformers
    library. Construction fails with :class:`BackendUnavailable` when the
    libraries are absent or the weights cannot be loaded. Mixed precision is
    honored on CUDA devices and ignored on CPU.
    """

    backend = "pretrained"
    trainable = False

    def __init__(
        self,
        model_name: str,
        device: str = "cpu",
        cache_dir: str | None = None,
        mixed_precision: bool = True,
    ):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except Exception as exc:  # pragma: no cover - depends on environment
            raise BackendUnavailable(f"torch/transformers not importable: {exc}") from exc
        cache_dir = cache_dir or os.environ.get("CTRNLI_CACHE")
        try:
            self._hf_tokenizer = AutoTokenizer.from_pretrained(model_name, cache_dir=cache_dir)
            self._model = AutoModel.from_pretrained(model_name, cache_dir=cache_dir)
        except Exception as exc:
            raise BackendUnavailable(f"cannot load pretrained model '{model_name}': {exc}") from exc
        self._torch = torch
        self._device = device
        self._model.to(device)
        self._model.eval()
        self.model_name = model_name
        self.mixed_precision = mixed_precision and device != "cpu"
        self.dim = int(self._model.config.hidden_size)
        self.vocab_size = int(self._hf_tokenizer.vocab_size)
        self.encode_calls = 0

    @property
    def tokenizer(self):
        # the adapter is its own tokenizer; sequence builders only need
        # tokenize() and sep_id
        return self

    @property
    def sep_id(self) -> int:
        sep = self._hf_tokenizer.sep_token_id
        if sep is None:
            raise BackendUnavailable("pretrained tokenizer has no separator token")
        return int(sep)

    def tokenize(self, text: str) -> TokenSeq:
        text = normalize_text(text)
        if not text:
            raise EmptyText("nothing to tokenize")
        ids = self._hf_tokenizer.encode(text, add_special_tokens=False)
        if not ids:
            raise EmptyText(f"tokenizer produced no ids for {text!r}")
        return TokenSeq(tuple(int(i) for i in ids))

    def parameters(self) -> dict[str, np.ndarray]:
        return {}

    def encode(self, token_ids: Sequence[int]) -> np.ndarray:
        self.encode_calls += 1
        torch = self._torch
        ids = torch.tensor([list(token_ids)], dtype=torch.long, device=self._device)
        with torch.no_grad():
            if self.mixed_precision:
                with torch.autocast(device_type=self._device.split(":")[0]):
                    out = self._model(input_ids=ids).last_hidden_state
            else:
                out = self._model(input_ids=ids).last_hidden_state
        return out[0].float().cpu().numpy().astype(np.float64)


def create_encoder(
    backend: str,
    vocab_size: int = 1024,
    dim: int = 32,
    n_layers: int = 2,
    seed: int = 0,
    model_name: str = "",
    device: str = "cpu",
    mixed_precision: bool | None = None,
):
    """Construct the configured encoder backend."""
    if backend == "toy":
        return ToyEncoder(vocab_size=vocab_size, dim=dim, n_layers=n_layers, seed=seed)
    if backend == "pretrained":
        if not model_name:
            raise BackendUnavailable("pretrained backend needs a model name")
        mp = True if mixed_precision is None else mixed_precision
        return PretrainedEncoder(model_name, device=device, mixed_precision=mp)
    raise BackendUnavailable(f"unknown encoder backend '{backend}'")
