"""Classifier heads, losses, and the training-step machinery.

Everything here is plain numpy with hand-written gradients. Heads are
two-layer perceptrons (tanh hidden layer); losses are cross-entropy over a
2-way softmax, which for the evidence task is exactly per-sentence binary
cross-entropy. The optimizer is gradient descent with decoupled weight decay
and a linear warmup followed by linear decay.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    """Loss and d(loss)/d(logits) for one example."""
    probs = softmax(logits)
    loss = -float(np.log(max(probs[target], 1e-300)))
    d_logits = probs.copy()
    d_logits[target] -= 1.0
    return loss, d_logits


def init_mlp(rng: np.random.Generator, d_in: int, d_hidden: int, d_out: int) -> dict:
    return {
        "W1": rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_in, d_hidden)),
        "b1": np.zeros(d_hidden),
        "W2": rng.normal(0.0, 1.0 / np.sqrt(d_hidden), size=(d_hidden, d_out)),
        "b2": np.zeros(d_out),
    }


def mlp_forward(params: dict, x: np.ndarray):
    z1 = x @ params["W1"] + params["b1"]
    a1 = np.tanh(z1)
    logits = a1 @ params["W2"] + params["b2"]
    return logits, (x, a1)


def mlp_backward(params: dict, cache, d_logits: np.ndarray):
    """Returns (parameter grads, gradient wrt the input vector)."""
    x, a1 = cache
    grads = {
        "W2": np.outer(a1, d_logits),
        "b2": d_logits.copy(),
    }
    d_a1 = params["W2"] @ d_logits
    d_z1 = d_a1 * (1.0 - a1 * a1)
    grads["W1"] = np.outer(x, d_z1)
    grads["b1"] = d_z1
    d_x = params["W1"] @ d_z1
    return grads, d_x


@dataclass
class ClassifierHead:
    """A 2-layer MLP head producing class logits from one pooled vector."""

    params: dict
    n_classes: int

    @classmethod
    def create(cls, dim: int, n_classes: int = 2, hidden: int | None = None, seed: int = 0):
        rng = np.random.default_rng(seed)
        hidden = hidden or dim
        return cls(params=init_mlp(rng, dim, hidden, n_classes), n_classes=n_classes)

    def logits(self, x: np.ndarray) -> np.ndarray:
        out, _ = mlp_forward(self.params, x)
        return out

    def probabilities(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.logits(x))


class EvidenceHead(ClassifierHead):
    """Maps a pooled sentence-pair vector to (evidence, non-evidence) logits.

    Index 0 is the positive "is evidence" class.
    """


class EntailmentHead(ClassifierHead):
    """Maps a pooled sequence vector to verdict logits.

    Index 0 is Entailment, index 1 Contradiction. The head accepts a
    configurable class count so a third verdict slot can be enabled, but the
    task and all defaults use two.
    """


def zero_grads(params: dict) -> dict:
    return {name: np.zeros_like(p) for name, p in params.items()}


def accumulate(into: dict, grads: dict, scale: float = 1.0) -> None:
    for name, g in grads.items():
        into[name] += scale * g


@dataclass
class WarmupLinearSchedule:
    """Linear warmup over a fraction of the run, then linear decay to zero."""

    base_lr: float
    total_steps: int
    warmup_rate: float = 0.06

    def lr(self, step: int) -> float:
        warmup_steps = max(1, int(round(self.warmup_rate * self.total_steps)))
        if step < warmup_steps:
            return self.base_lr * (step + 1) / warmup_steps
        remaining = max(1, self.total_steps - warmup_steps)
        return self.base_lr * max(0, self.total_steps - step) / remaining


@dataclass
class SgdwOptimizer:
    """Gradient descent with decoupled weight decay.

    Decay applies to weight matrices and embeddings, never to biases
    (parameter names beginning with "b").
    """

    schedule: WarmupLinearSchedule
    weight_decay: float = 0.0
    step_count: int = field(default=0)

    def step(self, param_groups: list[dict], grad_groups: list[dict]) -> float:
        lr = self.schedule.lr(self.step_count)
        for params, grads in zip(param_groups, grad_groups):
            for name, p in params.items():
                p -= lr * grads[name]
                if self.weight_decay and not name.startswith("b"):
                    p -= lr * self.weight_decay * p
        self.step_count += 1
        return lr


@dataclass
class Hyperparams:
    """Training configuration; defaults follow the published recipe."""

    learning_rate: float = 1e-5
    warmup_rate: float = 0.06
    weight_decay: float = 0.01
    epochs: int = 6
    batch_size: int = 16
    seed: int = 0
    max_steps: int | None = None
    w_evidence: float = 1.0
    w_entailment: float = 1.0

    def total_steps(self, n_items: int) -> int:
        if self.max_steps is not None:
            return self.max_steps
        if n_items == 0:
            return 0
        steps_per_epoch = int(np.ceil(n_items / self.batch_size))
        return self.epochs * steps_per_epoch


def minibatches(n_items: int, hp: Hyperparams, rng: np.random.Generator):
    """Yield index arrays: seeded reshuffle every pass, stop at total_steps."""
    total = hp.total_steps(n_items)
    emitted = 0
    while emitted < total:
        order = rng.permutation(n_items)
        for start in range(0, n_items, hp.batch_size):
            if emitted >= total:
                return
            yield order[start : start + hp.batch_size]
            emitted += 1
