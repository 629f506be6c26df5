"""White-box gradient attacks on continuous inputs: FGSM and PGD.

Inputs live in the [0,1] box; perturbations are bounded in L-infinity by the
budget. ``loss_fn(tape, model, x, y) -> scalar Tensor`` is supplied by the
caller so the attack can maximize whatever objective the model was trained
with. Attacks never mutate the model or the clean input; gradients are taken
w.r.t. a private copy of the input only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ContractError, NumericsError
from .tensor import Tape, Tensor, backward

LossFn = Callable[[Tape, object, Tensor, np.ndarray], Tensor]


@dataclass(frozen=True)
class ContinuousAttackSpec:
    epsilon: float
    steps: int = 10
    alpha: Optional[float] = None    # step size; defaults to epsilon / 4
    random_start: bool = False
    seed: int = 0
    kind: str = "pgd"                # "fgsm" | "pgd"

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise ContractError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.steps < 1:
            raise ContractError(f"steps must be >= 1, got {self.steps}")
        if self.alpha is not None:
            if self.alpha <= 0 or (self.epsilon > 0 and self.alpha > self.epsilon):
                raise ContractError(
                    f"step size {self.alpha} must satisfy 0 < alpha <= epsilon ({self.epsilon})"
                )
        if self.kind not in ("fgsm", "pgd"):
            raise ContractError(f"unknown attack kind {self.kind!r}")

    @property
    def step_size(self) -> float:
        return self.alpha if self.alpha is not None else self.epsilon / 4.0

    def label(self) -> str:
        if self.kind == "fgsm":
            return f"fgsm:eps={self.epsilon:g}"
        return f"pgd:eps={self.epsilon:g},steps={self.steps},alpha={self.step_size:g}"


def _input_gradient(model, loss_fn: LossFn, x_data: np.ndarray, y: np.ndarray) -> np.ndarray:
    leaf = Tensor(x_data.copy())
    tape = Tape()
    loss = loss_fn(tape, model, leaf, y)
    backward(tape, loss, wrt=[leaf])
    if not np.all(np.isfinite(leaf.grad)):
        raise NumericsError("attack gradient is non-finite")
    return leaf.grad


def fgsm(model, loss_fn: LossFn, x: Tensor, y, epsilon: float) -> Tensor:
    """One signed-gradient step of size epsilon, clipped to the [0,1] box."""
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    grad = _input_gradient(model, loss_fn, x.data, y)
    adv = np.clip(x.data + epsilon * np.sign(grad), 0.0, 1.0)
    return Tensor(adv)


def pgd(model, loss_fn: LossFn, x: Tensor, y, spec: ContinuousAttackSpec,
        rng: Optional[np.random.Generator] = None) -> Tensor:
    """Iterated signed-gradient ascent projected onto the epsilon-ball.

    Every iterate (and the result) satisfies both the ball constraint around
    the clean input and the [0,1] box. With steps=1, alpha=epsilon and no
    random start this reproduces fgsm exactly.
    """
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    eps = spec.epsilon
    alpha = spec.step_size
    x0 = x.data
    cur = x0.copy()
    if spec.random_start and eps > 0:
        rng = rng if rng is not None else np.random.default_rng(spec.seed)
        cur = np.clip(x0 + rng.uniform(-eps, eps, size=x0.shape), 0.0, 1.0)
    for _ in range(spec.steps):
        grad = _input_gradient(model, loss_fn, cur, y)
        cur = cur + alpha * np.sign(grad)
        cur = x0 + np.clip(cur - x0, -eps, eps)
        cur = np.clip(cur, 0.0, 1.0)
    return Tensor(cur)


def batch_attack(model, loss_fn: LossFn, x_rows: np.ndarray, labels, spec: ContinuousAttackSpec,
                 kind: Optional[str] = None) -> tuple[Tensor, np.ndarray, list[int]]:
    """Attack each row independently; returns (adversarial rows, success flags,
    indices whose gradient failed).

    Success means the model misclassifies the adversarial row. Failed samples
    keep their clean row and are reported in the third slot rather than being
    dropped. Per-sample RNG streams are derived from (seed, row index) so
    results do not depend on evaluation order.
    """
    kind = kind or spec.kind
    if kind not in ("fgsm", "pgd"):
        raise ContractError(f"unknown attack kind {kind!r}")
    x_rows = np.asarray(x_rows, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if x_rows.ndim != 2 or x_rows.shape[0] != y.size:
        raise ContractError(f"batch shapes disagree: {x_rows.shape} vs {y.size} labels")
    adv = np.empty_like(x_rows)
    success = np.zeros(y.size, dtype=bool)
    failed: list[int] = []
    for i in range(y.size):
        row = Tensor(x_rows[i:i + 1])
        try:
            if kind == "fgsm":
                out = fgsm(model, loss_fn, row, y[i:i + 1], spec.epsilon)
            else:
                out = pgd(model, loss_fn, row, y[i:i + 1], spec,
                          rng=np.random.default_rng([spec.seed, i]))
            adv[i] = out.data[0]
        except NumericsError:
            adv[i] = x_rows[i]
            failed.append(i)
            continue
        pred = int(model.logits_array(adv[i:i + 1]).argmax(axis=1)[0])
        success[i] = pred != y[i]
    return Tensor(adv), success, failed
