"""Gradient evasion attacks against a frozen classifier.

All three attacks act on the normalized feature map the model consumes
(values in [0, 1]); the model object only needs a ``logits(x: Tensor)``
method, so tests can swap in hand-built classifiers. FGSM and PGD respect
an L-inf budget exactly; CW minimizes L2 in a tanh-reparameterized box.
Nothing here mutates model parameters or running statistics, and each
example's result is independent of whatever else is in flight.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .autograd import Tensor, backprop, cross_entropy_loss, logit_margin, relu
from .optim import AdamState, adam_step


class LogitModel(Protocol):
    def logits(self, x: Tensor) -> Tensor: ...


@dataclass
class AttackConfig:
    kind: str = "fgsm"  # fgsm | pgd | cw
    eps: float = 0.0
    eps_iter: float = 0.1
    nb_iter: int = 5
    cw_lr: float = 0.01
    cw_max_iterations: int = 200
    cw_const: float = 1.0
    cw_kappa: float = 0.0
    clip_min: float = 0.0
    clip_max: float = 1.0
    targeted: bool = False

    def __post_init__(self):
        if self.kind not in ("fgsm", "pgd", "cw"):
            raise ValueError(f"AttackConfig: unknown attack kind '{self.kind}'")
        if self.eps < 0:
            raise ValueError(f"AttackConfig: eps must be >= 0, got {self.eps}")
        if self.nb_iter < 1:
            raise ValueError(f"AttackConfig: nb_iter must be >= 1, got {self.nb_iter}")
        if self.eps_iter <= 0:
            raise ValueError(f"AttackConfig: eps_iter must be > 0, got {self.eps_iter}")
        if self.cw_max_iterations < 1:
            raise ValueError(f"AttackConfig: cw_max_iterations must be >= 1, got {self.cw_max_iterations}")
        if self.targeted:
            raise ValueError("AttackConfig: targeted attacks are not supported")


@dataclass
class AdversarialExample:
    original: np.ndarray
    adversarial: np.ndarray
    label: int
    clean_pred: int
    adv_pred: int
    linf: float
    l2: float
    success: bool


def input_gradient(model: LogitModel, x: np.ndarray, labels: Sequence[int]) -> np.ndarray:
    """d mean-cross-entropy / d x for a batch [N, C, H, W]; parameters untouched."""
    xt = Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)
    loss = cross_entropy_loss(model.logits(xt), labels)
    backprop(loss)
    return xt.grad


def _predict(model: LogitModel, x: np.ndarray) -> int:
    return int(model.logits(Tensor(x[None])).data.argmax(axis=1)[0])


def _example(model, x, adv, label, clean_pred) -> AdversarialExample:
    adv_pred = _predict(model, adv)
    delta = adv - x
    return AdversarialExample(
        original=x,
        adversarial=adv,
        label=label,
        clean_pred=clean_pred,
        adv_pred=adv_pred,
        linf=float(np.abs(delta).max()),
        l2=float(np.sqrt((delta * delta).sum())),
        success=adv_pred != label,
    )


def fgsm(model: LogitModel, x: np.ndarray, label: int, eps: float, clip: tuple[float, float] = (0.0, 1.0)) -> AdversarialExample:
    """Single signed-gradient step: clip(x + eps * sign(grad)); sign(0) = 0."""
    if eps < 0:
        raise ValueError(f"fgsm: eps must be >= 0, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    clean_pred = _predict(model, x)
    g = input_gradient(model, x[None], [label])[0]
    adv = np.clip(x + eps * np.sign(g), clip[0], clip[1])
    return _example(model, x, adv, label, clean_pred)


def pgd(model: LogitModel, x: np.ndarray, label: int, cfg: AttackConfig) -> AdversarialExample:
    """Iterated signed steps of size eps_iter, each projected back into the
    L-inf ball of radius eps around the clean input (and into [clip_min, clip_max]).

    Starts at the clean input; no random start.
    """
    if cfg.kind != "pgd":
        raise ValueError(f"pgd: config kind is '{cfg.kind}'")
    x = np.asarray(x, dtype=np.float64)
    clean_pred = _predict(model, x)
    lo = x - cfg.eps
    hi = x + cfg.eps
    xk = x.copy()
    for _ in range(cfg.nb_iter):
        g = input_gradient(model, xk[None], [label])[0]
        xk = xk + cfg.eps_iter * np.sign(g)
        xk = np.minimum(np.maximum(xk, lo), hi)
        xk = np.clip(xk, cfg.clip_min, cfg.clip_max)
    return _example(model, x, xk, label, clean_pred)


def cw_l2(model: LogitModel, x: np.ndarray, label: int, cfg: AttackConfig) -> AdversarialExample:
    """Carlini-Wagner L2: minimize ||x' - x||^2 + c * max(margin(x'), -kappa)
    over x' = (tanh(w) + 1)/2 by Adam, where margin is the true-class logit
    minus the best other logit.

    Returns the lowest-L2 iterate whose margin beats -kappa (misclassified,
    with confidence kappa), or the final iterate with success=False.
    """
    if cfg.kind != "cw":
        raise ValueError(f"cw_l2: config kind is '{cfg.kind}'")
    x = np.asarray(x, dtype=np.float64)
    clean_pred = _predict(model, x)

    squashed = np.clip(2.0 * x - 1.0, -1.0 + 1e-6, 1.0 - 1e-6)
    w = np.arctanh(squashed)[None]  # batch of one
    x_const = Tensor(x[None])
    adam = AdamState(lr=cfg.cw_lr)

    best_l2 = np.inf
    best_adv: np.ndarray | None = None
    best_pred = clean_pred

    def consider(adv_np: np.ndarray, logits_np: np.ndarray, l2sq: float):
        nonlocal best_l2, best_adv, best_pred
        pred = int(logits_np.argmax())
        others = np.delete(logits_np, label)
        margin = logits_np[label] - others.max()
        if pred != label and margin <= -cfg.cw_kappa and l2sq < best_l2:
            best_l2 = l2sq
            best_adv = adv_np.copy()
            best_pred = pred

    wt = Tensor(w, requires_grad=True)
    for _ in range(cfg.cw_max_iterations):
        x_adv = (wt.tanh() + 1.0) * 0.5
        delta = x_adv - x_const
        l2sq = (delta * delta).sum()
        logits = model.logits(x_adv)
        penalty = relu(logit_margin(logits, [label]) + cfg.cw_kappa).sum()
        objective = l2sq + penalty * cfg.cw_const

        consider(x_adv.data[0], logits.data[0], float(l2sq.data))
        wt.zero_grad()
        backprop(objective)
        adam_step({"w": wt}, adam)

    # The final iterate never went through the loop's bookkeeping.
    x_adv = (wt.tanh() + 1.0) * 0.5
    logits = model.logits(x_adv)
    final = x_adv.data[0]
    consider(final, logits.data[0], float(((final - x) ** 2).sum()))

    if best_adv is not None:
        adv = best_adv
        adv_pred = best_pred
        success = True
    else:
        adv = final
        adv_pred = int(logits.data[0].argmax())
        success = False
    dd = adv - x
    return AdversarialExample(
        original=x,
        adversarial=adv,
        label=label,
        clean_pred=clean_pred,
        adv_pred=adv_pred,
        linf=float(np.abs(dd).max()),
        l2=float(np.sqrt((dd * dd).sum())),
        success=success,
    )


def run_attack(model: LogitModel, x: np.ndarray, label: int, cfg: AttackConfig) -> AdversarialExample:
    """Dispatch one sample to the configured attack."""
    if cfg.kind == "fgsm":
        return fgsm(model, x, label, cfg.eps, (cfg.clip_min, cfg.clip_max))
    if cfg.kind == "pgd":
        return pgd(model, x, label, cfg)
    return cw_l2(model, x, label, cfg)
