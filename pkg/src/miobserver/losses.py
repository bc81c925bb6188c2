"""Multiclass focal loss and its degenerate forms.

FL(p_t) = -alpha_t * (1 - p_t)^gamma * log(p_t) for the gold class's
predicted probability p_t, averaged over the batch. gamma = 0 reduces it
to alpha-weighted cross-entropy; gamma = 0 with unit alphas is plain
cross-entropy. p_t is clamped to >= 1e-12 before the log.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError
from .tensor import Tensor, clamp_min, log, mul, neg, power, sub, take_rows

P_FLOOR = 1e-12

VARIANTS = ("ce", "wce", "focal")


@dataclass(frozen=True)
class FocalConfig:
    """Per-label alpha weights, focusing exponent gamma, and variant."""

    alpha: tuple[float, ...]
    gamma: float = 0.0
    variant: str = "focal"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"loss variant must be one of {VARIANTS}")
        if any(a <= 0 for a in self.alpha):
            raise ConfigError("all alpha weights must be > 0")
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")
        if self.variant == "ce":
            if self.gamma != 0 or any(a != 1.0 for a in self.alpha):
                raise ConfigError("ce requires gamma = 0 and unit alphas")
        if self.variant == "wce" and self.gamma != 0:
            raise ConfigError("wce requires gamma = 0")

    @staticmethod
    def plain(n_labels: int) -> "FocalConfig":
        return FocalConfig(alpha=(1.0,) * n_labels, gamma=0.0, variant="ce")


def focal_loss(probs: Tensor, gold, cfg: FocalConfig) -> Tensor:
    """Mean focal loss of probability rows against gold label indices.

    ``probs`` is [L] or [B, L] on the simplex; ``gold`` is an int or a
    length-B integer sequence. Out-of-range gold indices are a contract
    violation.
    """
    p = probs
    if p.ndim == 1:
        p = p.reshape(1, p.data.shape[0])
        gold_idx = np.asarray(gold, dtype=np.intp).reshape(-1)
    else:
        gold_idx = np.asarray(gold, dtype=np.intp)
    b, n = p.data.shape
    if len(cfg.alpha) != n:
        raise ConfigError(f"{len(cfg.alpha)} alpha weights for {n} labels")
    if gold_idx.shape != (b,):
        raise ContractError(f"expected {b} gold labels, got shape {gold_idx.shape}")
    if gold_idx.size and (gold_idx.min() < 0 or gold_idx.max() >= n):
        raise ContractError("gold label index out of range")
    flat = p.reshape(b * n)
    pt = take_rows(flat, gold_idx + np.arange(b) * n)
    pt = clamp_min(pt, P_FLOOR)
    alpha_t = np.asarray(cfg.alpha, dtype=np.float64)[gold_idx]
    nll = neg(log(pt))
    if cfg.gamma != 0.0:
        nll = mul(power(sub(1.0, pt), cfg.gamma), nll)
    return mul(nll, alpha_t).mean()
