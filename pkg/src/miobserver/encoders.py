"""GRU cells and the two dialogue skeletons.

The hierarchical skeleton runs a bidirectional GRU over each utterance's
word embeddings and a unidirectional GRU over the resulting utterance
vectors (concatenated with speaker vectors), so dialogue states are
strictly causal. The flat skeleton runs one bidirectional GRU over the
window's tokens laid out end to end with a learned boundary token between
utterances.

Batched variants carry an explicit {0,1} mask per position. A masked step
holds the previous hidden state, which makes the state after the full
walk equal the state at each row's last valid position for free; rows
with no valid positions keep the zero initial state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    Tensor,
    add,
    concat,
    matmul,
    mul,
    sigmoid,
    stack,
    sub,
    tanh,
    unstack,
)


class GruCell:
    """Single GRU step: h' = (1 - z) * h + z * c.

    z and r are sigmoid gates; the candidate c is a tanh over the input
    and the reset-gated previous state. Weight matrices are initialized
    uniform(-1/sqrt(d_h), 1/sqrt(d_h)); biases start at zero.
    """

    def __init__(self, d_in: int, d_h: int, rng: np.random.Generator):
        self.d_in = d_in
        self.d_h = d_h
        s = 1.0 / np.sqrt(d_h)

        def u(shape):
            return Tensor(rng.uniform(-s, s, size=shape))

        self.w_z, self.u_z, self.b_z = u((d_in, d_h)), u((d_h, d_h)), Tensor(np.zeros(d_h))
        self.w_r, self.u_r, self.b_r = u((d_in, d_h)), u((d_h, d_h)), Tensor(np.zeros(d_h))
        self.w_c, self.u_c, self.b_c = u((d_in, d_h)), u((d_h, d_h)), Tensor(np.zeros(d_h))

    def step(self, x: Tensor, h: Tensor) -> Tensor:
        z = sigmoid(add(add(matmul(x, self.w_z), matmul(h, self.u_z)), self.b_z))
        r = sigmoid(add(add(matmul(x, self.w_r), matmul(h, self.u_r)), self.b_r))
        c = tanh(add(add(matmul(x, self.w_c), matmul(mul(r, h), self.u_c)), self.b_c))
        return add(mul(sub(1.0, z), h), mul(z, c))

    def named_parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [
            (f"{prefix}.w_z", self.w_z), (f"{prefix}.u_z", self.u_z), (f"{prefix}.b_z", self.b_z),
            (f"{prefix}.w_r", self.w_r), (f"{prefix}.u_r", self.u_r), (f"{prefix}.b_r", self.b_r),
            (f"{prefix}.w_c", self.w_c), (f"{prefix}.u_c", self.u_c), (f"{prefix}.b_c", self.b_c),
        ]


def gru_step(cell: GruCell, x: Tensor, h: Tensor) -> Tensor:
    return cell.step(x, h)


def _masked_walk(
    cell: GruCell, xs: list[Tensor], mask: np.ndarray, reverse: bool
) -> tuple[list[Tensor], Tensor]:
    """Run ``cell`` over time slices ``xs`` with per-row mask hold.

    Returns per-position states (original time order) and the state after
    consuming every valid position.
    """
    b = mask.shape[0]
    h = Tensor(np.zeros((b, cell.d_h)))
    states: list[Tensor | None] = [None] * len(xs)
    order = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
    for t in order:
        hn = cell.step(xs[t], h)
        m = mask[:, t : t + 1]
        h = add(mul(hn, m), mul(h, 1.0 - m))
        states[t] = h
    return states, h  # type: ignore[return-value]


class BiGru:
    """Bidirectional GRU; outputs concatenate the two directions."""

    def __init__(self, d_in: int, d_h: int, rng: np.random.Generator):
        self.d_in = d_in
        self.d_h = d_h
        self.fwd = GruCell(d_in, d_h, rng)
        self.bwd = GruCell(d_in, d_h, rng)

    def encode_batch(self, x: Tensor, mask: np.ndarray) -> tuple[Tensor, Tensor]:
        """Encode ``x`` [B, T, d_in] under ``mask`` [B, T].

        Returns per-position states [B, T, 2*d_h] and the final vector
        [B, 2*d_h] (forward state at each row's last valid position next
        to the reverse state at its first). Rows that are entirely
        padding come out as zero vectors.
        """
        b, t = mask.shape
        if t == 0:
            zero_states = Tensor(np.zeros((b, 0, 2 * self.d_h)))
            return zero_states, Tensor(np.zeros((b, 2 * self.d_h)))
        xs = unstack(x, axis=1)
        f_states, f_last = _masked_walk(self.fwd, xs, mask, reverse=False)
        b_states, b_last = _masked_walk(self.bwd, xs, mask, reverse=True)
        states = concat([stack(f_states, axis=1), stack(b_states, axis=1)], axis=2)
        final = concat([f_last, b_last], axis=1)
        return states, final

    def named_parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        return self.fwd.named_parameters(f"{prefix}.fwd") + self.bwd.named_parameters(
            f"{prefix}.bwd"
        )


@dataclass
class UtteranceEncoding:
    """Per-word states [T, 2*d_h] and the utterance vector [2*d_h]."""

    vector: Tensor
    word_states: Tensor


def encode_utterance(bigru: BiGru, words: Tensor) -> UtteranceEncoding:
    """Encode one utterance's word matrix [T, d_w].

    An empty utterance (T = 0) encodes to the zero vector.
    """
    t = words.data.shape[0]
    if t == 0:
        return UtteranceEncoding(
            vector=Tensor(np.zeros(2 * bigru.d_h)),
            word_states=Tensor(np.zeros((0, 2 * bigru.d_h))),
        )
    x = words.reshape(1, t, bigru.d_in)
    states, final = bigru.encode_batch(x, np.ones((1, t)))
    return UtteranceEncoding(
        vector=final.reshape(2 * bigru.d_h),
        word_states=states.reshape(t, 2 * bigru.d_h),
    )


@dataclass
class DialogueEncoding:
    """Causal dialogue states [n, d_h] and the final state [d_h]."""

    states: Tensor
    final: Tensor


def encode_dialogue_hgru(
    cell: GruCell, steps: list[tuple[Tensor, Tensor]]
) -> DialogueEncoding:
    """Run the dialogue GRU over (utterance vector, speaker vector) pairs."""
    h = Tensor(np.zeros((1, cell.d_h)))
    outs = []
    for v, s in steps:
        x = concat([v, s], axis=0).reshape(1, -1)
        h = cell.step(x, h)
        outs.append(h)
    states = stack([o.reshape(cell.d_h) for o in outs], axis=0)
    return DialogueEncoding(states=states, final=outs[-1].reshape(cell.d_h))


def encode_dialogue_hgru_batch(cell: GruCell, x: Tensor) -> tuple[Tensor, Tensor]:
    """Batched dialogue GRU over x [B, N, 2*d_h + d_s]; padding slots are
    ordinary steps (their utterance part is zero), so no mask is needed."""
    xs = unstack(x, axis=1)
    b = x.data.shape[0]
    h = Tensor(np.zeros((b, cell.d_h)))
    outs = []
    for xt in xs:
        h = cell.step(xt, h)
        outs.append(h)
    return stack(outs, axis=1), h


@dataclass
class ConcatEncoding:
    """Flat-skeleton outputs.

    ``states``: per-token states [L, 2*d_h] over the flattened window;
    ``seg_vectors``: per-utterance [start-state; end-state] rows [n, 4*d_h]
    (zero rows for empty utterances); ``final``: the BiGRU final state
    [2*d_h] over the whole flattened sequence.
    """

    states: Tensor
    seg_vectors: Tensor
    final: Tensor


def encode_dialogue_concat(
    bigru: BiGru, tokens: Tensor, bounds: list[tuple[int, int] | None]
) -> ConcatEncoding:
    """Encode a flattened window [L, d_in] with per-utterance index bounds.

    ``bounds[i]`` gives (first, last) token indices of utterance i in the
    flattened sequence, or None for an empty (padding) utterance.
    """
    l = tokens.data.shape[0]
    states, final = bigru.encode_batch(
        tokens.reshape(1, l, bigru.d_in), np.ones((1, l))
    )
    states = states.reshape(l, 2 * bigru.d_h)
    per_token = unstack(states, axis=0) if l else []
    segs = []
    for bd in bounds:
        if bd is None:
            segs.append(Tensor(np.zeros(4 * bigru.d_h)))
        else:
            first, last = bd
            segs.append(concat([per_token[first], per_token[last]], axis=0))
    return ConcatEncoding(
        states=states,
        seg_vectors=stack(segs, axis=0),
        final=final.reshape(2 * bigru.d_h),
    )
