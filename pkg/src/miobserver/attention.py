"""Word-level and utterance-level attention.

Word attention treats history word states as queries and anchor word
states as keys; scores are normalized over the keys, and each query
position receives the attention-weighted sum of key vectors. The two
mechanisms differ in scoring and in how the attended vector is combined
with the query:

* bidaf: dot-product scores, no parameters. Output per position is
  [q; a; q*a; q*a'] where a' is a single query-aware vector (softmax over
  query positions of the max-over-keys score, used to weight the queries)
  broadcast to every position. Width 4x the input.
* gmgru: additive scores conditioned on the previous hidden state of a
  gated matching recurrence that consumes [q; a] through an input gate.
  The recurrence runs in both directions with shared scoring parameters;
  the attended vectors of the two directions are averaged. Output per
  position is [q; a], width 2x the input.

Attended sequences are meant to be re-encoded by a fresh BiGru (same
contract as the utterance encoder) before entering the dialogue level.

Utterance attention is multi-head scaled dot-product attention applied
for a fixed number of hops: the output of one hop becomes the query of
the next while keys and values stay fixed. Projections are not shared
across hops. "anchor" mode queries with the window's last utterance
vector; "self" mode queries with all of them and pools the last row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .tensor import (
    Tensor,
    add,
    broadcast_to,
    concat,
    matmul,
    mul,
    narrow,
    reshape,
    sigmoid,
    softmax,
    stack,
    swapaxes,
    tanh,
    unstack,
)
from .encoders import GruCell

NEG = -1e30  # additive mask for invalid positions


@dataclass
class WordAttentionResult:
    """Attended sequence [R, Tq, width], weights, and empty-anchor flags.

    ``empty_anchor[r]`` is True when row r had no valid key positions; its
    attended parts are zero and the query vectors pass through untouched.
    """

    attended: Tensor
    weights: np.ndarray
    empty_anchor: np.ndarray


def _masked_softmax(scores: Tensor, mask: np.ndarray, axis: int = -1) -> Tensor:
    return softmax(add(scores, (1.0 - mask) * NEG), axis=axis)


class BidafAttention:
    """Parameter-free bidirectional attention flow combiner."""

    width_factor = 4

    def named_parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        return []

    def apply(
        self,
        queries: Tensor,
        keys: Tensor,
        q_mask: np.ndarray,
        k_mask: np.ndarray,
    ) -> WordAttentionResult:
        r, tq, d = queries.data.shape
        tk = keys.data.shape[1]
        has_keys = (k_mask.sum(axis=1) > 0).astype(np.float64)  # [R]
        empty = has_keys == 0.0
        if tk == 0:
            zeros = Tensor(np.zeros((r, tq, d)))
            z = concat([queries, zeros, zeros, zeros], axis=2)
            return WordAttentionResult(z, np.zeros((r, tq, 0)), np.ones(r, dtype=bool))
        scores = matmul(queries, swapaxes(keys, 1, 2))  # [R, Tq, Tk]
        masked = add(scores, (1.0 - k_mask[:, None, :]) * NEG)
        alpha = softmax(masked, axis=-1)
        alpha = mul(alpha, has_keys[:, None, None])  # zero attention if no keys
        a = matmul(alpha, keys)  # [R, Tq, d]
        # Query-aware vector: softmax over query positions of the best
        # per-query valid-key score, then a weighted sum of the queries.
        best = masked.max(axis=2)
        beta = _masked_softmax(best, q_mask)  # [R, Tq]
        a_prime = matmul(reshape(beta, (r, 1, tq)), queries)  # [R, 1, d]
        a_prime = mul(broadcast_to(a_prime, (r, tq, d)), has_keys[:, None, None])
        z = concat([queries, a, mul(queries, a), mul(queries, a_prime)], axis=2)
        return WordAttentionResult(z, alpha.data, empty)


class GmgruAttention:
    """Gated matching recurrence with additive attention scoring.

    Scoring parameters (w_k, w_q, score vector) and the input gate are
    shared between the two directions; each direction owns its GRU cell
    of hidden width ``d_m``.
    """

    width_factor = 2

    def __init__(self, d: int, d_m: int, rng: np.random.Generator):
        s = 1.0 / np.sqrt(d_m)

        def u(shape):
            return Tensor(rng.uniform(-s, s, size=shape))

        self.d = d          # width of query/key vectors (2 * d_h upstream)
        self.d_m = d_m      # matching state width per direction
        self.w_k = u((d, d_m))
        self.w_q = u((d + d_m, d_m))
        self.v_e = u((d_m, 1))
        self.w_g = u((2 * d, 2 * d))
        self.b_g = Tensor(np.zeros(2 * d))
        self.cell_fwd = GruCell(2 * d, d_m, rng)
        self.cell_bwd = GruCell(2 * d, d_m, rng)

    def named_parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        own = [
            (f"{prefix}.w_k", self.w_k),
            (f"{prefix}.w_q", self.w_q),
            (f"{prefix}.v_e", self.v_e),
            (f"{prefix}.w_g", self.w_g),
            (f"{prefix}.b_g", self.b_g),
        ]
        return (
            own
            + self.cell_fwd.named_parameters(f"{prefix}.cell_fwd")
            + self.cell_bwd.named_parameters(f"{prefix}.cell_bwd")
        )

    def _direction(
        self,
        q_slices: list[Tensor],
        keys: Tensor,
        proj_keys: Tensor,
        q_mask: np.ndarray,
        k_mask: np.ndarray,
        has_keys: np.ndarray,
        cell: GruCell,
        reverse: bool,
    ) -> tuple[list[Tensor], list[np.ndarray]]:
        r, tk, _ = keys.data.shape
        tq = len(q_slices)
        h = Tensor(np.zeros((r, self.d_m)))
        attended: list[Tensor | None] = [None] * tq
        weights: list[np.ndarray | None] = [None] * tq
        order = range(tq - 1, -1, -1) if reverse else range(tq)
        for j in order:
            vj = q_slices[j]  # [R, d]
            cond = matmul(concat([vj, h], axis=1), self.w_q)  # [R, d_m]
            e = matmul(tanh(add(proj_keys, reshape(cond, (r, 1, self.d_m)))), self.v_e)
            scores = reshape(e, (r, tk))
            alpha = _masked_softmax(scores, k_mask)
            alpha = mul(alpha, has_keys[:, None])
            aj = matmul(reshape(alpha, (r, 1, tk)), keys).reshape(r, self.d)
            u = concat([vj, aj], axis=1)  # [R, 2d]
            gate = sigmoid(add(matmul(u, self.w_g), self.b_g))
            hn = cell.step(mul(gate, u), h)
            m = q_mask[:, j : j + 1]
            h = add(mul(hn, m), mul(h, 1.0 - m))
            attended[j] = aj
            weights[j] = alpha.data
        return attended, weights  # type: ignore[return-value]

    def apply(
        self,
        queries: Tensor,
        keys: Tensor,
        q_mask: np.ndarray,
        k_mask: np.ndarray,
    ) -> WordAttentionResult:
        r, tq, d = queries.data.shape
        tk = keys.data.shape[1]
        has_keys = (k_mask.sum(axis=1) > 0).astype(np.float64)
        empty = has_keys == 0.0
        if tk == 0:
            z = concat([queries, Tensor(np.zeros((r, tq, d)))], axis=2)
            return WordAttentionResult(z, np.zeros((r, tq, 0)), np.ones(r, dtype=bool))
        proj_keys = matmul(keys, self.w_k)  # [R, Tk, d_m]
        q_slices = unstack(queries, axis=1)
        a_f, w_f = self._direction(
            q_slices, keys, proj_keys, q_mask, k_mask, has_keys, self.cell_fwd, False
        )
        a_b, w_b = self._direction(
            q_slices, keys, proj_keys, q_mask, k_mask, has_keys, self.cell_bwd, True
        )
        attended = [mul(add(f, b), 0.5) for f, b in zip(a_f, a_b)]
        a = stack(attended, axis=1)  # [R, Tq, d]
        z = concat([queries, a], axis=2)
        weights = 0.5 * (np.stack(w_f, axis=1) + np.stack(w_b, axis=1))
        return WordAttentionResult(z, weights, empty)


def make_word_attention(
    mechanism: str, d: int, d_m: int, rng: np.random.Generator
):
    if mechanism == "bidaf":
        return BidafAttention()
    if mechanism == "gmgru":
        return GmgruAttention(d, d_m, rng)
    raise ConfigError(f"unknown word attention mechanism {mechanism!r}")


def word_attend(
    module,
    queries: Tensor,
    keys: Tensor,
    q_mask: np.ndarray,
    k_mask: np.ndarray,
) -> WordAttentionResult:
    """Apply a word attention module to [R, Tq, d] queries / [R, Tk, d] keys."""
    res = module.apply(queries, keys, q_mask, k_mask)
    trace = getattr(module, "trace", None)
    if trace is not None:
        trace.append((res.weights, k_mask, res.empty_anchor))
    return res


class MultiheadAttention:
    """Multi-head scaled dot-product attention applied for several hops."""

    def __init__(self, d_model: int, heads: int, hops: int, rng: np.random.Generator):
        if heads < 1 or hops < 1:
            raise ConfigError("heads and hops must be >= 1")
        if d_model % heads != 0:
            raise ConfigError(f"d_model {d_model} not divisible by heads {heads}")
        self.d_model = d_model
        self.heads = heads
        self.hops = hops
        self.d_k = d_model // heads
        # set to a list to collect [B, nq, nk] weight arrays per head per hop
        self.trace: list[np.ndarray] | None = None
        s = 1.0 / np.sqrt(d_model)

        def u(shape):
            return Tensor(rng.uniform(-s, s, size=shape))

        self.proj: list[dict[str, list[Tensor] | Tensor]] = []
        for _ in range(hops):
            self.proj.append(
                {
                    "q": [u((d_model, self.d_k)) for _ in range(heads)],
                    "k": [u((d_model, self.d_k)) for _ in range(heads)],
                    "v": [u((d_model, self.d_k)) for _ in range(heads)],
                    "o": u((heads * self.d_k, d_model)),
                }
            )

    def named_parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        out = []
        for t, hop in enumerate(self.proj):
            for i in range(self.heads):
                out.append((f"{prefix}.hop{t}.q{i}", hop["q"][i]))
                out.append((f"{prefix}.hop{t}.k{i}", hop["k"][i]))
                out.append((f"{prefix}.hop{t}.v{i}", hop["v"][i]))
            out.append((f"{prefix}.hop{t}.o", hop["o"]))
        return out

    def apply(self, q: Tensor, k: Tensor, v: Tensor, stack_kv: bool = False) -> Tensor:
        """Attend [B, nq, d_model] queries over [B, n, d_model] keys/values.

        Each hop's output becomes the next hop's queries. With stack_kv
        the output replaces the keys and values too (a self-attention
        stack); otherwise they stay pinned to the given sequence.
        """
        scale = 1.0 / np.sqrt(self.d_k)
        for hop in self.proj:
            head_outs = []
            for i in range(self.heads):
                qi = matmul(q, hop["q"][i])
                ki = matmul(k, hop["k"][i])
                vi = matmul(v, hop["v"][i])
                w = softmax(mul(matmul(qi, swapaxes(ki, 1, 2)), scale), axis=-1)
                if self.trace is not None:
                    self.trace.append(w.data)
                head_outs.append(matmul(w, vi))
            q = matmul(concat(head_outs, axis=2), hop["o"])
            if stack_kv:
                k = v = q
        return q


def utterance_attention(mode: str, mha: MultiheadAttention, vs: Tensor) -> Tensor:
    """Pool window utterance vectors [B, N, d_model] into a context [B, d_model].

    "anchor": the last utterance vector queries the window, and later
    hops refine that query against the original rows. "self": the whole
    window self-attends (hops stack), and the last row is pooled.
    """
    b, n, d = vs.data.shape
    if mode == "anchor":
        q = narrow(vs, 1, n - 1, 1)
        out = mha.apply(q, vs, vs)
        return out.reshape(b, d)
    if mode == "self":
        out = mha.apply(vs, vs, vs, stack_kv=True)
        return narrow(out, 1, n - 1, 1).reshape(b, d)
    raise ConfigError(f"unknown utterance attention mode {mode!r}")
