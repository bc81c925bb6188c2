"""Model configuration, assembly, and the batched forward pass.

A model is described entirely by ``ModelConfig``: task (categorize or
forecast), role (client or therapist), skeleton (hierarchical or flat),
word attention (none/bidaf/gmgru), utterance attention (none/anchor/self
with head count and hop count), head inputs, and scoring mode. The four
shipped presets:

* C_C  client categorize: hierarchical skeleton, no attention, additive
  scoring over the dialogue state and the anchor utterance vector.
* C_T  therapist categorize: gmgru word attention plus 4-head 2-hop
  anchor attention, concat scoring over the dialogue state and the
  attention context.
* F_C / F_T forecast: 4-head 2-hop self attention, concat scoring over
  the dialogue state (with the upcoming speaker's vector) and the
  attention context.

When utterance attention is configured, its context vector joins the
scoring inputs. When word attention is configured on the hierarchical
skeleton, attended word sequences are re-encoded and replace the plain
utterance vectors everywhere downstream; on the flat skeleton it instead
produces a history-aware anchor vector (``v_wordatt``) as an extra
scoring input, with the anchor's token states querying the tokens before
the anchor.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .attention import (
    MultiheadAttention,
    make_word_attention,
    utterance_attention,
    word_attend,
)
from .data import Window, labels_for_role
from .embed import (
    EmbeddingTable,
    SpeakerTable,
    Vocab,
    speaker_index,
    tokenize,
)
from .encoders import BiGru, GruCell, encode_dialogue_hgru_batch
from .errors import ConfigError, ContractError
from .losses import FocalConfig, focal_loss
from .tensor import (
    Tensor,
    add,
    concat,
    dropout,
    grad_check,
    matmul,
    mul,
    narrow,
    relu,
    softmax,
    take_rows,
)

SKELETONS = ("hgru", "concat")
WORD_ATTENTION = ("none", "bidaf", "gmgru")
UTT_ATTENTION = ("none", "anchor", "self")
SCORING = ("concat", "add")

CLIENT_ALPHA = (0.25, 1.0, 1.0)                         # Fn, Ct, St
THERAPIST_ALPHA = (0.5, 1.0, 1.0, 1.0, 0.75, 0.75, 1.0, 1.0)

_HEAD_INPUTS = {
    ("hgru", "categorize"): ("H_n", "v_n", "v_selfatt"),
    ("hgru", "forecast"): ("H_n",),
    ("concat", "categorize"): ("v_seg", "v_n", "v_wordatt"),
    ("concat", "forecast"): ("C_n",),
}
_DEFAULT_HEAD = {
    ("hgru", "categorize"): ("H_n",),
    ("hgru", "forecast"): ("H_n",),
    ("concat", "categorize"): ("v_seg",),
    ("concat", "forecast"): ("C_n",),
}


@dataclass(frozen=True)
class ModelConfig:
    task: str = "categorize"
    role: str = "client"
    skeleton: str = "hgru"
    word_attention: str = "none"
    utterance_attention: str = "none"
    heads: int = 4
    hops: int = 2
    head_inputs: tuple[str, ...] = ()
    scoring: str = "concat"
    window: int = 8
    d_w: int = 64
    d_h: int = 64
    d_s: int = 8
    dropout_embed: float = 0.3
    dropout_head: float = 0.2
    gamma: float = 0.0
    alpha: tuple[float, ...] = ()
    loss_variant: str = "focal"
    min_count: int = 1

    def __post_init__(self):
        if self.task not in ("categorize", "forecast"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.role not in ("client", "therapist"):
            raise ConfigError(f"unknown role {self.role!r}")
        if self.skeleton not in SKELETONS:
            raise ConfigError(f"unknown skeleton {self.skeleton!r}")
        if self.word_attention not in WORD_ATTENTION:
            raise ConfigError(f"unknown word attention {self.word_attention!r}")
        if self.utterance_attention not in UTT_ATTENTION:
            raise ConfigError(f"unknown utterance attention {self.utterance_attention!r}")
        if self.scoring not in SCORING:
            raise ConfigError(f"unknown scoring mode {self.scoring!r}")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if min(self.d_w, self.d_h, self.d_s) < 1:
            raise ConfigError("embedding and hidden widths must be >= 1")
        allowed = _HEAD_INPUTS[(self.skeleton, self.task)]
        if len(set(self.head_inputs)) != len(self.head_inputs):
            raise ConfigError("duplicate head inputs")
        for h in self.head_inputs:
            if h not in allowed:
                raise ConfigError(
                    f"head input {h!r} not available for {self.skeleton}/{self.task}"
                )
        if "v_selfatt" in self.head_inputs and self.utterance_attention != "self":
            raise ConfigError("head input v_selfatt requires self utterance attention")
        if "v_wordatt" in self.head_inputs and self.word_attention == "none":
            raise ConfigError("head input v_wordatt requires word attention")
        if self.utterance_attention != "none":
            d_model = (2 if self.skeleton == "hgru" else 4) * self.d_h
            if d_model % self.heads != 0:
                raise ConfigError(
                    f"utterance-vector width {d_model} not divisible by {self.heads} heads"
                )
        object.__setattr__(self, "alpha", tuple(self.alpha))
        object.__setattr__(self, "head_inputs", tuple(self.head_inputs))
        # Constructing the loss config validates alpha/gamma/variant.
        self.loss_config()

    @property
    def labels(self) -> tuple[str, ...]:
        return labels_for_role(self.role)

    def loss_config(self) -> FocalConfig:
        alpha = self.alpha or (1.0,) * len(self.labels)
        if len(alpha) != len(self.labels):
            raise ConfigError(
                f"{len(alpha)} alpha weights for {len(self.labels)} labels"
            )
        return FocalConfig(alpha=alpha, gamma=self.gamma, variant=self.loss_variant)

    def effective_head_inputs(self) -> tuple[str, ...]:
        """Scoring inputs in order, with attention contexts folded in."""
        names = list(self.head_inputs) or list(_DEFAULT_HEAD[(self.skeleton, self.task)])
        names = [n for n in names if n != "v_selfatt"]
        if (
            self.skeleton == "concat"
            and self.word_attention != "none"
            and "v_wordatt" not in names
        ):
            names.append("v_wordatt")
        if self.utterance_attention != "none":
            names.append("att")
        return tuple(names)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["head_inputs"] = list(self.head_inputs)
        d["alpha"] = list(self.alpha)
        return d

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        d = dict(d)
        if "head_inputs" in d:
            d["head_inputs"] = tuple(d["head_inputs"])
        if "alpha" in d:
            d["alpha"] = tuple(d["alpha"])
        known = set(ModelConfig.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return ModelConfig(**d)


def preset(name: str) -> ModelConfig:
    """The four named configurations used throughout."""
    if name == "C_C":
        return ModelConfig(
            task="categorize", role="client", skeleton="hgru",
            head_inputs=("H_n", "v_n"), scoring="add",
            gamma=1.0, alpha=CLIENT_ALPHA,
        )
    if name == "C_T":
        return ModelConfig(
            task="categorize", role="therapist", skeleton="hgru",
            word_attention="gmgru", utterance_attention="anchor",
            head_inputs=("H_n",), scoring="concat",
            gamma=0.0, alpha=THERAPIST_ALPHA,
        )
    if name == "F_C":
        return ModelConfig(
            task="forecast", role="client", skeleton="hgru",
            utterance_attention="self",
            head_inputs=("H_n",), scoring="concat",
            gamma=1.0, alpha=CLIENT_ALPHA,
        )
    if name == "F_T":
        return ModelConfig(
            task="forecast", role="therapist", skeleton="hgru",
            utterance_attention="self",
            head_inputs=("H_n",), scoring="concat",
            gamma=3.0, alpha=THERAPIST_ALPHA,
        )
    raise ConfigError(f"unknown preset {name!r}; expected C_C, C_T, F_C or F_T")

PRESETS = ("C_C", "C_T", "F_C", "F_T")


class Mlp:
    """Two fully connected layers with a ReLU between, dropout on both inputs."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int, rng: np.random.Generator):
        s1, s2 = 1.0 / np.sqrt(d_in), 1.0 / np.sqrt(d_hidden)
        self.w1 = Tensor(rng.uniform(-s1, s1, size=(d_in, d_hidden)))
        self.b1 = Tensor(np.zeros(d_hidden))
        self.w2 = Tensor(rng.uniform(-s2, s2, size=(d_hidden, d_out)))
        self.b2 = Tensor(np.zeros(d_out))

    def apply(self, x: Tensor, p_drop: float, training: bool, rng) -> Tensor:
        x = dropout(x, p_drop, training, rng)
        h = relu(add(matmul(x, self.w1), self.b1))
        h = dropout(h, p_drop, training, rng)
        return add(matmul(h, self.w2), self.b2)

    def named_parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [
            (f"{prefix}.w1", self.w1), (f"{prefix}.b1", self.b1),
            (f"{prefix}.w2", self.w2), (f"{prefix}.b2", self.b2),
        ]


class Model:
    """One task/role model assembled from a config and a vocabulary.

    ``share_from`` reuses another model's embedding tables and skeleton
    encoders (multi-task training); attention modules and scoring heads
    are always private to the model.
    """

    def __init__(
        self,
        config: ModelConfig,
        vocab: Vocab,
        seed: int = 0,
        static_init: np.ndarray | None = None,
        share_from: "Model | None" = None,
    ):
        self.config = config
        self.vocab = vocab
        self.labels = config.labels
        rng = np.random.default_rng(seed)
        c = config
        if share_from is not None:
            if share_from.config.d_w != c.d_w or share_from.config.d_h != c.d_h \
                    or share_from.config.d_s != c.d_s:
                raise ConfigError("shared skeleton requires matching widths")
            self.embedding = share_from.embedding
            self.speakers = share_from.speakers
        else:
            self.embedding = EmbeddingTable(len(vocab), c.d_w, rng, init=static_init)
            self.speakers = SpeakerTable(c.d_s, rng)

        self.utt_bigru: BiGru | None = None
        self.dialogue: GruCell | None = None
        self.con_boundary: Tensor | None = None
        self.con_bigru: BiGru | None = None
        need_v_n = "v_n" in self.config.effective_head_inputs()
        if c.skeleton == "hgru":
            if share_from is not None and share_from.utt_bigru is not None \
                    and share_from.config.skeleton == "hgru":
                self.utt_bigru = share_from.utt_bigru
                self.dialogue = share_from.dialogue
            else:
                self.utt_bigru = BiGru(c.d_w, c.d_h, rng)
                self.dialogue = GruCell(2 * c.d_h + c.d_s, c.d_h, rng)
        else:
            self.con_boundary = Tensor(rng.uniform(-0.1, 0.1, size=c.d_w))
            self.con_bigru = BiGru(c.d_w + c.d_s, c.d_h, rng)
            if need_v_n:
                self.utt_bigru = BiGru(c.d_w, c.d_h, rng)

        self.word_att = None
        self.reencode: BiGru | None = None
        if c.word_attention != "none":
            self.word_att = make_word_attention(c.word_attention, 2 * c.d_h, c.d_h, rng)
            z_width = self.word_att.width_factor * 2 * c.d_h
            self.reencode = BiGru(z_width, c.d_h, rng)

        self.utt_att: MultiheadAttention | None = None
        self._d_model = (2 if c.skeleton == "hgru" else 4) * c.d_h
        if c.utterance_attention != "none":
            self.utt_att = MultiheadAttention(self._d_model, c.heads, c.hops, rng)

        widths = {
            "H_n": c.d_h + (c.d_s if c.task == "forecast" else 0),
            "C_n": 2 * c.d_h + (c.d_s if c.task == "forecast" else 0),
            "v_n": 2 * c.d_h,
            "v_seg": 4 * c.d_h,
            "v_wordatt": 2 * c.d_h,
            "att": self._d_model,
        }
        inputs = self.config.effective_head_inputs()
        n_out = len(self.labels)
        if c.scoring == "concat":
            total = sum(widths[n] for n in inputs)
            self.heads = {"all": Mlp(total, c.d_h, n_out, rng)}
        else:
            self.heads = {n: Mlp(widths[n], c.d_h, n_out, rng) for n in inputs}

    # ---------------------------------------------------------------- params

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = [("embedding.weight", self.embedding.weight),
               ("speakers.weight", self.speakers.weight)]
        if self.utt_bigru is not None:
            out += self.utt_bigru.named_parameters("utt_bigru")
        if self.dialogue is not None:
            out += self.dialogue.named_parameters("dialogue")
        if self.con_boundary is not None:
            out.append(("con_boundary", self.con_boundary))
        if self.con_bigru is not None:
            out += self.con_bigru.named_parameters("con_bigru")
        if self.word_att is not None:
            out += self.word_att.named_parameters("word_att")
        if self.reencode is not None:
            out += self.reencode.named_parameters("reencode")
        if self.utt_att is not None:
            out += self.utt_att.named_parameters("utt_att")
        for name in sorted(self.heads):
            out += self.heads[name].named_parameters(f"head.{name}")
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    # ---------------------------------------------------------------- forward

    def _token_ids(self, u) -> list[int]:
        if u is None:
            return []
        return self.vocab.encode(tokenize(u.text))

    def _check_windows(self, windows: list[Window]) -> None:
        if not windows:
            raise ContractError("forward needs at least one window")
        c = self.config
        for w in windows:
            if w.size != c.window:
                raise ContractError(
                    f"window length {w.size} != configured {c.window}"
                )
            if w.task != c.task or w.role != c.role:
                raise ContractError(
                    f"window for {w.task}/{w.role} fed to a {c.task}/{c.role} model"
                )
            if c.task == "forecast" and w.target_speaker is None:
                raise ContractError("forecast window lacks a target speaker")

    def _encode_utterances(
        self, ids: np.ndarray, mask: np.ndarray, training: bool, rng
    ) -> tuple[Tensor, Tensor]:
        """Word BiGRU over [R, T] token ids; returns (states, vectors)."""
        r, t = ids.shape
        emb = take_rows(self.embedding.weight, ids.reshape(-1))
        emb = dropout(emb, self.config.dropout_embed, training, rng)
        x = emb.reshape(r, t, self.config.d_w)
        return self.utt_bigru.encode_batch(x, mask)

    def _forward_hgru(self, windows, training, rng) -> dict[str, Tensor]:
        c = self.config
        b, n = len(windows), c.window
        tok = [[self._token_ids(u) for u in w.utterances] for w in windows]
        t_max = max((len(ts) for row in tok for ts in row), default=0)
        t_max = max(t_max, 1)
        ids = np.zeros((b * n, t_max), dtype=np.intp)
        mask = np.zeros((b * n, t_max))
        for bi, row in enumerate(tok):
            for ui, ts in enumerate(row):
                r = bi * n + ui
                ids[r, : len(ts)] = ts
                mask[r, : len(ts)] = 1.0
        states, vec = self._encode_utterances(ids, mask, training, rng)

        if self.word_att is not None:
            anchor_rows = (np.arange(b * n) // n) * n + (n - 1)
            keys = take_rows(states, anchor_rows)
            k_mask = mask[anchor_rows]
            res = word_attend(self.word_att, states, keys, mask, k_mask)
            _, vec = self.reencode.encode_batch(res.attended, mask)

        vs = vec.reshape(b, n, 2 * c.d_h)
        spk_ids = np.array(
            [[speaker_index(s) for s in w.speakers] for w in windows], dtype=np.intp
        )
        spk = take_rows(self.speakers.weight, spk_ids.reshape(-1)).reshape(b, n, c.d_s)
        dlg_states, h_n = encode_dialogue_hgru_batch(self.dialogue, concat([vs, spk], axis=2))

        out: dict[str, Tensor] = {"H_n": h_n}
        if "v_n" in self.config.effective_head_inputs():
            out["v_n"] = narrow(vs, 1, n - 1, 1).reshape(b, 2 * c.d_h)
        if self.utt_att is not None:
            out["att"] = utterance_attention(
                "anchor" if c.utterance_attention == "anchor" else "self",
                self.utt_att,
                vs,
            )
        return out

    def _forward_concat(self, windows, training, rng) -> dict[str, Tensor]:
        c = self.config
        b, n = len(windows), c.window
        tok = [[self._token_ids(u) for u in w.utterances] for w in windows]
        lay = []  # per window: (flat ids, flat spk, boundary mask, bounds per slot)
        for bi, w in enumerate(windows):
            flat_ids: list[int] = []
            flat_spk: list[int] = []
            bmask: list[float] = []
            bounds: list[tuple[int, int] | None] = []
            first_real = True
            for ui, u in enumerate(w.utterances):
                if u is None:
                    bounds.append(None)
                    continue
                if not first_real:
                    flat_ids.append(0)
                    flat_spk.append(0)
                    bmask.append(1.0)
                first_real = False
                ts = tok[bi][ui]
                if ts:
                    start = len(flat_ids)
                    flat_ids.extend(ts)
                    flat_spk.extend([speaker_index(u.speaker)] * len(ts))
                    bmask.extend([0.0] * len(ts))
                    bounds.append((start, len(flat_ids) - 1))
                else:
                    bounds.append(None)
            lay.append((flat_ids, flat_spk, bmask, bounds))

        l_max = max(max((len(x[0]) for x in lay), default=0), 1)
        ids = np.zeros((b, l_max), dtype=np.intp)
        spk_ids = np.zeros((b, l_max), dtype=np.intp)
        bmask = np.zeros((b, l_max))
        mask = np.zeros((b, l_max))
        for bi, (fi, fs, bm, _) in enumerate(lay):
            ids[bi, : len(fi)] = fi
            spk_ids[bi, : len(fs)] = fs
            bmask[bi, : len(bm)] = bm
            mask[bi, : len(fi)] = 1.0

        emb = take_rows(self.embedding.weight, ids.reshape(-1))
        emb = dropout(emb, c.dropout_embed, training, rng)
        emb = add(emb, mul(bmask.reshape(-1, 1), self.con_boundary.reshape(1, c.d_w)))
        spk = take_rows(self.speakers.weight, spk_ids.reshape(-1))
        spk = mul(spk, (1.0 - bmask).reshape(-1, 1))
        x = concat([emb, spk], axis=1).reshape(b, l_max, c.d_w + c.d_s)
        states, final = self.con_bigru.encode_batch(x, mask)

        flat_states = states.reshape(b * l_max, 2 * c.d_h)
        seg_start = np.zeros((b, n), dtype=np.intp)
        seg_end = np.zeros((b, n), dtype=np.intp)
        seg_ok = np.zeros((b, n))
        for bi, (_, _, _, bounds) in enumerate(lay):
            for ui, bd in enumerate(bounds):
                if bd is not None:
                    seg_start[bi, ui] = bi * l_max + bd[0]
                    seg_end[bi, ui] = bi * l_max + bd[1]
                    seg_ok[bi, ui] = 1.0
        seg = concat(
            [
                mul(take_rows(flat_states, seg_start.reshape(-1)), seg_ok.reshape(-1, 1)),
                mul(take_rows(flat_states, seg_end.reshape(-1)), seg_ok.reshape(-1, 1)),
            ],
            axis=1,
        ).reshape(b, n, 4 * c.d_h)

        out: dict[str, Tensor] = {"C_n": final}
        out["v_seg"] = narrow(seg, 1, n - 1, 1).reshape(b, 4 * c.d_h)

        if self.word_att is not None:
            out["v_wordatt"] = self._concat_word_att(
                windows, lay, flat_states, l_max, b
            )
        if self.utt_att is not None:
            out["att"] = utterance_attention(
                "anchor" if c.utterance_attention == "anchor" else "self",
                self.utt_att,
                seg,
            )
        if "v_n" in self.config.effective_head_inputs():
            t_max = max((len(ts) for row in tok for ts in row), default=0)
            t_max = max(t_max, 1)
            uids = np.zeros((b * n, t_max), dtype=np.intp)
            umask = np.zeros((b * n, t_max))
            for bi, row in enumerate(tok):
                for ui, ts in enumerate(row):
                    r = bi * n + ui
                    uids[r, : len(ts)] = ts
                    umask[r, : len(ts)] = 1.0
            _, uvec = self._encode_utterances(uids, umask, training, rng)
            out["v_n"] = narrow(
                uvec.reshape(b, n, 2 * c.d_h), 1, n - 1, 1
            ).reshape(b, 2 * c.d_h)
        return out

    def _concat_word_att(self, windows, lay, flat_states, l_max, b) -> Tensor:
        """History-aware anchor vector for the flat skeleton: anchor token
        states query the states of everything before the anchor."""
        c = self.config
        anchor_bounds = [x[3][-1] for x in lay]
        ta = max(
            (bd[1] - bd[0] + 1 for bd in anchor_bounds if bd is not None), default=0
        )
        th = max(
            (bd[0] for bd in anchor_bounds if bd is not None),
            default=0,
        )
        ta, th = max(ta, 1), max(th, 1)
        q_idx = np.zeros((b, ta), dtype=np.intp)
        q_mask = np.zeros((b, ta))
        k_idx = np.zeros((b, th), dtype=np.intp)
        k_mask = np.zeros((b, th))
        for bi, bd in enumerate(anchor_bounds):
            if bd is None:
                continue
            width = bd[1] - bd[0] + 1
            q_idx[bi, :width] = bi * l_max + bd[0] + np.arange(width)
            q_mask[bi, :width] = 1.0
            k_idx[bi, : bd[0]] = bi * l_max + np.arange(bd[0])
            k_mask[bi, : bd[0]] = 1.0
        queries = take_rows(flat_states, q_idx.reshape(-1)).reshape(b, ta, 2 * c.d_h)
        keys = take_rows(flat_states, k_idx.reshape(-1)).reshape(b, th, 2 * c.d_h)
        res = word_attend(self.word_att, queries, keys, q_mask, k_mask)
        _, v = self.reencode.encode_batch(res.attended, q_mask)
        return v

    def forward_batch(
        self,
        windows: list[Window],
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Probability rows [B, n_labels] for a homogeneous window batch."""
        self._check_windows(windows)
        c = self.config
        if c.skeleton == "hgru":
            feats = self._forward_hgru(windows, training, rng)
        else:
            feats = self._forward_concat(windows, training, rng)

        if c.task == "forecast":
            nxt = np.array(
                [speaker_index(w.target_speaker) for w in windows], dtype=np.intp
            )
            spk = take_rows(self.speakers.weight, nxt)
            base = "H_n" if c.skeleton == "hgru" else "C_n"
            feats[base] = concat([feats[base], spk], axis=1)

        inputs = self.config.effective_head_inputs()
        if c.scoring == "concat":
            x = concat([feats[n] for n in inputs], axis=1)
            logits = self.heads["all"].apply(x, c.dropout_head, training, rng)
        else:
            logits = None
            for n in inputs:
                piece = self.heads[n].apply(feats[n], c.dropout_head, training, rng)
                logits = piece if logits is None else add(logits, piece)
        return softmax(logits, axis=-1)

    def forward(
        self,
        window: Window,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Probability simplex [n_labels] for one window."""
        return self.forward_batch([window], training, rng).reshape(len(self.labels))

    def predict(self, window: Window) -> tuple[str, np.ndarray]:
        """(argmax label, probability vector) for one window, eval mode."""
        probs = self.forward(window).data
        return self.labels[int(np.argmax(probs))], probs

    def gold_indices(self, windows: list[Window]) -> np.ndarray:
        out = []
        for w in windows:
            if w.target_label is None:
                raise ContractError("window has no gold label")
            out.append(self.labels.index(w.target_label))
        return np.asarray(out, dtype=np.intp)


def finite_difference_check(
    model: Model,
    windows: list[Window],
    eps: float = 1e-5,
    coords_per_param: int = 3,
    seed: int = 0,
) -> float:
    """Worst relative gradient error over a coordinate sample of every
    parameter, via central differences through the whole model (eval mode,
    so dropout is off and the loss is deterministic)."""
    gold = model.gold_indices(windows)
    cfg = model.config.loss_config()

    def f(_):
        return focal_loss(model.forward_batch(windows, training=False), gold, cfg)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _, p in model.named_parameters():
        err = grad_check(f, p, eps=eps, coords=coords_per_param, rng=rng)
        worst = max(worst, err)
    return worst
