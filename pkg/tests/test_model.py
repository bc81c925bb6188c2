"""Model assembly: presets, head wiring, equivalences, causality."""

import numpy as np
import pytest

from miobserver.data import Session, Utterance, corpus_windows, make_windows
from miobserver.embed import build_vocab, speaker_index
from miobserver.encoders import encode_dialogue_hgru_batch
from miobserver.errors import ConfigError, ContractError
from miobserver.model import (
    Mlp,
    Model,
    ModelConfig,
    PRESETS,
    finite_difference_check,
    preset,
)
from miobserver.synth import gen_synthetic
from miobserver.tensor import concat, take_rows

TOY = dict(d_w=8, d_h=8, d_s=4, window=4)


def _tiny_world(seed=0, n=4):
    sessions = gen_synthetic(seed, n, length_range=(8, 10))
    vocab = build_vocab([u.text for s in sessions for u in s.utterances])
    return sessions, vocab


# ---------------------------------------------------------------- config

def test_preset_definitions():
    cc = preset("C_C")
    assert (cc.skeleton, cc.word_attention, cc.utterance_attention) == \
        ("hgru", "none", "none")
    assert cc.head_inputs == ("H_n", "v_n") and cc.scoring == "add"
    assert cc.gamma == 1.0 and cc.alpha == (0.25, 1.0, 1.0)

    ct = preset("C_T")
    assert ct.word_attention == "gmgru" and ct.utterance_attention == "anchor"
    assert (ct.heads, ct.hops) == (4, 2)
    assert ct.gamma == 0.0
    assert ct.alpha == (0.5, 1.0, 1.0, 1.0, 0.75, 0.75, 1.0, 1.0)

    fc, ft = preset("F_C"), preset("F_T")
    for p in (fc, ft):
        assert p.task == "forecast"
        assert p.utterance_attention == "self"
        assert p.head_inputs == ("H_n",)
    assert fc.gamma == 1.0 and ft.gamma == 3.0
    assert all(p.window == 8 for p in (cc, ct, fc, ft))
    with pytest.raises(ConfigError):
        preset("C_X")


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(skeleton="transformer")
    with pytest.raises(ConfigError):
        ModelConfig(word_attention="dot")
    with pytest.raises(ConfigError):
        ModelConfig(utterance_attention="anchor", heads=3, d_h=8)  # 16 % 3
    with pytest.raises(ConfigError):
        ModelConfig(head_inputs=("v_seg",))          # concat-only input on hgru
    with pytest.raises(ConfigError):
        ModelConfig(task="forecast", head_inputs=("v_n",))
    with pytest.raises(ConfigError):
        ModelConfig(head_inputs=("H_n", "H_n"))
    with pytest.raises(ConfigError):
        ModelConfig(head_inputs=("v_selfatt",))      # needs self attention
    with pytest.raises(ConfigError):
        ModelConfig(skeleton="concat", head_inputs=("v_wordatt",))
    with pytest.raises(ConfigError):
        ModelConfig(alpha=(1.0, 1.0), gamma=0.0)     # 2 weights, 3 labels
    with pytest.raises(ConfigError):
        ModelConfig(window=0)
    # the implicit attention context is appended once
    cfg = ModelConfig(utterance_attention="self", heads=4,
                      head_inputs=("H_n", "v_selfatt"))
    assert cfg.effective_head_inputs() == ("H_n", "att")


def test_config_dict_round_trip():
    cfg = preset("C_T")
    back = ModelConfig.from_dict(cfg.to_dict())
    assert back == cfg
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"nonsense": 1})


# ---------------------------------------------------------------- forward

def test_all_presets_forward_shapes_and_simplex():
    sessions, vocab = _tiny_world()
    for name in PRESETS:
        cfg = ModelConfig.from_dict(dict(preset(name).to_dict(), **TOY))
        m = Model(cfg, vocab, seed=1)
        ws = corpus_windows(sessions, cfg.window, cfg.task, cfg.role)[:5]
        probs = m.forward_batch(ws).data
        assert probs.shape == (len(ws), len(cfg.labels))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(probs > 0.0)
        lab, row = m.predict(ws[0])
        assert lab in cfg.labels
        np.testing.assert_array_equal(row, probs[0])


def test_attention_off_is_bitwise_bare_pipeline():
    """With both attention mechanisms off, the forward must equal a
    hand-rolled embed -> word BiGRU -> dialogue GRU -> head pipeline
    bit for bit: no hidden transforms in the assembled model."""
    sessions, vocab = _tiny_world(seed=2)
    cfg = ModelConfig(task="categorize", role="client", head_inputs=("H_n",),
                      scoring="concat", **TOY)
    m = Model(cfg, vocab, seed=7)
    ws = corpus_windows(sessions, cfg.window, cfg.task, cfg.role)[:6]

    got = m.forward_batch(ws).data

    b, n = len(ws), cfg.window
    tok = [[m._token_ids(u) for u in w.utterances] for w in ws]
    t_max = max(max((len(t) for row in tok for t in row), default=0), 1)
    ids = np.zeros((b * n, t_max), dtype=np.intp)
    mask = np.zeros((b * n, t_max))
    for bi, row in enumerate(tok):
        for ui, ts in enumerate(row):
            ids[bi * n + ui, : len(ts)] = ts
            mask[bi * n + ui, : len(ts)] = 1.0
    emb = take_rows(m.embedding.weight, ids.reshape(-1)).reshape(b * n, t_max, cfg.d_w)
    _, vec = m.utt_bigru.encode_batch(emb, mask)
    vs = vec.reshape(b, n, 2 * cfg.d_h)
    spk_ids = np.array([[speaker_index(s) for s in w.speakers] for w in ws],
                       dtype=np.intp)
    spk = take_rows(m.speakers.weight, spk_ids.reshape(-1)).reshape(b, n, cfg.d_s)
    _, h_n = encode_dialogue_hgru_batch(m.dialogue, concat([vs, spk], axis=2))
    from miobserver.tensor import softmax
    want = softmax(m.heads["all"].apply(h_n, cfg.dropout_head, False, None),
                   axis=-1).data

    np.testing.assert_array_equal(got, want)


def test_eval_forward_deterministic():
    sessions, vocab = _tiny_world(seed=3)
    cfg = ModelConfig.from_dict(dict(preset("C_T").to_dict(), **TOY))
    m = Model(cfg, vocab, seed=0)
    ws = corpus_windows(sessions, cfg.window, cfg.task, cfg.role)[:3]
    a = m.forward_batch(ws).data
    b = m.forward_batch(ws).data
    np.testing.assert_array_equal(a, b)


def test_same_seed_same_parameters():
    _, vocab = _tiny_world(seed=4)
    cfg = ModelConfig.from_dict(dict(preset("F_T").to_dict(), **TOY))
    m1 = Model(cfg, vocab, seed=11)
    m2 = Model(cfg, vocab, seed=11)
    for (n1, p1), (n2, p2) in zip(m1.named_parameters(), m2.named_parameters()):
        assert n1 == n2
        np.testing.assert_array_equal(p1.data, p2.data)
    m3 = Model(cfg, vocab, seed=12)
    assert any(
        not np.array_equal(p1.data, p3.data)
        for (_, p1), (_, p3) in zip(m1.named_parameters(), m3.named_parameters())
    )


def test_forecast_depends_on_target_speaker():
    sessions, vocab = _tiny_world(seed=5)
    cfg = ModelConfig(task="forecast", role="client", **TOY)
    m = Model(cfg, vocab, seed=0)
    w = corpus_windows(sessions, cfg.window, cfg.task, cfg.role)[0]
    import dataclasses
    w_t = dataclasses.replace(w, target_speaker="T")
    a = m.forward(w).data
    b = m.forward(w_t).data
    assert not np.allclose(a, b)


def test_forecast_causality_window_blind_to_future():
    """The forecast for position i reads only utterances before i: windows
    built from a session whose suffix was rewritten are identical, and so
    are the model outputs."""
    sessions, vocab = _tiny_world(seed=6)
    cfg = ModelConfig(task="forecast", role="therapist", **TOY)
    m = Model(cfg, vocab, seed=1)
    s = sessions[0]
    checked = 0
    for i in range(1, len(s.utterances)):
        if s.utterances[i].speaker != "T":
            continue
        rewritten = Session(
            s.session_id,
            s.utterances[:i]
            + tuple(
                Utterance(u.speaker, "totally different words", u.label)
                for u in s.utterances[i:]
            ),
        )
        w_full = [w for w in make_windows(s, cfg.window, "forecast", "therapist")]
        w_cut = [w for w in make_windows(rewritten, cfg.window, "forecast", "therapist")]
        pairs = [
            (a, b_)
            for a, b_ in zip(w_full, w_cut)
            if [u.text for u in a.utterances if u] ==
               [u.text for u in b_.utterances if u]
        ]
        for a, b_ in pairs:
            np.testing.assert_array_equal(m.forward(a).data, m.forward(b_).data)
            checked += 1
    assert checked >= 3


def test_pad_slot_permutation_invariance():
    from miobserver.data import permute_pad_slots, window_from_history
    _, vocab = _tiny_world(seed=8)
    cfg = ModelConfig(task="categorize", role="client", **TOY)
    m = Model(cfg, vocab, seed=2)
    w = window_from_history(
        [Utterance("C", "keep it simple", "St")], cfg.window, "categorize",
        "client", target_label="St",
    )
    rng = np.random.default_rng(0)
    base = m.forward(w).data
    for _ in range(4):
        w2 = permute_pad_slots(w, rng)
        np.testing.assert_array_equal(m.forward(w2).data, base)


def test_empty_anchor_text_is_finite():
    _, vocab = _tiny_world(seed=9)
    for skeleton in ("hgru", "concat"):
        cfg = ModelConfig(task="categorize", role="client", skeleton=skeleton,
                          word_attention="bidaf", **TOY)
        m = Model(cfg, vocab, seed=3)
        hist = [Utterance("T", "tell me more", "Quo"), Utterance("C", "", "Fn")]
        from miobserver.data import window_from_history
        w = window_from_history(hist, cfg.window, "categorize", "client")
        probs = m.forward(w).data
        assert np.all(np.isfinite(probs))
        np.testing.assert_allclose(probs.sum(), 1.0, atol=1e-12)


def test_window_size_mismatch_rejected():
    sessions, vocab = _tiny_world(seed=10)
    cfg = ModelConfig(task="categorize", role="client", **TOY)
    m = Model(cfg, vocab, seed=0)
    ws = corpus_windows(sessions, 6, "categorize", "client")[:1]
    with pytest.raises(ContractError):
        m.forward_batch(ws)
    wt = corpus_windows(sessions, cfg.window, "categorize", "therapist")[:1]
    with pytest.raises(ContractError):
        m.forward_batch(wt)
    with pytest.raises(ContractError):
        m.forward_batch([])


def test_add_scoring_sums_per_input_heads():
    sessions, vocab = _tiny_world(seed=11)
    cfg = ModelConfig(task="categorize", role="client",
                      head_inputs=("H_n", "v_n"), scoring="add", **TOY)
    m = Model(cfg, vocab, seed=4)
    assert set(m.heads) == {"H_n", "v_n"}
    assert all(isinstance(h, Mlp) for h in m.heads.values())
    cfg2 = ModelConfig(task="categorize", role="client",
                       head_inputs=("H_n", "v_n"), scoring="concat", **TOY)
    m2 = Model(cfg2, vocab, seed=4)
    assert set(m2.heads) == {"all"}
    assert m2.heads["all"].w1.shape[0] == cfg2.d_h + 2 * cfg2.d_h


def test_concat_skeleton_head_widths():
    _, vocab = _tiny_world(seed=12)
    cfg = ModelConfig(task="categorize", role="therapist", skeleton="concat",
                      word_attention="bidaf",
                      head_inputs=("v_seg", "v_wordatt"), scoring="concat", **TOY)
    m = Model(cfg, vocab, seed=5)
    assert m.heads["all"].w1.shape[0] == 4 * cfg.d_h + 2 * cfg.d_h
    cfg2 = ModelConfig(task="forecast", role="client", skeleton="concat", **TOY)
    m2 = Model(cfg2, vocab, seed=5)
    # C_n plus the upcoming speaker's embedding
    assert m2.heads["all"].w1.shape[0] == 2 * cfg2.d_h + cfg2.d_s


def test_finite_difference_check_clean_on_tiny_model():
    sessions, vocab = _tiny_world(seed=13, n=2)
    cfg = ModelConfig(task="categorize", role="client", d_w=5, d_h=4, d_s=3,
                      window=3)
    m = Model(cfg, vocab, seed=6)
    ws = corpus_windows(sessions, cfg.window, cfg.task, cfg.role)[:2]
    assert finite_difference_check(m, ws, coords_per_param=2) < 1e-6
