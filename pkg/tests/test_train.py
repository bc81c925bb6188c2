"""Optimizer, fit loop, early stopping, checkpoints, multi-task sharing."""

import numpy as np
import pytest

from miobserver.data import corpus_windows, split_sessions
from miobserver.embed import build_vocab
from miobserver.errors import ConfigError, ParseError, TrainingError
from miobserver.model import Model, ModelConfig
from miobserver.synth import gen_synthetic
from miobserver.tensor import Tensor
from miobserver.train import (
    Adam,
    MtlModel,
    MtlSchedule,
    TrainConfig,
    alternate_schedule,
    clip_global_norm,
    evaluate_model,
    fit,
    joint_schedule,
    load_checkpoint,
    save_checkpoint,
)

TOY = dict(d_w=8, d_h=8, d_s=4, window=4)


def _world(seed=0, n=12):
    sessions = gen_synthetic(seed, n, length_range=(10, 14))
    tr, dev, te = split_sessions(sessions, seed=seed)
    vocab = build_vocab([u.text for s in tr for u in s.utterances])
    return tr, dev, te, vocab


def _model(vocab, seed=0, **kw):
    cfg = ModelConfig(task="categorize", role="client", **dict(TOY, **kw))
    return Model(cfg, vocab, seed=seed)


# ---------------------------------------------------------------- optimizer

def test_adam_first_step_magnitude():
    # with zero state the first update is -lr * g / (|g| + eps-ish)
    p = Tensor(np.array([1.0, -2.0, 3.0]))
    opt = Adam([p], lr=0.1)
    g = np.array([0.5, -0.25, 1e-3])
    opt.step([g])
    step = p.data - np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(step, -0.1 * np.sign(g), rtol=1e-4)


def test_adam_converges_on_quadratic():
    p = Tensor(np.array([5.0, -3.0]))
    opt = Adam([p], lr=0.05)
    for _ in range(400):
        opt.step([2.0 * p.data])
    np.testing.assert_allclose(p.data, 0.0, atol=1e-3)


def test_adam_skips_none_grads():
    p1, p2 = Tensor(np.ones(2)), Tensor(np.ones(2))
    opt = Adam([p1, p2], lr=0.1)
    opt.step([np.ones(2), None])
    assert not np.array_equal(p1.data, np.ones(2))
    np.testing.assert_array_equal(p2.data, np.ones(2))


def test_clip_global_norm():
    gs = [np.array([3.0]), np.array([4.0])]
    clipped, norm = clip_global_norm(gs, 5.0)
    assert norm == pytest.approx(5.0)
    np.testing.assert_array_equal(clipped[0], gs[0])
    clipped, norm = clip_global_norm(gs, 2.5)
    assert norm == pytest.approx(5.0)
    np.testing.assert_allclose(clipped[0], [1.5])
    np.testing.assert_allclose(clipped[1], [2.0])
    clipped, norm = clip_global_norm([None, np.array([2.0])], 1.0)
    assert clipped[0] is None
    np.testing.assert_allclose(clipped[1], [1.0])


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(lr=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(patience=-1)
    back = TrainConfig.from_dict(TrainConfig(lr=0.01).to_dict())
    assert back.lr == 0.01


# ---------------------------------------------------------------- fit loop

def test_fit_reduces_loss_and_improves_dev():
    tr, dev, _, vocab = _world()
    m = _model(vocab, seed=1)
    wtr = corpus_windows(tr, 4, "categorize", "client")
    wdev = corpus_windows(dev, 4, "categorize", "client")
    cfg = TrainConfig(lr=3e-3, batch_size=16, max_epochs=6, patience=6, seed=0)
    res = fit(m, wtr, wdev, cfg)
    assert res.epochs[0].train_loss > res.epochs[-1].train_loss
    assert res.best_metric > evaluate_model(
        _model(vocab, seed=1), wdev
    ).macro_f1 - 1e-9
    assert res.best_epoch >= 1


def test_fit_same_seed_reproducible():
    tr, dev, _, vocab = _world(seed=3)
    wtr = corpus_windows(tr, 4, "categorize", "client")
    wdev = corpus_windows(dev, 4, "categorize", "client")
    cfg = TrainConfig(lr=1e-3, batch_size=8, max_epochs=3, patience=5, seed=7)
    r1 = fit(_model(vocab, seed=2), wtr, wdev, cfg)
    r2 = fit(_model(vocab, seed=2), wtr, wdev, cfg)
    assert [e.train_loss for e in r1.epochs] == [e.train_loss for e in r2.epochs]
    assert [e.dev_metric for e in r1.epochs] == [e.dev_metric for e in r2.epochs]


def test_fit_restores_best_state():
    tr, dev, _, vocab = _world(seed=4)
    m = _model(vocab, seed=3)
    wtr = corpus_windows(tr, 4, "categorize", "client")
    wdev = corpus_windows(dev, 4, "categorize", "client")
    cfg = TrainConfig(lr=3e-3, batch_size=16, max_epochs=5, patience=5, seed=1)
    res = fit(m, wtr, wdev, cfg)
    assert evaluate_model(m, wdev).macro_f1 == pytest.approx(res.best_metric,
                                                            abs=1e-12)


def test_fit_early_stops_on_patience():
    tr, dev, _, vocab = _world(seed=5)
    m = _model(vocab, seed=4)
    wtr = corpus_windows(tr, 4, "categorize", "client")[:8]
    wdev = corpus_windows(dev, 4, "categorize", "client")[:8]
    # lr=tiny so dev never moves; patience must cut the run short
    cfg = TrainConfig(lr=1e-9, batch_size=8, max_epochs=30, patience=2, seed=0)
    res = fit(m, wtr, wdev, cfg)
    assert res.stopped_early
    assert len(res.epochs) <= 4


def test_pad_embedding_row_stays_zero_through_training():
    tr, dev, _, vocab = _world(seed=6)
    m = _model(vocab, seed=5)
    wtr = corpus_windows(tr, 4, "categorize", "client")
    wdev = corpus_windows(dev, 4, "categorize", "client")[:10]
    fit(m, wtr, wdev, TrainConfig(lr=3e-3, batch_size=16, max_epochs=2,
                                  patience=3, seed=0))
    np.testing.assert_array_equal(m.embedding.weight.data[0], 0.0)


def test_non_finite_gradient_raises_training_error():
    tr, dev, _, vocab = _world(seed=7)
    m = _model(vocab, seed=6)
    # poison one parameter so the first forward yields NaN loss
    m.dialogue.w_c.data[0, 0] = np.nan
    wtr = corpus_windows(tr, 4, "categorize", "client")[:8]
    cfg = TrainConfig(lr=1e-3, batch_size=4, max_epochs=1, patience=1, seed=0)
    with pytest.raises(TrainingError) as err:
        fit(m, wtr, wtr[:4], cfg)
    assert err.value.epoch == 1 and err.value.batch == 0


def test_fit_rejects_schedule_for_single_model():
    tr, dev, _, vocab = _world(seed=8)
    m = _model(vocab, seed=0)
    w = corpus_windows(tr, 4, "categorize", "client")[:4]
    with pytest.raises(ConfigError):
        fit(m, w, w, TrainConfig(max_epochs=1), schedule=MtlSchedule((("x",),)))


# ---------------------------------------------------------------- checkpoint

def test_checkpoint_round_trip_bit_exact(tmp_path):
    _, _, _, vocab = _world(seed=9, n=4)
    m = _model(vocab, seed=7, word_attention="gmgru",
               utterance_attention="anchor", heads=4, hops=2)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, m, extra={"note": "x"})
    m2, extra = load_checkpoint(path)
    assert extra["note"] == "x"
    assert m2.config == m.config
    assert m2.vocab.tokens == m.vocab.tokens
    for (n1, p1), (n2, p2) in zip(m.named_parameters(), m2.named_parameters()):
        assert n1 == n2
        np.testing.assert_array_equal(p1.data, p2.data)


def test_checkpoint_double_save_byte_identical(tmp_path):
    _, _, _, vocab = _world(seed=10, n=4)
    m = _model(vocab, seed=8)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(p1, m, extra={"k": 1})
    save_checkpoint(p2, m, extra={"k": 1})
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_predictions_identical_after_reload(tmp_path):
    sessions = gen_synthetic(11, 3, length_range=(8, 10))
    vocab = build_vocab([u.text for s in sessions for u in s.utterances])
    m = _model(vocab, seed=9)
    ws = corpus_windows(sessions, 4, "categorize", "client")[:10]
    before = m.forward_batch(ws).data
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, m, extra={})
    m2, _ = load_checkpoint(path)
    np.testing.assert_array_equal(m2.forward_batch(ws).data, before)


def test_checkpoint_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint at all")
    with pytest.raises(ParseError):
        load_checkpoint(bad)
    trunc = tmp_path / "trunc.ckpt"
    _, _, _, vocab = _world(seed=12, n=3)
    m = _model(vocab, seed=0)
    save_checkpoint(trunc, m, extra={})
    data = trunc.read_bytes()
    trunc.write_bytes(data[:-16])
    with pytest.raises(ParseError):
        load_checkpoint(trunc)
    padded = tmp_path / "padded.ckpt"
    padded.write_bytes(data + b"\x00" * 8)
    with pytest.raises(ParseError):
        load_checkpoint(padded)


# ---------------------------------------------------------------- multi-task

def _mtl_configs():
    return {
        "categorize:client": ModelConfig(task="categorize", role="client", **TOY),
        "categorize:therapist": ModelConfig(task="categorize", role="therapist",
                                            **TOY),
    }


def test_mtl_shares_backbone_not_heads():
    _, _, _, vocab = _world(seed=13, n=4)
    mtl = MtlModel(_mtl_configs(), vocab, seed=0)
    a = mtl.models["categorize:client"]
    b = mtl.models["categorize:therapist"]
    assert a.embedding.weight is b.embedding.weight
    assert a.speakers.weight is b.speakers.weight
    assert a.utt_bigru is b.utt_bigru
    assert a.dialogue is b.dialogue
    assert a.heads["all"] is not b.heads["all"]
    names = [n for n, _ in mtl.named_parameters()]
    assert len(names) == len(set(names))
    shared_ids = {id(p) for _, p in a.named_parameters()}
    both = [p for _, p in mtl.named_parameters() if id(p) in shared_ids]
    # every shared tensor appears exactly once in the dedup list
    assert len(both) == len(shared_ids)


def test_mtl_key_validation():
    _, _, _, vocab = _world(seed=14, n=3)
    with pytest.raises(ConfigError):
        MtlModel({"categorize:dog": ModelConfig(task="categorize",
                                                role="client", **TOY)},
                 vocab, seed=0)
    with pytest.raises(ConfigError):
        MtlModel({}, vocab, seed=0)


def test_schedules():
    keys = ("a", "b", "c")
    j = joint_schedule(keys)
    assert j.groups == (("a", "b", "c"),)
    alt = alternate_schedule(keys)
    assert alt.groups == (("a",), ("b",), ("c",))
    with pytest.raises(ConfigError):
        MtlSchedule(())
    with pytest.raises(ConfigError):
        MtlSchedule((("a",), ("a",)))


def test_mtl_fit_runs_and_improves():
    tr, dev, _, vocab = _world(seed=15)
    mtl = MtlModel(_mtl_configs(), vocab, seed=1)
    wtr = {k: corpus_windows(tr, 4, *k.split(":")) for k in mtl.models}
    wdev = {k: corpus_windows(dev, 4, *k.split(":")) for k in mtl.models}
    cfg = TrainConfig(lr=3e-3, batch_size=16, max_epochs=3, patience=4, seed=0)
    res = fit(mtl, wtr, wdev, cfg, schedule=joint_schedule(tuple(mtl.models)))
    assert len(res.epochs) >= 1
    assert res.epochs[-1].train_loss < res.epochs[0].train_loss
    # alternate schedule also runs
    mtl2 = MtlModel(_mtl_configs(), vocab, seed=1)
    res2 = fit(mtl2, wtr, wdev,
               TrainConfig(lr=3e-3, batch_size=16, max_epochs=2, patience=4,
                           seed=0),
               schedule=alternate_schedule(tuple(mtl2.models)))
    assert len(res2.epochs) >= 1


def test_mtl_checkpoint_round_trip(tmp_path):
    _, _, _, vocab = _world(seed=16, n=4)
    mtl = MtlModel(_mtl_configs(), vocab, seed=2)
    path = tmp_path / "mtl.ckpt"
    save_checkpoint(path, mtl, extra={"mtl": "joint:client"})
    back, extra = load_checkpoint(path)
    assert isinstance(back, MtlModel)
    assert extra["mtl"] == "joint:client"
    assert set(back.models) == set(mtl.models)
    a = back.models["categorize:client"]
    b = back.models["categorize:therapist"]
    assert a.embedding.weight is b.embedding.weight
    for (n1, p1), (n2, p2) in zip(mtl.named_parameters(),
                                  back.named_parameters()):
        assert n1 == n2
        np.testing.assert_array_equal(p1.data, p2.data)
