"""Training loop: Adam, gradient clipping, early stopping, multi-task
schedules, and binary checkpoints.

Checkpoints hold the config(s), the vocabulary, and every parameter as
raw float64 little-endian bytes behind a JSON header with sorted keys,
so saving the same state twice produces identical files and a save/load
round trip is bit-exact. Optimizer moments are deliberately not saved;
a checkpoint is a model, not a training session.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .data import Window, batches
from .embed import PAD, Vocab
from .errors import ConfigError, ContractError, ParseError, TrainingError
from .losses import focal_loss
from .metrics import EvalReport
from .model import Model, ModelConfig
from .tensor import Tape, Tensor, add, global_norm


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-4
    batch_size: int = 16
    max_epochs: int = 30
    patience: int = 10
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, max_epochs and patience must be >= 1")
        if self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive")

    def to_dict(self) -> dict:
        return {
            "lr": self.lr, "batch_size": self.batch_size,
            "max_epochs": self.max_epochs, "patience": self.patience,
            "clip_norm": self.clip_norm, "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        known = set(TrainConfig.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training keys: {sorted(unknown)}")
        return TrainConfig(**d)


class Adam:
    """Bias-corrected Adam; moments keyed by position in the param list."""

    def __init__(self, params: list[Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray | None]) -> None:
        if len(grads) != len(self.params):
            raise ContractError("gradient list does not match parameter list")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, g in enumerate(grads):
            if g is None:
                continue
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            self.params[i].data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def clip_global_norm(
    grads: list[np.ndarray | None], max_norm: float
) -> tuple[list[np.ndarray | None], float]:
    """Scale the whole gradient set so its global norm is at most max_norm."""
    norm = global_norm([g for g in grads if g is not None])
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return [None if g is None else g * scale for g in grads], norm


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    dev_metric: float
    improved: bool


@dataclass
class FitResult:
    best_metric: float
    best_epoch: int
    epochs: list[EpochStats]
    stopped_early: bool


class MtlModel:
    """Several task/role models sharing embeddings and encoders.

    The first config in the dict is built whole; later ones borrow its
    embedding tables and (same-skeleton) encoders, keeping their own
    attention modules and scoring heads. Keys are "task:role" strings.
    """

    def __init__(self, configs: dict[str, ModelConfig], vocab: Vocab,
                 seed: int = 0, static_init: np.ndarray | None = None):
        if not configs:
            raise ConfigError("multi-task model needs at least one config")
        self.keys = tuple(configs)
        self.models: dict[str, Model] = {}
        donor = None
        for i, (key, cfg) in enumerate(configs.items()):
            task, _, role = key.partition(":")
            if (task, role) != (cfg.task, cfg.role):
                raise ConfigError(f"key {key!r} does not match config task/role")
            m = Model(cfg, vocab, seed=seed + i, static_init=static_init,
                      share_from=donor)
            if donor is None:
                donor = m
            self.models[key] = m

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        seen: set[int] = set()
        out: list[tuple[str, Tensor]] = []
        for key in self.keys:
            for name, p in self.models[key].named_parameters():
                if p.tid in seen:
                    continue
                seen.add(p.tid)
                out.append((f"{key}|{name}", p))
        return out


@dataclass(frozen=True)
class MtlSchedule:
    """Round structure for multi-task optimization.

    Each group is one optimizer step: the losses of its tasks (one batch
    each) are summed. Groups take turns within a round. A single group
    holding every task is joint training; singleton groups alternate.
    """

    groups: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        flat = [k for g in self.groups for k in g]
        if not flat:
            raise ConfigError("schedule has no tasks")
        if len(set(flat)) != len(flat):
            raise ConfigError("schedule lists a task twice")


def joint_schedule(keys) -> MtlSchedule:
    return MtlSchedule(groups=(tuple(keys),))


def alternate_schedule(keys) -> MtlSchedule:
    return MtlSchedule(groups=tuple((k,) for k in keys))


def _grad_list(grads: dict[int, Tensor], named) -> list[np.ndarray | None]:
    out = []
    for name, p in named:
        g = grads.get(p.tid)
        arr = None if g is None else g.data
        if arr is not None and name.endswith("embedding.weight"):
            arr = arr.copy()
            arr[PAD, :] = 0.0          # padding row stays frozen at zero
        out.append(arr)
    return out


def evaluate_model(
    model: Model, windows: list[Window], ks: tuple[int, ...] = (), batch: int = 64
) -> EvalReport:
    """Eval-mode metrics over labeled windows."""
    if not windows:
        raise ContractError("cannot evaluate on zero windows")
    gold_all, pred_all, rows = [], [], []
    for i in range(0, len(windows), batch):
        chunk = windows[i : i + batch]
        probs = model.forward_batch(chunk, training=False).data
        rows.append(probs)
        pred_all.extend(int(j) for j in np.argmax(probs, axis=1))
        gold_all.extend(model.gold_indices(chunk).tolist())
    probs = np.concatenate(rows, axis=0)
    return EvalReport.from_predictions(
        model.labels, gold_all, pred_all, probs=probs, ks=ks
    )


def _dev_metric(models: dict[str, Model], dev: dict[str, list[Window]]) -> float:
    scores = [evaluate_model(models[k], dev[k]).macro_f1 for k in models]
    return float(np.mean(scores))


def fit(
    model: Model | MtlModel,
    train_windows: list[Window] | dict[str, list[Window]],
    dev_windows: list[Window] | dict[str, list[Window]],
    cfg: TrainConfig,
    schedule: MtlSchedule | None = None,
    log=None,
) -> FitResult:
    """Optimize with Adam, early-stopping on dev macro F1 (mean of the
    tasks' macro F1 for a multi-task model); the best epoch's parameters
    are restored before returning."""
    if isinstance(model, MtlModel):
        models = model.models
        if schedule is None:
            schedule = joint_schedule(model.keys)
        for g in schedule.groups:
            for k in g:
                if k not in models:
                    raise ConfigError(f"schedule names unknown task {k!r}")
        train = dict(train_windows)
        dev = dict(dev_windows)
    else:
        if schedule is not None:
            raise ConfigError("schedules only apply to multi-task models")
        models = {"": model}
        schedule = MtlSchedule(groups=(("",),))
        train = {"": list(train_windows)}
        dev = {"": list(dev_windows)}
    for k, ws in train.items():
        if not ws:
            raise ContractError(f"no training windows for {k or 'model'}")
    for k, ws in dev.items():
        if not ws:
            raise ContractError(f"no dev windows for {k or 'model'}")

    named = model.named_parameters()
    params = [p for _, p in named]
    opt = Adam(params, cfg.lr)
    rng = np.random.default_rng(cfg.seed)

    best_metric, best_epoch = -np.inf, 0
    best_state = {name: p.data.copy() for name, p in named}
    history: list[EpochStats] = []
    stale = 0
    stopped_early = False

    for epoch in range(1, cfg.max_epochs + 1):
        task_batches = {
            k: list(batches(ws, cfg.batch_size, rng=rng)) for k, ws in train.items()
        }
        rounds = max(len(b) for b in task_batches.values())
        total_loss, n_steps = 0.0, 0
        for r in range(rounds):
            for group in schedule.groups:
                with Tape() as tape:
                    loss = None
                    for key in group:
                        tb = task_batches[key]
                        chunk = tb[r % len(tb)]
                        m = models[key]
                        probs = m.forward_batch(chunk, training=True, rng=rng)
                        gold = m.gold_indices(chunk)
                        part = focal_loss(probs, gold, m.config.loss_config())
                        loss = part if loss is None else add(loss, part)
                    loss_val = float(loss.data)
                    grads = tape.backward(loss)
                glist = _grad_list(grads, named)
                glist, gnorm = clip_global_norm(glist, cfg.clip_norm)
                if not np.isfinite(loss_val) or not np.isfinite(gnorm):
                    raise TrainingError(
                        "non-finite loss or gradient",
                        epoch=epoch, batch=r, grad_norm=gnorm,
                    )
                opt.step(glist)
                total_loss += loss_val
                n_steps += 1

        metric = _dev_metric(models, dev)
        improved = metric > best_metric
        if improved:
            best_metric, best_epoch = metric, epoch
            best_state = {name: p.data.copy() for name, p in named}
            stale = 0
        else:
            stale += 1
        stats = EpochStats(epoch, total_loss / max(n_steps, 1), metric, improved)
        history.append(stats)
        if log is not None:
            log(stats)
        if stale >= cfg.patience:
            stopped_early = True
            break

    for name, p in named:
        p.data = best_state[name].copy()
    return FitResult(best_metric, best_epoch, history, stopped_early)


# ------------------------------------------------------------------ storage

MAGIC = b"MIOB1\n"


def _header_and_params(model: Model | MtlModel, extra: dict | None):
    if isinstance(model, MtlModel):
        named = model.named_parameters()
        header = {
            "kind": "mtl",
            "configs": {k: model.models[k].config.to_dict() for k in model.keys},
            "keys": list(model.keys),
        }
        vocab = next(iter(model.models.values())).vocab
    else:
        named = model.named_parameters()
        header = {"kind": "single", "config": model.config.to_dict()}
        vocab = model.vocab
    header["vocab"] = list(vocab.tokens[2:])   # PAD/UNK are implicit
    header["params"] = [
        {"name": name, "shape": list(p.shape)} for name, p in named
    ]
    header["extra"] = extra or {}
    return header, named


def save_checkpoint(path: str, model: Model | MtlModel,
                    extra: dict | None = None) -> None:
    header, named = _header_and_params(model, extra)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, p in named:
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> tuple[Model | MtlModel, dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(MAGIC):
        raise ParseError("not a model checkpoint (bad magic)")
    off = len(MAGIC)
    (hlen,) = struct.unpack_from("<Q", raw, off)
    off += 8
    try:
        header = json.loads(raw[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"corrupt checkpoint header: {e}") from None
    off += hlen

    vocab = Vocab(header["vocab"])
    if header["kind"] == "single":
        model: Model | MtlModel = Model(ModelConfig.from_dict(header["config"]), vocab)
    elif header["kind"] == "mtl":
        configs = {k: ModelConfig.from_dict(header["configs"][k])
                   for k in header["keys"]}
        model = MtlModel(configs, vocab)
    else:
        raise ParseError(f"unknown checkpoint kind {header['kind']!r}")

    named = model.named_parameters()
    if len(named) != len(header["params"]):
        raise ParseError("checkpoint parameter list does not match the config")
    for (name, p), meta in zip(named, header["params"]):
        if meta["name"] != name or tuple(meta["shape"]) != p.shape:
            raise ParseError(f"checkpoint mismatch at parameter {meta['name']!r}")
        count = int(np.prod(meta["shape"], dtype=np.int64)) if meta["shape"] else 1
        nbytes = count * 8
        if off + nbytes > len(raw):
            raise ParseError("checkpoint truncated")
        p.data = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(
            tuple(meta["shape"])
        ).astype(np.float64)
        off += nbytes
    if off != len(raw):
        raise ParseError("trailing bytes after checkpoint payload")
    return model, header.get("extra", {})
