"""Corpus records, JSONL I/O, and sliding-window construction.

A corpus file holds one JSON object per line:

    {"session_id": "s1", "utterances": [{"speaker": "T", "text": "...", "label": "Quo"}, ...]}

Speakers are "C" (client) or "T" (therapist). Labels, when present, must
belong to the speaker's label set.

Windows are fixed-length views of a session ending at an anchor
utterance, left-padded with ``None`` slots. Padding slots carry a
speaker tag that alternates backwards from the first real utterance, so
a window is fully determined by its real utterances. Categorize windows
anchor at an utterance of the model's role and predict its label;
forecast windows end just before a target utterance of the model's role
and predict that label, given the target speaker. Forecast windows never
contain the target utterance, so the model cannot peek at it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, ParseError

CLIENT_LABELS = ("Fn", "Ct", "St")
THERAPIST_LABELS = ("Fa", "Res", "Rec", "Gi", "Quc", "Quo", "Mia", "Min")
ALL_LABELS = CLIENT_LABELS + THERAPIST_LABELS

ROLES = ("client", "therapist")
TASKS = ("categorize", "forecast")


def labels_for_role(role: str) -> tuple[str, ...]:
    if role == "client":
        return CLIENT_LABELS
    if role == "therapist":
        return THERAPIST_LABELS
    raise ContractError(f"unknown role {role!r}")


def speaker_for_role(role: str) -> str:
    return "C" if role == "client" else "T"


def role_of_speaker(speaker: str) -> str:
    if speaker == "C":
        return "client"
    if speaker == "T":
        return "therapist"
    raise ContractError(f"unknown speaker {speaker!r}")


@dataclass(frozen=True)
class Utterance:
    speaker: str
    text: str
    label: str | None = None


@dataclass(frozen=True)
class Session:
    session_id: str
    utterances: tuple[Utterance, ...]


@dataclass(frozen=True)
class Window:
    """Fixed-length dialogue view; ``utterances[i] is None`` marks padding.

    ``speakers`` covers every slot, padding included. The anchor is the
    last slot. ``target_label`` is the gold label (anchor's own label for
    categorize, the next utterance's for forecast) and may be None for
    unlabeled prediction. ``target_speaker`` is set for forecast windows.
    """

    utterances: tuple[Utterance | None, ...]
    speakers: tuple[str, ...]
    task: str
    role: str
    target_label: str | None
    target_speaker: str | None = None

    @property
    def size(self) -> int:
        return len(self.utterances)

    @property
    def anchor(self) -> Utterance:
        u = self.utterances[-1]
        if u is None:
            raise ContractError("window has no real anchor utterance")
        return u

    @property
    def n_real(self) -> int:
        return sum(1 for u in self.utterances if u is not None)


def _check_utterance(obj: dict, line: int) -> Utterance:
    if not isinstance(obj, dict):
        raise ParseError("utterance must be an object", line=line)
    speaker = obj.get("speaker")
    if speaker not in ("C", "T"):
        raise ParseError(f"speaker must be 'C' or 'T', got {speaker!r}", line=line)
    text = obj.get("text")
    if not isinstance(text, str):
        raise ParseError("utterance text must be a string", line=line)
    label = obj.get("label")
    if label is not None:
        allowed = labels_for_role(role_of_speaker(speaker))
        if label not in allowed:
            raise ParseError(
                f"label {label!r} not valid for speaker {speaker!r}", line=line
            )
    return Utterance(speaker=speaker, text=text, label=label)


def load_corpus(path: str) -> list[Session]:
    """Read a JSONL corpus; malformed lines raise ParseError with line numbers."""
    sessions: list[Session] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON: {e.msg}", line=lineno) from None
            if not isinstance(obj, dict) or "session_id" not in obj:
                raise ParseError("record must be an object with session_id", line=lineno)
            sid = obj["session_id"]
            if not isinstance(sid, str) or not sid:
                raise ParseError("session_id must be a non-empty string", line=lineno)
            if sid in seen_ids:
                raise ParseError(f"duplicate session_id {sid!r}", line=lineno)
            seen_ids.add(sid)
            utts = obj.get("utterances")
            if not isinstance(utts, list) or not utts:
                raise ParseError("utterances must be a non-empty list", line=lineno)
            sessions.append(
                Session(
                    session_id=sid,
                    utterances=tuple(_check_utterance(u, lineno) for u in utts),
                )
            )
    return sessions


def save_corpus(sessions: Iterable[Session], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sessions:
            record = {
                "session_id": s.session_id,
                "utterances": [
                    {"speaker": u.speaker, "text": u.text, "label": u.label}
                    for u in s.utterances
                ],
            }
            fh.write(json.dumps(record) + "\n")


def _pad_speakers(history: Sequence[Utterance], size: int) -> tuple[str, ...]:
    """Slot speakers for a left-padded window: pads alternate backwards
    from the first real utterance's speaker."""
    n_pad = size - len(history)
    real = [u.speaker for u in history]
    if not real:
        raise ContractError("window requires at least one real utterance")
    pads = []
    nxt = real[0]
    for _ in range(n_pad):
        nxt = "T" if nxt == "C" else "C"
        pads.append(nxt)
    pads.reverse()
    return tuple(pads + real)


def window_from_history(
    history: Sequence[Utterance],
    size: int,
    task: str,
    role: str,
    target_label: str | None = None,
    target_speaker: str | None = None,
) -> Window:
    """Build a window from the last ``size`` utterances of ``history``."""
    if task not in TASKS:
        raise ContractError(f"unknown task {task!r}")
    if role not in ROLES:
        raise ContractError(f"unknown role {role!r}")
    if size < 1:
        raise ContractError("window size must be >= 1")
    tail = list(history)[-size:]
    if not tail:
        raise ContractError("window requires at least one real utterance")
    if task == "forecast" and target_speaker is None:
        raise ContractError("forecast windows need a target speaker")
    if task == "categorize":
        if tail[-1].speaker != speaker_for_role(role):
            raise ContractError(
                f"categorize anchor speaker {tail[-1].speaker!r} does not match role {role!r}"
            )
        target_speaker = None
    slots: list[Utterance | None] = [None] * (size - len(tail)) + tail
    return Window(
        utterances=tuple(slots),
        speakers=_pad_speakers(tail, size),
        task=task,
        role=role,
        target_label=target_label,
        target_speaker=target_speaker,
    )


def make_windows(session: Session, size: int, task: str, role: str) -> list[Window]:
    """All training/eval windows of one session for a task and role.

    categorize: one window per utterance whose speaker matches the role,
    anchored there. forecast: one window per position whose next
    utterance's speaker matches the role; positions with an empty history
    (the target is the session's first utterance) are skipped.
    """
    want = speaker_for_role(role)
    utts = session.utterances
    windows = []
    if task == "categorize":
        for i, u in enumerate(utts):
            if u.speaker == want:
                windows.append(
                    window_from_history(utts[: i + 1], size, task, role, u.label)
                )
    elif task == "forecast":
        for i in range(1, len(utts)):
            nxt = utts[i]
            if nxt.speaker == want:
                windows.append(
                    window_from_history(
                        utts[:i], size, task, role, nxt.label, target_speaker=want
                    )
                )
    else:
        raise ContractError(f"unknown task {task!r}")
    return windows


def corpus_windows(
    sessions: Iterable[Session], size: int, task: str, role: str
) -> list[Window]:
    out: list[Window] = []
    for s in sessions:
        out.extend(make_windows(s, size, task, role))
    return out


def split_sessions(
    sessions: Sequence[Session],
    seed: int,
    dev_frac: float = 0.1,
    test_frac: float = 0.1,
) -> tuple[list[Session], list[Session], list[Session]]:
    """Deterministic session-level train/dev/test split (no session straddles)."""
    if dev_frac < 0 or test_frac < 0 or dev_frac + test_frac >= 1:
        raise ContractError("split fractions must be nonnegative and sum below 1")
    order = list(sessions)
    np.random.default_rng(seed).shuffle(order)
    n = len(order)
    n_dev = int(round(n * dev_frac))
    n_test = int(round(n * test_frac))
    dev = order[:n_dev]
    test = order[n_dev : n_dev + n_test]
    train = order[n_dev + n_test :]
    return train, dev, test


def batches(items: Sequence, size: int, rng: np.random.Generator | None = None):
    """Yield consecutive batches; shuffles a copy first when given an rng."""
    if size < 1:
        raise ContractError("batch size must be >= 1")
    order = list(items)
    if rng is not None:
        rng.shuffle(order)
    for i in range(0, len(order), size):
        yield order[i : i + size]


def permute_pad_slots(window: Window, rng: np.random.Generator) -> Window:
    """Shuffle the padding slots of a window (a no-op on content; pads are
    indistinguishable). Used by property tests."""
    pads = [i for i, u in enumerate(window.utterances) if u is None]
    slots = list(window.utterances)
    shuffled = [slots[i] for i in pads]
    rng.shuffle(shuffled)
    for i, v in zip(pads, shuffled):
        slots[i] = v
    return replace(window, utterances=tuple(slots))
