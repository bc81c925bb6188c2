"""Seeded synthetic MI session generator.

Sessions are label sequences drawn from a first-order Markov chain over
the eleven codes, with the first code drawn from the chain's stationary
distribution so label marginals match it at every position. Each code
owns a small pool of keywords, disjoint from every other pool and from
the shared filler words, and every utterance contains exactly one
keyword from its code's pool. That makes the mapping from text to code
noiseless: ``oracle_label`` recovers the code of any generated utterance
with certainty, so categorize is learnable to arbitrary accuracy, and
the peaked transition rows make the next code predictable well above the
majority baseline.

The chain encodes plausible session flow: closed questions tend to draw
neutral follow language, reflections follow client change/sustain talk,
confrontation invites sustain talk, and speakers sometimes hold the
floor for consecutive utterances.
"""

from __future__ import annotations

import numpy as np

from .data import ALL_LABELS, CLIENT_LABELS, Session, Utterance
from .errors import ConfigError

KEYWORDS: dict[str, tuple[str, ...]] = {
    "Fn": ("week", "usually", "stuff", "anyway"),
    "Ct": ("quit", "change", "ready", "better"),
    "St": ("keep", "relax", "harmless", "fun"),
    "Fa": ("mhm", "right", "sure", "gotcha"),
    "Res": ("hearing", "sounds", "saying", "mirror"),
    "Rec": ("deeper", "pattern", "underneath", "bigger"),
    "Gi": ("research", "fact", "information", "evidence"),
    "Quc": ("did", "ever", "often", "many"),
    "Quo": ("how", "what", "describe", "tell"),
    "Mia": ("proud", "strength", "permission", "credit"),
    "Min": ("must", "warning", "shame", "blame"),
}

FILLERS = (
    "i", "you", "the", "a", "to", "it", "we", "so", "and",
    "well", "that", "about", "this", "me", "my",
)

# Transition rows in ALL_LABELS order: Fn Ct St | Fa Res Rec Gi Quc Quo Mia Min.
# Each row splits mass between staying with the speaker's role and handing
# over, with one clearly dominant successor per role so forecasting is
# learnable from the current code alone.
_T = {
    "Fn":  {"Fn": .21, "Ct": .045, "St": .045,
            "Quc": .42, "Fa": .07, "Gi": .07, "Quo": .056, "Res": .035, "Rec": .021, "Mia": .014, "Min": .014},
    "Ct":  {"Ct": .21, "Fn": .06, "St": .03,
            "Res": .42, "Mia": .105, "Rec": .07, "Fa": .035, "Gi": .028, "Quo": .021, "Quc": .014, "Min": .007},
    "St":  {"St": .21, "Fn": .06, "Ct": .03,
            "Min": .35, "Res": .14, "Rec": .07, "Fa": .07, "Gi": .028, "Quc": .021, "Quo": .014, "Mia": .007},
    "Fa":  {"Fn": .42, "Ct": .14, "St": .14,
            "Quo": .18, "Quc": .045, "Gi": .03, "Fa": .015, "Res": .012, "Rec": .009, "Mia": .006, "Min": .003},
    "Res": {"Ct": .42, "Fn": .175, "St": .105,
            "Rec": .18, "Res": .03, "Mia": .03, "Fa": .024, "Gi": .015, "Quo": .012, "Quc": .006, "Min": .003},
    "Rec": {"Ct": .385, "Fn": .175, "St": .14,
            "Mia": .165, "Quo": .045, "Fa": .03, "Res": .024, "Gi": .015, "Quc": .012, "Rec": .006, "Min": .003},
    "Gi":  {"Fn": .455, "Ct": .14, "St": .105,
            "Gi": .165, "Quc": .045, "Quo": .03, "Fa": .03, "Res": .012, "Rec": .009, "Mia": .006, "Min": .003},
    "Quc": {"Fn": .525, "Ct": .105, "St": .07,
            "Gi": .18, "Quo": .045, "Fa": .03, "Quc": .015, "Res": .012, "Rec": .009, "Mia": .006, "Min": .003},
    "Quo": {"Ct": .385, "St": .21, "Fn": .105,
            "Fa": .165, "Gi": .045, "Quo": .03, "Quc": .024, "Res": .015, "Rec": .012, "Mia": .006, "Min": .003},
    "Mia": {"Ct": .42, "Fn": .175, "St": .105,
            "Fa": .15, "Gi": .06, "Quo": .03, "Res": .024, "Rec": .015, "Mia": .012, "Quc": .006, "Min": .003},
    "Min": {"St": .455, "Fn": .14, "Ct": .105,
            "Mia": .15, "Fa": .06, "Res": .03, "Gi": .024, "Quo": .015, "Rec": .012, "Quc": .006, "Min": .003},
}


def transition_matrix() -> np.ndarray:
    """Row-stochastic matrix in ALL_LABELS order."""
    m = np.zeros((len(ALL_LABELS), len(ALL_LABELS)))
    for i, a in enumerate(ALL_LABELS):
        row = _T[a]
        for b, p in row.items():
            m[i, ALL_LABELS.index(b)] = p
    if not np.allclose(m.sum(axis=1), 1.0, atol=1e-9):
        raise ConfigError("transition rows must each sum to 1")
    return m


def stationary_distribution(m: np.ndarray | None = None) -> np.ndarray:
    """Stationary vector of the chain (left eigenvector for eigenvalue 1)."""
    if m is None:
        m = transition_matrix()
    vals, vecs = np.linalg.eig(m.T)
    i = int(np.argmin(np.abs(vals - 1.0)))
    v = np.real(vecs[:, i])
    v = np.abs(v)
    return v / v.sum()


def oracle_label(text: str) -> str | None:
    """Recover the code of a generated utterance from its keyword."""
    for tok in text.split():
        for code, pool in KEYWORDS.items():
            if tok in pool:
                return code
    return None


def _make_text(code: str, rng: np.random.Generator) -> str:
    n = int(rng.integers(3, 9))
    words = [FILLERS[int(rng.integers(len(FILLERS)))] for _ in range(n - 1)]
    kw = KEYWORDS[code][int(rng.integers(len(KEYWORDS[code])))]
    words.insert(int(rng.integers(n)), kw)
    return " ".join(words)


def gen_synthetic(
    seed: int,
    n_sessions: int,
    length_range: tuple[int, int] = (40, 40),
) -> list[Session]:
    """Generate sessions; same arguments always produce the same corpus."""
    lo, hi = length_range
    if n_sessions < 1 or lo < 1 or hi < lo:
        raise ConfigError("need n_sessions >= 1 and 1 <= lo <= hi")
    rng = np.random.default_rng(seed)
    m = transition_matrix()
    start = stationary_distribution(m)
    n_codes = len(ALL_LABELS)
    sessions = []
    for s in range(n_sessions):
        length = int(rng.integers(lo, hi + 1))
        code_i = int(rng.choice(n_codes, p=start))
        utts = []
        for _ in range(length):
            code = ALL_LABELS[code_i]
            speaker = "C" if code in CLIENT_LABELS else "T"
            utts.append(
                Utterance(speaker=speaker, text=_make_text(code, rng), label=code)
            )
            code_i = int(rng.choice(n_codes, p=m[code_i]))
        sessions.append(Session(session_id=f"synth-{s:04d}", utterances=tuple(utts)))
    return sessions


def majority_forecast_baseline(train_labels, eval_labels, label_set) -> np.ndarray:
    """Confusion matrix of always predicting the most frequent train label."""
    counts = np.zeros(len(label_set), dtype=np.int64)
    for lab in train_labels:
        counts[label_set.index(lab)] += 1
    top = int(np.argmax(counts))
    from .metrics import confusion_matrix

    gold = [label_set.index(lab) for lab in eval_labels]
    return confusion_matrix(gold, [top] * len(gold), len(label_set))
