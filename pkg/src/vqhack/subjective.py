"""Bradley-Terry scores from pairwise preference counts (MM iteration)."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = ["PairwiseVotes", "BTScores", "bt_fit", "bt_rank", "bt_log_likelihood", "read_votes_csv", "read_votes_json"]


@dataclass(frozen=True, eq=False)
class PairwiseVotes:
    """``wins[i, j]`` counts votes preferring ``names[i]`` over ``names[j]``."""

    names: tuple[str, ...]
    wins: np.ndarray

    def __post_init__(self):
        names = tuple(self.names)
        wins = np.array(self.wins, dtype=float)
        k = len(names)
        if k < 2:
            raise ValueError("need at least two methods")
        if len(set(names)) != k:
            raise ValueError("method labels must be unique")
        if wins.shape != (k, k):
            raise ValueError(f"wins must be {k}x{k}, got {wins.shape}")
        if np.any(wins < 0) or not np.all(np.isfinite(wins)):
            raise ValueError("win counts must be finite and non-negative")
        if np.any(np.diag(wins) != 0):
            raise ValueError("diagonal of the win matrix must be zero")
        wins.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "wins", wins)

    @classmethod
    def from_records(cls, records, names: Sequence[str] | None = None) -> "PairwiseVotes":
        """Build from ``(winner, loser, count)`` triples."""
        records = [(str(w), str(l), float(c)) for w, l, c in records]
        if names is None:
            names = sorted({r[0] for r in records} | {r[1] for r in records})
        index = {n: i for i, n in enumerate(names)}
        wins = np.zeros((len(names), len(names)))
        for w, l, c in records:
            if w == l:
                raise ValueError(f"self-comparison for {w!r}")
            wins[index[w], index[l]] += c
        return cls(tuple(names), wins)


@dataclass
class BTScores:
    names: tuple[str, ...]
    scores: np.ndarray
    ranks: list[int]
    iterations: int
    converged: bool
    log_likelihood: list[float] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            "scores": {n: float(s) for n, s in zip(self.names, self.scores)},
            "ranking": [{"label": n, "score": s} for n, s in bt_rank(self)],
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _order(names: Sequence[str], scores: np.ndarray) -> list[int]:
    return sorted(range(len(names)), key=lambda i: (-scores[i], names[i]))


def bt_log_likelihood(wins: np.ndarray, pi: np.ndarray) -> float:
    total = pi[:, None] + pi[None, :]
    mask = wins > 0
    return float(np.sum(wins[mask] * (np.log(np.broadcast_to(pi[:, None], wins.shape)[mask]) - np.log(total[mask]))))


def _strongly_connected(w: np.ndarray) -> bool:
    k = len(w)

    def reach(adj):
        seen, stack = {0}, [0]
        while stack:
            i = stack.pop()
            for j in np.nonzero(adj[i])[0]:
                if j not in seen:
                    seen.add(int(j))
                    stack.append(int(j))
        return len(seen) == k

    beats = w > 0
    return reach(beats) and reach(beats.T)


def bt_fit(votes: PairwiseVotes, tol: float = 1e-9, max_iter: int = 10000, prior: float = 0.1) -> BTScores:
    """Fit Bradley-Terry strengths by the minorization-maximization update.

    ``prior`` pseudo-votes are added to every off-diagonal cell. Strengths
    are normalized to sum to 1; iteration stops when no strength moves by
    ``tol`` or more.
    """
    if prior < 0:
        raise ValueError("prior must be >= 0")
    k = len(votes.names)
    w = votes.wins + prior * (1.0 - np.eye(k))
    if not _strongly_connected(w):
        raise ValueError("comparison graph is not strongly connected; use prior > 0")
    n = w + w.T
    total_wins = w.sum(axis=1)

    pi = np.full(k, 1.0 / k)
    trace = [bt_log_likelihood(w, pi)]
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        denom = (n / (pi[:, None] + pi[None, :])).sum(axis=1)
        new = total_wins / denom
        new /= new.sum()
        delta = float(np.max(np.abs(new - pi)))
        pi = new
        trace.append(bt_log_likelihood(w, pi))
        if delta < tol:
            converged = True
            break
    return BTScores(votes.names, pi, _order(votes.names, pi), it, converged, trace)


def bt_rank(scores: BTScores) -> list[tuple[str, float]]:
    """Labels with scores, best first; equal scores fall back to label order."""
    return [(scores.names[i], float(scores.scores[i])) for i in _order(scores.names, scores.scores)]


def read_votes_csv(text: str) -> PairwiseVotes:
    """Parse ``winner_label,loser_label,count`` rows; a header line is optional."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if rows and rows[0][0].strip().lower() in ("winner", "winner_label"):
        rows = rows[1:]
    records = []
    for lineno, row in enumerate(rows, 1):
        if len(row) != 3:
            raise ValueError(f"votes row {lineno}: expected 3 fields, got {len(row)}")
        try:
            records.append((row[0].strip(), row[1].strip(), float(row[2])))
        except ValueError:
            raise ValueError(f"votes row {lineno}: bad count {row[2]!r}") from None
    return PairwiseVotes.from_records(records)


def read_votes_json(text: str) -> PairwiseVotes:
    obj = json.loads(text)
    return PairwiseVotes(tuple(obj["names"]), np.array(obj["wins"], dtype=float))
