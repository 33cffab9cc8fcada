"""Plain-text checkpoints of the learner state.

Layout: a header line ``U2MFQL v1 X A T episode seed``, then X lines of Q values,
X lines of visit counts and T + 1 lines holding mu_0 ... mu_T.  Floats are written
with ``repr`` so a save/load round trip is bit exact.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .core import QTable
from .errors import CheckpointError
from .learner import DEFAULT_WINDOW, History, TrainState

MAGIC = "U2MFQL"
VERSION = "v1"


def _row(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_checkpoint(state: TrainState, path: str | os.PathLike) -> None:
    q = state.q.values
    nx, na = q.shape
    T = state.mu_by_step.shape[0] - 1
    lines = [f"{MAGIC} {VERSION} {nx} {na} {T} {state.episode} {state.seed}"]
    lines += [_row(r) for r in q]
    lines += [" ".join(str(int(v)) for v in r) for r in state.q.visits]
    lines += [_row(r) for r in state.mu_by_step]
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike, trailing_window: int = DEFAULT_WINDOW) -> TrainState:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    lines = text.split("\n")
    if not text.endswith("\n"):
        raise CheckpointError("checkpoint is truncated (missing final newline)")
    lines = lines[:-1]
    if not lines:
        raise CheckpointError("empty checkpoint")
    head = lines[0].split()
    if len(head) != 7 or head[0] != MAGIC:
        raise CheckpointError(f"bad checkpoint header {lines[0]!r}")
    if head[1] != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {head[1]!r}")
    try:
        nx, na, T, episode, seed = (int(v) for v in head[2:])
    except ValueError:
        raise CheckpointError(f"bad checkpoint header {lines[0]!r}") from None
    if min(nx, na) < 1 or T < 1 or episode < 0:
        raise CheckpointError("checkpoint header has invalid dimensions")
    expected = 1 + 2 * nx + T + 1
    if len(lines) != expected:
        raise CheckpointError(f"checkpoint has {len(lines)} lines, expected {expected}")

    def parse(block, width, kind, what):
        out = []
        for line in block:
            tokens = line.split()
            if len(tokens) != width:
                raise CheckpointError(f"{what} row has {len(tokens)} entries, expected {width}")
            try:
                out.append([kind(t) for t in tokens])
            except ValueError:
                raise CheckpointError(f"unparsable {what} entry in {line[:40]!r}") from None
        return out

    q = np.array(parse(lines[1:1 + nx], na, float, "Q"), dtype=float)
    visits = np.array(parse(lines[1 + nx:1 + 2 * nx], na, int, "visit"), dtype=np.int64)
    mu = np.array(parse(lines[1 + 2 * nx:], nx, float, "distribution"), dtype=float)
    if np.any(visits < 0):
        raise CheckpointError("negative visit count")
    return TrainState(
        q=QTable(q, visits),
        mu_by_step=mu,
        episode=episode,
        seed=seed,
        history=History.with_window(trailing_window),
    )
