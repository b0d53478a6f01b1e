"""Multi-turn attention over an accumulated key/value memory.

Per turn, new key/value rows are appended to the memory, which keeps only
the most recent ``max_len`` rows. Attention is single-head scaled dot
product over whatever the memory currently holds:

    output = softmax(query @ keys.T / sqrt(d)) @ values

This is a desk-scale model of the memory contract, not a transformer layer:
no heads, no masking, no positional encoding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMemory, ShapeMismatch


def _as_matrix(x, d, what) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{what} must be 2-d, got shape {arr.shape}")
    if d is not None and arr.shape[1] != d:
        raise ShapeMismatch(f"{what} dim {arr.shape[1]} != head dim {d}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{what} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class TurnKV:
    keys: np.ndarray
    values: np.ndarray
    turn_index: int = 0

    def __post_init__(self):
        keys = _as_matrix(self.keys, None, "keys")
        values = _as_matrix(self.values, keys.shape[1], "values")
        if keys.shape != values.shape:
            raise ShapeMismatch(f"keys {keys.shape} != values {values.shape}")
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class MemoryState:
    keys: np.ndarray  # (length, head_dim)
    values: np.ndarray
    max_len: int
    head_dim: int

    @classmethod
    def empty(cls, head_dim: int, max_len: int) -> "MemoryState":
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        zero = np.zeros((0, head_dim), dtype=np.float64)
        return cls(zero, zero.copy(), max_len, head_dim)

    def __len__(self):
        return self.keys.shape[0]


@dataclass(frozen=True)
class AttentionOutput:
    output: np.ndarray  # (s, head_dim)
    weights: np.ndarray  # (s, memory length)


def append_turn(state: MemoryState, turn: TurnKV) -> MemoryState:
    """New state with the turn appended, keeping the last max_len rows."""
    if turn.keys.shape[1] != state.head_dim:
        raise ShapeMismatch(
            f"turn dim {turn.keys.shape[1]} != memory head dim {state.head_dim}"
        )
    keys = np.concatenate([state.keys, turn.keys], axis=0)
    values = np.concatenate([state.values, turn.values], axis=0)
    if keys.shape[0] > state.max_len:
        keys = keys[-state.max_len :]
        values = values[-state.max_len :]
    return MemoryState(keys, values, state.max_len, state.head_dim)


def attend(query, state: MemoryState) -> AttentionOutput:
    """Scaled dot-product attention of the query rows over the memory."""
    q = _as_matrix(query, state.head_dim, "query")
    if len(state) == 0:
        raise EmptyMemory("attention requested against an empty memory")
    logits = q @ state.keys.T / np.sqrt(state.head_dim)
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    weights = exp / exp.sum(axis=1, keepdims=True)
    return AttentionOutput(output=weights @ state.values, weights=weights)
