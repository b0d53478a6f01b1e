"""Multi-turn KV memory: accumulate per-turn keys/values, truncate to the
most recent rows, attend against whatever survived.

Run: python3 demos/multiturn_memory.py
"""

import numpy as np

from comforge import MemoryState, TurnKV, append_turn, attend

rng = np.random.default_rng(0)
head_dim = 4

# The truncation threshold is a required choice; there is no universal
# default. Here: keep at most 6 rows.
state = MemoryState.empty(head_dim, max_len=6)

for t in range(3):
    turn = TurnKV(
        keys=rng.standard_normal((3, head_dim)),
        values=rng.standard_normal((3, head_dim)),
        turn_index=t,
    )
    state = append_turn(state, turn)
    print(f"after turn {t}: memory holds {len(state)} rows (cap 6)")

# Nine rows went in, the oldest three fell off. Attention now runs over the
# surviving suffix only.
query = rng.standard_normal((2, head_dim))
out = attend(query, state)
print("weights shape:", out.weights.shape)
print("row sums:", out.weights.sum(axis=1))

# Sanity check: a one-shot dense attention over the same 6 rows agrees.
logits = query @ state.keys.T / np.sqrt(head_dim)
dense = np.exp(logits - logits.max(axis=1, keepdims=True))
dense /= dense.sum(axis=1, keepdims=True)
print("max difference vs dense:", np.abs(out.output - dense @ state.values).max())
