"""The 11 discrete translational actions, expressed as body-frame step vectors."""

import numpy as np

ACTION_TABLE = np.array(
    [
        (0, 0, 0),
        (1, 0, 0),
        (-1, 0, 0),
        (0, 1, 0),
        (0, -1, 0),
        (0, 0, 1),
        (0, 0, -1),
        (1, 1, 0),
        (1, -1, 0),
        (-1, 1, 0),
        (-1, -1, 0),
    ],
    dtype=float,
)
N_ACTIONS = len(ACTION_TABLE)
ACTION_LABELS = tuple("(" + ",".join(f"{int(c):+d}" for c in row) + ")" for row in ACTION_TABLE)


def action_vector(index: int) -> np.ndarray:
    if not 0 <= int(index) < N_ACTIONS or int(index) != index:
        raise ValueError(f"action index must be an integer in [0, {N_ACTIONS}), got {index!r}")
    return ACTION_TABLE[int(index)].copy()


def action_index(step) -> int:
    step = np.asarray(step, dtype=float).reshape(3)
    hits = np.flatnonzero(np.all(ACTION_TABLE == step, axis=1))
    if hits.size == 0:
        raise ValueError(f"{step} is not in the action table")
    return int(hits[0])
