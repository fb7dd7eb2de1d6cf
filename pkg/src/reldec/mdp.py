"""Decision-process primitives for learned cluster scheduling.

The state space is the disjoint union of per-cluster hard-decision
patterns: a row of the action-value table is keyed by the pair
(cluster index a, state index s in [0, 2**l_a)), and the row holds one
value per schedulable cluster. Rows default to all-zero until written,
which is equivalent to zero initialization of the full
sum_a 2**l_a x n_clusters table while staying memory-safe for large
neighborhoods.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RowKey = tuple  # (cluster index, state index)


@dataclass(frozen=True)
class Hyperparams:
    """Learning and decoding knobs.

    Defaults follow the standard operating point: learning rate 0.1,
    discount 0.9, exploration 0.6, 50 steps per episode, adaptation loss
    threshold 1e-4 recomputed every 10 steps, 5 SNR tasks, and at most
    50 decoder iterations.
    """

    alpha: float = 0.1
    beta: float = 0.9
    epsilon: float = 0.6
    ell_max: int = 50
    loss_min: float = 1e-4
    x_loss_stride: int = 10
    K: int = 5
    i_max: int = 50

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.ell_max < 1:
            raise ValueError("ell_max must be >= 1")
        if self.x_loss_stride < 1:
            raise ValueError("x_loss_stride must be >= 1")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.i_max < 1:
            raise ValueError("i_max must be >= 1")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "epsilon": self.epsilon,
            "ell_max": self.ell_max,
            "loss_min": self.loss_min,
            "x_loss_stride": self.x_loss_stride,
            "K": self.K,
            "i_max": self.i_max,
        }


@dataclass(frozen=True)
class MdpInstance:
    """One transition (s, a, r, s'): both states are rows of the scheduled
    cluster, so s[0] == a == s_next[0], and the reward lies in [0, 1]."""

    s: RowKey
    a: int
    r: float
    s_next: RowKey

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"reward must lie in [0, 1], got {self.r}")
        if self.s[0] != self.a or self.s_next[0] != self.a:
            raise ValueError(
                f"state rows must belong to the scheduled cluster {self.a}"
            )


class QTable:
    """Sparse action-value table with all-zero default rows."""

    __slots__ = ("n_actions", "_rows")

    def __init__(self, n_actions: int):
        if n_actions < 1:
            raise ValueError("n_actions must be >= 1")
        self.n_actions = n_actions
        self._rows: dict = {}

    def row(self, key: RowKey) -> np.ndarray:
        """Copy of the row (zeros if never written)."""
        stored = self._rows.get(key)
        if stored is None:
            return np.zeros(self.n_actions, dtype=np.float64)
        return stored.copy()

    def value(self, key: RowKey, a: int) -> float:
        stored = self._rows.get(key)
        return 0.0 if stored is None else float(stored[a])

    def max_value(self, key: RowKey) -> float:
        stored = self._rows.get(key)
        return 0.0 if stored is None else float(stored.max())

    def set_value(self, key: RowKey, a: int, value: float) -> None:
        value = float(value)
        if not np.isfinite(value):
            raise ValueError("action-values must stay finite")
        stored = self._rows.get(key)
        if stored is None:
            stored = np.zeros(self.n_actions, dtype=np.float64)
            self._rows[key] = stored
        stored[a] = value

    @property
    def n_rows(self) -> int:
        return len(self._rows)

    def rows_items(self):
        return self._rows.items()

    def copy(self) -> "QTable":
        dup = QTable(self.n_actions)
        dup._rows = {k: v.copy() for k, v in self._rows.items()}
        return dup

    @staticmethod
    def mean(tables) -> "QTable":
        """Cell-wise average (absent rows count as zeros)."""
        tables = list(tables)
        if not tables:
            raise ValueError("need at least one table to average")
        n_actions = tables[0].n_actions
        if any(t.n_actions != n_actions for t in tables):
            raise ValueError("tables must share the action count")
        out = QTable(n_actions)
        keys = set()
        for t in tables:
            keys.update(t._rows)
        for key in keys:
            acc = np.zeros(n_actions, dtype=np.float64)
            for t in tables:
                stored = t._rows.get(key)
                if stored is not None:
                    acc += stored
            out._rows[key] = acc / len(tables)
        return out

    def __eq__(self, other) -> bool:
        """Equality over materialized and default entries alike."""
        if not isinstance(other, QTable):
            return NotImplemented
        if self.n_actions != other.n_actions:
            return False
        zeros = np.zeros(self.n_actions, dtype=np.float64)
        for key in set(self._rows) | set(other._rows):
            a = self._rows.get(key, zeros)
            b = other._rows.get(key, zeros)
            if not np.array_equal(a, b):
                return False
        return True

    def __repr__(self) -> str:
        return f"QTable({self.n_rows} rows x {self.n_actions} actions)"


def reward(transmitted_bits, reconstructed) -> float:
    """Fraction of a cluster's bits reconstructed correctly."""
    ref = np.asarray(transmitted_bits)
    got = reconstructed.bits if hasattr(reconstructed, "bits") else np.asarray(reconstructed)
    if ref.shape != got.shape:
        raise ValueError(f"bit vectors differ in length: {ref.shape} vs {got.shape}")
    return float(np.mean(ref == got))


def q_update(q: QTable, s: RowKey, a: int, r: float, s_next: RowKey,
             hp: Hyperparams) -> float:
    """One action-value recursion step; returns the new cell value.

    The bootstrap term maxes over the columns of the row keyed by the
    scheduled cluster's new state.
    """
    old = q.value(s, a)
    new = (1.0 - hp.alpha) * old + hp.alpha * (r + hp.beta * q.max_value(s_next))
    q.set_value(s, a, new)
    return new


def td_target(q: QTable, inst: MdpInstance, beta: float) -> float:
    return inst.r + beta * q.max_value(inst.s_next)


def td_loss(batch, q: QTable, beta: float) -> float:
    """Mean squared TD error of a batch under the current table."""
    batch = list(batch)
    if not batch:
        raise ValueError("td_loss needs a non-empty batch")
    total = 0.0
    for inst in batch:
        err = td_target(q, inst, beta) - q.value(inst.s, inst.a)
        total += err * err
    return total / len(batch)


def _argmax_ties(values: np.ndarray, rng: np.random.Generator) -> int:
    best = values.max()
    ties = np.flatnonzero(values == best)
    if len(ties) == 1:
        return int(ties[0])
    return int(ties[rng.integers(len(ties))])


def greedy_policy(q: QTable, s: RowKey, rng: np.random.Generator) -> int:
    """Row-wise argmax; ties resolved uniformly at random."""
    return _argmax_ties(q.row(s), rng)


def select_epsilon_greedy(q: QTable, s: RowKey, action_set, epsilon: float,
                          rng: np.random.Generator) -> int:
    """With probability epsilon a uniform pick from action_set, otherwise
    the argmax of row s restricted to action_set (ties uniform)."""
    actions = np.asarray(list(action_set), dtype=np.int64)
    if actions.size == 0:
        raise ValueError("action_set must be non-empty")
    if rng.random() < epsilon:
        return int(actions[rng.integers(actions.size)])
    values = q.row(s)[actions]
    return int(actions[_argmax_ties(values, rng)])


def cluster_scores(q: QTable, cluster_states) -> np.ndarray:
    """Score of scheduling cluster a now: Q[(a, s_a)][a] for each a."""
    return np.array(
        [q.value((a, int(s)), a) for a, s in enumerate(cluster_states)],
        dtype=np.float64,
    )


def select_cluster_epsilon_greedy(q: QTable, cluster_states, epsilon: float,
                                  rng: np.random.Generator) -> int:
    """Training-time cluster pick: epsilon-uniform, else the cluster whose
    own-state action-value is largest (ties uniform)."""
    n = len(cluster_states)
    if rng.random() < epsilon:
        return int(rng.integers(n))
    return _argmax_ties(cluster_scores(q, cluster_states), rng)


def schedule_order(
    q: QTable,
    cluster_states,
    rng: np.random.Generator,
    mode: str = "snapshot",
    live_context=None,
) -> list:
    """Greedy without-replacement cluster ordering for one decoder iteration.

    ``snapshot`` ranks every pick by the iteration-start states. ``live``
    re-extracts each remaining candidate's current state before every pick
    and floods the chosen cluster immediately through ``live_context``
    (an object with ``current_state(a)`` and ``flood(a)``), so later picks
    see the updated posteriors.
    """
    if mode not in ("snapshot", "live"):
        raise ValueError(f"unknown scheduling mode {mode!r}")
    if mode == "live" and live_context is None:
        raise ValueError("live mode requires a live_context")
    states = [int(s) for s in cluster_states]
    remaining = list(range(len(states)))
    order = []
    while remaining:
        if mode == "live" and order:
            for a in remaining:
                states[a] = int(live_context.current_state(a))
        scores = np.array(
            [q.value((a, states[a]), a) for a in remaining], dtype=np.float64
        )
        pick = remaining[_argmax_ties(scores, rng)]
        order.append(pick)
        remaining.remove(pick)
        if mode == "live":
            live_context.flood(pick)
    return order
