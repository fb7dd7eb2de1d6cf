"""Frame decoding with pluggable cluster schedulers.

One decoder iteration either floods the whole graph at once (flooding
scheduler) or floods every cluster exactly once in a per-iteration order
(random permutation, or greedy without-replacement ranking by a learned
action-value table). The syndrome is checked after each full iteration;
an optional pre-check before the first iteration lets noiseless frames
cost zero messages and is off by default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bp import ClusterEngine, get_engine
from .clustering import Clustering
from .mdp import QTable, schedule_order
from .policy import PolicyArtifact


@dataclass(frozen=True)
class DecodeResult:
    bits: np.ndarray
    iterations_used: int
    converged: bool
    messages_sent: int
    orders: tuple = ()


@dataclass(frozen=True)
class FloodingScheduler:
    kind: str = "flooding"

    def describe(self) -> str:
        return "flooding"


@dataclass(frozen=True)
class RandomScheduler:
    """Fresh uniform cluster permutation every iteration."""

    kind: str = "random"

    def describe(self) -> str:
        return "random"


class PolicyScheduler:
    """Greedy without-replacement ordering by learned action-values.

    ``snapshot`` ranks all picks by iteration-start cluster states;
    ``live`` re-reads each candidate's state as earlier clusters update
    the posteriors.
    """

    kind = "policy"

    def __init__(self, q: QTable, mode: str = "snapshot"):
        if mode not in ("snapshot", "live"):
            raise ValueError(f"unknown policy scheduler mode {mode!r}")
        self.q = q
        self.mode = mode

    def describe(self) -> str:
        return f"policy-{self.mode}"

    @classmethod
    def from_artifact(
        cls,
        artifact: PolicyArtifact,
        clustering: Clustering,
        mode: str = "snapshot",
        task=None,
    ) -> "PolicyScheduler":
        artifact.check_compatible(clustering)
        return cls(artifact.table_for(task), mode=mode)


class _LiveContext:
    """Bridges schedule_order's live mode onto a decoding frame."""

    __slots__ = ("eng", "state")

    def __init__(self, eng: ClusterEngine, state):
        self.eng = eng
        self.state = state

    def current_state(self, a: int) -> int:
        return self.eng.cluster_state(self.state, a)

    def flood(self, a: int) -> None:
        self.eng.flood_cluster(self.state, a)


def decode(
    channel,
    clustering: Clustering,
    scheduler,
    *,
    i_max: int,
    rng: np.random.Generator | None = None,
    early_stop: bool = True,
    syndrome_precheck: bool = False,
    record_orders: bool = False,
    engine: ClusterEngine | None = None,
) -> DecodeResult:
    """Decode one frame of channel LLRs.

    Returns the reconstruction, the number of full iterations executed,
    whether the syndrome reached zero, and the total count of CN-to-VN
    messages propagated.
    """
    if i_max < 1:
        raise ValueError("i_max must be >= 1")
    eng = engine if engine is not None else get_engine(clustering)
    if rng is None:
        rng = np.random.default_rng()
    state = eng.init_messages(channel)
    n_clusters = eng.n_clusters
    orders = []

    bits = eng.hard_decisions(state)
    if syndrome_precheck and eng.syndrome_ok_bits(bits):
        return DecodeResult(
            bits=bits, iterations_used=0, converged=True, messages_sent=0,
            orders=tuple(orders),
        )

    converged = False
    iterations = 0
    for _ in range(i_max):
        if isinstance(scheduler, FloodingScheduler):
            eng.flood_all(state)
        elif isinstance(scheduler, RandomScheduler):
            order = rng.permutation(n_clusters).tolist()
            if record_orders:
                orders.append(tuple(order))
            for a in order:
                eng.flood_cluster(state, a)
        elif isinstance(scheduler, PolicyScheduler):
            states = eng.all_cluster_states(state)
            if scheduler.mode == "snapshot":
                order = schedule_order(scheduler.q, states, rng, mode="snapshot")
                for a in order:
                    eng.flood_cluster(state, a)
            else:
                ctx = _LiveContext(eng, state)
                order = schedule_order(
                    scheduler.q, states, rng, mode="live", live_context=ctx
                )
            if record_orders:
                orders.append(tuple(order))
        else:
            raise TypeError(f"unsupported scheduler {scheduler!r}")
        iterations += 1
        bits = eng.hard_decisions(state)
        converged = eng.syndrome_ok_bits(bits)
        if early_stop and converged:
            break

    return DecodeResult(
        bits=bits,
        iterations_used=iterations,
        converged=converged,
        messages_sent=state.messages_sent,
        orders=tuple(orders),
    )
