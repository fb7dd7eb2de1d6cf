"""Belief-propagation message passing with cluster-sequential scheduling.

Messages live on edges in the canonical (check, variable) order of the
Tanner graph. Check updates use the exact tanh rule; variable updates sum
the channel LLR with extrinsic check messages. All messages are clipped
to +/-M_CLIP = 30 LLR units: tanh(15) already rounds to within 2e-13 of
1 in double precision, so clipping preserves behavior while keeping
atanh finite. Posteriors are never clipped; the identity
posterior[v] = channel[v] + sum of incoming check messages holds exactly
after every variable-node touch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clustering import Clustering
from .codes import TannerGraph

M_CLIP = 30.0


def cn_update(incoming) -> float:
    """Check-node tanh rule over the extrinsic inputs (target edge excluded).

    An empty input (degree-1 check) saturates to +M_CLIP.
    """
    vals = np.asarray(incoming, dtype=np.float64)
    if vals.size == 0:
        return M_CLIP
    prod = float(np.prod(np.tanh(0.5 * vals)))
    if abs(prod) >= 1.0:
        return math.copysign(M_CLIP, prod)
    return float(np.clip(2.0 * np.arctanh(prod), -M_CLIP, M_CLIP))


def vn_update(channel_llr: float, incoming_extrinsic) -> float:
    """Variable-node update: channel LLR plus extrinsic check messages."""
    total = float(channel_llr) + float(np.sum(incoming_extrinsic))
    return float(np.clip(total, -M_CLIP, M_CLIP))


def hard_decision(posterior: float) -> int:
    """Ties (exactly zero) decode to 0."""
    return 0 if posterior >= 0 else 1


@dataclass(frozen=True)
class ClusterOutput:
    """Hard-decision bits of a cluster's neighbor VNs and their state index.

    ``state_index`` is the MSB-first binary value of ``bits`` (bit j in
    ascending neighbor order carries weight 2**(l_a - 1 - j)).
    """

    bits: np.ndarray
    state_index: int


class MessageState:
    """Edge-indexed decoder state for one frame; single-owner mutable."""

    __slots__ = ("c2v", "v2c", "posterior", "channel", "messages_sent")

    def __init__(self, c2v, v2c, posterior, channel):
        self.c2v = c2v
        self.v2c = v2c
        self.posterior = posterior
        self.channel = channel
        self.messages_sent = 0


def init_messages(channel, graph: TannerGraph) -> MessageState:
    """Fresh state: zero check messages, variable messages preloaded with
    the (clipped) channel LLRs, posterior equal to the channel."""
    channel = np.asarray(channel, dtype=np.float64)
    if channel.shape != (graph.n,):
        raise ValueError(
            f"channel length {channel.shape} does not match n={graph.n}"
        )
    c2v = np.zeros(graph.num_edges, dtype=np.float64)
    v2c = np.clip(channel[graph.edge_vn], -M_CLIP, M_CLIP)
    return MessageState(c2v=c2v, v2c=v2c, posterior=channel.copy(), channel=channel)


def _pad_ids(id_lists, pad_value: int):
    """Stack variable-length index lists into a padded matrix plus mask."""
    if len(id_lists) == 0:
        return np.zeros((0, 1), dtype=np.int64), np.zeros((0, 1), dtype=bool)
    width = max(1, max(len(x) for x in id_lists))
    idx = np.full((len(id_lists), width), pad_value, dtype=np.int64)
    mask = np.zeros((len(id_lists), width), dtype=bool)
    for i, ids in enumerate(id_lists):
        idx[i, : len(ids)] = ids
        mask[i, : len(ids)] = True
    return idx, mask


def _leave_one_out_product(t: np.ndarray) -> np.ndarray:
    """Row-wise products excluding each position (exact, division-free)."""
    left = np.ones_like(t)
    right = np.ones_like(t)
    if t.shape[1] > 1:
        np.cumprod(t[:, :-1], axis=1, out=left[:, 1:])
        rev = np.cumprod(t[:, :0:-1], axis=1)
        right[:, :-1] = rev[:, ::-1]
    return left * right


class _NodeBlock:
    """Padded edge-index views for a set of CNs or VNs."""

    __slots__ = ("idx", "mask", "flat")

    def __init__(self, id_lists):
        self.idx, self.mask = _pad_ids(id_lists, pad_value=0)
        self.flat = self.idx[self.mask]


class ClusterEngine:
    """Vectorized kernels bound to one graph + clustering.

    Owns the padded index structures; holds no per-frame state, so a
    single engine can serve any number of frames or workers that each own
    their MessageState.
    """

    def __init__(self, clustering: Clustering):
        self.clustering = clustering
        self.graph = clustering.graph
        g = self.graph
        self._cn_blocks = []
        self._vn_blocks = []
        self._vn_ids = []
        self._state_weights = []
        for a in range(clustering.n_clusters):
            cns = clustering.clusters[a]
            vns = clustering.cluster_vns[a]
            self._cn_blocks.append(_NodeBlock([g.cn_edge_ids[c] for c in cns]))
            self._vn_blocks.append(_NodeBlock([g.vn_edge_ids[v] for v in vns]))
            self._vn_ids.append(np.asarray(vns, dtype=np.int64))
            l_a = len(vns)
            if l_a <= 62:
                self._state_weights.append(
                    (1 << np.arange(l_a - 1, -1, -1, dtype=np.int64))
                )
            else:
                self._state_weights.append(None)
        self._all_cn = _NodeBlock([g.cn_edge_ids[c] for c in range(g.m)])
        self._all_vn = _NodeBlock([g.vn_edge_ids[v] for v in range(g.n)])
        # For syndrome checks: VN ids per check, padded.
        self._cn_vn_idx, self._cn_vn_mask = _pad_ids(
            [g.cn_neighbors[c] for c in range(g.m)], pad_value=0
        )
        self._msg_per_cluster = clustering.cluster_cn_degree_sum

    @property
    def n_clusters(self) -> int:
        return self.clustering.n_clusters

    def init_messages(self, channel) -> MessageState:
        return init_messages(channel, self.graph)

    # -- message passing ------------------------------------------------

    def _cn_phase(self, state: MessageState, block: _NodeBlock) -> None:
        t = np.ones(block.idx.shape, dtype=np.float64)
        t[block.mask] = np.tanh(0.5 * state.v2c[block.flat])
        loo = _leave_one_out_product(t)
        with np.errstate(divide="ignore"):
            msgs = 2.0 * np.arctanh(loo)
        np.clip(msgs, -M_CLIP, M_CLIP, out=msgs)
        state.c2v[block.flat] = msgs[block.mask]

    def _vn_phase(self, state: MessageState, block: _NodeBlock, vn_ids) -> np.ndarray:
        incoming = np.where(block.mask, state.c2v[block.idx], 0.0)
        post = state.channel[vn_ids] + incoming.sum(axis=1)
        state.posterior[vn_ids] = post
        ext = post[:, None] - incoming
        state.v2c[block.flat] = np.clip(ext[block.mask], -M_CLIP, M_CLIP)
        return post

    def _state_index(self, a: int, bits: np.ndarray) -> int:
        weights = self._state_weights[a]
        if weights is not None:
            return int(bits.astype(np.int64) @ weights)
        packed = np.packbits(bits.astype(np.uint8))
        value = int.from_bytes(packed.tobytes(), "big")
        return value >> (8 * len(packed) - len(bits))

    def flood_cluster(self, state: MessageState, a: int) -> ClusterOutput:
        """One localized flooding step of cluster a.

        All the cluster's checks fire from the current variable messages,
        then every neighbor VN refreshes its posterior and all of its
        outgoing messages. Increments the CN-to-VN message counter by the
        cluster's total check degree.
        """
        self._cn_phase(state, self._cn_blocks[a])
        post = self._vn_phase(state, self._vn_blocks[a], self._vn_ids[a])
        state.messages_sent += int(self._msg_per_cluster[a])
        bits = (post < 0).astype(np.uint8)
        return ClusterOutput(bits=bits, state_index=self._state_index(a, bits))

    def flood_all(self, state: MessageState) -> None:
        """One classical flooding iteration: every check fires from the same
        variable-message snapshot, then every variable node updates."""
        self._cn_phase(state, self._all_cn)
        self._vn_phase(state, self._all_vn, np.arange(self.graph.n))
        state.messages_sent += self.graph.num_edges

    # -- observations ----------------------------------------------------

    def cluster_bits(self, state: MessageState, a: int) -> np.ndarray:
        return (state.posterior[self._vn_ids[a]] < 0).astype(np.uint8)

    def cluster_state(self, state: MessageState, a: int) -> int:
        return self._state_index(a, self.cluster_bits(state, a))

    def all_cluster_states(self, state: MessageState) -> list:
        return [self.cluster_state(state, a) for a in range(self.n_clusters)]

    def hard_decisions(self, state: MessageState) -> np.ndarray:
        return (state.posterior < 0).astype(np.uint8)

    def syndrome_ok_bits(self, bits: np.ndarray) -> bool:
        sums = np.where(self._cn_vn_mask, bits[self._cn_vn_idx], 0).sum(axis=1)
        return not np.any(sums & 1)

    def syndrome_ok(self, state: MessageState) -> bool:
        return self.syndrome_ok_bits(self.hard_decisions(state))


def get_engine(clustering: Clustering) -> ClusterEngine:
    """Engine cached on the clustering (same lifetime, built once)."""
    eng = getattr(clustering, "_engine", None)
    if eng is None:
        eng = ClusterEngine(clustering)
        object.__setattr__(clustering, "_engine", eng)
    return eng


def flood_cluster(state: MessageState, a: int, clustering: Clustering) -> ClusterOutput:
    return get_engine(clustering).flood_cluster(state, a)


def syndrome_ok(bits, matrix) -> bool:
    """H @ bits parity check over GF(2) straight from the sparse entries."""
    bits = np.asarray(bits)
    if bits.shape != (matrix.n,):
        raise ValueError(f"bits length {bits.shape} does not match n={matrix.n}")
    parities = np.zeros(matrix.m, dtype=np.int64)
    np.add.at(parities, matrix.rows, bits[matrix.cols].astype(np.int64))
    return not np.any(parities & 1)
