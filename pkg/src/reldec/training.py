"""Training procedures for learned cluster scheduling.

Three schemes share one episode primitive:

* ``train_reldec`` runs plain tabular Q-learning over a mixed-SNR dataset,
  every episode exactly ``ell_max`` steps.
* ``train_am_reldec`` alternates per-SNR local adaptation (seeded from the
  current global table, with stride-checked loss early exit) and a global
  phase that restarts from the average of the local tables. Each
  meta-iteration consumes the next chunk of the datasets.
* ``train_m_reldec`` learns the global table once, then adapts one local
  table per SNR task, each re-seeded from the same global snapshot.

An episode floods one cluster per learning step: the scheduled cluster is
picked epsilon-greedily by its own-state action-value, the reward is the
fraction of its neighbor bits that match the transmitted word, and the
table cell (cluster row, cluster column) moves toward the bootstrap
target. Cluster re-selection within an episode is allowed; the
without-replacement rule applies only at inference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bp import ClusterEngine, get_engine
from .channel import DOMAIN_TRAIN, LlrDataset, substream
from .clustering import Clustering
from .mdp import (
    Hyperparams,
    MdpInstance,
    QTable,
    q_update,
    reward,
    select_cluster_epsilon_greedy,
    td_loss,
)
from .policy import EpisodeRecord, PolicyArtifact, TrainingRun


@dataclass
class _AdaptPhase:
    """Accumulated batch and early-exit bookkeeping for one adaptation."""

    batch: list = field(default_factory=list)

    def loss(self, q: QTable, beta: float) -> float:
        return td_loss(self.batch, q, beta) if self.batch else math.nan


def _reference_bits(clustering: Clustering, transmitted) -> list:
    """Per cluster, the transmitted bits its neighborhood reconstructs."""
    if transmitted is None:
        return [np.zeros(len(vns), dtype=np.uint8) for vns in clustering.cluster_vns]
    word = np.asarray(transmitted, dtype=np.uint8)
    if word.shape != (clustering.graph.n,):
        raise ValueError("transmitted word length does not match the code")
    return [word[vns] for vns in clustering.cluster_vns]


def _check_dataset(clustering: Clustering, dataset: LlrDataset) -> None:
    fp = clustering.graph.matrix.fingerprint
    if dataset.code_fingerprint != fp:
        raise ValueError("dataset was generated for a different code")
    if dataset.n != clustering.graph.n:
        raise ValueError(
            f"dataset block length {dataset.n} != code length {clustering.graph.n}"
        )


def _episode(
    eng: ClusterEngine,
    q: QTable,
    llr: np.ndarray,
    hp: Hyperparams,
    rng: np.random.Generator,
    ref_bits: list,
    adapt: _AdaptPhase | None = None,
):
    """One learning episode on a single channel realization.

    Without ``adapt`` the episode runs exactly ``ell_max`` steps. With it,
    the normalized loss over the accumulated adaptation batch is
    recomputed every ``x_loss_stride`` new transitions and the episode
    ends early once it reaches ``loss_min``.
    """
    state = eng.init_messages(llr)
    states = eng.all_cluster_states(state)
    instances: list[MdpInstance] = []
    loss_guard = 1.0
    for _ in range(hp.ell_max):
        if adapt is not None and not loss_guard > hp.loss_min:
            break
        a = select_cluster_epsilon_greedy(q, states, hp.epsilon, rng)
        s_key = (a, states[a])
        out = eng.flood_cluster(state, a)
        s_next = (a, out.state_index)
        r = reward(ref_bits[a], out)
        q_update(q, s_key, a, r, s_next, hp)
        inst = MdpInstance(s=s_key, a=a, r=r, s_next=s_next)
        instances.append(inst)
        states[a] = out.state_index
        if adapt is not None:
            adapt.batch.append(inst)
            if len(instances) % hp.x_loss_stride == 0:
                loss_guard = adapt.loss(q, hp.beta)
    return instances


def train_reldec(
    clustering: Clustering,
    dataset: LlrDataset,
    hp: Hyperparams,
    seed: int = 0,
    q0: QTable | None = None,
    transmitted=None,
) -> PolicyArtifact:
    """Plain Q-learning over the dataset; the table persists across episodes."""
    _check_dataset(clustering, dataset)
    eng = get_engine(clustering)
    rng = substream(seed, DOMAIN_TRAIN)
    q = q0.copy() if q0 is not None else QTable(clustering.n_clusters)
    ref_bits = _reference_bits(clustering, transmitted)
    run = TrainingRun(
        scheme="reldec",
        hp=hp,
        seed=seed,
        meta_iterations=1,
        dataset_sizes={"train": len(dataset)},
    )
    for j in range(len(dataset)):
        instances = _episode(eng, q, dataset.llrs[j], hp, rng, ref_bits)
        run.episodes.append(
            EpisodeRecord(
                phase="train",
                meta_iteration=0,
                task=-1,
                episode=len(run.episodes),
                dataset_index=j,
                snr_db=float(dataset.snr_db[j]),
                steps=len(instances),
                loss=td_loss(instances, q, hp.beta) if instances else math.nan,
            )
        )
    return _make_artifact("reldec", clustering, hp, q, None, run)


def _check_local_datasets(clustering: Clustering, local_datasets) -> list:
    """Labels of the per-task datasets (None for an empty task)."""
    labels = []
    for k, ds in enumerate(local_datasets):
        _check_dataset(clustering, ds)
        snrs = set(ds.snr_db.tolist())
        if len(ds) == 0:
            labels.append(None)
            continue
        if len(snrs) != 1:
            raise ValueError("each local dataset must hold a single SNR")
        labels.append(snrs.pop())
    real = [x for x in labels if x is not None]
    if len(set(real)) != len(real):
        raise ValueError("local datasets must have pairwise distinct SNRs")
    return labels


def _chunk_indices(size: int, t: int, per_meta: int) -> range:
    """Indices of meta-iteration t's slice (wrapping past the end)."""
    start = (t * per_meta) % size
    return range(start, start + per_meta)


def train_am_reldec(
    clustering: Clustering,
    global_dataset: LlrDataset,
    local_datasets,
    hp: Hyperparams,
    meta_iterations: int = 1,
    seed: int = 0,
    transmitted=None,
) -> PolicyArtifact:
    """Alternating local/global policy optimization.

    Per meta-iteration: (i) for every SNR task, adapt a working table
    seeded from the current global table over the task's next dataset
    chunk, with loss-threshold early exit; (ii) reset the global table to
    the average of the K adapted tables and run fixed-length episodes over
    the global dataset's next chunk. Returns the final global table,
    intended as the starting point for online adaptation.
    """
    if meta_iterations < 1:
        raise ValueError("meta_iterations must be >= 1")
    _check_dataset(clustering, global_dataset)
    labels = _check_local_datasets(clustering, local_datasets)
    if len(local_datasets) != hp.K:
        raise ValueError(
            f"hp.K={hp.K} but {len(local_datasets)} local datasets supplied"
        )
    eng = get_engine(clustering)
    rng = substream(seed, DOMAIN_TRAIN)
    ref_bits = _reference_bits(clustering, transmitted)
    q_global = QTable(clustering.n_clusters)
    per_meta_global = max(1, len(global_dataset) // meta_iterations)
    per_meta_local = [max(1, len(ds) // meta_iterations) for ds in local_datasets]
    run = TrainingRun(
        scheme="am_reldec",
        hp=hp,
        seed=seed,
        meta_iterations=meta_iterations,
        dataset_sizes={
            "global": len(global_dataset),
            "local": [len(ds) for ds in local_datasets],
        },
    )
    for t in range(meta_iterations):
        local_tables = []
        for k, ds in enumerate(local_datasets):
            q_local = q_global.copy()
            phase = _AdaptPhase()
            for j in (() if len(ds) == 0 else _chunk_indices(len(ds), t, per_meta_local[k])):
                j = j % len(ds)
                instances = _episode(
                    eng, q_local, ds.llrs[j], hp, rng, ref_bits, adapt=phase
                )
                run.episodes.append(
                    EpisodeRecord(
                        phase="local",
                        meta_iteration=t,
                        task=k,
                        episode=len(run.episodes),
                        dataset_index=j,
                        snr_db=labels[k],
                        steps=len(instances),
                        loss=phase.loss(q_local, hp.beta),
                    )
                )
            local_tables.append(q_local)
        q_global = QTable.mean(local_tables)
        for j in _chunk_indices(len(global_dataset), t, per_meta_global):
            j = j % len(global_dataset)
            instances = _episode(eng, q_global, global_dataset.llrs[j], hp, rng, ref_bits)
            run.episodes.append(
                EpisodeRecord(
                    phase="global",
                    meta_iteration=t,
                    task=-1,
                    episode=len(run.episodes),
                    dataset_index=j,
                    snr_db=float(global_dataset.snr_db[j]),
                    steps=len(instances),
                    loss=td_loss(instances, q_global, hp.beta) if instances else math.nan,
                )
            )
    return _make_artifact("am_reldec", clustering, hp, q_global, None, run)


def adapt_online(
    policy: PolicyArtifact,
    clustering: Clustering,
    adapt_dataset: LlrDataset | None,
    hp: Hyperparams | None = None,
    seed: int = 0,
    transmitted=None,
) -> PolicyArtifact:
    """Derive a task-specific policy from a trained global policy.

    The working table starts as a copy of the global table and is adapted
    over the (typically small) dataset with the same early-exit rule used
    during meta-training. An empty dataset returns the global table
    unchanged.
    """
    hp = hp or policy.hp
    policy.check_compatible(clustering)
    eng = get_engine(clustering)
    rng = substream(seed, DOMAIN_TRAIN)
    ref_bits = _reference_bits(clustering, transmitted)
    q_local = policy.global_q.copy()
    run = TrainingRun(
        scheme=policy.scheme,
        hp=hp,
        seed=seed,
        meta_iterations=1,
        dataset_sizes={"adapt": 0 if adapt_dataset is None else len(adapt_dataset)},
    )
    if adapt_dataset is not None and len(adapt_dataset) > 0:
        _check_dataset(clustering, adapt_dataset)
        phase = _AdaptPhase()
        for j in range(len(adapt_dataset)):
            instances = _episode(
                eng, q_local, adapt_dataset.llrs[j], hp, rng, ref_bits, adapt=phase
            )
            run.episodes.append(
                EpisodeRecord(
                    phase="adapt",
                    meta_iteration=0,
                    task=-1,
                    episode=len(run.episodes),
                    dataset_index=j,
                    snr_db=float(adapt_dataset.snr_db[j]),
                    steps=len(instances),
                    loss=phase.loss(q_local, hp.beta),
                )
            )
    art = _make_artifact(policy.scheme, clustering, hp, q_local, None, run)
    art.provenance["adapted_from"] = policy.code_fingerprint[:12]
    art.provenance["adapt_size"] = run.dataset_sizes["adapt"]
    return art


def train_m_reldec(
    clustering: Clustering,
    global_dataset: LlrDataset,
    local_datasets,
    hp: Hyperparams,
    seed: int = 0,
    transmitted=None,
) -> PolicyArtifact:
    """One global pass, then independent per-SNR adaptation.

    Every local table starts from the same stored global snapshot; the
    artifact keeps the global table plus all K locals (keyed by SNR).
    """
    _check_dataset(clustering, global_dataset)
    labels = _check_local_datasets(clustering, local_datasets)
    if len(local_datasets) != hp.K:
        raise ValueError(
            f"hp.K={hp.K} but {len(local_datasets)} local datasets supplied"
        )
    eng = get_engine(clustering)
    rng = substream(seed, DOMAIN_TRAIN)
    ref_bits = _reference_bits(clustering, transmitted)
    q_global = QTable(clustering.n_clusters)
    run = TrainingRun(
        scheme="m_reldec",
        hp=hp,
        seed=seed,
        meta_iterations=1,
        dataset_sizes={
            "global": len(global_dataset),
            "local": [len(ds) for ds in local_datasets],
        },
    )
    for j in range(len(global_dataset)):
        instances = _episode(eng, q_global, global_dataset.llrs[j], hp, rng, ref_bits)
        run.episodes.append(
            EpisodeRecord(
                phase="global",
                meta_iteration=0,
                task=-1,
                episode=len(run.episodes),
                dataset_index=j,
                snr_db=float(global_dataset.snr_db[j]),
                steps=len(instances),
                loss=td_loss(instances, q_global, hp.beta) if instances else math.nan,
            )
        )
    snapshot = q_global.copy()
    locals_q = {}
    for k, ds in enumerate(local_datasets):
        q_local = snapshot.copy()
        phase = _AdaptPhase()
        for j in range(len(ds)):
            instances = _episode(eng, q_local, ds.llrs[j], hp, rng, ref_bits, adapt=phase)
            run.episodes.append(
                EpisodeRecord(
                    phase="local",
                    meta_iteration=0,
                    task=k,
                    episode=len(run.episodes),
                    dataset_index=j,
                    snr_db=labels[k],
                    steps=len(instances),
                    loss=phase.loss(q_local, hp.beta),
                )
            )
        locals_q[str(labels[k]) if labels[k] is not None else f"task{k}"] = q_local
    return _make_artifact("m_reldec", clustering, hp, q_global, locals_q, run)


def _make_artifact(
    scheme: str,
    clustering: Clustering,
    hp: Hyperparams,
    q_global: QTable,
    local_q: dict | None,
    run: TrainingRun,
) -> PolicyArtifact:
    return PolicyArtifact(
        scheme=scheme,
        code_fingerprint=clustering.graph.matrix.fingerprint,
        z=clustering.z,
        clustering_method=clustering.method,
        clusters=clustering.clusters,
        hp=hp,
        global_q=q_global,
        local_q=local_q,
        provenance=run.summary(),
        run=run,
    )
