"""Persisted scheduling policies.

A policy file is a versioned JSON container carrying the code fingerprint,
the clustering, the hyperparameters, and sparse action-value rows. Floats
are stored as C99 hex literals so save/load round-trips bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .channel import write_atomic
from .clustering import Clustering
from .mdp import Hyperparams, QTable

POLICY_FORMAT = "reldec-policy-v1"


class PolicyCompatibilityError(ValueError):
    """Raised when a policy does not match the code it is applied to."""


@dataclass
class EpisodeRecord:
    """One training episode: where it ran and how it went."""

    phase: str        # "train" | "local" | "global" | "adapt"
    meta_iteration: int
    task: int         # SNR task index k, or -1 for global/mixed phases
    episode: int
    dataset_index: int
    snr_db: float
    steps: int
    loss: float


@dataclass
class TrainingRun:
    """Provenance of a training invocation, including the loss trace."""

    scheme: str
    hp: Hyperparams
    seed: int
    meta_iterations: int
    dataset_sizes: dict
    episodes: list = field(default_factory=list)

    @property
    def loss_trace(self) -> list:
        return [rec.loss for rec in self.episodes]

    def summary(self) -> dict:
        return {
            "scheme": self.scheme,
            "seed": self.seed,
            "meta_iterations": self.meta_iterations,
            "dataset_sizes": dict(self.dataset_sizes),
            "episodes": len(self.episodes),
            "final_loss": self.episodes[-1].loss if self.episodes else None,
            "hyperparams": self.hp.to_dict(),
        }


@dataclass
class PolicyArtifact:
    """A trained scheduling policy bound to one code and clustering."""

    scheme: str
    code_fingerprint: str
    z: int
    clustering_method: str
    clusters: tuple
    hp: Hyperparams
    global_q: QTable
    local_q: dict | None = None     # task label -> QTable (M-RELDEC locals)
    provenance: dict = field(default_factory=dict)
    run: TrainingRun | None = None

    def check_compatible(self, clustering: Clustering) -> None:
        fp = clustering.graph.matrix.fingerprint
        if fp != self.code_fingerprint:
            raise PolicyCompatibilityError(
                "policy was trained for a different code "
                f"({self.code_fingerprint[:12]}... vs {fp[:12]}...)"
            )
        if self.clusters != clustering.clusters:
            raise PolicyCompatibilityError("policy clustering differs from the decoder's")

    def table_for(self, task=None) -> QTable:
        """The global table, or a stored local table by label."""
        if task is None:
            return self.global_q
        if not self.local_q or task not in self.local_q:
            raise KeyError(f"no stored local table for task {task!r}")
        return self.local_q[task]


def _encode_qtable(q: QTable) -> dict:
    rows = {}
    for (a, s), vec in q.rows_items():
        rows[f"{a}:{s}"] = [float(x).hex() for x in vec]
    return {"n_actions": q.n_actions, "rows": rows}


def _decode_qtable(blob: dict) -> QTable:
    q = QTable(int(blob["n_actions"]))
    for key, hexvals in blob["rows"].items():
        a_str, s_str = key.split(":", 1)
        row_key = (int(a_str), int(s_str))
        for col, hv in enumerate(hexvals):
            val = float.fromhex(hv)
            if val != 0.0:
                q.set_value(row_key, col, val)
            else:
                # materialize the row even for zero cells so round-trips
                # preserve the stored/default distinction cheaply
                q.set_value(row_key, col, 0.0)
    return q


def dumps_policy(artifact: PolicyArtifact) -> str:
    doc = {
        "format": POLICY_FORMAT,
        "scheme": artifact.scheme,
        "code_fingerprint": artifact.code_fingerprint,
        "z": artifact.z,
        "clustering_method": artifact.clustering_method,
        "clusters": [list(cl) for cl in artifact.clusters],
        "hyperparams": artifact.hp.to_dict(),
        "global_q": _encode_qtable(artifact.global_q),
        "local_q": (
            None
            if artifact.local_q is None
            else {str(k): _encode_qtable(v) for k, v in artifact.local_q.items()}
        ),
        "provenance": artifact.provenance,
    }
    return json.dumps(doc, sort_keys=True, indent=None, separators=(",", ":"))


def loads_policy(text: str) -> PolicyArtifact:
    doc = json.loads(text)
    if doc.get("format") != POLICY_FORMAT:
        raise ValueError(f"unrecognized policy format {doc.get('format')!r}")
    hp_kwargs = dict(doc["hyperparams"])
    return PolicyArtifact(
        scheme=doc["scheme"],
        code_fingerprint=doc["code_fingerprint"],
        z=int(doc["z"]),
        clustering_method=doc["clustering_method"],
        clusters=tuple(tuple(cl) for cl in doc["clusters"]),
        hp=Hyperparams(**hp_kwargs),
        global_q=_decode_qtable(doc["global_q"]),
        local_q=(
            None
            if doc["local_q"] is None
            else {k: _decode_qtable(v) for k, v in doc["local_q"].items()}
        ),
        provenance=doc.get("provenance", {}),
    )


def save_policy(artifact: PolicyArtifact, path) -> None:
    write_atomic(path, dumps_policy(artifact).encode("ascii"))


def load_policy(path) -> PolicyArtifact:
    with open(path, "r", encoding="ascii") as fh:
        return loads_policy(fh.read())


def write_training_log(run: TrainingRun, path) -> None:
    """CSV trace: one row per episode."""
    lines = ["phase,meta_iteration,task,episode,dataset_index,snr_db,steps,loss"]
    for rec in run.episodes:
        lines.append(
            f"{rec.phase},{rec.meta_iteration},{rec.task},{rec.episode},"
            f"{rec.dataset_index},{rec.snr_db!r},{rec.steps},{rec.loss!r}"
        )
    write_atomic(path, ("\n".join(lines) + "\n").encode("ascii"))
