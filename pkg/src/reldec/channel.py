"""BPSK-over-AWGN channel model, LLR conventions, and dataset generation.

Sign convention: channel LLRs are L = 2*y / sigma^2 with the all-zero
codeword transmitted as +1, so L >= 0 decodes to bit 0. The noise mapping
uses rate-normalized symbol energy: sigma^2 = 1 / (2 * R * 10^(EbN0/10)).

Reproducibility: every random draw comes from numpy's PCG64 generator
seeded through SeedSequence keys of the form
(master_seed, domain, snr_index, item_index), so each LLR vector has its
own stream and results never depend on generation order or worker count.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

LLR_CONVENTION = "bpsk-awgn-llr-2y-over-sigma2-v1"

# Stream-domain tags for keyed generators (kept distinct so independent
# subsystems can never collide on the same substream).
DOMAIN_NOISE = 0
DOMAIN_SHUFFLE = 1
DOMAIN_TRAIN = 2
DOMAIN_DECODE = 3
DOMAIN_LIFT = 4
DOMAIN_CAMPAIGN_NOISE = 5


def substream(master_seed: int, domain: int, *path: int) -> np.random.Generator:
    """Independent generator for (master_seed, domain, *path)."""
    return np.random.default_rng([int(master_seed), int(domain), *map(int, path)])


@dataclass(frozen=True)
class SnrGrid:
    """Strictly increasing E_b/N_0 grid in dB; one training task per point."""

    values_db: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values_db)
        if len(vals) < 1:
            raise ValueError("SNR grid needs at least one point")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError(f"SNR grid must be strictly increasing, got {vals}")
        object.__setattr__(self, "values_db", vals)

    @property
    def K(self) -> int:
        return len(self.values_db)

    def middle(self) -> float:
        return self.values_db[(self.K - 1) // 2]


def noise_variance(ebn0_db: float, rate: float) -> float:
    """AWGN noise variance for a given E_b/N_0 (dB) and code rate."""
    if not 0.0 < rate < 1.0:
        raise ValueError(f"rate must lie in (0, 1), got {rate}")
    return 1.0 / (2.0 * rate * 10.0 ** (ebn0_db / 10.0))


def llr_from_observation(y, sigma2: float):
    """Channel LLR of an observation: 2*y / sigma^2 (bit 0 <=> LLR >= 0)."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    return 2.0 * np.asarray(y, dtype=np.float64) / sigma2 if np.ndim(y) else 2.0 * y / sigma2


def transmit_all_zero(n: int, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Channel LLRs for an all-zero codeword sent over BPSK/AWGN.

    All-zero maps to the +1 symbol; by decoder/channel symmetry the
    error statistics are independent of the transmitted codeword.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    y = 1.0 + rng.normal(0.0, np.sqrt(sigma2), size=n)
    return 2.0 * y / sigma2


@dataclass(frozen=True)
class LlrDataset:
    """A batch of channel LLR vectors with their SNR labels.

    ``llrs`` has shape (count, n); ``snr_db`` holds the per-vector label.
    ``code_fingerprint`` ties the data to the code it was generated for.
    """

    llrs: np.ndarray
    snr_db: np.ndarray
    code_fingerprint: str
    seed: int
    convention: str = LLR_CONVENTION

    def __post_init__(self):
        if self.llrs.ndim != 2 or len(self.snr_db) != self.llrs.shape[0]:
            raise ValueError("llrs must be (count, n) with one label per row")
        if not np.all(np.isfinite(self.llrs)):
            raise ValueError("LLR values must be finite")

    def __len__(self) -> int:
        return self.llrs.shape[0]

    @property
    def n(self) -> int:
        return self.llrs.shape[1]

    def split_by_snr(self) -> dict:
        """Group rows into per-SNR datasets (labels ascending)."""
        out = {}
        for snr in sorted(set(self.snr_db.tolist())):
            mask = self.snr_db == snr
            out[snr] = LlrDataset(
                llrs=self.llrs[mask],
                snr_db=self.snr_db[mask],
                code_fingerprint=self.code_fingerprint,
                seed=self.seed,
                convention=self.convention,
            )
        return out

    def take(self, count: int) -> "LlrDataset":
        return LlrDataset(
            llrs=self.llrs[:count],
            snr_db=self.snr_db[:count],
            code_fingerprint=self.code_fingerprint,
            seed=self.seed,
            convention=self.convention,
        )


def generate_dataset(
    code,
    grid: SnrGrid,
    per_snr_count: int,
    mixing: str = "mixed",
    seed: int = 0,
):
    """Generate training/evaluation LLR vectors for a code over an SNR grid.

    ``mixed`` returns one dataset of K*per_snr_count vectors holding exactly
    per_snr_count vectors per SNR, deterministically shuffled; ``per_snr``
    returns one dataset per grid point. Vector (k, i) is always drawn from
    the stream keyed by (seed, DOMAIN_NOISE, k, i) regardless of mixing.
    """
    if per_snr_count < 1:
        raise ValueError("per_snr_count must be >= 1")
    if mixing not in ("mixed", "per_snr"):
        raise ValueError(f"unknown mixing mode {mixing!r}")
    n = code.n
    rate = code.rate
    blocks = []
    for k, snr in enumerate(grid.values_db):
        sigma2 = noise_variance(snr, rate)
        rows = np.empty((per_snr_count, n), dtype=np.float64)
        for i in range(per_snr_count):
            rows[i] = transmit_all_zero(n, sigma2, substream(seed, DOMAIN_NOISE, k, i))
        blocks.append((snr, rows))
    if mixing == "per_snr":
        return [
            LlrDataset(
                llrs=rows,
                snr_db=np.full(per_snr_count, snr),
                code_fingerprint=code.fingerprint,
                seed=seed,
            )
            for snr, rows in blocks
        ]
    llrs = np.concatenate([rows for _, rows in blocks], axis=0)
    labels = np.concatenate(
        [np.full(per_snr_count, snr) for snr, _ in blocks]
    )
    perm = substream(seed, DOMAIN_SHUFFLE).permutation(len(labels))
    return LlrDataset(
        llrs=llrs[perm],
        snr_db=labels[perm],
        code_fingerprint=code.fingerprint,
        seed=seed,
    )


def write_atomic(path, data: bytes) -> None:
    """Write bytes so the target never exists in a partial state."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_dataset(dataset: LlrDataset, path) -> None:
    """Persist as .npz with a JSON metadata record."""
    import io

    meta = json.dumps(
        {
            "format": "reldec-dataset-v1",
            "code_fingerprint": dataset.code_fingerprint,
            "seed": dataset.seed,
            "convention": dataset.convention,
            "snr_grid": sorted(set(dataset.snr_db.tolist())),
        },
        sort_keys=True,
    )
    buf = io.BytesIO()
    np.savez(buf, llrs=dataset.llrs, snr_db=dataset.snr_db, meta=np.array(meta))
    write_atomic(path, buf.getvalue())


def load_dataset(path) -> LlrDataset:
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != "reldec-dataset-v1":
            raise ValueError(f"unrecognized dataset format in {path}")
        return LlrDataset(
            llrs=data["llrs"],
            snr_db=data["snr_db"],
            code_fingerprint=meta["code_fingerprint"],
            seed=meta["seed"],
            convention=meta["convention"],
        )
