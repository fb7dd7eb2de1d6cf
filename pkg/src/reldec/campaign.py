"""Monte Carlo BER/FER/message-count campaigns.

All-zero codewords are transmitted over BPSK/AWGN at each grid SNR and
decoded until a frame-error quota or a frame cap is hit. Frame (k, i)
always draws its noise from the stream keyed by
(master_seed, DOMAIN_CAMPAIGN_NOISE, k, i) and its decoder randomness
from (master_seed, DOMAIN_DECODE, k, i), so two campaigns with the same
master seed see identical noise regardless of scheduler, worker count,
or execution order; paired scheduler comparisons fall out for free.

Frames are simulated in fixed-size chunks and the stopping rule is
evaluated on cumulative counts in chunk-index order, which makes the set
of simulated frames (and hence every reported number) independent of the
number of workers. Aggregation uses integer sums only.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bp import get_engine
from .channel import (
    DOMAIN_CAMPAIGN_NOISE,
    DOMAIN_DECODE,
    SnrGrid,
    noise_variance,
    substream,
    transmit_all_zero,
    write_atomic,
)
from .clustering import Clustering
from .decoder import decode

CSV_SCHEMA = "reldec-campaign-v1"


@dataclass(frozen=True)
class StopRule:
    """Stop an SNR point after collecting min_frame_errors (None: never)
    or after max_frames, whichever comes first."""

    min_frame_errors: int | None = 100
    max_frames: int = 100_000

    def __post_init__(self):
        if self.max_frames < 1:
            raise ValueError("max_frames must be >= 1")
        if self.min_frame_errors is not None and self.min_frame_errors < 1:
            raise ValueError("min_frame_errors must be >= 1 or None")


@dataclass
class SnrRow:
    snr_db: float
    frames: int
    bit_errors: int
    frame_errors: int
    ber: float
    fer: float
    ber_hw95: float
    fer_hw95: float
    avg_messages: float
    messages_hw95: float
    avg_messages_error_frames: float
    avg_iterations: float


@dataclass
class CampaignResult:
    scheduler: str
    code_fingerprint: str
    master_seed: int
    i_max: int
    early_stop: bool
    rows: list = field(default_factory=list)
    per_frame: dict = field(default_factory=dict)


def _simulate_frames(clustering, scheduler, snr_idx, sigma2, lo, hi, params):
    """Per-frame (bit_errors, frame_error, messages, iterations) arrays."""
    eng = get_engine(clustering)
    n = clustering.graph.n
    master_seed, i_max, early_stop, precheck = params
    count = hi - lo
    bit_errors = np.zeros(count, dtype=np.int64)
    frame_error = np.zeros(count, dtype=np.int64)
    messages = np.zeros(count, dtype=np.int64)
    iterations = np.zeros(count, dtype=np.int64)
    for idx, i in enumerate(range(lo, hi)):
        llr = transmit_all_zero(
            n, sigma2, substream(master_seed, DOMAIN_CAMPAIGN_NOISE, snr_idx, i)
        )
        res = decode(
            llr,
            clustering,
            scheduler,
            i_max=i_max,
            rng=substream(master_seed, DOMAIN_DECODE, snr_idx, i),
            early_stop=early_stop,
            syndrome_precheck=precheck,
            engine=eng,
        )
        errs = int(res.bits.sum())
        bit_errors[idx] = errs
        frame_error[idx] = 1 if errs > 0 else 0
        messages[idx] = res.messages_sent
        iterations[idx] = res.iterations_used
    return bit_errors, frame_error, messages, iterations


_WORKER_CTX = None


def _init_worker(clustering, scheduler, params):
    global _WORKER_CTX
    _WORKER_CTX = (clustering, scheduler, params)
    get_engine(clustering)  # build once per process


def _worker_task(args):
    snr_idx, sigma2, lo, hi = args
    clustering, scheduler, params = _WORKER_CTX
    return _simulate_frames(clustering, scheduler, snr_idx, sigma2, lo, hi, params)


def _finalize_row(snr_db, n, chunks) -> SnrRow:
    bit_errors = np.concatenate([c[0] for c in chunks])
    frame_error = np.concatenate([c[1] for c in chunks])
    messages = np.concatenate([c[2] for c in chunks])
    iterations = np.concatenate([c[3] for c in chunks])
    frames = len(bit_errors)
    total_bits = frames * n
    ber = bit_errors.sum() / total_bits
    fer = frame_error.sum() / frames

    def half_width(values: np.ndarray) -> float:
        if len(values) < 2:
            return math.nan
        return 1.96 * values.std(ddof=1) / math.sqrt(len(values))

    err_mask = frame_error > 0
    return SnrRow(
        snr_db=float(snr_db),
        frames=frames,
        bit_errors=int(bit_errors.sum()),
        frame_errors=int(frame_error.sum()),
        ber=float(ber),
        fer=float(fer),
        ber_hw95=float(half_width(bit_errors / n)),
        fer_hw95=float(1.96 * math.sqrt(max(fer * (1 - fer), 0.0) / frames)),
        avg_messages=float(messages.mean()),
        messages_hw95=float(half_width(messages.astype(np.float64))),
        avg_messages_error_frames=(
            float(messages[err_mask].mean()) if err_mask.any() else math.nan
        ),
        avg_iterations=float(iterations.mean()),
    )


def run_campaign(
    clustering: Clustering,
    scheduler,
    grid: SnrGrid,
    *,
    i_max: int,
    master_seed: int,
    stop: StopRule = StopRule(),
    early_stop: bool = True,
    syndrome_precheck: bool = False,
    workers: int = 1,
    chunk_frames: int = 256,
    keep_frames: bool = False,
) -> CampaignResult:
    """Simulate every grid SNR and aggregate BER/FER/message statistics."""
    if chunk_frames < 1:
        raise ValueError("chunk_frames must be >= 1")
    rate = clustering.graph.matrix.rate
    n = clustering.graph.n
    params = (master_seed, i_max, early_stop, syndrome_precheck)
    result = CampaignResult(
        scheduler=scheduler.describe(),
        code_fingerprint=clustering.graph.matrix.fingerprint,
        master_seed=master_seed,
        i_max=i_max,
        early_stop=early_stop,
    )

    pool = None
    if workers > 1:
        pool = ProcessPoolExecutor(
            max_workers=workers,
            initializer=_init_worker,
            initargs=(clustering, scheduler, params),
        )
    try:
        for snr_idx, snr_db in enumerate(grid.values_db):
            sigma2 = noise_variance(snr_db, rate)
            n_chunks = math.ceil(stop.max_frames / chunk_frames)
            bounds = [
                (t * chunk_frames, min((t + 1) * chunk_frames, stop.max_frames))
                for t in range(n_chunks)
            ]
            chunks = []
            frame_errors = 0

            def want_more(done_chunks: int) -> bool:
                if done_chunks >= len(bounds):
                    return False
                if stop.min_frame_errors is None:
                    return True
                return frame_errors < stop.min_frame_errors

            if pool is None:
                t = 0
                while want_more(t):
                    lo, hi = bounds[t]
                    chunk = _simulate_frames(
                        clustering, scheduler, snr_idx, sigma2, lo, hi, params
                    )
                    chunks.append(chunk)
                    frame_errors += int(chunk[1].sum())
                    t += 1
            else:
                # Speculative in-flight chunks; results consumed strictly in
                # index order so the stop decision ignores worker count.
                inflight = {}
                next_submit = 0
                next_consume = 0
                depth = 2 * workers
                while want_more(next_consume):
                    while next_submit < len(bounds) and len(inflight) < depth:
                        lo, hi = bounds[next_submit]
                        inflight[next_submit] = pool.submit(
                            _worker_task, (snr_idx, sigma2, lo, hi)
                        )
                        next_submit += 1
                    chunk = inflight.pop(next_consume).result()
                    chunks.append(chunk)
                    frame_errors += int(chunk[1].sum())
                    next_consume += 1
                for fut in inflight.values():
                    fut.cancel()
                inflight.clear()

            result.rows.append(_finalize_row(snr_db, n, chunks))
            if keep_frames:
                result.per_frame[float(snr_db)] = {
                    "bit_errors": np.concatenate([c[0] for c in chunks]),
                    "frame_error": np.concatenate([c[1] for c in chunks]),
                    "messages": np.concatenate([c[2] for c in chunks]),
                    "iterations": np.concatenate([c[3] for c in chunks]),
                }
    finally:
        if pool is not None:
            pool.shutdown(wait=False, cancel_futures=True)
    return result


CSV_COLUMNS = (
    "snr_db,frames,bit_errors,frame_errors,ber,fer,ber_hw95,fer_hw95,"
    "avg_messages,messages_hw95,avg_messages_error_frames,avg_iterations"
)


def campaign_to_csv(result: CampaignResult) -> str:
    lines = [
        f"# schema={CSV_SCHEMA}",
        f"# scheduler={result.scheduler}",
        f"# code_fingerprint={result.code_fingerprint}",
        f"# master_seed={result.master_seed}",
        f"# i_max={result.i_max}",
        f"# early_stop={result.early_stop}",
        CSV_COLUMNS,
    ]
    for r in result.rows:
        lines.append(
            f"{r.snr_db!r},{r.frames},{r.bit_errors},{r.frame_errors},"
            f"{r.ber!r},{r.fer!r},{r.ber_hw95!r},{r.fer_hw95!r},"
            f"{r.avg_messages!r},{r.messages_hw95!r},"
            f"{r.avg_messages_error_frames!r},{r.avg_iterations!r}"
        )
    return "\n".join(lines) + "\n"


def write_campaign_csv(result: CampaignResult, path) -> None:
    write_atomic(path, campaign_to_csv(result).encode("ascii"))
