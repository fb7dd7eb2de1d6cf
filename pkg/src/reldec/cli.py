"""Command-line interface.

Every run that produces files also writes ``<out>.manifest.json`` holding
the resolved options, seeds, code fingerprint, and package version; two
runs with identical manifests produce byte-identical outputs. A
``--config FILE`` of ``key = value`` lines (long option names) can stand
in for any flag; explicit flags win. Output files are written atomically,
so an aborted run never leaves a partial file behind.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .campaign import StopRule, run_campaign, write_campaign_csv
from .channel import (
    LlrDataset,
    SnrGrid,
    generate_dataset,
    load_dataset,
    save_dataset,
    substream,
    write_atomic,
    DOMAIN_DECODE,
)
from .clustering import make_clusters, Clustering
from .codes import (
    ParityCheckMatrix,
    TannerGraph,
    build_ab_code,
    lift_code,
    parse_lift_spec,
    read_alist_file,
    write_alist_file,
)
from .decoder import FloodingScheduler, PolicyScheduler, RandomScheduler, decode
from .mdp import Hyperparams
from .policy import load_policy, save_policy, write_training_log
from .training import adapt_online, train_am_reldec, train_m_reldec, train_reldec


def _parse_snrs(text: str) -> SnrGrid:
    return SnrGrid(tuple(float(x) for x in text.split(",") if x.strip()))


def _load_config(path) -> list:
    """Turn a key = value config file into CLI tokens."""
    tokens: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            flag = "--" + key.replace("_", "-")
            if value.lower() in ("true", "false"):
                if value.lower() == "true":
                    tokens.append(flag)
            else:
                tokens.extend([flag, value])
    return tokens


def _merge_config(argv: list) -> list:
    """Splice config-file tokens after the subcommand; later flags win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise ValueError("--config needs a file path")
    path = argv[idx + 1]
    rest = argv[:idx] + argv[idx + 2:]
    if not rest:
        raise ValueError("--config requires a subcommand")
    return [rest[0]] + _load_config(path) + rest[1:]


def _write_manifest(out_path: str, command: str, options: dict,
                    code_fingerprint: str | None) -> None:
    doc = {
        "schema": "reldec-manifest-v1",
        "command": command,
        "package_version": __version__,
        "options": {k: v for k, v in sorted(options.items())},
        "code_fingerprint": code_fingerprint,
    }
    write_atomic(out_path + ".manifest.json",
                 json.dumps(doc, sort_keys=True).encode("ascii"))


def _options_dict(args: argparse.Namespace) -> dict:
    skip = {"func", "command"}
    out = {}
    for key, val in vars(args).items():
        if key in skip:
            continue
        if isinstance(val, (list, tuple)):
            val = list(val)
        out[key] = val
    return out


def _hyperparams(args) -> Hyperparams:
    return Hyperparams(
        alpha=args.alpha,
        beta=args.beta,
        epsilon=args.epsilon,
        ell_max=args.ell_max,
        loss_min=args.loss_min,
        x_loss_stride=args.stride,
        K=getattr(args, "k_tasks", 5),
        i_max=args.imax,
    )


def _add_hp_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=0.1, help="learning rate")
    p.add_argument("--beta", type=float, default=0.9, help="reward discount")
    p.add_argument("--epsilon", type=float, default=0.6, help="exploration probability")
    p.add_argument("--ell-max", type=int, default=50, help="steps per learning episode")
    p.add_argument("--loss-min", type=float, default=1e-4,
                   help="adaptation loss threshold (negative disables early exit)")
    p.add_argument("--stride", type=int, default=10,
                   help="steps between adaptation loss recomputations")
    p.add_argument("--imax", type=int, default=50, help="max decoder iterations")


def _add_clustering_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--z", type=int, default=1, help="check nodes per cluster")
    p.add_argument("--clustering", choices=["sequential", "cycle-max"],
                   default="sequential")


def _make_clustering(code: ParityCheckMatrix, args) -> Clustering:
    graph = TannerGraph.from_matrix(code)
    method = args.clustering.replace("-", "_")
    return make_clusters(graph, args.z, method=method, rng_seed=args.seed)


def _clustering_from_policy(code: ParityCheckMatrix, artifact) -> Clustering:
    graph = TannerGraph.from_matrix(code)
    clustering = Clustering.from_clusters(
        graph, artifact.z, artifact.clusters, method=artifact.clustering_method
    )
    artifact.check_compatible(clustering)
    return clustering


def _scheduler_from_args(args, code: ParityCheckMatrix):
    """Returns (scheduler, clustering)."""
    if args.scheduler == "flooding":
        return FloodingScheduler(), _make_clustering(code, args)
    if args.scheduler == "random":
        return RandomScheduler(), _make_clustering(code, args)
    if args.scheduler == "policy":
        if not args.policy:
            raise ValueError("--scheduler policy requires --policy FILE")
        artifact = load_policy(args.policy)
        clustering = _clustering_from_policy(code, artifact)
        task = getattr(args, "task", None)
        sched = PolicyScheduler.from_artifact(
            artifact, clustering, mode=args.mode, task=task
        )
        return sched, clustering
    raise ValueError(f"unknown scheduler {args.scheduler!r}")


# -- subcommands ---------------------------------------------------------


def _cmd_build_code(args) -> int:
    if args.ab:
        gamma, p = args.ab
        code = build_ab_code(gamma, p)
        source = f"ab({gamma},{p})"
    elif args.base:
        code = read_alist_file(args.base)
        source = args.base
    else:
        raise ValueError("build-code needs --ab GAMMA P or --base ALIST")
    if args.lift_factor:
        if args.lift_spec:
            with open(args.lift_spec, "r", encoding="ascii") as fh:
                spec = parse_lift_spec(fh.read())
            code = lift_code(code, args.lift_factor, lift_spec=spec)
        else:
            seed = args.lift_seed if args.lift_seed is not None else args.seed
            code = lift_code(code, args.lift_factor, rng_seed=seed)
        source += f" lifted x{args.lift_factor}"
    write_alist_file(code, args.out)
    _write_manifest(args.out, "build-code", _options_dict(args), code.fingerprint)
    print(
        f"wrote {args.out}: {code.m}x{code.n}, {code.num_edges} edges, "
        f"rank {code.rank}, rate {code.rate:.4f} ({source})"
    )
    return 0


def _cmd_gen_data(args) -> int:
    code = read_alist_file(args.code)
    grid = _parse_snrs(args.snrs)
    mixing = args.mixing.replace("-", "_")
    data = generate_dataset(code, grid, args.per_snr, mixing=mixing, seed=args.seed)
    if mixing == "per_snr":
        merged = LlrDataset(
            llrs=np.concatenate([d.llrs for d in data]),
            snr_db=np.concatenate([d.snr_db for d in data]),
            code_fingerprint=code.fingerprint,
            seed=args.seed,
        )
        save_dataset(merged, args.out)
        count = len(merged)
    else:
        save_dataset(data, args.out)
        count = len(data)
    _write_manifest(args.out, "gen-data", _options_dict(args), code.fingerprint)
    print(f"wrote {args.out}: {count} LLR vectors over {grid.K} SNRs")
    return 0


def _cmd_train(args) -> int:
    code = read_alist_file(args.code)
    clustering = _make_clustering(code, args)
    hp = _hyperparams(args)
    scheme = args.scheme.replace("-", "_")
    dataset = load_dataset(args.data)
    if scheme == "reldec":
        artifact = train_reldec(clustering, dataset, hp, seed=args.seed)
    else:
        if not args.local_data:
            raise ValueError(f"--scheme {args.scheme} requires --local-data FILE")
        local = load_dataset(args.local_data)
        locals_by_snr = [local.split_by_snr()[s]
                         for s in sorted(set(local.snr_db.tolist()))]
        hp = Hyperparams(**{**hp.to_dict(), "K": len(locals_by_snr)})
        if scheme == "am_reldec":
            meta_for_training = args.meta_iters
            if args.adapt_size > 0 and args.meta_iters > 1:
                meta_for_training = args.meta_iters - 1
            artifact = train_am_reldec(
                clustering, dataset, locals_by_snr, hp,
                meta_iterations=meta_for_training, seed=args.seed,
            )
            if args.adapt_size > 0:
                # Final meta-step: online adaptation per task; validates the
                # adaptation path and extends the loss trace. The persisted
                # policy stays global-only; locals are re-derived online.
                if args.adapt_data:
                    adapt_src = load_dataset(args.adapt_data).split_by_snr()
                else:
                    adapt_src = {
                        float(ds.snr_db[0]): ds for ds in locals_by_snr
                    }
                for k, ds in enumerate(locals_by_snr):
                    snr = float(ds.snr_db[0])
                    pool = adapt_src.get(snr)
                    if pool is None:
                        continue
                    offset = (len(pool) - args.adapt_size) % len(pool)
                    sub = LlrDataset(
                        llrs=pool.llrs[offset:offset + args.adapt_size],
                        snr_db=pool.snr_db[offset:offset + args.adapt_size],
                        code_fingerprint=pool.code_fingerprint,
                        seed=pool.seed,
                    )
                    adapted = adapt_online(artifact, clustering, sub, hp,
                                           seed=args.seed + 1 + k)
                    for rec in adapted.run.episodes:
                        rec.task = k
                        artifact.run.episodes.append(rec)
        elif scheme == "m_reldec":
            artifact = train_m_reldec(
                clustering, dataset, locals_by_snr, hp, seed=args.seed
            )
        else:
            raise ValueError(f"unknown scheme {args.scheme!r}")
    save_policy(artifact, args.out)
    if args.log:
        write_training_log(artifact.run, args.log)
    _write_manifest(args.out, "train", _options_dict(args), code.fingerprint)
    print(
        f"wrote {args.out}: scheme={artifact.scheme}, "
        f"{artifact.global_q.n_rows} learned rows, "
        f"{len(artifact.run.episodes)} episodes"
    )
    return 0


def _cmd_adapt(args) -> int:
    code = read_alist_file(args.code)
    artifact = load_policy(args.policy)
    clustering = _clustering_from_policy(code, artifact)
    dataset = load_dataset(args.data)
    if args.snr is not None:
        groups = dataset.split_by_snr()
        if args.snr not in groups:
            raise ValueError(f"dataset has no vectors at {args.snr} dB")
        dataset = groups[args.snr]
    if args.take is not None:
        dataset = dataset.take(args.take)
    hp = _hyperparams(args)
    adapted = adapt_online(artifact, clustering, dataset, hp, seed=args.seed)
    save_policy(adapted, args.out)
    if args.log:
        write_training_log(adapted.run, args.log)
    _write_manifest(args.out, "adapt", _options_dict(args), code.fingerprint)
    print(f"wrote {args.out}: adapted over {len(dataset)} vectors")
    return 0


def _cmd_decode(args) -> int:
    code = read_alist_file(args.code)
    scheduler, clustering = _scheduler_from_args(args, code)
    dataset = load_dataset(args.input)
    if dataset.code_fingerprint != code.fingerprint:
        raise ValueError("dataset was generated for a different code")
    lines = ["frame,snr_db,converged,bit_errors,iterations,messages"]
    for i in range(len(dataset)):
        res = decode(
            dataset.llrs[i],
            clustering,
            scheduler,
            i_max=args.imax,
            rng=substream(args.seed, DOMAIN_DECODE, 0, i),
            early_stop=not args.no_early_stop,
            syndrome_precheck=args.precheck,
        )
        lines.append(
            f"{i},{float(dataset.snr_db[i])!r},{int(res.converged)},"
            f"{int(res.bits.sum())},{res.iterations_used},{res.messages_sent}"
        )
    write_atomic(args.out, ("\n".join(lines) + "\n").encode("ascii"))
    _write_manifest(args.out, "decode", _options_dict(args), code.fingerprint)
    print(f"wrote {args.out}: {len(dataset)} frames")
    return 0


def _cmd_simulate(args) -> int:
    code = read_alist_file(args.code)
    scheduler, clustering = _scheduler_from_args(args, code)
    grid = _parse_snrs(args.snrs)
    stop = StopRule(
        min_frame_errors=args.min_frame_errors if args.min_frame_errors > 0 else None,
        max_frames=args.max_frames,
    )
    result = run_campaign(
        clustering,
        scheduler,
        grid,
        i_max=args.imax,
        master_seed=args.seed,
        stop=stop,
        early_stop=not args.no_early_stop,
        syndrome_precheck=args.precheck,
        workers=args.workers,
        chunk_frames=args.chunk_frames,
    )
    write_campaign_csv(result, args.out)
    _write_manifest(args.out, "simulate", _options_dict(args), code.fingerprint)
    for row in result.rows:
        print(
            f"{row.snr_db} dB: frames={row.frames} ber={row.ber:.3e} "
            f"fer={row.fer:.3e} avg_messages={row.avg_messages:.1f}"
        )
    return 0


def _cmd_count_messages(args) -> int:
    code = read_alist_file(args.code)
    scheduler, clustering = _scheduler_from_args(args, code)
    grid = _parse_snrs(args.snrs)
    result = run_campaign(
        clustering,
        scheduler,
        grid,
        i_max=args.imax,
        master_seed=args.seed,
        stop=StopRule(min_frame_errors=None, max_frames=args.frames),
        early_stop=not args.no_early_stop,
        syndrome_precheck=args.precheck,
        workers=args.workers,
        chunk_frames=args.chunk_frames,
    )
    lines = [
        "# schema=reldec-messages-v1",
        f"# scheduler={result.scheduler}",
        "scheduler,snr_db,frames,avg_messages,messages_hw95,avg_iterations",
    ]
    for row in result.rows:
        lines.append(
            f"{result.scheduler},{row.snr_db!r},{row.frames},"
            f"{row.avg_messages!r},{row.messages_hw95!r},{row.avg_iterations!r}"
        )
    write_atomic(args.out, ("\n".join(lines) + "\n").encode("ascii"))
    _write_manifest(args.out, "count-messages", _options_dict(args), code.fingerprint)
    for row in result.rows:
        print(f"{row.snr_db} dB: avg CN-to-VN messages {row.avg_messages:.1f}")
    return 0


def _cmd_export_plot_csv(args) -> int:
    labels = args.labels.split(",") if args.labels else None
    if labels and len(labels) != len(args.inputs):
        raise ValueError("--labels count must match --inputs count")
    lines = ["label,snr_db,ber,fer,avg_messages"]
    for idx, path in enumerate(args.inputs):
        label = labels[idx] if labels else path
        with open(path, "r", encoding="ascii") as fh:
            rows = [ln.strip() for ln in fh if ln.strip()]
        header = None
        for ln in rows:
            if ln.startswith("#"):
                continue
            if header is None:
                header = ln.split(",")
                continue
            vals = dict(zip(header, ln.split(",")))
            lines.append(
                f"{label},{vals['snr_db']},{vals['ber']},{vals['fer']},"
                f"{vals['avg_messages']}"
            )
    write_atomic(args.out, ("\n".join(lines) + "\n").encode("ascii"))
    _write_manifest(args.out, "export-plot-csv", _options_dict(args), None)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reldec",
        description="Learned cluster-sequential BP decoding of LDPC codes",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-code", help="construct or convert a parity-check matrix")
    p.add_argument("--ab", nargs=2, type=int, metavar=("GAMMA", "P"))
    p.add_argument("--base", help="base matrix alist for lifting")
    p.add_argument("--lift-factor", type=int, default=0)
    p.add_argument("--lift-spec", help="circulant shift table file")
    p.add_argument("--lift-seed", type=int, default=None,
                   help="seed for random permutation lifting")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_code)

    p = sub.add_parser("gen-data", help="generate channel LLR datasets")
    p.add_argument("--code", required=True)
    p.add_argument("--snrs", required=True, help="comma-separated Eb/N0 values in dB")
    p.add_argument("--per-snr", type=int, required=True)
    p.add_argument("--mixing", choices=["mixed", "per-snr"], default="mixed")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a cluster scheduling policy")
    p.add_argument("--code", required=True)
    p.add_argument("--scheme", choices=["reldec", "am-reldec", "m-reldec"],
                   default="reldec")
    p.add_argument("--data", required=True, help="mixed/global dataset file")
    p.add_argument("--local-data", help="per-SNR dataset file (meta schemes)")
    p.add_argument("--meta-iters", type=int, default=1)
    p.add_argument("--adapt-size", type=int, default=0,
                   help="examples for the final online-adaptation step (am-reldec)")
    p.add_argument("--adapt-data", help="dataset file for the adaptation step")
    _add_clustering_args(p)
    _add_hp_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="training-log CSV path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("adapt", help="adapt a trained global policy online")
    p.add_argument("--code", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--snr", type=float, default=None,
                   help="restrict to one SNR label from the dataset")
    p.add_argument("--take", type=int, default=None,
                   help="use only the first N vectors")
    _add_hp_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.set_defaults(func=_cmd_adapt)

    def add_decode_like(p, with_input: bool):
        p.add_argument("--code", required=True)
        p.add_argument("--scheduler", choices=["flooding", "random", "policy"],
                       required=True)
        p.add_argument("--policy")
        p.add_argument("--mode", choices=["snapshot", "live"], default="snapshot")
        p.add_argument("--task", default=None,
                       help="stored local table label (m-reldec policies)")
        _add_clustering_args(p)
        p.add_argument("--imax", type=int, default=50)
        p.add_argument("--no-early-stop", action="store_true")
        p.add_argument("--precheck", action="store_true",
                       help="check the syndrome before the first iteration")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True)

    p = sub.add_parser("decode", help="decode the frames of a dataset file")
    add_decode_like(p, with_input=True)
    p.add_argument("--input", required=True, help="LLR dataset file")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("simulate", help="Monte Carlo BER/FER campaign")
    add_decode_like(p, with_input=False)
    p.add_argument("--snrs", required=True)
    p.add_argument("--min-frame-errors", type=int, default=100,
                   help="frame-error quota per SNR (0: always run max-frames)")
    p.add_argument("--max-frames", type=int, default=100000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--chunk-frames", type=int, default=256)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("count-messages",
                       help="average CN-to-VN message counts over fixed frames")
    add_decode_like(p, with_input=False)
    p.add_argument("--snrs", required=True)
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--chunk-frames", type=int, default=256)
    p.set_defaults(func=_cmd_count_messages)

    p = sub.add_parser("export-plot-csv", help="merge campaign CSVs for plotting")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--labels", default=None, help="comma-separated series labels")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_plot_csv)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _merge_config(argv)
        parser = build_parser()
        args = parser.parse_args(argv)
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
