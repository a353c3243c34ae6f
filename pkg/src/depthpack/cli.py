"""Command-line surface tying the pipeline together.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 internal error.
All randomized subcommands take an explicit --seed and are bit-reproducible.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from statistics import median

import numpy as np

from . import __version__
from .channel import ChannelConfig, external_encode, encode_sequence, achieved_bitrate, write_coded_csv
from .datasets import (
    load_manifest,
    synth_sequence,
    write_dataset,
    SYNTH_KINDS,
)
from .metrics import depth_mae, sweep, write_sweep_csv
from .oracle import (
    DEFAULT_PRECISIONS,
    oracle_labels,
    read_labels_csv,
    write_labels_csv,
)
from .packing import pack_frame, unpack_frame
from .predictor import (
    TrainConfig,
    assemble_dataset,
    baseline_policy,
    extract_features,
    forward,
    init_model,
    load_model,
    policy_metrics,
    save_model,
    select_precision,
    train,
    write_training_log,
)
from .types import ChromaMode, ConfigError, DataError, DepthPackError, PackingConfig
from .y4m import read_y4m, write_y4m

PACK_SIDECAR_VERSION = 1


def _chroma(value: str) -> ChromaMode:
    try:
        return ChromaMode(value)
    except ValueError:
        raise ConfigError(f"chroma must be 444 or 420, got {value!r}")


def _float_list(text: str):
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text: str):
    return [int(x) for x in text.split(",") if x.strip()]


def _packing_config(args) -> PackingConfig:
    if args.scheme == "vbp":
        if args.bits is None:
            raise ConfigError("--bits is required for the vbp scheme")
        return PackingConfig.vbp(args.bits)
    if args.np is None:
        raise ConfigError("--np is required for the rp scheme")
    return PackingConfig.rp(args.np)


def _require_file(path, kind: str):
    if not os.path.exists(path):
        raise DataError(f"{kind} not found: {path}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    maps, cams = synth_sequence(
        args.kind, args.frames, args.width, args.height, args.seed, fps=args.fps
    )
    path = write_dataset(
        maps, cams, args.out, fmt=args.format, name=args.kind, fps=args.fps
    )
    print(f"wrote {len(maps)} frames, manifest {path}")
    return 0


def cmd_pack(args) -> int:
    manifest = load_manifest(args.manifest)
    cfg = _packing_config(args)
    chroma = _chroma(args.chroma)
    maps = manifest.load_maps()
    frames = [pack_frame(m, cfg, chroma) for m in maps]
    write_y4m(frames, manifest.fps, args.out)
    sidecar = {
        "version": PACK_SIDECAR_VERSION,
        "scheme": cfg.scheme,
        "bits": cfg.bits,
        "n_p": cfg.n_p,
        "chroma": chroma.value,
        "fps": manifest.fps,
        "source_manifest": os.path.abspath(args.manifest),
    }
    with open(args.out + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    print(f"packed {len(frames)} frames ({cfg.label}, {chroma.value}) to {args.out}")
    return 0


def _read_pack_sidecar(path):
    _require_file(path, "packed sidecar")
    with open(path, "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    if sidecar.get("version") != PACK_SIDECAR_VERSION:
        raise DataError(f"unsupported packed sidecar version in {path}")
    if sidecar["scheme"] == "vbp":
        return PackingConfig.vbp(sidecar["bits"])
    return PackingConfig.rp(sidecar["n_p"])


def cmd_unpack(args) -> int:
    _require_file(args.packed, "packed stream")
    cfg = _read_pack_sidecar(args.packed + ".json")
    frames, fps = read_y4m(args.packed)
    maps = [unpack_frame(f, cfg, frame_index=i) for i, f in enumerate(frames)]
    write_dataset(maps, None, args.out, fmt=args.format, name="unpacked", fps=fps)
    print(f"unpacked {len(maps)} frames to {args.out}")
    if args.reference:
        ref = load_manifest(args.reference)
        ref_maps = ref.load_maps()
        if len(ref_maps) != len(maps):
            raise DataError("reference manifest frame count does not match")
        mae = float(np.mean([depth_mae(a, b) for a, b in zip(maps, ref_maps)]))
        print(f"mae_vs_reference {mae:.9g}")
    return 0


def cmd_encode(args) -> int:
    manifest = load_manifest(args.manifest)
    cfg = _packing_config(args)
    chroma = _chroma(args.chroma)
    channel_cfg = ChannelConfig(
        target_bitrate=args.bitrate,
        fps=manifest.fps,
        gop=args.gop,
        chroma_mode=chroma,
    )
    maps = manifest.load_maps()
    frames = [pack_frame(m, cfg, chroma) for m in maps]
    if args.encoder_cmd:
        coded = external_encode(frames, channel_cfg, args.encoder_cmd, args.decoder_cmd)
    else:
        coded = encode_sequence(frames, channel_cfg)
    decoded = [unpack_frame(c.reconstruction, cfg, i) for i, c in enumerate(coded)]
    mae = float(np.mean([depth_mae(d, m) for d, m in zip(decoded, maps)]))
    achieved = achieved_bitrate(coded, manifest.fps)
    if args.out:
        write_dataset(decoded, None, args.out, name="decoded", fps=manifest.fps)
    if args.coded_csv:
        write_coded_csv(coded, args.coded_csv)
    print(f"mae {mae:.9g} achieved_bps {achieved:.6g} target_bps {args.bitrate:.6g}")
    return 0


def cmd_sweep(args) -> int:
    manifest = load_manifest(args.manifest)
    configs = []
    for bits in args.vbp_bits or []:
        configs.append(PackingConfig.vbp(bits))
    for n_p in args.rp_np or []:
        configs.append(PackingConfig.rp(n_p))
    if not configs:
        raise ConfigError("sweep needs --vbp-bits and/or --rp-np")
    if not args.bitrates:
        raise ConfigError("sweep needs at least one --bitrates value")
    chroma_modes = [_chroma(c) for c in args.chroma.split(",") if c.strip()]
    maps = manifest.load_maps()
    base = ChannelConfig(target_bitrate=1.0, fps=manifest.fps, gop=args.gop)
    rows = sweep(
        maps,
        configs,
        args.bitrates,
        chroma_modes,
        base_cfg=base,
        workers=args.workers,
        scene_nf=manifest.near_far if args.scene_error else None,
    )
    write_sweep_csv(rows, args.out)
    print(f"wrote {len(rows)} sweep rows to {args.out}")
    return 0


def cmd_oracle(args) -> int:
    manifest = load_manifest(args.manifest)
    maps = manifest.load_maps()
    base = ChannelConfig(
        target_bitrate=1.0,
        fps=manifest.fps,
        gop=args.gop,
        chroma_mode=_chroma(args.chroma),
    )
    records = []
    for bitrate in args.bitrates:
        records.extend(
            oracle_labels(maps, bitrate, args.precisions, base, workers=args.workers)
        )
    write_labels_csv(records, args.precisions, args.out)
    print(f"wrote {len(records)} oracle rows to {args.out}")
    return 0


def _dataset_from_labels(manifest_path, labels_path):
    manifest = load_manifest(manifest_path)
    _require_file(labels_path, "label file")
    records, precision_set = read_labels_csv(labels_path)
    maps = manifest.load_maps()
    cams = manifest.load_states()
    x, y = assemble_dataset(maps, cams, records)
    return manifest, records, precision_set, x, y


def cmd_train(args) -> int:
    _, records, precision_set, x, y = _dataset_from_labels(args.manifest, args.labels)
    cfg = TrainConfig(
        lr=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        test_fraction=args.test_fraction,
    )
    result = train(x, y, precision_set, cfg)
    save_model(result.model, args.model_out)
    if args.log_out:
        write_training_log(result.history, args.log_out)
    final = result.history[-1]
    print(f"trained {len(records)} rows: train_l1 {final[1]:.6g} test_l1 {final[2]:.6g}")
    print(f"model written to {args.model_out}")
    return 0


def cmd_predict(args) -> int:
    manifest = load_manifest(args.manifest)
    model = load_model(args.model)
    maps = manifest.load_maps()
    cams = manifest.load_states()
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(f"# depthpack {__version__}\n")
        cols = ["frame_index"] + [f"pred_err_{b}" for b in model.precision_set]
        fh.write(",".join(cols + ["chosen_bits"]) + "\n")
        for i, m in enumerate(maps):
            prev = maps[i - 1] if i > 0 else None
            cam_pair = (cams[i - 1], cams[i]) if cams is not None and i > 0 else None
            fv = extract_features(m, prev, cam_pair, bitrate=args.bitrate)
            pred = forward(model, fv)
            chosen = model.precision_set[int(np.argmin(pred))]
            vals = ",".join(f"{p:.12g}" for p in pred)
            fh.write(f"{m.frame_index},{vals},{chosen}\n")
    print(f"wrote predictions for {len(maps)} frames to {args.out}")
    return 0


def cmd_select(args) -> int:
    manifest, records, precision_set, x, _ = _dataset_from_labels(
        args.manifest, args.labels
    )
    model = load_model(args.model)
    if tuple(model.precision_set) != tuple(precision_set):
        raise ConfigError(
            f"model precision set {model.precision_set} != labels {precision_set}"
        )
    model_picks = [select_precision(model, row) for row in x]
    base_picks = [baseline_policy(rec.bitrate) for rec in records]
    oracle_picks = [rec.best_precision for rec in records]
    frac_model, err_model = policy_metrics(records, model_picks, precision_set)
    frac_base, err_base = policy_metrics(records, base_picks, precision_set)
    frac_oracle, err_oracle = policy_metrics(records, oracle_picks, precision_set)

    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(f"# depthpack {__version__}\n")
            fh.write(
                "frame_index,bitrate,model_bits,model_err,baseline_bits,"
                "baseline_err,oracle_bits,oracle_err\n"
            )
            for rec, mb, bb in zip(records, model_picks, base_picks):
                me = rec.errors_by_precision[precision_set.index(mb)]
                be = rec.errors_by_precision[precision_set.index(bb)]
                oe = rec.errors_by_precision[precision_set.index(rec.best_precision)]
                fh.write(
                    f"{rec.frame_index},{rec.bitrate:.6g},{mb},{me:.12g},"
                    f"{bb},{be:.12g},{rec.best_precision},{oe:.12g}\n"
                )
    print(f"fraction_optimal model {frac_model:.4f} baseline {frac_base:.4f}")
    print(f"mean_error model {err_model:.9g} baseline {err_base:.9g} "
          f"oracle {err_oracle:.9g}")
    return 0


def cmd_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    values = rng.random((args.height, args.width), dtype=np.float64).astype(np.float32)
    from .types import DepthMap

    dmap = DepthMap(args.width, args.height, values)
    if args.model:
        model = load_model(args.model)
    else:
        model = init_model(DEFAULT_PRECISIONS, seed=args.seed)
    timings = []
    for _ in range(args.iters):
        t0 = time.perf_counter()
        fv = extract_features(dmap, bitrate=args.bitrate)
        forward(model, fv)
        timings.append((time.perf_counter() - t0) * 1e3)
    timings.sort()
    med = median(timings)
    p95 = timings[min(len(timings) - 1, int(round(0.95 * (len(timings) - 1))))]
    print(
        f"inference latency over {args.iters} iters ({args.width}x{args.height}): "
        f"median {med:.3f} ms p95 {p95:.3f} ms"
    )
    return 0


def cmd_bench_kernels(args) -> int:
    from . import _kernels

    rng = np.random.default_rng(args.seed)
    plane = rng.standard_normal((args.height, args.width)) * 40.0
    results = {}
    for name in ("native", "numpy"):
        try:
            impl = _kernels.load_backend(name)
        except ImportError:
            print(f"{name:>6}: unavailable")
            continue
        impl.encode_plane(plane, 4.0)  # warm up
        t0 = time.perf_counter()
        for _ in range(args.iters):
            bits, _ = impl.encode_plane(plane, 4.0)
        dt = (time.perf_counter() - t0) / args.iters * 1e3
        results[name] = dt
        print(f"{name:>6}: {dt:.3f} ms per {args.width}x{args.height} plane "
              f"(bit_count {bits})")
    if len(results) == 2:
        print(f"speedup native vs numpy: {results['numpy'] / results['native']:.2f}x")
    print(f"active backend: {_kernels.BACKEND}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depthpack",
        description="Depth-map packing, channel simulation, precision oracle, "
        "and precision prediction.",
    )
    parser.add_argument("--version", action="version", version=f"depthpack {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic depth dataset")
    p.add_argument("--kind", choices=SYNTH_KINDS, default="flythrough")
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("rawf32", "pfm", "pgm16"), default="rawf32")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pack", help="pack a dataset into a Y4M stream")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scheme", choices=("vbp", "rp"), default="vbp")
    p.add_argument("--bits", type=int)
    p.add_argument("--np", type=int)
    p.add_argument("--chroma", default="444")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("unpack", help="unpack a Y4M stream back to depth frames")
    p.add_argument("--packed", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("rawf32", "pfm", "pgm16"), default="rawf32")
    p.add_argument("--reference", help="manifest to compare against (prints MAE)")
    p.set_defaults(func=cmd_unpack)

    p = sub.add_parser("encode", help="run the codec channel over a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scheme", choices=("vbp", "rp"), default="vbp")
    p.add_argument("--bits", type=int)
    p.add_argument("--np", type=int)
    p.add_argument("--chroma", default="444")
    p.add_argument("--bitrate", type=float, required=True)
    p.add_argument("--gop", type=int)
    p.add_argument("--out", help="directory for decoded depth frames")
    p.add_argument("--coded-csv", help="per-frame coded-size CSV path")
    p.add_argument("--encoder-cmd", help="external codec: Y4M on stdin")
    p.add_argument("--decoder-cmd", help="external decoder back to Y4M")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("sweep", help="factorial error sweep to CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--vbp-bits", type=_int_list, default=None)
    p.add_argument("--rp-np", type=_int_list, default=None)
    p.add_argument("--bitrates", type=_float_list, required=True)
    p.add_argument("--chroma", default="444")
    p.add_argument("--gop", type=int)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--scene-error", action="store_true",
                   help="add a scene-unit error column using the manifest's "
                        "near/far planes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="brute-force per-frame best precision")
    p.add_argument("--manifest", required=True)
    p.add_argument("--bitrates", type=_float_list, required=True)
    p.add_argument("--precisions", type=_int_list, default=list(DEFAULT_PRECISIONS))
    p.add_argument("--chroma", default="444")
    p.add_argument("--gop", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("train", help="train the precision predictor")
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--log-out")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict per-precision errors")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--bitrate", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("select", help="evaluate model vs baseline vs oracle")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("bench", help="single-inference latency of the predictor")
    p.add_argument("--model")
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--bitrate", type=float, default=1e7)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("bench-kernels", help="compare native and numpy kernels")
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench_kernels)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DepthPackError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
