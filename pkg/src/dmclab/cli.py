"""Command-line entry point: ``dmclab <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Every subcommand accepts ``--config FILE`` (key=value lines whose keys are
option names, with dashes or underscores) and ``--manifest PATH``. Values
given on the command line override the config file. Each run writes a
manifest; by default it goes to the run's output directory, or to
``<subcommand>.manifest.txt`` in the working directory for subcommands that
have none.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__, codec, container
from .manifest import read_kv, write_kv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("dmclab")


class UsageError(Exception):
    pass


def _ref_mode(text: str) -> codec.RefMode:
    try:
        return codec.RefMode[text.upper()]
    except KeyError:
        raise argparse.ArgumentTypeError(f"ref mode must be 'iframe' or 'previous', not {text!r}")


def _csv(text: str) -> list[str]:
    return [t for t in (s.strip() for s in text.split(",")) if t]


# --- subcommands ---------------------------------------------------------------

def cmd_encode(args) -> dict:
    frames = container.read_raw(args.input)
    ev = codec.encode(frames, args.gop_p_count, args.search_range, args.ref_mode,
                      None if args.label < 0 else args.label)
    container.save(args.output, ev)
    print(f"encoded {ev.num_frames} frames ({len(ev.gops)} GOPs) -> {args.output}")
    return {"frames": ev.num_frames, "gops": len(ev.gops)}


def cmd_decode(args) -> dict:
    ev = container.load(args.input)
    frames = codec.decode(ev)
    container.write_raw(args.output, frames)
    print(f"decoded {len(frames)} frames {ev.width}x{ev.height} -> {args.output}")
    return {"frames": len(frames)}


def cmd_synth(args) -> dict:
    from .synthetic import SyntheticDatasetSpec, generate_synthetic_dataset, save_clips

    spec = SyntheticDatasetSpec(num_classes=args.classes, clips_per_class=args.clips,
                                frames_per_clip=args.frames, size=args.size, seed=args.seed,
                                ref_mode=args.ref_mode, noise_sigma=args.noise)
    ds = generate_synthetic_dataset(spec)
    save_clips(ds, args.out)
    flows = sum(len(c.flows) for c in ds.clips)
    print(f"wrote {len(ds)} clips and {flows} flow files to {args.out}")
    return {f"spec.{f.name}": getattr(spec, f.name) for f in fields(spec) if f.name != "pans"}


def _schedule(args):
    from .training import TrainSchedule

    return TrainSchedule(phase1_epochs=args.phase1_epochs, phase2_epochs=args.phase2_epochs,
                         phase3_epochs=args.phase3_epochs, stream_epochs=args.stream_epochs,
                         alpha=args.alpha, lam=args.lam, lr=args.lr,
                         cls_body_lr_mult=args.cls_body_lr_mult, batch_size=args.batch_size,
                         samples_per_clip=args.samples_per_clip, seed=args.seed)


def _flags(text: str):
    from .training import LossFlags

    names = set(_csv(text))
    unknown = names - {"cls", "mse", "adv"}
    if unknown:
        raise UsageError(f"unknown loss flag(s): {', '.join(sorted(unknown))}")
    return LossFlags(use_cls="cls" in names, use_mse="mse" in names, use_adv="adv" in names)


def cmd_train(args) -> dict:
    from .synthetic import load_clips
    from .training import run_manifest, train

    schedule, flags = _schedule(args), _flags(args.losses)
    clips = load_clips(args.data)
    result = train(clips, schedule, flags)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.models.save(out / "model.dmcw")
    history = {}
    for rec in result.history:
        prefix = f"{rec['phase']}.{rec['epoch']}"
        for k, v in rec.items():
            if k not in ("phase", "epoch"):
                history[f"{prefix}.{k}"] = v
    write_kv(out / "history.txt", history)
    print(f"trained on {len(clips)} clips -> {out / 'model.dmcw'}")
    return run_manifest(schedule, flags, {"data": args.data})


def cmd_infer(args) -> dict:
    from .inference import infer_video
    from .training import Models

    models = Models.load(args.checkpoint)
    ev = container.load(args.input)
    streams = _csv(args.streams)
    scores = infer_video(models, ev, streams, args.frames_per_video)
    pred = int(np.argmax(scores))
    print(f"predicted class {pred}")
    print("scores " + " ".join(f"{s:.6f}" for s in scores))
    return {"streams": streams, "prediction": pred}


def cmd_eval(args) -> dict:
    from .inference import evaluate
    from .synthetic import load_clips
    from .training import Models

    models = Models.load(args.checkpoint)
    report = evaluate(models, load_clips(args.data), frames_per_video=args.frames_per_video)
    for line in report.lines():
        print(line)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_kv(out / "metrics.txt", report.as_dict())
    return {"data": args.data, "checkpoint": args.checkpoint}


def cmd_flops(args) -> dict:
    from .generator import GeneratorConfig, count_macs

    cfg = GeneratorConfig()
    per_layer = count_macs(cfg, args.height, args.width, per_layer=True)
    for k, (ci, co, macs) in enumerate(zip(cfg.in_channels, cfg.layer_out_channels, per_layer)):
        print(f"conv{k} {ci}->{co} 3x3 macs {macs}")
    total = sum(per_layer)
    print(f"total {total} ({total / 1e9:.4f} GMACs)")
    return {"height": args.height, "width": args.width, "total_macs": total}


def cmd_gradcheck(args) -> dict:
    from .gradcheck import SUITE, run_suite

    names = _csv(args.ops) if args.ops else list(SUITE)
    unknown = [n for n in names if n not in SUITE]
    if unknown:
        raise UsageError(f"unknown op(s): {', '.join(unknown)}")
    reports = run_suite(range(args.seeds), names, args.tolerance)
    for name, rep in reports.items():
        print(f"{name} {rep}")
    ok = all(r.passed for r in reports.values())
    print("all ops pass" if ok else "gradient check FAILED")
    args.exit_code = EXIT_OK if ok else EXIT_NUMERIC
    return {"seeds": args.seeds, "tolerance": args.tolerance, "passed": ok}


def cmd_bench(args) -> dict:
    from .generator import build_generator
    from .tensor import Tensor

    gen = build_generator(seed=args.seed)
    rng = np.random.default_rng(args.seed)
    mv = Tensor(rng.integers(-4, 5, (args.batch, 2, args.height, args.width)).astype(np.float32))
    res = Tensor(rng.uniform(-1, 1, (args.batch, 3, args.height, args.width)).astype(np.float32))
    gen(mv, res)  # warm-up
    times = []
    for _ in range(args.repeats):
        t0 = time.perf_counter()
        gen(mv, res)
        times.append((time.perf_counter() - t0) / args.batch)
    ms = 1000 * float(np.median(times))
    print(f"generator {args.height}x{args.width}: {ms:.3f} ms/frame (median of {args.repeats})")
    return {"ms_per_frame": ms}


def cmd_desk(args) -> dict:
    from .benchmark import DESK_SCHEDULE, run_benchmark

    try:
        seeds = [int(v) for v in _csv(args.seeds)]
        ablation = [int(v) for v in _csv(args.ablation_seeds)]
    except ValueError:
        raise UsageError("seeds must be integers")
    res = run_benchmark(seeds, DESK_SCHEDULE, ablation_seeds=ablation)
    lines = res.lines()
    for line in lines:
        print(line)
    if args.out:
        write_kv(Path(args.out) / "metrics.txt", dict(line.split(" ", 1) for line in lines))
    return {"seeds": args.seeds, "schedule": "desk"}


# --- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    from .training import TrainSchedule

    sched = TrainSchedule()
    parser = argparse.ArgumentParser(prog="dmclab", description="Compressed-video motion-cue lab.")
    parser.add_argument("--version", action="version", version=f"dmclab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", metavar="command")
    parser.subcommands = {}

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        parser.subcommands[name] = p
        p.add_argument("--config", help="key=value file with option defaults")
        p.add_argument("--manifest", help="where to write the run manifest")
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(func=func)
        return p

    p = add("encode", cmd_encode, "encode a raw RGB clip into a DMCV container")
    p.add_argument("--input", required=True, help="planar RGB8 .rgb file (with .rgb.hdr)")
    p.add_argument("--output", required=True)
    p.add_argument("--gop-p-count", type=int, default=codec.DEFAULT_GOP_P_COUNT)
    p.add_argument("--search-range", type=int, default=codec.DEFAULT_SEARCH_RANGE)
    p.add_argument("--ref-mode", type=_ref_mode, default=codec.RefMode.IFRAME)
    p.add_argument("--label", type=int, default=-1)

    p = add("decode", cmd_decode, "decode a DMCV container back to raw RGB")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = add("synth", cmd_synth, "render a synthetic dataset with ground-truth flow")
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--clips", type=int, default=25, help="clips per class")
    p.add_argument("--frames", type=int, default=12)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--ref-mode", type=_ref_mode, default=codec.RefMode.PREVIOUS)
    p.add_argument("--noise", type=float, default=25.0, help="sensor noise sigma in grey levels (benchmark: 25)")
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train generator, classifiers and discriminator")
    p.add_argument("--data", required=True, help="directory written by synth")
    p.add_argument("--out", required=True)
    p.add_argument("--losses", default="cls,mse,adv", help="comma list of cls, mse, adv")
    p.add_argument("--phase1-epochs", type=int, default=sched.phase1_epochs)
    p.add_argument("--phase2-epochs", type=int, default=sched.phase2_epochs)
    p.add_argument("--phase3-epochs", type=int, default=sched.phase3_epochs)
    p.add_argument("--stream-epochs", type=int, default=sched.stream_epochs)
    p.add_argument("--alpha", type=float, default=sched.alpha)
    p.add_argument("--lam", "--lambda", dest="lam", type=float, default=sched.lam)
    p.add_argument("--lr", type=float, default=sched.lr)
    p.add_argument("--cls-body-lr-mult", type=float, default=sched.cls_body_lr_mult)
    p.add_argument("--batch-size", type=int, default=sched.batch_size)
    p.add_argument("--samples-per-clip", type=int, default=sched.samples_per_clip)

    p = add("infer", cmd_infer, "classify one encoded clip")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--streams", default="I,MV,R,DMC")
    p.add_argument("--frames-per-video", type=int, default=25)

    p = add("eval", cmd_eval, "accuracy and EPE report on a dataset directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="directory for metrics.txt")
    p.add_argument("--frames-per-video", type=int, default=25)

    p = add("flops", cmd_flops, "per-layer and total generator MACs")
    p.add_argument("--height", type=int, default=224)
    p.add_argument("--width", type=int, default=224)

    p = add("gradcheck", cmd_gradcheck, "finite-difference check of every differentiable op")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--ops", help="comma list of op names (default: all)")

    p = add("bench", cmd_bench, "generator latency per frame (informational)")
    p.add_argument("--height", type=int, default=224)
    p.add_argument("--width", type=int, default=224)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--repeats", type=int, default=5)

    p = add("desk", cmd_desk, "desk-scale benchmark: DMC against MV over several seeds")
    p.add_argument("--seeds", default="0,1,2", help="comma list of training seeds")
    p.add_argument("--ablation-seeds", default="0,1,2", help="seeds that also train the cls-only ablation")
    p.add_argument("--out", help="directory for metrics.txt")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]):
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    sub = parser.subcommands[args.command]
    known = {a.dest for a in sub._actions}
    try:
        values = read_kv(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}")
    defaults = {}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("config", "func", "help"):
            raise UsageError(f"config key {key!r} is not an option of {args.command!r}")
        action = next(a for a in sub._actions if a.dest == dest)
        conv = action.type or str
        defaults[dest] = conv(raw)
        action.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _manifest_path(args) -> Path:
    if args.manifest:
        return Path(args.manifest)
    out = getattr(args, "out", None)
    if out:
        return Path(out) / "manifest.txt"
    return Path(f"{args.command}.manifest.txt")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except (UsageError, ValueError) as exc:
        print(f"dmclab: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")

    from .checkpoint import CheckpointError
    from .flo import FloError
    from .tensor import NumericError

    args.exit_code = EXIT_OK
    try:
        info = args.func(args)
    except UsageError as exc:
        print(f"dmclab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"dmclab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (codec.CodecError, FloError, CheckpointError, OSError, KeyError, ValueError) as exc:
        print(f"dmclab: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    manifest = {"command": args.command, "version": __version__, "seed": args.seed,
                "argv": " ".join(argv), "exit_code": args.exit_code}
    manifest.update(info or {})
    path = _manifest_path(args)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_kv(path, manifest)
    return args.exit_code


if __name__ == "__main__":
    sys.exit(main())
