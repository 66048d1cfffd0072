"""Command line entry point: train, infer, eval, selftest, synth.

Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 selftest failure.
"""

import argparse
from dataclasses import replace
import logging
from pathlib import Path
import sys

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .critic import build_critics
from .data import DatasetSpec, load_pairs, read_cleaning_list, synth_bokeh_dataset, write_dataset
from .evaluate import evaluate_dir, infer
from .exceptions import CheckpointError, ConfigError, ShapeError, TrainingDiverged
from .generator import GeneratorConfig, build_generator
from .trainer import critics_from_checkpoint, train_stage1, train_stage2

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_SELFTEST = 0, 1, 2, 3

log = logging.getLogger("bokehgan")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="bokehgan", description="Two-stage GAN bokeh rendering.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="run one training stage")
    t.add_argument("--stage", type=int, choices=(1, 2), required=True)
    t.add_argument("--config", type=Path, help="key = value config file")
    t.add_argument("--data", type=Path, required=True, help="dataset root (<root>/<split>/source|target)")
    t.add_argument("--resume", type=Path, help="checkpoint to resume or to start stage 2 from")
    t.add_argument("--out", type=Path, required=True, help="output checkpoint")

    i = sub.add_parser("infer", help="render one image")
    i.add_argument("--ckpt", type=Path, required=True)
    i.add_argument("--input", type=Path, required=True)
    i.add_argument("--output", type=Path, required=True)

    e = sub.add_parser("eval", help="PSNR/SSIM over a directory of pairs")
    e.add_argument("--ckpt", type=Path, required=True)
    e.add_argument("--data", type=Path, required=True)
    e.add_argument("--report", type=Path, required=True)
    e.add_argument("--split", default="test", choices=("train", "val", "test"))

    sub.add_parser("selftest", help="run built-in consistency checks")

    s = sub.add_parser("synth", help="write a synthetic paired dataset")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--n", type=int, default=16)
    s.add_argument("--size", type=int, nargs=2, default=(192, 128), metavar=("H", "W"))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--split", default="train", choices=("train", "val", "test"))
    return p


def _train(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    sched = cfg.schedule
    if sched.crop is None:
        sched = replace(sched, crop=(cfg.data.crop_height, cfg.data.crop_width))
    cleaning = read_cleaning_list(cfg.data.cleaning_list) if cfg.data.cleaning_list else None
    spec = DatasetSpec(args.data, cfg.data.split, cleaning, sched.crop)
    dataset = load_pairs(spec)
    resume = load_checkpoint(args.resume) if args.resume else None
    gen_cfg = cfg.generator
    if resume is not None:
        gen_cfg = GeneratorConfig(**resume.meta["generator_config"])
    gen = build_generator(gen_cfg, sched.seed)
    if args.stage == 1:
        result = train_stage1(gen, dataset, sched, cfg.adam, cfg.loss, resume=resume,
                              checkpoint_path=args.out, diag_path=args.out.with_suffix(".diag"))
    else:
        if resume is None:
            log.warning("stage 2 without --resume starts from an untrained generator")
        if resume is not None and resume.meta.get("stage") == 2:
            mc = critics_from_checkpoint(resume)
        else:
            mc = build_critics(cfg.critic, sched.seed)
        result = train_stage2(gen, mc, dataset, sched, cfg.adam, cfg.adam, cfg.extractor(),
                              cfg.loss, resume=resume, checkpoint_path=args.out,
                              diag_path=args.out.with_suffix(".diag"))
    save_checkpoint(args.out, result.checkpoint)
    if result.history:
        last = result.history[-1]
        print(f"stage {args.stage}: {len(result.history)} steps recorded, last loss {last['total']:.5f}")
    print(f"wrote {args.out}")


def _eval(args):
    spec = DatasetSpec(args.data, args.split, crop=None)
    report = evaluate_dir(load_checkpoint(args.ckpt), spec)
    args.report.write_text(report.to_json() + "\n", encoding="utf-8")
    print(f"{report.count} images: PSNR {report.mean_psnr:.3f} dB, SSIM {report.mean_ssim:.4f}")


def _synth(args):
    ds = synth_bokeh_dataset(args.n, tuple(args.size), args.seed)
    print(f"wrote {len(ds)} pairs to {write_dataset(ds, args.out, args.split)}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "train":
            _train(args)
        elif args.command == "infer":
            infer(load_checkpoint(args.ckpt), args.input, args.output)
            print(f"wrote {args.output}")
        elif args.command == "eval":
            _eval(args)
        elif args.command == "synth":
            _synth(args)
        elif args.command == "selftest":
            from .selftest import run

            return EXIT_OK if run() else EXIT_SELFTEST
    except ConfigError as exc:
        print(f"bokehgan: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CheckpointError, TrainingDiverged, ShapeError, OSError, ValueError, RuntimeError) as exc:
        print(f"bokehgan: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
