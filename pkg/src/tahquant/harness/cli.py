"""``tahq`` command-line entry point."""
from __future__ import annotations

import argparse
import csv
import logging
import re
import sys

import numpy as np

from ..codec import decode_blob, encode_blob
from ..config import QuantConfig
from ..errors import TahqError
from ..pipeline.model import ModelConfig
from ..pipeline.train import TrainConfig, run_training
from ..quantizer import dequantize_activation, quantize_activation
from ..tensorfile import load_tensor, save_tensor
from .report import compression_report
from .validation import run_validation

log = logging.getLogger("tahq")

BENCH_COLUMNS = (
    "variant", "B", "S", "C", "tile_size", "p4", "blob_bytes", "payload_bits_per_element",
    "bits_per_element", "ratio_vs_fp32", "transform_fraction", "encode_throughput",
    "decode_throughput",
)


def _quant_args(p: argparse.ArgumentParser):
    p.add_argument("--tile-size", type=int, default=32)
    p.add_argument("--p4", type=float, default=0.8, help="fraction of tokens kept at 4 bits")
    p.add_argument("--tau", type=float, default=2.0)
    p.add_argument("--no-adaptive", action="store_true")
    p.add_argument("--no-hadamard", action="store_true")


def _quant_config(args) -> QuantConfig:
    return QuantConfig(tile_size=args.tile_size, high_frac=args.p4, tau=args.tau,
                       adaptive_alloc=not args.no_adaptive, hadamard=not args.no_hadamard)


def _train_args(p: argparse.ArgumentParser):
    _quant_args(p)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--beta1", type=float, default=0.2)
    p.add_argument("--bw-bits", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outliers", action="store_true",
                   help="scale a few activation channels x20 (Hadamard ablation task)")
    p.add_argument("--workers", type=int, default=None,
                   help="1 = sequential, 2 = one thread per stage (default: TAHQ_THREADS)")
    p.add_argument("--channel", choices=("queue", "socket"), default="queue")


def _train_config(args, steps: int, **extra) -> TrainConfig:
    model = ModelConfig(outlier_channels=(3, 45)) if args.outliers else ModelConfig()
    return TrainConfig(steps=steps, lr=args.lr, beta1=args.beta1, quant=_quant_config(args),
                       bw_bits=args.bw_bits, seed=args.seed, model=model,
                       workers=args.workers, channel=args.channel, **extra)


def parse_shape(text: str):
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"shape must look like BxSxC, got {text!r}")
    return tuple(int(v) for v in m.groups())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tahq", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quantize", help="compress a .taht tensor into a .tahq blob")
    q.add_argument("--in", dest="inp", required=True)
    q.add_argument("--out", required=True)
    _quant_args(q)

    d = sub.add_parser("dequantize", help="expand a .tahq blob back into a .taht tensor")
    d.add_argument("--in", dest="inp", required=True)
    d.add_argument("--out", required=True)

    t = sub.add_parser("train", help="run the two-stage pipeline on the synthetic task")
    t.add_argument("--steps", type=int, required=True)
    t.add_argument("--baseline", action="store_true", help="no compression in either direction")
    t.add_argument("--strict-theory", action="store_true")
    t.add_argument("--delta", type=float)
    t.add_argument("--lsmooth", type=float)
    t.add_argument("--csv", required=True)
    t.add_argument("--checkpoint")
    _train_args(t)

    v = sub.add_parser("validate", help="measure relative gradient errors along training")
    v.add_argument("--mode", choices=("step", "fullbatch"), required=True)
    v.add_argument("--steps", type=int, required=True)
    v.add_argument("--csv", required=True)
    _train_args(v)

    b = sub.add_parser("bench", help="compression accounting and codec throughput")
    b.add_argument("--shape", type=parse_shape, required=True)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--csv", required=True)
    _quant_args(b)
    return parser


def inject_outliers(a: np.ndarray, tile_size: int, scale: float = 20.0, seed: int = 0) -> np.ndarray:
    """Scale one random channel in every other tile by ``scale``."""
    out = np.array(a, copy=True)
    c = out.shape[-1]
    rng = np.random.default_rng(seed)
    starts = np.arange(0, c, 2 * tile_size)
    out[..., starts + rng.integers(tile_size, size=starts.size)] *= scale
    return out


def cmd_quantize(args):
    blob = encode_blob(quantize_activation(load_tensor(args.inp), _quant_config(args)))
    with open(args.out, "wb") as f:
        f.write(blob)
    print(f"wrote {len(blob)} bytes to {args.out}")


def cmd_dequantize(args):
    with open(args.inp, "rb") as f:
        comp = decode_blob(f.read())
    save_tensor(args.out, dequantize_activation(comp), dtype=np.float32)
    print(f"wrote {comp.header.shape} tensor to {args.out}")


def cmd_train(args):
    cfg = _train_config(args, args.steps, baseline=args.baseline, strict_theory=args.strict_theory,
                        delta=args.delta, lsmooth=args.lsmooth, eval_steps=(args.steps,))
    res = run_training(cfg, csv_path=args.csv, checkpoint_path=args.checkpoint)
    if res.records:
        print(f"final train loss {res.records[-1].loss:.6g}, "
              f"full-dataset loss {res.eval_losses[args.steps]:.6g}")
    else:
        print("no steps run")


def cmd_validate(args):
    cfg = _train_config(args, args.steps)
    report = run_validation(args.mode, args.steps, cfg)
    report.write_csv(args.csv)
    for k, v in report.summary().items():
        print(f"{k} {v:.6g}")


def cmd_bench(args):
    cfg = _quant_config(args)
    rng = np.random.default_rng(args.seed)
    base = rng.standard_normal(args.shape).astype(np.float32)
    variants = {"gaussian": base, "outlier_x20": inject_outliers(base, cfg.tile_size, seed=args.seed)}
    with open(args.csv, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(BENCH_COLUMNS)
        for name, t in variants.items():
            rep = compression_report(t, cfg)
            w.writerow([name, *args.shape, cfg.tile_size, cfg.high_frac] +
                       [f"{rep[k]:.6g}" for k in BENCH_COLUMNS[6:]])
            print(f"{name}: {rep['bits_per_element']:.4f} bits/elem, "
                  f"x{rep['ratio_vs_fp32']:.2f} vs fp32, transformed {rep['transform_fraction']:.3f}")


COMMANDS = {"quantize": cmd_quantize, "dequantize": cmd_dequantize, "train": cmd_train,
            "validate": cmd_validate, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        COMMANDS[args.command](args)
    except (TahqError, ValueError, OSError) as exc:
        print(f"tahq: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
