"""fds-prep: convert CIFAR-style archives to FDS and emit class splits."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .convert import ConversionManifest, convert, make_split


def cmd_convert(args):
    manifest = convert(args.infile, args.out, args.downscale)
    print(f"{manifest.layout}: wrote {manifest.outputs['train']} "
          f"({sum(manifest.train_counts)} samples) and {manifest.outputs['test']} "
          f"({sum(manifest.test_counts)} samples); manifest -> {args.out}/manifest.json")


def cmd_make_split(args):
    manifest = ConversionManifest.from_json(Path(args.manifest).read_text())
    out = args.out or str(Path(args.manifest).parent / "split.json")
    split = make_split(manifest, args.base, args.way, args.sessions, args.seed, out)
    sizes = [len(split["base"])] + [len(s) for s in split["sessions"]]
    print(f"split sizes {sizes} -> {out}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fds-prep")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="archive -> train.fds/test.fds + manifest")
    p.add_argument("--in", dest="infile", required=True,
                   help="archive directory or .tar(.gz)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--downscale", type=int, default=None,
                   help="area-average images down to SxS (S divides 32)")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("make-split", help="seeded class-to-session assignment")
    p.add_argument("--manifest", required=True)
    p.add_argument("--base", type=int, required=True)
    p.add_argument("--way", type=int, required=True)
    p.add_argument("--sessions", type=int, required=True)
    p.add_argument("--seed", type=lambda v: int(v) & (2**64 - 1), default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_make_split)

    args = parser.parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
