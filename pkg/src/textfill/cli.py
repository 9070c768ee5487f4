"""Command-line entry points: train, eval, infer, serve, pretrain-damsm, make-toy."""

from __future__ import annotations

import argparse
import base64
import json
import sys
from pathlib import Path


def _add_train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, dest="out_dir")
    p.add_argument("--mask-mode", choices=["center", "object"], default="center")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--batch", type=int, default=4, dest="batch_size")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--lambda-kl", type=float, default=20.0)
    p.add_argument("--lambda-i", type=float, default=20.0)
    p.add_argument("--lambda-t", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-size", type=int, default=256)
    p.add_argument("--base-channels", type=int, default=32)
    p.add_argument("--latent-dim", type=int, default=256)
    p.add_argument("--mask-area-fraction", type=float, default=0.5,
                   help="area fraction the center mask occludes")
    p.add_argument("--mask-side-fraction", type=float, default=None,
                   help="side-based alternative: mask side = H * fraction (0.5 covers 25%% area)")
    p.add_argument("--save-every", type=int, default=500)
    p.add_argument("--attn-axis", choices=["positions", "words"], default="positions")
    p.add_argument("--no-match-loss", action="store_true")
    p.add_argument("--no-maxpool", action="store_true")
    p.add_argument("--no-dual-attention", action="store_true")
    p.add_argument("--stop-grad-aux", action="store_true")
    p.add_argument("--damsm", default=None, dest="damsm_checkpoint",
                   help="pretrained matching-network checkpoint")


def _train_config(args):
    from .trainer import TrainConfig

    return TrainConfig(
        manifest=args.manifest,
        out_dir=args.out_dir,
        mask_mode=args.mask_mode,
        steps=args.steps,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        lambda_kl=args.lambda_kl,
        lambda_i=args.lambda_i,
        lambda_t=args.lambda_t,
        seed=args.seed,
        image_size=args.image_size,
        base_channels=args.base_channels,
        latent_dim=args.latent_dim,
        mask_area_fraction=args.mask_area_fraction,
        mask_side_fraction=args.mask_side_fraction,
        save_every=args.save_every,
        attn_axis=args.attn_axis,
        no_match_loss=args.no_match_loss,
        no_maxpool=args.no_maxpool,
        no_dual_attention=args.no_dual_attention,
        stop_grad_aux=args.stop_grad_aux,
        damsm_checkpoint=args.damsm_checkpoint,
    )


def cmd_train(args) -> int:
    from .benchmark import render_loss_curves
    from .trainer import Trainer

    trainer = Trainer(_train_config(args))
    trainer.run()
    out = Path(args.out_dir)
    render_loss_curves(out / "loss_log.jsonl", out / "loss_curves.png")
    print(f"trained {trainer.step} steps; checkpoint {trainer.last_checkpoint}")
    return 0


def cmd_pretrain_damsm(args) -> int:
    from .trainer import pretrain_damsm

    path = pretrain_damsm(_train_config(args))
    print(f"matching networks saved to {path}")
    return 0


def cmd_eval(args) -> int:
    from .benchmark import benchmark, write_report
    from .data import load_manifest
    from .trainer import load_checkpoint

    model, vocab, _ = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.manifest, args.split, vocab=vocab)
    modes = ["center", "object"] if args.mask_mode == "both" else [args.mask_mode]
    report = benchmark(model, manifest, modes)
    paths = write_report(report, args.report)
    print(json.dumps(report.to_dict(), indent=2))
    print(f"report: {paths['report']}\nper-image table: {paths['tsv']}\nfigure: {paths['figure']}")
    return 0


def cmd_infer(args) -> int:
    from .serve import InferenceEngine, ServeError

    specs = [s for s in (args.mask, args.box, args.mask_mode) if s]
    if len(specs) != 1:
        print("error: provide exactly one of --mask, --box, --mask-mode", file=sys.stderr)
        return 2
    try:
        engine = InferenceEngine.from_checkpoint(args.checkpoint)
        req = {
            "image": base64.b64encode(Path(args.image).read_bytes()).decode(),
            "text": args.text,
            "samples": args.samples,
            "seed": args.seed,
            "composite": args.composite,
        }
        if args.mask:
            req["mask"] = base64.b64encode(Path(args.mask).read_bytes()).decode()
        elif args.box:
            req["box"] = [float(v) for v in args.box.split(",")]
        else:
            req["mask_mode"] = args.mask_mode
        resp = engine.run(req, dump_attention=args.dump_attention)
    except ServeError as e:
        print(f"error [{e.code}]: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    out = Path(args.out)
    results = resp["results"]
    if len(results) == 1:
        out.write_bytes(base64.b64decode(results[0]))
        print(out)
    else:
        for k, b64 in enumerate(results):
            p = out.with_name(f"{out.stem}_{k}{out.suffix or '.png'}")
            p.write_bytes(base64.b64decode(b64))
            print(p)
    return 0


def cmd_serve(args) -> int:
    from .serve import serve_forever

    serve_forever(args.checkpoint, host=args.host, port=args.port)
    return 0


def cmd_make_toy(args) -> int:
    from .toydata import make_toy_dataset

    manifest = make_toy_dataset(args.out, n=args.n, size=args.size, seed=args.seed)
    print(manifest)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="textfill", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the dual-path model")
    _add_train_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("pretrain-damsm", help="pretrain the image-text matching networks")
    _add_train_args(p)
    p.set_defaults(func=cmd_pretrain_damsm)

    p = sub.add_parser("eval", help="run the benchmark report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="val", choices=["train", "val", "test"])
    p.add_argument("--mask-mode", choices=["center", "object", "both"], default="both")
    p.add_argument("--report", required=True, help="output JSON path (TSV + figure written alongside)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="inpaint one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--mask", default=None, help="binary mask PNG (white = keep)")
    p.add_argument("--box", default=None, help="x,y,w,h region to fill")
    p.add_argument("--mask-mode", default=None, choices=["center"],
                   help="synthesize the 50%%-area center mask")
    p.add_argument("--text", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--composite", choices=["none", "hard"], default="none")
    p.add_argument("--dump-attention", default=None, metavar="DIR",
                   help="write per-word attention maps as grayscale PNGs")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("make-toy", help="generate the deterministic toy dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_toy)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
