"""Command-line front end.

Exit codes: 0 success, 2 configuration/parameter error, 3 file I/O
error, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import data as datamod
from .attacks import AttackConfig, run_attack
from .errors import CadlabError, FormatError, ParameterError
from .harness import (
    ExperimentGrid,
    Report,
    dump_samples,
    emit_table,
    run_experiment,
)
from .imagecore import psnr, read_netpbm, write_netpbm
from .model import (
    TrainConfig,
    accuracy,
    load_model,
    predict_batch,
    quantize_for_classifier,
    save_model,
    train,
)
from .ratecontrol import (
    CODEC_DCT,
    CODEC_WAVELET,
    RateTarget,
    compress_max,
    compress_to_psnr_dct,
    compress_to_psnr_wavelet,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INTERNAL = 4


def _load_model_file(path):
    with open(path, "rb") as f:
        return load_model(f.read())


def _cmd_train(args):
    dataset = datamod.load_dataset(args.dataset, split="train")
    hidden = tuple(int(h) for h in args.hidden.split(",")) if args.hidden else (128, 64)
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        seed=args.seed,
        hidden_sizes=hidden,
    )
    model = train(dataset, cfg)
    with open(args.out, "wb") as f:
        f.write(save_model(model))
    print(f"train accuracy {accuracy(model, dataset):.4f} -> {args.out}")
    return EXIT_OK


def _cmd_attack(args):
    model = _load_model_file(args.model)
    img = read_netpbm(args.image)
    cfg = AttackConfig(
        kind=args.kind,
        epsilon=args.epsilon,
        alpha=args.alpha,
        iterations=args.iterations,
    )
    adv = run_attack(model, img, args.label, cfg)
    write_netpbm(adv, args.out)
    print(f"{args.kind} eps={args.epsilon:g}: psnr vs input "
          f"{psnr(img, adv):.2f} dB -> {args.out}")
    return EXIT_OK


def _cmd_compress(args):
    img = read_netpbm(args.image)
    ref = read_netpbm(args.reference) if args.reference else None
    if args.max:
        res = compress_max(img, args.codec, reference=ref)
    elif args.target is not None:
        target = RateTarget(args.target, reference=ref)
        if args.codec == CODEC_DCT:
            res = compress_to_psnr_dct(img, target)
        else:
            res = compress_to_psnr_wavelet(img, target)
    else:
        raise ParameterError("need --target DB or --max")
    with open(args.out, "wb") as f:
        f.write(res.stream)
    if args.decoded_out:
        write_netpbm(quantize_for_classifier(res.decoded()), args.decoded_out)
    print(f"{args.codec}: {res.byte_size} bytes, {res.achieved_db:.4f} dB, "
          f"exact_hit={res.exact_hit}")
    return EXIT_OK


def _cmd_classify(args):
    model = _load_model_file(args.model)
    for path in args.images:
        img = quantize_for_classifier(read_netpbm(path))
        pred = int(predict_batch(model, [img])[0])
        print(f"{path}\t{pred}")
    return EXIT_OK


def _attack_list(raw):
    out = []
    for a in raw:
        out.append(AttackConfig(
            kind=a["kind"],
            epsilon=float(a["epsilon"]),
            alpha=float(a.get("alpha", 1.0)),
            iterations=a.get("iterations"),
        ))
    return tuple(out)


def _grid_from_config(path):
    with open(path) as f:
        doc = json.load(f)
    try:
        return ExperimentGrid(
            dataset_dir=doc["dataset_dir"],
            model_path=doc["model_path"],
            attacks=_attack_list(doc["attacks"]),
            codecs=tuple(doc.get("codecs", (CODEC_DCT, CODEC_WAVELET))),
            psnr_targets=tuple(doc.get("psnr_targets", (23.0, 25.0, 28.0, 31.0))),
            include_max_compression=doc.get("include_max_compression", True),
            include_uncompressed_baseline=doc.get(
                "include_uncompressed_baseline", True
            ),
            adversarial_reference=doc.get("adversarial_reference", True),
            seeds=tuple(doc.get("seeds", (0,))),
            output_dir=doc.get("output_dir", "."),
            max_images=doc.get("max_images"),
        )
    except KeyError as e:
        raise ParameterError(f"experiment config missing key {e}") from e


def _cmd_experiment(args):
    grid = _grid_from_config(args.config)
    report = run_experiment(grid)
    with open(args.out, "wb") as f:
        f.write(report.to_json())
    print(f"{len(report.cells)} cells -> {args.out}")
    return EXIT_OK


def _cmd_table(args):
    with open(args.report, "rb") as f:
        report = Report.from_json(f.read())
    rendered = emit_table(report, args.format)
    if args.out:
        with open(args.out, "wb") as f:
            f.write(rendered)
    else:
        sys.stdout.write(rendered.decode())
    return EXIT_OK


def _cmd_dump(args):
    grid = _grid_from_config(args.config)
    model = _load_model_file(grid.model_path)
    dataset = datamod.load_dataset(grid.dataset_dir)
    manifest = dump_samples(model, dataset, grid, args.n, args.out)
    print(manifest)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="cadlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train the classifier on a dataset directory")
    t.add_argument("--dataset", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--learning-rate", type=float, default=0.1)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--hidden", default=None, help="comma-separated layer sizes")
    t.set_defaults(func=_cmd_train)

    a = sub.add_parser("attack", help="write an adversarial version of one image")
    a.add_argument("--model", required=True)
    a.add_argument("--image", required=True)
    a.add_argument("--label", type=int, required=True)
    a.add_argument("--kind", choices=("fgsm", "bim"), default="fgsm")
    a.add_argument("--epsilon", type=float, required=True)
    a.add_argument("--alpha", type=float, default=1.0)
    a.add_argument("--iterations", type=int, default=None)
    a.add_argument("--out", required=True)
    a.set_defaults(func=_cmd_attack)

    c = sub.add_parser("compress", help="compress an image to a PSNR target")
    c.add_argument("--image", required=True)
    c.add_argument("--codec", choices=(CODEC_DCT, CODEC_WAVELET), required=True)
    c.add_argument("--target", type=float, default=None)
    c.add_argument("--max", action="store_true", help="maximum compression")
    c.add_argument("--reference", default=None, help="PSNR reference image")
    c.add_argument("--out", required=True)
    c.add_argument("--decoded-out", default=None)
    c.set_defaults(func=_cmd_compress)

    k = sub.add_parser("classify", help="predict class indices for images")
    k.add_argument("--model", required=True)
    k.add_argument("images", nargs="+")
    k.set_defaults(func=_cmd_classify)

    e = sub.add_parser("experiment", help="run a full grid from a JSON config")
    e.add_argument("--config", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=_cmd_experiment)

    tb = sub.add_parser("table", help="render a report as CSV or markdown")
    tb.add_argument("--report", required=True)
    tb.add_argument("--format", choices=("csv", "markdown"), default="markdown")
    tb.add_argument("--out", default=None)
    tb.set_defaults(func=_cmd_table)

    d = sub.add_parser("dump", help="write sample image triplets with a manifest")
    d.add_argument("--config", required=True)
    d.add_argument("--n", type=int, default=1)
    d.add_argument("--out", required=True)
    d.set_defaults(func=_cmd_dump)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, FormatError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except (CadlabError, AssertionError) as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
