"""Command line interface: ``scenecensor train | eval | censor``.

Exit codes: 0 success, 1 usage error, 2 input error (including embedding
provider failures), 3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .bundle import ModelConfig
from .censor import DEFAULT_SIGMA
from .errors import InputError, ProviderError
from .media import DEFAULT_SEGMENT_SECONDS
from .metrics import format_table

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("scenecensor")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scenecensor", description="Detect and censor inappropriate video scenes.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("censor", help="blur and mute inappropriate segments of a Y4M + WAV pair")
    p.add_argument("video", help="input .y4m")
    p.add_argument("audio", help="input .wav (PCM 16-bit mono)")
    p.add_argument("--model", required=True, help="model bundle written by 'train'")
    p.add_argument("--seg-len", type=float, default=DEFAULT_SEGMENT_SECONDS, help="segment length in seconds")
    p.add_argument("--sigma", type=float, default=DEFAULT_SIGMA, help="Gaussian blur sigma in pixels")
    p.add_argument("--provider", default="synthetic",
                   help="embedding provider: synthetic | precomputed:<dir> | external:<cmd>")
    p.add_argument("--workers", type=int, default=None, help="parallel segment workers")
    p.add_argument("--out", required=True, help="output directory for the censored .y4m/.wav")
    p.add_argument("--report", required=True, help="output XML scene report")

    p = sub.add_parser("train", help="fit PCA + SVM on a dataset manifest")
    p.add_argument("--manifest", required=True, help="CSV manifest (id,label,image_emb,audio_emb or id,label,video,audio)")
    p.add_argument("--out", required=True, help="where to write the model bundle")
    p.add_argument("--C", type=float, default=1.0, help="SVM box constraint")
    p.add_argument("--kernel", choices=("rbf", "linear"), default="rbf")
    p.add_argument("--gamma", type=float, default=None, help="RBF gamma (default 1 / (d * var(X)))")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-dim", type=int, default=ModelConfig.image_dim, help="whitened image feature size")
    p.add_argument("--audio-dim", type=int, default=ModelConfig.audio_dim, help="whitened audio feature size")
    p.add_argument("--provider", default="synthetic", help="provider for raw-media manifests")
    p.add_argument("--test-fraction", type=float, default=0.1, help="stratified held-out share (0 disables)")

    p = sub.add_parser("eval", help="cross-validate and score a bundle on its held-out split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, default=20, help="number of folds")
    p.add_argument("--seed", type=int, default=None, help="fold seed (default: the bundle's seed)")
    p.add_argument("--provider", default="synthetic", help="provider for raw-media manifests")
    p.add_argument("--test-fraction", type=float, default=0.1,
                   help="held-out share; must match the value used for 'train'")
    p.add_argument("--json", help="also write the CV report as JSON to this path")
    return parser


def _cmd_censor(args) -> int:
    from .pipeline import CensorOptions, run_censor

    options = CensorOptions(seg_len=args.seg_len, sigma=args.sigma, provider=args.provider, workers=args.workers)
    result = run_censor(args.video, args.audio, args.out, args.report, bundle=args.model, options=options)
    scenes = result.report.scenes
    print(f"{len(scenes)} inappropriate scene(s); wrote {result.video_path}, {result.audio_path}, {result.report_path}")
    for s in scenes:
        print(f"  {s.start:9.3f} s  +{s.duration:.3f} s  score {s.score:.3f}")
    return EXIT_OK


def _provider(spec):
    from .pipeline import make_provider

    return make_provider(spec)


def _cmd_train(args) -> int:
    from .pipeline import run_train

    cfg = ModelConfig(C=args.C, kernel=args.kernel, gamma=args.gamma, seed=args.seed,
                      image_dim=args.image_dim, audio_dim=args.audio_dim)
    result = run_train(args.manifest, args.out, cfg, provider=_provider(args.provider),
                       test_fraction=args.test_fraction)
    fitted = result.bundle.config["fitted"]
    print(f"trained on {result.train_size} items ({fitted['image_dim']}+{fitted['audio_dim']} features, "
          f"{len(result.bundle.svm.dual_coefs)} support vectors); wrote {args.out}")
    if result.test_reports:
        print(format_table(result.test_reports, f"held-out test split ({result.test_size} items)"))
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .media_io import atomic_write
    from .pipeline import run_eval

    result = run_eval(args.manifest, args.model, k=args.k, seed=args.seed, provider=_provider(args.provider),
                      test_fraction=args.test_fraction)
    print(format_table(result.cv.classes, f"{result.cv.folds}-fold cross-validation"))
    if result.test_reports:
        print()
        print(format_table(result.test_reports, "held-out test split"))
    if args.json:
        atomic_write(args.json, result.cv.to_json().encode("utf-8"))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"censor": _cmd_censor, "train": _cmd_train, "eval": _cmd_eval}[args.command]
    try:
        return handler(args)
    except (InputError, ProviderError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.debug("internal error", exc_info=True)
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
