"""Command-line entry point: ``tinyeats <command> [options]``.

Commands follow the offline workflow: ``synth`` a corpus, ``train`` a float
model, ``quantize`` it, ``eval``/``compare`` the two paths, ``infer`` on a
recording with the integer engine and ``export`` the container for firmware.
Exit codes: 0 success, 1 usage error, 2 data error, 3 invariant violation.
"""
import argparse
import csv
import logging
import sys
import time
from pathlib import Path
from typing import Callable, List, Optional, Sequence

from pydantic import ValidationError

from tinyeats import __version__
from tinyeats.config import settings
from tinyeats.core.errors import DataError, TinyEatsError, UsageError
from tinyeats.schemas.reports import CommandOutcome, EvalReport
from tinyeats.schemas.training import TrainConfig
from tinyeats.services import corpus, dsp_frontend, model_store, qinfer, trainer
from tinyeats.services.grunet import FloatModel
from tinyeats.services.quantizer import quantize_model

logger = logging.getLogger("tinyeats")


class _Parser(argparse.ArgumentParser):
    """argparse reports its own errors with exit code 2; ours are usage errors."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _distinct_outputs(outputs: Sequence[Optional[str]], inputs: Sequence[Optional[str]]) -> None:
    sources = {Path(p).resolve() for p in inputs if p}
    for out in outputs:
        if out and Path(out).resolve() in sources:
            raise UsageError(f"output {out} would overwrite an input")


def _load_float(path: str) -> FloatModel:
    model = model_store.load_model(path)
    if not isinstance(model, FloatModel):
        raise DataError(f"{path} holds a quantized model, expected a float model")
    return model


def cmd_synth(args: argparse.Namespace) -> CommandOutcome:
    manifest = corpus.build_corpus(args.n_eat, args.n_noneat, args.seed, args.out)
    print(manifest)
    return CommandOutcome(message=f"corpus written, manifest at {manifest}")


def cmd_features(args: argparse.Namespace) -> CommandOutcome:
    _distinct_outputs([args.out], [args.wav])
    windows = dsp_frontend.extract_features(corpus.load_wav(args.wav))
    size = dsp_frontend.write_feature_file(windows, args.out)
    return CommandOutcome(message=f"{len(windows)} windows written to {args.out} ({size} bytes)")


def cmd_train(args: argparse.Namespace) -> CommandOutcome:
    _distinct_outputs([args.out, args.history], [args.manifest])
    config = TrainConfig(epochs=args.epochs, seed=args.seed, qat=args.qat)
    examples = corpus.featurize(corpus.load_manifest(args.manifest), workers=args.workers)
    splits = corpus.split(examples, settings.SPLIT_RATIOS, config.seed)
    result = trainer.train_qat(splits, config) if config.qat else trainer.train(splits, config)
    model_store.save_model(result.model, args.out)
    if args.history:
        trainer.write_history(result.history, args.history)
    _, test_metrics = trainer.evaluate(result.model, splits.test)
    test_loss = trainer.evaluate_loss(result.model, splits.test, result.class_weights)
    logger.info(
        f"Test split: accuracy={test_metrics.accuracy:.4f} f1={test_metrics.f1:.4f} loss={test_loss:.4f}"
    )
    return CommandOutcome(
        message=f"retained epoch {result.best_epoch} of {config.epochs}, saved to {args.out}",
        report={"best_epoch": result.best_epoch, "test": test_metrics.model_dump()},
    )


def cmd_quantize(args: argparse.Namespace) -> CommandOutcome:
    _distinct_outputs([args.out], [args.input])
    qm = quantize_model(_load_float(args.input))
    size = model_store.save_model(qm, args.out)
    return CommandOutcome(message=f"quantized model written to {args.out} ({size} bytes)")


def cmd_eval(args: argparse.Namespace) -> CommandOutcome:
    _distinct_outputs([args.report], [args.model, args.manifest])
    model = model_store.load_model(args.model)
    examples = corpus.featurize(corpus.load_manifest(args.manifest), workers=args.workers)
    if args.split == "test":
        examples = corpus.split(examples, settings.SPLIT_RATIOS, args.seed).test
    counts, metrics = trainer.evaluate(model, examples)
    report = EvalReport(
        accuracy=metrics.accuracy,
        precision=metrics.precision,
        recall=metrics.recall,
        f1=metrics.f1,
        **counts.model_dump(),
    )
    if isinstance(model, FloatModel):
        weights = trainer.class_weights(examples) if len({e.label for e in examples}) == 2 else (1.0, 1.0)
        loss = trainer.evaluate_loss(model, examples, weights)
        logger.info(f"Weighted loss over {len(examples)} windows: {loss:.4f}")
    Path(args.report).write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return CommandOutcome(
        message=f"accuracy {metrics.accuracy:.4f} over {counts.total} windows", report=report.model_dump()
    )


def cmd_infer(args: argparse.Namespace) -> CommandOutcome:
    qm = model_store.load_quant_model(args.model)
    windows = dsp_frontend.extract_features(corpus.load_wav(args.wav), qm.norm)
    elapsed = 0.0
    for i, window in enumerate(windows):
        qw = qinfer.quantize_features(window)
        start = time.perf_counter()
        label, (s0, s1) = qinfer.qforward(qw, qm)
        elapsed += time.perf_counter() - start
        print(f"{i} {label} {s0} {s1}")
    per_window = elapsed * 1000.0 / len(windows) if windows else 0.0
    print(f"inference time per window: {per_window:.3f} ms over {len(windows)} windows", file=sys.stderr)
    if per_window > settings.INFER_BUDGET_MS:
        logger.warning(f"Per-window inference time {per_window:.3f} ms exceeds {settings.INFER_BUDGET_MS} ms")
    return CommandOutcome(message=f"{len(windows)} windows classified")


def cmd_export(args: argparse.Namespace) -> CommandOutcome:
    _distinct_outputs([args.out], [args.input])
    qm = model_store.load_quant_model(args.input)
    Path(args.out).write_text(model_store.export_firmware_array(qm, args.symbol), encoding="utf-8")
    report = model_store.footprint(qm)
    logger.info(
        f"Footprint: {report.container_bytes} bytes ({report.budget_fraction:.1%} of budget, "
        f"{report.flash_fraction:.2%} of flash), activations {report.activation_bytes} bytes "
        f"({report.ram_fraction:.2%} of RAM)"
    )
    return CommandOutcome(message=f"exported {args.symbol} to {args.out}", report=report.model_dump())


def cmd_compare(args: argparse.Namespace) -> CommandOutcome:
    _distinct_outputs([args.trace], [args.float_model, args.quant_model, args.manifest])
    fm = _load_float(args.float_model)
    qm = model_store.load_quant_model(args.quant_model)
    examples = corpus.featurize(corpus.load_manifest(args.manifest), workers=args.workers)
    rate = qinfer.agreement(fm, qm, examples)
    print(f"{rate:.6f}")
    if args.trace:
        with open(args.trace, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["index", "true_label", "float_label", "integer_label"])
            writer.writerows(qinfer.label_trace(fm, qm, examples))
    return CommandOutcome(message=f"label agreement {rate:.4f}", report={"agreement": rate})


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tinyeats", description="Tiny Eats GRU eating-detection pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="Logging level (default: %(default)s)")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = commands.add_parser("synth", help="Write a synthetic corpus and its manifest")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--n-eat", type=int, required=True, help="Number of eating recordings")
    p.add_argument("--n-noneat", type=int, required=True, help="Number of non-eating recordings")
    p.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    p.set_defaults(handler=cmd_synth)

    p = commands.add_parser("features", help="Write the feature windows of one WAV file")
    p.add_argument("--wav", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_features)

    p = commands.add_parser("train", help="Train a float model on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=None, help="Default: 100, or 200 with --qat")
    p.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    p.add_argument("--qat", action="store_true", help="Quantization-aware training")
    p.add_argument("--history", default=None, help="Per-epoch history CSV")
    p.add_argument("--workers", type=int, default=1, help="Featurization threads")
    p.set_defaults(handler=cmd_train)

    p = commands.add_parser("quantize", help="Quantize a float model to int8")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_quantize)

    p = commands.add_parser("eval", help="Write a JSON metrics report for a model")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--split", choices=["all", "test"], default="all")
    p.add_argument("--seed", type=int, default=settings.DEFAULT_SEED, help="Split seed for --split test")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=cmd_eval)

    p = commands.add_parser("infer", help="Classify every 4 s window of a WAV file")
    p.add_argument("--model", required=True)
    p.add_argument("--wav", required=True)
    p.set_defaults(handler=cmd_infer)

    p = commands.add_parser("export", help="Render a quantized model as a C byte array")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--symbol", default="tiny_eats_model")
    p.set_defaults(handler=cmd_export)

    p = commands.add_parser("compare", help="Float/integer label agreement on a manifest")
    p.add_argument("--float", dest="float_model", required=True)
    p.add_argument("--quant", dest="quant_model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--trace", default=None, help="Per-window label CSV")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=cmd_compare)
    return parser


def run(argv: Optional[List[str]] = None) -> CommandOutcome:
    """Parse and execute one command, mapping every failure to its exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return CommandOutcome(exit_code=e.exit_code, message=str(e))

    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )
    handler: Callable[[argparse.Namespace], CommandOutcome] = args.handler
    try:
        outcome = handler(args)
    except TinyEatsError as e:
        logger.error(f"{args.command} failed: {e}")
        return CommandOutcome(exit_code=e.exit_code, message=str(e))
    except ValidationError as e:
        logger.error(f"{args.command}: invalid options: {e}")
        return CommandOutcome(exit_code=UsageError.exit_code, message=str(e))
    except OSError as e:
        logger.error(f"{args.command} failed: {e}")
        return CommandOutcome(exit_code=DataError.exit_code, message=str(e))
    except Exception as e:
        logger.exception(f"{args.command} failed unexpectedly: {e}")
        return CommandOutcome(exit_code=3, message=str(e))
    logger.info(outcome.message)
    return outcome


def main(argv: Optional[List[str]] = None) -> int:
    return run(argv).exit_code


if __name__ == "__main__":
    sys.exit(main())
