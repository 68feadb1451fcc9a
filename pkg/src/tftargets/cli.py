"""Command-line entry point: synth, train, enhance, eval, compare, gradcheck."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import dsp, estimator, experiment, gradcheck, metrics, synthdata
from .enhance import enhance_utterance
from .estimator import TrainConfig
from .objectives import OBJECTIVE_NAMES, ObjectiveId, output_activation_for
from .synthdata import CorpusSpec
from .wavio import read_wav, write_wav

log = logging.getLogger("tftargets")


class CliError(Exception):
    pass


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _objective(text: str) -> ObjectiveId:
    if text.lower() not in OBJECTIVE_NAMES:
        raise argparse.ArgumentTypeError(f"unknown objective {text!r}; choose from {', '.join(OBJECTIVE_NAMES)}")
    return ObjectiveId.parse(text)


def _objectives(text: str) -> tuple[ObjectiveId, ...]:
    if text == "all":
        return tuple(ObjectiveId.parse(n) for n in OBJECTIVE_NAMES)
    return tuple(_objective(t) for t in text.split(","))


def _kinds(text: str) -> tuple[str, ...]:
    kinds = tuple(k.strip() for k in text.split(",") if k.strip())
    for k in kinds:
        if k not in synthdata.NOISE_KINDS:
            raise argparse.ArgumentTypeError(f"unknown noise kind {k!r}; choose from {', '.join(synthdata.NOISE_KINDS)}")
    return kinds


def _add_corpus_flags(p, num_train=200, kinds="white", cycle=False):
    p.add_argument("--num-train", type=int, default=num_train)
    p.add_argument("--num-val", type=int, default=40)
    p.add_argument("--num-test", type=int, default=40)
    p.add_argument("--seconds", type=float, default=1.0, help="utterance length")
    p.add_argument("--noise-kinds", type=_kinds, default=_kinds(kinds))
    p.add_argument("--train-snr", type=_floats, default=synthdata.DEFAULT_SNR_GRID,
                   help="SNR grid (dB) for training and validation mixtures")
    p.add_argument("--cycle-conditions", action=argparse.BooleanOptionalAction, default=cycle,
                   help="one (noise, SNR) condition per utterance instead of the full product")


def _add_train_flags(p, epochs):
    p.add_argument("--epochs", type=int, default=epochs, help="maximum epochs")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=4e-4)
    p.add_argument("--hidden", type=_ints, default=estimator.DEFAULT_HIDDEN, help="hidden layer widths")
    p.add_argument("--audio-only", action="store_true", help="ignore the auxiliary envelope features")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tftargets", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus (WAVs + manifest.tsv)")
    p.add_argument("--corpus-dir", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snr", type=_floats, default=None, help="test-split SNRs (default: the training grid)")
    _add_corpus_flags(p)

    p = sub.add_parser("train", help="fit a model for one objective on a corpus directory")
    p.add_argument("--corpus-dir", type=Path, required=True)
    p.add_argument("--objective", type=_objective, required=True)
    p.add_argument("--model-out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", type=Path, help="write the per-epoch history as TSV")
    _add_train_flags(p, epochs=50)

    p = sub.add_parser("enhance", help="enhance a 16 kHz WAV file")
    p.add_argument("--model-in", type=Path)
    p.add_argument("--identity-mask", action="store_true", help="use an all-ones mask model (debugging)")
    p.add_argument("--objective", type=_objective, help="defaults to the checkpoint's objective")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--aux-wav", type=Path, help="clean reference for auxiliary features, if the model uses them")

    p = sub.add_parser("eval", help="proxy metrics of an enhanced WAV against the clean WAV")
    p.add_argument("--clean", type=Path, required=True)
    p.add_argument("--enhanced", type=Path, required=True)
    p.add_argument("--noisy", type=Path, help="also report the unprocessed mixture")
    p.add_argument("--report", type=Path)

    p = sub.add_parser("compare", help="train every objective and tabulate proxy metrics per SNR")
    p.add_argument("--corpus-dir", type=Path, help="use an existing corpus instead of synthesizing one")
    p.add_argument("--objective", type=_objectives, default=_objectives("all"),
                   help="comma-separated objectives or 'all'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snr", type=_floats, default=synthdata.EVAL_SNR_GRID, help="evaluation SNRs (dB)")
    p.add_argument("--report", type=Path)
    _add_corpus_flags(p, kinds="white,ssn_proxy,babble_proxy", cycle=True)
    _add_train_flags(p, epochs=50)

    p = sub.add_parser("gradcheck", help="finite-difference check of all objective and model gradients")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _train_config(args) -> TrainConfig:
    return TrainConfig(batch_size=args.batch_size, initial_lr=args.lr, max_epochs=args.epochs, seed=args.seed)


def _corpus_spec(args, test_snrs) -> CorpusSpec:
    return CorpusSpec(
        num_utterances=args.num_train, utterance_seconds=args.seconds, noise_kinds=args.noise_kinds,
        snr_grid_db=tuple(args.train_snr), seed=args.seed, num_validation=args.num_val,
        num_test=args.num_test, test_snr_grid_db=None if test_snrs is None else tuple(test_snrs),
        cycle_conditions=args.cycle_conditions,
    )


def cmd_synth(args) -> int:
    corpus = synthdata.build_dataset(_corpus_spec(args, args.snr))
    manifest = synthdata.write_corpus(corpus, args.corpus_dir)
    n = sum(1 for _ in corpus.items())
    print(f"wrote {n} mixtures to {manifest}")
    return 0


def cmd_train(args) -> int:
    corpus = synthdata.load_corpus(args.corpus_dir, splits=("train", "validation"))
    if not corpus.train or not corpus.validation:
        raise CliError(f"{args.corpus_dir}: corpus needs non-empty train and validation splits")
    model, hist = experiment.train_objective(corpus, args.objective, _train_config(args),
                                             args.audio_only, args.hidden)
    estimator.save_model(model, args.model_out)
    print(f"{args.objective.name}: best validation loss {hist.best_val_loss:.6g} at epoch {hist.best_epoch}; "
          f"saved {args.model_out}")
    if args.report:
        lines = ["epoch\ttrain_loss\tval_loss\tlr"]
        for e in hist.epochs:
            val = "" if e.val_loss is None else repr(e.val_loss)
            lines.append(f"{e.epoch}\t{e.train_loss!r}\t{val}\t{e.lr!r}")
        args.report.write_text("\n".join(lines) + "\n")
    return 0


def cmd_enhance(args) -> int:
    if args.identity_mask:
        obj = args.objective or ObjectiveId.parse("stsa-im")
        if not obj.outputs_mask:
            raise CliError("--identity-mask needs a mask objective (IM or MA)")
        model = estimator.constant_model(1.0, output_activation_for(obj), objective=obj.name)
    elif args.model_in:
        if not args.model_in.exists():
            raise CliError(f"model file not found: {args.model_in}")
        model = estimator.load_model(args.model_in)
        obj = args.objective or (ObjectiveId.parse(model.objective) if model.objective else None)
        if obj is None:
            raise CliError("checkpoint has no objective; pass --objective")
    else:
        raise CliError("pass --model-in or --identity-mask")
    noisy = read_wav(args.input)
    aux = None
    if model.aux_dim:
        if not args.aux_wav:
            raise CliError("this model uses auxiliary features; pass --aux-wav with the clean reference")
        clean = read_wav(args.aux_wav)
        n_chunks = -(-dsp.num_frames(len(noisy)) // model.chunk_len)
        aux = synthdata.envelope_features(clean, n_chunks, model.chunk_len)
    result = enhance_utterance(model, obj, noisy, aux)
    write_wav(args.output, result.enhanced)
    print(f"wrote {args.output} ({len(result.enhanced)} samples)")
    return 0


def cmd_eval(args) -> int:
    clean = read_wav(args.clean)
    rows = [("enhanced", metrics.report(clean, read_wav(args.enhanced)))]
    if args.noisy:
        rows.append(("unprocessed", metrics.report(clean, read_wav(args.noisy))))
    lines = ["signal\t" + "\t".join(experiment.METRIC_NAMES)]
    for name, rep in rows:
        lines.append(name + "\t" + "\t".join(f"{getattr(rep, m):.4f}" for m in experiment.METRIC_NAMES))
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.report:
        args.report.write_text(text)
    return 0


def cmd_compare(args) -> int:
    if args.corpus_dir:
        corpus = synthdata.load_corpus(args.corpus_dir)
    else:
        corpus = synthdata.build_dataset(_corpus_spec(args, args.snr))
    if not corpus.train or not corpus.validation or not corpus.test:
        raise CliError("compare needs non-empty train, validation and test splits")
    grid = experiment.compare(corpus, args.objective, _train_config(args), args.snr,
                              args.audio_only, args.hidden)
    text = experiment.format_grid(grid, args.snr)
    sys.stdout.write(text)
    if args.report:
        args.report.write_text(text)
    return 0


def cmd_gradcheck(args) -> int:
    obj_checks, model_checks = gradcheck.run_all(args.seed)
    ok = True
    for a, b in zip(obj_checks, model_checks):
        passed = a.passed and b.passed
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}\t{a.objective.name}\tloss_grad_rel_err={a.rel_error:.3e}"
              f"\tmodel_grad_rel_err={b.rel_error:.3e}")
    return 0 if ok else 1


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "enhance": cmd_enhance,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CliError, ValueError, FileNotFoundError, OSError) as exc:
        print(f"tftargets {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
