"""
svcq:
  train segmentation-variant codebooks, encode corpora into parallel DSU
  streams, fuse them back to frame sequences, account their bitrate and probe
  what the representations retain.
"""

import argparse as _argparse
import json as _json
import logging as _logging
import sys as _sys
from multiprocessing import freeze_support as _freeze_support
from pathlib import Path as _Path

import svcq as _svcq
from .codebook import MODEL_MANIFEST as _MODEL_MANIFEST
from .codebook import SVCB_MAGIC as _SVCB_MAGIC
from .codebook import load_codebook as _load_codebook
from .codebook import load_model as _load_model
from .codebook import read_codebook_header as _read_codebook_header
from .codebook import save_model as _save_model
from .codec import corpus_bitrate as _corpus_bitrate
from .codec import decode_fused as _decode_fused
from .codec import encode_corpus as _encode_corpus
from .codec import load_corpus as _load_corpus
from .codec import train_svc_from_utterances as _train_svc_from_utterances
from .codec import utterance_bitrate as _utterance_bitrate
from .environment import Environment as _Environment
from .errors import CorpusError as _CorpusError
from .errors import EmptySplit as _EmptySplit
from .errors import InvalidValue as _InvalidValue
from .errors import SvcqError as _SvcqError
from .features import FMAT_MAGIC as _FMAT_MAGIC
from .features import loads_features as _loads_features
from .features import read_fmat_header as _read_fmat_header
from .features import save_features as _save_features
from .io_tools import get_files_in_patterns as _get_files_in_patterns
from .logging_tools import TqdmHandler as _TqdmHandler
from .manifest import load_manifest as _load_manifest
from .probe import Task as _Task
from .probe import evaluate as _evaluate
from .probe import train_probe as _train_probe
from .probe_inputs import INPUT_KINDS as _INPUT_KINDS
from .probe_inputs import SEGMENT_KINDS as _SEGMENT_KINDS
from .probe_inputs import build_probe_dataset as _build_probe_dataset
from .progress_bar import StageProgress as _StageProgress
from .progress_bar import corpus_progress as _corpus_progress
from .streams import load_encoded as _load_encoded
from .streams import save_encoded as _save_encoded
from .tier import ALL_TIERS as _ALL_TIERS
from .tier import SEGMENT_TIERS as _SEGMENT_TIERS
from .tier import Tier as _Tier

_LOGGER = _logging.getLogger("svcq")

EXIT_SUCCESS = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _setup_logger(log_level=_logging.WARNING, log_file=None):
    """Setup the root namespace logger of the svcq module"""
    logger = _logging.getLogger("svcq")
    logger.setLevel(_logging.DEBUG)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    ch = _TqdmHandler()
    ch.setLevel(log_level)
    ch.setFormatter(_logging.Formatter("%(message)s"))
    logger.addHandler(ch)

    if log_file is not None:
        fh = _logging.FileHandler(log_file, mode="w")
        fh.setLevel(_logging.DEBUG)
        fh.setFormatter(
            _logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
        )
        logger.addHandler(fh)


def _existing_file(text):
    path = _Path(text)
    if not path.is_file():
        raise _argparse.ArgumentTypeError(f"no such file: '{text}'")
    return path


def _existing_directory(text):
    path = _Path(text)
    if not path.is_dir():
        raise _argparse.ArgumentTypeError(f"no such directory: '{text}'")
    return path


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise _argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _common_options():
    parser = _argparse.ArgumentParser(add_help=False)
    parser.add_argument(
        "-V", "--verbose", help="activate more detailed output", action="store_true"
    )
    parser.add_argument(
        "--debug",
        help="activates additional debug output, overrides verbosity option.",
        action="store_true",
    )
    parser.add_argument(
        "-p",
        "--progress",
        help="activates a progress bar output",
        action="store_true",
        default=None,
    )
    parser.add_argument(
        "-j",
        "--jobs",
        type=_positive_int,
        help="number of worker processes (default: available parallelism)",
    )
    parser.add_argument("--config", type=_existing_file, help="TOML configuration file")
    parser.add_argument("--log-file", type=_Path, help="also write a debug log here")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--phone-tier", help="name of the phone tier in TextGrids")
    parser.add_argument("--word-tier", help="name of the word tier in TextGrids")
    parser.add_argument(
        "--silence-labels",
        help="comma separated labels treated as silence, e.g. ',sil,sp,spn'",
    )
    return parser


def parse_args(args):
    _command_line_description = (
        "`svcq` quantizes frame-wise speech features with one codebook per "
        "segmentation tier (frame, phone, word, utterance), encodes corpora into "
        "parallel streams of discrete units, fuses them back into frame sequences, "
        "reports bitrates and evaluates linear probes."
    )
    common = _common_options()
    parser = _argparse.ArgumentParser(
        prog="svcq",
        description=_command_line_description,
        formatter_class=_argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument(
        "--version", action="version", version=f"svcq {_svcq.__version__}"
    )
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    train = commands.add_parser(
        "train", parents=[common], help="train the four tier codebooks"
    )
    train.add_argument("manifest", type=_existing_file, help="corpus manifest (JSON lines)")
    train.add_argument("-o", "--output", type=_Path, required=True, help="model directory")
    train.add_argument(
        "-k",
        "--k-per-tier",
        type=_positive_int,
        nargs=4,
        metavar=("FRAME", "PHONE", "WORD", "UTTERANCE"),
        help="vocabulary size of every tier",
    )
    for tier in _ALL_TIERS:
        train.add_argument(
            f"--k-{tier}", type=_positive_int, help=f"vocabulary size of the {tier} tier"
        )
    train.add_argument("--max-iters", type=_positive_int, help="Lloyd iteration limit")
    train.add_argument("--tol", type=float, help="centroid displacement tolerance")
    train.add_argument(
        "--standardize",
        action="store_true",
        default=None,
        help="cluster in per-dimension standardized space",
    )
    train.add_argument(
        "--pooling",
        choices=["pre", "post"],
        default="pre",
        help="pool segments before or after frame quantization",
    )

    encode = commands.add_parser(
        "encode", parents=[common], help="encode a corpus into DSU streams"
    )
    encode.add_argument("model", type=_Path, help="model directory")
    encode.add_argument("manifest", type=_existing_file, help="corpus manifest")
    encode.add_argument("-o", "--output", type=_Path, required=True, help="output directory")
    encode.add_argument(
        "--split",
        choices=["all", "train", "valid", "test"],
        default="all",
        help="manifest split to encode",
    )
    encode.add_argument(
        "--pooling", choices=["pre", "post"], help="override the model's pooling mode"
    )
    encode.add_argument(
        "--baseline-frames-only",
        action="store_true",
        help="report the bitrate of the frame stream alone",
    )

    fuse = commands.add_parser(
        "fuse", parents=[common], help="fuse encoded streams into frame sequences"
    )
    fuse.add_argument("model", type=_Path, help="model directory")
    fuse.add_argument("encoded", type=_existing_directory, help="directory of encodings")
    fuse.add_argument("-o", "--output", type=_Path, required=True, help="output directory")
    fuse.add_argument(
        "--tiers",
        type=_Tier,
        nargs="+",
        choices=list(_ALL_TIERS),
        default=list(_ALL_TIERS),
        help="streams to average (the frame stream is always included)",
    )

    bitrate = commands.add_parser(
        "bitrate", parents=[common], help="bitrate of encoded utterances"
    )
    bitrate.add_argument("model", type=_Path, help="model directory")
    bitrate.add_argument("encoded", type=_existing_directory, help="directory of encodings")
    bitrate.add_argument(
        "--frames-only", action="store_true", help="count the frame stream alone"
    )

    probe = commands.add_parser(
        "probe", parents=[common], help="train and evaluate a linear probe"
    )
    probe.add_argument(
        "manifest", type=_existing_file, help="manifest providing the train split"
    )
    probe.add_argument("--valid", type=_existing_file, help="manifest of the valid split")
    probe.add_argument("--test", type=_existing_file, help="manifest of the test split")
    probe.add_argument(
        "--input-kind", choices=_INPUT_KINDS, required=True, help="probe inputs"
    )
    probe.add_argument(
        "--task",
        type=_Task,
        choices=list(_Task),
        default=_Task.Multiclass,
        help="softmax (multiclass) or sigmoid (binary) probe",
    )
    probe.add_argument("--label", required=True, help="label key in the manifest entries")
    probe.add_argument("--model", type=_Path, help="model directory (quantized inputs)")
    probe.add_argument(
        "--tier",
        type=_Tier,
        choices=list(_SEGMENT_TIERS),
        help="segment tier of pooled inputs",
    )
    probe.add_argument("--class-names", nargs="+", help="names of the classes, in id order")
    probe.add_argument(
        "--class-weights", type=float, nargs="+", help="loss weight of every class"
    )
    probe.add_argument("--learning-rate", type=float, help="gradient descent step size")
    probe.add_argument("--epochs", type=int, help="maximum number of epochs")
    probe.add_argument("--batch-size", type=_positive_int, help="mini-batch size")
    probe.add_argument("--patience", type=_positive_int, help="early stopping patience")
    probe.add_argument("-o", "--report", type=_Path, required=True, help="report JSON path")

    inspect = commands.add_parser(
        "inspect", parents=[common], help="show headers of model and data files"
    )
    inspect.add_argument("paths", type=_Path, nargs="+", help="files or model directories")

    return parser.parse_args(args=args)


def _settings(args):
    settings = {
        key: value
        for key, value in vars(args).items()
        if key not in ("command", "verbose", "debug")
    }
    if getattr(args, "k_per_tier", None):
        for tier, k in zip(_ALL_TIERS, args.k_per_tier):
            if settings.get(f"k_{tier}") is None:
                settings[f"k_{tier}"] = k
    return settings


def _print_json(data):
    print(_json.dumps(data, indent=2, sort_keys=True))


def _output_name(utterance_id):
    return utterance_id.replace("/", "__").replace("\\", "__")


def train(args, environment):
    stages = ["Load corpus", "Train", "Write model"]
    with _StageProgress(stages, not environment.progress) as stages_bar:
        manifest = _load_manifest(args.manifest)
        entries = manifest.split("train")
        if not entries:
            raise _EmptySplit(f"manifest {args.manifest} has no train entries")
        utterances = _load_corpus(
            entries, environment.alignment_options(), environment.jobs, environment.progress
        )
        stages_bar.advance()
        model = _train_svc_from_utterances(
            utterances,
            environment.k_per_tier(),
            environment.seed,
            environment.kmeans_params(),
            args.pooling,
        )
        stages_bar.advance()
        _save_model(model, args.output)
        stages_bar.advance()

    _print_json(
        {
            "model": str(args.output),
            "utterances": len(utterances),
            "tiers": {
                str(tier): dict(
                    model.training_stats[tier].to_dict(), k=model.codebook(tier).k
                )
                for tier in _ALL_TIERS
            },
        }
    )


def _bitrate_summary(reports, frames_only):
    summary = {"frames_only": frames_only, "utterances": len(reports)}
    if reports:
        summary.update(_corpus_bitrate(reports).to_dict())
    summary["reports"] = [report.to_dict() for report in reports]
    return summary


def encode(args, environment):
    model = _load_model(args.model)
    manifest = _load_manifest(args.manifest)
    entries = manifest.entries if args.split == "all" else manifest.split(args.split)
    encodings = _encode_corpus(
        model,
        entries,
        environment.alignment_options(),
        args.pooling,
        environment.jobs,
        environment.progress,
    )
    args.output.mkdir(parents=True, exist_ok=True)
    reports = []
    for encoded in encodings:
        _save_encoded(encoded, args.output / f"{_output_name(encoded.utterance_id)}.json")
        reports.append(_utterance_bitrate(encoded, model, args.baseline_frames_only))

    summary = _bitrate_summary(reports, args.baseline_frames_only)
    if reports:
        print(
            f"Encoded {len(reports)} utterances: {summary['mean_bps']:.2f} bps"
            f" (utterance mean), {summary['totals_bps']:.2f} bps (corpus totals)",
            file=_sys.stderr,
        )
    else:
        print("Encoded 0 utterances", file=_sys.stderr)
    _print_json(summary)


def _encoded_files(directory):
    return _get_files_in_patterns([str(_Path(directory) / "*.json")], recursive=False)


def _load_encodings(directory, progress):
    encodings = []
    errors = {}
    files = _encoded_files(directory)
    for path in _corpus_progress(files, not progress, len(files), "Load"):
        try:
            encodings.append(_load_encoded(path))
        except _SvcqError as error:
            errors[path.name] = f"{type(error).__name__}: {error}"
    if errors:
        raise _CorpusError(f"could not read {len(errors)} encoding(s)", errors)
    return encodings


def fuse(args, environment):
    model = _load_model(args.model)
    encodings = _load_encodings(args.encoded, environment.progress)
    args.output.mkdir(parents=True, exist_ok=True)
    errors = {}
    written = []
    for encoded in _corpus_progress(
        encodings, not environment.progress, len(encodings), "Fuse"
    ):
        try:
            fused = _decode_fused(model, encoded, args.tiers)
        except _SvcqError as error:
            errors[encoded.utterance_id] = f"{type(error).__name__}: {error}"
            continue
        path = args.output / f"{_output_name(encoded.utterance_id)}.fmat"
        _save_features(fused.to_feature_matrix(encoded.frame_hop), path)
        written.append({"id": encoded.utterance_id, "path": str(path), "frames": fused.num_frames})
    if errors:
        raise _CorpusError(f"fusion failed for {len(errors)} utterance(s)", errors)

    print(f"Fused {len(written)} utterances", file=_sys.stderr)
    _print_json(
        {
            "utterances": len(written),
            "tiers": [str(tier) for tier in sorted(set(args.tiers) | {_Tier.Frame})],
            "outputs": written,
        }
    )


def bitrate(args, environment):
    model = _load_model(args.model)
    encodings = _load_encodings(args.encoded, environment.progress)
    reports = [_utterance_bitrate(encoded, model, args.frames_only) for encoded in encodings]
    print(f"Measured {len(reports)} utterances", file=_sys.stderr)
    _print_json(_bitrate_summary(reports, args.frames_only))


def probe(args, environment):
    if args.input_kind != "continuous" and args.model is None:
        raise _InvalidValue(f"input kind '{args.input_kind}' needs --model")
    model = _load_model(args.model) if args.model is not None else None
    if model is not None and args.input_kind in _SEGMENT_KINDS:
        wanted = "post" if args.input_kind == "post-pooled" else "pre"
        if model.pooling != wanted:
            _LOGGER.warning(
                "Model was trained with %s pooling, probing %s inputs",
                model.pooling,
                args.input_kind,
            )

    train_manifest = _load_manifest(args.manifest)
    splits = {
        "train": train_manifest,
        "valid": _load_manifest(args.valid) if args.valid else train_manifest,
        "test": _load_manifest(args.test) if args.test else train_manifest,
    }
    datasets = {}
    for split, manifest in splits.items():
        entries = manifest.split(split)
        if not entries:
            raise _EmptySplit(f"manifest {manifest.path} has no {split} entries")
        datasets[split] = _build_probe_dataset(
            args.input_kind,
            entries,
            args.label,
            model,
            split,
            args.tier,
            environment.alignment_options(),
            environment.jobs,
            environment.progress,
        )

    num_classes = None
    if args.task == _Task.Multiclass:
        num_classes = len(args.class_names) if args.class_names else max(
            int(dataset.labels.max()) + 1 for dataset in datasets.values()
        )
        num_classes = max(num_classes, 2)
    class_weights = tuple(args.class_weights) if args.class_weights else None
    linear_probe, log = _train_probe(
        datasets["train"],
        datasets["valid"],
        args.task,
        environment.probe_hyper_params(class_weights),
        num_classes,
    )
    report = _evaluate(linear_probe, datasets["test"], args.class_names or ())

    document = report.to_dict()
    document.update(
        input_kind=args.input_kind,
        label=args.label,
        examples={split: len(dataset) for split, dataset in datasets.items()},
        training=log.to_dict(),
    )
    args.report.parent.mkdir(parents=True, exist_ok=True)
    args.report.write_text(_json.dumps(document, indent=2, sort_keys=True))
    metric, value = report.headline
    _print_json({"metric": metric, "value": value, "report": str(args.report)})


def _inspect_path(path):
    if path.is_dir():
        model = _load_model(path)
        return {
            "path": str(path),
            "format": _MODEL_MANIFEST,
            "dim": model.dim,
            "frame_hop": model.frame_hop,
            "pooling": model.pooling,
            "standardized": model.standardizer is not None,
            "vocabulary_sizes": {
                str(tier): k for tier, k in model.vocabulary_sizes().items()
            },
        }
    data = path.read_bytes()
    if data[:4] == _FMAT_MAGIC:
        header = _read_fmat_header(data)
        _loads_features(data, name=str(path))
    elif data[:4] == _SVCB_MAGIC:
        header = _read_codebook_header(data)
        _load_codebook(data, name=str(path))
    else:
        encoded = _load_encoded(path)
        header = {
            "format": "encoded utterance",
            "id": encoded.utterance_id,
            "duration": encoded.duration,
            "frame_hop": encoded.frame_hop,
            "stream_lengths": {
                str(tier): length for tier, length in encoded.stream_lengths().items()
            },
        }
    return dict(header, path=str(path), checksum="ok")


def inspect(args, environment):
    _print_json([_inspect_path(path) for path in args.paths])


_COMMANDS = {
    "train": train,
    "encode": encode,
    "fuse": fuse,
    "bitrate": bitrate,
    "probe": probe,
    "inspect": inspect,
}


def main(argv=None):
    """Run svcq with ``argv`` and return the exit status (usage errors exit with 2)."""
    args = parse_args(_sys.argv[1:] if argv is None else argv)

    # Logger verbosity
    if args.debug:
        _setup_logger(_logging.DEBUG, args.log_file)
    elif args.verbose:
        _setup_logger(_logging.INFO, args.log_file)
    else:
        _setup_logger(_logging.WARNING, args.log_file)
    _LOGGER.info("svcq %s", _svcq.__version__)

    try:
        environment = _Environment(_settings(args))
        _COMMANDS[args.command](args, environment)
    except _CorpusError as corpus_error:
        _LOGGER.error("%s:", corpus_error)
        for utterance_id, error in corpus_error.error_dict.items():
            _LOGGER.error("[%s]: %s", utterance_id, error)
        return EXIT_FAILURE
    except (_SvcqError, OSError) as error:
        _LOGGER.error("%s: %s", type(error).__name__, error)
        return EXIT_FAILURE
    return EXIT_SUCCESS


def _main():
    _sys.exit(main())


if __name__ == "__main__":
    _freeze_support()
    _main()
