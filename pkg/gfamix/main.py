import argparse
import logging
import os
import sys
from importlib.metadata import PackageNotFoundError, version

from gfamix import LOG_FORMAT, LOG_HANDLER, SOURCE_LOG_FORMAT, log_formatter
from gfamix.config import COMMANDS, build_run_config
from gfamix.dataset import read_dataset, write_dataset
from gfamix.errors import ExitCode, GfaMixError
from gfamix.evaluation import DEFAULT_CLASSIFIERS, make_classifier, resample_eval
from gfamix.export import (
    format_rows,
    render_auc_svg,
    write_comparison,
    write_draws,
    write_elbo_trace,
    write_eval_report,
    write_panels,
)
from gfamix.inference import fit
from gfamix.model import default_hyperparameters, make_weak_signal_benchmark
from gfamix.predict import cluster_erps, predict
from gfamix.serialization import load_model, save_ground_truth, save_model
from gfamix.utils import write_document

log = logging.getLogger(__name__)

GROUND_TRUTH_NAME = "ground_truth.yaml"
LOG_FORMATS = {"default": LOG_FORMAT, "source": SOURCE_LOG_FORMAT}


def cli_main():
    args = sys.argv[1:]
    sys.exit(main(args))


def _installed_version():
    try:
        return version("gfamix")
    except PackageNotFoundError:
        return "unknown"


def _train_sizes(value):
    try:
        sizes = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got '{value}'")
    return sizes


def _common_arguments():
    parser = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    parser.add_argument("--data", help="Path to a dataset manifest (or output directory)")
    parser.add_argument("--model", help="Path to a trained model document")
    parser.add_argument("--out", help="Output file or directory, depending on the command")
    parser.add_argument("--seed", type=int, help="Seed for every random draw (default 0)")
    parser.add_argument("--K", type=int, help="Number of cluster-specific factors")
    parser.add_argument("--K-hat", dest="K_hat", type=int, help="Number of shared factors")
    parser.add_argument("--S", type=int, help="Number of clusters")
    parser.add_argument("--beta-weight", type=float, help="Exponent on the label likelihood")
    parser.add_argument(
        "--shared-ard-shape", type=float, help="Shape of the shared factors' ARD prior"
    )
    parser.add_argument("--max-iter", type=int, help="Maximum number of update cycles")
    parser.add_argument("--tol", type=float, help="Relative bound change that ends the fit")
    parser.add_argument(
        "--prune-threshold",
        type=float,
        help="Remove factors whose ARD variance falls below this value",
    )
    parser.add_argument(
        "--classifier",
        help=f"One of {', '.join(DEFAULT_CLASSIFIERS)} (evaluate only)",
    )
    parser.add_argument(
        "--train-sizes", type=_train_sizes, help="Comma separated training set sizes"
    )
    parser.add_argument("--test-size", type=int, help="Test set size per draw")
    parser.add_argument("--repeats", type=int, help="Number of draws per training set size")
    parser.add_argument("--N", type=int, help="Number of simulated samples")
    parser.add_argument("--M", type=int, help="Number of simulated views")
    parser.add_argument("--D", type=int, help="Dimension of each simulated view")
    parser.add_argument(
        "--signal-ratio", type=float, help="Shared to cluster-specific loading norm ratio"
    )
    parser.add_argument(
        "--noise-precision", type=float, help="Precision of the simulated isotropic noise"
    )
    parser.add_argument(
        "--svg", action="store_true", default=None, help="Also plot mean AUC as an SVG"
    )
    parser.add_argument(
        "--verbosity",
        "-v",
        default="INFO",
        help="Level to set the gfamix logger to",
    )
    parser.add_argument(
        "--logging-format",
        default=LOG_FORMAT,
        help='Format used when logging; "source" adds file, function and line',
    )
    return parser


def _parser():
    common = _common_arguments()
    parser = argparse.ArgumentParser(
        description="Classifying mixtures of group factor analyzers with shared factors",
        formatter_class=argparse.RawTextHelpFormatter,
        allow_abbrev=False,
    )
    parser.add_argument(
        "--version",
        action="version",
        version=_installed_version(),
        help="The version of gfamix installed",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "simulate": "Write the weak-signal benchmark dataset and its ground truth",
        "train": "Fit the mixture to a labelled dataset",
        "predict": "Score new samples with a trained model",
        "evaluate": "Resampled AUC of one classifier against training set size",
        "reconstruct": "Write trial-averaged cluster-specific and shared reconstructions",
        "compare": "Resampled AUC of every classifier on paired draws",
    }
    for command in COMMANDS:
        subparsers.add_parser(
            command, parents=[common], help=descriptions[command], allow_abbrev=False
        )
    return parser


def main(raw_args, logger=log):
    args = _parser().parse_args(raw_args)

    logging_level = logging.__dict__.get(args.verbosity.upper())
    if not isinstance(logging_level, int):
        logger.error("Unknown verbosity level '%s'", args.verbosity)
        return ExitCode.VALIDATION
    logging.getLogger("gfamix").setLevel(logging_level)
    LOG_HANDLER.setLevel(logging_level)
    logging_format = LOG_FORMATS.get(args.logging_format, args.logging_format)
    LOG_HANDLER.setFormatter(log_formatter(logging_format))

    config = build_run_config(args, logger)
    if config is None:
        return ExitCode.VALIDATION

    try:
        return COMMAND_HANDLERS[config.command](config, logger)
    except GfaMixError as err:
        logger.error("%s", err)
        return err.exit_code
    except OSError as err:
        logger.error("%s", err)
        return ExitCode.IO


def _require(config, logger, *names):
    missing = [
        flag
        for flag, attribute in [
            ("--data", "dataset_path"),
            ("--model", "model_path"),
            ("--out", "output_path"),
        ]
        if attribute in names and getattr(config, attribute) is None
    ]
    for flag in missing:
        logger.error("The %s command needs %s", config.command, flag)
    return not missing


def _sibling(path, suffix):
    return os.path.splitext(path)[0] + suffix


def cmd_simulate(config, logger=log):
    if not _require(config, logger, "output_path"):
        return ExitCode.VALIDATION
    options = config.options
    params, dataset, latents = make_weak_signal_benchmark(
        options["n_samples"],
        options["n_views"],
        options["view_dim"],
        config.seed,
        signal_ratio=options["signal_ratio"],
        noise_precision=options["noise_precision"],
    )
    manifest = write_dataset(dataset, config.output_path)
    save_ground_truth(params, latents, os.path.join(config.output_path, GROUND_TRUTH_NAME))
    logger.info("Wrote %d samples to %s", dataset.n_samples, manifest)
    return ExitCode.OK


def cmd_train(config, logger=log):
    if not _require(config, logger, "dataset_path", "model_path"):
        return ExitCode.VALIDATION
    options = config.options
    hyper = default_hyperparameters(
        options["K"], options["K_hat"], options["S"], **config.overrides
    )
    dataset = read_dataset(config.dataset_path)
    dataset.require_labels()
    model = fit(dataset, hyper, config.seed, logger=logger)
    save_model(model, config.model_path)
    trace_path = config.output_path or _sibling(config.model_path, "_elbo.csv")
    write_elbo_trace(model.elbo_trace, trace_path)
    if not model.converged:
        logger.warning(
            "The model was saved, but the fit did not converge within %d iterations",
            hyper.max_iter,
        )
    return ExitCode.OK


def cmd_predict(config, logger=log):
    if not _require(config, logger, "dataset_path", "model_path", "output_path"):
        return ExitCode.VALIDATION
    model = load_model(config.model_path)
    dataset = read_dataset(config.dataset_path)
    result = predict(model, dataset)
    n_clusters = result.responsibilities.shape[1]
    header = ["sample", "prob_class1"] + [f"resp_{c + 1}" for c in range(n_clusters)]
    rows = [
        (n + 1, float(p), *(float(r) for r in resp))
        for n, (p, resp) in enumerate(zip(result.prob_class1, result.responsibilities))
    ]
    write_document(format_rows(header, rows), config.output_path)
    logger.info("Scored %d samples", dataset.n_samples)
    return ExitCode.OK


def _evaluate(config, name, dataset, logger):
    classifier = make_classifier(name, config.options, config.overrides)
    options = config.options
    return resample_eval(
        dataset,
        classifier,
        options["train_sizes"],
        test_size=options["test_size"],
        n_repeats=options["repeats"],
        seed=config.seed,
        logger=logger,
    )


def cmd_evaluate(config, logger=log):
    if not _require(config, logger, "dataset_path", "output_path"):
        return ExitCode.VALIDATION
    name = config.options["classifier"]
    classifier = make_classifier(name, config.options, config.overrides)
    dataset = read_dataset(config.dataset_path)
    report = _evaluate(config, name, dataset, logger)
    if config.model_path is not None:
        classifier.save(classifier.fit(dataset, config.seed), config.model_path)
        logger.info("Saved the %s model fitted on all %d samples", name, dataset.n_samples)
    write_eval_report(report, config.output_path)
    write_draws(report, _sibling(config.output_path, "_draws.csv"))
    if config.options["svg"]:
        write_document(render_auc_svg({name: report}), _sibling(config.output_path, ".svg"))
    return ExitCode.OK


def cmd_reconstruct(config, logger=log):
    if not _require(config, logger, "model_path", "output_path"):
        return ExitCode.VALIDATION
    model = load_model(config.model_path)
    dataset = None
    if config.dataset_path is not None:
        dataset = read_dataset(config.dataset_path)
    if model.n_clusters < 2:
        logger.warning("The model has a single cluster; skipping the difference panels")
    panels = cluster_erps(model, dataset)
    written = write_panels(panels, model.view_names, config.output_path)
    logger.info("Wrote %d reconstruction files to %s", len(written), config.output_path)
    return ExitCode.OK


def cmd_compare(config, logger=log):
    if not _require(config, logger, "dataset_path", "output_path"):
        return ExitCode.VALIDATION
    dataset = read_dataset(config.dataset_path)
    reports = {
        name: _evaluate(config, name, dataset, logger) for name in DEFAULT_CLASSIFIERS
    }
    write_comparison(reports, config.output_path)
    write_draws(next(iter(reports.values())), _sibling(config.output_path, "_draws.csv"))
    if config.options["svg"]:
        write_document(render_auc_svg(reports), _sibling(config.output_path, ".svg"))
    return ExitCode.OK


COMMAND_HANDLERS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "reconstruct": cmd_reconstruct,
    "compare": cmd_compare,
}


if __name__ == "__main__":
    cli_main()
