"""eval: probe accuracy over SNR levels and modality conditions"""

import logging

import pandas as pd

from data_pipeline.processing.noise_mixing import build_eval_sets, corpus_noise_bank
from data_science.config import RunConfig
from data_science.training.checkpoint import load_probe_checkpoint
from data_science.training.evaluation import accuracy_table, evaluate, write_report

from ..config import RunPaths
from ..utils.model_loader import load_split, resolve_checkpoint

logger = logging.getLogger(__name__)

NAME = "eval"
HELP = "Evaluate the finetuned probe; writes reports/accuracy.csv"
SECTIONS = ("seed", "run_dir", "model")


def add_arguments(parser) -> None:
    parser.add_argument("--checkpoint", help="Probe checkpoint (default: run_dir/checkpoints/probe.ckpt)")


def run(config: RunConfig, options) -> None:
    paths = RunPaths.of(config)
    spec, test = load_split(paths, "test")
    checkpoint = resolve_checkpoint(options.checkpoint, paths.probe_checkpoint, "finetune")
    model, probe = load_probe_checkpoint(checkpoint, config.model)

    eval_sets = build_eval_sets(test, corpus_noise_bank(spec), seed=config.seed)
    report = evaluate(model, probe, eval_sets)
    write_report(report, paths.report)

    with pd.option_context("display.float_format", "{:.3f}".format):
        print(accuracy_table(report).to_string())
    print(f"✓ Report: {paths.report} ({len(report)} rows)")
