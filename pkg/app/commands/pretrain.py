"""pretrain: AV2vec or AV2vec-MLM self-distillation pretraining"""

import logging

from data_pipeline.processing.noise_mixing import corpus_noise_bank
from data_science.config import RunConfig
from data_science.training.checkpoint import read_checkpoint, restore_training_state, save_checkpoint
from data_science.training.pretrainer import PretrainData, pretrain
from data_science.training.state import init_training_state

from ..config import RunPaths, config_snapshot, write_snapshot
from ..utils.model_loader import load_mlm_targets, load_split

logger = logging.getLogger(__name__)

NAME = "pretrain"
HELP = "Pretrain the student/teacher model; writes checkpoints/ and metrics.jsonl"
SECTIONS = ("mode", "seed", "run_dir", "model", "corruption", "distill", "pretrain")


def add_arguments(parser) -> None:
    pass


def run(config: RunConfig, options) -> None:
    paths = RunPaths.of(config)
    spec, train = load_split(paths, "train")
    config = config.model_copy(update={"corpus": spec})
    targets, num_clusters = load_mlm_targets(paths) if config.mlm_enabled else (None, None)

    if options.resume:
        state = restore_training_state(read_checkpoint(options.resume), config)
        logger.info(f"✓ Resuming from update {state.update_step}")
    else:
        if paths.last_checkpoint.exists() and not options.force:
            raise FileExistsError(f"{paths.last_checkpoint} exists; pass --resume to continue or --force to restart")
        state = init_training_state(config)

    snapshot = config_snapshot(config)
    write_snapshot(config, paths.snapshot)
    data = PretrainData(train, corpus_noise_bank(spec), targets, num_clusters)
    metrics = pretrain(
        state, data, config,
        run_dir=paths.root,
        on_checkpoint=lambda s, path: save_checkpoint(s, path, snapshot),
        progress=True,
    )

    print(f"✓ Pretraining finished at update {state.update_step} ({config.mode})")
    if not metrics.empty:
        tail = metrics.tail(min(100, len(metrics)))
        print(f"  mean loss_reg over the last {len(tail)} updates: {tail['loss_reg'].mean():.4f}")
        if "loss_mlm" in tail:
            print(f"  mean loss_mlm over the last {len(tail)} updates: {tail['loss_mlm'].mean():.4f}")
    print(f"  checkpoint: {paths.last_checkpoint}")
