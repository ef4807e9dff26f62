"""finetune: freeze-then-joint frame-classification probe"""

import logging

from data_pipeline.processing.noise_mixing import corpus_noise_bank
from data_science.config import RunConfig
from data_science.training.checkpoint import save_probe_checkpoint
from data_science.training.finetuner import finetune_probe

from ..config import RunPaths, config_snapshot
from ..utils.model_loader import load_pretrained_model, load_split, resolve_checkpoint

logger = logging.getLogger(__name__)

NAME = "finetune"
HELP = "Finetune a frame-classification probe on a pretrained checkpoint"
SECTIONS = ("seed", "run_dir", "model", "finetune", "corruption")


def add_arguments(parser) -> None:
    parser.add_argument("--checkpoint", help="Pretrained checkpoint (default: run_dir/checkpoints/last.ckpt)")


def run(config: RunConfig, options) -> None:
    paths = RunPaths.of(config)
    spec, train = load_split(paths, "train")
    config = config.model_copy(update={"corpus": spec})
    checkpoint = resolve_checkpoint(options.checkpoint, paths.last_checkpoint, "pretrain")
    model = load_pretrained_model(config, checkpoint)

    result = finetune_probe(model, train, config, corpus_noise_bank(spec), progress=True)
    save_probe_checkpoint(
        result.model, result.probe, paths.probe_checkpoint, config_snapshot(config), config.finetune.total_updates
    )
    print(f"✓ Probe finetuned ({config.finetune.task}, {config.finetune.total_updates} updates, "
          f"{config.finetune.freeze_steps} frozen)")
    print(f"  train frame accuracy: {result.train_accuracy:.3f} (chance {1.0 / spec.num_latent_states:.3f})")
    print(f"  probe checkpoint: {paths.probe_checkpoint}")
