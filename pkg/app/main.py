"""
av2vec command line: gen-data, pretrain, cluster, finetune, eval.

Exit codes: 0 success, 2 configuration error, 3 missing input or refusal
to overwrite, 4 checkpoint error, 5 training divergence.
"""

import argparse
import logging
import sys
from typing import List, Optional

from data_science.algorithms.errors import AV2vecError

from .commands import COMMANDS
from .config import config_keys_help, load_run_config, load_settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_MISSING_INPUT = 3


def _common_arguments() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--seed", type=int, help="Override the global seed")
    common.add_argument("--run-dir", dest="run_dir", help="Override the run directory")
    common.add_argument("--force", action="store_true", help="Overwrite existing outputs")
    common.add_argument("--resume", help="Checkpoint to resume pretraining from")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="av2vec",
        description="Audio-visual self-distillation pretraining on a synthetic corpus",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    common = _common_arguments()
    for command in COMMANDS:
        sub = subparsers.add_parser(
            command.NAME,
            parents=[common],
            help=command.HELP,
            description=command.HELP,
            epilog=config_keys_help(command.SECTIONS),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        command.add_arguments(sub)
        sub.set_defaults(handler=command)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    options = build_parser().parse_args(argv)
    try:
        settings = load_settings()
        logging.basicConfig(
            level=getattr(logging, settings.LOG_LEVEL, logging.INFO),
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )
        config = load_run_config(options.config, settings, seed=options.seed, run_dir=options.run_dir)
        options.handler.run(config, options)
    except AV2vecError as e:
        logger.error(f"❌ {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except (FileExistsError, FileNotFoundError) as e:
        logger.error(f"❌ {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
