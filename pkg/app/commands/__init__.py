"""
Subcommands of the av2vec command line, one module per command.

Each module exposes NAME, HELP, SECTIONS (config sections it reads),
``add_arguments(parser)`` and ``run(config, options)``.
"""

from . import cluster, evaluate, finetune, gen_data, pretrain

COMMANDS = (gen_data, pretrain, cluster, finetune, evaluate)
