#!/usr/bin/env python
"""Convenience launcher for the av2vec command line from the repository root.

Usage:
  python run_pipeline.py gen-data --config configs/toy.yaml
  python run_pipeline.py pretrain --config configs/toy.yaml
"""
import pathlib
import sys

ROOT = pathlib.Path(__file__).parent.resolve()
sys.path.insert(0, str(ROOT))

from app.main import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
