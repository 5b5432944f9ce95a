#!/usr/bin/env python3
"""Launcher: distill.py train|distill|calibrate|export|pipeline --seed N."""
import sys

from distill_harness.cli import main

if __name__ == "__main__":
    sys.exit(main())
