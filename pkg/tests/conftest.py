"""Shared test configuration; keeps the tests directory importable so the
oracle helpers can be used from any test module."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
