"""Rewrite tests/fixtures/golden from the builder in conftest.

Run after an intentional format change: python3 tests/fixtures/regenerate.py
"""

from __future__ import annotations

import shutil
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from conftest import GOLDEN_DIR, build_golden  # noqa: E402

from labpack.store import serialize_package  # noqa: E402

if __name__ == "__main__":
    shutil.rmtree(GOLDEN_DIR, ignore_errors=True)
    GOLDEN_DIR.mkdir(parents=True)
    serialize_package(build_golden(), GOLDEN_DIR)
    (GOLDEN_DIR / ".labpack.lock").unlink(missing_ok=True)
    print(f"wrote {GOLDEN_DIR}")
