"""Rebuild the checked-in golden corpus from the fixture reports.

Runs the real pipeline (collect, fragment, extract, adapt) over
tests/fixtures/reports with the fixture config and leaves the resulting
corpus directory at tests/fixtures/golden_corpus.  The determinism test
compares fresh pipeline runs against this directory byte for byte, so it
must only ever be regenerated together with an intentional change to the
pipeline's persisted output.
"""

from __future__ import annotations

import shutil
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"
GOLDEN = FIXTURES / "golden_corpus"


def run(*args: str) -> None:
    cmd = [sys.executable, "-m", "pocmill.cli", "--config", str(FIXTURES / "pocmill.yaml"), "--corpus-dir", str(GOLDEN), *args]
    proc = subprocess.run(cmd, cwd=ROOT, capture_output=True, text=True)
    if proc.returncode != 0:
        sys.stderr.write(proc.stdout + proc.stderr)
        raise SystemExit(f"{' '.join(args)} exited with {proc.returncode}")


def main() -> None:
    if GOLDEN.exists():
        shutil.rmtree(GOLDEN)
    run("collect", str(FIXTURES / "reports"))
    run("fragment")
    run("extract")
    run("adapt")
    lock = GOLDEN / "corpus.lock"
    if lock.exists():
        lock.unlink()
    print(f"golden corpus written to {GOLDEN}")


if __name__ == "__main__":
    main()
