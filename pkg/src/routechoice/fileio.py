"""Atomic file output, canonical JSON and run manifests."""

from __future__ import annotations

import hashlib
import json
import os
import platform
import tempfile
from pathlib import Path
from typing import Iterable


def dumps_canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def atomic_write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_outputs(files: dict) -> list[Path]:
    """Write every ``path -> text`` entry; nothing is renamed into place until
    all temporaries are on disk."""
    staged = []
    try:
        for path, text in files.items():
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
            staged.append((tmp, path))
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)
    return [p for _, p in staged]


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict:
    import numpy
    import scipy

    from . import __version__

    return {
        "routechoice": __version__,
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
    }


def build_manifest(command: str, argv: Iterable[str], inputs: dict, seeds: dict,
                   outputs: Iterable[str | Path], timings: dict) -> dict:
    return {
        "command": command,
        "argv": list(argv),
        "inputs": {k: {"path": str(v), "sha256": sha256_file(v)} for k, v in sorted(inputs.items()) if v},
        "seeds": seeds,
        "outputs": sorted(Path(p).name for p in outputs),
        "versions": versions(),
        "timings_s": timings,
    }
