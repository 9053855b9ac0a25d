"""Append-only result files written atomically."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path


class ResultExistsError(FileExistsError):
    pass


def atomic_write(path: str | Path, data: str | bytes, *, force: bool = False) -> Path:
    """Write via a temporary file and rename.

    An existing file with identical content is left alone; one with
    different content is refused unless ``force`` is set.
    """
    path = Path(path)
    payload = data.encode("utf-8") if isinstance(data, str) else data
    if path.exists() and not force:
        if path.read_bytes() == payload:
            return path
        raise ResultExistsError(f"{path} already exists with different content (use --force to replace)")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, ensure_ascii=False) + "\n"


def result_paths(out_dir: str | Path, recording_id: str) -> dict[str, Path]:
    d = Path(out_dir)
    return {kind: d / f"{recording_id}.{kind}.{ext}" for kind, ext in
            (("features", "json"), ("report", "txt"), ("verify", "json"), ("provenance", "json"))}
