"""CSV/JSONL readers and writers, checkpoints, manifests."""

from __future__ import annotations

import hashlib
import json
import zlib
from pathlib import Path

import numpy as np

from .attention import ToyModel
from .core import Codebook, DynMaskError

FORMAT_VERSION = 1


class InputError(DynMaskError):
    """Malformed or missing input file."""


def rng_for(seed: int, stream: str) -> np.random.Generator:
    """Independent named sub-stream of a run seed."""
    return np.random.default_rng([int(seed), zlib.crc32(stream.encode())])


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def read_matrix_csv(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: no such file")
    rows = []
    width = None
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = [float(v) for v in line.split(",")]
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric value")
        if not np.all(np.isfinite(row)):
            raise InputError(f"{path}:{lineno}: non-finite value")
        if width is not None and len(row) != width:
            raise InputError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
        width = len(row)
        rows.append(row)
    if not rows:
        raise InputError(f"{path}: empty file")
    return np.asarray(rows, dtype=np.float64)


def read_motion(path: str | Path) -> np.ndarray:
    """T x D_m frames from a headerless CSV or a JSONL file with a ``frames`` field."""
    path = Path(path)
    if path.suffix != ".jsonl":
        return read_matrix_csv(path)
    if not path.is_file():
        raise InputError(f"{path}: no such file")
    frames = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            block = np.asarray(rec["frames"], dtype=np.float64)
        except (ValueError, KeyError, TypeError):
            raise InputError(f"{path}:{lineno}: expected a JSON object with numeric 'frames'")
        frames.append(block.reshape(-1, block.shape[-1]) if block.ndim else block.reshape(1, 1))
    if not frames:
        raise InputError(f"{path}: empty file")
    try:
        out = np.concatenate(frames, axis=0)
    except ValueError:
        raise InputError(f"{path}: inconsistent frame widths")
    if not np.all(np.isfinite(out)):
        raise InputError(f"{path}: non-finite value")
    return out


def read_vector(path: str | Path) -> np.ndarray:
    return read_matrix_csv(path).reshape(-1)


def write_matrix_csv(path: str | Path, m, header: str | None = None, index: bool = False) -> None:
    m = np.atleast_2d(np.asarray(m))
    lines = [header] if header else []
    for i, row in enumerate(m):
        cells = [str(i)] if index else []
        cells += [str(int(x)) if np.issubdtype(m.dtype, np.integer) else fmt(x) for x in row]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir: Path, command: str, config, inputs: dict[str, str], extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "config": config.as_dict(),
        "seed": config.seed,
        "inputs": {k: file_digest(v) for k, v in sorted(inputs.items())},
        "format_version": FORMAT_VERSION,
    }
    if extra:
        manifest.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def save_checkpoint(out_dir: str | Path, model: ToyModel, codebook: Codebook, config) -> Path:
    """``checkpoint.json`` (shapes, offsets, version) + ``params.bin`` (float64 LE) + ``codebook.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries, blobs, offset = [], [], 0
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name], dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.size
    (out_dir / "params.bin").write_bytes(b"".join(blobs))
    meta = {
        "format_version": FORMAT_VERSION,
        "V": model.V, "E": model.E, "dim": model.dim, "heads": model.heads,
        "layers": model.layers, "max_len": model.max_len,
        "params": entries,
        "config": config.as_dict(),
    }
    (out_dir / "checkpoint.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    write_matrix_csv(out_dir / "codebook.csv", codebook.entries)
    return out_dir


def load_checkpoint(path: str | Path) -> tuple[ToyModel, Codebook]:
    path = Path(path)
    try:
        meta = json.loads((path / "checkpoint.json").read_text())
        if meta.get("format_version") != FORMAT_VERSION:
            raise InputError(f"{path}: unsupported checkpoint format {meta.get('format_version')!r}")
        flat = np.frombuffer((path / "params.bin").read_bytes(), dtype="<f8")
        params = {}
        for e in meta["params"]:
            size = int(np.prod(e["shape"], dtype=np.int64))
            chunk = flat[e["offset"]: e["offset"] + size]
            if chunk.size != size:
                raise InputError(f"{path}: params.bin truncated at {e['name']}")
            params[e["name"]] = chunk.reshape(e["shape"]).astype(np.float64)
        model = ToyModel(meta["V"], meta["E"], meta["dim"], meta["heads"], meta["layers"],
                         meta["max_len"], params)
    except (OSError, KeyError, ValueError, TypeError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"{path}: cannot load checkpoint ({exc})") from exc
    return model, Codebook(read_matrix_csv(path / "codebook.csv"))
