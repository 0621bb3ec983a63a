"""Trace persistence: raw float32 samples with a small header, an annotation
sidecar in JSON, and a plain CSV export for external tools."""
import csv
import json
import logging
import os
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from config.settings import settings
from models.events import FieldOpEvent
from models.schemas import TraceConfig
from services.errors import TraceFormatError
from services.leakage import Annotation, Trace

logger = logging.getLogger(__name__)

MAGIC = b"ATRC"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHHQ")

PathLike = Union[str, os.PathLike]


def sidecar_path(path: PathLike) -> Path:
    return Path(path).with_suffix(".json")


def write_trace(path: PathLike, trace: Trace, with_annotations: bool = True) -> Path:
    """Write the binary trace and, if it has any, its annotation sidecar"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    samples = np.ascontiguousarray(trace.samples, dtype="<f4")
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, FORMAT_VERSION, trace.samples_per_cycle, samples.shape[0]))
        f.write(samples.tobytes())
    if with_annotations and trace.annotations:
        write_annotations(sidecar_path(path), trace)
    logger.info(f"Wrote {samples.shape[0]} samples to {path}")
    return path


def read_trace(path: PathLike, annotations: Optional[PathLike] = None) -> Trace:
    """Read a binary trace; the sidecar is picked up when present"""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            header = f.read(HEADER.size)
            if len(header) < HEADER.size:
                raise TraceFormatError(f"{path} is too short for a trace header")
            magic, version, samples_per_cycle, count = HEADER.unpack(header)
            if magic != MAGIC:
                raise TraceFormatError(f"{path} is not a trace file (magic {magic!r})")
            if version != FORMAT_VERSION:
                raise TraceFormatError(f"{path} has unsupported format version {version}")
            samples = np.frombuffer(f.read(), dtype="<f4")
    except OSError as e:
        raise TraceFormatError(f"Failed to read trace {path}: {str(e)}")
    if samples.shape[0] != count:
        raise TraceFormatError(f"{path} declares {count} samples but holds {samples.shape[0]}")

    trace = Trace(samples=samples.astype(np.float32), samples_per_cycle=samples_per_cycle)
    sidecar = Path(annotations) if annotations is not None else sidecar_path(path)
    if sidecar.exists():
        read_annotations(sidecar, trace)
    elif annotations is not None:
        raise TraceFormatError(f"Annotation file {sidecar} not found")
    return trace


def write_annotations(path: PathLike, trace: Trace) -> Path:
    document = {
        "version": settings.VERSION,
        "format_version": FORMAT_VERSION,
        "samples_per_cycle": trace.samples_per_cycle,
        "prefix_samples": trace.prefix_samples,
        "truncated": trace.truncated,
        "metadata": trace.metadata,
        "config": trace.config.model_dump(mode="json") if trace.config else None,
        "annotations": [
            {"start": a.start, "end": a.end, **a.event.to_dict()} for a in trace.annotations
        ],
    }
    path = Path(path)
    with open(path, "w") as f:
        json.dump(document, f, sort_keys=True)
    return path


def read_annotations(path: PathLike, trace: Trace) -> Trace:
    """Attach the sidecar's configuration and annotations to ``trace``"""
    try:
        with open(path, "r") as f:
            document = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise TraceFormatError(f"Failed to read annotations {path}: {str(e)}")
    if document.get("samples_per_cycle") != trace.samples_per_cycle:
        raise TraceFormatError(f"{path} does not belong to this trace (samples per cycle differ)")

    try:
        trace.config = TraceConfig(**document["config"]) if document.get("config") else None
        trace.annotations = [
            Annotation(entry["start"], entry["end"], FieldOpEvent.from_dict(entry))
            for entry in document.get("annotations", [])
        ]
    except (KeyError, ValueError) as e:
        raise TraceFormatError(f"Malformed annotation file {path}: {str(e)}")
    trace.prefix_samples = document.get("prefix_samples", 0)
    trace.truncated = bool(document.get("truncated", False))
    trace.metadata = document.get("metadata", {})
    return trace


def export_csv(path: PathLike, trace: Trace) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["index", "amplitude"])
        for index, value in enumerate(trace.samples):
            writer.writerow([index, f"{float(value):.6g}"])
    return path
