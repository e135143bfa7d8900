"""Versioned trained-model container.

Layout (all integers little-endian)::

    8 bytes   magic b"AODLABNN"
    4 bytes   uint32 format version
    8 bytes   uint64 header length H
    H bytes   UTF-8 JSON header (sorted keys)
    ...       float64 little-endian weight arrays, C order, in PARAM_ORDER

The header holds the network config (array dims, head scales,
standardization scalars), the training config, and each array's name,
shape and byte offset relative to the start of the array section. Output
is byte-for-byte deterministic for identical inputs.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .network import PARAM_ORDER, NetworkConfig, NetworkParameters

MAGIC = b"AODLABNN"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def save_model(path, params: NetworkParameters, train_config: dict | None = None, extra: dict | None = None) -> Path:
    path = Path(path)
    arrays, offset = [], 0
    blobs = []
    for name in PARAM_ORDER:
        w = np.ascontiguousarray(params.weights[name], dtype="<f8")
        arrays.append({"name": name, "shape": list(w.shape), "offset": offset})
        blobs.append(w.tobytes())
        offset += w.nbytes
    cfg = asdict(params.config)
    cfg["channels"] = list(cfg["channels"])
    header = {
        "format_version": FORMAT_VERSION,
        "network": cfg,
        "train_config": train_config or {},
        "extra": extra or {},
        "arrays": arrays,
        "step": params.step,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)
    return path


def codebook_extra(beamformers: np.ndarray, symbols: np.ndarray) -> dict:
    """JSON-ready pilot codebook: distinct beamformer phase sets and symbol sets.

    ``beamformers`` ``(N, L, M)`` and ``symbols`` ``(N, Q)`` are per-sample
    arrays; sets are kept in order of first appearance. Phases are stored
    in units of pi on [0, 2) so the codebook can be rescaled to any power.
    """
    def distinct(rows):
        seen = {}
        for r in rows:
            seen.setdefault(r.tobytes(), r)
        return list(seen.values())

    phases = [np.mod(np.angle(b) / np.pi, 2.0) for b in distinct(np.asarray(beamformers))]
    syms = distinct(np.asarray(symbols))
    return {
        "beamformer_phases": [p.tolist() for p in phases],
        "symbols_re": [s.real.tolist() for s in syms],
        "symbols_im": [s.imag.tolist() for s in syms],
    }


def read_codebook(header: dict) -> tuple[np.ndarray, np.ndarray]:
    """Beamformer phase sets ``(K, L, M)`` and symbol sets ``(J, Q)`` from a model header."""
    book = header.get("extra", {}).get("codebook")
    if not book:
        raise ModelFormatError("model file carries no pilot codebook")
    phases = np.array(book["beamformer_phases"], dtype=float)
    symbols = np.array(book["symbols_re"], dtype=float) + 1j * np.array(book["symbols_im"], dtype=float)
    return phases, symbols


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh)


def _read_header(fh) -> dict:
    if fh.read(len(MAGIC)) != MAGIC:
        raise ModelFormatError("not an aodlab model file")
    version, length = struct.unpack("<IQ", fh.read(12))
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    return json.loads(fh.read(length).decode("utf-8"))


def load_model(path) -> tuple[NetworkParameters, dict]:
    """Returns the parameters (no optimizer state) and the parsed header."""
    with open(path, "rb") as fh:
        header = _read_header(fh)
        payload = fh.read()
    cfg = dict(header["network"])
    cfg["channels"] = tuple(cfg["channels"])
    config = NetworkConfig(**cfg)
    expected = config.param_shapes()
    weights = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        if expected.get(entry["name"]) != shape:
            raise ModelFormatError(f"array {entry['name']} has unexpected shape {shape}")
        n = int(np.prod(shape)) * 8
        raw = payload[entry["offset"] : entry["offset"] + n]
        if len(raw) != n:
            raise ModelFormatError(f"array {entry['name']} is truncated")
        weights[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(float)
    missing = set(PARAM_ORDER) - set(weights)
    if missing:
        raise ModelFormatError(f"missing arrays: {sorted(missing)}")
    return NetworkParameters(config, weights, step=header.get("step", 0)), header
