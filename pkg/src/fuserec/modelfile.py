"""Versioned binary container for trained models.

Layout (all integers little-endian):

    8-byte magic "FUSEREC\\x00", 1 format-version byte, uint32 section count,
    then sections: uint16 name length, UTF-8 name, uint64 payload length,
    payload.

Array payloads carry a 1-byte dtype code (0=float64, 1=int64, 2=int8), a
1-byte rank, uint64 dims, then raw little-endian data. The "meta" section is
UTF-8 JSON holding the model shape, graph counts, adapter ranks/alphas, and
the trainable mask. INT8 sections are optional and only present for
quantized snapshots.
"""

from __future__ import annotations

import json
import struct
from typing import Dict, Optional, Tuple

import numpy as np

from fuserec.errors import DataFormatError
from fuserec.fusion import PredictionHead
from fuserec.model import LoraAdapter, ModelParams
from fuserec.quant import QuantizedMatrix

MAGIC = b"FUSEREC\x00"
FORMAT_VERSION = 1

_DTYPES = {0: "<f8", 1: "<i8", 2: "i1"}
_CODES = {np.dtype(np.float64): 0, np.dtype(np.int64): 1, np.dtype(np.int8): 2}


def _encode_array(arr: np.ndarray) -> bytes:
    code = _CODES.get(arr.dtype)
    if code is None:
        raise ValueError(f"unsupported dtype {arr.dtype}")
    header = struct.pack("<BB", code, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
    data = np.ascontiguousarray(arr).astype(_DTYPES[code], copy=False).tobytes()
    return header + dims + data


def _decode_array(payload: bytes) -> np.ndarray:
    if len(payload) < 2:
        raise DataFormatError("truncated array payload")
    code, ndim = struct.unpack_from("<BB", payload, 0)
    if code not in _DTYPES:
        raise DataFormatError(f"unknown dtype code {code}")
    offset = 2
    if len(payload) < offset + 8 * ndim:
        raise DataFormatError("truncated array dims")
    shape = struct.unpack_from(f"<{ndim}Q", payload, offset) if ndim else ()
    offset += 8 * ndim
    arr = np.frombuffer(payload[offset:], dtype=_DTYPES[code]).reshape(shape)
    return arr.astype(arr.dtype.newbyteorder("="))


def _write_sections(path, sections: Dict[str, bytes]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(sections)))
        for name, payload in sections.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<Q", len(payload)))
            fh.write(payload)


def _read_sections(path) -> Dict[str, bytes]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise DataFormatError(f"{path}: bad magic; not a model file")
    offset = len(MAGIC)
    (version,) = struct.unpack_from("<B", blob, offset)
    offset += 1
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported format version {version}")
    (count,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    sections: Dict[str, bytes] = {}
    for _ in range(count):
        if offset + 2 > len(blob):
            raise DataFormatError(f"{path}: truncated section header")
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (payload_len,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        if offset + payload_len > len(blob):
            raise DataFormatError(f"{path}: truncated payload for section {name!r}")
        sections[name] = blob[offset : offset + payload_len]
        offset += payload_len
    return sections


def save_model(
    path,
    model: ModelParams,
    graph_meta: Optional[dict] = None,
    quantized: Optional[Dict[str, QuantizedMatrix]] = None,
) -> None:
    """Serialize a model (and optionally its INT8 snapshot) to one file."""
    meta = {
        "variant": model.variant,
        "d_g": model.d_g,
        "d_s": model.d_s,
        "num_layers": model.num_layers,
        "graph": graph_meta or {},
        "trainable": model.trainable,
        "lora": {name: {"rank": ad.rank, "alpha": ad.alpha} for name, ad in model.lora.items()},
        "head_out_bias": model.head.out_bias,
    }
    sections: Dict[str, bytes] = {"meta": json.dumps(meta, sort_keys=True).encode("utf-8")}
    sections["node_table"] = _encode_array(model.node_table)
    sections["text_table"] = _encode_array(model.text_table)
    for l, w in enumerate(model.gnn_weights):
        sections[f"gnn.{l}"] = _encode_array(w)
    sections["head.hidden"] = _encode_array(model.head.hidden)
    sections["head.hidden_bias"] = _encode_array(model.head.hidden_bias)
    sections["head.out"] = _encode_array(model.head.out)
    for name, ad in model.lora.items():
        sections[f"lora.{name}.a"] = _encode_array(ad.a)
        sections[f"lora.{name}.b"] = _encode_array(ad.b)
    if quantized:
        for name, q in quantized.items():
            sections[f"int8.{name}.q"] = _encode_array(q.qvalues)
            sections[f"int8.{name}.scales"] = _encode_array(q.scales)
    _write_sections(path, sections)


def load_model(path) -> Tuple[ModelParams, dict]:
    """Inverse of save_model -> (model, meta dict incl. graph counts/INT8)."""
    sections = _read_sections(path)
    if "meta" not in sections:
        raise DataFormatError(f"{path}: missing meta section")
    meta = json.loads(sections["meta"].decode("utf-8"))
    try:
        gnn = [
            _decode_array(sections[f"gnn.{l}"]) for l in range(meta["num_layers"])
        ]
        head = PredictionHead(
            hidden=_decode_array(sections["head.hidden"]),
            hidden_bias=_decode_array(sections["head.hidden_bias"]),
            out=_decode_array(sections["head.out"]),
            out_bias=float(meta["head_out_bias"]),
        )
        model = ModelParams(
            variant=meta["variant"],
            d_g=meta["d_g"],
            d_s=meta["d_s"],
            num_layers=meta["num_layers"],
            node_table=_decode_array(sections["node_table"]),
            text_table=_decode_array(sections["text_table"]),
            gnn_weights=gnn,
            head=head,
            trainable=dict(meta.get("trainable", {})),
        )
    except KeyError as exc:
        raise DataFormatError(f"{path}: missing section {exc}") from None
    for name, info in meta.get("lora", {}).items():
        model.lora[name] = LoraAdapter(
            a=_decode_array(sections[f"lora.{name}.a"]),
            b=_decode_array(sections[f"lora.{name}.b"]),
            rank=int(info["rank"]),
            alpha=float(info["alpha"]),
        )
    quantized: Dict[str, QuantizedMatrix] = {}
    for name in sections:
        if name.startswith("int8.") and name.endswith(".q"):
            base = name[len("int8.") : -len(".q")]
            q = _decode_array(sections[name])
            scales = _decode_array(sections[f"int8.{base}.scales"])
            quantized[base] = QuantizedMatrix(
                rows=q.shape[0], cols=q.shape[1], qvalues=q, scales=scales
            )
    meta["int8"] = quantized
    return model, meta
