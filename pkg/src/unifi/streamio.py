"""On-disk CSI stream format: JSON Lines, schema ``unifi-csi/1``.

Line 1 is a header object declaring the epoch, the canonical grids and the
optional label/subject. Every following line is one packet. Amplitudes are
serialized with 9 significant digits, which makes save(load(f)) byte-stable
for files produced by :func:`save_stream`.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import IoError, SchemaError
from .grids import ALLOWED_BW_MHZ, Band, FrameType, GridSpec
from .types import CsiStream, PacketRecord, sort_packets

SCHEMA_ID = "unifi-csi/1"

_BANDS = {b.value: b for b in Band}
_FRAME_TYPES = {f.value: f for f in FrameType}


def _fmt_float(x: float) -> float:
    # 9 significant digits; decimal -> double -> decimal is stable at 9 digits.
    return float(f"{float(x):.9g}")


def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":"))


def save_stream(stream: CsiStream, path) -> None:
    path = Path(path)
    header: dict = {"schema": SCHEMA_ID, "epoch_us": stream.epoch_us,
                    "grids": stream.grid.to_json()}
    if stream.label is not None:
        header["label"] = stream.label
    if stream.subject_id is not None:
        header["subject"] = stream.subject_id
    try:
        with path.open("w", encoding="utf-8") as fh:
            fh.write(_dump(header) + "\n")
            for p in stream.packets:
                row = {"t": p.t_us, "band": p.band.value, "ft": p.frame_type.value,
                       "bw": p.bw_mhz, "sc": list(p.sc_idx),
                       "a": [_fmt_float(v) for v in p.amp]}
                fh.write(_dump(row) + "\n")
    except OSError as e:
        raise IoError(f"cannot write stream to {path}: {e}") from e


def _parse_row(obj: dict, line_no: int, grid: GridSpec) -> PacketRecord:
    if not isinstance(obj, dict):
        raise SchemaError(line_no, "row must be a JSON object")
    for key in ("t", "band", "ft", "bw", "sc", "a"):
        if key not in obj:
            raise SchemaError(line_no, f"missing key {key!r}")
    if not isinstance(obj["t"], int):
        raise SchemaError(line_no, "t must be an integer (microseconds)")
    band = _BANDS.get(obj["band"])
    if band is None:
        raise SchemaError(line_no, f"unknown band {obj['band']!r}")
    ft = _FRAME_TYPES.get(obj["ft"])
    if ft is None:
        raise SchemaError(line_no, f"unknown frame type {obj['ft']!r}")
    if obj["bw"] not in ALLOWED_BW_MHZ:
        raise SchemaError(line_no, f"bw must be one of {ALLOWED_BW_MHZ}")
    sc, amp = obj["sc"], obj["a"]
    if not isinstance(sc, list) or not all(isinstance(i, int) for i in sc):
        raise SchemaError(line_no, "sc must be a list of integers")
    if not isinstance(amp, list) or not all(isinstance(v, (int, float)) for v in amp):
        raise SchemaError(line_no, "a must be a list of numbers")
    if len(sc) != len(amp):
        raise SchemaError(line_no, f"len(a)={len(amp)} != len(sc)={len(sc)}")
    try:
        pkt = PacketRecord(obj["t"], band, ft, obj["bw"], tuple(sc), amp)
    except ValueError as e:
        raise SchemaError(line_no, str(e)) from None
    if not grid.has_layout(band, obj["bw"]) or not grid.contains(band, obj["bw"], pkt.sc_idx):
        raise SchemaError(line_no, f"subcarriers off the declared ({band.value}, bw{obj['bw']}) grid")
    return pkt


def load_stream(path) -> CsiStream:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise IoError(f"cannot read stream from {path}: {e}") from e
    if not lines:
        raise SchemaError(1, "missing header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise SchemaError(1, f"header is not valid JSON: {e}") from None
    if not isinstance(header, dict) or header.get("schema") != SCHEMA_ID:
        raise SchemaError(1, f"header must declare schema {SCHEMA_ID!r}")
    if not isinstance(header.get("epoch_us"), int):
        raise SchemaError(1, "epoch_us must be an integer")
    grid = GridSpec.from_json(header.get("grids"))
    label = header.get("label")
    if label is not None and not isinstance(label, int):
        raise SchemaError(1, "label must be an integer")
    subject = header.get("subject")
    if subject is not None and not isinstance(subject, str):
        raise SchemaError(1, "subject must be a string")

    packets = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise SchemaError(i, f"invalid JSON: {e}") from None
        packets.append(_parse_row(obj, i, grid))
    return CsiStream(epoch_us=header["epoch_us"], grid=grid,
                     packets=sort_packets(packets), label=label, subject_id=subject)
