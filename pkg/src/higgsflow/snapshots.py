"""Binary snapshot container for fields and whole states.

Layout (all integers little-endian):

    magic "HBSNAP01" | u32 section count | sections...
    section: u16 name length | name bytes (ascii) | field block
    field block: u32 version | u32 n | u32 N | u32 rank | u32 p | u32 q |
                 u32 component count | components as row-major
                 little-endian complex double arrays

The Hermitian metric is stored as the (0,0) section named "H"; reloading
validates positive definiteness.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .geometry import HermitianMetric, HiggsBundleState, HiggsStructure
from .grid import MatrixFormField, TorusBase

__all__ = ["save_field", "load_field", "save_state", "load_state"]

MAGIC = b"HBSNAP01"
VERSION = 1


def _pack_field(f: MatrixFormField) -> bytes:
    if f.rows != f.cols:
        raise ValueError("snapshots store square-block fields")
    P, Q = f.comps.shape[0], f.comps.shape[1]
    head = struct.pack("<7I", VERSION, f.base.n, f.base.N, f.rows, f.p, f.q,
                       P * Q)
    body = b"".join(
        np.ascontiguousarray(f.comps[ip, iq]).astype("<c16").tobytes()
        for ip in range(P) for iq in range(Q))
    return head + body


def _unpack_field(buf: bytes, offset: int) -> tuple[MatrixFormField, int]:
    version, n, N, rank, p, q, ncomp = struct.unpack_from("<7I", buf, offset)
    if version != VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    offset += struct.calcsize("<7I")
    base = TorusBase(n, N)
    out = MatrixFormField.zeros(base, p, q, rank)
    P, Q = out.comps.shape[0], out.comps.shape[1]
    if ncomp != P * Q:
        raise ValueError(f"component count {ncomp} does not match bidegree "
                         f"({p},{q}) at n={n}")
    block = base.num_points * rank * rank * 16
    k = 0
    for ip in range(P):
        for iq in range(Q):
            arr = np.frombuffer(buf, dtype="<c16", count=base.num_points * rank * rank,
                                offset=offset + k * block)
            out.comps[ip, iq] = arr.reshape(base.shape + (rank, rank))
            k += 1
    return out, offset + ncomp * block


def save_field(f: MatrixFormField, path) -> None:
    _write_sections(path, [("field", f)])


def load_field(path) -> MatrixFormField:
    sections = _read_sections(path)
    if len(sections) != 1:
        raise ValueError(f"expected a single-field snapshot, found "
                         f"{[name for name, _ in sections]}")
    return sections[0][1]


def _write_sections(path, sections: list[tuple[str, MatrixFormField]]) -> None:
    parts = [MAGIC, struct.pack("<I", len(sections))]
    for name, f in sections:
        raw = name.encode("ascii")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(_pack_field(f))
    Path(path).write_bytes(b"".join(parts))


def _read_sections(path) -> list[tuple[str, MatrixFormField]]:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise ValueError(f"{path} is not a snapshot container")
    (count,) = struct.unpack_from("<I", buf, 8)
    offset = 12
    out = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, offset)
        offset += 2
        name = buf[offset:offset + nlen].decode("ascii")
        offset += nlen
        fieldm, offset = _unpack_field(buf, offset)
        out.append((name, fieldm))
    return out


def save_state(state: HiggsBundleState, path) -> None:
    """One section per field: a, phi and the metric H."""
    _write_sections(path, [("a", state.structure.a),
                           ("phi", state.structure.phi),
                           ("H", state.metric.as_field())])


def load_state(path) -> HiggsBundleState:
    sections = dict(_read_sections(path))
    missing = {"a", "phi", "H"} - set(sections)
    if missing:
        raise ValueError(f"state snapshot is missing sections {sorted(missing)}")
    H_field = sections["H"]
    metric = HermitianMetric(H_field.base, H_field.comps[0, 0])
    metric.check_positive()
    return HiggsBundleState(HiggsStructure(sections["a"], sections["phi"]),
                            metric)
