"""Volume file formats, report serialization, and run manifests.

Two volume formats are supported:

* ``.rvol`` — the native format and the canonical one for tests. Layout
  (all little-endian)::

      offset  0: 8-byte magic b"RVOL\\x00\\x00\\x00\\x00"
      offset  8: uint64 format version (currently 1)
      offset 16: uint64 nx, ny, nz
      offset 40: float64 spacing sx, sy, sz (mm/voxel)
      offset 64: uint32 dtype code (2=uint8, 4=int16, 16=float32, 64=float64)
      offset 68: raw payload, x-fastest order

* ``.nii`` — a deliberately minimal NIfTI-1 subset for interoperability:
  single-file, uncompressed, little-endian, datatypes uint8/int16/float32,
  3D (or 4D with a trailing singleton), spacing from pixdim, no intensity
  scaling. Everything else is rejected with a precise message.

Barcodes export to JSON; trajectories and metrics to CSV with fixed column
orders; floats are printed with 9 significant digits.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .cubical_ph import Barcode
from .errors import ToposculptError, VolumeFormatError
from .metrics import CenterlineTruth, MetricReport
from .volume import (
    PROBABILITY_TOLERANCE,
    ROLE_BINARY,
    ROLE_LOGIT,
    ROLE_PROBABILITY,
    Volume,
    VoxelCoord,
)

RVOL_MAGIC = b"RVOL\x00\x00\x00\x00"
RVOL_VERSION = 1
RVOL_HEADER_BYTES = 68

# dtype codes shared with the NIfTI datatype field
_DTYPE_CODES = {2: np.uint8, 4: np.int16, 16: np.float32, 64: np.float64}
_CODE_FOR_DTYPE = {np.dtype(v): k for k, v in _DTYPE_CODES.items()}

_NIFTI_HEADER_BYTES = 348
_NIFTI_VOX_OFFSET = 352


def _fmt_float(x: float) -> str:
    return f"{x:.9g}"


def infer_role(data: np.ndarray) -> str:
    """Role heuristic for files that do not carry one.

    Values that are all 0/1 make a binary mask; values within [0, 1] make a
    probability map; anything else is an unconstrained logit field.
    """
    if np.isin(np.unique(data), (0, 1)).all():
        return ROLE_BINARY
    lo, hi = float(data.min()), float(data.max())
    if lo >= -PROBABILITY_TOLERANCE and hi <= 1.0 + PROBABILITY_TOLERANCE:
        return ROLE_PROBABILITY
    return ROLE_LOGIT


def write_volume(v: Volume, path) -> None:
    """Write a volume to .rvol or .nii based on the file extension."""
    path = Path(path)
    suffixes = "".join(path.suffixes).lower()
    if suffixes.endswith(".nii.gz"):
        raise VolumeFormatError("compression unsupported: write uncompressed .nii or .rvol")
    if path.suffix.lower() == ".rvol":
        _write_rvol(v, path)
    elif path.suffix.lower() == ".nii":
        _write_nifti(v, path)
    else:
        raise VolumeFormatError(f"unsupported volume extension {path.suffix!r} (use .rvol or .nii)")


def read_volume(path, role: Optional[str] = None) -> Volume:
    """Read a volume from .rvol or .nii; role is inferred unless given."""
    path = Path(path)
    suffixes = "".join(path.suffixes).lower()
    if suffixes.endswith(".nii.gz"):
        raise VolumeFormatError(f"compression unsupported: {path.name} is gzipped NIfTI")
    if path.suffix.lower() == ".rvol":
        data, spacing = _read_rvol(path)
    elif path.suffix.lower() == ".nii":
        data, spacing = _read_nifti(path)
    else:
        raise VolumeFormatError(f"unsupported volume extension {path.suffix!r} (use .rvol or .nii)")
    return Volume(data, spacing, role if role is not None else infer_role(data))


def _write_rvol(v: Volume, path: Path) -> None:
    dtype = np.dtype(v.data.dtype)
    if dtype not in _CODE_FOR_DTYPE:
        raise VolumeFormatError(f"rvol: unsupported dtype {dtype}")
    nx, ny, nz = v.dims
    header = RVOL_MAGIC
    header += struct.pack("<Q", RVOL_VERSION)
    header += struct.pack("<QQQ", nx, ny, nz)
    header += struct.pack("<ddd", *v.spacing)
    header += struct.pack("<I", _CODE_FOR_DTYPE[dtype])
    payload = np.ascontiguousarray(v.data.ravel(order="F")).astype(dtype.newbyteorder("<"))
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload.tobytes())


def _read_rvol(path: Path):
    blob = path.read_bytes()
    if len(blob) < RVOL_HEADER_BYTES:
        raise VolumeFormatError(f"rvol: header truncated ({len(blob)} bytes)")
    if blob[:8] != RVOL_MAGIC:
        raise VolumeFormatError("rvol: bad magic")
    (version,) = struct.unpack_from("<Q", blob, 8)
    if version != RVOL_VERSION:
        raise VolumeFormatError(f"rvol: unsupported version {version}")
    nx, ny, nz = struct.unpack_from("<QQQ", blob, 16)
    spacing = struct.unpack_from("<ddd", blob, 40)
    (code,) = struct.unpack_from("<I", blob, 64)
    if code not in _DTYPE_CODES:
        raise VolumeFormatError(f"rvol: unsupported dtype code {code}")
    dtype = np.dtype(_DTYPE_CODES[code]).newbyteorder("<")
    expected = nx * ny * nz * dtype.itemsize
    payload = blob[RVOL_HEADER_BYTES:]
    if len(payload) < expected:
        raise VolumeFormatError(
            f"rvol: payload truncated, expected {expected} bytes, got {len(payload)}"
        )
    data = np.frombuffer(payload[:expected], dtype=dtype)
    return data.reshape((nx, ny, nz), order="F").astype(dtype.newbyteorder("=")), spacing


def _write_nifti(v: Volume, path: Path) -> None:
    if v.role == ROLE_BINARY:
        data = v.data.astype(np.uint8)
        datatype, bitpix = 2, 8
    else:
        # float64 maps are downcast; use .rvol for lossless float64 round-trips
        data = v.data.astype(np.float32)
        datatype, bitpix = 16, 32
    nx, ny, nz = v.dims
    header = bytearray(_NIFTI_HEADER_BYTES)
    struct.pack_into("<i", header, 0, _NIFTI_HEADER_BYTES)
    struct.pack_into("<8h", header, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", header, 70, datatype)
    struct.pack_into("<h", header, 72, bitpix)
    struct.pack_into("<8f", header, 76, 1.0, *v.spacing, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", header, 108, float(_NIFTI_VOX_OFFSET))
    struct.pack_into("<f", header, 112, 1.0)  # scl_slope
    struct.pack_into("<f", header, 116, 0.0)  # scl_inter
    struct.pack_into("<b", header, 123, 2)  # xyzt_units: millimeters
    struct.pack_into("<4s", header, 344, b"n+1\x00")
    with open(path, "wb") as f:
        f.write(bytes(header))
        f.write(b"\x00\x00\x00\x00")  # no header extensions
        f.write(np.ascontiguousarray(data.ravel(order="F")).astype(data.dtype.newbyteorder("<")).tobytes())


def _read_nifti(path: Path):
    blob = path.read_bytes()
    if blob[:2] == b"\x1f\x8b":
        raise VolumeFormatError(f"compression unsupported: {path.name} is gzip data")
    if len(blob) < _NIFTI_HEADER_BYTES:
        raise VolumeFormatError(f"nifti: header truncated ({len(blob)} bytes)")
    (sizeof_hdr,) = struct.unpack_from("<i", blob, 0)
    if sizeof_hdr != _NIFTI_HEADER_BYTES:
        (swapped,) = struct.unpack_from(">i", blob, 0)
        if swapped == _NIFTI_HEADER_BYTES:
            raise VolumeFormatError("nifti: big-endian files unsupported")
        raise VolumeFormatError(f"nifti: bad sizeof_hdr {sizeof_hdr}")
    magic = struct.unpack_from("<4s", blob, 344)[0]
    if magic == b"ni1\x00":
        raise VolumeFormatError("nifti: two-file (.hdr/.img) form unsupported")
    if magic != b"n+1\x00":
        raise VolumeFormatError(f"nifti: bad magic {magic!r}")
    dim = struct.unpack_from("<8h", blob, 40)
    ndim = dim[0]
    if ndim == 4 and dim[4] != 1:
        raise VolumeFormatError(f"nifti: 4D volumes unsupported (dim[4]={dim[4]})")
    if ndim not in (3, 4):
        raise VolumeFormatError(f"nifti: dimensionality {ndim} unsupported")
    nx, ny, nz = dim[1], dim[2], dim[3]
    if min(nx, ny, nz) < 1:
        raise VolumeFormatError(f"nifti: bad dims {(nx, ny, nz)}")
    (datatype,) = struct.unpack_from("<h", blob, 70)
    if datatype not in (2, 4, 16):
        raise VolumeFormatError(
            f"nifti: datatype {datatype} unsupported (need uint8=2, int16=4, float32=16)"
        )
    pixdim = struct.unpack_from("<8f", blob, 76)
    spacing = tuple(float(p) for p in pixdim[1:4])
    if any(s <= 0 for s in spacing):
        raise VolumeFormatError(f"nifti: non-positive pixdim spacing {spacing}")
    scl_slope, scl_inter = struct.unpack_from("<ff", blob, 112)
    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        raise VolumeFormatError(
            f"nifti: intensity scaling unsupported (slope={scl_slope}, inter={scl_inter})"
        )
    (vox_offset,) = struct.unpack_from("<f", blob, 108)
    offset = int(vox_offset) if vox_offset >= _NIFTI_HEADER_BYTES else _NIFTI_VOX_OFFSET
    dtype = np.dtype(_DTYPE_CODES[datatype]).newbyteorder("<")
    expected = nx * ny * nz * dtype.itemsize
    if len(blob) < offset + expected:
        raise VolumeFormatError(
            f"nifti: payload truncated, expected {expected} bytes at offset {offset}"
        )
    data = np.frombuffer(blob[offset : offset + expected], dtype=dtype)
    return data.reshape((nx, ny, nz), order="F").astype(dtype.newbyteorder("=")), spacing


def export_barcode(b: Barcode, path) -> None:
    """Barcode as a JSON array; essential pairs omit the death voxel."""
    rows = []
    for p in b.pairs:
        row = {
            "dim": 0,
            "birth": float(_fmt_float(p.birth)),
            "death": float(_fmt_float(p.death)),
            "birth_voxel": list(p.birth_voxel),
            "essential": p.essential,
        }
        if p.death_voxel is not None:
            row["death_voxel"] = list(p.death_voxel)
        rows.append(row)
    Path(path).write_text(json.dumps(rows, indent=1) + "\n")


TRAJECTORY_COLUMNS = ("i", "beta0", "l_cor", "l_com_voxel", "l_com_struct", "l_total", "ph_recomputed")


def export_trajectory(trajectory, path) -> None:
    """Per-iteration refinement log as CSV."""
    lines = [",".join(TRAJECTORY_COLUMNS)]
    for rec in trajectory:
        lines.append(
            ",".join(
                (
                    str(rec.iteration),
                    str(rec.beta0),
                    _fmt_float(rec.l_cor),
                    _fmt_float(rec.l_com_voxel),
                    _fmt_float(rec.l_com_struct),
                    _fmt_float(rec.l_total),
                    "1" if rec.ph_recomputed else "0",
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


METRICS_COLUMNS = ("case", "cldice", "nsdice", "hd95", "bd", "td", "betti0_err", "flags")


def export_metrics(reports: list[tuple[str, MetricReport]], path) -> None:
    """Per-case metric rows as CSV; flags are semicolon-joined."""
    lines = [",".join(METRICS_COLUMNS)]
    for case_id, r in reports:
        lines.append(
            ",".join(
                (
                    str(case_id),
                    _fmt_float(r.cldice_pct),
                    _fmt_float(r.nsdice_pct),
                    _fmt_float(r.hd95_mm),
                    _fmt_float(r.bd_pct),
                    _fmt_float(r.td_pct),
                    str(r.betti0_error),
                    ";".join(r.flags),
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def export_centerline(cl: CenterlineTruth, path) -> None:
    """Centerline as JSON: branch id is the list index."""
    payload = {"branches": [[list(v) for v in branch] for branch in cl.branches]}
    Path(path).write_text(json.dumps(payload) + "\n")


def read_centerline(path) -> CenterlineTruth:
    try:
        payload = json.loads(Path(path).read_text())
        branches = tuple(
            tuple(VoxelCoord(int(x), int(y), int(z)) for x, y, z in branch)
            for branch in payload["branches"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise VolumeFormatError(f"centerline file {path}: {exc}") from exc
    return CenterlineTruth(branches)


def file_digest(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


@dataclass
class RunManifest:
    """Reproducibility record: configuration, file digests, timings."""

    tool_version: str
    subcommand: str
    config: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    timings_s: dict = field(default_factory=dict)

    def add_input(self, name: str, path) -> None:
        self.inputs[name] = {"path": str(path), "sha256": file_digest(path)}

    def add_output(self, name: str, path) -> None:
        self.outputs[name] = {"path": str(path), "sha256": file_digest(path)}

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        raw = json.loads(text)
        return cls(**raw)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls.from_json(Path(path).read_text())
