"""Reading and writing of prediction tensors, binary masks, heatmaps and manifests.

Tensor container (``.runc``), all integers little-endian::

    offset  size  field
    0       4     magic b"RUNC"
    4       2     format version (u16, currently 1)
    6       2     dtype code (u16, 1 = float32)
    8       24    dims T, H, W (3 x u64)
    32      32    reserved, zero
    64      ...   float32 payload, row-major, iteration-major

Masks and heatmaps are PNG files; manifests are UTF-8 JSON arrays.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

MAGIC = b"RUNC"
VERSION = 1
DTYPE_FLOAT32 = 1
HEADER_SIZE = 64
_HEADER = struct.Struct("<4sHHQQQ")


class FormatError(ValueError):
    """A file does not match the expected container or image format."""


def write_tensor(tensor: np.ndarray, path) -> None:
    arr = np.asarray(tensor)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected a (T, H, W) tensor, got shape {arr.shape}")
    if arr.dtype != np.float32:
        arr = arr.astype(np.float32)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    header = _HEADER.pack(MAGIC, VERSION, DTYPE_FLOAT32, *arr.shape)
    header += b"\x00" * (HEADER_SIZE - len(header))
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_tensor(path) -> np.ndarray:
    """Load a ``.runc`` file as a float32 array of shape (T, H, W)."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"{path}: malformed header (file is {len(raw)} bytes)")
    magic, version, dtype, t, h, w = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: malformed header (bad magic {magic!r})")
    if version != VERSION:
        raise FormatError(f"{path}: malformed header (unsupported version {version})")
    if dtype != DTYPE_FLOAT32:
        raise FormatError(f"{path}: malformed header (unknown dtype code {dtype})")
    expected = t * h * w * 4
    if len(raw) - HEADER_SIZE != expected:
        raise FormatError(
            f"{path}: payload length mismatch (expected {expected} bytes, "
            f"got {len(raw) - HEADER_SIZE})"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=HEADER_SIZE).astype(np.float32)
    data = data.reshape(t, h, w)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: non-finite values in payload")
    return data


def read_mask(path) -> np.ndarray:
    """Load an 8-bit grayscale PNG with values {0, 255} as a uint8 {0, 1} mask."""
    with Image.open(path) as img:
        if img.mode != "L":
            raise FormatError(f"{path}: expected single-channel 8-bit image, got mode {img.mode}")
        arr = np.array(img)
    bad = (arr != 0) & (arr != 255)
    if bad.any():
        raise FormatError(f"{path}: non-binary mask value {int(arr[bad][0])}")
    return (arr == 255).astype(np.uint8)


def write_mask(mask: np.ndarray, path) -> None:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D mask, got shape {m.shape}")
    if not np.isin(m, (0, 1)).all():
        raise ValueError("non-binary mask value")
    Image.fromarray(m.astype(np.uint8) * 255, mode="L").save(path)


def read_rgb(path) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode != "RGB":
            raise FormatError(f"{path}: expected 3-channel RGB image, got mode {img.mode}")
        return np.array(img)


def write_rgb(rgb: np.ndarray, path) -> None:
    Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB").save(path)


def heatmap_rgb(values: np.ndarray, vmax: float) -> np.ndarray:
    """Blue -> white -> red ramp: 0 is (0,0,255), vmax/2 white, >= vmax (255,0,0)."""
    if not vmax > 0:
        raise ValueError(f"vmax must be positive, got {vmax}")
    t = np.clip(np.asarray(values, dtype=np.float64) / vmax, 0.0, 1.0)
    rise = np.floor(255.0 * np.minimum(t, 0.5) * 2.0 + 0.5)
    fall = np.floor(255.0 * (1.0 - np.maximum(t - 0.5, 0.0) * 2.0) + 0.5)
    rgb = np.empty(t.shape + (3,), dtype=np.uint8)
    rgb[..., 0] = np.where(t <= 0.5, rise, 255)
    rgb[..., 1] = np.where(t <= 0.5, rise, fall)
    rgb[..., 2] = np.where(t <= 0.5, 255, fall)
    return rgb


def write_heatmap(values, path, vmax: float) -> None:
    """Render an uncertainty map (array or object with ``.values``) as an RGB PNG."""
    values = getattr(values, "values", values)
    write_rgb(heatmap_rgb(values, vmax), path)


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    stack_path: Path
    gt_path: Path
    rgb_path: Path | None = None
    has_tumor: bool = True


def load_manifest(path, check_files: bool = True) -> list[ManifestEntry]:
    """Parse a manifest; relative paths resolve against the manifest's directory."""
    path = Path(path)
    root = path.parent
    raw = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise FormatError(f"{path}: manifest must be a JSON array")
    entries = []
    seen = set()
    for item in raw:
        try:
            image_id = str(item["image_id"])
            stack = root / item["stack_path"]
            gt = root / item["gt_path"]
        except (KeyError, TypeError) as exc:
            raise FormatError(f"{path}: bad manifest entry {item!r}") from exc
        if image_id in seen:
            raise FormatError(f"{path}: duplicate image_id {image_id!r}")
        seen.add(image_id)
        rgb = item.get("rgb_path")
        entry = ManifestEntry(
            image_id=image_id,
            stack_path=stack,
            gt_path=gt,
            rgb_path=root / rgb if rgb else None,
            has_tumor=bool(item.get("has_tumor", True)),
        )
        if check_files:
            for p in (entry.stack_path, entry.gt_path, entry.rgb_path):
                if p is not None and not p.exists():
                    raise FileNotFoundError(f"{path}: {image_id}: missing file {p}")
        entries.append(entry)
    return entries


def write_manifest(entries, path) -> None:
    """Write entries with paths made relative to the manifest's directory when possible."""
    path = Path(path)
    root = path.parent.resolve()

    def rel(p):
        if p is None:
            return None
        p = Path(p).resolve()
        try:
            return p.relative_to(root).as_posix()
        except ValueError:
            return str(p)

    out = []
    for e in entries:
        d = asdict(e)
        d["stack_path"] = rel(e.stack_path)
        d["gt_path"] = rel(e.gt_path)
        d["rgb_path"] = rel(e.rgb_path)
        out.append(d)
    path.write_text(json.dumps(out, indent=2) + "\n", encoding="utf-8")
