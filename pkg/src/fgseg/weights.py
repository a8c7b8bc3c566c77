"""Weight archive: a directory of raw little-endian float32 blobs plus a manifest.

Layout:

    archive/
      manifest.txt
      layer00.weight.bin
      layer00.bias.bin
      ...

The manifest is line oriented text. Header lines name the format,
preset and input channel count; optional ``meta`` lines carry run state
(e.g. the training iteration); one ``tensor`` line per blob records
name, comma-separated shape, dtype, blob filename and crc32. Blobs are
row-major float32 with conv weights shaped (out_c, in_c, k, k). The
format is language neutral, diffable and partially loadable; save then
load round-trips bit-exactly.
"""

import os
import zlib

import numpy as np

from .net import Network, preset_config

FORMAT_LINE = "fgseg-weights 1"


class WeightArchiveError(RuntimeError):
    """Base class for archive load failures."""


class ManifestError(WeightArchiveError):
    """Manifest missing, malformed, or inconsistent with the preset."""


class ShapeMismatchError(WeightArchiveError):
    """A stored tensor does not match the network's declared shape."""

    def __init__(self, name, expected, found):
        self.name, self.expected, self.found = name, tuple(expected), tuple(found)
        super().__init__(f"{name}: expected shape {self.expected}, archive has {self.found}")


class BlobError(WeightArchiveError):
    """A blob file is truncated or fails its checksum."""


def _tensor_names(net):
    out = []
    for i in net.conv_layers():
        out.append((f"layer{i:02d}.weight", net.weights[i]))
        out.append((f"layer{i:02d}.bias", net.biases[i]))
        out.append((f"layer{i:02d}.wvel", net.w_vel[i]))
        out.append((f"layer{i:02d}.bvel", net.b_vel[i]))
    return out


def save_weights(net, path, meta=None, include_velocity=False):
    """Write the network's parameters (and optionally optimizer state) to path."""
    os.makedirs(path, exist_ok=True)
    lines = [FORMAT_LINE, f"preset {net.config.preset}",
             f"in_channels {net.config.in_channels}"]
    for key, value in sorted((meta or {}).items()):
        lines.append(f"meta {key} {value}")
    for name, arr in _tensor_names(net):
        if not include_velocity and name.endswith("vel"):
            continue
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        fname = name + ".bin"
        with open(os.path.join(path, fname), "wb") as f:
            f.write(blob)
        shape = ",".join(str(s) for s in arr.shape)
        crc = zlib.crc32(blob) & 0xFFFFFFFF
        lines.append(f"tensor {name} {shape} float32 {fname} {crc:08x}")
    with open(os.path.join(path, "manifest.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")


def read_manifest(path):
    """Parse manifest.txt; returns (preset, in_channels, meta, tensor entries)."""
    mpath = os.path.join(path, "manifest.txt")
    try:
        with open(mpath) as f:
            raw = [ln.rstrip("\n") for ln in f if ln.strip()]
    except OSError as e:
        raise ManifestError(f"cannot read manifest: {e}") from e
    if not raw or raw[0] != FORMAT_LINE:
        raise ManifestError(f"{mpath}: not a weight archive (bad format line)")
    preset, in_channels, meta, tensors = None, None, {}, []
    for ln in raw[1:]:
        parts = ln.split()
        if parts[0] == "preset" and len(parts) == 2:
            preset = parts[1]
        elif parts[0] == "in_channels" and len(parts) == 2:
            in_channels = int(parts[1])
        elif parts[0] == "meta" and len(parts) >= 3:
            meta[parts[1]] = " ".join(parts[2:])
        elif parts[0] == "tensor" and len(parts) == 6:
            name, shape_s, dtype, fname, crc = parts[1:]
            if dtype != "float32":
                raise ManifestError(f"{mpath}: unsupported dtype {dtype!r} for {name}")
            try:
                shape = tuple(int(s) for s in shape_s.split(","))
            except ValueError:
                raise ManifestError(f"{mpath}: bad shape {shape_s!r} for {name}")
            tensors.append((name, shape, fname, int(crc, 16)))
        else:
            raise ManifestError(f"{mpath}: unrecognized line {ln!r}")
    if preset is None or in_channels is None:
        raise ManifestError(f"{mpath}: missing preset or in_channels")
    return preset, in_channels, meta, tensors


def _read_blob(path, fname, shape, crc):
    fpath = os.path.join(path, fname)
    try:
        with open(fpath, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise BlobError(f"cannot read blob {fname}: {e}") from e
    expected = int(np.prod(shape)) * 4
    if len(blob) != expected:
        raise BlobError(f"{fname}: expected {expected} bytes, found {len(blob)}")
    if (zlib.crc32(blob) & 0xFFFFFFFF) != crc:
        raise BlobError(f"{fname}: checksum mismatch")
    return np.frombuffer(blob, dtype="<f4").reshape(shape).astype(np.float32)


def load_weights(path, preset=None):
    """Rebuild a Network from an archive.

    preset overrides the archived preset name (e.g. to verify an archive
    against a different layer stack); shape conflicts raise
    ShapeMismatchError naming the offending tensor.
    """
    archived_preset, in_channels, meta, tensors = read_manifest(path)
    config = preset_config(preset or archived_preset)
    if in_channels != config.in_channels:
        raise ShapeMismatchError("input", (config.in_channels,), (in_channels,))

    net = Network(config)
    layer_specs = config.layers
    expected = {}
    c = config.in_channels
    for i, l in enumerate(layer_specs):
        if l.kind != "conv":
            continue
        expected[f"layer{i:02d}.weight"] = (l.channels, c, l.kernel, l.kernel)
        expected[f"layer{i:02d}.bias"] = (l.channels,)
        expected[f"layer{i:02d}.wvel"] = (l.channels, c, l.kernel, l.kernel)
        expected[f"layer{i:02d}.bvel"] = (l.channels,)
        c = l.channels

    seen = set()
    for name, shape, fname, crc in tensors:
        if name not in expected:
            raise ManifestError(f"unknown tensor {name!r} for preset {config.preset}")
        if shape != expected[name]:
            raise ShapeMismatchError(name, expected[name], shape)
        arr = _read_blob(path, fname, shape, crc)
        i = int(name[5:7])
        kind = name.split(".")[1]
        if kind == "weight":
            net.weights[i] = arr
        elif kind == "bias":
            net.biases[i] = arr
        elif kind == "wvel":
            net.w_vel[i] = arr
        else:
            net.b_vel[i] = arr
        seen.add(name)

    for i in [j for j, l in enumerate(layer_specs) if l.kind == "conv"]:
        for kind in ("weight", "bias"):
            if f"layer{i:02d}.{kind}" not in seen:
                raise ManifestError(f"archive is missing layer{i:02d}.{kind}")
        if net.w_vel[i] is None:
            net.w_vel[i] = np.zeros_like(net.weights[i])
        if net.b_vel[i] is None:
            net.b_vel[i] = np.zeros_like(net.biases[i])
    return net, meta
