"""Versioned, checksummed binary container for pipeline artifacts.

Layout (all little-endian):

    magic "CBCN" | version u32 | n_sections u32 | sections... | crc32 u32

Each section is a length-prefixed utf-8 name, a kind byte (1 = float64
array, 2 = int64 array, 3 = utf-8 string), and its payload (arrays carry
ndim + dims as u64).  The trailing CRC covers every preceding byte, so a
flipped bit or truncation fails loudly.  Round trips are bit-exact.
"""

import struct
import zlib

import numpy as np

from .cnn import Network, arch_from_json, arch_to_json
from .errors import BadMagicError, ChecksumFailError, VersionMismatchError
from .imaging import ImageEncoder, ImageLayout
from .pca import PcaReducer
from .sae import SaeModel

MAGIC = b"CBCN"
VERSION = 1

_KIND_F8 = 1
_KIND_I8 = 2
_KIND_STR = 3


def save_checkpoint(path, sections):
    """Write a {name: float array | int array | str} mapping."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<II", VERSION, len(sections))
    for name, value in sections.items():
        enc = name.encode("utf-8")
        blob += struct.pack("<I", len(enc)) + enc
        if isinstance(value, str):
            data = value.encode("utf-8")
            blob += struct.pack("<BQ", _KIND_STR, len(data)) + data
            continue
        arr = np.asarray(value)
        if np.issubdtype(arr.dtype, np.integer) or arr.dtype == np.bool_:
            kind, dtype = _KIND_I8, "<i8"
        else:
            kind, dtype = _KIND_F8, "<f8"
        arr = np.ascontiguousarray(arr.astype(dtype))
        blob += struct.pack("<BI", kind, arr.ndim)
        blob += struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
        blob += arr.tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise ChecksumFailError("checkpoint truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("not a cbcnn checkpoint")
    if len(data) < 16:
        raise ChecksumFailError("checkpoint truncated")
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != crc:
        raise ChecksumFailError("checksum mismatch")
    r = _Reader(data[:-4])
    r.take(4)
    version, n_sections = r.unpack("<II")
    if version != VERSION:
        raise VersionMismatchError(f"format version {version}, expected {VERSION}")
    sections = {}
    for _ in range(n_sections):
        (name_len,) = r.unpack("<I")
        name = r.take(name_len).decode("utf-8")
        (kind,) = r.unpack("<B")
        if kind == _KIND_STR:
            (length,) = r.unpack("<Q")
            sections[name] = r.take(length).decode("utf-8")
            continue
        (ndim,) = r.unpack("<I")
        shape = r.unpack(f"<{ndim}Q") if ndim else ()
        count = int(np.prod(shape)) if ndim else 1
        dtype = "<f8" if kind == _KIND_F8 else "<i8"
        arr = np.frombuffer(r.take(count * 8), dtype=dtype).reshape(shape)
        sections[name] = arr.copy() if ndim else arr.copy().reshape(())
    if r.pos != len(r.data):
        raise ChecksumFailError("trailing bytes after section table")
    return sections


# ---------------------------------------------------------------------------
# model codecs: flatten fitted objects into sections and back


def pack_pca(prefix, pca):
    return {
        f"{prefix}/scale_mean": pca.scale_mean_,
        f"{prefix}/scale_std": pca.scale_std_,
        f"{prefix}/mean": pca.mean_,
        f"{prefix}/components": pca.components_,
        f"{prefix}/eigenvalues": pca.eigenvalues_,
        f"{prefix}/n_components": np.array([pca.n_components_]),
        f"{prefix}/standardize": np.array([int(pca.standardize)]),
    }


def unpack_pca(sections, prefix):
    pca = PcaReducer(
        n_components=int(sections[f"{prefix}/n_components"][0]),
        standardize=bool(sections[f"{prefix}/standardize"][0]),
    )
    pca.scale_mean_ = sections[f"{prefix}/scale_mean"]
    pca.scale_std_ = sections[f"{prefix}/scale_std"]
    pca.mean_ = sections[f"{prefix}/mean"]
    pca.components_ = sections[f"{prefix}/components"]
    pca.eigenvalues_ = sections[f"{prefix}/eigenvalues"]
    pca.n_components_ = int(sections[f"{prefix}/n_components"][0])
    return pca


def pack_encoder(prefix, enc):
    lay = enc.layout_
    return {
        f"{prefix}/layout": np.array([lay.rows, lay.cols, lay.channels]),
        f"{prefix}/out": np.array([enc.out_h, enc.out_w]),
        f"{prefix}/col_min": enc.col_min_,
        f"{prefix}/col_max": enc.col_max_,
    }


def unpack_encoder(sections, prefix):
    rows, cols, channels = (int(v) for v in sections[f"{prefix}/layout"])
    out_h, out_w = (int(v) for v in sections[f"{prefix}/out"])
    enc = ImageEncoder(ImageLayout(rows, cols, channels), out_h, out_w, channels)
    enc.layout_ = ImageLayout(rows, cols, channels)
    enc.col_min_ = sections[f"{prefix}/col_min"]
    enc.col_max_ = sections[f"{prefix}/col_max"]
    return enc


def pack_sae(prefix, model):
    out = {f"{prefix}/depth": np.array([len(model.enc_w)])}
    for i in range(len(model.enc_w)):
        out[f"{prefix}/enc_w{i}"] = model.enc_w[i]
        out[f"{prefix}/enc_b{i}"] = model.enc_b[i]
        out[f"{prefix}/dec_w{i}"] = model.dec_w[i]
        out[f"{prefix}/dec_b{i}"] = model.dec_b[i]
    return out


def unpack_sae(sections, prefix):
    depth = int(sections[f"{prefix}/depth"][0])
    return SaeModel(
        [sections[f"{prefix}/enc_w{i}"] for i in range(depth)],
        [sections[f"{prefix}/enc_b{i}"] for i in range(depth)],
        [sections[f"{prefix}/dec_w{i}"] for i in range(depth)],
        [sections[f"{prefix}/dec_b{i}"] for i in range(depth)],
    )


def pack_network(prefix, net):
    return {
        f"{prefix}/arch": arch_to_json(net.arch),
        f"{prefix}/input_shape": np.array(net.input_shape),
        f"{prefix}/params": net.params,
    }


def unpack_network(sections, prefix):
    arch = arch_from_json(sections[f"{prefix}/arch"])
    shape = tuple(int(v) for v in sections[f"{prefix}/input_shape"])
    return Network(arch, shape, sections[f"{prefix}/params"])


def pack_adam(prefix, state):
    return {
        f"{prefix}/m": state.m,
        f"{prefix}/v": state.v,
        f"{prefix}/t": np.array([state.t]),
        f"{prefix}/hyper": np.array([state.beta1, state.beta2, state.eps, state.lr]),
    }


def unpack_adam(sections, prefix):
    from .optim import AdamState

    beta1, beta2, eps, lr = sections[f"{prefix}/hyper"]
    return AdamState(
        m=sections[f"{prefix}/m"],
        v=sections[f"{prefix}/v"],
        t=int(sections[f"{prefix}/t"][0]),
        beta1=float(beta1),
        beta2=float(beta2),
        eps=float(eps),
        lr=float(lr),
    )
