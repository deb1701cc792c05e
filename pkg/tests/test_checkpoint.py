import numpy as np
import pytest

from cbcnn.checkpoint import (
    load_checkpoint,
    pack_adam,
    pack_encoder,
    pack_network,
    pack_pca,
    pack_sae,
    save_checkpoint,
    unpack_adam,
    unpack_encoder,
    unpack_network,
    unpack_pca,
    unpack_sae,
)
from cbcnn.cnn import mini_inception_arch, Network
from cbcnn.errors import BadMagicError, ChecksumFailError, VersionMismatchError
from cbcnn.imaging import ImageEncoder, ImageLayout
from cbcnn.optim import AdamState
from cbcnn.pca import PcaReducer
from cbcnn.rng import RngStream
from cbcnn.sae import SaeConfig, train_layerwise


def test_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    sections = {
        "a/floats": rng.normal(size=(3, 4)),
        "b/ints": np.arange(7),
        "c/text": "hello\nworld",
        "d/scalarish": np.array([2.5]),
        "e/empty": np.empty(0),
    }
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, sections)
    out = load_checkpoint(path)
    assert set(out) == set(sections)
    assert out["a/floats"].tobytes() == sections["a/floats"].tobytes()
    np.testing.assert_array_equal(out["b/ints"], sections["b/ints"])
    assert out["c/text"] == "hello\nworld"
    # writing again produces identical bytes
    path2 = tmp_path / "y.ckpt"
    save_checkpoint(path2, sections)
    assert path.read_bytes() == path2.read_bytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "x.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 40)
    with pytest.raises(BadMagicError):
        load_checkpoint(path)


def test_version_mismatch(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, {"a": np.zeros(2)})
    raw = bytearray(path.read_bytes())
    raw[4] = 99  # bump version field
    import struct
    import zlib

    body = bytes(raw[:-4])
    patched = body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    path.write_bytes(patched)
    with pytest.raises(VersionMismatchError):
        load_checkpoint(path)


def test_truncated_file(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, {"a": np.arange(10, dtype=float)})
    data = path.read_bytes()
    path.write_bytes(data[: len(data) - 9])
    with pytest.raises(ChecksumFailError):
        load_checkpoint(path)


def test_flipped_bit(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, {"a": np.arange(10, dtype=float)})
    raw = bytearray(path.read_bytes())
    raw[20] ^= 0x40
    path.write_bytes(bytes(raw))
    with pytest.raises(ChecksumFailError):
        load_checkpoint(path)


def test_pca_codec_roundtrip(tmp_path):
    X = np.random.default_rng(1).normal(size=(30, 6))
    pca = PcaReducer(n_components=4).fit(X)
    path = tmp_path / "pca.ckpt"
    save_checkpoint(path, pack_pca("pca", pca))
    out = unpack_pca(load_checkpoint(path), "pca")
    np.testing.assert_array_equal(out.transform(X), pca.transform(X))


def test_encoder_codec_roundtrip(tmp_path):
    X = np.random.default_rng(2).normal(size=(20, 12))
    enc = ImageEncoder(ImageLayout(2, 2, 3), 8, 8).fit(X)
    path = tmp_path / "enc.ckpt"
    save_checkpoint(path, pack_encoder("enc", enc))
    out = unpack_encoder(load_checkpoint(path), "enc")
    np.testing.assert_array_equal(out.transform(X), enc.transform(X))


def test_sae_codec_roundtrip(tmp_path):
    X = RngStream(3).random((20, 8))
    model, _ = train_layerwise(X, SaeConfig(layer_sizes=(8, 5, 3), epochs=1), RngStream(4))
    path = tmp_path / "sae.ckpt"
    save_checkpoint(path, pack_sae("sae", model))
    out = unpack_sae(load_checkpoint(path), "sae")
    from cbcnn.sae import reconstruct_all

    np.testing.assert_array_equal(reconstruct_all(out, X), reconstruct_all(model, X))


def test_network_codec_roundtrip(tmp_path):
    net = Network(mini_inception_arch(), (8, 8, 3)).initialized(RngStream(5))
    path = tmp_path / "net.ckpt"
    save_checkpoint(path, pack_network("net", net))
    out = unpack_network(load_checkpoint(path), "net")
    x = np.random.default_rng(6).normal(size=(4, 8, 8, 3))
    np.testing.assert_array_equal(out.forward(x), net.forward(x))
    assert out.params.tobytes() == net.params.tobytes()


def test_adam_codec_roundtrip(tmp_path):
    state = AdamState(np.arange(5.0), np.arange(5.0) ** 2, t=7, lr=0.01)
    path = tmp_path / "adam.ckpt"
    save_checkpoint(path, pack_adam("adam", state))
    out = unpack_adam(load_checkpoint(path), "adam")
    assert out.t == 7 and out.lr == 0.01
    np.testing.assert_array_equal(out.m, state.m)
    np.testing.assert_array_equal(out.v, state.v)
