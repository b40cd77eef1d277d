import hashlib

import numpy as np
import pytest
import torch

from genretransfer.checkpoint import CheckpointError, load_checkpoint, read_metadata, save_checkpoint
from genretransfer.networks import Discriminator, Generator, init_weights


def digest(path):
    with np.load(path, allow_pickle=False) as z:
        h = hashlib.sha256()
        for k in sorted(z.files):
            h.update(k.encode())
            h.update(z[k].tobytes())
        return h.hexdigest()


def nets(seed):
    g = torch.Generator().manual_seed(seed)
    return {"gen": init_weights(Generator(4, 1), g), "disc": init_weights(Discriminator(4), g)}


def test_save_load_save_identical(tmp_path):
    src = nets(0)
    save_checkpoint(tmp_path / "a.npz", src, {"epoch": 3})
    dst = nets(1)
    meta = load_checkpoint(tmp_path / "a.npz", dst)
    save_checkpoint(tmp_path / "b.npz", dst, meta)
    assert digest(tmp_path / "a.npz") == digest(tmp_path / "b.npz")
    for name in src:
        for p, q in zip(src[name].parameters(), dst[name].parameters()):
            assert torch.equal(p, q)


def test_metadata(tmp_path):
    save_checkpoint(tmp_path / "a.npz", nets(0), {"variant": "base", "sigma_d": 1.0})
    assert read_metadata(tmp_path / "a.npz") == {"variant": "base", "sigma_d": 1.0}


def test_architecture_mismatch(tmp_path):
    save_checkpoint(tmp_path / "a.npz", nets(0))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "a.npz", {"gen": Generator(4, 2), "disc": Discriminator(4)})


def test_not_a_checkpoint(tmp_path):
    (tmp_path / "junk.npz").write_bytes(b"not a zip")
    with pytest.raises(CheckpointError):
        read_metadata(tmp_path / "junk.npz")
