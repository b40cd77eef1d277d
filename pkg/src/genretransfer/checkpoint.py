"""Checkpoint container.

A checkpoint is a single ``.npz`` archive (no pickles):

* ``<network>/<parameter>`` -- float32 parameter arrays, one per state-dict entry
* ``__fingerprint__`` -- JSON: ``{network: architecture_fingerprint(net)}``
* ``__metadata__`` -- JSON: training metadata (epoch, sigma_d, variant, seed, ...)

Loading rebuilds nothing by itself; callers construct the networks and
:func:`load_checkpoint` refuses to fill them if the fingerprint differs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .networks import architecture_fingerprint


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, networks: dict[str, nn.Module], metadata: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for net_name, net in networks.items():
        for name, tensor in net.state_dict().items():
            arrays[f"{net_name}/{name}"] = tensor.detach().cpu().numpy().astype(np.float32)
    fingerprint = {n: architecture_fingerprint(net) for n, net in networks.items()}
    arrays["__fingerprint__"] = np.array(json.dumps(fingerprint, sort_keys=True))
    arrays["__metadata__"] = np.array(json.dumps(metadata or {}, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def read_metadata(path) -> dict:
    try:
        with np.load(path, allow_pickle=False) as data:
            return json.loads(str(data["__metadata__"]))
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: not a valid checkpoint ({exc})") from exc


def load_checkpoint(path, networks: dict[str, nn.Module]) -> dict:
    """Fill ``networks`` in place from ``path`` and return the stored metadata."""
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc})") from exc
    with data:
        stored = json.loads(str(data["__fingerprint__"]))
        for net_name, net in networks.items():
            expected = architecture_fingerprint(net)
            if stored.get(net_name) != json.loads(json.dumps(expected)):
                raise CheckpointError(
                    f"{path}: architecture of {net_name!r} does not match the checkpoint"
                )
            state = {
                name: torch.from_numpy(data[f"{net_name}/{name}"]).to(tensor.dtype)
                for name, tensor in net.state_dict().items()
            }
            net.load_state_dict(state)
        return json.loads(str(data["__metadata__"]))
