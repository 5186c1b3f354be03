"""Versioned binary checkpoints with full-fidelity resume.

Layout (all little-endian): magic, version, the shape header (d, v, predictor
hidden width), a vocabulary hash, a canonical-config hash, trainer counters,
then the parameter matrices row-major in 32-bit floats, the predictor
tensors, the float64 optimizer moments with their per-row step counts, and a
JSON blob describing the random-stream position. Deterministic given the
state: saving the same run twice produces identical bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .contrastive import PredictorWeights
from .corpus import Vocabulary
from .encoder import ModelParams
from .trainer import AdamSlot, TrainerState

MAGIC = b"DEMBCKP1"
VERSION = 1

_PREDICTOR_ORDER = ("w1", "b1", "gamma", "beta", "running_mean", "running_var", "w2", "b2")
_ADAM_ORDER = ("word_embeddings", "output_embeddings", "predictor.w1", "predictor.b1",
               "predictor.gamma", "predictor.beta", "predictor.w2", "predictor.b2")


class CheckpointError(RuntimeError):
    """Corrupt, truncated, or mismatched checkpoint file."""


def hash_vocab(vocab: Vocabulary) -> bytes:
    import hashlib

    blob = "\n".join(f"{w}\t{int(f)}" for w, f in zip(vocab.words, vocab.freq))
    return hashlib.sha256(blob.encode("utf-8")).digest()


@dataclass
class Checkpoint:
    params: ModelParams
    adam: dict[str, AdamSlot]
    state: TrainerState
    config_hash: bytes
    vocab_hash: bytes
    rng_info: dict


def _predictor_shapes(d: int, hidden: int) -> dict[str, tuple]:
    return {"w1": (hidden, d), "b1": (hidden,), "gamma": (hidden,), "beta": (hidden,),
            "running_mean": (hidden,), "running_var": (hidden,),
            "w2": (d, hidden), "b2": (d,)}


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    params = ckpt.params
    v, d = params.word_embeddings.shape
    hidden = params.predictor.hidden
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIII", VERSION, d, v, hidden))
        fh.write(ckpt.vocab_hash)
        fh.write(ckpt.config_hash)
        fh.write(struct.pack("<IQdI", ckpt.state.epoch, ckpt.state.step,
                             ckpt.state.best_backbone, ckpt.state.plateau))
        fh.write(np.ascontiguousarray(params.word_embeddings, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(params.output_embeddings, dtype="<f4").tobytes())
        tensors = params.predictor.state_tensors()
        for name in _PREDICTOR_ORDER:
            fh.write(np.ascontiguousarray(tensors[name], dtype="<f4").tobytes())
        fh.write(struct.pack("<dd", params.predictor.eps, params.predictor.momentum))
        for name in _ADAM_ORDER:
            slot = ckpt.adam[name]
            fh.write(np.ascontiguousarray(slot.m, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(slot.v, dtype="<f8").tobytes())
            fh.write(struct.pack("<I", slot.t.size))
            fh.write(np.ascontiguousarray(slot.t, dtype="<i8").tobytes())
        rng_blob = json.dumps(ckpt.rng_info, sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(rng_blob)))
        fh.write(rng_blob)


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def _read_array(fh, shape, dtype, what: str) -> np.ndarray:
    n_bytes = int(np.prod(shape)) * np.dtype(dtype).itemsize
    data = _read_exact(fh, n_bytes, what)
    return np.frombuffer(data, dtype=dtype).reshape(shape).copy()


def load_checkpoint(path, vocab: Vocabulary | None = None) -> Checkpoint:
    """Read a checkpoint; verifies the vocabulary hash when a vocab is given."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, len(MAGIC), "magic")
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}: not a checkpoint file")
        version, d, v, hidden = struct.unpack("<IIII", _read_exact(fh, 16, "header"))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        vocab_hash = _read_exact(fh, 32, "vocabulary hash")
        config_hash = _read_exact(fh, 32, "config hash")
        if vocab is not None and hash_vocab(vocab) != vocab_hash:
            raise CheckpointError(
                "vocabulary hash mismatch: checkpoint was trained on a different vocabulary")
        epoch, step, best, plateau = struct.unpack("<IQdI", _read_exact(fh, 24, "counters"))

        word = _read_array(fh, (v, d), "<f4", "word embeddings")
        out = _read_array(fh, (v, d), "<f4", "output embeddings")
        shapes = _predictor_shapes(d, hidden)
        tensors = {name: _read_array(fh, shapes[name], "<f4", f"predictor {name}")
                   for name in _PREDICTOR_ORDER}
        eps, momentum = struct.unpack("<dd", _read_exact(fh, 16, "batch-norm constants"))
        predictor = PredictorWeights(eps=eps, momentum=momentum, **tensors)
        params = ModelParams(word_embeddings=word, output_embeddings=out, predictor=predictor)

        adam: dict[str, AdamSlot] = {}
        tensor_shapes = {"word_embeddings": (v, d), "output_embeddings": (v, d),
                         **{f"predictor.{k}": s for k, s in shapes.items()
                            if k not in ("running_mean", "running_var")}}
        for name in _ADAM_ORDER:
            shape = tensor_shapes[name]
            m = _read_array(fh, shape, "<f8", f"adam m[{name}]")
            vv = _read_array(fh, shape, "<f8", f"adam v[{name}]")
            (t_size,) = struct.unpack("<I", _read_exact(fh, 4, "adam t size"))
            t = _read_array(fh, (t_size,), "<i8", f"adam t[{name}]")
            adam[name] = AdamSlot(m=m, v=vv, t=t)

        (rng_len,) = struct.unpack("<I", _read_exact(fh, 4, "rng length"))
        try:
            rng_info = json.loads(_read_exact(fh, rng_len, "rng state").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"corrupt rng state: {exc}") from exc

        trailing = fh.read(1)
        if trailing:
            raise CheckpointError("trailing bytes after checkpoint payload")

    state = TrainerState(epoch=epoch, step=step, best_backbone=best, plateau=plateau)
    return Checkpoint(params=params, adam=adam, state=state,
                      config_hash=config_hash, vocab_hash=vocab_hash, rng_info=rng_info)
