"""Plain-SGD training with plateau learning-rate halving, plus checkpoint IO
and greedy decoding.

Training is single-threaded and fully deterministic for a fixed seed: batch
order, dropout masks, and parameter updates all derive from one RNG stream.
The checkpoint holds the parameters of the best validation epoch.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from comgen.corpus import BOS_ID, EOS_ID, PAD_ID, encode_sequence
from comgen.nnet import tensor as T
from comgen.nnet.config import ModelConfig
from comgen.nnet.models import build_model

CKPT_MAGIC = b"CGCKPT\x00\x01"


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab_sizes: dict
    params: dict  # name -> float64 ndarray
    vocab_hashes: dict = field(default_factory=dict)
    best_val_loss: float = float("inf")
    best_epoch: int = -1
    history: list = field(default_factory=list)

    def build_model(self):
        model = build_model(self.config, self.vocab_sizes)
        load_params(model, self.params)
        return model


def load_params(model, params):
    own = model.params()
    missing = set(own) - set(params)
    extra = set(params) - set(own)
    if missing or extra:
        raise ValueError(f"parameter mismatch: missing={sorted(missing)[:3]} "
                         f"extra={sorted(extra)[:3]}")
    for name, tensor in own.items():
        if tensor.data.shape != params[name].shape:
            raise ValueError(f"shape mismatch for {name}: "
                             f"{tensor.data.shape} vs {params[name].shape}")
        tensor.data = params[name].astype(np.float64).copy()


def encode_dataset(records, vocabs, config: ModelConfig):
    """Records -> padded id matrices per active source plus the comment side.

    Columns that are PAD across the whole set are trimmed (model outputs are
    invariant to trailing padding, so this only saves compute).
    """
    sides = list(config.sources) + ["comment"]
    attr = {"code": "code_tokens", "ast": "flat_ast", "doc": "doc_tokens",
            "comment": "comment_tokens"}
    arrays = {}
    for side in sides:
        rows = []
        for r in records:
            tokens = getattr(r, attr[side])
            if tokens is None:
                raise ValueError(f"record {r.id}: missing {attr[side]}")
            rows.append(encode_sequence(tokens, vocabs[side], config.max_len(side)))
        mat = np.asarray(rows, dtype=np.int64)
        used = max(int((mat != PAD_ID).sum(axis=0).nonzero()[0].max()) + 1, 2)
        arrays[side] = mat[:, :used]
    return arrays


def _slice_batch(arrays, idx):
    return {side: mat[idx] for side, mat in arrays.items()}


def batch_loss(model, batch, training=False, rng=None):
    """Teacher-forced mean cross entropy over non-PAD comment positions."""
    comment = batch["comment"]
    prefix, targets = comment[:, :-1], comment[:, 1:]
    logits = model.forward(batch, prefix, training=training, rng=rng)
    return T.cross_entropy(logits, targets, PAD_ID)


def dataset_loss(model, arrays, batch_size):
    n = len(next(iter(arrays.values())))
    total, seen = 0.0, 0
    with T.no_grad():
        for start in range(0, n, batch_size):
            idx = np.arange(start, min(start + batch_size, n))
            loss = batch_loss(model, _slice_batch(arrays, idx))
            total += float(loss.data) * len(idx)
            seen += len(idx)
    return total / seen


def train(config: ModelConfig, train_records, valid_records, vocabs,
          callback=None):
    """Train a model and return the best-validation-epoch Checkpoint.

    callback(epoch, model, info) may return True to stop early (info carries
    train_loss, val_loss, lr).  Raises TrainingDiverged if the loss goes NaN.
    """
    if not train_records:
        raise ValueError("empty training set")
    vocab_sizes = {side: len(vocabs[side])
                   for side in list(config.sources) + ["comment"]}
    model = build_model(config, vocab_sizes)
    params = model.params()
    train_arrays = encode_dataset(train_records, vocabs, config)
    valid_arrays = (encode_dataset(valid_records, vocabs, config)
                    if valid_records else None)
    rng = np.random.default_rng(config.seed)
    n = len(train_records)
    lr = config.lr0
    best_val = float("inf")
    best_params = {name: p.data.copy() for name, p in params.items()}
    best_epoch = 0
    stale = 0
    history = []
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss = batch_loss(model, _slice_batch(train_arrays, idx),
                              training=True, rng=rng)
            if not np.isfinite(loss.data) or loss.data > 1e12:
                raise TrainingDiverged(
                    f"loss became {float(loss.data)} at epoch {epoch} "
                    f"(lr={lr:g}); lower lr0 or check the data")
            for p in params.values():
                p.zero_grad()
            loss.backward()
            for p in params.values():
                if p.grad is not None:
                    p.data -= lr * p.grad
            total += float(loss.data) * len(idx)
        train_loss = total / n
        val_loss = (dataset_loss(model, valid_arrays, config.batch_size)
                    if valid_arrays is not None else train_loss)
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "val_loss": val_loss, "lr": lr})
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = {name: p.data.copy() for name, p in params.items()}
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                lr *= 0.5
                stale = 0
        if callback is not None and callback(epoch, model, history[-1]):
            break
        if lr < config.lr_floor:
            break
    return Checkpoint(config=config, vocab_sizes=vocab_sizes,
                      params=best_params,
                      vocab_hashes={side: v.sha256() for side, v in vocabs.items()},
                      best_val_loss=best_val, best_epoch=best_epoch,
                      history=history)


def greedy_decode(model, batch, max_len: int = 64):
    """Argmax decoding until EOS or max_len; returns id lists without BOS/EOS.

    The fused memory is computed once per batch and reused across steps.
    """
    sources = {k: np.asarray(v) for k, v in batch.items() if k != "comment"}
    n = len(next(iter(sources.values())))
    with T.no_grad():
        memory, mem_valid = model.encode(sources)
        prefix = np.full((n, 1), BOS_ID, dtype=np.int64)
        done = np.zeros(n, dtype=bool)
        for _ in range(max_len):
            logits = model.decode(memory, mem_valid, prefix)
            nxt = logits.data[:, -1, :].argmax(axis=1)
            nxt = np.where(done, PAD_ID, nxt)
            prefix = np.concatenate([prefix, nxt[:, None]], axis=1)
            done |= nxt == EOS_ID
            if done.all():
                break
    out = []
    for row in prefix[:, 1:]:
        ids = []
        for idx in row:
            if idx == EOS_ID or idx == PAD_ID:
                break
            ids.append(int(idx))
        out.append(ids)
    return out


def save_checkpoint(ckpt: Checkpoint, path):
    """Versioned header + config/vocab JSON + raw little-endian float64 blobs."""
    names = sorted(ckpt.params)
    header = {
        "config": ckpt.config.to_dict(),
        "vocab_sizes": ckpt.vocab_sizes,
        "vocab_hashes": ckpt.vocab_hashes,
        "best_val_loss": ckpt.best_val_loss,
        "best_epoch": ckpt.best_epoch,
        "params": [{"name": n, "shape": list(ckpt.params[n].shape)}
                   for n in names],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(ckpt.params[n], dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        params = {}
        for spec in header["params"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            params[spec["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return Checkpoint(
        config=ModelConfig.from_dict(header["config"]),
        vocab_sizes=header["vocab_sizes"],
        params=params,
        vocab_hashes=header.get("vocab_hashes", {}),
        best_val_loss=header.get("best_val_loss", float("inf")),
        best_epoch=header.get("best_epoch", -1),
    )
