"""Training loop with early stopping, checkpoints, run reports and batch inference."""

from __future__ import annotations

import io
import json
import logging
import os
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tape
from .config import TrainConfig, apply_overrides, parse_config_text
from .graph import SnapshotSequence
from .losses import contrastive_loss, cross_entropy_from_logits, total_loss
from .metrics import macro_f1, micro_f1
from .model import ChronoSpike, FixedSampler, forward_encoder, logits
from .optim import AdamW, clip_grad_norm

log = logging.getLogger(__name__)

MAGIC = b"CHSPKCKP"
FORMAT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


# ----------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    params: "OrderedDict[str, np.ndarray]"
    optimizer: "OrderedDict[str, np.ndarray]"
    meta: dict

    @property
    def best_val_macro_f1(self) -> float:
        return float(self.meta["best_val_macro_f1"])

    @property
    def epoch(self) -> int:
        return int(self.meta["epoch"])

    def config(self) -> TrainConfig:
        return apply_overrides(TrainConfig(), parse_config_text(self.meta["config"]))

    def build_model(self) -> ChronoSpike:
        model = ChronoSpike(self.config(), self.meta["d_in"], self.meta["num_classes"])
        for k, v in self.params.items():
            model.params[k][...] = v
        return model

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        meta = json.dumps(self.meta, sort_keys=True).encode()
        buf.write(MAGIC)
        buf.write(struct.pack("<HI", FORMAT_VERSION, len(meta)))
        buf.write(meta)
        blobs = list(self.params.items()) + list(self.optimizer.items())
        buf.write(struct.pack("<II", len(self.params), len(self.optimizer)))
        for name, arr in blobs:
            raw = name.encode()
            arr = np.ascontiguousarray(arr, dtype="<f8")
            buf.write(struct.pack("<HB", len(raw), arr.ndim))
            buf.write(raw)
            buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            buf.write(arr.tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        view = memoryview(data)
        if bytes(view[:8]) != MAGIC:
            raise ValueError("not a checkpoint file (bad magic)")
        version, mlen = struct.unpack_from("<HI", view, 8)
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        pos = 14
        meta = json.loads(bytes(view[pos:pos + mlen]))
        pos += mlen
        n_params, n_opt = struct.unpack_from("<II", view, pos)
        pos += 8
        arrays = []
        for _ in range(n_params + n_opt):
            nlen, ndim = struct.unpack_from("<HB", view, pos)
            pos += 3
            name = bytes(view[pos:pos + nlen]).decode()
            pos += nlen
            shape = struct.unpack_from(f"<{ndim}Q", view, pos)
            pos += 8 * ndim
            count = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(view, dtype="<f8", count=count, offset=pos).reshape(shape).copy()
            pos += 8 * count
            arrays.append((name, arr))
        return cls(OrderedDict(arrays[:n_params]), OrderedDict(arrays[n_params:]), meta)

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path: str) -> "Checkpoint":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


# ----------------------------------------------------------------------------
# reports

REPORT_COLUMNS = ("epoch", "loss_cls", "loss_con", "loss_total", "grad_norm",
                  "val_macro_f1", "val_micro_f1", "best_val_macro_f1", "improved")


@dataclass
class RunReport:
    records: list[dict] = field(default_factory=list)
    stopped_early: bool = False
    best_epoch: int = 0

    def to_tsv(self) -> str:
        lines = ["\t".join(REPORT_COLUMNS)]
        for r in self.records:
            lines.append("\t".join(_fmt(r[c]) for c in REPORT_COLUMNS))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_tsv(cls, text: str) -> "RunReport":
        rows = [ln.split("\t") for ln in text.strip().splitlines()]
        head, body = rows[0], rows[1:]
        recs = []
        for row in body:
            rec = {}
            for k, v in zip(head, row):
                rec[k] = int(v) if k in ("epoch", "improved") else float(v)
            recs.append(rec)
        rep = cls(recs)
        best = [r["epoch"] for r in recs if r["improved"]]
        rep.best_epoch = best[-1] if best else 0
        return rep


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


# ----------------------------------------------------------------------------
# splits and batches


def resolve_splits(seq: SnapshotSequence, cfg: TrainConfig) -> dict[str, np.ndarray]:
    """Train/val/test node ids, carving a validation slice out of train if needed."""
    labelled = seq.labels >= 0
    splits = {k: np.asarray(v, dtype=np.int64) for k, v in seq.splits.items()}
    train = splits.get("train", np.zeros(0, np.int64))
    train = train[labelled[train]]
    if not len(train):
        raise ValueError("no labelled training nodes")
    val = splits.get("val", np.zeros(0, np.int64))
    val = val[labelled[val]]
    if not len(val):
        rng = np.random.default_rng([cfg.seed, 17])
        perm = rng.permutation(train)
        n_val = max(1, int(round(cfg.val_fraction * len(train))))
        val, train = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    test = splits.get("test", np.zeros(0, np.int64))
    return {"train": train, "val": val, "test": test[labelled[test]]}


def default_infer_batch_size(num_nodes: int) -> int:
    return 10_000 if num_nodes > 1_000_000 else 200_000


def predict(model: ChronoSpike, seq: SnapshotSequence, nodes, batch_size: int | None = None,
            sampler: FixedSampler | None = None) -> np.ndarray:
    """Argmax class per node in evaluation mode (no dropout, no tape)."""
    nodes = np.asarray(nodes, dtype=np.int64)
    batch_size = batch_size or model.cfg.infer_batch_size or default_infer_batch_size(seq.num_nodes)
    sampler = sampler or FixedSampler(model.cfg.seed)
    bound = model.bind(None)
    out = []
    for i in range(0, len(nodes), batch_size):
        enc = forward_encoder(bound, seq, nodes[i:i + batch_size], training=False, sampler=sampler)
        out.append(np.argmax(logits(enc.z, bound).data, axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def infer(seq: SnapshotSequence, checkpoint: Checkpoint, batch_size: int | None = None,
          nodes=None) -> np.ndarray:
    """Predicted labels for ``nodes`` (default: the test split)."""
    model = checkpoint.build_model()
    if nodes is None:
        nodes = resolve_splits(seq, model.cfg)["test"]
    return predict(model, seq, nodes, batch_size)


# ----------------------------------------------------------------------------
# training


@dataclass
class StepResult:
    loss_cls: float
    loss_con: float
    loss_total: float
    grad_norm: float
    grads: dict


def loss_and_grads(model: ChronoSpike, seq: SnapshotSequence, batch: np.ndarray,
                   rng: np.random.Generator) -> StepResult:
    """Forward a training batch and return the combined loss and its gradients."""
    cfg = model.cfg
    tape = Tape()
    bound = model.bind(tape)
    enc = forward_encoder(bound, seq, batch, training=True, rng=rng)
    lcls = cross_entropy_from_logits(logits(enc.z, bound), seq.labels[batch])
    if cfg.contrastive_weight > 0:
        lcon = contrastive_loss(enc.z, cfg.contrastive_temperature, cfg.contrastive_dropout, rng)
        loss = total_loss(lcls, lcon, cfg.contrastive_weight)
    else:
        lcon, loss = ad.Tensor(0.0), lcls
    grads = tape.backward(loss).leaves()
    return StepResult(lcls.item(), lcon.item(), loss.item(), 0.0, grads)


def _dump_batch(out_dir: str | None, epoch: int, batch: np.ndarray, err: Exception) -> str:
    msg = f"non-finite values at epoch {epoch} on batch of {len(batch)} nodes: {err}"
    if out_dir:
        path = os.path.join(out_dir, "diverged_batch.txt")
        with open(path, "w") as fh:
            fh.write(msg + "\n" + " ".join(map(str, batch.tolist())) + "\n")
        msg += f" (batch dumped to {path})"
    return msg


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    report: RunReport
    model: ChronoSpike
    splits: dict


def train(seq: SnapshotSequence, cfg: TrainConfig, out_dir: str | None = None,
          val_score: Callable[[ChronoSpike, int], float] | None = None) -> TrainResult:
    """Mini-batch training with validation Macro-F1 early stopping.

    ``val_score(model, epoch)`` may replace the validation metric; it exists
    so the stopping rule can be exercised in isolation.
    """
    splits = resolve_splits(seq, cfg)
    num_classes = max(seq.num_classes, 2)
    model = ChronoSpike(cfg, seq.feature_dim, num_classes, np.random.default_rng([cfg.seed, 1]))
    opt = AdamW(model.params, cfg.lr, cfg.betas, cfg.adam_eps, cfg.weight_decay)
    rng = np.random.default_rng([cfg.seed, 2])
    eval_sampler = FixedSampler(cfg.seed)
    train_nodes = splits["train"]
    report = RunReport()
    best = None
    best_f1, stale = 0.0, 0

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(train_nodes)
        sums = np.zeros(4)
        nb = 0
        for i in range(0, len(order), cfg.batch_size):
            batch = order[i:i + cfg.batch_size]
            try:
                step = loss_and_grads(model, seq, batch, rng)
            except ad.NonFiniteError as e:
                raise TrainingDiverged(_dump_batch(out_dir, epoch, batch, e)) from e
            grads, norm = clip_grad_norm(step.grads, cfg.grad_clip)
            opt.step(grads)
            sums += (step.loss_cls, step.loss_con, step.loss_total, norm)
            nb += 1
        sums /= max(nb, 1)

        if val_score is not None:
            vmac = vmic = float(val_score(model, epoch))
        else:
            pred = predict(model, seq, splits["val"], sampler=eval_sampler)
            truth = seq.labels[splits["val"]]
            vmac, vmic = macro_f1(truth, pred), micro_f1(truth, pred)
        improved = vmac > best_f1
        if improved:
            best_f1, stale = vmac, 0
            best = Checkpoint(
                OrderedDict((k, v.copy()) for k, v in model.params.items()),
                OrderedDict((k, v.copy()) for k, v in opt.state_arrays().items()),
                {"best_val_macro_f1": best_f1, "epoch": epoch, "config": cfg.dump(),
                 "d_in": model.d_in, "num_classes": model.num_classes,
                 "format": "chronospike-checkpoint"},
            )
            report.best_epoch = epoch
        else:
            stale += 1
        report.records.append({
            "epoch": epoch, "loss_cls": float(sums[0]), "loss_con": float(sums[1]),
            "loss_total": float(sums[2]), "grad_norm": float(sums[3]),
            "val_macro_f1": float(vmac), "val_micro_f1": float(vmic),
            "best_val_macro_f1": float(best_f1), "improved": int(improved),
        })
        log.info("epoch %d loss %.4f val macro-F1 %.4f", epoch, sums[2], vmac)
        if stale >= cfg.patience:
            report.stopped_early = True
            break

    if best is None:
        # validation never rose above zero; keep the final weights
        best = Checkpoint(
            OrderedDict((k, v.copy()) for k, v in model.params.items()),
            OrderedDict((k, v.copy()) for k, v in opt.state_arrays().items()),
            {"best_val_macro_f1": 0.0, "epoch": len(report.records), "config": cfg.dump(),
             "d_in": model.d_in, "num_classes": model.num_classes,
             "format": "chronospike-checkpoint"},
        )
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        best.save(os.path.join(out_dir, "checkpoint.bin"))
        with open(os.path.join(out_dir, "report.tsv"), "w") as fh:
            fh.write(report.to_tsv())
    return TrainResult(best, report, best.build_model(), splits)
