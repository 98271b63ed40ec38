"""Training loop, optimisers and checkpoints.

Checkpoint layout (all integers little-endian)::

    b"LALPCKPT"  uint32 version  uint64 header_len  header (UTF-8 JSON)
    per parameter, in declaration order:  uint64 count  count x float64
"""

from __future__ import annotations

import json
import logging
import math
import struct
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import tensor as T
from .encoder import Vocab
from .metrics import DEFAULT_PUNCT, EvalReport, evaluate
from .model import LALParser, ParserConfig

log = logging.getLogger(__name__)

MAGIC = b"LALPCKPT"
VERSION = 1


class TrainingDiverged(RuntimeError):
    """The loss became NaN or infinite."""


class CheckpointError(ValueError):
    """A checkpoint file is malformed or does not fit the model."""


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 10
    lr: float = 1e-3
    optimizer: str = "adam"
    seed: int = 1
    parser: ParserConfig = field(default_factory=ParserConfig)
    punct_tags: list[str] = field(default_factory=lambda: sorted(DEFAULT_PUNCT))
    checkpoint: str | None = None
    eval_every: int = 0
    # stop once training-set metrics reach these values, e.g. {"f1": 99.0}
    stop_at: dict[str, float] | None = None
    data: dict | None = None

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.batch_size < 1 or self.lr < 0:
            raise ValueError("epochs, batch_size and lr must be non-negative (batch_size >= 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["parser"] = self.parser.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        parser = d.pop("parser", {})
        return cls(parser=parser if isinstance(parser, ParserConfig) else ParserConfig.from_dict(parser), **d)

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


class Adam:
    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8) -> None:
        self.params = list(params)
        self.lr, (self.b1, self.b2), self.eps = lr, betas, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= self.b1
            m += (1.0 - self.b1) * p.grad
            v *= self.b2
            v += (1.0 - self.b2) * p.grad * p.grad
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, params, lr: float = 1e-2) -> None:
        self.params, self.lr = list(params), lr

    def step(self) -> None:
        for p in self.params:
            if p.grad is not None:
                p.data -= self.lr * p.grad


@dataclass
class TrainResult:
    model: LALParser
    losses: list[float]
    reports: list[tuple[int, EvalReport]]
    seconds: float

    @property
    def epochs_run(self) -> int:
        return len(self.losses)


def _reached(report: EvalReport, targets: dict[str, float]) -> bool:
    row = report.row()
    return all(row[k] >= v for k, v in targets.items())


def train(
    treebank,
    config: TrainConfig,
    dev=None,
    on_epoch: Callable[[int, float, EvalReport | None], None] | None = None,
) -> TrainResult:
    """Minimise the summed constituency and dependency losses.

    Each batch accumulates per-sentence gradients before one optimiser step.
    Metrics are computed every ``eval_every`` epochs on ``dev`` (the
    training set when ``dev`` is None); ``stop_at`` ends training early.
    """
    start = time.perf_counter()
    model = LALParser(config.parser, treebank.vocab, seed=config.seed)
    examples = [model.example(it.sentence, it.tree, it.arcs) for it in treebank]
    params = model.parameters()
    opt = Adam(params, config.lr) if config.optimizer == "adam" else SGD(params, config.lr)
    rng = np.random.default_rng(config.seed + 1)
    dropout_rng = np.random.default_rng(config.seed + 2)
    eval_set = dev if dev is not None else treebank
    losses: list[float] = []
    reports: list[tuple[int, EvalReport]] = []

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(examples))
        total = 0.0
        for b in range(0, len(order), config.batch_size):
            T.zero_grad(params)
            for k in order[b : b + config.batch_size]:
                loss = model.loss(examples[k], training=True, rng=dropout_rng)
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingDiverged(f"epoch {epoch}: non-finite loss {value} on sentence {k}")
                loss.backward()
                total += value
            opt.step()
        losses.append(total)
        report = None
        if config.eval_every and (epoch % config.eval_every == 0 or epoch == config.epochs):
            report = evaluate(model, eval_set, config.punct_tags)
            reports.append((epoch, report))
        log.info("epoch %d loss %.4f%s", epoch, total, f" f1 {report.f1:.2f} uas {report.uas:.2f} las {report.las:.2f}" if report else "")
        if on_epoch is not None:
            on_epoch(epoch, total, report)
        if report is not None and config.stop_at and _reached(report, config.stop_at):
            break
    if config.checkpoint:
        save_checkpoint(model, config.checkpoint)
    return TrainResult(model, losses, reports, time.perf_counter() - start)


# -- checkpoints -----------------------------------------------------------

def checkpoint_bytes(model: LALParser) -> bytes:
    named = list(model.named_parameters())
    header = {
        "config": model.config.to_dict(),
        "vocab": model.vocab.to_dict(),
        "params": [{"name": n, "shape": list(p.shape)} for n, p in named],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks = [MAGIC, struct.pack("<IQ", VERSION, len(head)), head]
    for _, p in named:
        chunks.append(struct.pack("<Q", p.size))
        chunks.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    return b"".join(chunks)


def save_checkpoint(model: LALParser, path: str | Path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


def load_checkpoint(path: str | Path) -> LALParser:
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint")
    pos = len(MAGIC)
    version, hlen = struct.unpack_from("<IQ", blob, pos)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    pos += 12
    header = json.loads(blob[pos : pos + hlen].decode("utf-8"))
    pos += hlen
    model = LALParser(ParserConfig.from_dict(header["config"]), Vocab.from_dict(header["vocab"]))
    named = list(model.named_parameters())
    if [n for n, _ in named] != [e["name"] for e in header["params"]]:
        raise CheckpointError(f"{path}: parameter list does not match the configuration")
    for (name, p), entry in zip(named, header["params"]):
        (count,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        if count != p.size or list(p.shape) != entry["shape"]:
            raise CheckpointError(f"{path}: parameter {name} has {count} values, expected {p.size}")
        p.data = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).astype(np.float64).reshape(p.shape)
        pos += 8 * count
    if pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - pos} trailing bytes")
    return model
