"""Ablation tables and the self-attention layer-count sweep at toy scale."""

from __future__ import annotations

import copy
import csv
import io
import json
import time
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Sequence

from .data import Treebank, generate_toy_corpus, load_treebank
from .metrics import evaluate
from .train import TrainConfig, train

# residual dropout probability used for the "RD = yes" rows
ABLATION_DROPOUT = 0.2

# (use_pfl, residual dropout on)
PFL_RD_ROWS = [(True, True), (False, True), (True, False), (False, False)]
# (query vectors, concatenation)
QV_CONC_ROWS = [(True, True), (False, True), (True, False), (False, False)]

METRIC_KEYS = ("precision", "recall", "f1", "uas", "las")


def toy_config() -> TrainConfig:
    """The bundled desk-scale configuration."""
    text = resources.files("lalparse.configs").joinpath("toy.json").read_text(encoding="utf-8")
    return TrainConfig.from_dict(json.loads(text))


def resolve_data(config: TrainConfig, trees=None, deps=None) -> tuple[Treebank, Treebank | None]:
    """Training and optional dev treebanks from explicit files or ``config.data``.

    ``config.data`` holds either ``trees``/``deps`` (plus optional
    ``dev_trees``/``dev_deps``) paths or ``toy_seed``/``toy_size``.
    """
    data = dict(config.data or {})
    if trees is not None or deps is not None:
        if trees is None or deps is None:
            raise ValueError("--trees and --deps must be given together")
        return load_treebank(trees, deps), None
    if "trees" in data:
        tb = load_treebank(data["trees"], data["deps"])
        dev = None
        if "dev_trees" in data:
            dev = load_treebank(data["dev_trees"], data["dev_deps"], vocab=tb.vocab)
        return tb, dev
    if "toy_seed" in data or not data:
        return generate_toy_corpus(int(data.get("toy_seed", 7)), int(data.get("toy_size", 50))), None
    raise ValueError(f"unrecognised data section: {sorted(data)}")


def _with_encoder(config: TrainConfig, **changes) -> TrainConfig:
    cfg = copy.deepcopy(config)
    cfg.parser = replace(cfg.parser, encoder=replace(cfg.parser.encoder, **changes))
    cfg.checkpoint = None
    return cfg


def run_row(config: TrainConfig, treebank: Treebank, dev: Treebank | None = None) -> dict:
    """Train one configuration and report final metrics and wall-clock time."""
    start = time.perf_counter()
    result = train(treebank, config, dev)
    report = evaluate(result.model, dev if dev is not None else treebank, config.punct_tags)
    row = {k: round(v, 2) for k, v in report.row().items()}
    row.update(epochs=result.epochs_run, params=result.model.num_parameters(), seconds=round(time.perf_counter() - start, 2))
    return row


def _yn(flag: bool) -> str:
    return "Yes" if flag else "No"


def ablate(config: TrainConfig, treebank: Treebank, dev: Treebank | None = None, rd_p: float = ABLATION_DROPOUT) -> dict[str, list[dict]]:
    """Both ablation families.

    ``pfl_rd`` varies the feed-forward layer and residual dropout on the
    plain label attention layer; ``qv_conc`` varies query vectors against
    query matrices and concatenation against a shared projection, with the
    feed-forward layer on and residual dropout off.
    """
    tables: dict[str, list[dict]] = {"pfl_rd": [], "qv_conc": []}
    for pfl, rd in PFL_RD_ROWS:
        cfg = _with_encoder(config, use_pfl=pfl, residual_dropout_p=rd_p if rd else 0.0, query_mode="vector", combine_mode="concat")
        tables["pfl_rd"].append({"PFL": _yn(pfl), "RD": _yn(rd), **run_row(cfg, treebank, dev)})
    for qv, conc in QV_CONC_ROWS:
        cfg = _with_encoder(
            config,
            use_pfl=True,
            residual_dropout_p=0.0,
            query_mode="vector" if qv else "matrix",
            combine_mode="concat" if conc else "project",
        )
        tables["qv_conc"].append({"QV": _yn(qv), "Conc": _yn(conc), **run_row(cfg, treebank, dev)})
    return tables


def layer_sweep(config: TrainConfig, treebank: Treebank, layers: Sequence[int], dev: Treebank | None = None) -> list[dict]:
    """One trained model per self-attention layer count, in the given order."""
    if not layers:
        raise ValueError("layer list is empty")
    return [{"layers": n, **run_row(_with_encoder(config, num_layers=n), treebank, dev)} for n in layers]


def to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def write_csv(rows: list[dict], path: str | Path) -> None:
    Path(path).write_text(to_csv(rows), encoding="utf-8")
