"""Experiment pipeline: autoencoder -> representations -> GMM -> filters -> evaluation.

Every command writes its artifacts to an output directory:

* ``report.csv``   one row per seed plus ``mean`` / ``std`` rows (deterministic)
* ``report.txt``   the same numbers for humans
* ``timings.csv``  wall-clock seconds per seed and stage (varies run to run)
* ``seed<k>.ckpt`` checkpoint per seed, rewritten after every stage
"""

from __future__ import annotations

import contextlib
import csv
import dataclasses
import hashlib
import io
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import metrics
from .data import (EOS, ParallelCorpus, Vocab, load_checkpoint, read_tsv_token_pairs,
                   save_checkpoint, tokenize_logical_form)
from .errors import ConfigurationError, ContractError, StageError
from .filterbank import FilterBank, decode_hard, decode_soft, derive_seed, partition, train_filters
from .gmm import GmmModel, assign, fit_em, silhouette
from .seq2seq import (Decoder, Encoder, default_max_len, encode, extract_representations,
                      greedy_decode, train_autoencoder, train_encdec_baseline)

log = logging.getLogger(__name__)

DATA_DIR_ENV = "MGMAE_DATA_DIR"
METRICS = ("token_accuracy", "denotation_proxy", "bleu")
DEFAULT_EPOCHS = {"geoquery": 10, "translation": 20}


@dataclass
class ExperimentConfig:
    task: str = "geoquery"
    train_path: str = "geoquery/train.tsv"
    dev_path: str = "geoquery/dev.tsv"
    data_path: str = "fra.txt"
    train_size: int = 10000
    dev_size: int = 2000
    embed_dim: int = 150
    hidden_dim: int = 200
    lr: float = 0.001
    dropout: float = 0.2
    epochs: int | None = None
    num_filters: int = 2
    decode_mode: str = "hard"
    bp_mode: str = "standard"
    seed: int = 0
    num_seeds: int = 5
    max_len: int | None = None
    em_max_iter: int = 200
    em_tol: float = 1e-6

    def __post_init__(self):
        if self.task not in DEFAULT_EPOCHS:
            raise ConfigurationError(f"unknown task {self.task!r}")
        if self.epochs is None:
            self.epochs = DEFAULT_EPOCHS[self.task]
        if self.num_filters < 1:
            raise ConfigurationError("num_filters must be at least 1")
        if self.decode_mode not in ("hard", "soft"):
            raise ConfigurationError(f"unknown decode_mode {self.decode_mode!r}")
        if self.bp_mode not in ("standard", "paper-exact"):
            raise ConfigurationError(f"unknown bp_mode {self.bp_mode!r}")
        if self.num_seeds < 1:
            raise ConfigurationError("num_seeds must be at least 1")

    def seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.num_seeds)]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(name: str, raw: str):
    ftype = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}.get(name)
    if ftype is None:
        raise ConfigurationError(f"unknown config key {name!r}")
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        return raw[1:-1]
    if raw.lower() in ("none", "null", ""):
        return None
    try:
        if ftype.startswith("int"):
            return int(raw)
        if ftype.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigurationError(f"bad value for {name}: {raw!r}") from None
    return raw


def parse_overrides(items) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigurationError(f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip().replace("-", "_")
        out[key] = _coerce(key, value)
    return out


def load_config(path=None, overrides=None) -> ExperimentConfig:
    """Config from a ``key = value`` file (``#`` comments, ``[section]`` lines ignored) plus overrides."""
    values = {}
    if path is not None:
        lines = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.split("#", 1)[0].strip()
            if line and not line.startswith("["):
                lines.append(line)
        values.update(parse_overrides(lines))
    values.update(overrides or {})
    return ExperimentConfig(**values)


def resolve_path(p) -> Path:
    p = Path(p)
    if p.is_absolute():
        return p
    base = os.environ.get(DATA_DIR_ENV)
    return Path(base) / p if base else p


def load_task_data(config: ExperimentConfig) -> tuple[ParallelCorpus, ParallelCorpus]:
    """Train and dev corpora; dev tokens unseen in training map to UNK."""
    if config.task == "geoquery":
        train_pairs, _ = read_tsv_token_pairs(resolve_path(config.train_path),
                                              target_tokenizer=tokenize_logical_form)
        dev_pairs, _ = read_tsv_token_pairs(resolve_path(config.dev_path),
                                            target_tokenizer=tokenize_logical_form)
    else:
        pairs, _ = read_tsv_token_pairs(resolve_path(config.data_path))
        order = np.random.default_rng(config.seed).permutation(len(pairs))
        pairs = [pairs[i] for i in order]
        train_pairs = pairs[:config.train_size]
        dev_pairs = pairs[config.train_size:config.train_size + config.dev_size]
    if not train_pairs or not dev_pairs:
        raise ContractError(f"empty split: {len(train_pairs)} train / {len(dev_pairs)} dev pairs")
    train = ParallelCorpus.from_tokens(train_pairs)
    dev = ParallelCorpus.from_tokens(dev_pairs, train.src_vocab, train.tgt_vocab)
    log.info("%s: %d train / %d dev pairs", config.task, len(train), len(dev))
    return train, dev


# -- reports ---------------------------------------------------------------------------

def _strip_eos(ids):
    ids = list(ids)
    return ids[:-1] if ids and ids[-1] == EOS else ids


def evaluate(candidates, references, bp_mode: str = "standard") -> dict:
    refs = [_strip_eos(r) for r in references]
    return {
        "token_accuracy": metrics.token_accuracy(candidates, refs),
        "denotation_proxy": metrics.denotation_match_proxy(candidates, refs),
        "bleu": metrics.bleu(candidates, refs, bp_mode=bp_mode),
    }


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    return str(v)


@dataclass
class RunReport:
    kind: str
    config: dict
    rows: list[dict]
    columns: list[str]
    summary: dict = field(default_factory=dict)
    timings: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def summarize(self, keys):
        """Mean and (with two or more rows) sample standard deviation per key."""
        for key in keys:
            vals = np.array([r[key] for r in self.rows], dtype=np.float64)
            std = float(np.std(vals, ddof=1)) if len(vals) >= 2 else None
            self.summary[key] = (float(np.mean(vals)), std)

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(row.get(c, "")) for c in self.columns])
        if self.summary:
            for label, pos in (("mean", 0), ("std", 1)):
                first = self.columns[0]
                cells = []
                for c in self.columns:
                    if c == first:
                        cells.append(label)
                    elif c in self.summary and self.summary[c][pos] is not None:
                        cells.append(_fmt(self.summary[c][pos]))
                    else:
                        cells.append("")
                writer.writerow(cells)
        return buf.getvalue()

    def text(self) -> str:
        lines = [f"{self.kind} report", f"task={self.config['task']} seeds={self.config['num_seeds']}"]
        for note in self.notes:
            lines.append(note)
        for key, (mean, std) in self.summary.items():
            label = "denotation (proxy: exact match)" if key == "denotation_proxy" else key
            spread = f" +/- {std:.2f}" if std is not None else ""
            lines.append(f"{label}: {mean:.2f}{spread}")
        lines.append("")
        lines.append(self.csv_text())
        return "\n".join(lines)

    def write(self, out_dir, stem: str = "report"):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.csv").write_text(self.csv_text(), encoding="utf-8")
        (out / f"{stem}.txt").write_text(self.text(), encoding="utf-8")
        with open(out / "timings.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["seed", "stage", "seconds"])
            for t in self.timings:
                writer.writerow([t["seed"], t["stage"], f"{t['seconds']:.3f}"])


class _Stages:
    """Runs named stages, recording wall-clock time and wrapping failures in StageError."""

    def __init__(self, seed, timings):
        self.seed = seed
        self.timings = timings

    @contextlib.contextmanager
    def __call__(self, name):
        start = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        finally:
            self.timings.append({"seed": self.seed, "stage": name,
                                 "seconds": time.perf_counter() - start})


# -- checkpoint payloads -------------------------------------------------------------

def _net_state(net) -> dict:
    return {"config": net.config(), "params": dict(net.params)}


def _base_state(kind, config, seed, train: ParallelCorpus, max_len) -> dict:
    return {"kind": kind, "config": config.to_dict(), "seed": seed, "max_len": max_len,
            "vocabs": {"src": list(train.src_vocab.itos), "tgt": list(train.tgt_vocab.itos)},
            "logs": {}}


def load_models(state: dict):
    """Rebuild (encoder, bank-or-decoder, src_vocab, tgt_vocab) from a checkpoint state."""
    enc = Encoder(**state["encoder"]["config"], params=state["encoder"]["params"])
    src, tgt = Vocab(list(state["vocabs"]["src"])), Vocab(list(state["vocabs"]["tgt"]))
    if state["kind"] == "baseline":
        model = Decoder(**state["decoder"]["config"], params=state["decoder"]["params"])
    else:
        gmm = GmmModel.from_state(state["gmm"])
        model = FilterBank(gmm, [Decoder(**f["config"], params=f["params"]) for f in state["filters"]])
    return enc, model, src, tgt


def _decode_all(enc, model, sources, max_len, mode="hard"):
    out = []
    for src in sources:
        if isinstance(model, Decoder):
            out.append(greedy_decode(model, encode(enc, src), max_len))
        elif mode == "soft":
            out.append(decode_soft(model, enc, src, max_len))
        else:
            out.append(decode_hard(model, enc, src, max_len))
    return out


# -- pipelines -------------------------------------------------------------------------

def _train_representation(config, train, seed, stage, state, ckpt):
    with stage("autoencoder"):
        enc = Encoder(len(train.src_vocab), config.embed_dim, config.hidden_dim, config.dropout,
                      seed=derive_seed(seed, 100))
        ae_dec = Decoder(len(train.src_vocab), config.embed_dim, config.hidden_dim, config.dropout,
                         seed=derive_seed(seed, 101))
        state["logs"]["autoencoder"] = train_autoencoder(enc, ae_dec, train.sources(), config.epochs,
                                                         config.lr, derive_seed(seed, 102))
        state["encoder"] = _net_state(enc)
        save_checkpoint(state, ckpt)
    with stage("representations"):
        reps = extract_representations(enc, train.sources())
        state["representations"] = reps
        save_checkpoint(state, ckpt)
    return enc, reps


def _fit_filters(config, train, enc, reps, k, seed, stage, state, ckpt):
    with stage("gmm"):
        gmm = fit_em(reps, k, seed=derive_seed(seed, 103),
                     max_iter=config.em_max_iter, tol=config.em_tol)
        state["gmm"] = gmm.to_state()
    with stage("partition"):
        parts = partition(gmm, reps)
        state["partition"] = [np.asarray(p, dtype=np.int64) for p in parts]
    with stage("filters"):
        bank = FilterBank.create(gmm, len(train.tgt_vocab), config.embed_dim, config.hidden_dim,
                                 config.dropout, seed=derive_seed(seed, 104))
        state["logs"]["filters"] = train_filters(bank, enc, train.pairs, parts, config.epochs,
                                                 config.lr, derive_seed(seed, 105))
        state["filters"] = [_net_state(f) for f in bank.filters]
        if ckpt is not None:
            save_checkpoint(state, ckpt)
    return gmm, parts, bank


def _silhouette_or_nan(reps, labels) -> float:
    if len(np.unique(labels)) < 2:
        log.warning("silhouette undefined: all samples fell in one cluster")
        return float("nan")
    return silhouette(reps, labels)


def cmd_run(config: ExperimentConfig, out_dir, data=None) -> RunReport:
    """Full MGMAE pipeline for every seed; writes checkpoints and the report."""
    out = Path(out_dir)
    train, dev = data if data is not None else load_task_data(config)
    max_len = config.max_len or default_max_len(train.targets())
    rows, timings = [], []
    for seed in config.seeds():
        stage = _Stages(seed, timings)
        ckpt = out / f"seed{seed}.ckpt"
        state = _base_state("mgmae", config, seed, train, max_len)
        enc, reps = _train_representation(config, train, seed, stage, state, ckpt)
        gmm, parts, bank = _fit_filters(config, train, enc, reps, config.num_filters, seed,
                                        stage, state, ckpt)
        with stage("evaluate"):
            cands = _decode_all(enc, bank, dev.sources(), max_len, config.decode_mode)
            row = {"seed": seed, **evaluate(cands, dev.targets(), config.bp_mode)}
            labels = assign(gmm, reps) if len(reps) else np.array([])
            row["silhouette"] = _silhouette_or_nan(reps, labels) if config.num_filters > 1 else float("nan")
            row["cluster_sizes"] = [len(p) for p in parts]
            state["evaluation"] = {k: v for k, v in row.items() if k != "cluster_sizes"}
            save_checkpoint(state, ckpt)
        rows.append(row)
    report = RunReport("mgmae", config.to_dict(), rows,
                       ["seed", *METRICS, "silhouette", "cluster_sizes"], timings=timings)
    report.notes.append(f"pairs: {len(train)} train / {len(dev)} dev; filters k={config.num_filters}; "
                        f"decode={config.decode_mode}")
    report.notes.append("denotation is an exact-match proxy, not execution-based accuracy")
    report.summarize(METRICS)
    report.write(out)
    return report


def cmd_baseline(config: ExperimentConfig, out_dir, data=None) -> RunReport:
    """Ordinary encoder-decoder trained end to end on source -> target."""
    out = Path(out_dir)
    train, dev = data if data is not None else load_task_data(config)
    max_len = config.max_len or default_max_len(train.targets())
    rows, timings = [], []
    for seed in config.seeds():
        stage = _Stages(seed, timings)
        ckpt = out / f"seed{seed}.ckpt"
        state = _base_state("baseline", config, seed, train, max_len)
        with stage("train"):
            enc = Encoder(len(train.src_vocab), config.embed_dim, config.hidden_dim, config.dropout,
                          seed=derive_seed(seed, 200))
            dec = Decoder(len(train.tgt_vocab), config.embed_dim, config.hidden_dim, config.dropout,
                          seed=derive_seed(seed, 201))
            state["logs"]["baseline"] = train_encdec_baseline(enc, dec, train.pairs, config.epochs,
                                                              config.lr, derive_seed(seed, 202))
            state["encoder"], state["decoder"] = _net_state(enc), _net_state(dec)
            save_checkpoint(state, ckpt)
        with stage("evaluate"):
            cands = _decode_all(enc, dec, dev.sources(), max_len)
            row = {"seed": seed, **evaluate(cands, dev.targets(), config.bp_mode)}
            state["evaluation"] = dict(row)
            save_checkpoint(state, ckpt)
        rows.append(row)
    report = RunReport("baseline", config.to_dict(), rows, ["seed", *METRICS], timings=timings)
    report.notes.append(f"pairs: {len(train)} train / {len(dev)} dev; encoder-decoder baseline")
    report.notes.append("denotation is an exact-match proxy, not execution-based accuracy")
    report.summarize(METRICS)
    report.write(out)
    return report


def representation_hash(reps: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(reps, dtype="<f8").tobytes()).hexdigest()[:16]


def cmd_sweep_filters(config: ExperimentConfig, out_dir, k_range=(2, 3, 4, 5, 6), data=None) -> RunReport:
    """Silhouette and dev metrics for each number of filters; one autoencoder per seed serves every k."""
    out = Path(out_dir)
    train, dev = data if data is not None else load_task_data(config)
    max_len = config.max_len or default_max_len(train.targets())
    k_range = list(k_range)
    runs, timings = [], []
    for seed in config.seeds():
        stage = _Stages(seed, timings)
        ckpt = out / f"seed{seed}.ckpt"
        state = _base_state("sweep", config, seed, train, max_len)
        enc, reps = _train_representation(config, train, seed, stage, state, ckpt)
        rep_hash = representation_hash(reps)
        state["sweep"] = {}
        for k in k_range:
            sub = {"logs": {}}
            gmm, parts, bank = _fit_filters(config, train, enc, reps, k, seed, stage, sub, None)
            with stage(f"evaluate k={k}"):
                labels = assign(gmm, reps)
                cands = _decode_all(enc, bank, dev.sources(), max_len, config.decode_mode)
                run = {"seed": seed, "k": k, "silhouette": _silhouette_or_nan(reps, labels),
                       **evaluate(cands, dev.targets(), config.bp_mode), "rep_hash": rep_hash}
            runs.append(run)
            state["sweep"][str(k)] = {"gmm": sub["gmm"], "labels": np.asarray(labels, dtype=np.int64),
                                      "silhouette": run["silhouette"]}
            save_checkpoint(state, ckpt)

    rows = []
    for k in k_range:
        sel = [r for r in runs if r["k"] == k]
        row = {"k": k}
        for key in ("silhouette", *METRICS):
            row[key] = float(np.mean([r[key] for r in sel]))
        row["rep_hash"] = hashlib.sha256("".join(r["rep_hash"] for r in sel).encode()).hexdigest()[:16]
        rows.append(row)
    report = RunReport("sweep-filters", config.to_dict(), rows,
                       ["k", "silhouette", *METRICS, "rep_hash"], timings=timings)
    report.notes.append(f"pairs: {len(train)} train / {len(dev)} dev; k in {k_range}")
    report.notes.append("denotation is an exact-match proxy, not execution-based accuracy")
    if len(rows) >= 2:
        rho = silhouette_trend(rows)
        report.notes.append(f"spearman(silhouette, token_accuracy) = {rho:.3f}")
        if not rho > 0:
            log.warning("silhouette is not positively rank-correlated with token accuracy (rho=%.3f)", rho)
            report.notes.append("WARNING: silhouette/accuracy trend not positive")
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["seed", "k", "silhouette", *METRICS, "rep_hash"],
                            lineterminator="\n")
    writer.writeheader()
    for r in runs:
        writer.writerow({k: _fmt(v) for k, v in r.items()})
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep_runs.csv").write_text(buf.getvalue(), encoding="utf-8")
    report.write(out, stem="sweep")
    return report


def silhouette_trend(rows) -> float:
    """Spearman rank correlation between the silhouette and token-accuracy columns."""
    s = [r["silhouette"] for r in rows]
    a = [r["token_accuracy"] for r in rows]
    if np.any(np.isnan(s)) or len(set(s)) < 2 or len(set(a)) < 2:
        return float("nan")
    return float(spearmanr(s, a).statistic)


def cmd_eval(checkpoint, config: ExperimentConfig | None = None, decode_mode=None) -> dict:
    """Evaluate a saved model on the dev split described by its (or the given) config."""
    state = load_checkpoint(checkpoint)
    if config is None:
        config = ExperimentConfig(**state["config"])
    enc, model, src_vocab, tgt_vocab = load_models(state)
    train, dev = load_task_data(config)
    if train.src_vocab.itos != src_vocab.itos or train.tgt_vocab.itos != tgt_vocab.itos:
        log.warning("vocabulary rebuilt from data differs from the checkpoint; using the checkpoint's")
    dev_tokens = [(src_vocab.decode(s), tgt_vocab.decode(t)) for s, t in dev.pairs]
    dev = ParallelCorpus.from_tokens(dev_tokens, src_vocab, tgt_vocab)
    cands = _decode_all(enc, model, dev.sources(), int(state["max_len"]),
                        decode_mode or config.decode_mode)
    return evaluate(cands, dev.targets(), config.bp_mode)


# -- latent scatter ----------------------------------------------------------------------

def pca_2d(X) -> np.ndarray:
    """Project mean-centred rows onto the top two principal axes.

    Axis signs are fixed so each axis' largest-magnitude loading is positive.
    A missing second axis (rank 1 or one feature) projects to zero.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ContractError("PCA projection needs at least two samples")
    Xc = X - X.mean(axis=0)
    _, _, vt = np.linalg.svd(Xc, full_matrices=False)
    axes = np.zeros((2, X.shape[1]))
    n = min(2, vt.shape[0])
    axes[:n] = vt[:n]
    for i in range(n):
        if axes[i, np.argmax(np.abs(axes[i]))] < 0:
            axes[i] = -axes[i]
    return Xc @ axes.T


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


def scatter_svg(points, labels, size: int = 480, margin: int = 24) -> str:
    pts = np.asarray(points, dtype=np.float64)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    scaled = margin + (pts - lo) / span * (size - 2 * margin)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f'<rect width="{size}" height="{size}" fill="white"/>']
    for (x, y), lab in zip(scaled, labels):
        color = _PALETTE[int(lab) % len(_PALETTE)]
        parts.append(f'<circle cx="{x:.2f}" cy="{size - y:.2f}" r="3" fill="{color}" fill-opacity="0.7"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_latent_scatter(checkpoint, out_path, k: int | None = None) -> tuple[Path, Path]:
    """Write ``<out>.csv`` (x, y, cluster) and ``<out>.svg`` from a checkpoint's representations.

    For sweep checkpoints pick the mixture with ``k`` (default: smallest k).
    """
    state = load_checkpoint(checkpoint) if not isinstance(checkpoint, dict) else checkpoint
    if "representations" not in state:
        raise ContractError("checkpoint has no representations")
    reps = np.asarray(state["representations"])
    if "sweep" in state and "gmm" not in state:
        key = str(k) if k is not None else min(state["sweep"], key=int)
        gmm = GmmModel.from_state(state["sweep"][key]["gmm"])
    elif "gmm" in state:
        gmm = GmmModel.from_state(state["gmm"])
    else:
        raise ContractError("checkpoint has no mixture model")
    pts = pca_2d(reps)
    labels = assign(gmm, reps)
    out = Path(out_path)
    base = out.with_suffix("") if out.suffix in (".csv", ".svg") else out
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_path, svg_path = base.with_suffix(".csv"), base.with_suffix(".svg")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "cluster"])
        for (x, y), lab in zip(pts, labels):
            writer.writerow([repr(float(x)), repr(float(y)), int(lab)])
    svg_path.write_text(scatter_svg(pts, labels), encoding="utf-8")
    return csv_path, svg_path
