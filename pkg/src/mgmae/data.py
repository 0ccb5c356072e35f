"""Tokenization, vocabularies, dataset loaders and checkpoint files."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import struct
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError

log = logging.getLogger(__name__)

PAD, SOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<sos>", "<eos>", "<unk>")

_PUNCT = re.compile(r"([.,!?'\"])")
_LF_DELIMS = re.compile(r"([(),])")


def tokenize(text: str) -> list[str]:
    """Lowercase, isolate the marks . , ! ? ' " and split on whitespace."""
    return _PUNCT.sub(r" \1 ", text.lower()).split()


def tokenize_logical_form(text: str) -> list[str]:
    """Split a logical form on whitespace, keeping each of ( ) , as a token.  Case is preserved."""
    return _LF_DELIMS.sub(r" \1 ", text).split()


@dataclass
class Vocab:
    """Token <-> id map with PAD=0, SOS=1, EOS=2, UNK=3."""

    itos: list[str] = field(default_factory=lambda: list(SPECIALS))

    def __post_init__(self):
        if tuple(self.itos[:4]) != SPECIALS:
            raise FormatError("vocabulary must start with the four special tokens")
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def encode(self, tokens: Iterable[str], add_eos: bool = True) -> list[int]:
        ids = [self.stoi.get(t, UNK) for t in tokens]
        if add_eos:
            ids.append(EOS)
        return ids

    def decode(self, ids: Iterable[int]) -> list[str]:
        """Tokens for ``ids`` up to (excluding) the first EOS; PAD and SOS are dropped."""
        out = []
        for i in ids:
            i = int(i)
            if i == EOS:
                break
            if i in (PAD, SOS):
                continue
            out.append(self.itos[i])
        return out


def build_vocab(sentences: Iterable[Sequence[str]], min_count: int = 1) -> Vocab:
    """Vocabulary of tokens seen at least ``min_count`` times, in first-occurrence order."""
    sentences = list(sentences)
    counts = Counter(t for s in sentences for t in s)
    vocab = Vocab()
    for s in sentences:
        for t in s:
            if counts[t] >= min_count:
                vocab.add(t)
    return vocab


@dataclass
class ParallelCorpus:
    """Source/target id sequences, each ending with EOS."""

    pairs: list[tuple[list[int], list[int]]]
    src_vocab: Vocab
    tgt_vocab: Vocab

    def __len__(self):
        return len(self.pairs)

    def sources(self) -> list[list[int]]:
        return [s for s, _ in self.pairs]

    def targets(self) -> list[list[int]]:
        return [t for _, t in self.pairs]

    @classmethod
    def from_tokens(cls, token_pairs, src_vocab: Vocab | None = None,
                    tgt_vocab: Vocab | None = None, min_count: int = 1) -> "ParallelCorpus":
        """Encode token pairs, building any vocabulary not supplied; unseen tokens map to UNK."""
        token_pairs = list(token_pairs)
        if src_vocab is None:
            src_vocab = build_vocab((s for s, _ in token_pairs), min_count)
        if tgt_vocab is None:
            tgt_vocab = build_vocab((t for _, t in token_pairs), min_count)
        pairs = [(src_vocab.encode(s), tgt_vocab.encode(t)) for s, t in token_pairs]
        return cls(pairs, src_vocab, tgt_vocab)


def read_tsv_token_pairs(path, limit: int | None = None, target_tokenizer=tokenize):
    """Token pairs from the first two TAB-separated columns of a UTF-8 file.

    Lines with fewer than two columns or an empty side are skipped and counted.
    """
    path = Path(path)
    pairs, skipped = [], 0
    if limit == 0:
        return pairs, skipped
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    with fh:
        for line in fh:
            cols = line.rstrip("\n").rstrip("\r").split("\t")
            src = tokenize(cols[0]) if len(cols) >= 2 else []
            tgt = target_tokenizer(cols[1]) if len(cols) >= 2 else []
            if not src or not tgt:
                if line.strip("\r\n"):
                    skipped += 1
                continue
            pairs.append((src, tgt))
            if limit is not None and len(pairs) >= limit:
                break
    if skipped:
        log.warning("%s: skipped %d malformed line(s)", path, skipped)
    return pairs, skipped


def load_tsv_pairs(path, limit: int | None = None, src_vocab: Vocab | None = None,
                   tgt_vocab: Vocab | None = None) -> ParallelCorpus:
    """Sentence pairs ``source<TAB>target`` (extra columns ignored)."""
    pairs, _ = read_tsv_token_pairs(path, limit)
    return ParallelCorpus.from_tokens(pairs, src_vocab, tgt_vocab)


def load_geoquery(path, src_vocab: Vocab | None = None, tgt_vocab: Vocab | None = None) -> ParallelCorpus:
    """Question / logical-form pairs; the logical form is split on parentheses, commas and spaces."""
    pairs, _ = read_tsv_token_pairs(path, None, target_tokenizer=tokenize_logical_form)
    return ParallelCorpus.from_tokens(pairs, src_vocab, tgt_vocab)


# -- checkpoints ------------------------------------------------------------------
#
# Layout: b"MGMAE1" | u32 version | u64 header length | header JSON (utf-8)
#         | array payload (little-endian) | sha256 of everything before it.
# Arrays inside the state are replaced in the header by {"__array__": k}.

MAGIC = b"MGMAE1"
FORMAT_VERSION = 1
_DTYPES = {"f8": np.dtype("<f8"), "i8": np.dtype("<i8")}


def _pack(obj, arrays):
    if isinstance(obj, np.ndarray):
        if obj.dtype.kind == "f":
            kind = "f8"
        elif obj.dtype.kind in "iub":
            kind = "i8"
        else:
            raise TypeError(f"cannot store array of dtype {obj.dtype}")
        arrays.append(np.ascontiguousarray(obj, dtype=_DTYPES[kind]))
        return {"__array__": len(arrays) - 1, "dtype": kind, "shape": list(obj.shape)}
    if isinstance(obj, dict):
        if any(not isinstance(k, str) for k in obj):
            raise TypeError("checkpoint dict keys must be strings")
        return {k: _pack(v, arrays) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_pack(v, arrays) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if obj is None or isinstance(obj, (str, int, float, bool)):
        return obj
    raise TypeError(f"cannot store object of type {type(obj).__name__}")


def _unpack(obj, arrays):
    if isinstance(obj, dict):
        if "__array__" in obj:
            return arrays[obj["__array__"]]
        return {k: _unpack(v, arrays) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_unpack(v, arrays) for v in obj]
    return obj


def dumps_checkpoint(state: dict) -> bytes:
    arrays: list[np.ndarray] = []
    tree = _pack(state, arrays)
    header = json.dumps({"state": tree, "arrays": [
        {"dtype": "f8" if a.dtype == _DTYPES["f8"] else "i8", "shape": list(a.shape)} for a in arrays
    ]}, sort_keys=True).encode("utf-8")
    body = b"".join([MAGIC, struct.pack("<IQ", FORMAT_VERSION, len(header)), header]
                    + [a.tobytes() for a in arrays])
    return body + hashlib.sha256(body).digest()


def loads_checkpoint(blob: bytes) -> dict:
    if len(blob) < len(MAGIC) + 12 + 32 or blob[:len(MAGIC)] != MAGIC:
        raise FormatError("not a checkpoint (bad magic header)")
    body, digest = blob[:-32], blob[-32:]
    version, hlen = struct.unpack_from("<IQ", blob, len(MAGIC))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if hashlib.sha256(body).digest() != digest:
        raise FormatError("checkpoint is truncated or corrupted (checksum mismatch)")
    pos = len(MAGIC) + 12
    try:
        header = json.loads(body[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable checkpoint header: {exc}") from None
    pos += hlen
    arrays = []
    for spec in header["arrays"]:
        dt = _DTYPES[spec["dtype"]]
        count = int(np.prod(spec["shape"], dtype=np.int64))
        nbytes = count * dt.itemsize
        if pos + nbytes > len(body):
            raise FormatError("checkpoint payload is truncated")
        arrays.append(np.frombuffer(body, dt, count, pos).reshape(spec["shape"]).astype(np.float64 if dt.kind == "f" else np.int64))
        pos += nbytes
    if pos != len(body):
        raise FormatError("checkpoint payload has trailing bytes")
    return _unpack(header["state"], arrays)


def save_checkpoint(state: dict, path) -> None:
    """Write ``state`` atomically (temporary file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = dumps_checkpoint(state)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> dict:
    with open(path, "rb") as fh:
        return loads_checkpoint(fh.read())
