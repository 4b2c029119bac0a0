"""Append-only proof-of-work chain of model-update entries.

A block header is hashed as the canonical JSON array::

    [number, previous_hash, merkle_root, timestamp, difficulty, nonce]

and a block is sealed when that digest starts with ``difficulty`` zero hex
characters.  Keeping the nonce last lets the miner reuse a SHA-256 state
over the constant prefix.
"""
import hashlib
import json
import multiprocessing as mp
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional

from .canonical import ZERO_HASH, canonical_bytes, canonical_json, is_hex64, sha256_hex
from .errors import EmptyEntries, InvalidBlock, NonceExhausted
from .metrics import MetricsReport

MAX_DIFFICULTY = 8
DEFAULT_NONCE_CAP = 2 ** 40
_STOP_CHECK_EVERY = 4096


@dataclass(frozen=True)
class Entry:
    contributor_id: str
    metrics: MetricsReport
    model_hash: str
    incentive_paid: float = 0.0

    def __post_init__(self):
        if not is_hex64(self.contributor_id):
            raise ValueError("contributor_id must be 64 lowercase hex characters")
        if not is_hex64(self.model_hash):
            raise ValueError("model_hash must be 64 lowercase hex characters")
        if self.incentive_paid < 0:
            raise ValueError("incentive_paid must be non-negative")

    def to_dict(self) -> dict:
        d = self.metrics.to_dict()
        d["hash"] = self.model_hash
        d["contributor_id"] = self.contributor_id
        d["incentive_paid"] = self.incentive_paid
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Entry":
        return cls(contributor_id=d["contributor_id"], metrics=MetricsReport.from_dict(d),
                   model_hash=d["hash"], incentive_paid=d["incentive_paid"])


@dataclass(frozen=True)
class Block:
    number: int
    previous_hash: str
    timestamp: int
    entries: tuple
    merkle_root: str
    difficulty: int = 0
    nonce: int = 0
    hash: Optional[str] = None  # set once sealed

    def to_dict(self) -> dict:
        return {
            "block_no": self.number,
            "block_hash": self.hash,
            "previous_hash": self.previous_hash,
            "merkle_root": self.merkle_root,
            "timestamp": self.timestamp,
            "difficulty": self.difficulty,
            "nonce": self.nonce,
            "data": [e.to_dict() for e in self.entries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Block":
        try:
            return cls(number=d["block_no"], previous_hash=d["previous_hash"],
                       timestamp=d["timestamp"], entries=tuple(Entry.from_dict(e) for e in d["data"]),
                       merkle_root=d["merkle_root"], difficulty=d["difficulty"],
                       nonce=d["nonce"], hash=d["block_hash"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidBlock(f"unreadable block record: {exc}") from exc


def entry_bytes(entry: Entry) -> bytes:
    return canonical_bytes(entry.to_dict())


def merkle_root(entries) -> str:
    """Root of a binary SHA-256 tree over the entries; odd layers repeat their last node."""
    if not entries:
        raise EmptyEntries("a block needs at least one entry")
    layer = [hashlib.sha256(entry_bytes(e)).digest() for e in entries]
    while len(layer) > 1:
        if len(layer) % 2:
            layer.append(layer[-1])
        layer = [hashlib.sha256(layer[i] + layer[i + 1]).digest() for i in range(0, len(layer), 2)]
    return layer[0].hex()


def make_block(number: int, previous_hash: str, entries, timestamp: int, difficulty: int = 0) -> Block:
    entries = tuple(entries)
    return Block(number=number, previous_hash=previous_hash, timestamp=int(timestamp),
                 entries=entries, merkle_root=merkle_root(entries), difficulty=difficulty)


def _header_prefix(block: Block, difficulty: int) -> bytes:
    head = canonical_json([block.number, block.previous_hash, block.merkle_root,
                           block.timestamp, difficulty])
    return (head[:-1] + ",").encode("utf-8")


def header_bytes(block: Block) -> bytes:
    return canonical_bytes([block.number, block.previous_hash, block.merkle_root,
                            block.timestamp, block.difficulty, block.nonce])


def block_hash(block: Block) -> str:
    return sha256_hex(header_bytes(block))


def meets_difficulty(digest: str, difficulty: int) -> bool:
    return digest.startswith("0" * difficulty)


def _scan(prefix: bytes, difficulty: int, start: int, stride: int, max_attempts: int, stop=None):
    base = hashlib.sha256(prefix)
    target = "0" * difficulty
    nonce = start
    for attempt in range(1, max_attempts + 1):
        h = base.copy()
        h.update(b"%d]" % nonce)
        if h.hexdigest().startswith(target):
            return nonce, attempt
        if stop is not None and attempt % _STOP_CHECK_EVERY == 0 and stop.is_set():
            return None, attempt
        nonce += stride
    return None, max_attempts


def _check_difficulty(difficulty):
    if not 0 <= difficulty <= MAX_DIFFICULTY:
        raise ValueError(f"difficulty must be in [0, {MAX_DIFFICULTY}]")


def mine(block: Block, difficulty: int, nonce_start: int = 0, nonce_stride: int = 1,
         max_attempts: int = DEFAULT_NONCE_CAP):
    """Find the first nonce in ``start, start+stride, ...`` that seals the block.

    Returns ``(sealed_block, attempts)``.
    """
    _check_difficulty(difficulty)
    if nonce_start < 0 or nonce_stride < 1:
        raise ValueError("nonce_start must be >= 0 and nonce_stride >= 1")
    nonce, attempts = _scan(_header_prefix(block, difficulty), difficulty,
                            nonce_start, nonce_stride, max_attempts)
    if nonce is None:
        raise NonceExhausted(f"no nonce found in {max_attempts} attempts")
    sealed = replace(block, difficulty=difficulty, nonce=nonce)
    return replace(sealed, hash=block_hash(sealed)), attempts


def _lane(prefix, difficulty, start, stride, max_attempts, stop, out):
    nonce, attempts = _scan(prefix, difficulty, start, stride, max_attempts, stop)
    out.put((start, nonce, attempts))


def mine_parallel(block: Block, difficulty: int, workers: int = None,
                  max_attempts: int = DEFAULT_NONCE_CAP):
    """Mine with one process per nonce lane; the first lane to succeed wins.

    The sealed block is valid but, unlike :func:`mine`, the winning nonce may
    differ between runs.  ``attempts`` sums the work of every lane.
    """
    workers = workers or os.cpu_count() or 1
    if workers == 1:
        return mine(block, difficulty, max_attempts=max_attempts)
    _check_difficulty(difficulty)
    ctx = mp.get_context("spawn")
    stop, out = ctx.Event(), ctx.Queue()
    prefix = _header_prefix(block, difficulty)
    per_lane = -(-max_attempts // workers)
    procs = [ctx.Process(target=_lane, args=(prefix, difficulty, i, workers, per_lane, stop, out), daemon=True)
             for i in range(workers)]
    for p in procs:
        p.start()
    winner, total = None, 0
    try:
        for _ in procs:
            _, nonce, attempts = out.get()
            total += attempts
            if nonce is not None and winner is None:
                winner = nonce
                stop.set()
    finally:
        for p in procs:
            p.join()
    if winner is None:
        raise NonceExhausted(f"no nonce found in {max_attempts} attempts")
    sealed = replace(block, difficulty=difficulty, nonce=winner)
    return replace(sealed, hash=block_hash(sealed)), total


def block_problems(block: Block, predecessor: Optional[Block], difficulty: int) -> List[str]:
    """Every reason ``block`` fails verification (empty list when valid)."""
    problems = []
    if predecessor is None:
        if block.number != 0:
            problems.append("number: expected genesis number 0")
        if block.previous_hash != ZERO_HASH:
            problems.append("previous_hash: genesis must point at the zero hash")
    else:
        if block.number != predecessor.number + 1:
            problems.append("number: does not increment predecessor")
        if block.previous_hash != block_hash(predecessor):
            problems.append("previous_hash: does not match predecessor hash")
    try:
        if block.merkle_root != merkle_root(block.entries):
            problems.append("merkle_root: does not match entries")
    except EmptyEntries:
        problems.append("entries: empty")
    if block.difficulty != difficulty:
        problems.append("difficulty: differs from chain difficulty")
    digest = block_hash(block)
    if not meets_difficulty(digest, difficulty):
        problems.append("hash: difficulty prefix not met")
    if block.hash != digest:
        problems.append("hash: stored hash differs from recomputed hash")
    return problems


def verify_block(block: Block, predecessor: Optional[Block], difficulty: int) -> bool:
    return not block_problems(block, predecessor, difficulty)


@dataclass
class Chain:
    difficulty: int
    blocks: List[Block] = field(default_factory=list)

    def __post_init__(self):
        _check_difficulty(self.difficulty)

    def __len__(self):
        return len(self.blocks)

    @property
    def tip(self) -> Optional[Block]:
        return self.blocks[-1] if self.blocks else None

    def next_number(self) -> int:
        return 0 if self.tip is None else self.tip.number + 1

    def tip_hash(self) -> str:
        return ZERO_HASH if self.tip is None else block_hash(self.tip)


def verify_chain(chain: Chain) -> Optional[int]:
    """Return ``None`` when the chain is intact, else the first bad block index."""
    prev = None
    for i, block in enumerate(chain.blocks):
        if not verify_block(block, prev, chain.difficulty):
            return i
        prev = block
    return None


def append(chain: Chain, block: Block) -> Chain:
    problems = block_problems(block, chain.tip, chain.difficulty)
    if problems:
        raise InvalidBlock("; ".join(problems))
    chain.blocks.append(block)
    return chain


# block journal: one canonical-JSON block per line

def journal_line(block: Block) -> bytes:
    return canonical_bytes(block.to_dict()) + b"\n"


def append_journal(path, block: Block) -> None:
    with open(path, "ab") as fh:
        fh.write(journal_line(block))


def save_journal(chain: Chain, path) -> None:
    Path(path).write_bytes(b"".join(journal_line(b) for b in chain.blocks))


def load_journal(path, difficulty: Optional[int] = None) -> Chain:
    """Read a block journal without verifying it; pair with :func:`verify_chain`."""
    blocks = []
    with open(path, "rb") as fh:
        for line_no, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except ValueError as exc:
                raise InvalidBlock(f"journal line {line_no}: {exc}") from exc
            blocks.append(Block.from_dict(record))
    if difficulty is None:
        difficulty = blocks[0].difficulty if blocks else 0
    return Chain(difficulty=difficulty, blocks=blocks)
