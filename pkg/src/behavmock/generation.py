"""Input generation pipeline: synthesis, placeholder post-processing,
hashing and validation against the program under test (PUT).

A :class:`Synthesizer` owns per-worker random streams and the current
expansion bounds.  Candidates are produced in rounds; within a round every
worker derives a batch independently and the batches are merged into the
:class:`HashStore` in worker order, so the accepted multiset depends only on
(grammar, config, master seed, worker count).
"""

from __future__ import annotations

import hashlib
import hmac
import json
import logging
import os
import re
import shlex
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from random import Random
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .errors import (
    BudgetInfeasible,
    GrammarExhausted,
    PutFailure,
    PutTimeout,
    RefinerUnknown,
)
from .grammar import Grammar, expand, tree_to_string

log = logging.getLogger(__name__)

HMAC_KEY_ENV = "MODELIZER_HMAC_KEY"
DEFAULT_HMAC_KEY = b"behavmock-sample-digest-key-v1.0"  # 32 bytes

DATASET_FILE = "dataset.jsonl"
HASHES_FILE = "hashes.txt"
SUMMARY_FILE = "summary.json"


# ---------------------------------------------------------------------------
# post-processing

def augment_placeholders(s: str, placeholders: Iterable[str]) -> str:
    """Rewrite each standalone placeholder occurrence to ``NAME_k``.

    ``k`` counts occurrences per name from 1, left to right.  Occurrences
    that already carry an identifier are left alone and not counted.

    >>> augment_placeholders("URL URL", ["URL"])
    'URL_1 URL_2'
    """
    names = sorted(set(placeholders), key=len, reverse=True)
    if not names:
        return s
    pattern = re.compile(
        r"(?<![A-Za-z0-9])(" + "|".join(map(re.escape, names)) + r")(?![A-Za-z0-9]|_[0-9])")
    counters: Dict[str, int] = {}

    def number(m):
        name = m.group(1)
        counters[name] = counters.get(name, 0) + 1
        return f"{name}_{counters[name]}"

    return pattern.sub(number, s)


def strip_identifiers(s: str, placeholders: Iterable[str]) -> str:
    """Inverse of :func:`augment_placeholders` on augmented strings."""
    names = sorted(set(placeholders), key=len, reverse=True)
    if not names:
        return s
    pattern = re.compile(r"(?<![A-Za-z0-9])(" + "|".join(map(re.escape, names)) + r")_[0-9]+(?![A-Za-z0-9])")
    return pattern.sub(r"\1", s)


_FROM_RE = re.compile(r"\bFROM\s+(\w+)", re.IGNORECASE)
_JOIN_RE = re.compile(
    r"(\bJOIN\s+(\w+)\s+ON\s+)(\w+)(\.\w+\s*=\s*)(\w+)(\.\w+)", re.IGNORECASE)


def refine_sql_join(s: str) -> str:
    """Re-bind JOIN conditions to tables that are actually in scope.

    In ``... FROM A JOIN B ON X.c = Y.d`` the left qualifier becomes the
    previously introduced table (``A``) and the right one the newly joined
    table (``B``).  Chained joins bind to their immediate predecessor.
    """
    m = _FROM_RE.search(s)
    if m is None:
        return s
    previous = m.group(1)
    out = []
    pos = 0
    for j in _JOIN_RE.finditer(s, m.end()):
        joined = j.group(2)
        out.append(s[pos:j.start()])
        out.append(j.group(1) + previous + j.group(4) + joined + j.group(6))
        pos = j.end()
        previous = joined
    out.append(s[pos:])
    return "".join(out)


REFINERS: Dict[str, Callable[[str], str]] = {
    "sql-join": refine_sql_join,
}


def refine_semantics(s: str, refiner: Union[None, str, Sequence[str]] = None) -> str:
    """Apply the named identifier-consistency refiners in order.

    ``None``, ``""`` or an empty list leave ``s`` unchanged.
    """
    if not refiner:
        return s
    names = [refiner] if isinstance(refiner, str) else list(refiner)
    for name in names:
        try:
            fn = REFINERS[name]
        except KeyError:
            raise RefinerUnknown(name) from None
        s = fn(s)
    return s


# ---------------------------------------------------------------------------
# hashing

def hmac_key() -> bytes:
    env = os.environ.get(HMAC_KEY_ENV)
    return env.encode("utf-8") if env else DEFAULT_HMAC_KEY


def digest(text: str, key: Optional[bytes] = None) -> str:
    """HMAC-SHA-384 of ``text`` (UTF-8) as lowercase hex."""
    return hmac.new(key if key is not None else hmac_key(), text.encode("utf-8"), hashlib.sha384).hexdigest()


class HashStore:
    """Thread-safe set of sample digests, persisted as sorted hex lines."""

    def __init__(self, path=None, digests: Iterable[str] = ()):
        self.path = Path(path) if path is not None else None
        self._digests = set(digests)
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._digests)

    def __contains__(self, h):
        return h in self._digests

    def contains(self, h: str) -> bool:
        return h in self._digests

    def insert(self, h: str) -> None:
        with self._lock:
            self._digests.add(h)

    def insert_if_absent(self, h: str) -> bool:
        """Atomically insert ``h``; True when it was not present before."""
        with self._lock:
            if h in self._digests:
                return False
            self._digests.add(h)
            return True

    def digests(self) -> List[str]:
        return sorted(self._digests)

    def save(self, path=None):
        path = Path(path) if path is not None else self.path
        if path is None:
            raise ValueError("no path to save the hash store to")
        path.write_text("".join(h + "\n" for h in self.digests()), encoding="ascii")

    @classmethod
    def load(cls, path):
        path = Path(path)
        digests = []
        if path.exists():
            digests = [line.strip() for line in path.read_text(encoding="ascii").splitlines() if line.strip()]
        return cls(path, digests)


# ---------------------------------------------------------------------------
# synthesis

def distribute_budget(total: int, workers: int) -> List[int]:
    """Split ``total`` into ``workers`` shares differing by at most one."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    q, r = divmod(total, workers)
    return [q + 1 if i < r else q for i in range(workers)]


@dataclass
class GeneratorConfig:
    min_expansions: int = 10
    max_expansions: int = 20
    attempts_per_config: int = 100_000
    escalation_step: int = 10
    sliding_window: bool = False
    worker_count: int = 1
    batch_size: int = 100
    master_seed: int = 0
    max_escalations: int = 10
    window_segments: int = 4
    refiner: Optional[str] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0 < self.min_expansions <= self.max_expansions:
            raise ValueError("need 0 < min_expansions <= max_expansions")
        if self.escalation_step <= 0:
            raise ValueError("escalation_step must be positive")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if self.batch_size < 1 or self.attempts_per_config < 1:
            raise ValueError("batch_size and attempts_per_config must be >= 1")
        if self.sliding_window and self.window_segments < 4:
            raise ValueError("a sliding window needs at least 4 segments")


@dataclass
class SampleRecord:
    input_text: str
    output_text: str = ""
    input_hash: str = ""
    generator_bounds: Tuple[int, int] = (0, 0)
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps({"input": self.input_text, "output": self.output_text, "hash": self.input_hash,
                           "bounds": list(self.generator_bounds), "seed": self.seed}, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "SampleRecord":
        d = json.loads(line)
        return cls(d["input"], d.get("output", ""), d.get("hash", ""), tuple(d.get("bounds", (0, 0))),
                   d.get("seed", 0))


class Synthesizer:
    """Stateful source of unique, augmented grammar samples.

    Successive :meth:`take` calls continue the same random streams, so a
    caller that discards samples (e.g. PUT failures) simply asks for more.
    """

    def __init__(self, g: Grammar, cfg: GeneratorConfig, store: Optional[HashStore] = None, key=None):
        g.validate()
        cfg.validate()
        self.g = g
        self.cfg = cfg
        self.store = store if store is not None else HashStore()
        self.key = key if key is not None else hmac_key()
        self.placeholders = sorted(g.placeholders)
        self.rngs = [Random(f"{cfg.master_seed}/{w}") for w in range(cfg.worker_count)]
        self.escalations = 0          # total bound raises
        self._barren = 0              # escalations since the last new sample
        self._failures = 0            # consecutive duplicate/infeasible attempts
        self.attempts = 0

    def _bounds(self, segment: int) -> Tuple[int, int]:
        shift = self.escalations * self.cfg.escalation_step
        if self.cfg.sliding_window:
            shift += segment * self.cfg.escalation_step
        return self.cfg.min_expansions + shift, self.cfg.max_expansions + shift

    def _candidate(self, rng: Random, bounds):
        seed = rng.getrandbits(63)
        try:
            tree = expand(self.g, seed, *bounds)
        except BudgetInfeasible:
            return None
        text = augment_placeholders(refine_semantics(tree_to_string(tree), self.cfg.refiner), self.placeholders)
        return SampleRecord(text, "", digest(text, self.key), bounds, seed)

    def _escalate(self):
        self.escalations += 1
        self._barren += 1
        self._failures = 0
        log.info("raising expansion bounds to %s", self._bounds(0))
        if self._barren > self.cfg.max_escalations:
            raise GrammarExhausted(
                f"{self.cfg.max_escalations} bound escalations produced no new sample "
                f"(store holds {len(self.store)} digests)")

    def take(self, n: int, segment: int = 0, pool: Optional[ThreadPoolExecutor] = None) -> List[SampleRecord]:
        """Return ``n`` new records whose digests were absent from the store."""
        cfg = self.cfg
        quotas = distribute_budget(n, cfg.worker_count)
        got: List[List[SampleRecord]] = [[] for _ in quotas]
        while any(len(got[w]) < quotas[w] for w in range(len(quotas))):
            bounds = self._bounds(segment)
            jobs = [(w, cfg.batch_size) for w in range(len(quotas))
                    if len(got[w]) < quotas[w]]

            def batch(job):
                w, size = job
                return [self._candidate(self.rngs[w], bounds) for _ in range(size)]

            batches = list(pool.map(batch, jobs)) if pool is not None else [batch(j) for j in jobs]
            new = 0
            escalated = False
            for (w, _), cands in zip(jobs, batches):
                for rec in cands:
                    self.attempts += 1
                    if rec is not None and len(got[w]) < quotas[w] and self.store.insert_if_absent(rec.input_hash):
                        got[w].append(rec)
                        new += 1
                        self._failures = 0
                        self._barren = 0
                    else:
                        self._failures += 1
                        if self._failures >= cfg.attempts_per_config and not escalated:
                            escalated = True
            if new == 0 or escalated:
                self._escalate()
        return [rec for per_worker in got for rec in per_worker]

    def run(self, n: int) -> List[SampleRecord]:
        """Generate ``n`` records, advancing through the sliding window if set."""
        segments = distribute_budget(n, self.cfg.window_segments) if self.cfg.sliding_window else [n]
        out: List[SampleRecord] = []
        pool = ThreadPoolExecutor(self.cfg.worker_count) if self.cfg.worker_count > 1 else None
        try:
            for k, size in enumerate(segments):
                if size:
                    out.extend(self.take(size, k, pool))
        finally:
            if pool is not None:
                pool.shutdown()
        return out


def synthesize_unique(g: Grammar, cfg: GeneratorConfig, n: int, store: Optional[HashStore] = None) -> List[str]:
    """Synthesize ``n`` placeholder-augmented inputs with previously unseen digests."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return [rec.input_text for rec in Synthesizer(g, cfg, store).run(n)]


# ---------------------------------------------------------------------------
# running the program under test

PutSpec = Union[str, Sequence[str], Callable[[str], str]]


class BuiltinPut:
    """In-process stand-in for ``python -m behavmock.subject``."""

    name = "builtin"

    def __call__(self, text: str) -> str:
        from .subject import ConversionError, builtin_convert
        try:
            return builtin_convert(text)
        except ConversionError as exc:
            raise PutFailure(1, f"error: {exc}") from None

    def __repr__(self):
        return "BuiltinPut()"


def resolve_put(put: PutSpec):
    """Map the name ``builtin`` to the in-process converter; pass others through."""
    if isinstance(put, str) and put.strip() == "builtin":
        return BuiltinPut()
    return put


def run_put(command: PutSpec, input_text: str, timeout: float = 10.0) -> str:
    """Feed ``input_text`` to the PUT on stdin and return its stdout.

    ``command`` is an argument vector, a shell-style command string, or a
    Python callable (which signals rejection by raising PutFailure).
    """
    command = resolve_put(command)
    if callable(command):
        return command(input_text)
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    try:
        proc = subprocess.run(argv, input=input_text.encode("utf-8"), capture_output=True, timeout=timeout)
    except subprocess.TimeoutExpired:
        raise PutTimeout(timeout) from None
    if proc.returncode != 0:
        raise PutFailure(proc.returncode, proc.stderr.decode("utf-8", errors="replace"))
    return proc.stdout.decode("utf-8", errors="replace")


# ---------------------------------------------------------------------------
# datasets

@dataclass
class DatasetSummary:
    records: int
    put_failures: int
    escalations: int
    attempts: int
    final_bounds: Tuple[int, int]
    path: str = ""
    failures: List[str] = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def write_dataset(records: Iterable[SampleRecord], path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_dataset(path) -> List[SampleRecord]:
    path = Path(path)
    if path.is_dir():
        path = path / DATASET_FILE
    with open(path, encoding="utf-8") as fh:
        return [SampleRecord.from_json(line) for line in fh if line.strip()]


def collect_pairs(g: Grammar, cfg: GeneratorConfig, put: PutSpec, n: int, dataset_path=None,
                  timeout: float = 10.0, store: Optional[HashStore] = None,
                  max_failures: Optional[int] = None):
    """Generate ``n`` inputs, run the PUT on each and persist accepted pairs.

    Rejected inputs are logged and replaced by fresh samples.  After
    ``max_failures`` rejections (default ``max(100, 10 n)``) the run stops
    with GrammarExhausted.  ``dataset_path`` is a directory receiving
    ``dataset.jsonl``, ``hashes.txt`` and ``summary.json``.

    Returns ``(records, summary)``.
    """
    put = resolve_put(put)
    synth = Synthesizer(g, cfg, store)
    limit = max_failures if max_failures is not None else max(100, 10 * n)
    segments = distribute_budget(n, cfg.window_segments) if cfg.sliding_window else [n]
    records: List[SampleRecord] = []
    failures: List[str] = []
    pool = ThreadPoolExecutor(cfg.worker_count) if cfg.worker_count > 1 else None

    def execute(rec):
        try:
            return run_put(put, rec.input_text, timeout)
        except (PutFailure, PutTimeout) as exc:
            return exc

    try:
        for k, size in enumerate(segments):
            accepted = 0
            while accepted < size:
                batch = synth.take(size - accepted, k, pool)
                outputs = list(pool.map(execute, batch)) if pool is not None else [execute(r) for r in batch]
                for rec, out in zip(batch, outputs):
                    if isinstance(out, Exception):
                        log.warning("PUT rejected %r: %s", rec.input_text[:80], out)
                        failures.append(rec.input_hash)
                        if len(failures) >= limit:
                            raise GrammarExhausted(f"PUT rejected {len(failures)} inputs")
                    else:
                        rec.output_text = out
                        records.append(rec)
                        accepted += 1
    finally:
        if pool is not None:
            pool.shutdown()

    summary = DatasetSummary(len(records), len(failures), synth.escalations, synth.attempts,
                             synth._bounds(len(segments) - 1), str(dataset_path or ""), failures)
    if dataset_path is not None:
        out_dir = Path(dataset_path)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_dataset(records, out_dir / DATASET_FILE)
        synth.store.save(out_dir / HASHES_FILE)
        (out_dir / SUMMARY_FILE).write_text(json.dumps(summary.to_dict(), indent=2), encoding="utf-8")
    return records, summary
