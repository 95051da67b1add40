"""Seed metadata, AFL queue ingestion, content dedup and allow-list files."""

from __future__ import annotations

import hashlib
import logging
import os
import re
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

from .coverage import SeedTrace, parse_trace, serialize_trace
from .errors import AllowlistWriteError, IngestError, InvalidInputError, TraceFormatError

log = logging.getLogger(__name__)

ALLOWLIST_NAME = "allowlist.txt"
TRACE_SUFFIX = ".trace"
META_SUFFIX = ".meta"

_SEED_NAME = re.compile(r"id:(\d{6})(?:,.*)?")


@dataclass(frozen=True)
class SeedRecord:
    name: str
    instance: int
    birth: int
    size_bytes: int
    exec_time: int  # microseconds
    content_hash: str  # sha256 hex digest
    trace: SeedTrace

    @property
    def edges(self) -> frozenset:
        return self.trace.edges


@dataclass(frozen=True)
class InstanceCorpus:
    instance: int
    seeds: tuple = ()
    name: str = ""
    skipped: tuple = ()  # filenames in queue/ that did not parse as seeds

    def __post_init__(self):
        seeds = tuple(sorted(self.seeds, key=lambda s: s.birth))
        for a, b in zip(seeds, seeds[1:]):
            if a.birth == b.birth:
                raise InvalidInputError(
                    f"instance {self.instance}: seeds {a.name!r} and {b.name!r} share birth {a.birth}"
                )
        object.__setattr__(self, "seeds", seeds)

    def __len__(self):
        return len(self.seeds)

    def __iter__(self):
        return iter(self.seeds)

    def by_name(self) -> dict:
        return {s.name: s for s in self.seeds}


@dataclass
class DedupReport:
    canonical: dict = field(default_factory=dict)  # content_hash -> (instance, name)
    aliases: list = field(default_factory=list)  # (instance, name) suppressed copies


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def parse_birth(filename: str) -> Optional[int]:
    m = _SEED_NAME.fullmatch(filename)
    return int(m.group(1)) if m else None


def read_meta(path: Path) -> dict:
    """Parse a ``key = value`` sidecar. Unknown keys are kept, values stay strings."""
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise TraceFormatError(f"expected 'key = value', got {line!r}", lineno, path)
        out[key.strip()] = value.strip()
    return out


def _meta_int(meta, key, path):
    try:
        value = int(meta[key])
    except ValueError:
        raise TraceFormatError(f"{key} must be a non-negative integer", path=path) from None
    if value < 0:
        raise TraceFormatError(f"{key} must be a non-negative integer", path=path)
    return value


def ingest_instance(directory, instance: int) -> InstanceCorpus:
    """Read ``<directory>/queue`` into an InstanceCorpus.

    Every ``id:NNNNNN[,...]`` file needs a sibling ``.trace``; all missing
    traces are reported together. Other regular files are skipped and listed in
    ``InstanceCorpus.skipped``.
    """
    directory = Path(directory)
    queue = directory / "queue"
    if not queue.is_dir():
        raise IngestError(f"{directory}: no queue/ directory")
    try:
        entries = sorted(os.listdir(queue))
    except OSError as exc:
        raise IngestError(f"{queue}: cannot list directory: {exc.strerror}") from exc

    present = set(entries)
    seeds = []
    skipped = []
    problems = []
    for fname in entries:
        if fname.endswith(TRACE_SUFFIX) or fname.endswith(META_SUFFIX) or fname.startswith("."):
            continue
        path = queue / fname
        if not path.is_file():
            continue
        birth = parse_birth(fname)
        if birth is None:
            skipped.append(fname)
            continue
        if fname + TRACE_SUFFIX not in present:
            problems.append(f"{path}: missing trace file {fname + TRACE_SUFFIX}")
            continue
        data = path.read_bytes()
        trace_path = queue / (fname + TRACE_SUFFIX)
        trace = parse_trace(trace_path.read_bytes(), path=trace_path)
        size = len(data)
        exec_time = 0
        if fname + META_SUFFIX in present:
            meta_path = queue / (fname + META_SUFFIX)
            meta = read_meta(meta_path)
            if "exec_time_us" in meta:
                exec_time = _meta_int(meta, "exec_time_us", meta_path)
            if "size_bytes" in meta:
                size = _meta_int(meta, "size_bytes", meta_path)
        seeds.append(
            SeedRecord(fname, instance, birth, size, exec_time, content_hash(data), trace)
        )
    if problems:
        raise IngestError(f"{directory}: {len(problems)} seed(s) cannot be ingested", problems)
    if skipped:
        log.warning("%s: skipped %d unparsable queue entries", queue, len(skipped))
    try:
        return InstanceCorpus(instance, tuple(seeds), name=directory.name, skipped=tuple(skipped))
    except InvalidInputError as exc:
        raise IngestError(f"{directory}: {exc}") from exc


def dedup_by_content(corpora) -> tuple[list, DedupReport]:
    """Keep one seed per content hash: the one with the smallest (birth, instance)."""
    corpora = list(corpora)
    best = {}
    for c in corpora:
        for s in c.seeds:
            cur = best.get(s.content_hash)
            if cur is None or (s.birth, s.instance) < (cur.birth, cur.instance):
                best[s.content_hash] = s
    report = DedupReport()
    out = []
    for c in corpora:
        keep = []
        for s in c.seeds:
            if best[s.content_hash] is s:
                keep.append(s)
                report.canonical[s.content_hash] = (s.instance, s.name)
            else:
                report.aliases.append((s.instance, s.name))
        out.append(replace(c, seeds=tuple(keep)))
    return out, report


def _allowlist_bytes(seeds: Iterable[SeedRecord]) -> bytes:
    ordered = sorted(seeds, key=lambda s: (s.birth, s.name))
    return "".join(s.name + "\n" for s in ordered).encode("utf-8")


def stage_file(path, data: bytes) -> Path:
    """Write ``data`` to a temp file next to ``path``; caller renames or unlinks it."""
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(prefix="." + path.name + ".", dir=path.parent)
    except OSError as exc:
        raise AllowlistWriteError(f"{path}: cannot create temp file: {exc.strerror}") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
    except OSError as exc:
        os.unlink(tmp)
        raise AllowlistWriteError(f"{path}: write failed: {exc.strerror}") from exc
    return Path(tmp)


def atomic_write(path, data: bytes) -> None:
    tmp = stage_file(path, data)
    try:
        os.replace(tmp, path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise AllowlistWriteError(f"{path}: rename failed: {exc.strerror}") from exc


def write_allowlist(directory, seeds) -> Path:
    """Atomically replace ``<directory>/allowlist.txt`` with the given seeds.

    Names are written one per line in birth order. Seeds that appear in the
    queue after this file was written are not listed and count as allowed.
    """
    path = Path(directory) / ALLOWLIST_NAME
    atomic_write(path, _allowlist_bytes(seeds))
    return path


def write_allowlists(targets) -> list:
    """Write several allow-lists so that either all or none are replaced.

    ``targets`` is an iterable of ``(directory, seeds)``.
    """
    staged = []
    try:
        for directory, seeds in targets:
            path = Path(directory) / ALLOWLIST_NAME
            staged.append((stage_file(path, _allowlist_bytes(seeds)), path))
    except Exception:
        for tmp, _ in staged:
            tmp.unlink(missing_ok=True)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)
    return [path for _, path in staged]


def read_allowlist(directory) -> list:
    path = Path(directory) / ALLOWLIST_NAME
    return path.read_text(encoding="utf-8").splitlines()


def export_instance(directory, seeds, payloads=None, write_meta=True) -> Path:
    """Write seeds in the on-disk layout ``ingest_instance`` reads.

    ``payloads`` maps seed name to file content; it defaults to the seed name
    encoded as bytes, which keeps content hashes consistent only for seeds that
    were built with that convention.
    """
    queue = Path(directory) / "queue"
    queue.mkdir(parents=True, exist_ok=True)
    for s in seeds:
        data = payloads[s.name] if payloads is not None else s.name.encode()
        (queue / s.name).write_bytes(data)
        (queue / (s.name + TRACE_SUFFIX)).write_bytes(serialize_trace(s.trace))
        if write_meta:
            (queue / (s.name + META_SUFFIX)).write_text(
                f"exec_time_us = {s.exec_time}\nsize_bytes = {s.size_bytes}\n",
                encoding="utf-8",
            )
    return queue
