# fullview/store.py
"""
Full-view vector store on disk.

Layout (little-endian): a 32-byte header (magic "ZFVW", u32 version, u64 n,
u64 d, 8 bytes padding) followed by n records of d float32, back to back.
Vector id i starts at byte HEADER_BYTES + i * record_bytes.

Two read paths exist:
    direct    aligned preadv into page-aligned buffers, file opened with O_DIRECT
              where the platform and filesystem accept it
    buffered  plain pread through the page cache

Batches of ids are submitted to a worker pool and handed back as they
complete, in whatever order the device finishes them.
"""

import errno
import logging
import mmap
import os
import threading
import zlib
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import ArgumentError, FormatError, StorageError
from core.types import VectorDataset
from utils.config import load_settings

logger = logging.getLogger(__name__)

MAGIC = b'ZFVW'
VERSION = 1
HEADER = np.dtype([
    ('magic', 'S4'),
    ('version', '<u4'),
    ('n', '<u8'),
    ('d', '<u8'),
    ('pad', 'V8'),
])
HEADER_BYTES = HEADER.itemsize
IO_MODES = ('direct', 'buffered')
CHECKSUM_CHUNK = 1 << 20


@dataclass(frozen=True)
class RerankPlan:
    """b candidates per submission, s submissions in flight."""
    b: int
    s: int

    def __post_init__(self):
        if self.b < 1 or self.s < 1:
            raise ArgumentError(f"Plan needs b >= 1 and s >= 1, got b={self.b}, s={self.s}")

    @classmethod
    def for_r(cls, b: int, r: int) -> 'RerankPlan':
        """Batch size b, with s = ceil(r / b) submissions."""
        if r < 1:
            raise ArgumentError(f"r must be >= 1, got {r}")
        b = max(1, min(b, r))
        return cls(b=b, s=-(-r // b))

    def covers(self, r: int) -> bool:
        return self.b * self.s >= r


class FullViewStore:
    """
    Open, read-only handle on a full-view file. Safe to share across threads:
    every read is positional and the worker pool is created once under a lock.
    """

    def __init__(self, path: str, n: int, d: int, io_mode: str = 'direct',
                 alignment_bytes: int = 4096, io_workers: int = 8):
        if io_mode not in IO_MODES:
            raise ArgumentError(f"io_mode must be one of {IO_MODES}, got {io_mode!r}")
        if alignment_bytes < 1 or alignment_bytes & (alignment_bytes - 1):
            raise ArgumentError(f"alignment_bytes must be a power of two, got {alignment_bytes}")
        if alignment_bytes > mmap.PAGESIZE:
            raise ArgumentError(
                f"alignment_bytes={alignment_bytes} exceeds the page size {mmap.PAGESIZE}"
            )
        self.path = path
        self.n = n
        self.d = d
        self.record_bytes = d * 4
        self.io_mode = io_mode
        self.alignment_bytes = alignment_bytes
        self.io_workers = max(1, io_workers)
        self.bypasses_page_cache = False
        self._executor: Optional[ThreadPoolExecutor] = None
        self._lock = threading.Lock()
        self._fd = self._open_fd()

    def __enter__(self) -> 'FullViewStore':
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()

    def __repr__(self) -> str:
        return (f"FullViewStore(path={self.path!r}, n={self.n}, d={self.d}, "
                f"io_mode={self.io_mode!r}, bypasses_page_cache={self.bypasses_page_cache})")

    @property
    def file_bytes(self) -> int:
        return HEADER_BYTES + self.n * self.record_bytes

    def _open_fd(self) -> int:
        if self.io_mode == 'direct' and hasattr(os, 'O_DIRECT'):
            try:
                fd = os.open(self.path, os.O_RDONLY | os.O_DIRECT)
                self._check_direct_read(fd)
                self.bypasses_page_cache = True
                return fd
            except OSError as e:
                if e.errno not in (errno.EINVAL, errno.EOPNOTSUPP):
                    raise StorageError(f"Cannot open full-view store {self.path}: {e}") from e
                logger.warning(
                    f"O_DIRECT rejected for {self.path} ({e.strerror}); "
                    f"aligned reads will go through the page cache"
                )
        elif self.io_mode == 'direct':
            logger.warning("Platform has no O_DIRECT; aligned reads will go through the page cache")

        try:
            return os.open(self.path, os.O_RDONLY)
        except OSError as e:
            raise StorageError(f"Cannot open full-view store {self.path}: {e}") from e

    def _check_direct_read(self, fd: int) -> None:
        """Some filesystems accept O_DIRECT at open time and fail the first read."""
        buf = mmap.mmap(-1, self.alignment_bytes)
        try:
            os.preadv(fd, [buf], 0)
        except OSError:
            os.close(fd)
            raise
        finally:
            buf.close()

    def close(self) -> None:
        with self._lock:
            if self._executor is not None:
                self._executor.shutdown(wait=True)
                self._executor = None
            if self._fd >= 0:
                os.close(self._fd)
                self._fd = -1

    def executor(self) -> ThreadPoolExecutor:
        with self._lock:
            if self._executor is None:
                self._executor = ThreadPoolExecutor(
                    max_workers=self.io_workers,
                    thread_name_prefix="fullview-io",
                )
            return self._executor

    def record_offset(self, vector_id: int) -> int:
        return HEADER_BYTES + vector_id * self.record_bytes

    def check_ids(self, ids: Sequence[int]) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        if ids.size and (ids.min() < 0 or ids.max() >= self.n):
            bad = int(ids[(ids < 0) | (ids >= self.n)][0])
            raise ArgumentError(f"Vector id {bad} outside [0, {self.n})")
        return ids

    def _read_buffered(self, ids: np.ndarray) -> np.ndarray:
        out = np.empty((ids.shape[0], self.d), dtype=np.float32)
        for row, vector_id in enumerate(ids.tolist()):
            try:
                raw = os.pread(self._fd, self.record_bytes, self.record_offset(vector_id))
            except OSError as e:
                logger.error(f"pread failed for vector {vector_id}: {e}")
                raise StorageError(f"Read failed: {e}", vector_id=vector_id) from e
            if len(raw) != self.record_bytes:
                raise StorageError(
                    f"Short read: {len(raw)} of {self.record_bytes} bytes", vector_id=vector_id
                )
            out[row] = np.frombuffer(raw, dtype='<f4')
        return out

    def _read_direct(self, ids: np.ndarray) -> np.ndarray:
        align = self.alignment_bytes
        span = -(-self.record_bytes // align) * align + align
        out = np.empty((ids.shape[0], self.d), dtype=np.float32)
        # mmap memory is page aligned, which satisfies O_DIRECT buffer alignment
        buf = mmap.mmap(-1, span)
        try:
            with memoryview(buf) as view:
                for row, vector_id in enumerate(ids.tolist()):
                    offset = self.record_offset(vector_id)
                    start = offset - offset % align
                    stop = -(-(offset + self.record_bytes) // align) * align
                    try:
                        got = os.preadv(self._fd, [view[:stop - start]], start)
                    except OSError as e:
                        logger.error(f"preadv failed for vector {vector_id}: {e}")
                        raise StorageError(f"Read failed: {e}", vector_id=vector_id) from e
                    needed = offset - start + self.record_bytes
                    if got < needed:
                        raise StorageError(
                            f"Short read: {got} of {needed} bytes", vector_id=vector_id
                        )
                    out[row] = np.frombuffer(
                        view, dtype='<f4', count=self.d, offset=offset - start
                    )
        finally:
            buf.close()
        return out

    def read_rows(self, ids: Sequence[int]) -> np.ndarray:
        """Read the given records synchronously on the calling thread."""
        ids = self.check_ids(ids)
        if self._fd < 0:
            raise StorageError(f"Full-view store {self.path} is closed")
        if self.io_mode == 'direct':
            return self._read_direct(ids)
        return self._read_buffered(ids)


def _write_header(f, n: int, d: int) -> None:
    header = np.zeros(1, dtype=HEADER)
    header['magic'] = MAGIC
    header['version'] = VERSION
    header['n'] = n
    header['d'] = d
    f.write(header.tobytes())


def write_store(dataset: VectorDataset, path: str, io_mode: Optional[str] = None,
                alignment_bytes: Optional[int] = None) -> FullViewStore:
    """
    Write every vector to path (through a temp file and an atomic rename).

    Raises:
        StorageError: the file could not be written
    """
    tmp_path = f"{path}.tmp"
    try:
        with open(tmp_path, 'wb') as f:
            _write_header(f, dataset.n, dataset.d)
            f.write(dataset.data.astype('<f4').tobytes())
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_path, path)
    except OSError as e:
        logger.error(f"Writing full-view store {path} failed: {e}")
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise StorageError(f"Cannot write full-view store {path}: {e}") from e

    logger.info(f"Wrote full-view store {path}: {dataset.n} x {dataset.d}")
    return open_store(path, io_mode, alignment_bytes)


def read_header(path: str) -> Tuple[int, int]:
    """
    Returns:
        (n, d) from a full-view file header

    Raises:
        StorageError: file missing or unreadable
        FormatError: bad magic, unknown version or size mismatch
    """
    try:
        with open(path, 'rb') as f:
            raw = f.read(HEADER_BYTES)
        size = os.path.getsize(path)
    except OSError as e:
        raise StorageError(f"Cannot read full-view store {path}: {e}") from e

    if len(raw) < HEADER_BYTES:
        raise FormatError(f"{path}: truncated full-view header", offset=len(raw))
    header = np.frombuffer(raw, dtype=HEADER, count=1)[0]
    if bytes(header['magic']) != MAGIC:
        raise FormatError(f"{path}: bad magic {bytes(header['magic'])!r}", offset=0)
    if int(header['version']) != VERSION:
        raise FormatError(f"{path}: unsupported full-view version {int(header['version'])}", offset=4)
    n, d = int(header['n']), int(header['d'])
    expected = HEADER_BYTES + n * d * 4
    if size != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {n} x {d}, found {size}")
    return n, d


def open_store(path: str, io_mode: Optional[str] = None,
               alignment_bytes: Optional[int] = None,
               io_workers: Optional[int] = None) -> FullViewStore:
    """
    Reopen an existing full-view file. Unset arguments come from Settings.
    """
    settings = load_settings()
    n, d = read_header(path)
    store = FullViewStore(
        path,
        n,
        d,
        io_mode=io_mode or settings.io_mode,
        alignment_bytes=alignment_bytes or settings.alignment_bytes,
        io_workers=io_workers or settings.io_workers,
    )
    logger.debug(f"Opened {store!r}")
    return store


def store_checksum(store_or_path) -> int:
    """CRC32 of the whole full-view file."""
    path = store_or_path.path if isinstance(store_or_path, FullViewStore) else store_or_path
    crc = 0
    try:
        with open(path, 'rb') as f:
            while True:
                chunk = f.read(CHECKSUM_CHUNK)
                if not chunk:
                    break
                crc = zlib.crc32(chunk, crc)
    except OSError as e:
        raise StorageError(f"Cannot checksum {path}: {e}") from e
    return crc & 0xFFFFFFFF


def iter_batches(store: FullViewStore, ids: Sequence[int],
                 plan: RerankPlan) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """
    Split ids into batches of plan.b, submit them to the store's worker pool
    and yield (batch ids, (len, d) vectors) as each batch completes.

    At most plan.s batches are in flight at once. A single batch is read on
    the calling thread.
    """
    ids = store.check_ids(ids)
    if ids.size == 0:
        return
    batches = [ids[i:i + plan.b] for i in range(0, ids.shape[0], plan.b)]
    if len(batches) == 1:
        yield batches[0], store.read_rows(batches[0])
        return

    executor = store.executor()
    pending = {}
    queue = iter(batches)
    for batch in queue:
        pending[executor.submit(store.read_rows, batch)] = batch
        if len(pending) >= plan.s:
            break
    while pending:
        done = next(as_completed(pending))
        batch = pending.pop(done)
        yield batch, done.result()
        nxt = next(queue, None)
        if nxt is not None:
            pending[executor.submit(store.read_rows, nxt)] = nxt


def read_batch(store: FullViewStore, ids: Sequence[int],
               plan: RerankPlan) -> List[Tuple[int, np.ndarray]]:
    """
    Read vectors for ids; every requested id (duplicates included) is returned
    once per occurrence, in completion order.

    Raises:
        ArgumentError: id out of range
        StorageError: a read failed; the error names the vector id
    """
    out: List[Tuple[int, np.ndarray]] = []
    for batch_ids, vectors in iter_batches(store, ids, plan):
        out.extend(zip(batch_ids.tolist(), vectors))
    return out
