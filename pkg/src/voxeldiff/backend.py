"""Serial and thread-pool execution strategies for data-parallel loops."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class BackendKind:
    name: str = "serial"
    workers: int = 1

    def __post_init__(self):
        if self.name not in ("serial", "parallel"):
            raise ConfigError(f"unknown backend {self.name!r}", field="backend")
        if self.workers < 1:
            raise ConfigError(f"worker count must be >= 1, got {self.workers}",
                              field="num_threads")
        if self.name == "serial" and self.workers != 1:
            raise ConfigError("serial backend uses exactly one worker", field="num_threads")

    @classmethod
    def serial(cls) -> "BackendKind":
        return cls("serial", 1)

    @classmethod
    def parallel(cls, workers: int) -> "BackendKind":
        return cls("parallel", workers)

    @classmethod
    def parse(cls, text: str) -> "BackendKind":
        """Parse ``serial``, ``parallel`` or ``parallel:N``."""
        text = text.strip()
        if text == "serial":
            return cls.serial()
        name, _, count = text.partition(":")
        if name != "parallel":
            raise ConfigError(f"unknown backend {text!r}", field="backend")
        try:
            workers = int(count) if count else 1
        except ValueError:
            raise ConfigError(f"bad worker count in {text!r}", field="backend") from None
        return cls.parallel(workers)

    @property
    def label(self) -> str:
        return "serial" if self.name == "serial" else f"parallel({self.workers})"


def split_range(n: int, parts: int) -> list[tuple[int, int]]:
    """Split ``range(n)`` into at most ``parts`` contiguous non-empty chunks."""
    parts = max(1, min(parts, n))
    base, extra = divmod(n, parts)
    chunks, start = [], 0
    for p in range(parts):
        stop = start + base + (1 if p < extra else 0)
        chunks.append((start, stop))
        start = stop
    return chunks


class SerialStrategy:
    """Reference semantics: every region runs as one block on the caller."""

    workers = 1

    def __init__(self, kind: BackendKind | None = None):
        self.kind = kind or BackendKind.serial()

    def chunks(self, n: int) -> list[tuple[int, int]]:
        return [(0, n)] if n > 0 else []

    def run(self, fn, blocks) -> None:
        for args in blocks:
            fn(*args)

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ParallelStrategy(SerialStrategy):
    """Runs independent blocks on a fixed-size thread pool.

    Each region ends with a barrier (all blocks finished) before ``run``
    returns.  Block kernels must release the GIL to gain anything.
    """

    def __init__(self, kind: BackendKind):
        super().__init__(kind)
        self.workers = kind.workers
        self._pool = ThreadPoolExecutor(max_workers=kind.workers) if kind.workers > 1 else None

    def chunks(self, n: int) -> list[tuple[int, int]]:
        if self.workers == 1:
            return [(0, n)] if n > 0 else []
        return split_range(n, self.workers) if n > 0 else []

    def run(self, fn, blocks) -> None:
        if self._pool is None:
            for args in blocks:
                fn(*args)
            return
        blocks = list(blocks)
        if len(blocks) < 2:
            return super().run(fn, blocks)
        futures = [self._pool.submit(fn, *args) for args in blocks]
        for f in futures:
            f.result()

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None


def select_backend(kind: BackendKind) -> SerialStrategy:
    if not isinstance(kind, BackendKind):
        raise ConfigError(f"expected BackendKind, got {kind!r}", field="backend")
    if kind.name == "serial":
        return SerialStrategy(kind)
    return ParallelStrategy(kind)


def as_strategy(backend) -> tuple[SerialStrategy, bool]:
    """Return ``(strategy, owned)``; ``owned`` strategies must be closed by the caller."""
    if backend is None:
        return SerialStrategy(), True
    if isinstance(backend, BackendKind):
        return select_backend(backend), True
    return backend, False
