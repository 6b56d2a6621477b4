from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

from magrec.logging import logger

T = TypeVar('T')


def block_slices(length: int, block_size: int) -> List[slice]:
    """Split ``range(length)`` into consecutive slices of at most ``block_size`` elements."""
    block_size = max(1, block_size)
    return [slice(start, min(start + block_size, length)) for start in range(0, length, block_size)]


class BlockExecutor:
    """Evaluates a function over an ordered list of blocks.

    Results are always returned in block order so that reductions over them are independent of the number
    of workers. With a single worker everything runs inline in the calling thread.
    """

    def __init__(self, *, workers: int = 1, name: str = 'magrec') -> None:
        self._name = name
        self._workers = max(1, workers)
        self._executor = ThreadPoolExecutor(max_workers=self._workers,
                                            thread_name_prefix=name) if self._workers > 1 else None

    @property
    def workers(self) -> int:
        return self._workers

    def map(self, function: Callable[[slice], T], blocks: Sequence[slice]) -> List[T]:
        if self._executor is None or len(blocks) <= 1:
            return [function(block) for block in blocks]
        return list(self._executor.map(function, blocks))

    def shutdown(self) -> None:
        if self._executor is not None:
            logger.debug('Block executor "{}" is shutting down.'.format(self._name))
            self._executor.shutdown()
            self._executor = None
