"""Background mapping thread fed through a FIFO queue."""

import logging
import queue
import threading
import time
from typing import Dict, Optional

from splatfusion.gsmap.mapper import Mapper, MapperMessage

logger = logging.getLogger(__name__)


class MappingWorker:
    """
    Runs a Mapper on its own thread, applying messages in arrival order.

    With `sequential=True` messages are applied inline on the caller's thread,
    which yields the same map for the same message stream.
    """

    def __init__(self, mapper: Mapper, sequential: bool = False, poll_interval: float = 0.1):
        """
        Initialize mapping worker.

        Args:
            mapper: Mapper that owns the Gaussian map
            sequential: Apply messages inline instead of on a thread
            poll_interval: Seconds between queue polls while idle
        """
        self.mapper = mapper
        self.sequential = sequential
        self.poll_interval = poll_interval

        self._queue: "queue.Queue[MapperMessage]" = queue.Queue()
        self._running = False
        self._thread: Optional[threading.Thread] = None
        self._error: Optional[BaseException] = None
        self._handled_count = 0
        self._busy_seconds = 0.0

    def start(self) -> None:
        """Start background mapping thread."""
        if self.sequential:
            return
        if self._running:
            logger.warning("Mapping worker already running")
            return

        self._running = True
        self._thread = threading.Thread(target=self._worker_loop, name="mapping", daemon=True)
        self._thread.start()
        logger.info("Mapping worker started")

    def submit(self, message: MapperMessage) -> None:
        """Queue a message (or apply it now in sequential mode)."""
        self.raise_if_failed()
        if self.sequential:
            self._handle(message)
            self.raise_if_failed()
            return
        self._queue.put(message)

    def stop(self, timeout: Optional[float] = None) -> None:
        """
        Drain the queue and join the thread.

        Raises:
            The first exception raised while handling a message
        """
        if self._running:
            self._running = False
            if self._thread:
                self._thread.join(timeout=timeout)
            logger.info(
                f"Mapping worker stopped (handled={self._handled_count}, "
                f"busy={self._busy_seconds:.2f}s)"
            )
        self.raise_if_failed()

    def raise_if_failed(self) -> None:
        if self._error is not None:
            raise self._error

    def _worker_loop(self) -> None:
        """Background loop; exits once stopped and drained, or after a failure."""
        while self._running or not self._queue.empty():
            try:
                message = self._queue.get(timeout=self.poll_interval)
            except queue.Empty:
                continue
            self._handle(message)
            if self._error is not None:
                break

    def _handle(self, message: MapperMessage) -> None:
        start = time.perf_counter()
        try:
            self.mapper.handle(message)
            self._handled_count += 1
        except Exception as e:
            logger.error(f"Mapping failed on {type(message).__name__}: {e}", exc_info=True)
            self._error = e
        finally:
            self._busy_seconds += time.perf_counter() - start

    def get_stats(self) -> Dict[str, float]:
        """Get worker statistics."""
        return {
            "handled": self._handled_count,
            "queued": self._queue.qsize(),
            "busy_seconds": self._busy_seconds,
        }
