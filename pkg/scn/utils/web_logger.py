import logging
import threading
from collections import deque
from typing import Deque, List, Optional

MAX_LINES = 500


class WebLogHandler(logging.Handler):
    """保留最近的日志行，供 /logs 接口读取"""

    def __init__(self, capacity: int = MAX_LINES):
        super().__init__()
        self.lines: Deque[str] = deque(maxlen=capacity)
        self._guard = threading.Lock()
        self.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s %(name)s: %(message)s", "%H:%M:%S"))

    def emit(self, record: logging.LogRecord) -> None:
        try:
            line = self.format(record)
        except Exception:
            self.handleError(record)
            return
        with self._guard:
            self.lines.append(line)

    def snapshot(self, limit: Optional[int] = None) -> List[str]:
        with self._guard:
            lines = list(self.lines)
        return lines[-limit:] if limit else lines


_handler: Optional[WebLogHandler] = None


def setup_web_logging(capacity: int = MAX_LINES) -> WebLogHandler:
    global _handler
    if _handler is None:
        _handler = WebLogHandler(capacity)
        logging.getLogger().addHandler(_handler)
    return _handler


def get_web_logs(limit: Optional[int] = None) -> List[str]:
    if _handler is None:
        return []
    return _handler.snapshot(limit)
