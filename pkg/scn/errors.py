class SCNError(Exception):
    """Base class for every error raised by the scn package."""


class ShapeError(SCNError, ValueError):
    pass


class GraphError(SCNError, RuntimeError):
    pass


class ConfigError(SCNError, ValueError):
    pass


class DataError(SCNError):
    pass


class CheckpointError(SCNError):
    pass


class PGMError(DataError):
    """PGM 解析失败，code 区分错误类型"""

    BAD_MAGIC = "bad_magic"
    BAD_HEADER = "bad_header"
    BAD_MAXVAL = "bad_maxval"
    BAD_PIXEL = "bad_pixel"
    TRUNCATED = "truncated"

    def __init__(self, code: str, message: str):
        super().__init__(f"[{code}] {message}")
        self.code = code
        self.message = message
