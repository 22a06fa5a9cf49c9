"""Exception hierarchy.

Three families map onto CLI exit codes: configuration problems (2), bad
input data (3) and oracle/transport failures (4).
"""

from __future__ import annotations


class RerankError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ConfigError(RerankError):
    exit_code = 2


class DataError(RerankError):
    exit_code = 3


class ParseError(DataError):
    """A line of an input file could not be parsed."""

    def __init__(self, path: str, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class DuplicateDoc(DataError):
    def __init__(self, doc_id: str):
        super().__init__(f"duplicate doc_id {doc_id!r}")
        self.doc_id = doc_id


class NonMonotoneScores(DataError):
    def __init__(self, position: int):
        super().__init__(f"score increases at position {position}")
        self.position = position


class UnknownQuery(DataError):
    def __init__(self, query_id: str):
        super().__init__(f"no judgments for query {query_id!r}")
        self.query_id = query_id


class DocSetMismatch(DataError):
    pass


class NoConvergence(RerankError):
    pass


class OracleError(RerankError):
    exit_code = 4


class UnsupportedCapability(OracleError):
    def __init__(self, kind: str, detail: str = ""):
        msg = f"oracle does not support {kind!r}"
        super().__init__(f"{msg}: {detail}" if detail else msg)
        self.kind = kind


class MalformedResponse(OracleError):
    def __init__(self, raw: str, detail: str = "unparseable response"):
        super().__init__(f"{detail}: {raw[:200]!r}")
        self.raw = raw


class TransportError(OracleError):
    pass


class ArityMismatch(OracleError):
    pass
