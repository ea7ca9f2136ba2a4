"""Exception types shared across the simulator."""


class ZsimError(Exception):
    pass


# --- memory substrate ---

class InvalidConfig(ZsimError):
    pass


class OutOfMemory(ZsimError):
    pass


class SwapFull(ZsimError):
    pass


class AlreadyShared(ZsimError):
    """A page in the requested range was already de-anonymized."""


class DanglingRef(ZsimError):
    """Reference to a deleted or unknown segment."""


class BusySegment(ZsimError):
    """Segment deletion attempted while mapped views exist."""


# --- columnar ---

class UnknownColumn(ZsimError):
    pass


class SchemaMismatch(ZsimError):
    pass


class SingularSystem(ZsimError):
    """Normal-equation matrix is not invertible."""


# --- pqlite ---

class EncodingMismatch(ZsimError):
    pass


class BadMagic(ZsimError):
    pass


class CorruptChunk(ZsimError):
    pass


# --- sipc ---

class ParseError(ZsimError):
    pass


# --- decache ---

class StaleTicket(ZsimError):
    pass


class RefcountError(ZsimError):
    pass


# --- rm / engine ---

class InvalidDag(ZsimError):
    pass


class InsufficientEvictables(ZsimError):
    pass


class NodeFailed(ZsimError):
    def __init__(self, node_id, cause):
        super().__init__(f"node {node_id} failed: {cause!r}")
        self.node_id = node_id
        self.cause = cause


# --- cli ---

class UsageError(ZsimError):
    pass
