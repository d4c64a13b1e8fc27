"""Exceptions raised by wstiles. Every error carries a stable ``code`` string so
scripts and the cli can report failures without parsing messages.
"""
from typing import Iterable, List, Optional, Tuple


class WstcError(Exception):
    code = 'error'


class InvalidArgument(WstcError, ValueError):
    code = 'invalid-argument'


class FieldError(WstcError, ValueError):
    code = 'field-error'


class InvalidIndex(WstcError, ValueError):
    code = 'invalid-index'


class NotAContainer(WstcError):
    code = 'not-a-container'


class CorruptIndex(WstcError):
    code = 'corrupt-index'


class UnsupportedVersion(WstcError):
    code = 'unsupported-version'


class ContainerIOError(WstcError):
    code = 'io-error'


class DuplicateVariable(WstcError):
    code = 'duplicate-variable'


class ShapeMismatch(WstcError, ValueError):
    code = 'shape-mismatch'


class IncompleteContainer(WstcError):
    code = 'incomplete-container'

    def __init__(self, missing: Iterable[Tuple[int, int]]) -> None:
        self.missing = sorted(missing)
        shown = ', '.join(f'({r}, {c})' for r, c in self.missing[:16])
        if len(self.missing) > 16:
            shown += ', ...'
        super().__init__(f'{len(self.missing)} chunk(s) never written: {shown}')


class InvalidState(WstcError):
    code = 'invalid-state'


class WindowOutOfBounds(WstcError, ValueError):
    code = 'window-out-of-bounds'


class CorruptChunk(WstcError):
    code = 'corrupt-chunk'

    def __init__(self, variable: str, expected: int, actual: int) -> None:
        self.variable = variable
        super().__init__(f'{variable}: crc32 {actual:#010x} does not match recorded {expected:#010x}')


class PartialFailure(WstcError):
    code = 'partial-failure'

    def __init__(self, unserved: List[object], cause: Optional[Exception]=None) -> None:
        self.unserved = list(unserved)
        self.cause = cause
        super().__init__(f'{len(self.unserved)} window(s) unserved: {cause}')


class ProcessorError(WstcError):
    code = 'processor-error'

    def __init__(self, processor: str, patch: int, reason: str) -> None:
        self.processor = processor
        self.patch = patch
        super().__init__(f'processor `{processor}` failed on patch {patch}: {reason}')


class CorruptBlob(WstcError):
    code = 'corrupt-blob'


class CorruptPatchFile(WstcError):
    code = 'corrupt-patch-file'

    def __init__(self, path: object, reason: str) -> None:
        self.path = path
        super().__init__(f'{path}: {reason}')


class MemoryBudgetExceeded(WstcError):
    code = 'memory-budget-exceeded'


class EquivalenceError(WstcError):
    code = 'equivalence-failure'
