"""Exception hierarchy shared by every module of the simulator."""


class CRAError(Exception):
    """Base class for all simulator errors."""


class UnknownDevice(CRAError):
    pass


class EmptyTrace(CRAError):
    pass


class TraceError(CRAError):
    """Malformed trace, or a query outside the trace horizon."""


class TypeMismatch(CRAError):
    """or/and applied to operands that are not bits of matching shape."""


class TermSyntaxError(CRAError):
    pass


class InvalidTimer(CRAError):
    pass


class RejectedAtomic(CRAError):
    pass


class RejectedTrusted(CRAError):
    pass


class RejectedRestore(CRAError):
    pass


class RejectedCapability(CRAError):
    pass


class RejectedWindow(CRAError):
    pass


class SpecError(CRAError):
    pass


class NoClaims(CRAError):
    pass


class NotAViolation(CRAError):
    pass


class ConfigurationError(CRAError):
    pass


class ExplorationTooLarge(CRAError):

    def __init__(self, estimate: int, cap: int):
        super().__init__(f"estimated {estimate} schedules exceeds cap {cap}")
        self.estimate = estimate
        self.cap = cap


class ScenarioError(CRAError):

    def __init__(self, message: str, diagnostics: list[str] | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []

    def __str__(self):
        if not self.diagnostics:
            return super().__str__()
        return super().__str__() + "\n  " + "\n  ".join(self.diagnostics)
