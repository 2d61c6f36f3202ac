"""Exception hierarchy shared by every pipeline stage."""


class DopError(Exception):
    """Base class. ``stage`` names the pipeline step that failed."""

    stage = "dopc"


class SlangError(DopError):
    stage = "compile"

    def __init__(self, message, line=None, col=None, diagnostics=None):
        self.line = line
        self.col = col
        self.diagnostics = diagnostics or []
        if line is not None:
            message = f"{line}:{col}: {message}"
        super().__init__(message)


class AsmError(DopError):
    stage = "asm"

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MacroError(AsmError):
    pass


class InterpError(DopError):
    stage = "interpret"


class FuelExhausted(InterpError):
    pass


class SynthesisError(DopError):
    """Raised when an opcode cannot be lowered; carries the And/Or report."""

    stage = "lower"

    def __init__(self, message, report=None):
        self.report = report
        if report is not None:
            message = f"{message}\n{report.format()}"
        super().__init__(message)


class GadgetDefError(DopError):
    stage = "data-view"


class SolveError(DopError):
    stage = "solve"


class ConcretizeError(DopError):
    stage = "concretize"


class TransformError(DopError):
    stage = "transform"


class ProtocolError(TransformError):
    pass


class VmError(DopError):
    stage = "run"


class TargetError(DopError):
    stage = "target"
