"""Exception hierarchy shared by the hfgt library, the agents and the CLI."""

from dataclasses import dataclass
from typing import Optional


class HFGTError(Exception):
    """Base class for every error raised by the hfgt package."""


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding, located in the source document when possible."""

    path: str
    message: str
    line: Optional[int] = None
    column: Optional[int] = None

    def __str__(self):
        if self.line is None:
            return f"{self.path}: {self.message}"
        return f"{self.path}:{self.line}:{self.column}: {self.message}"

    def to_dict(self):
        return {
            "path": self.path,
            "message": self.message,
            "line": self.line,
            "column": self.column,
        }


class ModelValidationError(HFGTError):
    """Raised with every problem found in a model or scenario document."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "\n".join(str(d) for d in self.diagnostics)
        super().__init__(f"{len(self.diagnostics)} validation error(s):\n{lines}")


class DimensionError(HFGTError):
    """Matrix or vector sizes disagree with the declared sets."""


class IncidenceError(HFGTError):
    """A flow declaration cannot be placed in the incidence tensors."""


class DeviceModelError(HFGTError):
    """A nonzero incidence or feasibility entry has no declared device ratio."""

    def __init__(self, message, coordinates=()):
        self.coordinates = list(coordinates)
        super().__init__(message)


class NegativeMarkingError(HFGTError):
    """A state update left a place or transition with a negative marking."""

    def __init__(self, kind, index, value, step=None, name=None):
        self.kind = kind
        self.index = index
        self.value = value
        self.step = step
        self.name = name
        where = name if name is not None else f"#{index}"
        at = f" at step {step}" if step is not None else ""
        super().__init__(f"negative {kind} marking {value:.6g} at {where}{at}")


class CompilationError(HFGTError):
    """A QP sub-assembly failed; `stage` names the block being built."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {cause}")
