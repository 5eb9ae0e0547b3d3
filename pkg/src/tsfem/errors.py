"""Exception hierarchy shared across the package.

Every error carries a short machine-readable ``code`` so the command line
front end can emit a single greppable ``error[<code>]: message`` line and
map the failure onto an exit status: validation problems (bad input,
malformed files, inconsistent configuration) exit with 2, runtime failures
(solver breakdown, mid-run blow-up) exit with 1.
"""


class TsfemError(Exception):
    """Base class; ``code`` keys the CLI error line."""

    code = "error"


class ValidationFailure(TsfemError):
    """User-correctable input problem (CLI exit status 2)."""

    code = "validation"


class RuntimeFailure(TsfemError):
    """Failure during an otherwise well-posed computation (exit status 1)."""

    code = "runtime"


class GeometryError(ValidationFailure):
    """Degenerate or unsupported geometry (non-star hole, zero Jacobian)."""

    code = "geometry"


class TopologyError(ValidationFailure):
    """Mesh connectivity violates an invariant (open loops, bad sharing)."""

    code = "topology"


class MeshFormatError(ValidationFailure):
    """Malformed mesh file; carries the offending line number when known."""

    code = "mesh-format"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MatchingError(ValidationFailure):
    """Periodic node identification failed for a boundary node."""

    code = "matching"


class ConfigError(ValidationFailure):
    """Invalid or unknown configuration value; names the key path."""

    code = "config"


class InputError(ValidationFailure):
    """Non-finite or ill-sized caller-supplied data."""

    code = "input"


class AssemblyError(RuntimeFailure):
    """Finite element assembly hit a degenerate element."""

    code = "assembly"


class SolverError(RuntimeFailure):
    """Linear solver failed to reach the requested tolerance."""

    code = "solver"


class StepError(RuntimeFailure):
    """A time step produced non-finite data; names species and node."""

    code = "step"
