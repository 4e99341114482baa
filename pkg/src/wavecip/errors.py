"""Exception hierarchy shared by all wavecip modules."""


class WaveCIPError(Exception):
    """Base class for library errors."""


class GridError(WaveCIPError, ValueError):
    """Inconsistent grid description (extents, spacings, step counts)."""


class CFLError(WaveCIPError, ValueError):
    """Time step too large for the explicit scheme."""

    def __init__(self, dt, max_dt, msg=None):
        self.dt = dt
        self.max_dt = max_dt
        super().__init__(msg or f"CFL violated: dt={dt:.6g} exceeds maximal admissible dt={max_dt:.6g}")


class ShapeMismatchError(WaveCIPError, ValueError):
    """Array does not conform to the grid or boundary sampling."""


class CompatibilityError(WaveCIPError, ValueError):
    """Initial and boundary data disagree at t = 0."""


class SupportError(WaveCIPError, ValueError):
    """A field or region escapes the subdomain it must live in."""


class ConfigError(WaveCIPError, ValueError):
    """Malformed scenario configuration."""

    def __init__(self, msg, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{msg} ({', '.join(where)})" if where else msg)


class ContainerError(WaveCIPError, IOError):
    """Binary container is corrupt or of an unknown version."""


class FrequencyError(WaveCIPError, ValueError):
    """Inadmissible frequency or frequency lattice."""
