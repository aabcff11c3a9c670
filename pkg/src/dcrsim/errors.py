"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid static configuration: bad topology, unknown ids, bad parameters."""


class ParseError(ValueError):
    """Malformed input file; message carries the offending line number."""


class OverlayError(RuntimeError):
    """Structurally broken overlay, e.g. disconnected when a path is required."""


class ScenarioError(ValueError):
    """Invalid scenario: undefined references or illegal lifecycle transitions."""


class ModeConflict(ScenarioError):
    """Lifecycle event incompatible with the VM's address mode."""
