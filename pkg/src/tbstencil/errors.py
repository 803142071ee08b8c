"""Exception types raised across the package.

Every error that reaches the CLI is a ``TbStencilError``; the CLI maps those
to exit status 1 and lets argparse handle usage errors (status 2).
"""


class TbStencilError(Exception):
    """Base class for domain errors."""


class StencilSyntaxError(TbStencilError):
    def __init__(self, message, line=0, col=0, origin="<input>"):
        self.message = message
        self.line = line
        self.col = col
        self.origin = origin
        super().__init__(f"{origin}:{line}:{col}: {message}")


class UnsupportedConstruct(StencilSyntaxError):
    """Valid C that the restricted grammar does not accept."""


class PatternRejected(TbStencilError):
    """The loop nest violates one of the three pattern rules.

    rule 1: the update is not a single statement with static reads
    rule 2: dimensionality / subscript-to-loop mapping is broken
    rule 3: time buffers or destination are wrong
    """

    def __init__(self, rule, reason):
        self.rule = rule
        self.reason = reason
        super().__init__(f"pattern rule {rule}: {reason}")


class UnsupportedOperator(TbStencilError):
    pass


class ZeroOps(TbStencilError):
    pass


class InfeasibleConfig(TbStencilError):
    pass


class BlockTooLarge(InfeasibleConfig):
    pass


class ExceedsDeviceLimits(TbStencilError):
    pass


class EmptySpace(TbStencilError):
    pass


class GeometryMismatch(TbStencilError):
    pass


class ConfigError(TbStencilError):
    """Malformed config, device profile or grid string."""
