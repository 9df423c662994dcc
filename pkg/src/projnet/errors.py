"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: ConfigError -> 1, FormatError -> 2,
NumericError -> 3. Plain ValueError from bad call arguments also maps to 1.
"""


class ProjnetError(Exception):
    pass


class ConfigError(ProjnetError):
    """Invalid configuration: bad keys, inconsistent shapes, bad flag values."""


class FormatError(ProjnetError):
    """Malformed data or checkpoint file."""


class NumericError(ProjnetError):
    """Non-finite value produced during compute."""
