"""Exception hierarchy shared across the package.

Anything raised because the *inputs* are wrong (broken files, impossible
configurations, missing paths) derives from :class:`InputError` so the CLI
can report it with exit code 2.  Everything else is an internal failure.
"""


class SinksegError(Exception):
    """Base class for all errors raised by this package."""


class InputError(SinksegError):
    """A problem with user-supplied data or configuration."""


class GridFormatError(InputError):
    """An ASCII grid file violates the expected layout."""


class ConfigError(InputError):
    """A config file or override cannot be parsed or validated."""


class NoOutletError(InputError):
    """An elevation raster has no valid drainage outlet."""


class BackendError(SinksegError):
    """A segmentation backend failed to produce usable masks."""


class ProtocolError(BackendError):
    """A backend reply violates the wire protocol or the mask contract."""


class BackendUnreachableError(BackendError):
    """The remote segmentation service could not be reached."""
