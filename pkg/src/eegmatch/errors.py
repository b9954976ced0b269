"""Exception taxonomy shared by the library and the CLI exit codes."""


class DataError(Exception):
    """A dataset, corpus directory, or results store is missing or malformed."""


class ConcurrentRunError(DataError):
    """Another process holds the lock on the requested output directory."""
