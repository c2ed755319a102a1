"""Small shared helpers: atomic file writes and float formatting."""

import os
import tempfile
from contextlib import contextmanager


@contextmanager
def atomic_write(path, newline="\n"):
    """Write to a temp file in the target directory, then rename into place.

    The rename is atomic on POSIX, so readers never observe a half-written
    file and a crash leaves the previous version intact.
    """
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp.", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline=newline) as handle:
            yield handle
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def fmt_float(value):
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(value))
