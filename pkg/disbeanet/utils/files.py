"""File helpers for pipeline inputs and outputs."""
import os
import tempfile
from os import PathLike
from pathlib import Path
from typing import Type, Union

from ..errors import DataFormatError, InputError


def current_umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write_text(path: Union[str, PathLike], text: str):
    """Write text to a temporary file next to ``path`` and rename it into place.

    The result gets the usual permissions of a newly created file (0666 minus the umask).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        # mkstemp creates the file with mode 0600
        os.chmod(tmp_path, 0o666 & ~current_umask())
        os.replace(tmp_path, path)
    except BaseException:
        try:
            os.unlink(tmp_path)
        except FileNotFoundError:
            pass
        raise


def read_text(
    path: Union[str, PathLike],
    what: str,
    error: Type[InputError] = InputError,
) -> str:
    """Read a UTF-8 text file without newline translation.

    A missing or unreadable file raises ``error``. Bytes that are not UTF-8 raise ``error`` too,
    or DataFormatError for plain data files, naming the file and line.
    """
    try:
        return Path(path).read_bytes().decode("utf-8")
    except FileNotFoundError as e:
        raise error(f"{what} not found: {path}") from e
    except UnicodeDecodeError as e:
        line = e.object[:e.start].count(b"\n") + 1
        msg = f"invalid UTF-8 in {what} (byte {e.start})"
        if error is InputError:
            raise DataFormatError(msg, path, line) from e
        raise error(f"{path}:{line}: {msg}") from e
    except OSError as e:
        raise error(f"cannot read {what} {path}: {e.strerror or e}") from e
