"""General utilities for ncgmomentum."""

import os
import tempfile
from pathlib import Path
from typing import Optional, Union


def normalise_label(label: str) -> str:
    """
    Normalise a solver label into a file-name stem: trim, lowercase, dash-join.

    Args:
        label: Solver label such as "FRGD/fx"

    Returns:
        Normalised stem with single dashes

    Examples:
        >>> normalise_label("FRGD/fx")
        'frgd-fx'
        >>> normalise_label("  FR prox ")
        'fr-prox'
    """
    cleaned = "".join(c if c.isalnum() else " " for c in label.strip().lower())
    return "-".join(cleaned.split())


def format_float(value: Optional[float]) -> str:
    """
    Format a float as its shortest round-trip decimal; empty for None.

    Integral values drop the trailing ".0" so that 2.0 is written as "2".
    """
    if value is None:
        return ""
    text = repr(float(value))
    if text.endswith(".0"):
        text = text[:-2]
    return text


def parse_float(text: str) -> Optional[float]:
    """Inverse of format_float."""
    if text == "":
        return None
    return float(text)


def atomic_write_bytes(path: Union[str, Path], data: bytes) -> None:
    """
    Write bytes to path through a temporary file and an atomic rename.

    Raises:
        OSError: If the directory is not writable
    """
    target = Path(path)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=str(target.parent))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp_name, target)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def atomic_write_text(path: Union[str, Path], text: str) -> None:
    """UTF-8 variant of atomic_write_bytes."""
    atomic_write_bytes(path, text.encode("utf-8"))
