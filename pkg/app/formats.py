"""CSV tables with `# key=value` metadata comments.

Every table written here starts with `# schema=<name>/v1`, followed by any
metadata comments and a header row.
"""

from io import StringIO
from pathlib import Path
from typing import Dict, Tuple, Union

import pandas as pd

from app.exceptions import FormatError


PathLike = Union[str, Path]
FLOAT_FORMAT = "%.12g"


def write_table(
    path: PathLike,
    frame: pd.DataFrame,
    schema: str,
    meta: Dict[str, object] | None = None,
) -> Path:
    """Write a CSV with a schema comment and optional metadata comments."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# schema={schema}"]
    for key, value in (meta or {}).items():
        lines.append(f"# {key}={value}")
    body = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    path.write_text("\n".join(lines) + "\n" + body, encoding="utf-8")
    return path


def read_meta(text: str) -> Dict[str, str]:
    meta = {}
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped.startswith("#"):
            continue
        key, sep, value = stripped.lstrip("#").strip().partition("=")
        if sep:
            meta[key.strip()] = value.strip()
    return meta


def read_table(
    path: PathLike,
    columns: Tuple[str, ...],
    schema: str | None = None,
    nullable: Tuple[str, ...] = (),
) -> Tuple[pd.DataFrame, Dict[str, str]]:
    """Read a metadata-commented CSV and check its header and schema."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from None
    meta = read_meta(text)
    if schema is not None and meta.get("schema", schema) != schema:
        raise FormatError(f"{path}: expected schema {schema}, found {meta['schema']}")
    try:
        frame = pd.read_csv(StringIO(text), comment="#", skip_blank_lines=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FormatError(f"{path}: {e}") from None
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise FormatError(f"{path}: missing columns {missing}")
    try:
        frame = frame[list(columns)].apply(pd.to_numeric, errors="raise")
    except (ValueError, TypeError) as e:
        raise FormatError(f"{path}: non-numeric value ({e})") from None
    required = [c for c in columns if c not in nullable]
    if frame[required].isna().any().any():
        raise FormatError(f"{path}: empty cells in required columns")
    return frame, meta
