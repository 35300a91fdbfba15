"""Self-describing CSV / JSON tables with atomic writes.

CSV files start with ``# key: value`` metadata lines, then a header row and
comma-separated data rows; NaN is written as ``nan``. Optional footer lines
are again ``#``-prefixed. The JSON form has the keys ``metadata``,
``columns``, ``rows`` and ``footer`` with NaN as ``null``.
"""

import io
import json
import math
import os
import sys
import tempfile
from enum import Enum

import numpy as np


def format_value(v):
    if v is None:
        return "nan"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    if isinstance(v, Enum):
        return str(v)
    return str(v)


def to_json_value(v):
    if isinstance(v, Enum):
        return str(v)
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if not math.isfinite(v) else v
    if isinstance(v, dict):
        return {str(k): to_json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [to_json_value(x) for x in v]
    return v


def render_metadata(metadata):
    return "".join(f"# {k}: {_meta_text(v)}\n" for k, v in metadata.items())


def render_csv(metadata, columns, rows, footer=None):
    buf = io.StringIO()
    buf.write(render_metadata(metadata))
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(format_value(v) for v in row) + "\n")
    for k, v in (footer or {}).items():
        buf.write(f"# {k}: {_meta_text(v)}\n")
    return buf.getvalue()


def _meta_text(v):
    if isinstance(v, dict):
        return json.dumps(to_json_value(v), sort_keys=True)
    return format_value(v)


def render_json(metadata, columns, rows, footer=None):
    doc = {
        "metadata": to_json_value(metadata),
        "columns": list(columns),
        "rows": [to_json_value(list(r)) for r in rows],
        "footer": to_json_value(footer or {}),
    }
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def render(fmt, metadata, columns, rows, footer=None):
    if fmt == "json":
        return render_json(metadata, columns, rows, footer)
    return render_csv(metadata, columns, rows, footer)


def write_atomic(path, text):
    """Write ``text`` to ``path`` via a temporary file and a rename; '-' means stdout."""
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_csv(path_or_text):
    """Parse a file written by :func:`render_csv` into (metadata, columns, rows, footer).

    Values stay strings; use ``float`` on numeric columns (``float('nan')``
    parses the NaN marker).
    """
    text = path_or_text
    if "\n" not in text and os.path.exists(text):
        with open(text) as fh:
            text = fh.read()
    metadata, footer, rows = {}, {}, []
    columns = None
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, val = line[2:].partition(": ")
            (metadata if columns is None else footer)[key] = val
        elif columns is None:
            columns = line.split(",")
        elif line:
            rows.append(line.split(","))
    return metadata, columns, rows, footer
