"""Artifact emission: JSON reports, CSV tables, binary dumps, figures.

Every artifact embeds the fully resolved configuration so a run can be
reproduced bit-for-bit from any one of its outputs (figures excluded
from the bit-identical claim; the delimited files are the contract).
All writes are atomic: a temp file in the target directory is renamed
into place.
"""

from __future__ import annotations

import json
import os
import tempfile


def _atomic_bytes(path, data):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, payload, config=None):
    doc = dict(payload)
    if config is not None:
        doc["config"] = config
    _atomic_bytes(path, json.dumps(doc, indent=2, sort_keys=True,
                                   default=_coerce).encode())


def _coerce(obj):
    try:
        import numpy as np
        if isinstance(obj, (np.integer,)):
            return int(obj)
        if isinstance(obj, (np.floating,)):
            return float(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
    except ImportError:      # pragma: no cover
        pass
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _atomic_bytes(path, ("\n".join(lines) + "\n").encode())


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_binary_fields(path, fields):
    import io

    from .grid import write_fields
    buf = io.BytesIO()
    write_fields(buf, fields)
    _atomic_bytes(path, buf.getvalue())


def write_figure(path, fig):
    import io
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=110)
    _atomic_bytes(path, buf.getvalue())
    import matplotlib.pyplot as plt
    plt.close(fig)
