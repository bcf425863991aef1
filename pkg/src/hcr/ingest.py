"""CSV ingestion for single series and aligned panels."""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .crossdeps import PanelFrame
from .errors import AlignmentError, ConfigError, DataError
from .marginals import SeriesFrame

logger = logging.getLogger(__name__)

__all__ = ["ingest_csv"]


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _select(names, selectors):
    if not selectors:
        return list(range(len(names)))
    out = []
    for s in selectors:
        s = str(s)
        if s in names:
            out.append(names.index(s))
        elif s.lstrip("-").isdigit() and -len(names) <= int(s) < len(names):
            out.append(int(s) % len(names))
        else:
            raise ConfigError(f"column {s!r} not found; available: {names}")
    return out


def ingest_csv(path: Union[str, Path], selectors: Optional[Sequence] = None,
               panel: Optional[bool] = None) -> Union[SeriesFrame, PanelFrame]:
    """
    Read a CSV of decimal values.

    Layouts: one value column, ``(timestamp, value)`` pairs, or a timestamp
    column followed by several value columns (a panel).  A header row is
    detected when its cells are not all numeric.  ``selectors`` pick value
    columns by name or position.  With ``panel=None`` a panel is returned
    when more than one value column is selected.

    Raises
    ------
    DataError
        Empty file or unparseable cells (their line numbers are reported).
    AlignmentError
        A column ends early (ragged panel).
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"input file {str(path)!r} does not exist")
    with path.open(newline="") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1)
                if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: no data rows")

    first = [c.strip() for c in rows[0][1]]
    if not all(_is_number(c) for c in first):
        header, rows = first, rows[1:]
        if not rows:
            raise DataError(f"{path}: header but no data rows")
    else:
        header = None
    width = max(len(r) for _, r in rows)
    sample = [c.strip() for c in rows[0][1]]
    has_time = width > 1 and not _is_number(sample[0])
    names = list(header) if header else []
    names += [f"col{j}" for j in range(len(names), width)]
    names = [n or f"col{j}" for j, n in enumerate(names[:width])]
    value_cols = list(range(1 if has_time else 0, width))
    value_names = [names[j] for j in value_cols]
    chosen = [value_cols[j] for j in _select(value_names, selectors)]
    if not chosen:
        raise DataError(f"{path}: no value columns")

    n = len(rows)
    data = np.full((n, len(chosen)), np.nan)
    missing = np.zeros((n, len(chosen)), dtype=bool)
    bad = []
    stamps = []
    for r, (lineno, row) in enumerate(rows):
        cells = [c.strip() for c in row] + [""] * (width - len(row))
        if has_time:
            stamps.append(cells[0])
        for c, j in enumerate(chosen):
            cell = cells[j]
            if cell == "":
                missing[r, c] = True
                continue
            try:
                data[r, c] = float(cell)
            except ValueError:
                bad.append((lineno, names[j], cell))

    for c, j in enumerate(chosen):
        col = missing[:, c]
        if col.any():
            first_gap = int(np.argmax(col))
            if col[first_gap:].all():
                raise AlignmentError(
                    f"{path}: column {names[j]!r} ends at row {first_gap} of {n} (ragged panel)")
            bad.extend((rows[r][0], names[j], "") for r in np.flatnonzero(col))
    if bad:
        bad.sort()
        shown = ", ".join(f"line {ln} column {nm!r} value {v!r}" for ln, nm, v in bad[:10])
        more = f" and {len(bad) - 10} more" if len(bad) > 10 else ""
        raise DataError(f"{path}: unparseable cells: {shown}{more}")
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite values")

    logger.info("read %d rows x %d columns from %s", n, len(chosen), path)
    as_panel = len(chosen) > 1 if panel is None else panel
    if as_panel:
        return PanelFrame([names[j] for j in chosen], data)
    if len(chosen) != 1:
        raise ConfigError(f"{len(chosen)} columns selected for a single series")
    return SeriesFrame(names[chosen[0]], data[:, 0], stamps or None)
