"""Dataset CSV, config and result serialisation."""

from __future__ import annotations

import csv
import json
import math
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .model import BaselineSpec, Dataset, baseline_spec_from_config
from .simulator import ScenarioSpec, proportional_alpha

SCHEMA_VERSION = 1
DATASET_HEADER = ["trial", "level", "time", "component"]
ESTIMATE_FIELDS = ["component", "level", "unrestricted", "restricted", "m", "exists"]


class DataFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Dataset CSV
# ---------------------------------------------------------------------------


def _parse_n_comment(line: str) -> int | None:
    m = re.search(r"\bn\s*=\s*(\d+)", line)
    return int(m.group(1)) if m else None


def read_dataset_csv(path, n: int | None = None) -> Dataset:
    """Read the long format ``trial,level,time,component``.

    ``n`` comes from the argument or a ``# n=<int>`` comment line; the
    argument wins when both are present.
    """
    path = Path(path)
    comment_n = None
    rows = []
    header = None
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                comment_n = comment_n or _parse_n_comment(stripped)
                continue
            fields = next(csv.reader([stripped]))
            if header is None:
                header = [f.strip() for f in fields]
                if header != DATASET_HEADER:
                    raise DataFormatError(
                        f"{path}:{lineno}: header must be {','.join(DATASET_HEADER)}, got {stripped!r}"
                    )
                continue
            if len(fields) != 4:
                raise DataFormatError(f"{path}:{lineno}: expected 4 fields, got {len(fields)}")
            try:
                trial, level = int(fields[0]), int(fields[1])
                time = float(fields[2])
                comp = int(fields[3])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            if not math.isfinite(time):
                raise DataFormatError(f"{path}:{lineno}: time must be finite")
            rows.append((lineno, trial, level, time, comp))
    if header is None:
        raise DataFormatError(f"{path}: missing header row")
    n = n if n is not None else comment_n
    if n is None:
        raise DataFormatError(f"{path}: system size unknown; add '# n=<int>' or pass n")
    return dataset_from_rows(rows, n, str(path))


def dataset_from_rows(rows, n: int, where: str = "<data>") -> Dataset:
    """Assemble and validate a dataset from ``(lineno, trial, level, time, component)`` rows."""
    if not rows:
        raise DataFormatError(f"{where}: no data rows")
    by_trial: dict[int, dict[int, tuple]] = {}
    for lineno, trial, level, time, comp in rows:
        if trial < 1 or level < 1:
            raise DataFormatError(f"{where}:{lineno}: trial and level start at 1")
        if not 1 <= comp <= n:
            raise DataFormatError(f"{where}:{lineno}: component {comp} not in 1..{n}")
        levels = by_trial.setdefault(trial, {})
        if level in levels:
            raise DataFormatError(f"{where}:{lineno}: trial {trial} level {level} given twice")
        levels[level] = (time, comp, lineno)
    r = max(by_trial)
    missing = sorted(set(range(1, r + 1)) - set(by_trial))
    if missing:
        raise DataFormatError(f"{where}: trials {missing} missing (trials must be 1..{r})")
    s = max(len(v) for v in by_trial.values())
    times = np.empty((r, s))
    sources = np.empty((r, s), dtype=np.int64)
    for trial in range(1, r + 1):
        levels = by_trial[trial]
        if sorted(levels) != list(range(1, s + 1)):
            raise DataFormatError(f"{where}: trial {trial} incomplete, levels {sorted(levels)} of 1..{s}")
        seen = set()
        prev = 0.0
        for k in range(1, s + 1):
            time, comp, lineno = levels[k]
            if k == 1 and not time > 0:
                raise DataFormatError(f"{where}:{lineno}: trial {trial} first failure time must be positive")
            if k > 1 and not time > prev:
                raise DataFormatError(f"{where}:{lineno}: trial {trial} times not strictly increasing at level {k}")
            if comp in seen:
                raise DataFormatError(f"{where}:{lineno}: trial {trial} component {comp} fails twice")
            seen.add(comp)
            prev = time
            times[trial - 1, k - 1] = time
            sources[trial - 1, k - 1] = comp
    try:
        return Dataset(n, times, sources)
    except ValueError as exc:
        raise DataFormatError(f"{where}: {exc}") from None


def dataset_csv_text(d: Dataset) -> str:
    lines = [f"# n={d.n}", ",".join(DATASET_HEADER)]
    for i in range(d.r):
        for k in range(d.s):
            lines.append(f"{i + 1},{k + 1},{float(d.times[i, k])!r},{int(d.sources[i, k])}")
    return "\n".join(lines) + "\n"


def write_dataset_csv(d: Dataset, path) -> None:
    atomic_write(path, dataset_csv_text(d))


def read_wide_csv(path, n: int | None = None) -> Dataset:
    """Read a wide table with rows ``x1, c1, x2, c2, ...`` and one column per trial.

    The first cell of each row is its label; an optional header row whose
    first cell is not ``x1`` is skipped.
    """
    path = Path(path)
    comment_n = None
    table: dict[str, list[str]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        for line in fh:
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                comment_n = comment_n or _parse_n_comment(stripped)
                continue
            fields = [f.strip() for f in next(csv.reader([stripped]))]
            label = fields[0].lower().replace("_", "")
            if re.fullmatch(r"[xc]\d+", label):
                table[label] = fields[1:]
    n = n if n is not None else comment_n
    if n is None:
        raise DataFormatError(f"{path}: system size unknown; add '# n=<int>' or pass n")
    s = 0
    while f"x{s + 1}" in table and f"c{s + 1}" in table:
        s += 1
    if s == 0:
        raise DataFormatError(f"{path}: no x1/c1 rows found")
    r = len(table["x1"])
    rows = []
    for k in range(1, s + 1):
        xs, cs = table[f"x{k}"], table[f"c{k}"]
        if len(xs) != r or len(cs) != r:
            raise DataFormatError(f"{path}: row x{k}/c{k} has the wrong number of trials")
        for i in range(r):
            try:
                rows.append((0, i + 1, k, float(xs[i]), int(cs[i])))
            except ValueError as exc:
                raise DataFormatError(f"{path}: trial {i + 1} level {k}: {exc}") from None
    return dataset_from_rows(rows, n, str(path))


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------


def load_config(path) -> dict:
    with Path(path).open(encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("config must be a JSON object")
    return cfg


def alpha_from_config(spec, n: int, s: int):
    """Return ``(alpha grid or None, sequence dict or None, descriptor)``."""
    if spec is None:
        raise ValueError("config needs an 'alpha' entry")
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float), None, {}
    if isinstance(spec, dict):
        if "sequence" in spec:
            seq = {}
            for item in spec["sequence"]:
                seq[(int(item["component"]), tuple(int(c) for c in item.get("prefix", [])))] = float(item["alpha"])
            return None, seq, {"alpha": "sequence"}
        factors = {k: float(spec[k]) for k in ("p", "p1", "p2", "ptilde", "base") if k in spec}
        return proportional_alpha(n, s, **factors), None, factors
    raise ValueError("alpha must be a matrix or a generator object")


def scenario_from_config(cfg: dict, seed: int | None = None) -> ScenarioSpec:
    n, s = int(cfg["n"]), int(cfg["s"])
    baseline = baseline_spec_from_config(cfg.get("baseline"), n)
    alpha, seq, desc = alpha_from_config(cfg.get("alpha"), n, s)
    return ScenarioSpec(n, s, baseline, alpha=alpha, sequence_alpha=seq,
                        seed=int(cfg.get("seed", 0) if seed is None else seed), descriptor=desc)


def baseline_from_config(cfg: dict | None, n: int) -> BaselineSpec:
    return baseline_spec_from_config((cfg or {}).get("baseline"), n)


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


def _num(x):
    x = float(x)
    return None if math.isnan(x) else x


def estimate_rows(unres, restr, m) -> list[dict]:
    n, s = unres.shape
    rows = []
    for j in range(n):
        for k in range(s):
            rows.append({
                "component": j + 1,
                "level": k + 1,
                "unrestricted": _num(unres[j, k]),
                "restricted": _num(restr[j, k]),
                "m": int(m[j, k]),
                "exists": bool(not math.isnan(restr[j, k])),
            })
    return rows


def rows_to_csv(rows: list[dict], fields) -> str:
    lines = [",".join(fields)]
    for row in rows:
        cells = []
        for f in fields:
            v = row.get(f)
            if v is None:
                cells.append("")
            elif isinstance(v, bool):
                cells.append("true" if v else "false")
            elif isinstance(v, float):
                cells.append(repr(float(v)))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
