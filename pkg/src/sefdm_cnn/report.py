"""Tabular (CSV) report files built from evaluation results.

Every file has a fixed header and accuracy values are written with six
decimals, so regenerating a report from stored results is byte-identical.
Wall-clock timing is kept in its own file because it never repeats exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .errors import ConfigurationError, DataError
from .evaluation import EvalResult, fft_cost
from .dataset import WINDOW

CURVE_COLUMNS = ("model", "test_set", "condition", "esn0_db", "accuracy", "count")
CONFUSION_COLUMNS = ("model", "test_set", "condition", "true_class", "predicted_class", "count")
SUMMARY_COLUMNS = ("model", "test_set", "condition", "group", "domain", "records", "accuracy")
COMPARISON_COLUMNS = ("model", "test_set", "direct", "transfer", "gain")
DOMAIN_DELTA_COLUMNS = ("time_model", "freq_model", "test_set", "esn0_db",
                        "time_accuracy", "freq_accuracy", "delta")
COMPLEXITY_COLUMNS = ("model", "domain", "window", "fft_multiplications", "fft_additions")
TIMING_COLUMNS = ("step", "seconds")


def _fmt(v) -> str:
    if v is None:
        return "noiseless"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def _write(path: Path, columns, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_table(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def curve_rows(r: EvalResult):
    for p in r.curve.points:
        yield (r.name, r.test_name, r.condition,
               None if p.esn0_db is None else float(p.esn0_db), float(p.accuracy), p.count)


def confusion_rows(r: EvalResult):
    names = r.class_names
    for i, row in enumerate(r.confusion.counts):
        for j, n in enumerate(row):
            yield (r.name, r.test_name, r.condition, names[i], names[j], int(n))


def save_result(result: EvalResult, out_dir, stem: str | None = None) -> dict:
    """Persist one evaluation as JSON plus its curve and matrix CSV files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or result.name
    paths = {"result": out / f"{stem}.result.json"}
    paths["result"].write_text(json.dumps(result.to_dict(), sort_keys=True, indent=1) + "\n")
    paths["curve"] = _write(out / f"{stem}.curve.csv", CURVE_COLUMNS, curve_rows(result))
    paths["confusion"] = _write(out / f"{stem}.confusion.csv", CONFUSION_COLUMNS, confusion_rows(result))
    return paths


def load_result(path) -> EvalResult:
    try:
        return EvalResult.from_dict(json.loads(Path(path).read_text()))
    except FileNotFoundError as exc:
        raise DataError(f"result file not found: {path}") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed result file {path}: {exc}") from exc


def comparison_rows(results):
    """Direct vs transfer accuracy for every transferred model with a direct counterpart."""
    direct = {(r.name, r.test_name): r for r in results if r.condition == "direct"}
    for r in results:
        if r.condition != "transfer":
            continue
        d = direct.get((r.base, r.test_name))
        if d is None:
            continue
        yield (r.base, r.test_name, d.accuracy, r.accuracy, r.accuracy - d.accuracy)


def _domain_partner(name: str) -> str | None:
    if name.startswith("time-"):
        return "fre-" + name[len("time-"):]
    return None


def domain_delta_rows(results):
    """Per-Es/N0 accuracy delta between time- and frequency-domain twins.

    Twins share test set and condition and are matched by name (time-X
    against fre-X) or, failing that, by group when exactly one model of
    each domain exists.
    """
    times = [r for r in results if r.domain == "time"]
    freqs = [r for r in results if r.domain == "freq"]
    by_name = {(r.name, r.test_name, r.condition): r for r in freqs}
    pairs = []
    for t in times:
        f = by_name.get((_domain_partner(t.name), t.test_name, t.condition))
        if f is None:
            def same(x):
                return (x.group, x.test_name, x.condition) == (t.group, t.test_name, t.condition)
            cands = [x for x in freqs if same(x)]
            f = cands[0] if len(cands) == 1 and sum(map(same, times)) == 1 else None
        if f is not None:
            pairs.append((t, f))
    for t, f in pairs:
        fpoints = {p.esn0_db: p.accuracy for p in f.curve.points}
        for p in t.curve.points:
            if p.esn0_db in fpoints:
                yield (t.name, f.name, t.test_name,
                       None if p.esn0_db is None else float(p.esn0_db),
                       float(p.accuracy), float(fpoints[p.esn0_db]),
                       float(p.accuracy - fpoints[p.esn0_db]))


def complexity_rows(results, window: int = WINDOW):
    mult, add = fft_cost(window)
    seen = set()
    for r in results:
        if r.name in seen:
            continue
        seen.add(r.name)
        extra = (mult, add) if r.domain == "freq" else (0, 0)
        yield (r.name, r.domain, window, *extra)


def write_report(results, out_dir, timing: dict | None = None) -> dict:
    """Write every report table for ``results`` into ``out_dir``; returns the paths."""
    results = list(results)
    if not results:
        raise ConfigurationError("report needs at least one evaluation result")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results.sort(key=lambda r: (r.name, r.condition, r.test_name))
    paths = {
        "curves": _write(out / "curves.csv", CURVE_COLUMNS,
                         (row for r in results for row in curve_rows(r))),
        "confusion": _write(out / "confusion.csv", CONFUSION_COLUMNS,
                            (row for r in results for row in confusion_rows(r))),
        "summary": _write(out / "summary.csv", SUMMARY_COLUMNS,
                          ((r.name, r.test_name, r.condition, r.group, r.domain,
                            r.confusion.total, r.accuracy) for r in results)),
        "comparison": _write(out / "comparison.csv", COMPARISON_COLUMNS, comparison_rows(results)),
        "domain_delta": _write(out / "domain_delta.csv", DOMAIN_DELTA_COLUMNS,
                               domain_delta_rows(results)),
        "complexity": _write(out / "complexity.csv", COMPLEXITY_COLUMNS, complexity_rows(results)),
    }
    if timing:
        paths["timing"] = _write(out / "timing.csv", TIMING_COLUMNS,
                                 sorted((k, float(v)) for k, v in timing.items()))
    return paths
