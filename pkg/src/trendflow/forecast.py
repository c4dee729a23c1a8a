"""Expanding-window one-step evaluation scored by normalized squared error."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .series import SeriesFrame, split

DEFAULT_TEST_LEN = 24


class EvalError(ValueError):
    pass


def nse(predictions, truths) -> tuple[np.ndarray, float]:
    """Per-variable ``sum (pred - true)^2 / sum true^2`` and their sum."""
    P = np.atleast_2d(np.asarray(predictions, dtype=float))
    Y = np.atleast_2d(np.asarray(truths, dtype=float))
    if P.shape != Y.shape:
        raise EvalError(f"predictions {P.shape} and truths {Y.shape} differ in shape")
    denom = (Y * Y).sum(axis=0)
    if np.any(denom == 0):
        raise EvalError(f"all-zero truth in column(s) {np.flatnonzero(denom == 0).tolist()}: NSE undefined")
    per = ((P - Y) ** 2).sum(axis=0) / denom
    return per, float(sum(per.tolist()))


@dataclass(frozen=True, eq=False)
class EvalReport:
    descriptor: str
    variable_names: tuple[str, ...]
    per_variable: tuple[float, ...]
    total: float
    test_len: int
    start_index: int
    predictions: np.ndarray
    truths: np.ndarray
    train_sizes: tuple[int, ...] = ()
    meta: Mapping[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        f = lambda v: format(float(v), ".17g")  # noqa: E731
        return {
            "kind": "eval_report",
            "model": self.descriptor,
            "variables": list(self.variable_names),
            "test_len": self.test_len,
            "start_index": self.start_index,
            "per_variable": [f(v) for v in self.per_variable],
            "total": f(self.total),
            "steps": [
                {
                    "index": self.start_index + k,
                    "train_size": self.train_sizes[k] if self.train_sizes else None,
                    "predicted": [f(v) for v in self.predictions[k]],
                    "true": [f(v) for v in self.truths[k]],
                }
                for k in range(self.test_len)
            ],
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "EvalReport":
        if doc.get("kind") != "eval_report":
            raise EvalError("not an eval_report document")
        try:
            steps = doc["steps"]
            return cls(
                descriptor=str(doc["model"]),
                variable_names=tuple(doc["variables"]),
                per_variable=tuple(float(v) for v in doc["per_variable"]),
                total=float(doc["total"]),
                test_len=int(doc["test_len"]),
                start_index=int(doc["start_index"]),
                predictions=np.array([[float(v) for v in s["predicted"]] for s in steps]),
                truths=np.array([[float(v) for v in s["true"]] for s in steps]),
                train_sizes=tuple(int(s["train_size"]) for s in steps if s.get("train_size") is not None),
                meta=dict(doc.get("meta", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise EvalError(f"malformed eval_report: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        """Per-step log as CSV: index, predicted columns, true columns."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(
            ["index", *(f"pred_{v}" for v in self.variable_names), *(f"true_{v}" for v in self.variable_names)]
        )
        for k in range(self.test_len):
            w.writerow(
                [
                    self.start_index + k,
                    *(format(v, ".17g") for v in self.predictions[k]),
                    *(format(v, ".17g") for v in self.truths[k]),
                ]
            )
        return buf.getvalue()


def walk_forward(
    frame: SeriesFrame,
    test_len: int,
    fit_fn: Callable[[SeriesFrame], object],
    predict_fn: Callable[[object, SeriesFrame], np.ndarray],
    *,
    descriptor: str | None = None,
    meta: Mapping[str, object] | None = None,
) -> EvalReport:
    """Refit on every prefix ending just before each test point and predict it.

    Predictions always start from the true last observed state.
    """
    train, _ = split(frame, test_len)
    start = train.T
    preds, truths, sizes = [], [], []
    for k in range(test_len):
        window = frame.head(start + k)
        try:
            model = fit_fn(window)
            pred = np.asarray(predict_fn(model, window), dtype=float)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise EvalError(f"walk-forward step {k} (train size {window.T}) failed: {exc}") from exc
        if pred.shape != (frame.n,):
            raise EvalError(f"predict_fn returned shape {pred.shape}, expected ({frame.n},)")
        preds.append(pred)
        truths.append(frame.values[start + k])
        sizes.append(window.T)
    P, Y = np.array(preds), np.array(truths)
    per, total = nse(P, Y)
    return EvalReport(
        descriptor=descriptor or getattr(fit_fn, "__name__", "model"),
        variable_names=frame.variable_names,
        per_variable=tuple(float(v) for v in per),
        total=total,
        test_len=int(test_len),
        start_index=start,
        predictions=P,
        truths=Y,
        train_sizes=tuple(sizes),
        meta=dict(meta or {}),
    )


def persistence_predict(model, frame: SeriesFrame) -> np.ndarray:
    """Naive predictor: the next value equals the last observed one."""
    return frame.values[-1].copy()


def _short(v: float) -> str:
    s = f"{v:.4f}"
    return s[1:] if s.startswith("0.") else s


@dataclass(frozen=True)
class ComparisonTable:
    variable_names: tuple[str, ...]
    models: tuple[str, ...]
    rows: tuple[tuple[float, ...], ...]  # per-variable errors then total
    best: tuple[bool, ...]
    test_len: int

    def to_text(self) -> str:
        header = ["Model", *(f"{v}' predict. error" for v in self.variable_names), "Total error"]
        body = [
            [m + (" *" if b else ""), *(_short(v) for v in row)]
            for m, row, b in zip(self.models, self.rows, self.best)
        ]
        widths = [max(len(r[c]) for r in [header, *body]) for c in range(len(header))]
        line = lambda r: " | ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()  # noqa: E731
        out = [line(header), "-+-".join("-" * w for w in widths)]
        out += [line(r) for r in body]
        out.append(f"(test window: {self.test_len} points; * = minimal total error)")
        return "\n".join(out) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", *self.variable_names, "total", "best"])
        for m, row, b in zip(self.models, self.rows, self.best):
            w.writerow([m, *(format(v, ".17g") for v in row), int(b)])
        return buf.getvalue()


def compare(reports: Sequence[EvalReport]) -> ComparisonTable:
    """Tabulate reports that share variables and test window; flag the minimal total."""
    if not reports:
        raise EvalError("nothing to compare")
    ref = reports[0]
    for r in reports[1:]:
        if r.variable_names != ref.variable_names:
            raise EvalError(f"{r.descriptor}: variables {r.variable_names} differ from {ref.variable_names}")
        if (r.test_len, r.start_index) != (ref.test_len, ref.start_index):
            raise EvalError(f"{r.descriptor}: test window differs from {ref.descriptor}")
    best = min(r.total for r in reports)
    return ComparisonTable(
        variable_names=ref.variable_names,
        models=tuple(r.descriptor for r in reports),
        rows=tuple((*r.per_variable, r.total) for r in reports),
        best=tuple(r.total == best for r in reports),
        test_len=ref.test_len,
    )
