"""SER curves and their CSV form."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from .link import SerEstimate

CSV_SCHEMA_VERSION = "1"
CURVE_COLUMNS = ["curve", "parameter", "unit", "x", "ser", "errors", "trials", "ci_low", "ci_high"]


@dataclass(frozen=True)
class SerPoint:
    x: float
    ser: float
    errors: int
    trials: int
    ci_low: float
    ci_high: float

    @classmethod
    def from_estimate(cls, x: float, est: SerEstimate) -> "SerPoint":
        lo, hi = est.confidence_interval()
        return cls(float(x), est.ser, est.errors, est.trials, lo, hi)

    @property
    def std_error(self) -> float:
        if not self.trials:
            return math.nan
        return math.sqrt(self.ser * (1 - self.ser) / self.trials)


@dataclass
class SerCurve:
    name: str
    parameter: str
    unit: str
    points: List[SerPoint] = field(default_factory=list)
    metadata: Dict[str, object] = field(default_factory=dict)

    def add(self, x: float, est: SerEstimate) -> None:
        self.points.append(SerPoint.from_estimate(x, est))
        self.points.sort(key=lambda p: p.x)

    def xs(self) -> List[float]:
        return [p.x for p in self.points]

    def sers(self) -> List[float]:
        return [p.ser for p in self.points]

    def at(self, x: float) -> SerPoint:
        for p in self.points:
            if p.x == x:
                return p
        raise KeyError(x)

    def required_snr(self, target: float) -> float:
        """SNR where the curve first drops to ``target`` (log-SER interpolation).

        Returns +inf if the curve never reaches the target.
        """
        pts = [p for p in self.points if math.isfinite(p.x)]
        for a, b in zip(pts, pts[1:]):
            if a.ser <= target:
                return a.x
            if b.ser <= target:
                if b.ser == 0:
                    return b.x
                la, lb, lt = math.log(a.ser), math.log(b.ser), math.log(target)
                return a.x + (b.x - a.x) * (la - lt) / (la - lb)
        if pts and pts[-1].ser <= target:
            return pts[-1].x
        return math.inf


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def curves_to_csv(curves: List[SerCurve]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for c in curves:
        for p in c.points:
            w.writerow([c.name, c.parameter, c.unit] + [
                _fmt(v) for v in (p.x, p.ser, p.errors, p.trials, p.ci_low, p.ci_high)
            ])
    return buf.getvalue()


def write_curves(path: Path, curves: List[SerCurve]) -> None:
    Path(path).write_text(curves_to_csv(curves), encoding="utf-8")


def read_curves(path: Path) -> List[SerCurve]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(CURVE_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: not a SER curve CSV (missing {sorted(missing)})")
        curves: Dict[str, SerCurve] = {}
        for row in reader:
            c = curves.setdefault(row["curve"], SerCurve(row["curve"], row["parameter"], row["unit"]))
            c.points.append(SerPoint(
                float(row["x"]), float(row["ser"]), int(row["errors"]), int(row["trials"]),
                float(row["ci_low"]), float(row["ci_high"]),
            ))
    return list(curves.values())


def argmin_point(curves: Dict[float, SerCurve], x: Optional[float] = None) -> float:
    """Key of the curve with the lowest SER at x (or summed over all x).

    Ties go to the smallest key.
    """
    def score(c: SerCurve) -> float:
        return c.at(x).ser if x is not None else sum(p.ser for p in c.points)

    return min(sorted(curves), key=lambda k: score(curves[k]))
