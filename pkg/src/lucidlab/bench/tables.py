"""Error aggregation tables with a fixed CSV schema.

One row per (condition, object class): position error mean/SD (cm), per-axis
and total rotation error mean/SD (deg), detection rate, sample count.  Rows
are kept in insertion order, which the writers keep deterministic.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from lucidlab.shapes import ObjectClass

CSV_COLUMNS = ("condition", "object_class", "n", "detected",
               "detection_rate", "pos_mean_cm", "pos_sd_cm",
               "roll_mean_deg", "roll_sd_deg", "pitch_mean_deg", "pitch_sd_deg",
               "yaw_mean_deg", "yaw_sd_deg", "rot_mean_deg", "rot_sd_deg")


@dataclass
class _Cell:
    n: int = 0
    detected: int = 0
    pos: list = field(default_factory=list)
    roll: list = field(default_factory=list)
    pitch: list = field(default_factory=list)
    yaw: list = field(default_factory=list)
    rot: list = field(default_factory=list)


@dataclass
class ErrorTable:
    """Accumulates per-(condition, class) error samples."""

    cells: dict = field(default_factory=dict)

    def add(self, condition: str, cls: ObjectClass, detected: bool,
            pos_cm: float | None = None, rot_deg=None, total_deg: float | None = None):
        key = (condition, cls)
        cell = self.cells.setdefault(key, _Cell())
        cell.n += 1
        if detected:
            cell.detected += 1
            cell.pos.append(pos_cm)
            cell.roll.append(rot_deg[0])
            cell.pitch.append(rot_deg[1])
            cell.yaw.append(rot_deg[2])
            cell.rot.append(total_deg)

    def conditions(self):
        seen = []
        for cond, _ in self.cells:
            if cond not in seen:
                seen.append(cond)
        return seen

    def samples(self, condition=None, cls=None, kind="pos"):
        """Pooled raw samples, filterable by condition and/or class."""
        out = []
        for (cond, c), cell in self.cells.items():
            if condition is not None and cond != condition:
                continue
            if cls is not None and c is not cls:
                continue
            out.extend(getattr(cell, kind))
        return np.asarray(out, dtype=np.float64)

    def detection_rate(self, condition=None, cls=None) -> float:
        n = det = 0
        for (cond, c), cell in self.cells.items():
            if condition is not None and cond != condition:
                continue
            if cls is not None and c is not cls:
                continue
            n += cell.n
            det += cell.detected
        return det / n if n else float("nan")

    def rows(self):
        for (cond, cls), cell in self.cells.items():
            def ms(vals):
                if not vals:
                    return float("nan"), float("nan")
                arr = np.asarray(vals)
                return float(arr.mean()), float(arr.std())
            pm, ps = ms(cell.pos)
            rm, rs = ms(cell.roll)
            pm2, ps2 = ms(cell.pitch)
            ym, ys = ms(cell.yaw)
            tm, ts = ms(cell.rot)
            yield {"condition": cond, "object_class": cls.name.lower(),
                   "n": cell.n, "detected": cell.detected,
                   "detection_rate": cell.detected / cell.n if cell.n else float("nan"),
                   "pos_mean_cm": pm, "pos_sd_cm": ps,
                   "roll_mean_deg": rm, "roll_sd_deg": rs,
                   "pitch_mean_deg": pm2, "pitch_sd_deg": ps2,
                   "yaw_mean_deg": ym, "yaw_sd_deg": ys,
                   "rot_mean_deg": tm, "rot_sd_deg": ts}


def write_csv(table: ErrorTable) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in table.rows():
        w.writerow({k: (repr(v) if isinstance(v, float) else v)
                    for k, v in row.items()})
    return buf.getvalue()


def read_csv(text: str):
    """Parse a table CSV back into row dicts with floats restored."""
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        parsed = {}
        for k, v in row.items():
            if k in ("condition", "object_class"):
                parsed[k] = v
            elif k in ("n", "detected"):
                parsed[k] = int(v)
            else:
                parsed[k] = float(v)
        rows.append(parsed)
    return rows
