"""Per-frame / per-scale coding statistics, CSV/JSON export and the rate report."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

FIELDS = ("frame", "scale", "bits", "bpp", "psnr", "dropped")
REPORT_FIELDS = ("frame", "frame_type", "scale", "bits", "bpp", "percent")

# scale status values
CODED = "coded"
DECODED = "decoded"
NOT_REQUESTED = "not_requested"
DROPPED = "dropped"
CORRUPT = "corrupt"
STALE = "stale"


@dataclass
class ScaleStat:
    scale: int
    bits: int
    status: str = CODED
    clamped: int = 0
    ideal_bits: float = 0.0

    @property
    def dropped(self) -> bool:
        return self.status not in (CODED, DECODED)


@dataclass
class FrameStat:
    frame: int
    frame_type: str
    pixels: int
    scales: list[ScaleStat] = field(default_factory=list)
    psnr: Optional[float] = None
    error: Optional[str] = None

    @property
    def bits(self) -> int:
        return sum(s.bits for s in self.scales)

    @property
    def bpp(self) -> float:
        return self.bits / self.pixels

    @property
    def scales_used(self) -> int:
        return sum(1 for s in self.scales if not s.dropped)


@dataclass
class CodingStats:
    width: int
    height: int
    frames: list[FrameStat] = field(default_factory=list)
    container_bytes: int = 0

    def rows(self) -> list[dict]:
        out = []
        for fs in self.frames:
            for s in fs.scales:
                out.append({"frame": fs.frame, "scale": s.scale, "bits": s.bits, "bpp": s.bits / fs.pixels,
                            "psnr": fs.psnr, "dropped": int(s.dropped)})
        return out

    def mean_bpp(self, frame_type: Optional[str] = None) -> float:
        sel = [f.bpp for f in self.frames if frame_type is None or f.frame_type == frame_type]
        return sum(sel) / len(sel) if sel else float("nan")

    def mean_psnr(self) -> float:
        sel = [f.psnr for f in self.frames if f.psnr is not None]
        return sum(sel) / len(sel) if sel else float("nan")

    def summary(self) -> dict:
        return {"frames": len(self.frames), "width": self.width, "height": self.height,
                "container_bytes": self.container_bytes, "mean_bpp": _finite(self.mean_bpp()),
                "mean_intra_bpp": _finite(self.mean_bpp("intra")),
                "mean_inter_bpp": _finite(self.mean_bpp("inter")), "mean_psnr": _finite(self.mean_psnr())}

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=FIELDS, lineterminator="\n")
        w.writeheader()
        for r in self.rows():
            r = dict(r)
            r["bpp"] = f"{r['bpp']:.6f}"
            r["psnr"] = "" if r["psnr"] is None else f"{r['psnr']:.4f}"
            w.writerow(r)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_json(self, path: str | Path | None = None) -> str:
        doc = {"summary": self.summary(), "rows": self.rows(),
               "frames": [{**{k: v for k, v in asdict(f).items() if k != "scales"}, "bits": f.bits,
                           "bpp": f.bpp, "scales": [{**asdict(s), "dropped": s.dropped} for s in f.scales]}
                          for f in self.frames]}
        text = json.dumps(doc, indent=2, default=_finite)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


class EncodeStats(CodingStats):
    pass


class DecodeStats(CodingStats):
    pass


def _finite(x):
    return None if isinstance(x, float) and not math.isfinite(x) else x


def rate_report(stats: CodingStats) -> list[dict]:
    """Per (frame, scale): absolute bits, bpp and share of the frame's bits in percent."""
    rows = []
    for fs in stats.frames:
        total = fs.bits
        for s in fs.scales:
            rows.append({"frame": fs.frame, "frame_type": fs.frame_type, "scale": s.scale, "bits": s.bits,
                         "bpp": s.bits / fs.pixels, "percent": 100.0 * s.bits / total if total else 0.0})
    return rows


def format_report(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**r, "bpp": f"{r['bpp']:.6f}", "percent": f"{r['percent']:.3f}"})
    return buf.getvalue()
