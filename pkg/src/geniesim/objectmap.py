"""Location-keyed high-confidence object map.

Detected objects are stored under their quantized absolute location, the
one attribute of a static object that independent observers agree on.
Re-sighting a stored object (same cell, same label) updates its confidence
instead of duplicating it; returning cached results pulls nearby
high-confidence objects into the answer.  Only objects at or above the
confidence threshold are ever shared outward.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, NamedTuple

from .model import DetectedObject, Message, ObjectList


class CellKey(NamedTuple):
    ix: int
    iy: int
    iz: int


def quantize(location: tuple[float, float, float], resolution_m: float) -> CellKey:
    """Floor-divide each axis by the cell edge length (floor, not truncate,
    so negative coordinates quantize consistently)."""
    if resolution_m <= 0:
        raise ValueError(f"resolution must be positive: {resolution_m}")
    return CellKey(*(math.floor(c / resolution_m) for c in location))


class UpdateRule(str, Enum):
    """Confidence update applied when a stored object is sighted again.

    verbatim  C <- C + rate * (C - observed); moves confidence away from
              the observation, kept for fidelity with the original
              formulation.
    ema       C <- C + rate * (observed - C); exponential moving average
              toward the observation (default).
    ascend    C <- C + rate * (1 - C); monotone climb toward 1 on every
              re-sighting, regardless of the observed score.
    """

    VERBATIM = "verbatim"
    EMA = "ema"
    ASCEND = "ascend"


def apply_update(rule: UpdateRule, stored: float, observed: float, rate: float) -> float:
    if rule is UpdateRule.VERBATIM:
        value = stored + rate * (stored - observed)
    elif rule is UpdateRule.EMA:
        value = stored + rate * (observed - stored)
    elif rule is UpdateRule.ASCEND:
        value = stored + rate * (1.0 - stored)
    else:  # pragma: no cover
        raise ValueError(f"unknown rule: {rule}")
    return min(1.0, max(0.0, value))


@dataclass(frozen=True, slots=True)
class BoostRecord:
    """One confidence change: delta = confidence after - before."""

    time_ms: float
    cell: CellKey
    delta: float


def share_filter(payload: ObjectList, confidence_threshold: float) -> ObjectList:
    """Subset of objects with confidence >= threshold, order preserved.

    Applied to everything map-sourced before it leaves for a vehicle.
    """
    return ObjectList(
        tuple(o for o in payload.objects if o.confidence >= confidence_threshold)
    )


class ObjectMapStore:
    """One map per caching node, mutated only inside that node's callbacks.

    ``requests``/``hits`` count lookups made on behalf of message payloads:
    an ingest lookup hits when the cell already holds a same-label object,
    and an augment scan hits when it contributes at least one stored object
    to a returned result.
    """

    def __init__(
        self,
        resolution_m: float = 0.5,
        confidence_threshold: float = 0.6,
        update_rate: float = 0.1,
        update_rule: UpdateRule | str = UpdateRule.EMA,
        relevance_radius_m: float = 15.0,
    ) -> None:
        if resolution_m <= 0:
            raise ValueError("resolution_m must be positive")
        if not 0.0 <= confidence_threshold <= 1.0:
            raise ValueError("confidence_threshold must be in [0, 1]")
        if not 0.0 < update_rate <= 1.0:
            raise ValueError("update_rate must be in (0, 1]")
        self.resolution_m = resolution_m
        self.confidence_threshold = confidence_threshold
        self.update_rate = update_rate
        self.update_rule = UpdateRule(update_rule)
        self.relevance_radius_m = relevance_radius_m
        self.cells: dict[CellKey, list[DetectedObject]] = {}
        self.requests = 0
        self.hits = 0
        self.boost_records: list[BoostRecord] = []

    def __len__(self) -> int:
        return sum(len(v) for v in self.cells.values())

    # -- write path -----------------------------------------------------------

    def ingest(self, message: Message, now_ms: float) -> list[BoostRecord]:
        """Absorb the objects of an answer message into the map.

        Non-object payloads are ignored.  Each object either updates the
        confidence of a same-label object already stored in its cell
        (emitting a boost record) or is inserted fresh.
        """
        if not isinstance(message.payload, ObjectList):
            return []
        emitted: list[BoostRecord] = []
        for obj in message.payload.objects:
            cell = quantize(obj.location, self.resolution_m)
            self.requests += 1
            stored_list = self.cells.get(cell)
            match_idx = None
            if stored_list is not None:
                for i, stored in enumerate(stored_list):
                    if stored.label == obj.label:
                        match_idx = i
                        break
            if match_idx is None:
                self.cells.setdefault(cell, []).append(replace(obj, from_map=False))
                continue
            self.hits += 1
            before = stored_list[match_idx].confidence
            after = apply_update(self.update_rule, before, obj.confidence, self.update_rate)
            stored_list[match_idx] = replace(stored_list[match_idx], confidence=after)
            record = BoostRecord(now_ms, cell, after - before)
            self.boost_records.append(record)
            emitted.append(record)
        return emitted

    # -- read path ------------------------------------------------------------

    def augment(self, payload: ObjectList) -> ObjectList:
        """Append stored high-confidence objects near the payload's objects.

        Scans every cell within the relevance radius of each object; a
        stored object qualifies if its confidence meets the threshold and
        no object with the same (label, cell) is already present.  Appended
        objects are flagged ``from_map``.  The store is never mutated.
        """
        present = {
            (o.label, quantize(o.location, self.resolution_m)) for o in payload.objects
        }
        additions: list[DetectedObject] = []
        for obj in payload.objects:
            found = False
            for cell in self._cells_near(obj.location):
                for stored in self.cells[cell]:
                    if stored.confidence < self.confidence_threshold:
                        continue
                    ident = (stored.label, cell)
                    if ident in present:
                        continue
                    present.add(ident)
                    additions.append(replace(stored, from_map=True))
                    found = True
            self.requests += 1
            if found:
                self.hits += 1
        additions.sort(key=DetectedObject.sort_key)
        return ObjectList(payload.objects + tuple(additions))

    def _cells_near(self, point: tuple[float, float, float]) -> list[CellKey]:
        """Occupied cells intersecting the relevance sphere around ``point``,
        in deterministic order."""
        r = self.relevance_radius_m
        res = self.resolution_m
        lo = quantize((point[0] - r, point[1] - r, point[2] - r), res)
        hi = quantize((point[0] + r, point[1] + r, point[2] + r), res)
        span = (hi.ix - lo.ix + 1) * (hi.iy - lo.iy + 1) * (hi.iz - lo.iz + 1)
        if span <= len(self.cells):
            candidates: Iterable[CellKey] = (
                CellKey(ix, iy, iz)
                for ix in range(lo.ix, hi.ix + 1)
                for iy in range(lo.iy, hi.iy + 1)
                for iz in range(lo.iz, hi.iz + 1)
            )
            pool = [c for c in candidates if c in self.cells]
        else:
            pool = [
                c
                for c in self.cells
                if lo.ix <= c.ix <= hi.ix and lo.iy <= c.iy <= hi.iy and lo.iz <= c.iz <= hi.iz
            ]
        r2 = r * r
        out = [c for c in pool if self._cell_sphere_dist2(c, point) <= r2]
        out.sort()
        return out

    def _cell_sphere_dist2(self, cell: CellKey, point: tuple[float, float, float]) -> float:
        res = self.resolution_m
        d2 = 0.0
        for idx, p in zip(cell, point):
            lo, hi = idx * res, (idx + 1) * res
            nearest = min(max(p, lo), hi)
            d2 += (p - nearest) ** 2
        return d2

    def shareable(self, payload: ObjectList) -> ObjectList:
        return share_filter(payload, self.confidence_threshold)

    # -- export ---------------------------------------------------------------

    def snapshot(self) -> dict:
        """JSON-serializable view: cell key string -> object dicts."""
        out: dict[str, list[dict]] = {}
        for cell in sorted(self.cells):
            out[f"{cell.ix},{cell.iy},{cell.iz}"] = [
                {
                    "label": o.label,
                    "confidence": o.confidence,
                    "location": list(o.location),
                    "extent": list(o.extent),
                }
                for o in sorted(self.cells[cell], key=DetectedObject.sort_key)
            ]
        return out

    def state_digest(self) -> str:
        """Hash of the full store contents; used to prove read-only paths."""
        h = hashlib.sha256()
        for cell in sorted(self.cells):
            h.update(repr(cell).encode())
            for o in sorted(self.cells[cell], key=DetectedObject.sort_key):
                h.update(repr(o.sort_key()).encode())
        return h.hexdigest()


def boost_csv_rows(records: Iterable[BoostRecord]) -> list[str]:
    """CSV lines (time_ms, cell, delta) for a boost record stream."""
    rows = ["time_ms,cell,delta"]
    for r in records:
        rows.append(f"{r.time_ms!r},{r.cell.ix};{r.cell.iy};{r.cell.iz},{r.delta!r}")
    return rows
