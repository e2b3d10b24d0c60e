"""Region families: enumerable collections of index subsets with a
declared VC-dimension.

A region holds two sorted index sets: member_indices into the test set
and calib_indices into the calibration set.  Families are immutable
after construction.  Interval families are kept lazy because the full
enumeration is quadratic in n; the scan has a closed-form fast path for
them and only ever materializes the winning window.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FAMILY_KINDS = ("partition", "intervals", "balls", "explicit")


@dataclass(frozen=True)
class Region:
    id: int
    member_indices: tuple[int, ...]
    calib_indices: tuple[int, ...] = ()
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("member_indices", "calib_indices"):
            idx = getattr(self, name)
            if any(idx[i] >= idx[i + 1] for i in range(len(idx) - 1)):
                raise ValueError(f"{name} must be sorted and duplicate-free")
            if idx and idx[0] < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def cardinality(self) -> int:
        return len(self.member_indices)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "member_indices": list(self.member_indices),
            "calib_indices": list(self.calib_indices),
            "descriptor": self.descriptor,
        }

    @staticmethod
    def from_dict(d: dict) -> "Region":
        return Region(
            id=int(d["id"]),
            member_indices=tuple(int(i) for i in d["member_indices"]),
            calib_indices=tuple(int(i) for i in d.get("calib_indices", ())),
            descriptor=dict(d.get("descriptor", {})),
        )


class RegionFamily:
    """An explicit list of regions plus family-level metadata."""

    def __init__(self, regions: Iterable[Region], *, vc_dim: int, disjoint: bool = False,
                 kind: str = "explicit"):
        if kind not in FAMILY_KINDS:
            raise ValueError(f"unknown family kind {kind!r}")
        if vc_dim < 1:
            raise ValueError("vc_dim must be at least 1")
        self._regions = list(regions)
        self.vc_dim = int(vc_dim)
        self.disjoint = bool(disjoint)
        self.kind = kind
        if self.disjoint:
            seen: set[int] = set()
            for r in self._regions:
                members = set(r.member_indices)
                if seen & members:
                    raise ValueError("disjoint family has overlapping member sets")
                seen |= members

    @property
    def regions(self) -> list[Region]:
        return self._regions

    def __len__(self) -> int:
        return len(self.regions)

    def __iter__(self):
        return iter(self.regions)

    def regions_of_size(self, k: int) -> list[Region]:
        return [r for r in self.regions if r.cardinality == k]

    def sample_region_of_size(self, k: int, rng: np.random.Generator) -> Region:
        """One region drawn uniformly among those of cardinality k."""
        candidates = self.regions_of_size(k)
        if not candidates:
            raise ValueError(f"family has no region of cardinality {k}")
        return candidates[int(rng.integers(len(candidates)))]

    def to_manifest(self) -> dict:
        return {
            "kind": self.kind,
            "vc_dim": self.vc_dim,
            "disjoint": self.disjoint,
            "regions": [r.to_dict() for r in self.regions],
        }

    def save(self, path) -> None:
        with open(Path(path), "w", encoding="utf-8") as fh:
            json.dump(self.to_manifest(), fh)
            fh.write("\n")


class IntervalFamily(RegionFamily):
    """All contiguous index windows [i, i + len) with len in
    [min_size, max_size]; never materialized unless asked for.

    Windows are ordered by length ascending then start ascending; a
    region's id is its position in that order.
    """

    def __init__(self, n: int, min_size: int, max_size: int):
        if not (1 <= min_size <= max_size <= n):
            raise ValueError(
                f"need 1 <= min_size <= max_size <= n, got min={min_size} max={max_size} n={n}"
            )
        self.n = int(n)
        self.min_size = int(min_size)
        self.max_size = int(max_size)
        self.vc_dim = 2
        self.disjoint = False
        self.kind = "intervals"
        self._materialized: list[Region] | None = None

    def __len__(self) -> int:
        a, b, n = self.min_size, self.max_size, self.n
        return sum(n - length + 1 for length in range(a, b + 1))

    def id_of(self, length: int, start: int) -> int:
        a, n = self.min_size, self.n
        # windows of lengths a..length-1 precede this block
        before = (length - a) * (n + 1) - (length - 1 + a) * (length - a) // 2
        return before + start

    def region_at(self, length: int, start: int) -> Region:
        if not (self.min_size <= length <= self.max_size):
            raise ValueError(f"length {length} outside [{self.min_size}, {self.max_size}]")
        if not (0 <= start <= self.n - length):
            raise ValueError(f"start {start} out of range for length {length}")
        return Region(
            id=self.id_of(length, start),
            member_indices=tuple(range(start, start + length)),
            descriptor={"lo": start, "hi": start + length},
        )

    @property
    def regions(self) -> list[Region]:
        if self._materialized is None:
            self._materialized = [
                self.region_at(length, start)
                for length in range(self.min_size, self.max_size + 1)
                for start in range(self.n - length + 1)
            ]
        return self._materialized

    def regions_of_size(self, k: int) -> list[Region]:
        if not (self.min_size <= k <= self.max_size):
            return []
        return [self.region_at(k, s) for s in range(self.n - k + 1)]

    def sample_region_of_size(self, k: int, rng: np.random.Generator) -> Region:
        if not (self.min_size <= k <= self.max_size):
            raise ValueError(f"family has no region of cardinality {k}")
        return self.region_at(k, int(rng.integers(self.n - k + 1)))

    def to_manifest(self) -> dict:
        return {
            "kind": "intervals",
            "vc_dim": self.vc_dim,
            "disjoint": self.disjoint,
            "n": self.n,
            "min_size": self.min_size,
            "max_size": self.max_size,
        }


def partition_family(assignments: Sequence, calib_assignments: Sequence | None = None) -> RegionFamily:
    """One region per distinct group id; groups must be sortable.

    calib_assignments, when given, maps calibration points to the same
    group ids to fill calib_indices.
    """
    groups = sorted(set(assignments))
    regions = []
    for rid, g in enumerate(groups):
        members = tuple(i for i, a in enumerate(assignments) if a == g)
        calib = ()
        if calib_assignments is not None:
            calib = tuple(i for i, a in enumerate(calib_assignments) if a == g)
        regions.append(Region(id=rid, member_indices=members, calib_indices=calib,
                              descriptor={"group": g}))
    return RegionFamily(regions, vc_dim=1, disjoint=True, kind="partition")


def interval_family(n: int, min_size: int, max_size: int) -> IntervalFamily:
    """Every contiguous index window with size in [min_size, max_size]."""
    return IntervalFamily(n, min_size, max_size)


def ball_family(points, max_card: int) -> RegionFamily:
    """Nearest-neighbor balls: for each center point and each cardinality
    c in 1..max_card, the c points closest to the center (center
    included).  Distance ties break toward the smaller point index;
    duplicate member sets are dropped, keeping the first occurrence.

    Enumeration is a full per-center sort, O(n^2 log n); fine at desk
    scale (n <= 1e4).  Swap in a spatial index here for larger n.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n, p = pts.shape
    if max_card < 1:
        raise ValueError("max_card must be at least 1")
    r = min(max_card, n)
    regions: list[Region] = []
    seen: set[tuple[int, ...]] = set()
    for center in range(n):
        dists = np.sqrt(((pts - pts[center]) ** 2).sum(axis=1))
        order = np.lexsort((np.arange(n), dists))
        for c in range(1, r + 1):
            members = tuple(sorted(int(i) for i in order[:c]))
            if members in seen:
                continue
            seen.add(members)
            radius = float(dists[order[c - 1]])
            regions.append(
                Region(
                    id=len(regions),
                    member_indices=members,
                    descriptor={"center_index": center, "center": [float(v) for v in pts[center]],
                                "radius": radius},
                )
            )
    return RegionFamily(regions, vc_dim=p + 1, disjoint=False, kind="balls")


def explicit_family(member_sets: Sequence[Iterable[int]], *, vc_dim: int,
                    disjoint: bool = False,
                    calib_sets: Sequence[Iterable[int]] | None = None) -> RegionFamily:
    """Family from explicitly listed member index sets."""
    regions = []
    for rid, members in enumerate(member_sets):
        calib = tuple(sorted(set(calib_sets[rid]))) if calib_sets is not None else ()
        regions.append(Region(id=rid, member_indices=tuple(sorted(set(members))),
                              calib_indices=calib))
    return RegionFamily(regions, vc_dim=vc_dim, disjoint=disjoint, kind="explicit")


def bind_calibration(family: RegionFamily, calib_points) -> RegionFamily:
    """Fill calib_indices by applying each region's closed-ball predicate
    (center, radius = distance to the farthest member) to the
    calibration points.

    Only geometric families can be bound this way; partition and
    interval families must be built with explicit calibration
    assignments instead.
    """
    calib = np.asarray(calib_points, dtype=float)
    if calib.ndim == 1:
        calib = calib[:, None]
    bound: list[Region] = []
    for region in family.regions:
        desc = region.descriptor
        if "center" not in desc or "radius" not in desc:
            raise ValueError(
                f"family kind {family.kind!r} carries no ball geometry; supply explicit "
                "calibration assignments (partition_family/explicit_family) instead"
            )
        center = np.asarray(desc["center"], dtype=float)
        dists = np.sqrt(((calib - center) ** 2).sum(axis=1))
        inside = tuple(int(i) for i in np.nonzero(dists <= desc["radius"])[0])
        bound.append(Region(id=region.id, member_indices=region.member_indices,
                            calib_indices=inside, descriptor=desc))
    return RegionFamily(bound, vc_dim=family.vc_dim, disjoint=family.disjoint, kind=family.kind)


def load_family(path) -> RegionFamily:
    with open(Path(path), encoding="utf-8") as fh:
        manifest = json.load(fh)
    return family_from_manifest(manifest)


def family_from_manifest(manifest: dict) -> RegionFamily:
    kind = manifest.get("kind")
    if kind == "intervals" and "regions" not in manifest:
        return IntervalFamily(int(manifest["n"]), int(manifest["min_size"]),
                              int(manifest["max_size"]))
    regions = [Region.from_dict(d) for d in manifest["regions"]]
    fam = RegionFamily(regions, vc_dim=int(manifest["vc_dim"]),
                       disjoint=bool(manifest["disjoint"]),
                       kind=kind if kind in FAMILY_KINDS else "explicit")
    return fam
