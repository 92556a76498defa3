"""Blocked multi-index geometry on Z^b.

A point of Z^b is split into ``d`` blocks of sizes ``b_1, ..., b_d``; the
frequency vector on [0, 2pi]^b is split the same way.  All distances use
the sup-norm ``|k| = max |k_ij|``.

Regions are finite point sets kept in lexicographic order of the flat
b-tuple.  That order fixes the row/column order of every matrix built on
a region.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi

# Restriction tags for elementary regions.  "full" is accepted as an alias
# of "none" so config files can spell an unrestricted coordinate either way.
TAG_NONE = "none"
TAG_NEG = "neg"  # remove n < 0 (relative to the center)
TAG_POS = "pos"  # remove n > 0
_TAG_ALIASES = {"none": TAG_NONE, "full": TAG_NONE, "neg": TAG_NEG, "pos": TAG_POS}

# "axes": every tagged coordinate is restricted to its kept half-line, so the
# region is a sub-box of the cube.  "orthant": only the points lying in all
# tagged half-lines at once are removed (a corner wedge).
REMOVAL_MODES = ("axes", "orthant")


class StructuralError(ValueError):
    """Shapes or geometric preconditions do not fit together."""


@dataclass(frozen=True)
class BlockStructure:
    """Block sizes ``(b_1, ..., b_d)`` of Z^b = Z^{b_1} x ... x Z^{b_d}."""

    blocks: tuple[int, ...]

    def __post_init__(self):
        blocks = tuple(int(v) for v in self.blocks)
        if not blocks:
            raise StructuralError("at least one block is required")
        if any(v < 1 for v in blocks):
            raise StructuralError(f"block sizes must be positive, got {blocks}")
        object.__setattr__(self, "blocks", blocks)

    @property
    def d(self) -> int:
        return len(self.blocks)

    @property
    def b(self) -> int:
        return sum(self.blocks)

    @property
    def standing_assumption(self) -> bool:
        """Whether ``b > d`` holds.  Recorded, never enforced."""
        return self.b > self.d

    @property
    def owner(self) -> np.ndarray:
        """Block number of each of the ``b`` flat coordinates."""
        return np.repeat(np.arange(self.d), self.blocks)

    @property
    def projector(self) -> np.ndarray:
        """(b, d) 0/1 matrix summing each block."""
        p = np.zeros((self.b, self.d))
        p[np.arange(self.b), self.owner] = 1.0
        return p

    def slices(self) -> list[slice]:
        edges = np.concatenate([[0], np.cumsum(self.blocks)])
        return [slice(int(lo), int(hi)) for lo, hi in zip(edges[:-1], edges[1:])]

    def split(self, flat: Sequence) -> list[np.ndarray]:
        flat = np.asarray(flat)
        if flat.shape[-1] != self.b:
            raise StructuralError(f"expected {self.b} entries, got {flat.shape[-1]}")
        return [flat[..., s] for s in self.slices()]

    @classmethod
    def coerce(cls, value) -> "BlockStructure":
        if isinstance(value, BlockStructure):
            return value
        if isinstance(value, (int, np.integer)):
            return cls((int(value),))
        return cls(tuple(value))


def as_multi_index(k, bs: BlockStructure | None = None) -> np.ndarray:
    """Flatten a (possibly nested) multi-index into an int64 vector."""
    if isinstance(k, np.ndarray):
        arr = k.astype(np.int64, copy=False).reshape(-1)
    else:
        arr = np.asarray(list(_flatten(k)), dtype=np.int64)
    if bs is not None and arr.size != bs.b:
        raise StructuralError(f"multi-index has {arr.size} entries, expected b={bs.b}")
    return arr


def _flatten(obj):
    if isinstance(obj, (list, tuple)):
        for item in obj:
            yield from _flatten(item)
    elif isinstance(obj, np.ndarray):
        yield from obj.reshape(-1).tolist()
    else:
        yield obj


def as_frequency(omega, bs: BlockStructure | None = None) -> np.ndarray:
    """Flatten and validate a frequency vector in [0, 2pi]^b."""
    arr = np.asarray(list(_flatten(omega)), dtype=float)
    if bs is not None and arr.size != bs.b:
        raise StructuralError(f"frequency has {arr.size} entries, expected b={bs.b}")
    if np.any(arr < 0.0) or np.any(arr > TWO_PI):
        raise ValueError(f"frequency entries must lie in [0, 2pi], got {arr}")
    return arr


def sup_norm(k) -> int | np.ndarray:
    """Sup-norm of one multi-index or of each row of an (n, b) array."""
    arr = np.asarray(k) if isinstance(k, np.ndarray) else as_multi_index(k)
    if arr.ndim <= 1:
        return int(np.max(np.abs(arr))) if arr.size else 0
    return np.max(np.abs(arr), axis=-1)


def block_dot(k, omega, bs: BlockStructure) -> np.ndarray:
    """Blockwise inner products ``(k_1 . omega_1, ..., k_d . omega_d)``.

    ``k`` may be a single multi-index or an (n, b) array; the result then
    has shape (d,) or (n, d).
    """
    omega = np.asarray(omega, dtype=float).reshape(-1)
    if omega.size != bs.b:
        raise StructuralError(f"frequency has {omega.size} entries, expected b={bs.b}")
    karr = np.asarray(k) if isinstance(k, np.ndarray) else as_multi_index(k)
    if karr.shape[-1] != bs.b:
        raise StructuralError(f"multi-index has {karr.shape[-1]} entries, expected b={bs.b}")
    return (karr * omega) @ bs.projector


@dataclass(frozen=True)
class RegionDescriptor:
    """An elementary region: ``center + Q_N`` with optional half-line removals.

    Either every tag is ``"none"`` (the full cube) or at least two tags are
    restrictions.  Restrictions are taken relative to ``center``.
    """

    center: tuple[int, ...]
    N: int
    tags: tuple[str, ...]
    removal: str = "axes"

    def __post_init__(self):
        center = tuple(int(c) for c in as_multi_index(self.center))
        tags = tuple(_TAG_ALIASES.get(str(t).lower(), None) or _bad_tag(t) for t in self.tags)
        if len(tags) != len(center):
            raise StructuralError("center and tags must have the same length b")
        if int(self.N) < 0:
            raise ValueError("region size N must be non-negative")
        restricted = sum(t != TAG_NONE for t in tags)
        if restricted == 1:
            raise StructuralError("an elementary region restricts zero or at least two coordinates")
        if self.removal not in REMOVAL_MODES:
            raise ValueError(f"removal must be one of {REMOVAL_MODES}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "tags", tags)
        object.__setattr__(self, "N", int(self.N))

    @property
    def b(self) -> int:
        return len(self.center)

    @property
    def is_full(self) -> bool:
        return all(t == TAG_NONE for t in self.tags)

    @classmethod
    def cube(cls, N: int, b: int, center=None) -> "RegionDescriptor":
        center = (0,) * b if center is None else center
        return cls(center, N, (TAG_NONE,) * b)

    def translate(self, shift) -> "RegionDescriptor":
        shift = as_multi_index(shift)
        return RegionDescriptor(tuple(np.asarray(self.center) + shift), self.N, self.tags, self.removal)


def _bad_tag(tag):
    raise ValueError(f"unknown restriction tag {tag!r}; use one of {sorted(_TAG_ALIASES)}")


def _lex_sorted_unique(points: np.ndarray) -> np.ndarray:
    if len(points) == 0:
        return points.reshape(0, points.shape[-1] if points.ndim == 2 else 0)
    return np.unique(points, axis=0)  # np.unique sorts rows lexicographically


@dataclass(frozen=True, eq=False)
class Region:
    """A finite set of lattice points, sorted lexicographically."""

    points: np.ndarray
    _index: dict = field(init=False, repr=False, compare=False)
    _lo: np.ndarray = field(init=False, repr=False, compare=False)
    _span: np.ndarray = field(init=False, repr=False, compare=False)
    _strides: np.ndarray = field(init=False, repr=False, compare=False)
    _codes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64)
        if pts.ndim != 2:
            raise StructuralError("region points must form an (n, b) array")
        pts = _lex_sorted_unique(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_index", {tuple(p): i for i, p in enumerate(pts.tolist())})
        # mixed-radix codes over the bounding box; lexicographic order == code order
        if len(pts):
            lo = pts.min(axis=0)
            span = pts.max(axis=0) - lo + 1
        else:
            lo = np.zeros(pts.shape[1], dtype=np.int64)
            span = np.ones(pts.shape[1], dtype=np.int64)
        strides = np.concatenate([np.cumprod(span[::-1])[::-1][1:], [1]]).astype(np.int64)
        object.__setattr__(self, "_lo", lo)
        object.__setattr__(self, "_span", span)
        object.__setattr__(self, "_strides", strides)
        object.__setattr__(self, "_codes", (pts - lo) @ strides if len(pts) else np.zeros(0, np.int64))

    @classmethod
    def from_points(cls, points: Iterable, b: int | None = None) -> "Region":
        rows = [as_multi_index(p) for p in points]
        if not rows:
            if b is None:
                raise StructuralError("cannot infer b for an empty region")
            return cls(np.zeros((0, b), dtype=np.int64))
        return cls(np.vstack(rows))

    @property
    def b(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(tuple(p) for p in self.points.tolist())

    def __contains__(self, k) -> bool:
        return tuple(int(v) for v in as_multi_index(k)) in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, Region) and np.array_equal(self.points, other.points)

    def __hash__(self) -> int:
        return hash(self.points.tobytes())

    def index_of(self, k) -> int:
        """Row index of ``k``; raises KeyError if absent."""
        return self._index[tuple(int(v) for v in as_multi_index(k))]

    def lookup(self, pts: np.ndarray) -> np.ndarray:
        """Row indices of each row of ``pts`` (-1 where absent)."""
        pts = np.asarray(pts, dtype=np.int64).reshape(-1, self.b)
        out = np.full(len(pts), -1, dtype=np.int64)
        if len(self) == 0 or len(pts) == 0:
            return out
        rel = pts - self._lo
        inside = np.all((rel >= 0) & (rel < self._span), axis=1)
        codes = rel[inside] @ self._strides
        pos = np.searchsorted(self._codes, codes)
        pos = np.minimum(pos, len(self._codes) - 1)
        hit = self._codes[pos] == codes
        found = np.where(hit, pos, -1)
        out[inside] = found
        return out

    def diam(self) -> int:
        """Sup-norm diameter.  For the sup-norm this is the widest coordinate span."""
        if len(self) == 0:
            return 0
        return int(np.max(self.points.max(axis=0) - self.points.min(axis=0)))

    def dist(self, m) -> float:
        """Sup-norm distance from ``m`` to the region (inf when empty)."""
        if len(self) == 0:
            return float("inf")
        m = as_multi_index(m)
        return int(np.min(np.max(np.abs(self.points - m), axis=1)))

    def distances(self) -> np.ndarray:
        """Matrix of pairwise sup-norm distances, in region order."""
        diff = np.abs(self.points[:, None, :] - self.points[None, :, :])
        return diff.max(axis=2)

    def translate(self, shift) -> "Region":
        return Region(self.points + as_multi_index(shift, None))

    def difference(self, other: "Region") -> "Region":
        keep = other.lookup(self.points) < 0
        return Region(self.points[keep])

    def union(self, other: "Region") -> "Region":
        return Region(np.vstack([self.points, other.points]))

    def issubset(self, other: "Region") -> bool:
        return bool(np.all(other.lookup(self.points) >= 0))

    def collar(self, radius: int) -> "Region":
        """Points outside the region within sup-distance ``radius`` of it."""
        if radius <= 0 or len(self) == 0:
            return Region(np.zeros((0, self.b), dtype=np.int64))
        offsets = cube_points(radius, self.b)
        grown = (self.points[:, None, :] + offsets[None, :, :]).reshape(-1, self.b)
        grown = Region(grown)
        return grown.difference(self)

    def ball(self, center, radius: int) -> "Region":
        """Points of the region within sup-distance ``radius`` of ``center``."""
        c = as_multi_index(center)
        keep = np.max(np.abs(self.points - c), axis=1) <= radius
        return Region(self.points[keep])


def cube_points(N: int, b: int, center=None) -> np.ndarray:
    """All points of ``center + [-N, N]^b`` in lexicographic order."""
    axis = np.arange(-N, N + 1, dtype=np.int64)
    grid = np.stack(np.meshgrid(*([axis] * b), indexing="ij"), axis=-1).reshape(-1, b)
    if center is not None:
        grid = grid + as_multi_index(center)
    return grid


def enumerate_region(desc: RegionDescriptor) -> Region:
    """Materialize an elementary region (or a translate of one)."""
    rel = cube_points(desc.N, desc.b)
    if not desc.is_full:
        hits = np.zeros(rel.shape, dtype=bool)
        for j, tag in enumerate(desc.tags):
            if tag == TAG_NEG:
                hits[:, j] = rel[:, j] < 0
            elif tag == TAG_POS:
                hits[:, j] = rel[:, j] > 0
        tagged = np.array([t != TAG_NONE for t in desc.tags])
        if desc.removal == "axes":
            drop = hits.any(axis=1)
        else:
            drop = hits[:, tagged].all(axis=1)
        rel = rel[~drop]
    return Region(rel + np.asarray(desc.center, dtype=np.int64))


def elementary_regions_at_scale(N: int, bs: BlockStructure | int, removal: str = "axes"
                                ) -> list[RegionDescriptor]:
    """All elementary regions of size ``N`` centered at the origin.

    The full cube comes first, then every restriction pattern with at least
    two tagged coordinates in itertools order; there are ``3^b - 2b`` in all.
    """
    if N < 0:
        raise ValueError("N must be non-negative")
    b = BlockStructure.coerce(bs).b
    center = (0,) * b
    out = [RegionDescriptor(center, N, (TAG_NONE,) * b, removal)]
    for tags in itertools.product((TAG_NONE, TAG_NEG, TAG_POS), repeat=b):
        if sum(t != TAG_NONE for t in tags) >= 2:
            out.append(RegionDescriptor(center, N, tags, removal))
    return out


def cube(N: int, b: int, center=None) -> Region:
    """The full cube ``center + [-N, N]^b`` as a region."""
    return Region(cube_points(N, b, center))
