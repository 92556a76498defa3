"""Analytic quasi-periodic potentials as finitely supported Fourier series.

A potential is stored as its coefficients ``V_k`` for ``|k| <= K_cut``.  Every
model satisfies three constraints checked at construction: zero mean
(``V_0 = 0``), reality (``V_{-k} = conj(V_k)``) and the decay law
``|V_k| <= exp(-rho |k|)``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lattice import BlockStructure, StructuralError, as_multi_index, cube_points
from ._rng import make_rng

MODEL_NAMES = ("separable-cosine", "two-cosine-surace", "random-analytic")

_SYM_TOL = 1e-14
_DECAY_RTOL = 1e-12


class InvariantError(ValueError):
    """A potential violates one of its defining constraints."""


class ConfigurationError(ValueError):
    """An unknown model name or an unusable parameter combination."""


@dataclass(frozen=True, eq=False)
class PotentialModel:
    """Fourier coefficients of a real, zero-mean, analytic potential on T^b.

    Parameters
    ----------
    bs : BlockStructure
    indices : (m, b) int array
        Multi-indices of the stored (non-zero) coefficients.
    values : (m,) complex array
    rho : float
        Decay rate certified by ``|V_k| <= exp(-rho |k|)``.
    K_cut : int
        Support radius in the sup-norm.
    exact : bool
        True when the coefficients are the whole potential (trigonometric
        polynomials).  False when they are a truncation of an analytic
        potential obeying the decay law, in which case :attr:`tail_bound`
        certifies the discarded part.
    """

    bs: BlockStructure
    indices: np.ndarray
    values: np.ndarray
    rho: float
    K_cut: int
    exact: bool = True
    name: str = "custom"
    _lookup: dict = field(init=False, repr=False)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, self.bs.b)
        val = np.asarray(self.values, dtype=complex).reshape(-1)
        if len(idx) != len(val):
            raise StructuralError("indices and values differ in length")
        keep = val != 0
        idx, val = idx[keep], val[keep]
        order = np.lexsort(idx.T[::-1]) if len(idx) else np.zeros(0, dtype=np.int64)
        idx, val = idx[order], val[order]
        idx.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "K_cut", int(self.K_cut))
        lookup = {tuple(k): v for k, v in zip(idx.tolist(), val.tolist())}
        if len(lookup) != len(idx):
            raise StructuralError("duplicate coefficient indices")
        object.__setattr__(self, "_lookup", lookup)
        self._validate()

    def _validate(self):
        if self.rho <= 0:
            raise InvariantError("decay rate rho must be positive")
        if self.K_cut < 1:
            raise InvariantError("K_cut must be a positive integer")
        zero = (0,) * self.bs.b
        if abs(self._lookup.get(zero, 0.0)) > _SYM_TOL:
            raise InvariantError("the zero-mode coefficient must vanish (zero-mean potential)")
        for k, v in self._lookup.items():
            partner = self._lookup.get(tuple(-x for x in k))
            if partner is None or abs(partner - np.conj(v)) > _SYM_TOL * max(1.0, abs(v)):
                raise InvariantError(f"coefficient at {k} lacks its conjugate partner (potential not real)")
        if len(self.indices):
            norms = np.max(np.abs(self.indices), axis=1)
            if np.any(norms > self.K_cut):
                raise InvariantError("coefficients must vanish beyond K_cut")
            bound = np.exp(-self.rho * norms)
            bad = np.abs(self.values) > bound * (1 + _DECAY_RTOL)
            if np.any(bad):
                k = tuple(self.indices[np.argmax(bad)])
                raise InvariantError(
                    f"|V_k| exceeds exp(-rho|k|) at k={k} for rho={self.rho}")

    @classmethod
    def from_dict(cls, bs, coefficients: dict, rho: float, K_cut: int | None = None,
                  exact: bool = True, name: str = "custom") -> "PotentialModel":
        bs = BlockStructure.coerce(bs)
        keys = [as_multi_index(k, bs) for k in coefficients]
        idx = np.vstack(keys) if keys else np.zeros((0, bs.b), dtype=np.int64)
        vals = np.array(list(coefficients.values()), dtype=complex)
        if K_cut is None:
            K_cut = max(1, int(np.max(np.abs(idx)))) if len(idx) else 1
        return cls(bs, idx, vals, rho, K_cut, exact, name)

    @classmethod
    def zero(cls, bs, rho: float = 0.5, K_cut: int = 1) -> "PotentialModel":
        """The empty potential (no coupling at all)."""
        bs = BlockStructure.coerce(bs)
        return cls(bs, np.zeros((0, bs.b), dtype=np.int64), np.zeros(0), rho, K_cut, True, "zero")

    @property
    def coefficients(self) -> dict:
        return dict(self._lookup)

    def coefficient(self, k) -> complex:
        return self._lookup.get(tuple(int(v) for v in as_multi_index(k)), 0.0)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def is_real(self) -> bool:
        """Whether all coefficients are real (then h is a real symmetric matrix)."""
        return bool(np.all(self.values.imag == 0))

    @property
    def l1_norm(self) -> float:
        """Sum of |V_k|; an upper bound for sup |V| used as the |V|_max proxy."""
        return float(np.sum(np.abs(self.values)))

    @property
    def tail_bound(self) -> float:
        """Bound on the discarded Fourier tail (zero for exact models)."""
        if self.exact:
            return 0.0
        return decay_tail_bound(self.rho, self.K_cut, self.bs.b)

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# blocks={','.join(map(str, self.bs.blocks))} rho={self.rho!r} "
                  f"K_cut={self.K_cut} exact={int(self.exact)} name={self.name}\n")
        for k, v in zip(self.indices.tolist(), self.values.tolist()):
            buf.write(" ".join(str(x) for x in k) + f" {v.real:.17g} {v.imag:.17g}\n")
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str, bs=None, rho: float | None = None,
                  K_cut: int | None = None) -> "PotentialModel":
        """Parse the ``k_1 ... k_b re im`` table; all invariants are re-checked."""
        meta = {}
        rows = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        key, val = tok.split("=", 1)
                        meta[key] = val
                continue
            parts = line.split()
            try:
                rows.append(([int(p) for p in parts[:-2]], complex(float(parts[-2]), float(parts[-1]))))
            except (ValueError, IndexError) as exc:
                raise ConfigurationError(f"potential table line {lineno}: {line!r}") from exc
        if bs is None:
            if "blocks" not in meta:
                raise ConfigurationError("block structure missing from potential table header")
            bs = tuple(int(x) for x in meta["blocks"].split(","))
        bs = BlockStructure.coerce(bs)
        if rho is None:
            if "rho" not in meta:
                raise ConfigurationError("rho missing from potential table header")
            rho = float(meta["rho"])
        if K_cut is None and "K_cut" in meta:
            K_cut = int(meta["K_cut"])
        for k, _ in rows:
            if len(k) != bs.b:
                raise StructuralError(f"row index {k} does not have b={bs.b} entries")
        idx = np.array([k for k, _ in rows], dtype=np.int64).reshape(-1, bs.b)
        vals = np.array([v for _, v in rows], dtype=complex)
        if K_cut is None:
            K_cut = max(1, int(np.max(np.abs(idx)))) if len(idx) else 1
        exact = bool(int(meta.get("exact", "1")))
        return cls(bs, idx, vals, rho, K_cut, exact, meta.get("name", "custom"))

    @classmethod
    def load(cls, path, **kwargs) -> "PotentialModel":
        return cls.from_text(Path(path).read_text(), **kwargs)


def decay_tail_bound(rho: float, K_cut: int, b: int) -> float:
    """``sum over |k| > K_cut of exp(-rho |k|)`` on Z^b.

    The shell ``|k| = m`` holds ``(2m+1)^b - (2m-1)^b`` points.
    """
    total = 0.0
    m = K_cut + 1
    while True:
        shell = (2 * m + 1) ** b - (2 * m - 1) ** b
        term = shell * math.exp(-rho * m)
        total += term
        # shell growth is polynomial, so once the terms shrink they keep shrinking
        if m > K_cut + 10 and term < 1e-17 * total and rho * m > b * math.log(2 * m + 1):
            return total
        m += 1


def from_named_model(name: str, bs, rho: float = 0.5, K_cut: int | None = None,
                     seed: int | None = None, amplitude: float = 1.0) -> PotentialModel:
    """Build one of the standard potentials.

    ``"separable-cosine"`` is ``sum_j cos(theta_j)`` over all ``b`` angles.
    ``"two-cosine-surace"`` is ``cos(theta_1) + cos(theta_2)`` with d=1, b=2,
    i.e. ``cos x + cos(theta + omega x)`` when the frequency is ``(1, omega)``.
    ``"random-analytic"`` draws each ``V_k`` uniformly from the disk of radius
    ``amplitude * exp(-rho |k|)`` and then symmetrizes; it needs ``seed`` and
    ``K_cut``.
    """
    bs = BlockStructure.coerce(bs)
    if name not in MODEL_NAMES:
        raise ConfigurationError(f"unknown potential model {name!r}; choose from {MODEL_NAMES}")
    if not 0 < amplitude <= 1:
        raise ConfigurationError("amplitude must lie in (0, 1]")
    if name in ("separable-cosine", "two-cosine-surace"):
        if name == "two-cosine-surace" and (bs.b != 2 or bs.d != 1):
            raise ConfigurationError("the two-cosine model lives on d=1, b=2")
        half = 0.5 * amplitude
        if half > math.exp(-rho) * (1 + _DECAY_RTOL):
            raise InvariantError(
                f"cosine coefficients {half} exceed exp(-rho)={math.exp(-rho):.6g} for rho={rho}")
        eye = np.eye(bs.b, dtype=np.int64)
        idx = np.vstack([eye, -eye])
        return PotentialModel(bs, idx, np.full(2 * bs.b, half, dtype=complex), rho, 1, True, name)

    if seed is None or K_cut is None:
        raise ConfigurationError("random-analytic needs both seed and K_cut")
    rng = make_rng(seed, stream=0)
    pts = cube_points(int(K_cut), bs.b)
    # one representative per +-k pair: first non-zero coordinate positive
    nz = pts != 0
    first = np.argmax(nz, axis=1)
    lead = pts[np.arange(len(pts)), first]
    half = pts[nz.any(axis=1) & (lead > 0)]
    radius = amplitude * np.exp(-rho * np.max(np.abs(half), axis=1))
    r = radius * np.sqrt(rng.random(len(half)))
    phase = np.exp(2j * np.pi * rng.random(len(half)))
    vals = r * phase
    idx = np.vstack([half, -half])
    return PotentialModel(bs, idx, np.concatenate([vals, np.conj(vals)]), rho, int(K_cut), False, name)


def evaluate(V: PotentialModel, theta) -> float | np.ndarray:
    """``V(theta) = sum_k V_k exp(i k . theta)`` for theta of shape (..., b)."""
    th = np.asarray(theta, dtype=float)
    if th.shape[-1] != V.bs.b:
        raise StructuralError(f"theta must have {V.bs.b} entries")
    if len(V) == 0:
        out = np.zeros(th.shape[:-1])
        return float(out) if out.ndim == 0 else out
    phase = th @ V.indices.T.astype(float)
    total = np.exp(1j * phase) @ V.values
    scale = max(1.0, V.l1_norm)
    if np.any(np.abs(total.imag) > 1e-12 * len(V) * scale):
        raise InvariantError("evaluated potential has a non-negligible imaginary part")
    real = np.real(total)
    return float(real) if np.ndim(real) == 0 else real


def verify_decay(V: PotentialModel, rho: float) -> tuple[bool, tuple | None]:
    """Check ``|V_k| <= exp(-rho|k|)`` for every stored coefficient.

    Returns the verdict and the index maximizing ``|V_k| exp(rho|k|)``
    (ties go to the lexicographically largest index), or ``None`` for the
    empty potential.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    if len(V) == 0:
        return True, None
    norms = np.max(np.abs(V.indices), axis=1)
    ratio = np.abs(V.values) * np.exp(rho * norms)
    rev = np.arange(len(V))[::-1]
    worst = rev[np.argmax(ratio[rev])]
    return bool(np.all(ratio <= 1 + _DECAY_RTOL)), tuple(int(x) for x in V.indices[worst])
