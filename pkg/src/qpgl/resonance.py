"""Resonance sets of the free symbol, their sections, and the double-resonance scan.

The first-step resonance set at scale N is

    X_N = {Theta : |sum_i (Theta_i + k_i . omega_i)^2 - E| < delta for some |k| <= N}.

Its one-dimensional sections are finite unions of open intervals with
closed-form endpoints, so their measure is computed exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import ndimage

from ._rng import make_rng
from .dual_green import assemble, diagonal_symbol
from .lattice import BlockStructure, Region, StructuralError, as_frequency, block_dot, cube_points
from .potential import ConfigurationError, PotentialModel

#: constant replacing the unspecified absolute constant in the section bound
SECTION_CONSTANT = 4.0


class PreconditionError(ValueError):
    """The inputs fall outside the domain where an operation is meaningful."""


@dataclass(frozen=True)
class ResonanceSpec:
    N: int
    delta: float
    E: float
    omega: np.ndarray
    bs: BlockStructure

    def __post_init__(self):
        if self.N < 0:
            raise ValueError("N must be non-negative")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        object.__setattr__(self, "bs", BlockStructure.coerce(self.bs))
        object.__setattr__(self, "omega", as_frequency(self.omega, self.bs))
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "E", float(self.E))

    def indices(self) -> np.ndarray:
        return cube_points(self.N, self.bs.b)


def in_resonance(Theta, spec: ResonanceSpec) -> tuple[bool, tuple | None]:
    """Whether ``Theta`` lies in X_N, with the lexicographically first witness k."""
    ks = spec.indices()
    hit = np.abs(diagonal_symbol(Theta, ks, spec.omega, spec.bs) - spec.E) < spec.delta
    if not np.any(hit):
        return False, None
    return True, tuple(int(v) for v in ks[np.argmax(hit)])


def resonance_mask(Thetas, spec: ResonanceSpec) -> np.ndarray:
    """Vectorized membership in X_N for an (m, d) array of momenta."""
    Thetas = np.asarray(Thetas, dtype=float).reshape(-1, spec.bs.d)
    shifts = block_dot(spec.indices(), spec.omega, spec.bs)  # (K, d)
    out = np.zeros(len(Thetas), dtype=bool)
    step = max(1, 4_000_000 // max(len(shifts), 1))
    for lo in range(0, len(Thetas), step):
        sym = np.sum((Thetas[lo:lo + step, None, :] + shifts[None]) ** 2, axis=-1)
        out[lo:lo + step] = np.any(np.abs(sym - spec.E) < spec.delta, axis=1)
    return out


def _merge(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Union of open intervals (lo_i, hi_i) as a sorted (m, 2) array.

    Intervals that only touch at an endpoint stay separate, since the shared
    point is not covered.
    """
    if lo.size == 0:
        return np.zeros((0, 2))
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    reach = np.maximum.accumulate(hi)
    start = np.ones(lo.size, dtype=bool)
    start[1:] = lo[1:] >= reach[:-1]
    groups = np.cumsum(start) - 1
    out_lo = lo[start]
    out_hi = np.full(out_lo.size, -np.inf)
    np.maximum.at(out_hi, groups, hi)
    out_hi = np.maximum(out_hi, out_lo)
    return np.column_stack([out_lo, out_hi])


def section_intervals(j: int, Theta_rest, spec: ResonanceSpec) -> np.ndarray:
    """Merged open intervals making up ``{Theta_j : (Theta_j, Theta_rest) in X_N}``.

    ``j`` is 0-based and ``Theta_rest`` holds the other d-1 components in order.
    """
    bs = spec.bs
    if not 0 <= j < bs.d:
        raise StructuralError(f"coordinate index j={j} outside 0..{bs.d - 1}")
    rest = np.atleast_1d(np.asarray(Theta_rest, dtype=float)).reshape(-1)
    if rest.size != bs.d - 1:
        raise StructuralError(f"Theta_rest must have d-1={bs.d - 1} entries")
    shifts = block_dot(spec.indices(), spec.omega, bs)  # (K, d)
    others = np.delete(shifts, j, axis=1) + rest
    s = spec.E - np.sum(others * others, axis=1)
    off = shifts[:, j]
    d = spec.delta
    live = s + d > 0
    s, off = s[live], off[live]
    top = np.sqrt(s + d)
    inner = np.sqrt(np.clip(s - d, 0.0, None))
    single = s - d <= 0
    # u = Theta_j + k_j . omega_j ranges over (-top, -inner) U (inner, top), or (-top, top)
    lo = np.concatenate([-top[single], -top[~single], inner[~single]])
    hi = np.concatenate([top[single], -inner[~single], top[~single]])
    shift = np.concatenate([off[single], off[~single], off[~single]])
    return _merge(lo - shift, hi - shift)


def section_measure(j: int, Theta_rest, spec: ResonanceSpec) -> float:
    """Exact Lebesgue measure of a one-dimensional section of X_N."""
    iv = section_intervals(j, Theta_rest, spec)
    return float(np.sum(iv[:, 1] - iv[:, 0]))


def section_bound(spec: ResonanceSpec, C: float = SECTION_CONSTANT) -> float:
    """``C (2N+1)^b sqrt(delta)``."""
    return C * (2 * spec.N + 1) ** spec.bs.b * math.sqrt(spec.delta)


def in_intervals(x, intervals: np.ndarray) -> np.ndarray:
    """Membership of each x in a union of sorted, disjoint open intervals."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if len(intervals) == 0:
        return np.zeros(x.shape, dtype=bool)
    pos = np.searchsorted(intervals[:, 0], x, side="left") - 1
    ok = pos >= 0
    posc = np.clip(pos, 0, None)
    return ok & (x > intervals[posc, 0]) & (x < intervals[posc, 1])


def first_step_delta(N: int, c1: float, b: int, C: float = SECTION_CONSTANT) -> float:
    """``C^-2 (2N+1)^(-2b) exp(-2 N^c1)``."""
    if N < 1:
        raise ValueError("N must be at least 1")
    if not 0 < c1 < 0.25:
        raise ValueError("c1 must lie in (0, 1/4)")
    if C <= 0:
        raise ValueError("C must be positive")
    return C ** -2 * float(2 * N + 1) ** (-2 * b) * math.exp(-2.0 * N ** c1)


def first_step_coupling(N: int, delta: float, b: int) -> float:
    """Largest coupling allowed by the perturbative first step, ``delta / (2 (2N+1)^b)``."""
    return delta / (2.0 * (2 * N + 1) ** b)


@dataclass(frozen=True)
class ScaleSchedule:
    """Constants driving the scale induction.

    ``n1`` / ``n2`` optionally override the formulas for the subordinate
    scales: either an integer used at every N or a mapping ``N -> value``.
    The formulas only produce ``N1 < N`` at astronomically large N, so any
    desk-scale run needs an override.
    """

    c1: float = 0.2
    c2: float = 0.3
    c3: float = 0.6
    c4: float = 0.9
    N0: int = 3
    C: float = SECTION_CONSTANT
    n1: int | dict | None = None
    n2: int | dict | None = None

    def __post_init__(self):
        if not 0 < self.c1 < 0.25:
            raise ConfigurationError("c1 must satisfy 0 < c1 < 1/4")
        if not 0 < self.c2 < self.c3 < self.c4 < 1:
            raise ConfigurationError("need 0 < c2 < c3 < c4 < 1")
        if self.N0 < 1:
            raise ConfigurationError("N0 must be a positive integer")
        if self.C <= 0:
            raise ConfigurationError("C must be positive")

    @staticmethod
    def _override(spec, N):
        if spec is None:
            return None
        if isinstance(spec, dict):
            key = N if N in spec else str(N)
            return int(spec[key]) if key in spec else None
        return int(spec)

    def energy_halfwidth(self, eps: float) -> float:
        """Half-width ``|log eps|^(1/(2 c1))`` of the admissible energy window."""
        if not 0 < eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        return abs(math.log(eps)) ** (1.0 / (2.0 * self.c1))

    def N1(self, N: int) -> int:
        v = self._override(self.n1, N)
        if v is not None:
            return v
        return max(1, math.ceil(math.log(N) ** (2.0 / self.c1))) if N > 1 else 1

    def N2(self, N: int) -> int:
        v = self._override(self.n2, N)
        if v is not None:
            return v
        return math.ceil(self.N1(N) ** (2.0 / self.c1))

    def delta(self, N: int, b: int) -> float:
        return first_step_delta(N, self.c1, b, self.C)

    def check_scales(self, Ns) -> None:
        """Raise unless ``N1(N) < N`` for every scheduled N >= N0."""
        bad = [(N, self.N1(N)) for N in Ns if N >= self.N0 and not self.N1(N) < N]
        if bad:
            raise ConfigurationError(
                "subordinate scale N1(N) must be smaller than N; failing (N, N1): "
                + ", ".join(f"({a}, {c})" for a, c in bad)
                + "; set schedule.n1 to override")

    def candidate_range(self, N: int) -> range:
        """Integers M with ``N^c3 / 10 < M < 10 N^c4``."""
        lo = math.floor(N ** self.c3 / 10.0) + 1
        hi = math.ceil(10.0 * N ** self.c4) - 1
        return range(lo, hi + 1)

    def flags(self) -> dict:
        return {
            "c1_below_quarter": self.c1 < 0.25,
            "c2_c3_c4_ordered": 0 < self.c2 < self.c3 < self.c4 < 1,
            "c1_below_c3_over_10": self.c1 < self.c3 / 10.0,
        }


@dataclass
class ScanRecord:
    M: int
    annulus_size: int
    failures: int
    first_failure_k: tuple | None


@dataclass
class ScanResult:
    M: int | None
    N1: int
    delta: float
    records: list[ScanRecord]

    @property
    def success(self) -> bool:
        return self.M is not None


def _sup_norms(points: np.ndarray) -> np.ndarray:
    return np.max(np.abs(points), axis=1)


def double_resonance_scan(Theta, E, omega, N: int, sched: ScaleSchedule, bs,
                          N1: int | None = None, delta: float | None = None,
                          eps: float | None = None) -> ScanResult:
    """Look for an annulus ``M^(1/(10b)) < |k| <= M`` free of shifted resonances.

    A shift k fails when ``Theta + k omega`` lies in X_{N1}, the first-step
    resonance set with width ``delta`` (default: the first-step width at N1).
    Candidates ``N^c3/10 < M < 10 N^c4`` are tested in increasing order and
    the first one with a non-empty annulus and no failures is returned; every
    candidate gets a record.
    When ``eps`` is given, E must lie in the admissible energy window.
    """
    bs = BlockStructure.coerce(bs)
    omega = as_frequency(omega, bs)
    Theta = np.atleast_1d(np.asarray(Theta, dtype=float))
    b = bs.b
    if np.max(np.abs(Theta)) > 100 * b * N * N:
        raise PreconditionError("|Theta| exceeds 100 b N^2")
    if eps is not None and abs(E) > sched.energy_halfwidth(eps):
        raise PreconditionError("E lies outside the admissible energy window")
    cands = sched.candidate_range(N)
    if len(cands) == 0:
        raise ConfigurationError(f"no candidate M for N={N}, c3={sched.c3}, c4={sched.c4}")
    N1 = sched.N1(N) if N1 is None else int(N1)
    delta = sched.delta(N1, b) if delta is None else float(delta)
    Mmax = cands[-1]
    R = Mmax + N1
    pts = cube_points(R, b)
    resonant = np.abs(diagonal_symbol(Theta, pts, omega, bs) - E) < delta
    shape = (2 * R + 1,) * b
    grid = resonant.reshape(shape)
    # k fails iff some m with |m| <= N1 has k + m resonant
    fail = ndimage.maximum_filter(grid.astype(np.uint8), size=2 * N1 + 1, mode="constant", cval=0)
    inner = (slice(N1, N1 + 2 * Mmax + 1),) * b
    fail = fail[inner].reshape(-1).astype(bool)
    kpts = cube_points(Mmax, b)
    shell = _sup_norms(kpts)
    per_shell = np.bincount(shell[fail], minlength=Mmax + 1)
    cum = np.concatenate([[0], np.cumsum(per_shell)])
    # lexicographically first failing k in each shell (flat order is lexicographic)
    first_flat = np.full(Mmax + 1, np.iinfo(np.int64).max, dtype=np.int64)
    idx = np.nonzero(fail)[0]
    np.minimum.at(first_flat, shell[idx], idx)
    records, found = [], None
    for M in cands:
        r = math.floor(M ** (1.0 / (10 * b)))
        if r >= M:
            nfail, size, first = 0, 0, None
        else:
            nfail = int(cum[M + 1] - cum[r + 1])
            size = (2 * M + 1) ** b - (2 * r + 1) ** b
            first = None
            if nfail:
                flat = int(first_flat[r + 1:M + 1].min())
                first = tuple(int(v) for v in kpts[flat])
        records.append(ScanRecord(M, size, nfail, first))
        # an empty annulus certifies nothing
        if found is None and size > 0 and nfail == 0:
            found = M
    return ScanResult(found, N1, delta, records)


def verify_annulus(Theta, E, omega, bs, M: int, N1: int, delta: float) -> bool:
    """Independent recheck of one annulus; an empty annulus does not pass."""
    bs = BlockStructure.coerce(bs)
    b = bs.b
    r = math.floor(M ** (1.0 / (10 * b)))
    spec = ResonanceSpec(N1, delta, E, omega, bs)
    ks = cube_points(M, b)
    ks = ks[_sup_norms(ks) > r]
    if len(ks) == 0:
        return False
    shifts = block_dot(ks, spec.omega, bs)
    return not np.any(resonance_mask(np.atleast_1d(Theta) + shifts, spec))


@dataclass
class FrequencyDiagnostic:
    omegas: np.ndarray
    N: int
    results: list[ScanResult]

    @property
    def success_rate(self) -> float:
        if not self.results:
            return float("nan")
        return sum(r.success for r in self.results) / len(self.results)


def sample_frequencies(bs, count: int, seed: int, offset: int = 0) -> np.ndarray:
    """Uniform frequencies in [0, 2 pi]^b, one counter-based stream per sample."""
    b = BlockStructure.coerce(bs).b
    return np.array([make_rng(seed, offset + i).uniform(0.0, 2 * np.pi, size=b)
                     for i in range(count)]).reshape(count, b)


def frequency_diagnostic(Theta, E, N: int, sched: ScaleSchedule, bs, omegas,
                         N1: int | None = None, delta: float | None = None,
                         eps: float | None = None) -> FrequencyDiagnostic:
    """Run the double-resonance scan for every frequency in ``omegas``."""
    omegas = np.asarray(omegas, dtype=float)
    results = [double_resonance_scan(Theta, E, w, N, sched, bs, N1=N1, delta=delta, eps=eps)
               for w in omegas]
    return FrequencyDiagnostic(omegas, N, results)


def no_resonance_far_field(Theta, E, omega, N: int, y, I, bs, radius: int | None = None) -> dict:
    """Check that a large shift on the coordinates in ``I`` rules out resonances.

    ``y`` holds one shift per entry of ``I`` (0-based coordinate indices).  The
    claim applies when ``|y| > 200 b N^2``; then every k with ``|k| <= radius``
    (default N) must give ``symbol - E >= N^4``.
    """
    bs = BlockStructure.coerce(bs)
    omega = as_frequency(omega, bs)
    Theta = np.atleast_1d(np.asarray(Theta, dtype=float)).copy()
    y = np.atleast_1d(np.asarray(y, dtype=float))
    I = list(np.atleast_1d(I).astype(int))
    if len(I) != len(y):
        raise StructuralError("y needs one entry per coordinate in I")
    b = bs.b
    if np.max(np.abs(Theta)) > 100 * b * N * N or abs(E) > N:
        raise PreconditionError("need |Theta| <= 100 b N^2 and |E| <= N")
    out = {"applicable": bool(np.max(np.abs(y)) > 200 * b * N * N), "holds": None,
           "witness": None, "min_margin": None}
    if not out["applicable"]:
        return out
    Theta[I] += y
    ks = cube_points(N if radius is None else radius, b)
    margin = diagonal_symbol(Theta, ks, omega, bs) - E - float(N) ** 4
    worst = int(np.argmin(margin))
    out["min_margin"] = float(margin[worst])
    out["holds"] = bool(margin[worst] >= 0)
    if not out["holds"]:
        out["witness"] = tuple(int(v) for v in ks[np.argmax(margin < 0)])
    return out


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


@dataclass
class CartanEstimate:
    estimate: float
    ci: tuple[float, float]
    interval_length: float
    bad: int
    samples: int
    threshold: float  # exp(sqrt(N_tilde))
    target: float  # exp(-N_tilde^(1/3))
    probes: list = field(repr=False, default_factory=list)
    hypotheses: dict = field(default_factory=dict)

    @property
    def within_target(self) -> bool:
        """Whether the target lies at or above the lower confidence limit."""
        return self.ci[0] <= self.target


def cartan_probe(Lam: Region, Lam_bar: Region, Theta, j: int, E: float, omega, eps: float,
                 V: PotentialModel, N_tilde: int, samples: int, seed: int, N1: int,
                 rho: float | None = None, sing_tol: float | None = None) -> CartanEstimate:
    """Monte-Carlo estimate of the set of y near Theta_j where ``||G_Lam||`` is large.

    y is uniform in ``|y - Theta_j| <= exp(-10 rho N1)``; a sample is bad when
    ``||G_Lam(E; (y, Theta_rest))|| >= exp(sqrt(N_tilde))`` or the matrix is
    numerically singular.
    """
    bs = V.bs
    if not Lam_bar.issubset(Lam):
        raise StructuralError("Lam_bar must be contained in Lam")
    limit = 4 * N_tilde ** (1.0 / (10 * bs.b))
    if Lam_bar.diam() > limit:
        raise StructuralError(f"diam(Lam_bar)={Lam_bar.diam()} exceeds 4 N_tilde^(1/(10b))={limit:.4g}")
    rho = V.rho if rho is None else rho
    Theta = np.atleast_1d(np.asarray(Theta, dtype=float))
    half = math.exp(-10.0 * rho * N1)
    ys = make_rng(seed, 0).uniform(Theta[j] - half, Theta[j] + half, size=samples)
    h = assemble(Lam, Theta, omega, eps, V).matrix.copy()
    diag_idx = np.diag_indices_from(h)
    threshold = math.exp(math.sqrt(N_tilde))
    probes, bad = [], 0
    for y in ys:
        th = Theta.copy()
        th[j] = y
        h[diag_idx] = diagonal_symbol(th, Lam.points, omega, bs) - E
        sv = np.abs(scipy.linalg.eigvalsh(h))
        smin = float(sv.min())
        tol = sing_tol if sing_tol is not None else 1e-12 * float(sv.max())
        norm = math.inf if smin <= tol else 1.0 / smin
        is_bad = norm >= threshold
        bad += is_bad
        probes.append((float(y), norm, bool(is_bad)))
    length = 2.0 * half
    lo, hi = wilson_interval(bad, samples)
    hyp = {
        "Lam_bar_subset": True,
        "Lam_bar_diameter_ok": True,
        "N_tilde": N_tilde,
        "N1": N1,
        "rho": rho,
        "Theta_j_within_1000bN2": None,  # N is not known here; left to the caller
    }
    return CartanEstimate(bad / samples * length if samples else 0.0, (lo * length, hi * length),
                          length, bad, samples, threshold, math.exp(-N_tilde ** (1.0 / 3.0)),
                          probes, hyp)
