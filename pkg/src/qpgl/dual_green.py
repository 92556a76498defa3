"""The dual lattice operator h(Theta) on a finite region and its Green's function.

On a region ``L`` of Z^b,

    h_L(Theta)[n, n'] = eps * V_{n - n'}                      (n != n')
    h_L(Theta)[n, n]  = sum_i (Theta_i + n_i . omega_i)^2

and ``G_L(E; Theta) = (h_L(Theta) - E)^{-1}``.  The inverse is computed by a
dense Hermitian (Bunch-Kaufman) factorization, without any imaginary
broadening; an energy that makes the matrix numerically singular is
reported as a resonance instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .lattice import BlockStructure, Region, StructuralError, as_multi_index, block_dot
from .potential import PotentialModel

# pairwise work is split into row blocks of roughly this many entries
_CHUNK = 2_000_000
_LOG_FLOOR = 1e-300


class NearSingular(ArithmeticError):
    """``h_L - E`` is numerically singular: E is a resonance of h_L(Theta)."""

    def __init__(self, smallest_sv: float, tol: float):
        super().__init__(f"smallest singular value {smallest_sv:.3e} below tolerance {tol:.3e}")
        self.smallest_sv = smallest_sv
        self.tol = tol


def diagonal_symbol(Theta, k, omega, bs: BlockStructure):
    """``sum_i (Theta_i + k_i . omega_i)^2`` for one index or an (n, b) array."""
    Theta = np.atleast_1d(np.asarray(Theta, dtype=float))
    if Theta.size != bs.d:
        raise StructuralError(f"Theta must have d={bs.d} entries")
    karr = np.asarray(k) if isinstance(k, np.ndarray) else as_multi_index(k, bs)
    shifted = Theta + block_dot(karr, omega, bs)
    out = np.sum(shifted * shifted, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class DualMatrix:
    """``h_L(Theta)`` together with the data it was built from.

    Row ``i`` corresponds to ``region.points[i]``.
    """

    region: Region
    matrix: np.ndarray
    Theta: np.ndarray
    omega: np.ndarray
    eps: float
    V: PotentialModel

    @property
    def index_map(self) -> np.ndarray:
        return self.region.points

    @property
    def diagonal(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()

    def shifted(self, E: float) -> np.ndarray:
        A = self.matrix.copy()
        A[np.diag_indices_from(A)] -= E
        return A


def coupling_block(rows: Region, cols: Region, V: PotentialModel, eps: float,
                   dtype=None) -> np.ndarray:
    """``eps * V_{n - n'}`` for n in ``rows``, n' in ``cols`` (diagonal terms included)."""
    if dtype is None:
        dtype = float if V.is_real else complex
    out = np.zeros((len(rows), len(cols)), dtype=dtype)
    if eps == 0 or len(V) == 0 or len(rows) == 0 or len(cols) == 0:
        return out
    pts = rows.points
    for k, v in zip(V.indices, V.values):
        j = cols.lookup(pts - k)
        i = np.nonzero(j >= 0)[0]
        out[i, j[i]] += eps * (v.real if dtype is float else v)
    return out


def assemble(region: Region, Theta, omega, eps: float, V: PotentialModel) -> DualMatrix:
    """Build ``h_L(Theta)``; Hermitian exactly, by mirroring the upper triangle."""
    if eps < 0:
        raise ValueError("coupling eps must be non-negative")
    bs = V.bs
    if region.b != bs.b:
        raise StructuralError(f"region lives in Z^{region.b}, potential in Z^{bs.b}")
    Theta = np.atleast_1d(np.asarray(Theta, dtype=float))
    omega = np.asarray(omega, dtype=float).reshape(-1)
    M = coupling_block(region, region, V, eps)
    M = np.triu(M, 1)
    M = M + M.conj().T
    M[np.diag_indices_from(M)] = diagonal_symbol(Theta, region.points, omega, bs) if len(region) else []
    return DualMatrix(region, M, Theta, omega, float(eps), V)


@dataclass
class DecayFit:
    """Least-squares line ``log|G(n,n')| ~ intercept - rate * |n - n'|``."""

    rate: float
    intercept: float
    residual: float  # root-mean-square deviation of the fit
    pairs: int


@dataclass
class GreenReport:
    energy: float
    N: int
    rho: float
    size: int
    op_norm: float
    smallest_sv: float
    near_singular: bool
    decay_fit: DecayFit | None
    max_decay_ratio: float  # max |G| exp((rho/10)|n-n'|) over |n-n'| >= N/10
    ldt_pass: bool
    region: Region = field(repr=False)
    inverse: np.ndarray | None = field(default=None, repr=False)

    def as_record(self) -> dict:
        fit = self.decay_fit
        return {
            "E": self.energy,
            "N": self.N,
            "size": self.size,
            "op_norm": self.op_norm,
            "smallest_sv": self.smallest_sv,
            "near_singular": self.near_singular,
            "decay_rate": fit.rate if fit else float("nan"),
            "decay_intercept": fit.intercept if fit else float("nan"),
            "decay_residual": fit.residual if fit else float("nan"),
            "ldt_pass": self.ldt_pass,
        }


def _row_blocks(n: int):
    step = max(1, _CHUNK // max(n, 1))
    for start in range(0, n, step):
        yield start, min(n, start + step)


def _pair_distances(points: np.ndarray, lo: int, hi: int) -> np.ndarray:
    return np.max(np.abs(points[lo:hi, None, :] - points[None, :, :]), axis=2)


def max_weighted_entry(G: np.ndarray, region: Region, rate: float, min_dist: float = 0.0) -> float:
    """``max |G(n,n')| exp(rate |n-n'|)`` over pairs with ``|n-n'| >= min_dist``.

    Returns 0 when no pair qualifies.
    """
    best = 0.0
    absG = np.abs(G)
    for lo, hi in _row_blocks(len(region)):
        D = _pair_distances(region.points, lo, hi)
        mask = D >= min_dist
        if np.any(mask):
            with np.errstate(over="ignore"):
                w = absG[lo:hi][mask] * np.exp(rate * D[mask])
            best = max(best, float(np.max(w)))
    return best


def fit_decay(G: np.ndarray, region: Region, min_dist: float) -> DecayFit | None:
    """Fit ``log|G|`` against distance over pairs with ``|n-n'| >= min_dist``."""
    s = np.zeros(5)  # n, sx, sy, sxx, sxy
    syy = 0.0
    absG = np.abs(G)
    for lo, hi in _row_blocks(len(region)):
        D = _pair_distances(region.points, lo, hi)
        g = absG[lo:hi]
        mask = (D >= min_dist) & (g > _LOG_FLOOR)
        if not np.any(mask):
            continue
        x = D[mask].astype(float)
        y = np.log(g[mask])
        s += [x.size, x.sum(), y.sum(), (x * x).sum(), (x * y).sum()]
        syy += float((y * y).sum())
    n, sx, sy, sxx, sxy = s
    if n < 2:
        return None
    var = n * sxx - sx * sx
    if var <= 0:
        return None
    slope = (n * sxy - sx * sy) / var
    intercept = (sy - slope * sx) / n
    rss = syy - intercept * sy - slope * sxy
    return DecayFit(rate=float(-slope), intercept=float(intercept), residual=math.sqrt(max(rss, 0.0) / n), pairs=int(n))


def default_scale(region: Region) -> int:
    """Size N of the cube-like region: half its diameter, rounded down."""
    return region.diam() // 2


def invert(A: np.ndarray, sing_tol: float | None = None) -> tuple[np.ndarray, float, float]:
    """Invert a Hermitian matrix, guarding against near-singularity.

    Returns ``(inverse, smallest_sv, largest_sv)``; raises :class:`NearSingular`.
    """
    if A.shape[0] == 0:
        return A.copy(), float("inf"), 0.0
    ev = scipy.linalg.eigvalsh(A)
    svals = np.abs(ev)
    smin, smax = float(svals.min()), float(svals.max())
    tol = sing_tol if sing_tol is not None else 1e-12 * max(smax, np.finfo(float).tiny)
    if smin <= tol:
        raise NearSingular(smin, tol)
    eye = np.eye(A.shape[0], dtype=A.dtype)
    kind = "her" if np.iscomplexobj(A) else "sym"
    G = scipy.linalg.solve(A, eye, assume_a=kind, check_finite=False)
    return G, smin, smax


def green(region: Region, E: float, Theta, omega, eps: float, V: PotentialModel,
          N: int | None = None, rho: float | None = None, sing_tol: float | None = None,
          keep_inverse: bool = True, strict: bool = False) -> GreenReport:
    """Green's function ``(h_L(Theta) - E)^{-1}`` with its diagnostics.

    ``N`` is the scale used by the large-deviation predicate (default: half the
    diameter) and ``rho`` the decay rate it refers to (default: the
    potential's).  A numerically singular matrix gives a report with
    ``near_singular=True`` and no inverse, or raises :class:`NearSingular` when
    ``strict`` is set.
    """
    if len(region) == 0:
        raise StructuralError("the region must be non-empty")
    h = assemble(region, Theta, omega, eps, V)
    return green_from_matrix(h.shifted(E), region, E, N=N, rho=V.rho if rho is None else rho,
                             sing_tol=sing_tol, keep_inverse=keep_inverse, strict=strict)


def green_from_matrix(A: np.ndarray, region: Region, E: float, N: int | None, rho: float,
                      sing_tol: float | None = None, keep_inverse: bool = True,
                      strict: bool = False) -> GreenReport:
    N = default_scale(region) if N is None else int(N)
    try:
        G, smin, _ = invert(A, sing_tol)
    except NearSingular as exc:
        if strict:
            raise
        return GreenReport(E, N, rho, len(region), float("inf"), exc.smallest_sv, True,
                           None, float("inf"), False, region, None)
    op_norm = 1.0 / smin
    ratio = max_weighted_entry(G, region, rho / 10.0, N / 10.0)
    ldt = op_norm <= math.exp(math.sqrt(N)) and ratio <= 1.0
    fit = fit_decay(G, region, N / 10.0)
    return GreenReport(E, N, rho, len(region), op_norm, smin, False, fit, ratio, bool(ldt),
                       region, G if keep_inverse else None)


def ldt_check(report: GreenReport, N: int, rho: float) -> bool:
    """Large-deviation predicate at scale N.

    ``||G|| <= exp(sqrt N)`` and ``|G(n,n')| <= exp(-(rho/10)|n-n'|)`` whenever
    ``|n-n'| >= N/10``.  A near-singular report always fails.
    """
    if report.near_singular:
        return False
    if report.inverse is None:
        if (N, rho) != (report.N, report.rho):
            raise ValueError("report was built for another (N, rho) and kept no inverse")
        return report.ldt_pass
    if report.op_norm > math.exp(math.sqrt(N)):
        return False
    return max_weighted_entry(report.inverse, report.region, rho / 10.0, N / 10.0) <= 1.0


def dump_matrix(path, M: np.ndarray) -> None:
    """Write a matrix as row-major text with ``%.17g`` entries.

    Complex matrices are written as the real block followed by the imaginary block.
    """
    path = Path(path)
    with path.open("w") as fh:
        if np.iscomplexobj(M):
            fh.write(f"# complex {M.shape[0]}x{M.shape[1]}: real part rows, then imaginary part rows\n")
            np.savetxt(fh, M.real, fmt="%.17g")
            np.savetxt(fh, M.imag, fmt="%.17g")
        else:
            fh.write(f"# real {M.shape[0]}x{M.shape[1]}\n")
            np.savetxt(fh, M, fmt="%.17g")


def load_matrix(path) -> np.ndarray:
    path = Path(path)
    header = path.open().readline()
    data = np.loadtxt(path, ndmin=2)
    if header.startswith("# complex"):
        n = data.shape[0] // 2
        return data[:n] + 1j * data[n:]
    return data
