"""Executable checks of the resolvent estimates behind the multi-scale argument.

Each ``verify_*`` routine is a gated implication: it first evaluates the
hypotheses on the concrete instance and only asserts the conclusion when
all of them hold.  Reports carry both flags so a failed gate is never read
as a failed conclusion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._io import digest, dumps
from .dual_green import (NearSingular, assemble, coupling_block, diagonal_symbol, invert,
                         max_weighted_entry)
from .lattice import Region, StructuralError, block_dot, cube
from .potential import InvariantError, PotentialModel, evaluate
from .resonance import PreconditionError, ResonanceSpec, first_step_delta, in_resonance


@dataclass
class CheckReport:
    check_name: str
    hypotheses_hold: bool
    conclusions_hold: bool | None  # None when the gate is closed
    margins: dict = field(default_factory=dict)
    budget: dict = field(default_factory=dict)
    inputs_digest: str = ""
    hypotheses: dict = field(default_factory=dict)
    advisory: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "check_name": self.check_name,
            "hypotheses_hold": self.hypotheses_hold,
            "conclusions_hold": self.conclusions_hold,
            "margins": self.margins,
            "budget": self.budget,
            "inputs_digest": self.inputs_digest,
            "hypotheses": self.hypotheses,
            "advisory": self.advisory,
        }

    def to_json(self) -> str:
        return dumps(self.as_dict())


def _spectral_norm(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


# ---------------------------------------------------------------- perturbation

def verify_perturbation_lemma(A, B, rho_bar: float, N: int, region: Region) -> CheckReport:
    """Stability of a well-behaved inverse under an exponentially small perturbation.

    Hypotheses: ``||A^-1|| <= e^sqrt(N)``, ``|A^-1(n,n')| <= e^(-rho_bar |n-n'|)``
    for ``|n-n'| >= N/10`` and ``|(B-A)(n,n')| <= e^(-3 rho_bar N - rho_bar |n-n'|)``.
    Conclusions: ``||B^-1|| <= 2 ||A^-1||`` and
    ``|B^-1(n,n')| <= |A^-1(n,n')| + e^(-rho_bar |n-n'|)``.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape or A.shape[0] != len(region):
        raise StructuralError("A, B and the region must have matching sizes")
    Ainv = _general_inverse(A)
    D = region.distances()
    normA = _spectral_norm(Ainv)
    far = D >= N / 10.0
    decay = np.exp(-rho_bar * D)
    pert_bound = np.exp(-3.0 * rho_bar * N - rho_bar * D)
    absAinv = np.abs(Ainv)
    hyp = {
        "norm": normA <= math.exp(math.sqrt(N)),
        "decay": bool(np.all(absAinv[far] <= decay[far])),
        "perturbation": bool(np.all(np.abs(B - A) <= pert_bound)),
        "region_scale": region.diam() <= 2 * N,
    }
    report = CheckReport("perturbation", all(hyp.values()), None, hypotheses=hyp,
                         inputs_digest=digest(A, B, rho_bar, N, region.points))
    report.margins["A_inverse_norm"] = normA
    if not report.hypotheses_hold:
        return report
    Binv = _general_inverse(B)
    normB = _spectral_norm(Binv)
    entry_slack = absAinv + decay - np.abs(Binv)
    rel = entry_slack / (absAinv + decay)
    report.margins.update({
        "norm": 2.0 * normA - normB,
        "norm_relative": 1.0 - normB / (2.0 * normA),
        "entries": float(entry_slack.min()),
        "entries_relative": float(rel.min()),
    })
    report.conclusions_hold = bool(normB <= 2.0 * normA and np.all(entry_slack >= 0))
    return report


def _general_inverse(A: np.ndarray) -> np.ndarray:
    if A.shape[0] == 0:
        return A.copy()
    if np.allclose(A, A.conj().T, rtol=0, atol=0):
        return invert(A)[0]
    s = scipy.linalg.svdvals(A)
    if s.min() <= 1e-12 * s.max():
        raise NearSingular(float(s.min()), 1e-12 * float(s.max()))
    return scipy.linalg.inv(A)


# ---------------------------------------------------------------- coverings

@dataclass(frozen=True, eq=False)
class Patch:
    region: Region
    M: int


def build_covering(domain: Region, M: int, mode: str = "shifted") -> list[Patch]:
    """One patch per point of ``domain`` (same order as ``domain.points``).

    ``"shifted"``: the cube ``c + [-M, M]^b`` with c the point clipped into the
    bounding box shrunk by M; for a box domain this is a full elementary
    region inside the domain.  ``"ball"``: the intersection of the domain with
    ``n + [-M, M]^b``, which also works around holes.
    """
    if len(domain) == 0:
        return []
    pts = domain.points
    if mode == "shifted":
        lo, hi = pts.min(axis=0) + M, pts.max(axis=0) - M
        if np.any(lo > hi):
            raise StructuralError(f"domain is too small for patches of size M={M}")
        cache = {}
        out = []
        for p in pts:
            c = tuple(np.clip(p, lo, hi).tolist())
            if c not in cache:
                cache[c] = Patch(cube(M, domain.b, c), M)
            out.append(cache[c])
        return out
    if mode == "ball":
        return [Patch(domain.ball(p, M), M) for p in pts]
    raise ValueError(f"unknown covering mode {mode!r}")


def check_covering(domain: Region, covering: list[Patch], M0: int, M1: float) -> None:
    """Geometric preconditions; raise :class:`StructuralError` listing offenders.

    For each n in ``domain``: n in W, W inside ``domain``, ``M0 <= M <= M1`` and
    ``dist(n, domain minus W) >= M / 2``.
    """
    if len(covering) != len(domain):
        raise StructuralError("covering must assign one patch to every point")
    offenders = []
    for p, patch in zip(domain.points, covering):
        W, M = patch.region, patch.M
        problems = []
        if tuple(p) not in W:
            problems.append("n not in W")
        if not W.issubset(domain):
            problems.append("W not inside the domain")
        if not M0 <= M <= M1:
            problems.append(f"M={M} outside [{M0}, {M1}]")
        outside = domain.points[W.lookup(domain.points) < 0]
        if len(outside) and np.min(np.max(np.abs(outside - p), axis=1)) < M / 2.0:
            problems.append("n too close to the patch boundary")
        if problems:
            offenders.append(f"{tuple(int(v) for v in p)}: {', '.join(problems)}")
    if offenders:
        shown = "; ".join(offenders[:10])
        more = f" (+{len(offenders) - 10} more)" if len(offenders) > 10 else ""
        raise StructuralError(f"covering violates its preconditions at {shown}{more}")


def _unique_patches(covering: list[Patch]) -> list[Patch]:
    seen, out = set(), []
    for patch in covering:
        key = (patch.M, patch.region.points.tobytes())
        if key not in seen:
            seen.add(key)
            out.append(patch)
    return out


def _patch_bounds(patch: Patch, E, Theta, omega, eps, V, rho_bar, norm_factor, decay_factor):
    """(norm ok, decay ok, norm, worst decay ratio) for one patch."""
    h = assemble(patch.region, Theta, omega, eps, V).shifted(E)
    try:
        G, smin, _ = invert(h)
    except NearSingular:
        return False, False, math.inf, math.inf
    norm = 1.0 / smin
    ratio = max_weighted_entry(G, patch.region, rho_bar, patch.M / 10.0) / decay_factor
    return norm <= norm_factor * math.exp(math.sqrt(patch.M)), ratio <= 1.0, norm, ratio


def verify_coupling_norm(Lam: Region, E, Theta, omega, eps, V: PotentialModel,
                         covering: list[Patch], M0: int, M1: int, rho_bar: float,
                         N: int | None = None) -> CheckReport:
    """Global norm bound from good local patches.

    Hypotheses: every patch has ``||G_W|| <= 2 e^sqrt(M)`` and
    ``|G_W(n,n')| <= 2 e^(-rho_bar |n-n'|)`` for ``|n-n'| >= M/10``;
    ``M1 <= N``, ``diam(Lam) <= 2N+1`` and ``0 < rho_bar <= rho``.
    Conclusion: ``||G_Lam|| <= 4 (2 M1 + 1)^b e^sqrt(M1)``.
    """
    N = Lam.diam() // 2 if N is None else N
    check_covering(Lam, covering, M0, M1)
    patches = _unique_patches(covering)
    results = [_patch_bounds(p, E, Theta, omega, eps, V, rho_bar, 2.0, 2.0) for p in patches]
    hyp = {
        "patch_norms": all(r[0] for r in results),
        "patch_decay": all(r[1] for r in results),
        "M1_at_most_N": M1 <= N,
        "diameter": Lam.diam() <= 2 * N + 1,
        "rho_bar_range": 0 < rho_bar <= V.rho,
    }
    report = CheckReport("coupling_norm", all(hyp.values()), None, hypotheses=hyp,
                         inputs_digest=digest(Lam.points, E, Theta, omega, eps, V.indices, V.values,
                                              M0, M1, rho_bar, N),
                         advisory={"M0_threshold": "unspecified constant; not checked"})
    report.margins["worst_patch_norm"] = max(r[2] for r in results)
    report.margins["worst_patch_decay_ratio"] = max(r[3] for r in results)
    report.margins["patches"] = len(patches)
    if not report.hypotheses_hold:
        return report
    bound = 4.0 * (2 * M1 + 1) ** Lam.b * math.exp(math.sqrt(M1))
    try:
        _, smin, _ = invert(assemble(Lam, Theta, omega, eps, V).shifted(E))
        norm = 1.0 / smin
    except NearSingular:
        norm = math.inf
    report.margins.update({"norm": norm, "bound": bound, "margin": bound - norm,
                           "margin_relative": 1.0 - norm / bound})
    report.conclusions_hold = bool(norm <= bound)
    return report


@dataclass
class DecayCalibration:
    C_min: float  # smallest constant making the conclusion hold
    effective_rate: float  # min over pairs of -log|G| / |n - n'|


def verify_coupling_decay(Lam: Region, Lam1: Region, E, Theta, omega, eps, V: PotentialModel,
                          covering: list[Patch], M0: int, rho_bar: float, N: int | None = None,
                          C: float | None = None, M_max: float | None = None) -> CheckReport:
    """Off-diagonal decay of ``G_Lam`` from good patches away from a small bad set.

    ``covering`` assigns a patch to each point of ``Lam \\ Lam1`` (in that
    region's order).  Hypotheses: patch bounds ``||G_W|| <= e^sqrt(M)`` and
    ``|G_W| <= e^(-rho_bar |n-n'|)`` for ``|n-n'| >= M/10``,
    ``||G_Lam|| <= e^sqrt(N)``, ``diam(Lam) <= 2N+1`` and
    ``rho/2 <= rho_bar <= rho``.  The conclusion
    ``|G_Lam(n,n')| <= exp(-(rho_bar - C/sqrt(M0)) |n-n'|)`` for
    ``|n-n'| >= N/10`` is calibrated (smallest admissible C) and, when ``C`` is
    given, asserted for that constant.  The scale relations between N, M0, the
    patch sizes and ``diam(Lam1)`` are reported as advisory flags.
    """
    N = Lam.diam() // 2 if N is None else N
    if not Lam1.issubset(Lam):
        raise StructuralError("Lam1 must be contained in Lam")
    rest = Lam.difference(Lam1)
    check_covering(rest, covering, M0, math.inf if M_max is None else M_max)
    patches = _unique_patches(covering)
    results = [_patch_bounds(p, E, Theta, omega, eps, V, rho_bar, 1.0, 1.0) for p in patches]
    try:
        G, smin, _ = invert(assemble(Lam, Theta, omega, eps, V).shifted(E))
        normG = 1.0 / smin
    except NearSingular:
        G, normG = None, math.inf
    hyp = {
        "patch_norms": all(r[0] for r in results),
        "patch_decay": all(r[1] for r in results),
        "global_norm": normG <= math.exp(math.sqrt(N)),
        "diameter": Lam.diam() <= 2 * N + 1,
        "rho_bar_range": V.rho / 2 <= rho_bar <= V.rho,
    }
    largest_M = max((p.M for p in patches), default=0)
    adv = {
        "Lam1_diameter_small": Lam1.diam() <= N ** (1.0 / (3 * Lam.b)) if len(Lam1) else True,
        "M0_at_least_log2N": M0 >= math.log(N) ** 2 if N > 1 else True,
        "patch_size_at_most_N_third": largest_M <= N ** (1.0 / 3.0),
    }
    report = CheckReport("coupling_decay", all(hyp.values()), None, hypotheses=hyp, advisory=adv,
                         inputs_digest=digest(Lam.points, Lam1.points, E, Theta, omega, eps,
                                              V.indices, V.values, M0, rho_bar, N, C))
    report.margins["global_norm"] = normG
    if not report.hypotheses_hold:
        return report
    cal = calibrate_decay_constant(G, Lam, rho_bar, M0, N / 10.0)
    report.margins.update({"C_min": cal.C_min, "effective_rate": cal.effective_rate,
                           "rho_bar": rho_bar})
    if C is None:
        report.conclusions_hold = True  # holds by construction for C = C_min
    else:
        report.margins["C"] = C
        report.margins["margin"] = C - cal.C_min
        rate = rho_bar - C / math.sqrt(M0)
        report.conclusions_hold = bool(max_weighted_entry(G, Lam, rate, N / 10.0) <= 1.0)
    return report


def calibrate_decay_constant(G: np.ndarray, region: Region, rho_bar: float, M0: float,
                             min_dist: float) -> DecayCalibration:
    """Smallest ``C >= 0`` with ``|G| <= exp(-(rho_bar - C/sqrt(M0)) d)`` for ``d >= min_dist``."""
    D = region.distances()
    mask = (D >= min_dist) & (D > 0)
    absG = np.abs(G[mask])
    d = D[mask].astype(float)
    nz = absG > 0
    if not np.any(nz):
        return DecayCalibration(0.0, math.inf)
    rates = -np.log(absG[nz]) / d[nz]
    eff = float(rates.min())
    return DecayCalibration(max(0.0, math.sqrt(M0) * (rho_bar - eff)), eff)


# ---------------------------------------------------------------- Poisson identity

@dataclass(frozen=True, eq=False)
class LatticeVector:
    """Values on a finite set of lattice points, optionally with a polynomial bound.

    ``poly_bound = (C, degree)`` certifies ``|Z_k| <= C (1 + |k|)^degree``.
    """

    region: Region
    values: np.ndarray
    poly_bound: tuple[float, float] | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex).reshape(-1)
        if vals.size != len(self.region):
            raise StructuralError("one value per region point is required")
        object.__setattr__(self, "values", vals)
        if self.poly_bound is not None:
            C, deg = self.poly_bound
            norms = np.max(np.abs(self.region.points), axis=1) if len(vals) else np.zeros(0)
            if np.any(np.abs(vals) > C * (1.0 + norms) ** deg * (1 + 1e-12)):
                raise InvariantError("stored values exceed the polynomial bound")

    def on(self, sub: Region) -> np.ndarray:
        """Values on ``sub`` (zero where not stored)."""
        idx = self.region.lookup(sub.points)
        out = np.zeros(len(sub), dtype=complex)
        out[idx >= 0] = self.values[idx[idx >= 0]]
        return out

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def lattice_residual(Lam: Region, E, Theta, omega, eps, V: PotentialModel,
                     Z: LatticeVector) -> np.ndarray:
    """``(h(Theta) Z - E Z)_n`` for n in ``Lam``, with Z taken as zero where not stored."""
    K = Lam.union(Lam.collar(V.K_cut))
    zK = Z.on(K)
    hop = coupling_block(Lam, K, V, eps, dtype=complex) @ zK
    diag = diagonal_symbol(Theta, Lam.points, omega, V.bs)
    return hop + (diag - E) * Z.on(Lam)


def poisson_residual(Lam: Region, E, Theta, omega, eps, V: PotentialModel, Z: LatticeVector,
                     tol: float = 1e-8) -> float:
    """``max_n |Z_n + eps sum G(n,n') V(n'-n'') Z_n''|`` over n in ``Lam``.

    n' runs over ``Lam`` and n'' over the exterior collar of width K_cut.
    Refuses (:class:`PreconditionError`) unless Z solves the lattice equation
    on ``Lam`` to within ``tol * max|Z|``; raises :class:`NearSingular` when
    ``G_Lam`` does not exist.
    """
    collar = Lam.collar(V.K_cut)
    if not Lam.issubset(Z.region) or not collar.issubset(Z.region):
        raise StructuralError("Z must be given on Lam and its K_cut collar")
    res = lattice_residual(Lam, E, Theta, omega, eps, V, Z)
    scale = max(Z.sup, np.finfo(float).tiny)
    worst = float(np.max(np.abs(res))) if res.size else 0.0
    if worst > tol * scale:
        raise PreconditionError(
            f"Z does not solve the lattice equation on Lam (residual {worst:.3e}, "
            f"allowed {tol * scale:.3e})")
    G, _, _ = invert(assemble(Lam, Theta, omega, eps, V).shifted(E))
    boundary = coupling_block(Lam, collar, V, eps, dtype=complex) @ Z.on(collar)
    rhs = -(G @ boundary)
    return float(np.max(np.abs(Z.on(Lam) - rhs)))


@dataclass
class WitnessResult:
    N: int
    rhs_bound: float
    threshold: float
    passed: bool
    report: CheckReport

    def as_dict(self) -> dict:
        return {"N": self.N, "rhs_bound": self.rhs_bound, "threshold": self.threshold,
                "pass": self.passed}


def absence_witness(N: int, E, Theta, omega, eps, V: PotentialModel,
                    poly_bound: tuple[float, float] | None = None, delta: float | None = None,
                    c1: float = 0.2, C: float = 4.0, rho: float | None = None) -> WitnessResult:
    """Bound on ``|Z_0|`` for a polynomially bounded solution, via the Poisson identity.

    ``rhs = eps sum_{|n|<=N, |n'|>N} |G(0,n)| |V(n-n')| C (1+|n'|)^degree`` is
    compared with ``exp(-rho N / 20)``.  The exterior sum is exact because the
    coefficients vanish beyond K_cut.  Refuses unless Theta is outside X_N
    (width ``delta``, default the first-step width) and the cube passes the
    large-deviation predicate.
    """
    bs = V.bs
    b = bs.b
    rho = V.rho if rho is None else rho
    Cz, deg = (1.0, 5.0 * b) if poly_bound is None else poly_bound
    delta = first_step_delta(N, c1, b, C) if delta is None else delta
    resonant, k = in_resonance(Theta, ResonanceSpec(N, delta, E, omega, bs))
    if resonant:
        raise PreconditionError(f"Theta lies in X_N (resonant index {k}); witness refused")
    Lam = cube(N, b)
    h = assemble(Lam, Theta, omega, eps, V).shifted(E)
    try:
        G, smin, _ = invert(h)
    except NearSingular as exc:
        raise PreconditionError("G on the cube does not exist; witness refused") from exc
    ratio = max_weighted_entry(G, Lam, rho / 10.0, N / 10.0)
    if not (1.0 / smin <= math.exp(math.sqrt(N)) and ratio <= 1.0):
        raise PreconditionError(
            f"large-deviation bounds fail on the cube (norm {1.0 / smin:.3e}, "
            f"decay ratio {ratio:.3e}); witness refused")
    collar = Lam.collar(V.K_cut)
    row0 = np.abs(G[Lam.index_of((0,) * b)])
    hop = np.abs(coupling_block(Lam, collar, V, 1.0, dtype=complex))
    weights = Cz * (1.0 + np.max(np.abs(collar.points), axis=1)) ** deg
    rhs = float(eps * row0 @ hop @ weights)
    threshold = math.exp(-rho * N / 20.0)
    rep = CheckReport("absence_witness", True, rhs <= threshold,
                      margins={"rhs_bound": rhs, "threshold": threshold,
                               "log_margin": math.log(threshold) - math.log(rhs) if rhs > 0 else math.inf,
                               "G_norm": 1.0 / smin},
                      hypotheses={"outside_X_N": True, "ldt": True},
                      inputs_digest=digest(N, E, Theta, omega, eps, V.indices, V.values, Cz, deg, delta))
    return WitnessResult(N, rhs, threshold, rhs <= threshold, rep)


# ---------------------------------------------------------------- duality

@dataclass(frozen=True, eq=False)
class BlochSample:
    """Floquet-Bloch data: ``Psi(x) = sum_k Z_k e^{i k.theta} e^{i (Theta + k omega).x}``."""

    Theta: np.ndarray
    theta: np.ndarray
    E: float
    coefficients: LatticeVector
    x_grid: np.ndarray  # (m, d)

    def __post_init__(self):
        object.__setattr__(self, "Theta", np.atleast_1d(np.asarray(self.Theta, dtype=float)))
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float).reshape(-1))
        x = np.asarray(self.x_grid, dtype=float)
        object.__setattr__(self, "x_grid", x.reshape(len(x), -1) if x.ndim else x.reshape(1, 1))


@dataclass
class DualityResult:
    residual: float  # max over the grid of |(-Lap + eps V - E) Psi|
    psi_max: float
    lattice_residual: float  # max |h Z - E Z| on the support
    budget: dict
    within_budget: bool

    @property
    def total_budget(self) -> float:
        return self.budget["total"]


def bloch_modes(sample: BlochSample, omega, bs) -> np.ndarray:
    """Frequencies ``Theta + k omega`` (one row per stored k)."""
    return sample.Theta + block_dot(sample.coefficients.region.points, omega, bs)


def _bloch_sum(points, coeffs, freqs, theta, x):
    """``sum_k c_k e^{i k.theta} e^{i freq_k . x}`` on every grid point."""
    phase0 = np.exp(1j * (points @ theta))
    return np.exp(1j * (x @ freqs.T)) @ (coeffs * phase0)


def duality_residual(sample: BlochSample, omega, eps, V: PotentialModel) -> DualityResult:
    """Continuum residual of the Bloch sum against its certified budget.

    The continuum residual equals the Bloch sum of the lattice residual
    ``r = h(Theta) Z - E Z`` taken over the support and its K_cut collar, so

    ``residual <= sum_support |r| + sum_collar |r| + eps tail sum|Z| + rounding``.
    """
    bs = V.bs
    omega = np.asarray(omega, dtype=float).reshape(-1)
    Z = sample.coefficients
    Lam = Z.region
    E, Theta, theta, x = sample.E, sample.Theta, sample.theta, sample.x_grid
    freqs = bloch_modes(sample, omega, bs)
    z = Z.values
    psi = _bloch_sum(Lam.points, z, freqs, theta, x)
    lap = _bloch_sum(Lam.points, z * np.sum(freqs * freqs, axis=1), freqs, theta, x)
    owner = bs.owner
    args = theta[None, :] + x[:, owner] * omega[None, :]
    Vx = evaluate(V, args)
    direct = lap + eps * Vx * psi - E * psi
    residual = float(np.max(np.abs(direct)))

    r_in = lattice_residual(Lam, E, Theta, omega, eps, V, Z)
    collar = Lam.collar(V.K_cut)
    r_out = coupling_block(collar, Lam, V, eps, dtype=complex) @ z
    l1 = float(np.sum(np.abs(z)))
    sym_max = float(np.max(np.sum(freqs * freqs, axis=1))) if len(z) else 0.0
    scale = l1 * (sym_max + abs(E) + eps * V.l1_norm + 1.0)
    n_terms = max(len(z), 1) * max(len(V), 1)
    budget = {
        "interior": float(np.sum(np.abs(r_in))),
        "boundary": float(np.sum(np.abs(r_out))),
        "fourier_tail": eps * V.tail_bound * l1,
        "rounding": 16.0 * np.finfo(float).eps * n_terms * scale,
    }
    budget["total"] = sum(budget.values())
    return DualityResult(residual, float(np.max(np.abs(psi))),
                         float(np.max(np.abs(r_in))) if r_in.size else 0.0,
                         budget, residual <= budget["total"])


# ---------------------------------------------------------------- spectral window

@dataclass
class WindowResult:
    E: float
    min_dist: float
    bound: float  # eps |V|_max
    grid_term: float
    truncation_term: float
    passed: bool
    argmin_theta: np.ndarray

    @property
    def slack(self) -> float:
        return self.grid_term + self.truncation_term

    def as_dict(self) -> dict:
        return {"E": self.E, "min_dist": self.min_dist, "bound": self.bound,
                "grid_term": self.grid_term, "truncation_term": self.truncation_term,
                "slack": self.slack, "pass": self.passed}


def window_grid(E: float, d: int, step: float, pad: float = 0.5) -> np.ndarray:
    """Grid of step ``step`` over the box ``[-sqrt(E)-pad, sqrt(E)+pad]^d``.

    Points are integer multiples of ``step``, so the grid contains 0.
    """
    R = math.sqrt(max(E, 0.0)) + pad
    n = int(math.floor(R / step + 1e-9))
    axis = np.arange(-n, n + 1) * step
    return np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)


def spectral_window_check(E: float, Lam: Region, omega, eps, V: PotentialModel, Theta_grid,
                          vmax: float | None = None) -> WindowResult:
    """Distance from E to the spectra of ``h_Lam(Theta)`` over a grid of momenta.

    By Weyl's inequality each eigenvalue moves at most ``eps * ||V||_l1`` away
    from the diagonal, so ``min_dist <= eps |V|_max + grid_term`` where
    ``grid_term`` is the closest approach of a diagonal entry to E over the
    grid.  The truncation term ``eps * tail`` covers the discarded Fourier
    tail of a truncated potential.
    """
    if E < 0:
        raise ValueError("E must be non-negative")
    bs = V.bs
    Theta_grid = np.asarray(Theta_grid, dtype=float).reshape(-1, bs.d)
    vmax = V.l1_norm if vmax is None else vmax
    h = assemble(Lam, Theta_grid[0], omega, eps, V).matrix.copy()
    di = np.diag_indices_from(h)
    best, best_theta, grid_term = math.inf, Theta_grid[0], math.inf
    for T in Theta_grid:
        diag = diagonal_symbol(T, Lam.points, omega, bs)
        grid_term = min(grid_term, float(np.min(np.abs(diag - E))))
        h[di] = diag
        ev = scipy.linalg.eigvalsh(h)
        dist = float(np.min(np.abs(ev - E)))
        if dist < best:
            best, best_theta = dist, T.copy()
    trunc = eps * V.tail_bound
    bound = eps * vmax
    return WindowResult(E, best, bound, grid_term, trunc, best <= bound + grid_term + trunc,
                        best_theta)


# ---------------------------------------------------------------- rescaling

@dataclass(frozen=True)
class RescaleMap:
    """``eps = lam / K^2``, ``E~ = E / K^2``, ``Theta~ = Theta / K``."""

    lam: float
    K: float

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError("K must be positive")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")

    @property
    def eps(self) -> float:
        return self.lam / self.K ** 2

    def forward(self, E, Theta):
        return E / self.K ** 2, np.asarray(Theta, dtype=float) / self.K

    def inverse(self, E_t, Theta_t):
        return E_t * self.K ** 2, np.asarray(Theta_t, dtype=float) * self.K


def rescale(lam: float, K: float, E: float, Theta):
    """Return ``(eps, E~, Theta~)``."""
    m = RescaleMap(lam, K)
    Et, Tt = m.forward(E, Theta)
    return m.eps, Et, Tt


def unrescale(lam: float, K: float, E_t: float, Theta_t):
    """Inverse of :func:`rescale`: return ``(E, Theta)``."""
    return RescaleMap(lam, K).inverse(E_t, Theta_t)


def assemble_physical(Lam: Region, Theta, omega, lam: float, K: float, V: PotentialModel) -> np.ndarray:
    """Lattice operator at physical scaling: coupling ``lam`` and frequency ``K omega``."""
    return assemble(Lam, Theta, K * np.asarray(omega, dtype=float), lam, V).matrix
