"""Quadrature of thermal topological invariants.

Integrals use tensor-product grids. The default rule is the open midpoint
rule: nodes sit half a step inside every interval, so coordinate poles
(theta = 0, pi) are never evaluated. Large grids are processed in
fixed-size chunks whose partial sums are added in index order, which keeps
results bit-identical for any number of worker threads.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import permutations

import numpy as np

from .geometry import pair_fields, theta1_overlap_s4
from .models import (Embedding, Family, ModelSpec, branch_energy, embed, hamiltonian,
                     hamiltonian_derivatives, listed_eigenvectors_s4, loss_index)
from .numerics import NearExceptionalPoint, finite_diff
from .thermal import boltzmann_weights, effective_energies, restoring_weight

HALF_PI = 0.5 * np.pi
TWO_PI = 2 * np.pi

SPHERE2D_BOUNDS = ((0.0, np.pi), (0.0, TWO_PI))
S3_BOUNDS = ((0.0, HALF_PI), (0.0, TWO_PI), (0.0, TWO_PI))
S4_BOUNDS = ((0.0, np.pi), (0.0, HALF_PI), (0.0, TWO_PI), (0.0, TWO_PI))

DEFAULT_SPHERE2D = (200, 400)
DEFAULT_S3 = (64, 64, 64)
DEFAULT_S4 = (48, 48, 32, 32)
DEFAULT_REDUCED = 2000
CHUNK = 16384
EP_GUARD = 1e-9


# ---------------------------------------------------------------- grids

@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor-product rule over a box.

    ``rule`` is "midpoint" (open, offset half-step), "trapezoid" or
    "simpson" (closed; ``dims`` count intervals, Simpson needs them even).
    """

    dims: tuple
    bounds: tuple
    rule: str = "midpoint"

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "bounds", tuple(tuple(map(float, b)) for b in self.bounds))
        if len(self.dims) != len(self.bounds):
            raise ValueError("dims and bounds differ in length")
        if min(self.dims) < 8:
            raise ValueError("at least 8 samples per direction")
        if self.rule not in ("midpoint", "trapezoid", "simpson"):
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.rule == "simpson" and any(n % 2 for n in self.dims):
            raise ValueError("Simpson's rule needs an even number of intervals")

    def axis(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights along direction k."""
        n = self.dims[k]
        a, b = self.bounds[k]
        h = (b - a) / n
        if self.rule == "midpoint":
            return a + (np.arange(n) + 0.5) * h, np.full(n, h)
        x = a + np.arange(n + 1) * h
        if self.rule == "trapezoid":
            w = np.full(n + 1, h)
            w[[0, -1]] = 0.5 * h
        else:
            w = np.full(n + 1, 2 * h / 3)
            w[1::2] = 4 * h / 3
            w[[0, -1]] = h / 3
        return x, w

    @property
    def size(self) -> int:
        return int(np.prod([len(self.axis(k)[0]) for k in range(len(self.dims))]))

    def coarsened(self) -> "QuadratureGrid":
        dims = tuple(max(8, n // 2 + (n // 2) % 2 * (self.rule == "simpson")) for n in self.dims)
        return replace(self, dims=dims)

    def chunks(self, size: int = CHUNK):
        """Yield (coords list, weights) blocks over the flattened grid in C order."""
        axes = [self.axis(k) for k in range(len(self.dims))]
        shape = tuple(len(x) for x, _ in axes)
        total = int(np.prod(shape))
        for start in range(0, total, size):
            idx = np.unravel_index(np.arange(start, min(total, start + size)), shape)
            coords = [axes[k][0][i] for k, i in enumerate(idx)]
            w = np.prod([axes[k][1][i] for k, i in enumerate(idx)], axis=0)
            yield coords, w


@dataclass(frozen=True)
class InvariantResult:
    value: float
    grid: QuadratureGrid | None
    refinement_delta: float = float("nan")
    excluded_points: int = 0
    imag: float = 0.0
    extras: dict = field(default_factory=dict)


def _chunked_sum(grid: QuadratureGrid, kernel, threads: int = 1):
    """Sum kernel(coords, weights) -> (complex, excluded) over grid chunks."""
    blocks = list(grid.chunks())
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: kernel(*b), blocks))
    else:
        parts = [kernel(*b) for b in blocks]
    total = 0j
    excluded = 0
    for v, ex in parts:
        total += v
        excluded += ex
    return total, excluded


def _with_refinement(compute, grid: QuadratureGrid, refine: bool) -> InvariantResult:
    res = compute(grid)
    if not refine:
        return res
    coarse = compute(grid.coarsened())
    return replace(res, refinement_delta=float(abs(res.value - coarse.value)))


def _check_off_ep(spec: ModelSpec, R: float):
    if abs(R - spec.loss_rate) < EP_GUARD * max(1.0, spec.loss_rate) and spec.loss_rate > 0:
        raise NearExceptionalPoint(f"R = {R} touches the exceptional manifold at R = gamma")


def _safe_weight(order: str, e, T: float):
    """Weight with divergent points flagged as NaN (excluded)."""
    x = np.abs(e) / T
    bad = np.abs(np.tanh(x)) < 1e-8
    w = np.full(x.shape, np.nan)
    if np.any(~bad):
        w[~bad] = restoring_weight(order, np.asarray(e)[~bad], T)
    return w, bad


# ------------------------------------------------------ 2D Chern numbers

def _sphere_spec(spec: ModelSpec, R) -> ModelSpec:
    if spec.family is not Family.NH2:
        raise ValueError("two-sphere Chern numbers need the NH2 family")
    return spec.replace(embedding=Embedding.SPHERE2D, R=spec.R if R is None else R)


def thermal_chern_2d(spec: ModelSpec, R: float | None = None, T: float = 0.5,
                     grid: QuadratureGrid | None = None, convention: str = "abs",
                     weighted: bool = True, refine: bool = True, threads: int = 1) -> InvariantResult:
    """(i/2pi) * integral of lambda * Tr(rho F^{theta phi}) over the sphere."""
    sp = _sphere_spec(spec, R)
    _check_off_ep(sp, sp.R)
    grid = grid or QuadratureGrid(DEFAULT_SPHERE2D, SPHERE2D_BOUNDS)

    def kernel(coords, w):
        pf = pair_fields(sp, coords, T, convention, derivative_pairs=[(0, 1), (1, 0)])
        tr = np.einsum("nij,nji->n", pf.rho, pf.curvature(0, 1))
        if weighted:
            lam, bad = _safe_weight("chern1", pf.e1, T)
            keep = ~bad
            return np.sum(w[keep] * lam[keep] * tr[keep]), int(bad.sum())
        return np.sum(w * tr), 0

    def compute(g):
        total, ex = _chunked_sum(g, kernel, threads)
        val = 1j * total / TWO_PI
        return InvariantResult(value=float(val.real), grid=g, excluded_points=ex, imag=float(val.imag))

    return _with_refinement(compute, grid, refine)


def nt_chern_2d(spec: ModelSpec, R: float | None = None, T: float = 0.5,
                grid: QuadratureGrid | None = None, convention: str = "abs",
                refine: bool = True, threads: int = 1) -> InvariantResult:
    """Unweighted version of ``thermal_chern_2d``."""
    return thermal_chern_2d(spec, R, T, grid, convention, weighted=False, refine=refine,
                            threads=threads)


# ------------------------------------------------- Bures metric / DD

def _three_level_batch(spec: ModelSpec, coords, T: float, convention: str):
    """Sorted eigensystems, weights and <m^L|d_mu n> on a batch."""
    h, dh, _ = hamiltonian_derivatives(spec, coords)
    w, v = np.linalg.eig(h)
    order = np.argsort(w.real, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, -1)
    v = np.take_along_axis(v, order[:, None, :], -1)
    left = np.linalg.inv(v)
    signs = np.array([-1, 0, 1])
    e_eff = effective_energies(w, convention, signs=signs) if convention == "abs" else w.real
    p = np.exp(-(e_eff - e_eff.min(-1, keepdims=True)) / T)
    p /= p.sum(-1, keepdims=True)
    m = np.einsum("Nmi,kNij,Njn->kNmn", left, dh, v)
    gap = w[:, None, :] - w[:, :, None]  # E_n - E_m
    idx = np.arange(3)
    gap[:, idx, idx] = 1.0
    conn = m / gap
    conn[:, :, idx, idx] = 0.0
    return w, p, conn, m


def bures_metric_batch(spec: ModelSpec, coords, T: float, convention: str = "abs",
                       return_energies: bool = False):
    """Bures metric (D, D, N) on a batch of S3 points (complex for NH3).

    G^{mu nu} = -1/2 sum_{m != n} (p_n - p_m)^2/(p_m + p_n) <m^L|d_mu n><n^L|d_nu m>,
    plus, for the Hermitian family, the classical term 1/4 sum_m d_mu p_m d_nu p_m / p_m.
    """
    coords = [np.asarray(c, dtype=float).reshape(-1) for c in coords]
    w, p, conn, m = _three_level_batch(spec, coords, T, convention)
    pm = p[:, :, None]
    pn = p[:, None, :]
    fac = (pn - pm) ** 2 / (pm + pn)
    g = -0.5 * np.einsum("Nmn,aNmn,bNnm->abN", fac, conn, conn)
    if spec.loss_rate == 0:
        de = np.real(np.einsum("kNmm->kNm", m))
        dp = -p[None] * (de - np.sum(p[None] * de, axis=-1, keepdims=True)) / T
        g = g + 0.25 * np.einsum("aNm,bNm->abN", dp, dp / p[None])
    return (g, w) if return_energies else g


def bures_metric(spec: ModelSpec, point, T: float, h: float = 1e-5,
                 convention: str = "abs") -> np.ndarray:
    """Bures metric at one point from central differences of rho.

    G^{mu nu} = 1/2 sum_{m,n} <m^L|d_mu rho|n><n^L|d_nu rho|m>/(p_m + p_n).
    The Hermitian family keeps every (m, n); the non-Hermitian family keeps
    m != n only. Pairs of nearly empty levels are dropped. Returns the real part.
    """
    point = np.asarray(point, dtype=float)

    def rho_at(x):
        hm = hamiltonian(spec, x)
        w, v = np.linalg.eig(hm)
        o = np.argsort(w.real, kind="stable")
        w, v = w[o], v[:, o]
        pw = boltzmann_weights(w, T, convention, signs=(-1, 0, 1))
        return (v * pw) @ np.linalg.inv(v), w, v, pw

    _, w, v, p = rho_at(point)
    left = np.linalg.inv(v)
    d = [left @ finite_diff(lambda x: rho_at(x)[0], point, mu, h) @ v for mu in range(len(point))]
    g = np.zeros((len(point), len(point)), dtype=complex)
    for a in range(len(point)):
        for b in range(len(point)):
            for i in range(3):
                for j in range(3):
                    if i == j and spec.loss_rate > 0:
                        continue
                    # the exact term is bounded by (p_i + p_j); here it would be rounding noise
                    if p[i] + p[j] < 1e-12:
                        continue
                    g[a, b] += 0.5 * d[a][i, j] * d[b][j, i] / (p[i] + p[j])
    return g.real


def three_form_density(g: np.ndarray) -> tuple[np.ndarray, int]:
    """4 sqrt(G_aa (G_11 G_22 - G_12^2)) from the real part of G (D, D, N).

    Negative Gram determinants (rounding or non-Hermitian metrics) are
    clipped to zero; their count is returned.
    """
    gr = np.real(g)
    det = gr[0, 0] * (gr[1, 1] * gr[2, 2] - gr[1, 2] * gr[2, 1])
    neg = int(np.sum(det < 0))
    return 4 * np.sqrt(np.clip(det, 0, None)), neg


def dd_invariant(spec: ModelSpec, R: float | None = None, T: float = 0.5,
                 grid: QuadratureGrid | None = None, weighted: bool = True,
                 convention: str = "abs", refine: bool = True, threads: int = 1) -> InvariantResult:
    """(1/2 pi^2) * integral over (alpha, phi1, phi2) of [lambda] * M_B."""
    if spec.family not in (Family.NH3, Family.HERMITIAN3):
        raise ValueError("the DD invariant needs a three-level family")
    sp = spec.replace(R=spec.R if R is None else R)
    grid = grid or QuadratureGrid(DEFAULT_S3, S3_BOUNDS)

    def kernel(coords, w):
        g, w3 = bures_metric_batch(sp, coords, T, convention, return_energies=True)
        mb, neg = three_form_density(g)
        if weighted:
            e_top = np.abs(w3[:, -1])
            lam, bad = _safe_weight("dd", e_top, T)
            keep = ~bad
            return np.sum(w[keep] * lam[keep] * mb[keep]), int(bad.sum()) + neg
        return np.sum(w * mb), neg

    def compute(gr):
        total, ex = _chunked_sum(gr, kernel, threads)
        return InvariantResult(value=float(total.real / (2 * np.pi ** 2)), grid=gr, excluded_points=ex)

    return _with_refinement(compute, grid, refine)


# ------------------------------------------------------ 4D invariants

def _s4_spec(spec: ModelSpec, R) -> ModelSpec:
    if spec.family is not Family.NH4:
        raise ValueError("four-sphere invariants need the NH4 family")
    return spec.replace(embedding=Embedding.S4, R=spec.R if R is None else R)


PAIRS = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


def first_chern_4d(spec: ModelSpec, R: float | None = None, T: float = 0.5,
                   grid: QuadratureGrid | None = None, weighted: bool = True,
                   convention: str = "abs", threads: int = 1) -> InvariantResult:
    """First Chern numbers of all six coordinate planes of the four-sphere.

    For each plane (mu, nu) the 2D number (i/2pi) int lambda Tr(rho F^{mu nu})
    is averaged over the two remaining coordinates. ``value`` is the one of
    largest magnitude; all six are in ``extras["planes"]``.
    """
    sp = _s4_spec(spec, R)
    _check_off_ep(sp, sp.R)
    grid = grid or QuadratureGrid((24, 24, 16, 16), S4_BOUNDS)
    dpairs = [(m, k) for m, k in PAIRS] + [(k, m) for m, k in PAIRS]

    def kernel(coords, w):
        pf = pair_fields(sp, coords, T, convention, derivative_pairs=dpairs)
        lam = restoring_weight("chern1", pf.e1, T) if weighted else 1.0
        out = np.array([np.sum(w * lam * np.einsum("nij,nji->n", pf.rho, pf.curvature(m, k)))
                        for m, k in PAIRS])
        return out, 0

    blocks = list(grid.chunks(4096))
    parts = [kernel(*b)[0] for b in blocks]
    total = np.sum(parts, axis=0)
    vol = np.array([b[1] - b[0] for b in grid.bounds])
    planes = {}
    for (m, k), v in zip(PAIRS, total):
        other = np.prod([vol[j] for j in range(4) if j not in (m, k)])
        planes[(m, k)] = complex(1j * v / TWO_PI / other)
    worst = max(planes.values(), key=abs)
    return InvariantResult(value=float(abs(worst)), grid=grid,
                           extras={"planes": planes, "weighted": weighted})


def _levi_civita():
    out = []
    for perm in permutations(range(4)):
        inv = sum(1 for i in range(4) for j in range(i + 1, 4) if perm[i] > perm[j])
        out.append((perm, -1 if inv % 2 else 1))
    return out


# The four-sphere is oriented by d theta2 ^ d theta1 ^ d phi1 ^ d phi2.
S4_ORIENTATION = -1


def second_chern_density(spec: ModelSpec, coords, T: float, convention: str = "abs",
                         full: bool = False):
    """Integrand eps^{mu nu rho sigma} Tr(rho F_mu nu F_rho sigma) on a batch.

    By default the symmetry identity is used: the sum equals
    8 * Tr(rho (F^{p1p2}F^{t1t2} - F^{p1t1}F^{p2t2} + F^{p1t2}F^{p2t1}))
    = 24 * Tr(rho F^{p1p2} F^{t1t2}). ``full`` evaluates all 24 terms.
    Returns (density, |E_1|).
    """
    if full:
        dpairs = [(m, k) for m in range(4) for k in range(4) if m != k]
    else:
        dpairs = [(2, 3), (3, 2), (0, 1), (1, 0)]
    pf = pair_fields(spec, coords, T, convention, derivative_pairs=dpairs)
    if full:
        fs = {(m, k): pf.curvature(m, k) for m in range(4) for k in range(4) if m < k}

        def F(m, k):
            return fs[(m, k)] if m < k else -fs[(k, m)]

        dens = 0
        for perm, sgn in _levi_civita():
            a, b, c, d = perm
            dens = dens + sgn * np.einsum("nij,njk,nki->n", pf.rho, F(a, b), F(c, d))
    else:
        x1 = np.einsum("nij,njk,nki->n", pf.rho, pf.curvature(2, 3), pf.curvature(0, 1))
        dens = 24 * x1
    return dens, np.abs(pf.e1)


def second_chern_4d(spec: ModelSpec, R: float | None = None, T: float = 0.5,
                    grid: QuadratureGrid | None = None, weighted: bool = True,
                    convention: str = "abs", full: bool = False, refine: bool = False,
                    threads: int = 1) -> InvariantResult:
    """(1/8pi^2) int [lambda_2] eps Tr(rho F F) by 4D quadrature."""
    sp = _s4_spec(spec, R)
    _check_off_ep(sp, sp.R)
    grid = grid or QuadratureGrid(DEFAULT_S4, S4_BOUNDS)

    def kernel(coords, w):
        dens, e = second_chern_density(sp, coords, T, convention, full)
        if weighted:
            lam, bad = _safe_weight("chern2", e, T)
            keep = ~bad
            return np.sum(w[keep] * lam[keep] * dens[keep]), int(bad.sum())
        return np.sum(w * dens), 0

    def compute(g):
        total, ex = _chunked_sum(g, kernel, threads)
        val = S4_ORIENTATION * total / (8 * np.pi ** 2)
        return InvariantResult(value=float(val.real), grid=g, excluded_points=ex, imag=float(val.imag))

    return _with_refinement(compute, grid, refine)


def second_chern_reduced(spec: ModelSpec, R: float | None = None, T: float = 0.5,
                         nodes: int = DEFAULT_REDUCED, weighted: bool = False,
                         convention: str = "abs") -> InvariantResult:
    """One-dimensional theta1 reduction of the second Chern number.

    24 R^6 int tanh^5(|E|/T) sin^6(theta1)/(N_1 N_2)^3 <u_1^{L a}|d_theta1 u_2^a> dtheta1,
    with the tanh^5 factor dropped when ``weighted``.
    """
    sp = _s4_spec(spec, R)
    _check_off_ep(sp, sp.R)
    if convention != "abs":
        raise ValueError("the reduced route assumes the abs weight convention")
    t1 = (np.arange(nodes) + 0.5) * np.pi / nodes
    x = [t1, np.full(nodes, 0.7), np.full(nodes, 0.3), np.full(nodes, 1.1)]
    e1 = branch_energy(sp, x)
    _, _, n1 = listed_eigenvectors_s4(sp, x, e1)
    _, _, n2 = listed_eigenvectors_s4(sp, x, -e1)
    ov = theta1_overlap_s4(sp, t1)
    integrand = sp.R ** 6 * np.sin(t1) ** 6 / (n1 * n2) ** 3 * ov
    if not weighted:
        integrand = integrand * np.tanh(np.abs(e1) / T) ** 5
    val = S4_ORIENTATION * 24 * np.sum(integrand) * np.pi / nodes
    grid = QuadratureGrid((nodes,), ((0.0, np.pi),))
    return InvariantResult(value=float(val.real), grid=grid, imag=float(val.imag))


def second_chern(spec: ModelSpec, R: float | None = None, T: float = 0.5,
                 grid: QuadratureGrid | None = None, weighted: bool = True,
                 convention: str = "abs", oracle_grid: QuadratureGrid | None = None,
                 threads: int = 1) -> InvariantResult:
    """Second thermal Uhlmann-Chern number.

    Weighted: 4D quadrature of lambda_2 times the symmetry-reduced
    integrand. Unweighted: the 1D theta1 reduction, cross-checked by a
    coarse 4D quadrature whose value and difference go to ``extras``.
    """
    if weighted:
        return second_chern_4d(spec, R, T, grid, True, convention, threads=threads)
    red = second_chern_reduced(spec, R, T, weighted=False, convention=convention)
    og = oracle_grid or QuadratureGrid((24, 24, 8, 8), S4_BOUNDS)
    orc = second_chern_4d(spec, R, T, og, False, convention, threads=threads)
    return replace(red, refinement_delta=abs(red.value - orc.value),
                   extras={"oracle_4d": orc.value, "oracle_delta": abs(red.value - orc.value)})


def trace_component_checks(spec: ModelSpec, point, T: float, convention: str = "abs") -> dict:
    """Compare the four trace products of the four-sphere curvature with closed forms.

    Traces: Tr[rho D_phi D_theta], Tr[rho D_phi C_theta], Tr[rho C_phi D_theta],
    Tr[rho C_phi C_theta] with D the exterior-derivative part and C the
    commutator part of F on the (phi1, phi2) and (theta1, theta2) planes.
    Closed forms are K * (4 f^2, -2 f^3, -2 f^3, f^4) with
    K = tanh(|E|/T) R^6 sin^6(theta1) sin(2 theta2) / (N_1 N_2)^3 * 2 <u_1^{La}|d u_2^a>.
    """
    sp = _s4_spec(spec, None)
    x = np.asarray(point, dtype=float)
    coords = [np.array([v]) for v in x]
    pf = pair_fields(sp, coords, T, convention, derivative_pairs=[(2, 3), (3, 2), (0, 1), (1, 0)])
    a = pf.A[:, 0]
    rho = pf.rho[0]
    d_phi = pf.dA[(2, 3)][0] - pf.dA[(3, 2)][0]
    d_th = pf.dA[(0, 1)][0] - pf.dA[(1, 0)][0]
    c_phi = a[2] @ a[3] - a[3] @ a[2]
    c_th = a[0] @ a[1] - a[1] @ a[0]
    traces = np.array([np.trace(rho @ d_phi @ d_th), np.trace(rho @ d_phi @ c_th),
                       np.trace(rho @ c_phi @ d_th), np.trace(rho @ c_phi @ c_th)])
    e1 = pf.e1[0]
    f = pf.f[0]
    _, _, n1 = listed_eigenvectors_s4(sp, x, e1)
    _, _, n2 = listed_eigenvectors_s4(sp, x, -e1)
    ov = theta1_overlap_s4(sp, x[0])[0]
    k = (np.tanh(np.abs(e1) / T) * sp.R ** 6 * np.sin(x[0]) ** 6 * np.sin(2 * x[1])
         / (n1 * n2) ** 3 * 2 * ov)
    closed = k * np.array([4 * f ** 2, -2 * f ** 3, -2 * f ** 3, f ** 4])
    scale = np.maximum(np.abs(closed), 1e-300)
    rel = np.abs(traces - closed) / scale
    return {"traces": traces, "closed": closed, "relative": rel, "max_relative": float(rel.max()),
            "ratio_2_1": complex(traces[1] / traces[0]) if traces[0] != 0 else complex("nan"),
            "f": float(f)}


# ------------------------------------------------------- Berry oracle

def berry_second_chern(spec: ModelSpec, R: float | None = None,
                       grid: QuadratureGrid | None = None) -> InvariantResult:
    """Second Chern number of the lower-band projector P (trace 2).

    (1/8pi^2) int (1/4) eps Tr(F_mu nu F_rho sigma), F_mu nu = P [d_mu P, d_nu P] P.
    Independent of the Uhlmann machinery; used for Hermitian-limit checks.
    """
    sp = _s4_spec(spec, R)
    _check_off_ep(sp, sp.R)
    grid = grid or QuadratureGrid((32, 32, 8, 8), S4_BOUNDS)
    eps = _levi_civita()

    def kernel(coords, w):
        h, dh, _ = hamiltonian_derivatives(sp, coords)
        e1 = branch_energy(sp, coords)
        q, jac, _ = embed(sp, coords, derivatives=1)
        qp = q.astype(complex)
        qp[loss_index(sp)] += 1j * sp.loss_rate
        de = np.einsum("cN,cmN->mN", qp, jac) / e1
        ee = e1[:, None, None]
        p = 0.5 * (np.eye(4) - h / ee)
        dp = -0.5 * (dh / ee - h * (de / e1 ** 2)[..., None, None])
        F = {(m, k): p @ (dp[m] @ dp[k] - dp[k] @ dp[m]) @ p for m in range(4) for k in range(4)}
        dens = sum(s * np.einsum("nij,nji->n", F[(a, b)], F[(c, d)]) for (a, b, c, d), s in eps)
        return np.sum(w * dens) / 4, 0

    total, _ = _chunked_sum(grid, kernel)
    val = S4_ORIENTATION * total / (8 * np.pi ** 2)
    return InvariantResult(value=float(val.real), grid=grid, imag=float(val.imag))
