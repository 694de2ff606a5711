"""Small dense complex linear algebra for non-Hermitian matrices (n <= 4).

Everything here is a pure function of its inputs. Eigenvectors are stored
column-wise (right) and row-wise (left covectors) so that
``left @ right == I`` and ``H == right @ diag(E) @ left``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm


class NumericsError(RuntimeError):
    """Base class for numerical failures raised by this package."""


class NearExceptionalPoint(NumericsError):
    """Left/right eigenvector overlap is too ill-conditioned to biorthogonalize."""


class ResolutionTooCoarse(NumericsError):
    """Step-halving check on a path-ordered product disagreed."""


class AmbiguousTracking(NumericsError):
    """Band matching between consecutive samples was not clear-cut."""


DEFAULT_DEGENERACY_TOL = 1e-8
DEFAULT_COND_LIMIT = 1e12
DEFAULT_STEP = 1e-5


def as_matrix(a) -> np.ndarray:
    """Validate and return a square complex matrix of size 2, 3 or 4."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in (2, 3, 4):
        raise ValueError(f"expected a 2x2, 3x3 or 4x4 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


@dataclass(frozen=True)
class EigenSystem:
    """Biorthonormal eigen-decomposition.

    ``right[:, n]`` is the right eigenvector of ``energies[n]`` and
    ``left[n, :]`` the matching left covector. ``groups`` lists index tuples
    of (numerically) degenerate eigenvalues; ``labels`` names the members
    inside each group (e.g. "a", "b").
    """

    energies: np.ndarray
    right: np.ndarray
    left: np.ndarray
    norms: np.ndarray
    groups: tuple
    labels: tuple = field(default=())
    ep_distance: float = np.inf

    @property
    def dim(self) -> int:
        return self.energies.shape[0]

    def projector(self, n: int) -> np.ndarray:
        return np.outer(self.right[:, n], self.left[n])

    def group_projector(self, g: int) -> np.ndarray:
        idx = list(self.groups[g])
        return self.right[:, idx] @ self.left[idx]

    def reconstruct(self) -> np.ndarray:
        return (self.right * self.energies) @ self.left

    def biorthonormality_residual(self) -> float:
        return float(np.abs(self.left @ self.right - np.eye(self.dim)).max())

    def function(self, values) -> np.ndarray:
        """Biorthogonal functional calculus: sum_n values[n] |u_n><u_n^L|."""
        return (self.right * np.asarray(values)) @ self.left


def _group_indices(energies: np.ndarray, tol: float) -> list[list[int]]:
    groups: list[list[int]] = []
    for n, e in enumerate(energies):
        for g in groups:
            if abs(energies[g[0]] - e) <= tol:
                g.append(n)
                break
        else:
            groups.append([n])
    return groups


def _eig_2x2(h: np.ndarray, tol: float):
    a, b, c, d = h[0, 0], h[0, 1], h[1, 0], h[1, 1]
    mean = 0.5 * (a + d)
    disc = np.sqrt(0.25 * (a - d) ** 2 + b * c)
    energies = np.array([mean + disc, mean - disc])
    vecs = np.empty((2, 2), dtype=complex)
    for n, lam in enumerate(energies):
        # columns of adj(H - lam) are eigenvectors
        c1 = np.array([d - lam, -c])
        c2 = np.array([-b, a - lam])
        v = c1 if np.linalg.norm(c1) >= np.linalg.norm(c2) else c2
        nv = np.linalg.norm(v)
        if nv <= tol * max(1.0, np.abs(h).max()):
            v = np.eye(2, dtype=complex)[:, n]
            nv = 1.0
        vecs[:, n] = v / nv
    return energies, vecs


def eig_biorthogonal(h, degeneracy_tol: float = DEFAULT_DEGENERACY_TOL,
                     cond_limit: float = DEFAULT_COND_LIMIT) -> EigenSystem:
    """Right/left eigenpairs of a (possibly non-Hermitian) matrix.

    Eigenvalues are sorted by (Re, Im). Degenerate groups get an orthonormal
    right basis and the left covectors are rows of the inverse right matrix,
    which biorthonormalizes each block jointly.
    """
    h = as_matrix(h)
    n = h.shape[0]
    scale = max(1.0, float(np.abs(h).max()))
    if n == 2:
        energies, vecs = _eig_2x2(h, degeneracy_tol)
    else:
        energies, vecs = np.linalg.eig(h)
    order = np.lexsort((np.round(energies.imag, 12), np.round(energies.real, 12)))
    energies = energies[order]
    vecs = vecs[:, order]
    groups = _group_indices(energies, degeneracy_tol * scale)
    groups.sort(key=lambda g: g[0])
    for g in groups:
        block = vecs[:, g]
        if len(g) > 1:
            block, _ = np.linalg.qr(block)
            # a defective (exceptional) group has too few independent
            # eigenvectors; QR then invents directions that are not eigenvectors
            lam = energies[g].mean()
            resid = np.abs(h @ block - lam * block).max()
            if resid > 1e-6 * scale:
                raise NearExceptionalPoint(f"defective eigenvalue group (residual {resid:.3g})")
        vecs[:, g] = block / np.linalg.norm(block, axis=0)
    cond = np.linalg.cond(vecs)
    if not np.isfinite(cond) or cond > cond_limit:
        raise NearExceptionalPoint(f"eigenvector matrix condition number {cond:.3g}")
    left = np.linalg.inv(vecs)
    if len(groups) > 1:
        centers = [energies[g].mean() for g in groups]
        ep = min(abs(x - y) for i, x in enumerate(centers) for y in centers[i + 1:])
    else:
        ep = 0.0 if n > 1 else np.inf
    labels = tuple("ab"[k] if len(g) == 2 else "" for g in groups for k in range(len(g)))
    return EigenSystem(energies=energies, right=vecs, left=left, norms=np.ones(n, complex),
                       groups=tuple(tuple(g) for g in groups), labels=labels,
                       ep_distance=float(ep))


def matrix_sqrt_biortho(weights, eigsys: EigenSystem) -> np.ndarray:
    """sqrt(rho) for rho = sum_n weights[n] |u_n><u_n^L|."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    return eigsys.function(np.sqrt(w))


def ordered_products(a_samples: np.ndarray, step: float) -> np.ndarray:
    """Cumulative path-ordered products U_k = exp(A_k h) ... exp(A_1 h).

    ``a_samples`` has shape (N, n, n); returns (N, n, n).
    """
    a = np.asarray(a_samples, dtype=complex)
    if step <= 0:
        raise ValueError("step must be positive")
    factors = expm(a * step)
    out = np.empty_like(factors)
    u = np.eye(a.shape[-1], dtype=complex)
    for k in range(factors.shape[0]):
        u = factors[k] @ u
        out[k] = u
    return out


def path_ordered_exp(a_samples, step: float, check: bool = False,
                     tol: float = 1e-4) -> np.ndarray:
    """Ordered product of exp(A_k * step), first sample applied first.

    With ``check`` the product is recomputed from every other sample at
    twice the step; a disagreement above ``tol`` raises ResolutionTooCoarse.
    """
    a = np.asarray(a_samples, dtype=complex)
    if a.shape[0] == 0:
        raise ValueError("need at least one sample")
    u = ordered_products(a, step)[-1]
    if check and a.shape[0] >= 4:
        m = a.shape[0] // 2 * 2
        coarse = ordered_products(0.5 * (a[0:m:2] + a[1:m:2]), 2 * step)[-1]
        if m < a.shape[0]:
            coarse = expm(a[-1] * step) @ coarse
        gap = np.abs(u - coarse).max()
        if gap > tol:
            raise ResolutionTooCoarse(f"step-halving disagreement {gap:.3g} > {tol:g}")
    return u


def _group_overlaps(prev: EigenSystem, nxt: EigenSystem) -> np.ndarray:
    m = np.empty((len(prev.groups), len(nxt.groups)))
    for i, g in enumerate(prev.groups):
        for j, k in enumerate(nxt.groups):
            if len(g) != len(k):
                m[i, j] = 0.0
                continue
            block = prev.left[list(g)] @ nxt.right[:, list(k)]
            m[i, j] = np.linalg.norm(block) / np.sqrt(len(g))
    return m


def track_bands(systems: Sequence[EigenSystem], min_overlap: float = 0.7,
                min_margin: float = 0.1) -> list[list[int]]:
    """Match bands between consecutive eigensystems.

    Returns one permutation per consecutive pair: ``perm[n]`` is the index at
    step k+1 of the band that was index n at step k. Degenerate groups are
    matched as blocks.
    """
    perms = []
    for k in range(len(systems) - 1):
        prev, nxt = systems[k], systems[k + 1]
        ov = _group_overlaps(prev, nxt)
        gperm = []
        for i in range(ov.shape[0]):
            row = np.sort(ov[i])[::-1]
            best = int(np.argmax(ov[i]))
            if row[0] < min_overlap or (row.size > 1 and row[0] - row[1] < min_margin):
                raise AmbiguousTracking(f"step {k}: overlaps {np.round(row, 3)}")
            gperm.append(best)
        if len(set(gperm)) != len(gperm):
            raise AmbiguousTracking(f"step {k}: two bands matched to the same target")
        perm = [0] * prev.dim
        for i, j in enumerate(gperm):
            for a, b in zip(prev.groups[i], nxt.groups[j]):
                perm[a] = b
        perms.append(perm)
    return perms


def monodromy(perms: Sequence[Sequence[int]], dim: int | None = None) -> list[int]:
    """Compose step permutations; result maps start index to end index."""
    if not perms:
        return list(range(dim or 0))
    out = list(range(len(perms[0])))
    for p in perms:
        out = [p[i] for i in out]
    return out


def finite_diff(fn: Callable[[np.ndarray], np.ndarray], point, direction: int,
                h: float = DEFAULT_STEP) -> np.ndarray:
    """Central difference of ``fn`` along coordinate ``direction``."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.array(point, dtype=float)
    e = np.zeros_like(x)
    e[direction] = h
    return (np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2 * h)


def smooth_gauge(reference_left: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Rescale ``vec`` so that <reference_left|vec> is real and positive."""
    ov = reference_left @ vec
    if ov == 0:
        return vec
    return vec * (abs(ov) / ov)


def eigvec_derivative(eig_fn: Callable[[np.ndarray], EigenSystem], point, direction: int,
                      band: int, h: float = DEFAULT_STEP) -> np.ndarray:
    """Gauge-smoothed central difference of a right eigenvector.

    Vectors at the shifted points are rephased against the left covector at
    the centre so no spurious gauge derivative enters the difference.
    """
    x = np.array(point, dtype=float)
    centre = eig_fn(x)
    ref_left = centre.left[band]
    e = np.zeros_like(x)
    e[direction] = h
    vals = []
    for s in (1, -1):
        es = eig_fn(x + s * e)
        k = int(np.argmax(np.abs(es.left @ centre.right[:, band])))
        vals.append(smooth_gauge(ref_left, es.right[:, k]))
    return (vals[0] - vals[1]) / (2 * h)
