"""Model Hamiltonians, parameter embeddings and closed-form eigensystems.

Three non-Hermitian families share one construction

    H(x) = sum_c q_c(x) B_c + i * gamma * G_nh

with B_c a matrix basis (Pauli, Gell-Mann subset, Dirac) and G_nh the
gain/loss generator. The embedding q(x) of every supported parameter
manifold is a sum of separable trigonometric monomials, which gives exact
first and second derivatives for free.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .numerics import EigenSystem, NearExceptionalPoint, eig_biorthogonal


class IncompatibleEmbedding(ValueError):
    """Embedding does not belong to the model family."""


class NoClosedForm(LookupError):
    """No closed-form eigensystem is available for this family/embedding."""


class Family(str, Enum):
    NH2 = "NH2"
    NH3 = "NH3"
    NH4 = "NH4"
    HERMITIAN3 = "Hermitian3"


class Embedding(str, Enum):
    LOOP2D = "Loop2D"
    SPHERE2D = "Sphere2D"
    S3 = "S3"
    LOOP4D = "Loop4D"
    S4 = "S4"


_COMPATIBLE = {
    Family.NH2: (Embedding.LOOP2D, Embedding.SPHERE2D),
    Family.NH3: (Embedding.S3,),
    Family.HERMITIAN3: (Embedding.S3,),
    Family.NH4: (Embedding.LOOP4D, Embedding.S4),
}

COORDINATE_NAMES = {
    Embedding.LOOP2D: ("theta",),
    Embedding.SPHERE2D: ("theta", "phi"),
    Embedding.S3: ("alpha", "phi1", "phi2"),
    Embedding.LOOP4D: ("theta",),
    Embedding.S4: ("theta1", "theta2", "phi1", "phi2"),
}


# ---------------------------------------------------------------- bases

def pauli_basis() -> np.ndarray:
    """sigma_x, sigma_y, sigma_z stacked as (3, 2, 2)."""
    return np.array([[[0, 1], [1, 0]],
                     [[0, -1j], [1j, 0]],
                     [[1, 0], [0, -1]]], dtype=complex)


def gell_mann_basis() -> np.ndarray:
    """The eight standard Gell-Mann matrices, index 0..7 for lambda_1..lambda_8."""
    g = np.zeros((8, 3, 3), dtype=complex)
    g[0][0, 1] = g[0][1, 0] = 1
    g[1][0, 1], g[1][1, 0] = -1j, 1j
    g[2][0, 0], g[2][1, 1] = 1, -1
    g[3][0, 2] = g[3][2, 0] = 1
    g[4][0, 2], g[4][2, 0] = -1j, 1j
    g[5][1, 2] = g[5][2, 1] = 1
    g[6][1, 2], g[6][2, 1] = -1j, 1j
    g[7] = np.diag([1, 1, -2]) / np.sqrt(3)
    return g


def su3_structure_constants() -> np.ndarray:
    """Totally antisymmetric f_abc with [l_a, l_b] = 2i f_abc l_c."""
    lam = gell_mann_basis()
    comm = np.einsum("aij,bjk->abik", lam, lam) - np.einsum("bij,ajk->abik", lam, lam)
    # Tr(l_c l_d) = 2 delta_cd
    return np.real(np.einsum("abij,cji->abc", comm, lam) / 4j)


def dirac_basis() -> np.ndarray:
    """Five mutually anticommuting 4x4 Hermitian matrices.

    This representation is the one in which the closed-form eigenvectors
    of the four-band model (``listed_eigenvectors_*``) are exact; it was
    fixed by least-squares reconstruction from those vectors.
    """
    s0 = np.eye(2, dtype=complex)
    sx, sy, sz = pauli_basis()
    return np.array([np.kron(sy, sy), np.kron(s0, sx), -np.kron(sz, sy),
                     np.kron(s0, sz), np.kron(sx, sy)])


def reconstruct_hermitian_basis(samples, n_terms: int) -> np.ndarray:
    """Fit matrices B_c from (coefficients, eigenvalues, right vectors) samples.

    Each sample is ``(q, energies, vectors)`` with H = sum_c q_c B_c exactly
    diagonalized by ``vectors``. Solves the linear system H V = V diag(E)
    for the entries of all B_c in least squares. Returns (n_terms, n, n).
    """
    rows, rhs = [], []
    n = None
    for q, energies, vectors in samples:
        v = np.asarray(vectors, dtype=complex)
        n = v.shape[0]
        h = v @ np.diag(energies) @ np.linalg.inv(v)
        # vec(sum_c q_c B_c) = vec(h)
        rows.append(np.kron(np.asarray(q, dtype=complex)[None, :], np.eye(n * n)))
        rhs.append(h.reshape(-1))
    a = np.vstack(rows)
    b = np.concatenate(rhs)
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    return sol.reshape(n_terms, n, n)


# ---------------------------------------------------------------- specs

@dataclass(frozen=True)
class ModelSpec:
    """Model family, gain/loss rate and parameter manifold.

    ``r`` and ``d`` are the loop radius and centre displacement, ``R`` the
    sphere radius, all in the same units as ``gamma``.
    """

    family: Family
    embedding: Embedding
    gamma: float = 1.0
    r: float = 2.0
    d: float = 2.5
    R: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "embedding", Embedding(self.embedding))
        if self.embedding not in _COMPATIBLE[self.family]:
            raise IncompatibleEmbedding(f"{self.embedding.value} is not defined for {self.family.value}")
        if not self.gamma >= 0:
            raise ValueError("gamma must be non-negative")
        if min(self.r, self.d, self.R) < 0:
            raise ValueError("geometric parameters must be non-negative")

    @property
    def dim(self) -> int:
        return {Family.NH2: 2, Family.NH3: 3, Family.HERMITIAN3: 3, Family.NH4: 4}[self.family]

    @property
    def n_coords(self) -> int:
        return len(COORDINATE_NAMES[self.embedding])

    @property
    def loss_rate(self) -> float:
        """Effective gain/loss strength (zero for the Hermitian family)."""
        return 0.0 if self.family is Family.HERMITIAN3 else float(self.gamma)

    @property
    def is_pair_model(self) -> bool:
        """Spectrum is +-E (twofold degenerate for NH4): H^2 = E^2 * I."""
        return self.family in (Family.NH2, Family.NH4)

    @property
    def is_loop(self) -> bool:
        return self.embedding in (Embedding.LOOP2D, Embedding.LOOP4D)

    def replace(self, **kw) -> "ModelSpec":
        vals = dict(family=self.family, embedding=self.embedding, gamma=self.gamma,
                    r=self.r, d=self.d, R=self.R)
        vals.update(kw)
        return ModelSpec(**vals)


def component_basis(spec: ModelSpec) -> np.ndarray:
    """Matrices multiplying the embedding components q_c."""
    if spec.family is Family.NH2:
        return pauli_basis()
    if spec.family in (Family.NH3, Family.HERMITIAN3):
        return gell_mann_basis()[[0, 1, 5, 6]]
    return dirac_basis()


def loss_generator(spec: ModelSpec) -> np.ndarray:
    """Matrix multiplying i*gamma."""
    if spec.family is Family.NH2:
        return pauli_basis()[2]
    if spec.family in (Family.NH3, Family.HERMITIAN3):
        return gell_mann_basis()[7]
    return dirac_basis()[3]


def loss_index(spec: ModelSpec) -> int:
    """Component index whose basis matrix equals the loss generator (pair models)."""
    return {Family.NH2: 2, Family.NH4: 3}[spec.family]


# ------------------------------------------------------------ embeddings

# value, first and second derivative of the elementary factors
_TRIG = {
    "1": (np.ones_like, np.zeros_like, np.zeros_like),
    "s": (np.sin, np.cos, lambda x: -np.sin(x)),
    "c": (np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x)),
}


def embedding_terms(spec: ModelSpec) -> list[list[tuple[float, str]]]:
    """Per component, a list of (coefficient, factor codes per coordinate)."""
    r, d, R = spec.r, spec.d, spec.R
    e = spec.embedding
    if e is Embedding.LOOP2D:
        return [[(r, "s"), (d, "1")], [], [(r, "c")]]
    if e is Embedding.SPHERE2D:
        return [[(R, "sc")], [(R, "ss")], [(R, "c1")]]
    if e is Embedding.S3:
        return [[(R, "cc1")], [(R, "cs1")], [(R, "s1c")], [(R, "s1s")]]
    if e is Embedding.LOOP4D:
        h = 1 / np.sqrt(2)
        return [[(r * h, "s"), (d * h, "1")], [(r * h, "s"), (d * h, "1")], [], [(r, "c")], []]
    return [[(R, "ss1c")], [(R, "scc1")], [(R, "scs1")], [(R, "c111")], [(R, "ss1s")]]


def embed(spec: ModelSpec, coords, derivatives: int = 2):
    """Embedding q, Jacobian and Hessian at (batched) coordinates.

    ``coords`` is a sequence of D arrays of a common shape S. Returns
    q with shape (C, *S), jac (C, D, *S) and hess (C, D, D, *S); derivative
    arrays are omitted according to ``derivatives``.
    """
    x = [np.asarray(c, dtype=float) for c in coords]
    if len(x) != spec.n_coords:
        raise ValueError(f"{spec.embedding.value} needs {spec.n_coords} coordinates")
    x = np.broadcast_arrays(*x)
    shape = x[0].shape
    dims = len(x)
    tables = {code: [[fn[o](xk) for o in range(3)] for xk in x] for code, fn in _TRIG.items()}
    terms = embedding_terms(spec)
    ncomp = len(terms)
    q = np.zeros((ncomp,) + shape)
    jac = np.zeros((ncomp, dims) + shape) if derivatives >= 1 else None
    hess = np.zeros((ncomp, dims, dims) + shape) if derivatives >= 2 else None

    def monomial(coef, codes, orders):
        out = np.full(shape, coef, dtype=float)
        for k, code in enumerate(codes):
            if code != "1" or orders[k]:
                out = out * tables[code][k][orders[k]]
        return out

    for c, comp in enumerate(terms):
        for coef, codes in comp:
            q[c] += monomial(coef, codes, [0] * dims)
            if jac is None:
                continue
            for m in range(dims):
                o = [0] * dims
                o[m] = 1
                jac[c, m] += monomial(coef, codes, o)
                if hess is None:
                    continue
                for n in range(m, dims):
                    o2 = [0] * dims
                    o2[m] += 1
                    o2[n] += 1
                    val = monomial(coef, codes, o2)
                    hess[c, m, n] += val
                    if n != m:
                        hess[c, n, m] += val
    return q, jac, hess


def hamiltonian_batch(spec: ModelSpec, coords) -> np.ndarray:
    """H at batched coordinates, shape (*S, n, n)."""
    q, _, _ = embed(spec, coords, derivatives=0)
    h = np.einsum("c...,cij->...ij", q, component_basis(spec))
    return h + 1j * spec.loss_rate * loss_generator(spec)


def hamiltonian_derivatives(spec: ModelSpec, coords):
    """(H, dH, ddH) with dH shape (D, *S, n, n) and ddH (D, D, *S, n, n)."""
    q, jac, hess = embed(spec, coords)
    basis = component_basis(spec)
    h = np.einsum("c...,cij->...ij", q, basis) + 1j * spec.loss_rate * loss_generator(spec)
    dh = np.einsum("cm...,cij->m...ij", jac, basis)
    ddh = np.einsum("cmk...,cij->mk...ij", hess, basis)
    return h, dh, ddh


def hamiltonian(spec: ModelSpec, point) -> np.ndarray:
    """Hamiltonian at a single parameter point."""
    p = np.atleast_1d(np.asarray(point, dtype=float))
    if p.shape != (spec.n_coords,) or not np.all(np.isfinite(p)):
        raise ValueError(f"{spec.embedding.value} point needs {spec.n_coords} finite coordinates")
    return hamiltonian_batch(spec, list(p))


def hamiltonian_from_vector(spec: ModelSpec, q) -> np.ndarray:
    """Hamiltonian for a raw component vector q (no embedding)."""
    q = np.asarray(q, dtype=float)
    return np.einsum("c,cij->ij", q, component_basis(spec)) + 1j * spec.loss_rate * loss_generator(spec)


# ---------------------------------------------------------- pair energies

def energy_squared(spec: ModelSpec, coords) -> np.ndarray:
    """E^2 = sum_c q'_c^2 for the pair models, q' = q + i*gamma*e_loss."""
    if not spec.is_pair_model:
        raise NoClosedForm("energy_squared is defined for the NH2/NH4 families")
    q, _, _ = embed(spec, coords, derivatives=0)
    qp = q.astype(complex)
    qp[loss_index(spec)] += 1j * spec.loss_rate
    return np.sum(qp ** 2, axis=0)


def branch_energy(spec: ModelSpec, coords) -> np.ndarray:
    """Energy E_1 of the tracked upper band at batched coordinates.

    Spheres: Re(E^2) has a fixed sign on the whole sphere, so the branch
    sqrt(E^2) (or i*sqrt(-E^2)) is continuous. Loops: E_1 starts with
    Re E_1 > 0 at theta = 0 and is continued analytically along theta,
    so after one winding it comes back as -E_1.
    """
    e2 = energy_squared(spec, coords)
    if not spec.is_loop:
        re = spec.R ** 2 - spec.loss_rate ** 2
        return np.sqrt(e2) if re >= 0 else 1j * np.sqrt(-e2)
    theta = np.asarray(coords[0], dtype=float)
    flat = theta.reshape(-1)
    out = np.empty(flat.shape, dtype=complex)
    for i, t in enumerate(flat):
        steps = max(2, int(np.ceil(abs(t) * 64)) + 1)
        path = np.linspace(0.0, t, steps)
        ph = np.unwrap(np.angle(energy_squared(spec, [path])))
        out[i] = np.sqrt(abs(energy_squared(spec, [np.array([t])])[0])) * np.exp(0.5j * ph[-1])
    return out.reshape(theta.shape)


def loop_branch_energy(spec: ModelSpec, theta: np.ndarray) -> np.ndarray:
    """E_1 along an increasing theta grid starting near 0 (vectorized)."""
    theta = np.asarray(theta, dtype=float)
    grid = np.concatenate([[0.0], theta])
    e2 = energy_squared(spec, [grid])
    ph = np.unwrap(np.angle(e2))
    return (np.sqrt(np.abs(e2)) * np.exp(0.5j * ph))[1:]


def band_signs(spec: ModelSpec, energies: np.ndarray, e1: complex | None = None) -> np.ndarray:
    """+1 for states on the tracked upper band, -1 for the lower one.

    For the three-level families the signs are (-1, 0, +1) by real part.
    """
    energies = np.asarray(energies)
    if spec.is_pair_model:
        if e1 is None:
            e1 = energies[np.argmax(energies.real)]
        return np.where(np.abs(energies - e1) <= np.abs(energies + e1), 1, -1)
    order = np.argsort(energies.real, kind="stable")
    signs = np.empty(len(energies), dtype=int)
    signs[order] = (-1, 0, 1)
    return signs


# ---------------------------------------------------- closed-form vectors

def listed_eigenvectors_sphere2d(spec: ModelSpec, theta, phi, energy):
    """Right eigenvector (R sin e^{-i phi}, E - R cos - i gamma)/N and N."""
    R, g = spec.R, spec.loss_rate
    w = energy - R * np.cos(theta) - 1j * g
    v = np.array([R * np.sin(theta) * np.exp(-1j * phi), w])
    norm = np.sqrt((R * np.sin(theta)) ** 2 + w ** 2)
    return v / norm, norm


def listed_eigenvectors_loop4d(spec: ModelSpec, theta, energy):
    """Degenerate pair (alpha, beta) on the four-band loop and their norm."""
    r, d, g = spec.r, spec.d, spec.loss_rate
    a = r * np.sin(theta) + d
    w = np.sqrt(2) * (energy + r * np.cos(theta) + 1j * g)
    ua = np.array([0 * w, a + 0j, w, a + 0j])
    ub = np.array([w, a + 0j, 0 * w, -a + 0j])
    norm = np.sqrt(2 * a ** 2 + w ** 2)
    return ua / norm, ub / norm, norm


def listed_eigenvectors_s4(spec: ModelSpec, x, energy):
    """Degenerate pair (alpha, beta) on the four-sphere and their norm."""
    t1, t2, p1, p2 = x
    R, g = spec.R, spec.loss_rate
    w = energy + R * np.cos(t1) + 1j * g
    s1 = R * np.sin(t1)
    ua = np.array([0 * w, s1 * np.sin(t2) * np.exp(-1j * (p1 - p2)), w * np.exp(-1j * p1),
                   s1 * np.cos(t2) + 0 * w])
    ub = np.array([w * np.exp(1j * p2), s1 * np.cos(t2) * np.exp(-1j * (p1 - p2)), 0 * w,
                   -s1 * np.sin(t2) + 0 * w])
    norm = np.sqrt(s1 ** 2 + w ** 2)
    return ua / norm, ub / norm, norm


def listed_eigenvectors_s4_dtheta1(spec: ModelSpec, x, energy, denergy):
    """Analytic d/d theta1 of ``listed_eigenvectors_s4`` (alpha, beta)."""
    t1, t2, p1, p2 = x
    R, g = spec.R, spec.loss_rate
    w = energy + R * np.cos(t1) + 1j * g
    dw = denergy - R * np.sin(t1)
    s1, ds1 = R * np.sin(t1), R * np.cos(t1)
    norm = np.sqrt(s1 ** 2 + w ** 2)
    dnorm = (s1 * ds1 + w * dw) / norm
    z = 0 * w
    ua = np.array([z, s1 * np.sin(t2) * np.exp(-1j * (p1 - p2)), w * np.exp(-1j * p1), s1 * np.cos(t2) + z])
    ub = np.array([w * np.exp(1j * p2), s1 * np.cos(t2) * np.exp(-1j * (p1 - p2)), z, -s1 * np.sin(t2) + z])
    dua = np.array([z, ds1 * np.sin(t2) * np.exp(-1j * (p1 - p2)), dw * np.exp(-1j * p1),
                    ds1 * np.cos(t2) + z])
    dub = np.array([dw * np.exp(1j * p2), ds1 * np.cos(t2) * np.exp(-1j * (p1 - p2)), z,
                    -ds1 * np.sin(t2) + z])
    return dua / norm - ua * dnorm / norm ** 2, dub / norm - ub * dnorm / norm ** 2


def _from_right(energies, right, norms, groups, labels) -> EigenSystem:
    right = np.asarray(right, dtype=complex)
    cond = np.linalg.cond(right)
    if not np.isfinite(cond) or cond > 1e12:
        raise NearExceptionalPoint(f"closed-form eigenvectors are singular (cond {cond:.3g})")
    left = np.linalg.inv(right)
    energies = np.asarray(energies, dtype=complex)
    centers = [energies[list(g)].mean() for g in groups]
    ep = min(abs(a - b) for i, a in enumerate(centers) for b in centers[i + 1:])
    return EigenSystem(energies=energies, right=right, left=left, norms=np.asarray(norms, complex),
                       groups=groups, labels=labels, ep_distance=float(ep))


def analytic_eigensystem(spec: ModelSpec, point) -> EigenSystem:
    """Closed-form eigensystem, band order (upper, lower).

    Available for NH2 on the sphere and NH4 on the loop and the four-sphere;
    other cases raise NoClosedForm.
    """
    p = np.atleast_1d(np.asarray(point, dtype=float))
    e1 = complex(branch_energy(spec, [np.array(v) for v in p]))
    if spec.family is Family.NH2 and spec.embedding is Embedding.SPHERE2D:
        vs, ns = zip(*(listed_eigenvectors_sphere2d(spec, p[0], p[1], e) for e in (e1, -e1)))
        return _from_right([e1, -e1], np.array(vs).T, ns, ((0,), (1,)), ("", ""))
    if spec.family is Family.NH4:
        cols, norms = [], []
        for e in (e1, -e1):
            if spec.embedding is Embedding.LOOP4D:
                ua, ub, n = listed_eigenvectors_loop4d(spec, p[0], e)
            else:
                ua, ub, n = listed_eigenvectors_s4(spec, p, e)
            cols += [ua, ub]
            norms += [n, n]
        return _from_right([e1, e1, -e1, -e1], np.array(cols).T, norms, ((0, 1), (2, 3)),
                           ("a", "b", "a", "b"))
    if spec.family is Family.HERMITIAN3 or (spec.family is Family.NH3 and spec.loss_rate == 0):
        es = eig_biorthogonal(hamiltonian(spec, p))
        return es
    raise NoClosedForm(f"no closed form for {spec.family.value} on {spec.embedding.value}")


def numeric_eigensystem(spec: ModelSpec, point) -> EigenSystem:
    """eig_biorthogonal of the model Hamiltonian at a point."""
    return eig_biorthogonal(hamiltonian(spec, point))
