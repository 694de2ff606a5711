"""Self-checks run by ``mixtopo check``: matrix algebra and route agreement."""
from __future__ import annotations

import numpy as np

from .geometry import (connection_closed_2d, connection_components_4d, connection_generic,
                       pair_fields, thermal_state_at)
from .invariants import trace_component_checks
from .models import (Embedding, Family, ModelSpec, dirac_basis, gell_mann_basis, hamiltonian,
                     pauli_basis, su3_structure_constants)
from .numerics import eig_biorthogonal, matrix_sqrt_biortho

ALGEBRA_TOL = 1e-12
BIORTHO_TOL = 1e-10
CONNECTION_TOL = 1e-5
TRACE_TOL = 1e-4


def pauli_residual() -> float:
    s = pauli_basis()
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k], eps[j, i, k] = 1, -1
    lhs = np.einsum("aij,bjk->abik", s, s)
    rhs = np.einsum("ab,ij->abij", np.eye(3), np.eye(2)) + 1j * np.einsum("abc,cij->abij", eps, s)
    return float(np.abs(lhs - rhs).max())


def gell_mann_residual() -> float:
    lam = gell_mann_basis()
    f = su3_structure_constants()
    gram = np.einsum("aij,bji->ab", lam, lam)
    comm = np.einsum("aij,bjk->abik", lam, lam) - np.einsum("bij,ajk->abik", lam, lam)
    rebuilt = 2j * np.einsum("abc,cij->abij", f, lam)
    herm = np.abs(lam - lam.conj().transpose(0, 2, 1)).max()
    return float(max(np.abs(gram - 2 * np.eye(8)).max(), np.abs(comm - rebuilt).max(), herm,
                     np.abs(np.einsum("aii->a", lam)).max()))


def clifford_residual() -> float:
    g = dirac_basis()
    anti = np.einsum("aij,bjk->abik", g, g) + np.einsum("bij,ajk->abik", g, g)
    want = 2 * np.einsum("ab,ij->abij", np.eye(5), np.eye(4))
    return float(np.abs(anti - want).max())


MODELS = {
    "NH2 sphere": ModelSpec(Family.NH2, Embedding.SPHERE2D, gamma=1.0, R=2.0),
    "NH2 loop": ModelSpec(Family.NH2, Embedding.LOOP2D, gamma=1.0),
    "NH3 S3": ModelSpec(Family.NH3, Embedding.S3, gamma=1.0, R=2.0),
    "Hermitian3 S3": ModelSpec(Family.HERMITIAN3, Embedding.S3, R=1.0),
    "NH4 S4": ModelSpec(Family.NH4, Embedding.S4, gamma=1.0, R=2.0),
    "NH4 loop": ModelSpec(Family.NH4, Embedding.LOOP4D, gamma=1.0),
}

_BOXES = {
    Embedding.SPHERE2D: ((0.05, np.pi - 0.05), (0, 2 * np.pi)),
    # loops: stay on the first winding where the upper band is unambiguous
    Embedding.LOOP2D: ((0.05, np.pi - 0.05),),
    Embedding.LOOP4D: ((0.05, np.pi - 0.05),),
    Embedding.S3: ((0.05, np.pi / 2 - 0.05), (0, 2 * np.pi), (0, 2 * np.pi)),
    Embedding.S4: ((0.05, np.pi - 0.05), (0.05, np.pi / 2 - 0.05), (0, 2 * np.pi), (0, 2 * np.pi)),
}


def random_point(spec: ModelSpec, rng) -> np.ndarray:
    return np.array([rng.uniform(a, b) for a, b in _BOXES[spec.embedding]])


def biorthonormality_residual(rng, points: int) -> float:
    """Worst of |L R - I| and the relative reconstruction error of H."""
    worst = 0.0
    for spec in MODELS.values():
        for _ in range(points):
            h = hamiltonian(spec, random_point(spec, rng))
            es = eig_biorthogonal(h)
            rec = float(np.abs(es.reconstruct() - h).max() / np.abs(h).max())
            worst = max(worst, es.biorthonormality_residual(), rec)
    return worst


def sqrt_rho_residual(rng, points: int) -> float:
    worst = 0.0
    for spec in MODELS.values():
        for _ in range(points):
            st = thermal_state_at(spec, random_point(spec, rng), rng.uniform(0.1, 3.0))
            sq = matrix_sqrt_biortho(st.weights, st.eigsys)
            worst = max(worst, float(np.abs(sq @ sq - st.rho).max()))
    return worst


def connection_agreement(rng, points: int) -> dict:
    """Max relative difference between the generic connection and each closed form."""
    out = {}
    for name in ("NH2 sphere", "NH2 loop", "NH4 S4", "NH4 loop"):
        spec = MODELS[name]
        worst = 0.0
        for _ in range(points):
            x = random_point(spec, rng)
            T = rng.uniform(0.1, 3.0)
            gen = connection_generic(spec, x, T)
            if spec.family is Family.NH2:
                closed = connection_closed_2d(spec, x, T)
            elif spec.embedding is Embedding.S4:
                closed = connection_components_4d(spec, x, T)
            else:
                closed = pair_fields(spec, [np.array([v]) for v in x], T).A[:, 0]
            scale = max(1.0, float(np.abs(closed).max()))
            worst = max(worst, float(np.abs(gen - closed).max()) / scale)
        out[name] = worst
    return out


def trace_display_residual(rng, points: int) -> float:
    spec = MODELS["NH4 S4"]
    return max(trace_component_checks(spec, random_point(spec, rng), rng.uniform(0.1, 3.0))
               ["max_relative"] for _ in range(points))


def run_checks(rng, points: int = 20) -> list[tuple[str, bool, str]]:
    """(name, passed, detail) for every suite."""
    res = []
    for name, val in (("Pauli algebra", pauli_residual()), ("Gell-Mann algebra", gell_mann_residual()),
                      ("Clifford algebra", clifford_residual())):
        res.append((name, val < ALGEBRA_TOL, f"residual {val:.2e}"))
    val = biorthonormality_residual(rng, points)
    res.append(("biorthonormality", val < BIORTHO_TOL, f"residual {val:.2e}"))
    val = sqrt_rho_residual(rng, points)
    res.append(("sqrt(rho)^2 = rho", val < BIORTHO_TOL, f"residual {val:.2e}"))
    for name, val in connection_agreement(rng, points).items():
        res.append((f"connection {name}", val < CONNECTION_TOL, f"relative {val:.2e}"))
    val = trace_display_residual(rng, points)
    res.append(("four-sphere trace displays", val < TRACE_TOL, f"relative {val:.2e}"))
    return res
