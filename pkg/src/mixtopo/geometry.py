"""Uhlmann connections, curvature and holonomy.

Sign convention: the connection is built from the commutator
[sqrt(rho), d sqrt(rho)], i.e.

    A_mu = sum_{m,n} P_m [sqrt(rho), d_mu sqrt(rho)] P_n / (p_m + p_n)

with P_m the (biorthogonal, possibly degenerate) level projectors. For the
pair models (H^2 = E^2 I) this reduces to

    A_mu = -f / (2 E_1) * (P_2 dH P_1 - P_1 dH P_2),   f = 1 - sech(E~/T)

which is what the batched engine ``pair_fields`` evaluates, together with
its exact derivative and the curvature F = dA + A^A.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.special import expit

from .models import (Embedding, Family, ModelSpec, NoClosedForm, analytic_eigensystem,
                     band_signs, branch_energy, embed, energy_squared, hamiltonian,
                     hamiltonian_derivatives, listed_eigenvectors_s4,
                     listed_eigenvectors_s4_dtheta1, loop_branch_energy, loss_index)
from .numerics import (EigenSystem, NumericsError, eig_biorthogonal, eigvec_derivative,
                       ordered_products, path_ordered_exp)
from .thermal import ThermalState, density_matrix, effective_energies, sech


class DenominatorUnderflow(NumericsError):
    """p_m + p_n underflowed in a connection or metric denominator."""


@dataclass(frozen=True)
class ConnectionField:
    """Matrix one-form sampled on a rectangular parameter grid.

    ``axes`` holds one 1D coordinate array per direction and ``components``
    has shape (D, *grid_shape, n, n).
    """

    axes: tuple
    components: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.axes)


@dataclass(frozen=True)
class Holonomy:
    transport: np.ndarray
    phase: float
    unwrapped_phase: float
    trace_path: np.ndarray | None = None


# ------------------------------------------------------------ pointwise

def _e1_near(spec: ModelSpec, x, ref: complex) -> complex:
    """The root of E^2 at x closest to a reference energy."""
    e = np.sqrt(complex(energy_squared(spec, [np.array(v) for v in x])))
    return e if abs(e - ref) <= abs(e + ref) else -e


def point_energy(spec: ModelSpec, x) -> complex:
    """Tracked upper-band energy at a single point."""
    return complex(branch_energy(spec, [np.array(v) for v in np.atleast_1d(x)]))


def thermal_state_at(spec: ModelSpec, x, T: float, convention: str = "abs",
                     e1: complex | None = None) -> ThermalState:
    """Numerical eigensystem plus thermal weights at one parameter point."""
    es = eig_biorthogonal(hamiltonian(spec, x))
    if spec.is_pair_model and e1 is None:
        e1 = point_energy(spec, x)
    signs = band_signs(spec, es.energies, e1)
    return density_matrix(es, T, convention, signs)


def _level_data(state: ThermalState):
    es = state.eigsys
    projs = [es.group_projector(g) for g in range(len(es.groups))]
    weights = [state.weights[list(g)].mean() for g in es.groups]
    return projs, weights


def _sqrt_rho(state: ThermalState) -> np.ndarray:
    return state.eigsys.function(np.sqrt(state.weights))


def connection_generic(spec: ModelSpec, x, T: float, h: float = 1e-5,
                       convention: str = "abs", e1: complex | None = None) -> np.ndarray:
    """Connection at one point from central differences of sqrt(rho).

    Returns shape (D, n, n), one matrix per coordinate direction.
    """
    x = np.asarray(x, dtype=float)
    if spec.is_pair_model and e1 is None:
        e1 = point_energy(spec, x)
    centre = thermal_state_at(spec, x, T, convention, e1)
    sq = _sqrt_rho(centre)
    projs, weights = _level_data(centre)
    out = np.empty((len(x), spec.dim, spec.dim), dtype=complex)
    for mu in range(len(x)):
        shifted = []
        for s in (1, -1):
            xs = x.copy()
            xs[mu] += s * h
            es1 = _e1_near(spec, xs, e1) if spec.is_pair_model else None
            shifted.append(_sqrt_rho(thermal_state_at(spec, xs, T, convention, es1)))
        dsq = (shifted[0] - shifted[1]) / (2 * h)
        comm = sq @ dsq - dsq @ sq
        a = np.zeros((spec.dim, spec.dim), dtype=complex)
        # level-diagonal blocks vanish identically (sqrt(rho) commutes with
        # each P_m); evaluating them would divide rounding noise by 2 p_m
        for i, (pm, wm) in enumerate(zip(projs, weights)):
            for j, (pn, wn) in enumerate(zip(projs, weights)):
                if i == j:
                    continue
                if wm + wn < 1e-300:
                    raise DenominatorUnderflow("p_m + p_n < 1e-300")
                a += pm @ comm @ pn / (wm + wn)
        out[mu] = a
    return out


def transport_strength(e1, T: float, convention: str = "abs"):
    """f = 1 - sech(E~_1/T) with E~_1 the upper band's Boltzmann exponent."""
    e = np.abs(e1) if convention == "abs" else np.real(e1)
    return 1.0 - sech(e / T)


def _pair_eigsys(spec: ModelSpec, x, e1: complex) -> EigenSystem:
    """Eigensystem in (upper, lower) band order for the two-band model."""
    if spec.embedding is Embedding.SPHERE2D:
        return analytic_eigensystem(spec, x)
    es = eig_biorthogonal(hamiltonian(spec, x))
    order = np.argsort(-band_signs(spec, es.energies, e1), kind="stable")
    right = es.right[:, order]
    return EigenSystem(energies=es.energies[order], right=right, left=es.left[order],
                       norms=es.norms[order], groups=((0,), (1,)), labels=("", ""),
                       ep_distance=es.ep_distance)


def connection_closed_2d(spec: ModelSpec, x, T: float, convention: str = "abs",
                         derivative: str = "perturbative", h: float = 1e-5,
                         gauge: Callable | None = None, e1: complex | None = None) -> np.ndarray:
    """Two-band closed form, one matrix per coordinate direction.

    A = f (|u1><u2^L| <d u1^L|u2> - |u2><u1^L| <u2^L|d u1>).

    ``derivative="perturbative"`` uses <m^L|d n> = <m^L|dH|n>/(E_n - E_m);
    ``"numeric"`` differentiates the eigenvectors (optionally re-phased by
    ``gauge(x) -> phases``) with gauge-smoothed central differences.
    """
    if spec.family is not Family.NH2:
        raise NoClosedForm("the two-band closed form needs the NH2 family")
    x = np.asarray(x, dtype=float)
    if e1 is None:
        e1 = point_energy(spec, x)

    def eig_at(y):
        ref = _e1_near(spec, y, e1)
        es = _pair_eigsys(spec, y, ref)
        if gauge is None:
            return es
        ph = np.exp(1j * np.asarray(gauge(y)))
        return EigenSystem(energies=es.energies, right=es.right * ph, left=es.left / ph[:, None],
                           norms=es.norms, groups=es.groups, labels=es.labels,
                           ep_distance=es.ep_distance)

    es = eig_at(x)
    u1, u2 = es.right[:, 0], es.right[:, 1]
    l1, l2 = es.left
    f = transport_strength(es.energies[0], T, convention)
    out = np.empty((len(x), 2, 2), dtype=complex)
    if derivative == "perturbative":
        _, dh, _ = hamiltonian_derivatives(spec, [np.array(v) for v in x])
        e_1, e_2 = es.energies
    for mu in range(len(x)):
        if derivative == "perturbative":
            l2_du1 = l2 @ dh[mu] @ u1 / (e_1 - e_2)
            l1_du2 = l1 @ dh[mu] @ u2 / (e_2 - e_1)
        else:
            l2_du1 = l2 @ eigvec_derivative(eig_at, x, mu, 0, h)
            l1_du2 = l1 @ eigvec_derivative(eig_at, x, mu, 1, h)
        dl1_u2 = -l1_du2
        out[mu] = f * (np.outer(u1, l2) * dl1_u2 - np.outer(u2, l1) * l2_du1)
    return out


def connection_components_4d(spec: ModelSpec, x, T: float, convention: str = "abs"):
    """(A^theta1, A^theta2, A^phi1, A^phi2) on the four-sphere from closed forms.

    Built from the closed-form degenerate eigenvectors (alpha, beta) of
    both bands, the prefactor c = R^2 sin^2(theta1) / (N_1 N_2) and the
    theta1-overlaps <u_1^{L j}|d u_2^j>.
    """
    if spec.family is not Family.NH4 or spec.embedding is not Embedding.S4:
        raise NoClosedForm("the four-sphere components need NH4 on S4")
    x = np.asarray(x, dtype=float)
    t1, t2 = x[0], x[1]
    R, g = spec.R, spec.loss_rate
    e1 = point_energy(spec, x)
    de1 = -1j * g * R * np.sin(t1) / e1
    u1a, u1b, n1 = listed_eigenvectors_s4(spec, x, e1)
    u2a, u2b, n2 = listed_eigenvectors_s4(spec, x, -e1)
    d2a, d2b = listed_eigenvectors_s4_dtheta1(spec, x, -e1, -de1)
    right = np.array([u1a, u1b, u2a, u2b]).T
    left = np.linalg.inv(right)
    l1a, l1b, l2a, l2b = left
    f = transport_strength(e1, T, convention)
    c = R ** 2 * np.sin(t1) ** 2 / (n1 * n2)
    o = np.outer

    a_t1 = -f * ((l1a @ d2a) * (o(u1a, l2a) - o(u2a, l1a)) + (l1b @ d2b) * (o(u1b, l2b) - o(u2b, l1b)))
    a_t2 = f * c * (o(u1a, l2b) - o(u2b, l1a) + o(u2a, l1b) - o(u1b, l2a))
    # inter-band dyads |u_m^j><u_n^{L k}|, m != n
    cross = (o(u1a, l2b) + o(u1b, l2a) + o(u2a, l1b) + o(u2b, l1a))
    same = (o(u1a, l2a) - o(u1b, l2b) + o(u2a, l1a) - o(u2b, l1b))
    s2 = np.sin(2 * t2)
    a_p1 = 0.5j * f * c * (s2 * cross - 2 * np.cos(t2) ** 2 * same)
    a_p2 = -0.5j * f * c * (s2 * cross + 2 * np.sin(t2) ** 2 * same)
    return np.array([a_t1, a_t2, a_p1, a_p2])


def theta1_overlap_s4(spec: ModelSpec, t1) -> np.ndarray:
    """<u_1^{L alpha}| d_theta1 u_2^alpha> on the four-sphere (independent of the other angles)."""
    t1 = np.atleast_1d(np.asarray(t1, dtype=float)).reshape(-1)
    g, R = spec.loss_rate, spec.R
    x = [t1, np.full(t1.shape, 0.7), np.full(t1.shape, 0.3), np.full(t1.shape, 1.1)]
    e1 = branch_energy(spec.replace(embedding=Embedding.S4), x)
    de1 = -1j * g * R * np.sin(t1) / e1
    u1a, u1b, _ = listed_eigenvectors_s4(spec, x, e1)
    u2a, u2b, _ = listed_eigenvectors_s4(spec, x, -e1)
    d2a, _ = listed_eigenvectors_s4_dtheta1(spec, x, -e1, -de1)
    right = np.stack([u1a, u1b, u2a, u2b], axis=-1).transpose(1, 0, 2)  # (N, 4, 4)
    left = np.linalg.inv(right)
    return np.einsum("Ni,iN->N", left[:, 0], d2a)


# ------------------------------------------------------- batched engine

@dataclass
class PairFields:
    """Connection data of a pair model on a batch of N points."""

    e1: np.ndarray          # (N,) tracked upper-band energy
    weight_energy: np.ndarray  # (N,) Boltzmann exponent of the upper band
    f: np.ndarray           # (N,)
    rho: np.ndarray         # (N, n, n), unit trace
    proj_upper: np.ndarray  # (N, n, n)
    A: np.ndarray           # (D, N, n, n)
    dA: dict                # (m, k) -> d_m A_k, (N, n, n)

    def curvature(self, m: int, k: int) -> np.ndarray:
        return self.dA[(m, k)] - self.dA[(k, m)] + self.A[m] @ self.A[k] - self.A[k] @ self.A[m]


def pair_fields(spec: ModelSpec, coords, T: float, convention: str = "abs",
                e1: np.ndarray | None = None, derivative_pairs: Sequence = ()) -> PairFields:
    """Exact connection (and selected derivatives) of a pair model.

    ``coords`` is a sequence of D flat arrays of N points. ``derivative_pairs``
    lists the (m, k) for which d_m A_k is needed; curvature (m, k) needs both
    (m, k) and (k, m).
    """
    if not spec.is_pair_model:
        raise NoClosedForm("pair_fields needs the NH2 or NH4 family")
    coords = [np.asarray(c, dtype=float).reshape(-1) for c in coords]
    h, dh, ddh = hamiltonian_derivatives(spec, coords)
    n = spec.dim
    deg = n // 2
    ident = np.eye(n)
    if e1 is None:
        e1 = branch_energy(spec, coords)
    e1 = np.asarray(e1, dtype=complex).reshape(-1)
    q, jac, hess = embed(spec, coords)
    qp = q.astype(complex)
    qp[loss_index(spec)] += 1j * spec.loss_rate
    de = np.einsum("cN,cmN->mN", qp, jac) / e1
    ee = e1[:, None, None]
    p_up = 0.5 * (ident + h / ee)
    p_dn = ident - p_up
    ew = np.abs(e1) if convention == "abs" else np.real(e1)
    xw = ew / T
    f = 1.0 - sech(xw)
    pu = expit(-2 * xw) / deg  # per-state weight of the upper band
    pd = 1.0 / deg - pu
    rho = pu[:, None, None] * p_up + pd[:, None, None] * p_dn
    kappa = -f / (2 * e1)
    A = kappa[None, :, None, None] * (p_dn @ dh @ p_up - p_up @ dh @ p_dn)
    dA = {}
    if derivative_pairs:
        if convention == "abs":
            dew = np.real(np.conj(e1) * de) / np.abs(e1)
        else:
            dew = np.real(de)
        df = (sech(xw) * np.tanh(xw))[None] * dew / T
        dkappa = -(df / (2 * e1) - f * de / (2 * e1 ** 2))
        dp_up = 0.5 * (dh / ee - h * (de / e1 ** 2)[..., None, None])
        for (m, k) in derivative_pairs:
            dp_dn = -dp_up[m]
            t = (dp_dn @ dh[k] @ p_up + p_dn @ ddh[m, k] @ p_up + p_dn @ dh[k] @ dp_up[m]
                 - dp_up[m] @ dh[k] @ p_dn - p_up @ ddh[m, k] @ p_dn - p_up @ dh[k] @ dp_dn)
            dA[(m, k)] = (dkappa[m][:, None, None] * (p_dn @ dh[k] @ p_up - p_up @ dh[k] @ p_dn)
                          + kappa[:, None, None] * t)
    return PairFields(e1=e1, weight_energy=ew, f=f, rho=rho, proj_upper=p_up, A=A, dA=dA)


def connection_field(spec: ModelSpec, axes, T: float, convention: str = "abs",
                     method: str = "analytic") -> ConnectionField:
    """Sample the connection on the grid spanned by ``axes``."""
    axes = tuple(np.asarray(a, dtype=float) for a in axes)
    mesh = np.meshgrid(*axes, indexing="ij")
    shape = mesh[0].shape
    n = spec.dim
    if method == "analytic":
        if spec.is_loop:
            e1 = loop_branch_energy(spec, axes[0])
        else:
            e1 = branch_energy(spec, [m.reshape(-1) for m in mesh])
        pf = pair_fields(spec, [m.reshape(-1) for m in mesh], T, convention, e1=e1)
        comps = pf.A.reshape((len(axes),) + shape + (n, n))
    elif method == "generic":
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        comps = np.array([connection_generic(spec, p, T, convention=convention) for p in pts])
        comps = np.moveaxis(comps, 1, 0).reshape((len(axes),) + shape + (n, n))
    else:
        raise ValueError(f"unknown method {method!r}")
    return ConnectionField(axes=axes, components=comps)


def curvature(field: ConnectionField, directions: tuple[int, int]) -> np.ndarray:
    """F^{mu nu} = d_mu A^nu - d_nu A^mu + [A^mu, A^nu] by central differences.

    Returned on the interior of the grid (one node trimmed at both ends of
    every axis); axes must be uniformly spaced.
    """
    mu, nu = directions
    a = field.components
    ndim = field.dim

    def deriv(comp, axis):
        ax = field.axes[axis]
        step = ax[1] - ax[0]
        return np.gradient(comp, step, axis=axis)

    inner = tuple(slice(1, -1) for _ in range(ndim))
    f = deriv(a[nu], mu) - deriv(a[mu], nu) + a[mu] @ a[nu] - a[nu] @ a[mu]
    return f[inner]


# ------------------------------------------------------------ holonomy

def loop_samples(windings: int, samples: int) -> tuple[np.ndarray, float]:
    """Midpoint angles for ``windings`` traversals at ``samples`` per winding."""
    step = 2 * np.pi / samples
    return (np.arange(samples * windings) + 0.5) * step, step


def uhlmann_phase(spec: ModelSpec, windings: int, T: float, samples: int = 800,
                  convention: str = "abs", naive: bool = False, check: bool = False,
                  method: str = "analytic") -> Holonomy:
    """Holonomy of the loop connection and its Uhlmann phase.

    phase = arg Tr(rho_0 U) with U the path-ordered product (first sample
    applied first) and rho_0 the state at theta = 0. ``unwrapped_phase``
    follows arg Tr(rho_0 U_k) continuously along the partial products.
    """
    if not spec.is_loop:
        raise ValueError("uhlmann_phase needs a loop embedding")
    if windings < 1:
        raise ValueError("windings must be >= 1")
    theta, step = loop_samples(windings, samples)
    e1 = loop_branch_energy(spec, theta)
    if method == "analytic":
        a = pair_fields(spec, [theta], T, convention, e1=e1).A[0]
    else:
        a = np.array([connection_generic(spec, [t], T, convention=convention, e1=e)[0]
                      for t, e in zip(theta, e1)])
    rho0 = pair_fields(spec, [np.zeros(1)], T, convention,
                       e1=branch_energy(spec, [np.zeros(1)])).rho[0]
    if naive:
        u = expm(a.sum(axis=0) * step)
        tr = np.array([np.trace(rho0 @ u)])
    else:
        if check:
            path_ordered_exp(a, step, check=True)
        partial = ordered_products(a, step)
        u = partial[-1]
        tr = np.einsum("ij,kji->k", rho0, partial)
    unwrapped = np.unwrap(np.concatenate([[0.0], np.angle(tr)]))[-1]
    phase = float(np.angle(tr[-1]))
    if phase == -np.pi:
        phase = np.pi
    return Holonomy(transport=u, phase=phase, unwrapped_phase=float(unwrapped),
                    trace_path=tr)
