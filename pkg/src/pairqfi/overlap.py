"""Overlap of the two emission states and the matrix elements built from it.

The two single-photon wavefunctions over the aperture are

    K_pm(u) = exp(pm i phi0) P(u) exp(-i 2 pi s_perp.u - i pi s_z u^2) exp(mp i Psi(u; l)),
    Psi(u; l) = 2 pi u.l_perp + pi u^2 l_z,

and ``phi0`` is chosen so that ``delta = <K_-|K_+>`` is real and nonnegative.
Every matrix element below is a |P|^2-weighted aperture average.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .aperture import check_convergence
from .errors import ConsistencyError, DegenerateOverlapError, QuadratureConvergenceError

DEGENERACY_TOL = 1e-9
OVERLAP_CONVERGENCE_TOL = 1e-7
FD_STEP = 1e-5
B_PATH_TOL = 1e-7


@dataclass(frozen=True)
class SceneParams:
    """Separation ``l`` and centroid ``s``, both in normalized diffraction units."""

    l: tuple = (0.0, 0.0, 0.0)
    s: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        l = tuple(float(v) for v in self.l)
        s = tuple(float(v) for v in self.s)
        if len(l) != 3 or len(s) != 3:
            raise ValueError("l and s must each have three components")
        if not all(math.isfinite(v) for v in l + s):
            raise ValueError(f"non-finite scene parameters l={l}, s={s}")
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "s", s)

    def with_l(self, l):
        return replace(self, l=tuple(l))

    def with_s(self, s):
        return replace(self, s=tuple(s))


@dataclass(frozen=True)
class OverlapResult:
    raw_integral: complex
    delta: float
    phi0: float
    d_raw: np.ndarray  # d(raw_integral)/d l_mu, mu = x, y, z
    est_error: float = 0.0

    @property
    def one_minus_delta2(self):
        return 1.0 - self.delta**2

    @property
    def d_delta(self):
        """Gradient of the real overlap with respect to ``l``."""
        return np.real(np.exp(-2j * self.phi0) * self.d_raw)

    @property
    def d_phi0(self):
        """Gradient of the phase constant with respect to ``l``."""
        return 0.5 * np.imag(self.d_raw / self.raw_integral)


@dataclass(frozen=True)
class MatrixElements:
    """``A = <K+|ds|K+>``, ``B = <K+|ds|K->``, ``C = (ds<K+|) ds|K+>``, ``G = <K+|dl|K+>``.

    ``b_derivative`` is ``B`` recomputed from the l-gradient of the raw overlap.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    G: np.ndarray
    b_derivative: np.ndarray = None


def phase_gradients(pupil):
    """Node values of ``dPsi/dl_mu``: ``(2 pi u_x, 2 pi u_y, pi u^2)``."""
    return np.stack([2 * np.pi * pupil.ux, 2 * np.pi * pupil.uy, np.pi * pupil.u2])


def pair_phase(pupil, l):
    return 2 * np.pi * (pupil.ux * l[0] + pupil.uy * l[1]) + np.pi * pupil.u2 * l[2]


def require_nondegenerate(delta, tol=DEGENERACY_TOL):
    if 1.0 - delta**2 <= tol:
        raise DegenerateOverlapError(
            f"1 - delta^2 = {1.0 - delta**2:.3e} <= {tol:g}; the source pair is unresolved at this l",
            delta=delta,
        )


def compute_overlap(pupil, scene, check=True, tol=OVERLAP_CONVERGENCE_TOL):
    """Compute ``delta`` and ``phi0`` for the scene's separation.

    With ``check`` the raw integral is re-evaluated at refined quadrature and
    :class:`QuadratureConvergenceError` is raised if it moved by more than ``tol``.
    """
    l = scene.l
    chi = 2.0 * pair_phase(pupil, l)
    integrand = np.exp(1j * chi)
    est_error = 0.0
    if check:
        raw, est_error = check_convergence(
            pupil, lambda ux, uy: np.exp(2j * (2 * np.pi * (ux * l[0] + uy * l[1]) + np.pi * (ux**2 + uy**2) * l[2]))
        )
        if est_error > tol:
            raise QuadratureConvergenceError(
                f"overlap integral at l={l} changed by {est_error:.2e} under refinement; "
                f"raise the quadrature orders above {pupil.spec.n_radial}x{pupil.spec.n_angular}",
                est_error=est_error,
            )
    else:
        raw = complex(pupil.average(integrand))
    d_raw = pupil.average((2j * phase_gradients(pupil) * integrand).T)
    return OverlapResult(
        raw_integral=raw,
        delta=abs(raw),
        phi0=float(np.angle(raw)) / 2.0,
        d_raw=np.asarray(d_raw),
        est_error=est_error,
    )


def raw_overlap(pupil, l):
    return complex(pupil.average(np.exp(2j * pair_phase(pupil, l))))


def b_from_derivative(pupil, scene, overlap, step=FD_STEP):
    """``B_mu = -(1/2) exp(-2i phi0) d(raw)/dl_mu`` with central differences."""
    l = np.asarray(scene.l)
    grad = np.empty(3, dtype=complex)
    for mu in range(3):
        e = np.zeros(3)
        e[mu] = step
        grad[mu] = (raw_overlap(pupil, l + e) - raw_overlap(pupil, l - e)) / (2 * step)
    return -0.5 * np.exp(-2j * overlap.phi0) * grad


def compute_matrix_elements(pupil, scene, overlap, cross_check=True):
    """Aperture-plane matrix elements entering the centroid QFI.

    ``B`` is evaluated from its direct integrand; with ``cross_check`` it is
    also rebuilt from finite differences of the raw overlap and the two must
    agree within 1e-7, else :class:`ConsistencyError`.
    """
    dpsi = phase_gradients(pupil)
    w = pupil.intensity_weights
    avg = dpsi @ w
    A = -1j * avg
    chi = 2.0 * pair_phase(pupil, scene.l)
    B = np.exp(-2j * overlap.phi0) * (-1j * (dpsi @ (w * np.exp(1j * chi))))
    C = (dpsi * w) @ dpsi.T
    G = 1j * (overlap.d_phi0 - avg)
    b_fd = None
    if cross_check:
        b_fd = b_from_derivative(pupil, scene, overlap)
        mismatch = float(np.max(np.abs(b_fd - B)))
        if mismatch > B_PATH_TOL:
            raise ConsistencyError(f"direct and derivative forms of B differ by {mismatch:.2e}")
    return MatrixElements(A=A, B=B, C=C, G=G, b_derivative=b_fd)


def flip_branch(overlap, elements):
    """The equivalent phase convention ``phi0 + pi/2``, under which delta and B change sign."""
    phi0 = overlap.phi0 + np.pi / 2
    flipped_overlap = replace(overlap, delta=-overlap.delta, phi0=phi0)
    b_fd = None if elements.b_derivative is None else -elements.b_derivative
    return flipped_overlap, replace(elements, B=-elements.B, b_derivative=b_fd)


# --- explicit eigenstates on the quadrature nodes --------------------------


@dataclass(frozen=True)
class EmissionStates:
    """Node values of ``K_pm`` and their parameter derivatives.

    ``ds[i, mu]`` and ``dl[i, mu]`` hold ``d/ds_mu`` and ``d/dl_mu`` of state
    ``i`` (0 for ``K_+``, 1 for ``K_-``).
    """

    weights: np.ndarray
    k: np.ndarray
    ds: np.ndarray
    dl: np.ndarray


def inner(weights, f, g):
    """``<f|g>`` over the aperture; trailing axis of ``f`` and ``g`` is the node axis."""
    return np.sum(weights * np.conj(f) * g, axis=-1)


def emission_states(pupil, scene, overlap):
    l, s = scene.l, scene.s
    psi = pair_phase(pupil, l)
    centroid = 2 * np.pi * (pupil.ux * s[0] + pupil.uy * s[1]) + np.pi * pupil.u2 * s[2]
    base = pupil.values * np.exp(-1j * centroid)
    sign = np.array([1.0, -1.0])[:, None]
    k = np.exp(1j * sign * overlap.phi0) * base * np.exp(-1j * sign * psi)
    dpsi = phase_gradients(pupil)
    ds = -1j * dpsi[None, :, :] * k[:, None, :]
    factor = 1j * sign[:, :, None] * (overlap.d_phi0[None, :, None] - dpsi[None, :, :])
    dl = factor * k[:, None, :]
    return EmissionStates(weights=pupil.weights, k=k, ds=ds, dl=dl)


def eigenstates(states, overlap):
    """Node values of ``|e_pm>`` and their s- and l-derivatives."""
    delta = overlap.delta
    sign = np.array([1.0, -1.0])
    norm = 1.0 / np.sqrt(2.0 * (1.0 + sign * delta))
    kp, km = states.k
    e = norm[:, None] * np.stack([kp + km, kp - km])
    de_s = norm[:, None, None] * np.stack([states.ds[0] + states.ds[1], states.ds[0] - states.ds[1]])
    de_l = norm[:, None, None] * np.stack([states.dl[0] + states.dl[1], states.dl[0] - states.dl[1]])
    dnorm = -sign[:, None] * overlap.d_delta[None, :] / (2.0 * (1.0 + sign[:, None] * delta))
    de_l = de_l + dnorm[:, :, None] * e[:, None, :]
    return e, de_s, de_l


@dataclass(frozen=True)
class IdentityReport:
    """Residuals of the eigenstate identities at one scene.

    ``residual`` is the largest discrepancy between direct quadrature of
    ``<e_i|d_mu|e_j>`` and the closed forms in terms of A, B, G.
    """

    residual: float
    diag_l_max: float
    offdiag_s_imag_max: float
    hermiticity_max: float
    direct_s: np.ndarray
    direct_l: np.ndarray


def eigen_identities_check(pupil, scene, overlap=None, elements=None):
    if overlap is None:
        overlap = compute_overlap(pupil, scene)
    require_nondegenerate(overlap.delta)
    if elements is None:
        elements = compute_matrix_elements(pupil, scene, overlap, cross_check=False)
    states = emission_states(pupil, scene, overlap)
    e, de_s, de_l = eigenstates(states, overlap)
    w = states.weights
    # direct_x[i, j, mu] = <e_i| d_mu |e_j>
    direct_s = np.einsum("n,in,jmn->ijm", w, np.conj(e), de_s)
    direct_l = np.einsum("n,in,jmn->ijm", w, np.conj(e), de_l)

    delta = overlap.delta
    A, B, G = elements.A, elements.B, elements.G
    root = math.sqrt(1.0 - delta**2)
    closed_s = np.empty((2, 2, 3), dtype=complex)
    closed_s[0, 0] = (A + 1j * B.imag) / (1.0 + delta)
    closed_s[1, 1] = (A - 1j * B.imag) / (1.0 - delta)
    closed_s[1, 0] = B.real / root
    closed_s[0, 1] = -B.real / root
    closed_l = np.zeros((2, 2, 3), dtype=complex)
    closed_l[1, 0] = G / root
    closed_l[0, 1] = G / root

    residual = max(np.max(np.abs(direct_s - closed_s)), np.max(np.abs(direct_l - closed_l)))
    kp_ds_km = inner(w, states.k[0], states.ds[1])
    km_ds_kp = inner(w, states.k[1], states.ds[0])
    return IdentityReport(
        residual=float(residual),
        diag_l_max=float(max(np.max(np.abs(direct_l[0, 0])), np.max(np.abs(direct_l[1, 1])))),
        offdiag_s_imag_max=float(np.max(np.abs(direct_s[1, 0].imag))),
        hermiticity_max=float(np.max(np.abs(kp_ds_km + np.conj(km_ds_kp)))),
        direct_s=direct_s,
        direct_l=direct_l,
    )
