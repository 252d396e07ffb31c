"""Zernike projection channels and the multinomial Fisher information.

A photon is projected onto the normalized modes ``Z_n / sqrt(pi)``,
``n = 1..N``; anything not captured falls into a residual bucket with
probability ``P_bar = 1 - sum(P_n)``.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, SingularBlockError
from .overlap import phase_gradients

PROB_FLOOR = 1e-12
FD_STEP = 1e-4
FD_REL_TOL = 1e-5
DERIV_SCALE_FLOOR = 1e-6


class ChannelProjector:
    """Precomputed projection of the emission states onto ``Z_1..Z_N``.

    Holds ``w_k Z_n(u_k) P(u_k) / sqrt(pi)`` so that each amplitude is one
    matrix-vector product against the phase factors on the nodes.
    """

    def __init__(self, pupil, basis):
        self.pupil = pupil
        self.basis = basis
        z = basis.matrix(pupil.ux, pupil.uy) / math.sqrt(math.pi)
        self.coeff = z * (pupil.weights * pupil.values)[None, :]
        self.dpsi = phase_gradients(pupil)
        self._u2 = pupil.u2

    @property
    def n_channels(self):
        return self.basis.n_modes

    def _phases(self, l, s):
        ux, uy = self.pupil.ux, self.pupil.uy
        psi = 2 * np.pi * (ux * l[0] + uy * l[1]) + np.pi * self._u2 * l[2]
        centroid = 2 * np.pi * (ux * s[0] + uy * s[1]) + np.pi * self._u2 * s[2]
        return np.exp(-1j * (centroid + psi)), np.exp(-1j * (centroid - psi))

    def amplitudes(self, l, s=(0.0, 0.0, 0.0)):
        """Return ``(a_plus, a_minus)``, each of length N."""
        kp, km = self._phases(l, s)
        return self.coeff @ kp, self.coeff @ km

    def probabilities(self, l, s=(0.0, 0.0, 0.0)):
        ap, am = self.amplitudes(l, s)
        return 0.5 * (np.abs(ap) ** 2 + np.abs(am) ** 2)

    def derivatives(self, l, s=(0.0, 0.0, 0.0)):
        """Return ``(P, dP)`` with ``dP[n, mu] = dP_n / dl_mu``."""
        kp, km = self._phases(l, s)
        ap, am = self.coeff @ kp, self.coeff @ km
        # d a_pm / d l_mu = -+ i <M_n| dPsi_mu K_pm>
        dap = -1j * (self.coeff @ (self.dpsi * kp).T)
        dam = 1j * (self.coeff @ (self.dpsi * km).T)
        probs = 0.5 * (np.abs(ap) ** 2 + np.abs(am) ** 2)
        dprobs = np.real(np.conj(ap)[:, None] * dap) + np.real(np.conj(am)[:, None] * dam)
        return probs, dprobs


@dataclass(frozen=True)
class ChannelModel:
    """Channel probabilities at one scene, with optional l-derivatives.

    ``dprobs[n, mu]`` is ``dP_n/dl_mu``; ``dp_bar[mu]`` is ``dP_bar/dl_mu``.
    """

    n_channels: int
    probs: np.ndarray
    p_bar: float
    scene: object
    dprobs: np.ndarray = None
    dp_bar: np.ndarray = None
    fd_rel_error: float = None

    @property
    def all_probs(self):
        return np.append(self.probs, self.p_bar)

    @property
    def all_dprobs(self):
        return np.vstack([self.dprobs, self.dp_bar[None, :]])


def _bucket(probs):
    p_bar = 1.0 - float(np.sum(probs))
    if -1e-12 < p_bar < 0.0:
        p_bar = 0.0
    return p_bar


def channel_probabilities(pupil, basis, scene, projector=None):
    projector = projector or ChannelProjector(pupil, basis)
    probs = projector.probabilities(scene.l, scene.s)
    return ChannelModel(basis.n_modes, probs, _bucket(probs), scene)


def finite_difference_dprobs(projector, l, s, step=FD_STEP):
    l = np.asarray(l, dtype=float)
    out = np.empty((projector.n_channels, 3))
    for mu in range(3):
        e = np.zeros(3)
        e[mu] = step
        out[:, mu] = (projector.probabilities(l + e, s) - projector.probabilities(l - e, s)) / (2 * step)
    return out


def channel_derivatives(pupil, basis, scene, projector=None, cross_check=True):
    """Probabilities and their analytic l-derivatives.

    With ``cross_check`` the derivatives are compared against central
    differences (step 1e-4); a relative mismatch above 1e-5, measured against
    the largest derivative magnitude, raises :class:`ConsistencyError`.
    """
    projector = projector or ChannelProjector(pupil, basis)
    probs, dprobs = projector.derivatives(scene.l, scene.s)
    rel = None
    if cross_check:
        fd = finite_difference_dprobs(projector, scene.l, scene.s)
        scale = max(float(np.max(np.abs(dprobs))), DERIV_SCALE_FLOOR)
        rel = float(np.max(np.abs(fd - dprobs))) / scale
        if rel > FD_REL_TOL:
            raise ConsistencyError(f"analytic and finite-difference channel derivatives differ (relative {rel:.2e})")
    return ChannelModel(
        n_channels=basis.n_modes,
        probs=probs,
        p_bar=_bucket(probs),
        scene=scene,
        dprobs=dprobs,
        dp_bar=-np.sum(dprobs, axis=0),
        fd_rel_error=rel,
    )


@dataclass(frozen=True)
class FisherMatrix:
    """Classical FI of the multinomial counts; ``j_ll`` is per photon."""

    j_ll: np.ndarray
    M: float
    dropped: tuple = ()

    @property
    def total(self):
        return self.M * self.j_ll

    def crb(self):
        """Inverse of the total FI; raises :class:`SingularBlockError` if singular."""
        eig = np.linalg.eigvalsh(self.total)
        if eig[0] <= 1e-12 * max(eig[-1], 1e-300):
            raise SingularBlockError(
                f"Fisher matrix is singular (eigenvalues {eig})", block="j_ll", min_eigenvalue=float(eig[0])
            )
        return np.linalg.inv(self.total)


def classical_fi(model, M=1.0, floor=PROB_FLOOR):
    """Multinomial FI ``M * sum_n dP_n dP_n^T / P_n`` including the bucket.

    Channels with probability below ``floor`` are left out of the sum.
    """
    p = model.all_probs
    dp = model.all_dprobs
    keep = p >= floor
    if not np.any(keep):
        raise ValueError("every channel probability is below the floor")
    dropped = tuple(int(i) for i in np.flatnonzero(~keep))
    if dropped:
        warnings.warn(f"channels {dropped} below probability floor {floor:g} left out of the FI sum", stacklevel=2)
    j = (dp[keep].T / p[keep]) @ dp[keep]
    return FisherMatrix(j_ll=0.5 * (j + j.T), M=M, dropped=dropped)


def fisher_at(pupil, basis, scene, M=1.0, projector=None):
    model = channel_derivatives(pupil, basis, scene, projector=projector, cross_check=False)
    return classical_fi(model, M)
