"""QFI blocks for joint separation/centroid estimation and their inverses."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateOverlapError, PairQfiError, SingularBlockError
from .overlap import (
    SceneParams,
    compute_matrix_elements,
    compute_overlap,
    eigenstates,
    emission_states,
    pair_phase,
    phase_gradients,
    require_nondegenerate,
)

SYMMETRY_TOL = 1e-10
SINGULAR_EIG = 1e-10
AXES = ("x", "y", "z")


@dataclass(frozen=True)
class QfiBlocks:
    h_ll: np.ndarray
    h_ss: np.ndarray
    h_sl: np.ndarray
    delta: float
    scene: object

    @property
    def full(self):
        return np.block([[self.h_ll, self.h_sl.T], [self.h_sl, self.h_ss]])


@dataclass(frozen=True)
class QcrbResult:
    qcrb_ll: np.ndarray
    qcrb_ss: np.ndarray
    cond_ll: float
    cond_ss: float

    @property
    def diag_ll(self):
        return np.diag(self.qcrb_ll).copy()

    @property
    def diag_ss(self):
        return np.diag(self.qcrb_ss).copy()

    @property
    def full(self):
        z = np.zeros((3, 3))
        return np.block([[self.qcrb_ll, z], [z, self.qcrb_ss]])


def compute_h_ll(pupil, scene=None):
    """Separation QFI: four times the covariance of the phase gradients under |P|^2.

    Independent of both ``l`` and ``s``; ``scene`` is accepted for symmetry
    with the other block functions and ignored.
    """
    dpsi = phase_gradients(pupil)
    w = pupil.intensity_weights
    mean = dpsi @ w
    second = (dpsi * w) @ dpsi.T
    h = 4.0 * (second - np.outer(mean, mean))
    return 0.5 * (h + h.T)


def compute_h_ss(elements, delta):
    """Centroid QFI from the aperture matrix elements and the real overlap."""
    require_nondegenerate(delta)
    ia, ib, rb = elements.A.imag, elements.B.imag, elements.B.real
    d2 = 1.0 - delta**2
    h = (
        4.0 * (elements.C.real - np.outer(rb, rb))
        - (4.0 / d2) * (np.outer(ia, ia) + np.outer(ib, ib))
        + (4.0 * delta / d2) * (np.outer(ia, ib) + np.outer(ib, ia))
    )
    return h


def centroid_qfi(pupil, scene, check=True):
    """Return ``(h_ss, overlap, elements)`` for one scene."""
    overlap = compute_overlap(pupil, scene, check=check)
    require_nondegenerate(overlap.delta)
    elements = compute_matrix_elements(pupil, scene, overlap, cross_check=check)
    return compute_h_ss(elements, overlap.delta), overlap, elements


@dataclass(frozen=True)
class HslResidual:
    """Numerically evaluated off-diagonal block.

    ``first_sum_real_max`` is the largest real part of the products
    ``<e_i|ds|e_j><e_j|dl|e_i>`` (i != j), which vanish term by term.
    """

    matrix: np.ndarray
    max_abs: float
    first_sum_real_max: float


def compute_h_sl_residual(pupil, scene, overlap=None):
    """Evaluate the mixed centroid/separation block from explicit eigenstates."""
    if overlap is None:
        overlap = compute_overlap(pupil, scene)
    require_nondegenerate(overlap.delta)
    delta = overlap.delta
    states = emission_states(pupil, scene, overlap)
    e, de_s, de_l = eigenstates(states, overlap)
    w = states.weights
    ev = np.array([(1 + delta) / 2, (1 - delta) / 2])
    bra_ds = np.einsum("n,in,jmn->ijm", w, np.conj(e), de_s)  # <e_i|ds_m|e_j>
    bra_dl = np.einsum("n,in,jmn->ijm", w, np.conj(e), de_l)  # <e_i|dl_m|e_j>
    first = np.zeros((3, 3), dtype=complex)
    for i, j in ((0, 1), (1, 0)):
        first += ev[i] * np.outer(bra_ds[i, j], bra_dl[j, i])
    first_real = max(
        float(np.max(np.abs(np.real(np.outer(bra_ds[i, j], bra_dl[j, i]))))) for i, j in ((0, 1), (1, 0))
    )
    # (ds_mu <e_i|) dl_nu |e_i>
    second = np.einsum("i,n,imn,ikn->mk", ev, w, np.conj(de_s), de_l)
    h = 4.0 * (1.0 - delta**2) * first.real + 4.0 * second.real
    return HslResidual(matrix=h, max_abs=float(np.max(np.abs(h))), first_sum_real_max=first_real)


def qfi_matrix_direct(pupil, scene):
    """Full 6x6 QFI of the discretized rank-2 density operator, ordered (l, s).

    Uses the spectral SLD formula with the kernel handled through the support
    projector. Shares no algebra with the block formulas and serves as an
    independent check on them.
    """
    l, s = scene.l, scene.s
    psi = pair_phase(pupil, l)
    centroid = 2 * np.pi * (pupil.ux * s[0] + pupil.uy * s[1]) + np.pi * pupil.u2 * s[2]
    sq = np.sqrt(pupil.weights)
    base = sq * pupil.values * np.exp(-1j * centroid) / math.sqrt(2.0)
    v = np.stack([base * np.exp(-1j * psi), base * np.exp(1j * psi)])  # rows: K+, K-
    dpsi = phase_gradients(pupil)
    sign = np.array([1.0, -1.0])
    dv = np.empty((6, 2, v.shape[1]), dtype=complex)
    for mu in range(3):
        dv[mu] = -1j * sign[:, None] * dpsi[mu] * v
        dv[3 + mu] = -1j * dpsi[mu] * v

    u, sig, _ = np.linalg.svd(v.T, full_matrices=False)
    lam = sig**2
    if lam.min() <= 1e-14:
        raise DegenerateOverlapError("density operator is rank deficient at this scene")
    # X_mu = (d_mu rho) U, with rho = sum_a |v_a><v_a|
    proj = v.conj() @ u  # <v_a|u_i>, shape (2, 2)
    x = np.empty((6, v.shape[1], 2), dtype=complex)
    for mu in range(6):
        x[mu] = dv[mu].T @ proj + v.T @ (dv[mu].conj() @ u)
    d = np.einsum("nk,mnj->mkj", u.conj(), x)  # <i|d_mu rho|j>
    perp = x - u[None] @ d  # (I - Pi) d_mu rho |i>
    h = np.empty((6, 6))
    pair = lam[:, None] + lam[None, :]
    for mu in range(6):
        for nu in range(6):
            support = 2.0 * np.sum(np.real(d[mu] * d[nu].T) / pair)
            kernel = 4.0 * np.sum(np.real(np.sum(perp[mu].conj() * perp[nu], axis=0)) / lam)
            h[mu, nu] = support + kernel
    return h


def compute_blocks(pupil, scene, check=True):
    h_ss, overlap, _ = centroid_qfi(pupil, scene, check=check)
    sl = compute_h_sl_residual(pupil, scene, overlap)
    return QfiBlocks(h_ll=compute_h_ll(pupil), h_ss=h_ss, h_sl=sl.matrix, delta=overlap.delta, scene=scene)


def inverse_3x3(m):
    """Closed-form adjugate inverse of a 3x3 matrix."""
    m = np.asarray(m, dtype=float)
    adj = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            rows = [r for r in range(3) if r != j]
            cols = [c for c in range(3) if c != i]
            minor = m[np.ix_(rows, cols)]
            adj[i, j] = (-1) ** (i + j) * (minor[0, 0] * minor[1, 1] - minor[0, 1] * minor[1, 0])
    det = float(m[0] @ adj[:, 0])
    return adj / det


def invert_block(block, name):
    """Inverse of a symmetric positive-definite 3x3 block and its condition number."""
    block = np.asarray(block, dtype=float)
    if np.max(np.abs(block - block.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(block))):
        raise SingularBlockError(f"block {name} is not symmetric", block=name)
    eig = np.linalg.eigvalsh(0.5 * (block + block.T))
    if eig[0] <= SINGULAR_EIG:
        raise SingularBlockError(
            f"block {name} is not positive definite (smallest eigenvalue {eig[0]:.3e})",
            block=name,
            min_eigenvalue=float(eig[0]),
        )
    return inverse_3x3(block), float(eig[-1] / eig[0])


def assemble_and_invert(h_ll, h_ss):
    """Invert the block-diagonal QFI blockwise."""
    inv_ll, cond_ll = invert_block(h_ll, "h_ll")
    inv_ss, cond_ss = invert_block(h_ss, "h_ss")
    return QcrbResult(qcrb_ll=inv_ll, qcrb_ss=inv_ss, cond_ll=cond_ll, cond_ss=cond_ss)


# --- parameter sweeps -------------------------------------------------------


@dataclass(frozen=True)
class Sweep:
    """Values of one separation component with the other two held fixed."""

    axis: str
    values: tuple
    base_l: tuple = (0.0, 0.0, 0.0)
    s: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"sweep axis must be one of {AXES}, got {self.axis!r}")
        if len(self.values) == 0:
            raise ConfigError("sweep has no points")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @classmethod
    def from_range(cls, axis, start, stop, step, base_l=(0.0, 0.0, 0.0), s=(0.0, 0.0, 0.0)):
        if step <= 0:
            raise ConfigError(f"sweep step must be positive, got {step}")
        if stop < start:
            raise ConfigError(f"sweep stop {stop} is below start {start}")
        n = int(round((stop - start) / step)) + 1
        values = [start + i * step for i in range(n)]
        return cls(axis, tuple(values), tuple(base_l), tuple(s))

    def points(self):
        k = AXES.index(self.axis)
        for v in self.values:
            l = list(self.base_l)
            l[k] = v
            yield tuple(l)


@dataclass(frozen=True)
class GridRow:
    index: int
    l: tuple
    delta: float
    qcrb_s: tuple
    flag: str = ""


def _grid_point(pupil, index, l, s):
    scene = SceneParams(l, s)
    nan3 = (math.nan, math.nan, math.nan)
    try:
        h_ss, overlap, _ = centroid_qfi(pupil, scene)
    except DegenerateOverlapError as exc:
        return GridRow(index, l, float(exc.delta) if exc.delta is not None else math.nan, nan3, "degenerate")
    except PairQfiError as exc:
        return GridRow(index, l, math.nan, nan3, type(exc).__name__)
    try:
        inv, _ = invert_block(h_ss, "h_ss")
    except SingularBlockError:
        return GridRow(index, l, overlap.delta, nan3, "singular")
    return GridRow(index, l, overlap.delta, tuple(float(v) for v in np.diag(inv)))


def qcrb_grid(pupil, sweep, workers=1):
    """Centroid QCRB diagonal at each sweep point, ordered by sweep index.

    Points that cannot be evaluated are returned as flagged rows with NaN bounds.
    """
    points = list(enumerate(sweep.points()))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda p: _grid_point(pupil, p[0], p[1], sweep.s), points))
    else:
        rows = [_grid_point(pupil, i, l, sweep.s) for i, l in points]
    return sorted(rows, key=lambda r: r.index)
