"""Multinomial photon-count simulation and maximum-likelihood separation estimates.

Every (draw, frame) pair gets its own counter-derived random stream, so the
experiment's output does not depend on execution order or thread count.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .aperture import QuadratureSpec
from .channels import PROB_FLOOR, ChannelProjector, fisher_at
from .errors import ConfigError, SingularBlockError
from .overlap import SceneParams
from .qfi import compute_h_ll

SIMPLEX_TOL = 1e-10
STREAM_CENTROID = 0
STREAM_FRAME = 1


def substream(seed, *key):
    """Independent Philox generator addressed by ``(seed, key...)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class CountFrame:
    counts: np.ndarray  # m_1..m_N
    m_bar: int
    M: int

    @property
    def all_counts(self):
        return np.append(self.counts, self.m_bar)


def sample_frame(probs, M, rng):
    """Draw one multinomial frame by sequential conditional binomials.

    ``probs`` includes the bucket probability as its last entry.
    """
    p = np.asarray(probs, dtype=float)
    if np.any(p < -SIMPLEX_TOL) or abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"probabilities are not on the simplex (sum {p.sum():.12g}, min {p.min():.3g})")
    p = np.clip(p, 0.0, None)
    counts = np.zeros(len(p), dtype=np.int64)
    remaining = int(M)
    rest = 1.0
    for i in range(len(p) - 1):
        if remaining == 0:
            break
        q = min(max(p[i] / rest, 0.0), 1.0) if rest > 0 else 0.0
        counts[i] = rng.binomial(remaining, q)
        remaining -= counts[i]
        rest -= p[i]
    counts[-1] = remaining
    return CountFrame(counts=counts[:-1], m_bar=int(counts[-1]), M=int(M))


def draw_centroid(sigma_s, rng):
    return tuple(float(rng.normal(0.0, sd)) if sd > 0 else 0.0 for sd in sigma_s)


# --- maximum likelihood -----------------------------------------------------


@dataclass(frozen=True)
class EstimatorSettings:
    multistart: int = 4
    jitter: float = 0.05
    xatol: float = 1e-6
    fatol: float = 1e-8
    maxiter: int = 4000
    simplex_size: float = 0.01


@dataclass(frozen=True)
class MLEstimate:
    l_hat: np.ndarray
    nll: float
    converged: bool

    @property
    def flagged(self):
        return not self.converged


def negative_log_likelihood(projector, l, counts, total):
    """``-sum m ln(P/m_hat)`` at ``s = 0``, i.e. NLL relative to the saturated fit."""
    probs = projector.probabilities(l)
    p = np.append(probs, 1.0 - probs.sum())
    p = np.maximum(p, PROB_FLOOR)
    nz = counts > 0
    m = counts[nz]
    return -float(np.sum(m * np.log(p[nz] * total / m)))


def _starts(init, settings, rng):
    init = np.asarray(init, dtype=float)
    starts = [init]
    for _ in range(settings.multistart - 1):
        x = init + rng.uniform(-settings.jitter, settings.jitter, size=3)
        # stay in the orthant of init; the likelihood is even in each sign
        x = np.where(init != 0, np.copysign(np.abs(x), init), x)
        starts.append(x)
    return starts


def ml_estimate(frame, pupil, basis, init, settings=None, projector=None, rng=None):
    """Maximize the multinomial likelihood over ``l`` with ``s`` fixed at zero.

    Nelder-Mead from ``settings.multistart`` starts jittered around ``init``.
    Sign-equivalent optima are resolved toward ``init``.
    """
    settings = settings or EstimatorSettings()
    projector = projector or ChannelProjector(pupil, basis)
    rng = rng if rng is not None else np.random.default_rng(0)
    counts = frame.all_counts.astype(float)
    init = np.asarray(init, dtype=float)

    def fun(x):
        return negative_log_likelihood(projector, x, counts, frame.M)

    best = None
    for x0 in _starts(init, settings, rng):
        simplex = np.vstack([x0, x0 + settings.simplex_size * np.eye(3)])
        res = minimize(
            fun,
            x0,
            method="Nelder-Mead",
            options={
                "initial_simplex": simplex,
                "xatol": settings.xatol,
                "fatol": settings.fatol,
                "maxiter": settings.maxiter,
                "maxfev": 2 * settings.maxiter,
            },
        )
        cand = (float(res.fun), float(np.linalg.norm(res.x - init)), res)
        if best is None:
            best = cand
            continue
        tie = abs(cand[0] - best[0]) <= 1e-9 * max(1.0, abs(best[0]))
        if (not tie and cand[0] < best[0]) or (tie and cand[1] < best[1]):
            best = cand
    res = best[2]
    x, fx = _nearest_equivalent(fun, np.asarray(res.x), float(res.fun), init)
    return MLEstimate(l_hat=x, nll=fx, converged=bool(res.success))


_SIGN_PATTERNS = np.array([[sx, sy, sz] for sx in (1, -1) for sy in (1, -1) for sz in (1, -1)], dtype=float)


def _nearest_equivalent(fun, x, fx, init, rtol=1e-9):
    """Among sign reflections of ``x`` with the same likelihood, pick the one closest to ``init``."""
    best_x, best_f, best_d = x, fx, np.linalg.norm(x - init)
    for signs in _SIGN_PATTERNS[1:]:
        y = x * signs
        fy = fun(y)
        if abs(fy - fx) <= rtol * max(1.0, abs(fx)):
            d = np.linalg.norm(y - init)
            if d < best_d:
                best_x, best_f, best_d = y, fy, d
    return best_x, best_f


# --- experiment -------------------------------------------------------------


@dataclass(frozen=True)
class SimulationConfig:
    """Monte-Carlo protocol; defaults are desk scale."""

    true_l: tuple
    sigma_s: tuple = (0.005, 0.005, 0.01)
    n_centroid_draws: int = 10
    frames_per_draw: int = 200
    photons_per_frame: int = 100_000
    seed: int = 0
    estimator: EstimatorSettings = field(default_factory=EstimatorSettings)
    estimator_quadrature: QuadratureSpec = field(default_factory=lambda: QuadratureSpec(32, 64))
    workers: int = 1

    def __post_init__(self):
        if len(self.true_l) != 3 or len(self.sigma_s) != 3:
            raise ConfigError("true_l and sigma_s need three components")
        if min(self.n_centroid_draws, self.frames_per_draw, self.photons_per_frame) < 1:
            raise ConfigError("draw, frame and photon counts must be positive")
        if self.frames_per_draw < 2:
            raise ConfigError("at least two frames per draw are needed for a variance")
        if any(sd < 0 for sd in self.sigma_s):
            raise ConfigError("centroid jitter must be nonnegative")
        if self.estimator.multistart < 1:
            raise ConfigError("multistart must be at least 1")

    @classmethod
    def full_scale(cls, true_l, seed=0, **kw):
        return cls(
            true_l=tuple(true_l),
            sigma_s=(0.005, 0.005, 0.01),
            n_centroid_draws=40,
            frames_per_draw=400,
            photons_per_frame=1_000_000,
            seed=seed,
            **kw,
        )


@dataclass(frozen=True)
class DrawResult:
    index: int
    s: tuple
    variance: np.ndarray
    mean: np.ndarray
    crb_at_s: np.ndarray
    n_flagged: int


@dataclass(frozen=True)
class EstimationReport:
    config: SimulationConfig
    draws: list
    var_mean: np.ndarray
    var_std: np.ndarray
    crb_s0: np.ndarray
    crb_avg: np.ndarray
    qcrb: np.ndarray
    n_flagged: int
    estimator_model_error: float
    branch: str = "orthant of the true separation (initialization)"


def _crb_diag(pupil, basis, scene, M, projector):
    try:
        return np.diag(fisher_at(pupil, basis, scene, M, projector=projector).crb())
    except (SingularBlockError, ValueError):
        return np.full(3, math.inf)


def _frame_task(args):
    cfg, projector_est, probs, d, f = args
    rng = substream(cfg.seed, STREAM_FRAME, d, f)
    frame = sample_frame(probs, cfg.photons_per_frame, rng)
    est = ml_estimate(frame, None, None, cfg.true_l, cfg.estimator, projector=projector_est, rng=rng)
    return d, f, est


def run_experiment(config, pupil, basis):
    """Simulate frames at jittered centroids and estimate ``l`` assuming ``s = 0``."""
    projector = ChannelProjector(pupil, basis)
    projector_est = ChannelProjector(pupil.with_spec(config.estimator_quadrature), basis)
    l = tuple(config.true_l)
    model_error = float(np.max(np.abs(projector.probabilities(l) - projector_est.probabilities(l))))

    centroids = [draw_centroid(config.sigma_s, substream(config.seed, STREAM_CENTROID, d))
                 for d in range(config.n_centroid_draws)]
    tasks = []
    for d, s in enumerate(centroids):
        p = projector.probabilities(l, s)
        probs = np.append(p, max(1.0 - p.sum(), 0.0))
        probs = probs / probs.sum()
        tasks.extend((config, projector_est, probs, d, f) for f in range(config.frames_per_draw))

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_frame_task, tasks))
    else:
        results = [_frame_task(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))

    M = config.photons_per_frame
    draws = []
    for d, s in enumerate(centroids):
        ests = [r[2] for r in results if r[0] == d]
        good = np.array([e.l_hat for e in ests if e.converged])
        n_flag = sum(e.flagged for e in ests)
        if len(good) >= 2:
            var = good.var(axis=0, ddof=1)
            mean = good.mean(axis=0)
        else:
            var = np.full(3, math.nan)
            mean = np.full(3, math.nan)
        crb_s = _crb_diag(pupil, basis, SceneParams(l, s), M, projector)
        draws.append(DrawResult(d, s, var, mean, crb_s, n_flag))

    variances = np.array([dr.variance for dr in draws])
    return EstimationReport(
        config=config,
        draws=draws,
        var_mean=variances.mean(axis=0),
        var_std=variances.std(axis=0, ddof=1) if len(draws) > 1 else np.zeros(3),
        crb_s0=_crb_diag(pupil, basis, SceneParams(l), M, projector),
        crb_avg=np.mean([dr.crb_at_s for dr in draws], axis=0),
        qcrb=np.diag(np.linalg.inv(compute_h_ll(pupil))) / M,
        n_flagged=sum(dr.n_flagged for dr in draws),
        estimator_model_error=model_error,
    )
