"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line, printed in the pytest terminal summary
under "acceptance criteria" (and to stdout when run with ``-s``).
"""

import os
import time
import warnings
from contextlib import contextmanager

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES
from scipy.special import j1

from pairqfi import (
    SceneParams,
    SimulationConfig,
    Sweep,
    build_clear_circular_pupil,
    channel_derivatives,
    compute_h_ll,
    compute_h_sl_residual,
    compute_matrix_elements,
    compute_overlap,
    eigen_identities_check,
    qcrb_grid,
    run_experiment,
    sample_frame,
)
from pairqfi import cli
from pairqfi.channels import classical_fi
from pairqfi.montecarlo import substream
from pairqfi.overlap import flip_branch
from pairqfi.qfi import compute_h_ss, invert_block

WORKERS = min(4, os.cpu_count() or 1)


@contextmanager
def criterion(number, title):
    detail = {}
    start = time.perf_counter()
    try:
        yield detail
    except BaseException:
        _record(number, title, False, detail, time.perf_counter() - start)
        raise
    _record(number, title, True, detail, time.perf_counter() - start)


def _record(number, title, ok, detail, elapsed):
    info = ", ".join(f"{k}={v}" for k, v in detail.items())
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({info}; {elapsed:.1f} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)


def _random_scenes(rng, count, gap=1e-4, pupil=None):
    scenes = []
    while len(scenes) < count:
        v = rng.uniform(-1.0, 1.0, 6)
        scene = SceneParams(tuple(v[:3]), tuple(v[3:]))
        if compute_overlap(pupil, scene).one_minus_delta2 > gap:
            scenes.append(scene)
    return scenes


def test_c01_localization_qcrb():
    with criterion(1, "separation QCRB diagonal") as d:
        t0 = time.perf_counter()
        pupil = build_clear_circular_pupil()
        inv, _ = invert_block(compute_h_ll(pupil), "h_ll")
        elapsed = time.perf_counter() - t0
        diag = np.diag(inv)
        expected = np.array([1 / (4 * np.pi**2), 1 / (4 * np.pi**2), 3 / np.pi**2])
        rel = float(np.max(np.abs(diag / expected - 1)))
        d["diag"] = np.array2string(diag, precision=7)
        d["max_rel"] = f"{rel:.1e}"
        np.testing.assert_allclose(expected, [0.0253303, 0.0253303, 0.3039636], rtol=2e-6)
        assert rel < 1e-6
        assert elapsed < 1.0


def test_c02_offdiagonal_block_vanishes():
    with criterion(2, "off-diagonal block vanishes on 100 scenes") as d:
        t0 = time.perf_counter()
        pupil = build_clear_circular_pupil()
        scenes = _random_scenes(np.random.default_rng(2), 100, pupil=pupil)
        worst = max(compute_h_sl_residual(pupil, sc).max_abs for sc in scenes)
        elapsed = time.perf_counter() - t0
        d["max_abs"] = f"{worst:.1e}"
        assert worst < 1e-8
        assert elapsed < 30.0


def test_c03_overlap_oracles(pupil):
    with criterion(3, "overlap closed-form oracles") as d:
        lx = np.linspace(0.02, 1.5, 20)
        lz = np.linspace(0.05, 3.5, 20)
        k = 4 * np.pi * lx
        err_x = max(abs(compute_overlap(pupil, SceneParams((v, 0, 0))).delta - abs(2 * j1(q) / q))
                    for v, q in zip(lx, k))
        err_z = max(abs(compute_overlap(pupil, SceneParams((0, 0, v))).delta - abs(np.sinc(v))) for v in lz)
        d["jinc_err"] = f"{err_x:.1e}"
        d["sinc_err"] = f"{err_z:.1e}"
        assert err_x < 1e-8 and err_z < 1e-8


def test_c04_transverse_sweep_endpoints(pupil):
    with criterion(4, "centroid QCRB sweep endpoints") as d:
        times = []
        t0 = time.perf_counter()
        far = qcrb_grid(pupil, Sweep.from_range("x", 0.02, 1.0, 0.02, base_l=(0, 0.1, 0.025)))
        times.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        near = qcrb_grid(pupil, Sweep.from_range("x", 0.02, 1.0, 0.02, base_l=(0, 0.02, 0.025)))
        times.append(time.perf_counter() - t0)
        q_far = far[-1].qcrb_s[0]
        q_near = near[0].qcrb_s[0]
        d["at (1.0,0.1,0.025)"] = f"{q_far:.5f}"
        d["at (0.02,0.02,0.025)"] = f"{q_near:.5f}"
        d["max_sweep_s"] = f"{max(times):.1f}"
        assert far[-1].l == pytest.approx((1.0, 0.1, 0.025))
        assert near[0].l == pytest.approx((0.02, 0.02, 0.025))
        assert abs(q_far / 0.02533 - 1) < 0.10
        assert abs(q_near / 0.02533 - 1) < 0.30
        assert max(times) < 10.0


def test_c05_axial_minimum(pupil):
    with criterion(5, "minimum axial centroid QCRB") as d:
        rows = qcrb_grid(pupil, Sweep.from_range("z", 0.1, 2.0, 0.01, base_l=(0.1, 0.0, 0.0)))
        q = np.array([r.qcrb_s[2] for r in rows])
        k = int(np.nanargmin(q))
        d["min"] = f"{q[k]:.5f}"
        d["at_lz"] = f"{rows[k].l[2]:.2f}"
        assert all(r.flag == "" for r in rows)
        assert abs(q[k] / 0.304 - 1) < 0.03


def test_c06_xy_symmetry(pupil):
    with criterion(6, "x/y symmetry of sweep tables") as d:
        values = tuple(np.round(np.arange(0.02, 1.0 + 1e-9, 0.02), 10))
        gx = qcrb_grid(pupil, Sweep("x", values, base_l=(0, 0.1, 0.025)))
        gy = qcrb_grid(pupil, Sweep("y", values, base_l=(0.1, 0, 0.025)))
        diff = max(
            max(abs(a.qcrb_s[0] - b.qcrb_s[1]), abs(a.qcrb_s[1] - b.qcrb_s[0]), abs(a.qcrb_s[2] - b.qcrb_s[2]))
            for a, b in zip(gx, gy)
        )
        d["max_diff"] = f"{diff:.1e}"
        assert diff < 1e-9


def test_c07_identity_suite(pupil):
    with criterion(7, "eigenstate identities and branch-flip invariance") as d:
        scenes = _random_scenes(np.random.default_rng(7), 50, pupil=pupil)
        ident, flip = 0.0, 0.0
        for sc in scenes:
            ov = compute_overlap(pupil, sc)
            el = compute_matrix_elements(pupil, sc, ov)
            rep = eigen_identities_check(pupil, sc, ov, el)
            ident = max(ident, rep.residual, rep.diag_l_max, rep.offdiag_s_imag_max, rep.hermiticity_max)
            fov, fel = flip_branch(ov, el)
            flip = max(flip, float(np.max(np.abs(compute_h_ss(el, ov.delta) - compute_h_ss(fel, fov.delta)))))
        d["identity_residual"] = f"{ident:.1e}"
        d["flip_residual"] = f"{flip:.1e}"
        assert ident < 1e-8 and flip < 1e-9


def test_c08_multinomial_moments(pupil, basis):
    with criterion(8, "multinomial second moments over 1e5 frames") as d:
        m = channel_derivatives(pupil, basis, SceneParams((0.3, 0.1, 0.2)), cross_check=False)
        p = m.all_probs
        M, n = 1000, 100_000
        rng = substream(8, 9)
        counts = np.array([sample_frame(p, M, rng).all_counts for _ in range(n)], dtype=float)
        prod = counts[:, :, None] * counts[:, None, :]
        emp = prod.mean(axis=0)
        se = prod.std(axis=0, ddof=1) / np.sqrt(n)
        theory = M * (M - 1) * np.outer(p, p) + M * np.diag(p)
        z = float(np.max(np.abs(emp - theory) / se))
        d["max_z"] = f"{z:.2f}"
        assert z < 5.0


def test_c09_fisher_consistency(pupil, basis):
    with criterion(9, "channel derivatives and quantum dominance") as d:
        rng = np.random.default_rng(9)
        h_ll = compute_h_ll(pupil)
        worst_fd, worst_eig = 0.0, np.inf
        for v in rng.uniform(-0.5, 0.5, size=(10, 6)):
            model = channel_derivatives(pupil, basis, SceneParams(tuple(v[:3]), tuple(v[3:])), cross_check=True)
            worst_fd = max(worst_fd, model.fd_rel_error)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                j = classical_fi(model, 1.0).j_ll
            worst_eig = min(worst_eig, float(np.linalg.eigvalsh(h_ll - j)[0]))
        d["max_fd_rel"] = f"{worst_fd:.1e}"
        d["min_eig(H-J/M)"] = f"{worst_eig:.3g}"
        assert worst_fd < 1e-5 and worst_eig > -1e-6


def test_c10_desk_scale_estimation(pupil, basis):
    with criterion(10, "ML variance vs CRB at desk scale") as d:
        t0 = time.perf_counter()
        cases = [((0.1, 0.025, 0.025), 0), ((0.2, 0.025, 0.025), 0), ((0.3, 0.025, 0.025), 0),
                 ((0.025, 0.025, 0.15), 2), ((0.025, 0.025, 0.25), 2)]
        ratios, ok, flagged = [], [], 0
        for l, k in cases:
            cfg = SimulationConfig(true_l=l, sigma_s=(0, 0, 0), n_centroid_draws=1, frames_per_draw=200,
                                   photons_per_frame=100_000, seed=0, workers=WORKERS)
            rep = run_experiment(cfg, pupil, basis)
            flagged += rep.n_flagged
            r = float(rep.var_mean[k] / rep.crb_s0[k])
            lo, hi = (0.8, 1.25) if k == 0 else (0.75, 1.3)
            ratios.append(f"{'xyz'[k]}@{l[k]}:{r:.3f}")
            ok.append(lo <= r <= hi)
        elapsed = time.perf_counter() - t0
        d["ratios"] = " ".join(ratios)
        d["unconverged_frames"] = flagged
        assert elapsed < 300.0
        assert all(ok), f"ratios outside band: {ratios}"


def test_c11_determinism(tmp_path):
    with criterion(11, "byte-identical verify and simulate output") as d:
        sim = ["simulate", "--l", "0.2,0.025,0.025", "--draws", "2", "--frames", "6", "--photons", "20000",
               "--seed", "11"]
        ver = ["verify", "--samples", "20", "--seed", "11"]
        same = {}
        for name, args in (("verify", ver), ("simulate", sim)):
            outs = []
            for i, workers in enumerate(("1", "1", "4")):
                out = tmp_path / f"{name}{i}.csv"
                assert cli.main([*args, "--workers", workers, "--out", str(out)]) == 0
                outs.append(out.read_bytes())
            same[name] = outs[0] == outs[1] == outs[2]
        d.update(same)
        assert all(same.values())


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
