"""Fisher-information limits for resolving a pair of point sources in 3D.

Every subcommand writes one CSV table (``#`` metadata line, header, rows).
``--plot`` additionally renders a PNG next to the CSV for the sweep and
simulation commands.
"""

import argparse
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .aperture import QuadratureSpec, ZernikeBasis, build_clear_circular_pupil, build_pupil, gaussian_apodized_amplitude
from .channels import ChannelProjector, channel_derivatives, classical_fi, fisher_at
from .config import COMMAND_KEYS, parse_config_text, resolve
from .errors import (
    ConfigError,
    ConsistencyError,
    DegenerateOverlapError,
    QuadratureConvergenceError,
    SingularBlockError,
)
from .montecarlo import STREAM_CENTROID, EstimatorSettings, SimulationConfig, draw_centroid, run_experiment, substream
from .overlap import SceneParams, eigen_identities_check, flip_branch
from .qfi import (
    AXES,
    Sweep,
    centroid_qfi,
    compute_h_ll,
    compute_h_sl_residual,
    compute_h_ss,
    invert_block,
    qcrb_grid,
    qfi_matrix_direct,
)
from .report import CsvTable, config_hash

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3
EXIT_CONSISTENCY = 4

VERIFY_MIN_GAP = 1e-4
PAIRS = ("xx", "xy", "xz", "yy", "yz", "zz")
PAIR_INDEX = {"xx": (0, 0), "xy": (0, 1), "xz": (0, 2), "yy": (1, 1), "yz": (1, 2), "zz": (2, 2)}
# keys that do not change the numbers in the table
NEUTRAL_KEYS = {"out", "plot", "workers", "outdir"}

FULL_SCALE = {"draws": 40, "frames": 400, "photons": 1_000_000, "sigma_s": (0.005, 0.005, 0.01)}


def _upper(m):
    return [m[PAIR_INDEX[p]] for p in PAIRS]


def make_pupil(cfg):
    spec = QuadratureSpec(cfg["nr"], cfg["ntheta"])
    if cfg["pupil"] == "clear":
        return build_clear_circular_pupil(spec)
    return build_pupil(gaussian_apodized_amplitude(cfg["pupil_sigma"]), spec, kind="gaussian", warn=False)


def _table(command, cfg, columns, **extra):
    meta = {
        "command": command,
        "config_hash": config_hash({k: v for k, v in cfg.items() if k not in NEUTRAL_KEYS}),
        "quadrature": f"{cfg['nr']}x{cfg['ntheta']}",
        "pupil": cfg["pupil"],
    }
    if "seed" in cfg:
        meta["seed"] = cfg["seed"]
    meta.update(extra)
    return CsvTable(columns=list(columns), meta=meta)


def cmd_qcrb_ll(cfg):
    pupil = make_pupil(cfg)
    h_ll = compute_h_ll(pupil)
    qcrb_ll, _ = invert_block(h_ll, "h_ll")
    table = _table("qcrb-ll", cfg, [f"hll_{p}" for p in PAIRS] + [f"qcrb_{p}" for p in PAIRS] + ["flag"])
    table.add(*_upper(h_ll), *_upper(qcrb_ll), "")
    return table


def make_sweep(cfg):
    if "axis" not in cfg:
        raise ConfigError("sweep needs 'axis'")
    if "values" in cfg:
        return Sweep(cfg["axis"], cfg["values"], cfg["l"], cfg["s"])
    missing = [k for k in ("start", "stop", "step") if k not in cfg]
    if missing:
        raise ConfigError(f"sweep needs 'values' or all of start/stop/step (missing {', '.join(missing)})")
    return Sweep.from_range(cfg["axis"], cfg["start"], cfg["stop"], cfg["step"], cfg["l"], cfg["s"])


SWEEP_COLUMNS = ["l_x", "l_y", "l_z", "delta", "qcrb_sx", "qcrb_sy", "qcrb_sz", "flag"]


def cmd_qcrb_ss(cfg):
    sweep = make_sweep(cfg)
    pupil = make_pupil(cfg)
    rows = qcrb_grid(pupil, sweep, workers=cfg.get("workers", 1))
    table = _table("qcrb-ss", cfg, SWEEP_COLUMNS, axis=sweep.axis)
    for r in rows:
        table.add(*r.l, r.delta, *r.qcrb_s, r.flag)
    return table


def verify_scene(pupil, index, seed):
    rng = substream(seed, 2, index)
    l = tuple(rng.uniform(-1.0, 1.0, 3))
    s = tuple(rng.uniform(-1.0, 1.0, 3))
    return SceneParams(l, s)


VERIFY_COLUMNS = [
    "row", "l_x", "l_y", "l_z", "s_x", "s_y", "s_z", "delta", "hsl_max", "hsl_first_real",
    "identity_residual", "hermiticity", "branch_residual", "direct_qfi_residual", "flag",
]


def verify_one(pupil, scene):
    """Residual statistics for one scene, or ``None`` when it is too close to degenerate."""
    h_ss, overlap, elements = centroid_qfi(pupil, scene)
    if 1.0 - overlap.delta**2 <= VERIFY_MIN_GAP:
        return overlap, None
    sl = compute_h_sl_residual(pupil, scene, overlap)
    ident = eigen_identities_check(pupil, scene, overlap, elements)
    f_overlap, f_elements = flip_branch(overlap, elements)
    branch = float(np.max(np.abs(compute_h_ss(f_elements, f_overlap.delta) - h_ss)))
    direct = qfi_matrix_direct(pupil, scene)
    blocks = np.block([[compute_h_ll(pupil), sl.matrix.T], [sl.matrix, h_ss]])
    direct_res = float(np.max(np.abs(direct - blocks)) / max(1.0, np.max(np.abs(direct))))
    return overlap, {
        "hsl_max": sl.max_abs,
        "hsl_first_real": sl.first_sum_real_max,
        "identity_residual": ident.residual,
        "hermiticity": ident.hermiticity_max,
        "branch_residual": branch,
        "direct_qfi_residual": direct_res,
    }


def cmd_verify(cfg):
    if cfg["samples"] < 1:
        raise ConfigError("samples must be at least 1")
    pupil = make_pupil(cfg)
    table = _table("verify", cfg, VERIFY_COLUMNS)
    stats = VERIFY_COLUMNS[8:14]
    maxima = {k: 0.0 for k in stats}
    scenes = [verify_scene(pupil, i, cfg["seed"]) for i in range(cfg["samples"])]
    if cfg.get("workers", 1) > 1:
        with ThreadPoolExecutor(max_workers=cfg["workers"]) as pool:
            results = list(pool.map(lambda sc: verify_one(pupil, sc), scenes))
    else:
        results = [verify_one(pupil, sc) for sc in scenes]
    for i, (scene, (overlap, res)) in enumerate(zip(scenes, results)):
        if res is None:
            table.add(i, *scene.l, *scene.s, overlap.delta, *([math.nan] * len(stats)), "degenerate")
            continue
        for k in stats:
            maxima[k] = max(maxima[k], res[k])
        table.add(i, *scene.l, *scene.s, overlap.delta, *(res[k] for k in stats), "")
    nan6 = [math.nan] * 7
    table.add("max", *nan6, *(maxima[k] for k in stats), "summary")
    return table


def _basis(cfg):
    return ZernikeBasis(cfg["channels"])


def cmd_channels(cfg):
    pupil = make_pupil(cfg)
    basis = _basis(cfg)
    scene = SceneParams(cfg["l"], cfg["s"])
    model = channel_derivatives(pupil, basis, scene)
    n = basis.n_modes
    names = [f"P{k}" for k in range(1, n + 1)] + ["P_bar"]
    dnames = [f"d{p}_dl{a}" for p in names for a in AXES]
    table = _table("channels", cfg, names + dnames + ["fd_rel_error", "flag"])
    table.add(*model.all_probs, *model.all_dprobs.ravel(), model.fd_rel_error, "")
    return table


def cmd_fi(cfg):
    pupil = make_pupil(cfg)
    basis = _basis(cfg)
    M = cfg["photons"]
    scene = SceneParams(cfg["l"], cfg["s"])
    model = channel_derivatives(pupil, basis, scene)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fi = classical_fi(model, M)
    total = fi.total
    eig = np.linalg.eigvalsh(total)
    qcrb = np.diag(np.linalg.inv(compute_h_ll(pupil))) / M
    flag = ""
    try:
        crb = _upper(fi.crb())
    except SingularBlockError:
        crb = [math.nan] * 6
        flag = "singular"
    columns = (["photons"] + [f"j_{p}" for p in PAIRS] + [f"crb_{p}" for p in PAIRS]
               + ["qcrb_xx", "qcrb_yy", "qcrb_zz", "eig_1", "eig_2", "eig_3", "flag"])
    table = _table("fi", cfg, columns)
    table.add(M, *_upper(total), *crb, *qcrb, *eig, flag)
    return table


SIM_COLUMNS = (
    ["l_x", "l_y", "l_z", "row", "s_x", "s_y", "s_z"]
    + [f"var_{a}" for a in AXES] + [f"var_std_{a}" for a in AXES] + [f"mean_{a}" for a in AXES]
    + [f"crb_s_{a}" for a in AXES] + [f"crb0_{a}" for a in AXES] + [f"crb_avg_{a}" for a in AXES]
    + [f"qcrb_{a}" for a in AXES] + ["n_flagged", "flag"]
)


def simulation_config(cfg, l):
    return SimulationConfig(
        true_l=tuple(l),
        sigma_s=cfg["sigma_s"],
        n_centroid_draws=cfg["draws"],
        frames_per_draw=cfg["frames"],
        photons_per_frame=cfg["photons"],
        seed=cfg["seed"],
        estimator=EstimatorSettings(multistart=cfg["multistart"], jitter=cfg["jitter"], xatol=cfg["xatol"]),
        estimator_quadrature=QuadratureSpec(cfg["estimator_nr"], cfg["estimator_ntheta"]),
        workers=cfg["workers"],
    )


def simulation_points(cfg):
    if "values" in cfg and "axis" not in cfg:
        raise ConfigError("'values' needs 'axis'")
    if "axis" in cfg:
        if "values" not in cfg:
            raise ConfigError("simulate sweeps take explicit 'values'")
        return list(Sweep(cfg["axis"], cfg["values"], cfg["l"]).points())
    return [tuple(cfg["l"])]


def cmd_simulate(cfg):
    pupil = make_pupil(cfg)
    basis = _basis(cfg)
    points = simulation_points(cfg)
    table = _table("simulate", cfg, SIM_COLUMNS, axis=cfg.get("axis", "x"), branch="init-orthant")
    nan3 = [math.nan] * 3
    for l in points:
        rep = run_experiment(simulation_config(cfg, l), pupil, basis)
        for d in rep.draws:
            flag = "flagged" if d.n_flagged else ""
            table.add(*l, d.index, *d.s, *d.variance, *nan3, *d.mean, *d.crb_at_s,
                      *rep.crb_s0, *rep.crb_avg, *rep.qcrb, d.n_flagged, flag)
        flag = "flagged" if rep.n_flagged else "summary"
        means = np.nanmean([d.mean for d in rep.draws], axis=0)
        table.add(*l, "summary", *nan3, *rep.var_mean, *rep.var_std, *means, *nan3,
                  *rep.crb_s0, *rep.crb_avg, *rep.qcrb, rep.n_flagged, flag)
    return table


# --- figure bundle -----------------------------------------------------------

FIG_TRANSVERSE = np.round(np.arange(0.02, 1.0 + 1e-9, 0.02), 10)
FIG_AXIAL = np.round(np.arange(0.02, 2.0 + 1e-9, 0.02), 10)
FIG_FAMILY = (0.02, 0.1, 0.2, 0.3)
CRB_POINTS = np.concatenate([[0.002, 0.005, 0.01], np.round(np.arange(0.02, 0.4 + 1e-9, 0.02), 10)])
SIM_POINTS = {"x": (0.1, 0.2, 0.3), "z": (0.15, 0.25)}


def _sweep_family(cfg, pupil, axis, values, vary, family, fixed):
    """Run one sweep per value in ``family`` assigned to component ``vary``."""
    table = _table("figures", cfg, ["curve"] + SWEEP_COLUMNS, axis=axis)
    curves = {}
    for c in family:
        base = list(fixed)
        base[AXES.index(vary)] = c
        rows = qcrb_grid(pupil, Sweep(axis, tuple(values), tuple(base)))
        for r in rows:
            table.add(f"l{vary}={c:g}", *r.l, r.delta, *r.qcrb_s, r.flag)
        curves[f"$l_{vary}$={c:g}"] = rows
    return table, curves


def cmd_figures(cfg):
    from .plotting import plot_crb_curves, plot_qcrb_curves, plot_simulation_table

    outdir = cfg["outdir"]
    os.makedirs(outdir, exist_ok=True)
    pupil = make_pupil(cfg)
    written = []

    def emit(table, name):
        path = os.path.join(outdir, name + ".csv")
        table.write(path)
        written.append(path)

    panels = [
        ("qcrb_vs_lx", "x", FIG_TRANSVERSE, "y", "x"),
        ("qcrb_vs_ly", "y", FIG_TRANSVERSE, "x", "x"),
        ("qcrb_vs_lz", "z", FIG_AXIAL, "x", "z"),
    ]
    for name, axis, values, vary, comp in panels:
        lz_values = (0.025, 0.25) if axis != "z" else (None,)
        for lz in lz_values:
            fixed = (0.0, 0.0, lz if lz is not None else 0.0)
            tag = f"{name}_lz{lz:g}" if lz is not None else name
            table, curves = _sweep_family(cfg, pupil, axis, values, vary, FIG_FAMILY, fixed)
            emit(table, tag)
            k = AXES.index(comp)
            plot_qcrb_curves(
                {lab: ([r.l[AXES.index(axis)] for r in rows], [r.qcrb_s[k] for r in rows])
                 for lab, rows in curves.items()},
                axis, comp, os.path.join(outdir, tag + ".png"),
                title=f"$l_z$={lz:g}" if lz is not None else None,
            )

    basis = _basis(cfg)
    projector = ChannelProjector(pupil, basis)
    M = cfg["photons"]
    for axis in ("x", "z"):
        table = _table("figures", cfg, ["l_x", "l_y", "l_z", f"crb0_{axis}", f"crb_avg_{axis}", f"qcrb_{axis}", "flag"],
                       axis=axis)
        k = AXES.index(axis)
        centroids = [draw_centroid(cfg["sigma_s"], substream(cfg["seed"], STREAM_CENTROID, d))
                     for d in range(cfg["draws"])]
        qcrb = np.diag(np.linalg.inv(compute_h_ll(pupil)))[k] / M
        xs, c0, cavg = [], [], []
        for v in CRB_POINTS:
            l = [0.025, 0.025, 0.025]
            l[k] = float(v)
            crb0 = _crb_entry(pupil, basis, SceneParams(l), M, projector, k)
            crbs = [_crb_entry(pupil, basis, SceneParams(l, s), M, projector, k) for s in centroids]
            table.add(*l, crb0, float(np.mean(crbs)), qcrb, "")
            xs.append(v)
            c0.append(crb0)
            cavg.append(float(np.mean(crbs)))
        emit(table, f"crb_vs_l{axis}")
        plot_crb_curves(xs, {"CRB, $s=0$": c0, "CRB, draw average": cavg, "QCRB": [qcrb] * len(xs)},
                        axis, os.path.join(outdir, f"crb_vs_l{axis}.png"))
        if cfg["simulate"]:
            sim_cfg = dict(cfg, axis=axis, l=(0.025, 0.025, 0.025), values=SIM_POINTS[axis])
            sim = cmd_simulate(sim_cfg)
            emit(sim, f"sim_vs_l{axis}")
            plot_simulation_table(sim, os.path.join(outdir, f"sim_vs_l{axis}.png"))

    index = _table("figures", cfg, ["file"])
    for path in written:
        index.add(os.path.basename(path))
    return index


def _crb_entry(pupil, basis, scene, M, projector, k):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            return float(fisher_at(pupil, basis, scene, M, projector=projector).crb()[k, k])
        except (SingularBlockError, ValueError):
            return math.inf


COMMANDS = {
    "qcrb-ll": cmd_qcrb_ll,
    "qcrb-ss": cmd_qcrb_ss,
    "verify": cmd_verify,
    "channels": cmd_channels,
    "fi": cmd_fi,
    "simulate": cmd_simulate,
    "figures": cmd_figures,
}

HELP = {
    "qcrb-ll": "separation QFI block and its inverse",
    "qcrb-ss": "centroid QCRB along a separation sweep",
    "verify": "randomized identity and off-diagonal-block checks",
    "channels": "Zernike channel probabilities and l-derivatives",
    "fi": "classical multinomial Fisher information and CRB",
    "simulate": "Monte-Carlo ML separation estimation",
    "figures": "write all figure tables and PNGs to a directory",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="pairqfi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, keys in COMMAND_KEYS.items():
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help="flat key=value config file")
        for key in sorted(keys):
            flag = "--" + key.replace("_", "-")
            if key == "plot":
                p.add_argument(flag, action="store_const", const="1", help="render a PNG next to the CSV")
            else:
                p.add_argument(flag, dest=key, metavar=key.upper())
    return parser


def apply_scale(cfg, explicit):
    if cfg.get("scale") == "full":
        for k, v in FULL_SCALE.items():
            if k not in explicit:
                cfg[k] = v
    return cfg


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    file_items = {}
    if args.config:
        try:
            with open(args.config) as fh:
                file_items = parse_config_text(fh.read(), args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    cfg = resolve(command, file_items, overrides)
    explicit = set(file_items) | {k for k, v in overrides.items() if v is not None}
    cfg = apply_scale(cfg, explicit)
    if cfg.get("plot") and cfg.get("out", "-") == "-":
        raise ConfigError("--plot needs --out so the figure has a place to go")

    table = COMMANDS[command](cfg)
    out = cfg.get("out", "-")
    if out == "-":
        sys.stdout.write(table.render())
    else:
        table.write(out)
    if cfg.get("plot"):
        from .plotting import plot_qcrb_table, plot_simulation_table

        png = os.path.splitext(out)[0] + ".png"
        (plot_qcrb_table if command == "qcrb-ss" else plot_simulation_table)(table, png)
    return table


def main(argv=None):
    try:
        run(argv)
    except ConfigError as exc:
        print(f"pairqfi: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateOverlapError, QuadratureConvergenceError, SingularBlockError) as exc:
        print(f"pairqfi: numerical failure: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ConsistencyError as exc:
        print(f"pairqfi: internal consistency failure: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
