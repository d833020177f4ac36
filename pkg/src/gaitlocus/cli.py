"""Command-line front end: seed, trace, verify, plot and info pipelines.

Every numeric output is written with ``%.17g`` through a temporary file that
is renamed into place, so identical configurations give byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import calculus
from .errors import GaitLocusError
from .gait_space import GaitParams
from .locus import STOP_MIN_DISPLACEMENT, LocusOptions, LocusTrace, trace_locus
from .seed import ConstrainedOptions, find_max_efficiency_gait, solve_constrained
from .swimmer import SwimmerGeometry, SwimmerModel
from .toy import ToyModel

log = logging.getLogger("gaitlocus")

SYSTEMS = {"toy": None, "three_link": 3, "four_link": 4}
GAIT_SAMPLES = 256
CONTOUR_GRID = 101
CONTOUR_LIMIT = 2.5
TRACE_COLUMNS = ["step", "displacement", "cost", "efficiency", "lambda", "grad_L_norm", "classification"]
VERIFY_COLUMNS = ["g", "s_trace", "s_oracle", "rel_dev"]

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Run configuration; the JSON config file uses exactly these keys."""

    system: str = "three_link"
    fourier_order: int = 3
    samples_per_cycle: Optional[int] = None  # system default when null
    fd_step: Optional[float] = None  # gradient step; Hessians use 10x; defaults scale with |p|
    null_tol: float = calculus.DEFAULT_NULL_TOL
    rk_step: float = 1e-2
    min_displacement_fraction: float = 0.1
    direction: str = "x"
    decreasing: bool = True
    levels: List[float] = field(default_factory=lambda: [1.0, 0.75, 0.5, 0.25])
    verify_tol: float = 0.01
    geometry: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)  # {"init": [...] optional initial parameter vector}
    outputs: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self):
        if self.system not in SYSTEMS:
            raise ConfigError(f"unknown system '{self.system}' (known: {', '.join(SYSTEMS)})")
        if self.direction != "x":
            raise ConfigError("only the x direction is supported")
        for name in ("fourier_order", "null_tol", "rk_step", "verify_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("samples_per_cycle", "fd_step"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 < self.min_displacement_fraction < 1.0:
            raise ConfigError("min_displacement_fraction must lie in (0, 1)")
        if not self.levels or any(not 0.0 < lv <= 1.0 for lv in self.levels):
            raise ConfigError("levels must be fractions in (0, 1]")
        bad = set(self.geometry) - {"drag_ratio", "link_length", "c_long"}
        if bad:
            raise ConfigError(f"unknown geometry keys: {', '.join(sorted(bad))}")
        for key, value in self.geometry.items():
            if not value > 0:
                raise ConfigError(f"geometry {key} must be positive")

    def output(self, key: str, default: str) -> Path:
        return Path(self.outputs.get(key, default.format(system=self.system)))


def build_model(cfg: RunConfig):
    steps = {}
    if cfg.fd_step is not None:
        steps = {"grad_step": cfg.fd_step, "hess_step": 10.0 * cfg.fd_step}
    if cfg.system == "toy":
        return ToyModel(n_samples=cfg.samples_per_cycle or 512, **steps)
    geom = SwimmerGeometry(n_links=SYSTEMS[cfg.system], **cfg.geometry)
    return SwimmerModel(geom, order=cfg.fourier_order, n_samples=cfg.samples_per_cycle or 64, **steps)


# ---------------------------------------------------------------- file output

def _fmt(x) -> str:
    return "%.17g" % x


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    umask = os.umask(0)
    os.umask(umask)
    try:
        os.chmod(tmp, 0o666 & ~umask)
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def trace_header(n_params: int) -> List[str]:
    return TRACE_COLUMNS + [f"p_{i}" for i in range(n_params)]


def write_trace_csv(path, trace: LocusTrace):
    n = trace.states[0].p.size
    rows = []
    for st in trace.states:
        rows.append([str(st.step), _fmt(st.g), _fmt(st.s), _fmt(st.efficiency), _fmt(st.lam),
                     _fmt(st.grad_L_norm), st.classification] + [_fmt(v) for v in st.p])
    atomic_write(path, _csv_text(trace_header(n), rows))


def read_trace_csv(path):
    """Rows of the trace CSV as a dict of arrays plus the parameter matrix."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if header[: len(TRACE_COLUMNS)] != TRACE_COLUMNS:
        raise ConfigError(f"{path} is not a trace file")
    n_fixed = len(TRACE_COLUMNS)
    cols = {name: np.array([float(r[i]) for r in rows]) for i, name in enumerate(TRACE_COLUMNS)
            if name != "classification"}
    cols["classification"] = [r[6] for r in rows]
    P = np.array([[float(v) for v in r[n_fixed:]] for r in rows])
    return cols, P


def write_gait_samples(path, model, p):
    phi, r, rdot = model.shape_samples(p, GAIT_SAMPLES)
    n = r.shape[1]
    header = ["phi"] + [f"r_{j}" for j in range(n)] + [f"rdot_{j}" for j in range(n)]
    rows = [[_fmt(phi[i])] + [_fmt(v) for v in r[i]] + [_fmt(v) for v in rdot[i]] for i in range(phi.size)]
    atomic_write(path, _csv_text(header, rows))


def seed_to_json(model, p, report=None) -> dict:
    if isinstance(model, SwimmerModel):
        data = model.gait(p).to_json()
    else:
        data = {"p1": float(p[0]), "p2": float(p[1])}
    data["system"] = model.name
    if report is not None:
        data.update(displacement=report.g, cost=report.s, converged=report.converged)
    return data


def seed_from_json(model, data) -> np.ndarray:
    if data.get("system", model.name) != model.name:
        raise ConfigError(f"seed file is for system '{data['system']}', not '{model.name}'")
    if isinstance(model, SwimmerModel):
        params = GaitParams.from_json(data)
        if params.n_joints != model.n_joints or params.order != model.order:
            raise ConfigError("seed file gait dimensions do not match the configured model")
        return params.to_vector()
    return np.array([data["p1"], data["p2"]], dtype=float)


def _level_tag(fraction: float) -> str:
    return ("%.4f" % fraction).rstrip("0").rstrip(".").replace(".", "p")


# ---------------------------------------------------------------- pipelines

def compute_seed(model, cfg: RunConfig):
    init = cfg.seeds.get("init")
    p0 = np.asarray(init, dtype=float) if init is not None else model.initial_guess()
    if p0.size != model.n_params:
        raise ConfigError(f"seeds.init must have {model.n_params} entries")
    return find_max_efficiency_gait(model, p0)


def load_or_compute_seed(model, cfg: RunConfig, seed_file: Optional[Path]):
    if seed_file is not None and seed_file.exists():
        return seed_from_json(model, json.loads(seed_file.read_text()))
    report = compute_seed(model, cfg)
    if not report.converged:
        raise GaitLocusError(f"seed search did not converge ({report.message})")
    if seed_file is not None:
        atomic_write(seed_file, json.dumps(seed_to_json(model, report.p, report), indent=2) + "\n")
    return report.p


def run_trace(model, cfg: RunConfig, seed) -> LocusTrace:
    g_seed = model.displacement(seed)
    opts = LocusOptions(
        rk_step=cfg.rk_step,
        null_tol=cfg.null_tol,
        min_displacement=cfg.min_displacement_fraction * g_seed,
        decreasing=cfg.decreasing,
        levels=[f * g_seed for f in cfg.levels if f < 1.0],
    )
    return trace_locus(model, seed, opts)


def _oracle(model, g_c, starts, trace_s):
    best = None
    for start in starts:
        try:
            rep = solve_constrained(model, g_c, start, ConstrainedOptions())
        except GaitLocusError as exc:
            log.warning("oracle solve at g=%.6g failed: %s", g_c, exc)
            continue
        if abs(rep.g - g_c) > 1e-6 * (1.0 + abs(g_c)):
            continue
        if best is None or rep.s < best.s:
            best = rep
    if best is None:
        raise GaitLocusError(f"no oracle solve reached g={g_c:.6g}")
    return best


def verify_levels(model, cols, P, fractions: Sequence[float], cold_start, workers: Optional[int] = None):
    """Oracle costs at trace levels: warm start from the neighbouring trace state, plus a cold start."""
    g = cols["displacement"]
    g_seed = g[0]
    jobs = []
    for f in fractions:
        g_c = f * g_seed
        hits = np.flatnonzero(np.abs(g - g_c) <= 1e-9 * max(1.0, abs(g_c)))
        if hits.size == 0:
            raise GaitLocusError(f"trace has no state at displacement fraction {f}")
        i = int(hits[0])
        # the neighbouring state lies on a different level, so the warm start is a genuine solve
        j = i + 1 if i + 1 < len(g) else i - 1
        starts = [P[j]] if j >= 0 else []
        starts.append(cold_start)
        jobs.append((g_c, cols["cost"][i], starts))
    with ThreadPoolExecutor(max_workers=workers or min(len(jobs), os.cpu_count() or 1)) as pool:
        reports = list(pool.map(lambda job: _oracle(model, job[0], job[2], job[1]), jobs))
    rows = []
    for (g_c, s_trace, _), rep in zip(jobs, reports):
        rows.append((g_c, s_trace, rep.s, abs(s_trace - rep.s) / abs(rep.s)))
    return rows


# ---------------------------------------------------------------- plotting

def _svg_figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "gaitlocus"
    matplotlib.rcParams["svg.fonttype"] = "none"
    return plt


def _save_svg(fig, path):
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    atomic_write(path, buf.getvalue())


def curvature_grid(model, i=0, j=1, n=CONTOUR_GRID, limit=CONTOUR_LIMIT):
    """Contour data for the plane of joints ``(i, j)``, other joints held at zero."""
    a = np.linspace(-limit, limit, n)
    A1, A2 = np.meshgrid(a, a)
    if isinstance(model, ToyModel):
        from .toy import field_quality

        return A1, A2, field_quality(A1, A2)
    from .swimmer import constraint_curvature_batch, shape_planes

    r = np.zeros((A1.size, model.n_joints))
    r[:, i], r[:, j] = A1.ravel(), A2.ravel()
    plane = shape_planes(model.n_joints).index((i, j))
    values = np.full(A1.size, np.nan)
    limit_ok = np.all(np.abs(r) <= model.geometry.joint_limit - 1e-4, axis=1)
    try:
        values[limit_ok] = constraint_curvature_batch(model.geometry, r[limit_ok])[:, plane, 0]
    except GaitLocusError:
        pass
    return A1, A2, values.reshape(A1.shape)


def plot_outputs(model, cols, P, fractions, out_dir: Path, system: str) -> List[Path]:
    plt = _svg_figure()
    g = cols["displacement"]
    picks = []
    for f in fractions:
        hits = np.flatnonzero(np.abs(g - f * g[0]) <= 1e-9 * max(1.0, abs(f * g[0])))
        if hits.size:
            picks.append((f, int(hits[0])))
    n_joints = 2 if isinstance(model, ToyModel) else model.n_joints
    pairs = [(i, j) for i in range(n_joints) for j in range(i + 1, n_joints)]
    fig, axes = plt.subplots(1, len(pairs), figsize=(4.5 * len(pairs), 4.5), squeeze=False)
    for ax, (i, j) in zip(axes[0], pairs):
        A1, A2, Z = curvature_grid(model, i, j)
        cs = ax.contourf(A1, A2, Z, levels=21, cmap="RdBu_r")
        fig.colorbar(cs, ax=ax, shrink=0.8)
        for f, k in picks:
            _, r, _ = model.shape_samples(P[k], GAIT_SAMPLES)
            ax.plot(np.r_[r[:, i], r[0, i]], np.r_[r[:, j], r[0, j]], lw=1.5, label=f"{f:g} g*")
        ax.set_xlabel(f"joint {i}")
        ax.set_ylabel(f"joint {j}")
        ax.set_aspect("equal")
        ax.set_xlim(-CONTOUR_LIMIT, CONTOUR_LIMIT)
        ax.set_ylim(-CONTOUR_LIMIT, CONTOUR_LIMIT)
    axes[0, 0].legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    gait_path = out_dir / f"{system}_gaits.svg"
    _save_svg(fig, gait_path)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(g, cols["efficiency"], "-", lw=1.5)
    for f, k in picks:
        ax.plot(g[k], cols["efficiency"][k], "o")
    ax.set_xlabel("net x displacement")
    ax.set_ylabel("efficiency g / s")
    fig.tight_layout()
    eff_path = out_dir / f"{system}_efficiency.svg"
    _save_svg(fig, eff_path)
    plt.close(fig)
    return [gait_path, eff_path]


# ---------------------------------------------------------------- argument handling

def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got '{text}'")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaitlocus", description="Trace families of step-optimal gaits.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("seed", "find and store the maximum-efficiency gait"),
                       ("trace", "trace the optimal locus from a seed gait"),
                       ("verify", "compare traced costs with direct constrained solves"),
                       ("plot", "write SVG figures of a trace"),
                       ("info", "print the resolved configuration and system summary")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--system", help="toy, three_link or four_link")
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--out", type=Path, help="output file (directory for plot)")
        p.add_argument("--levels", type=_float_list, help="displacement fractions, e.g. 1,0.75,0.5")
        p.add_argument("--tol", type=float, help="verify: maximum relative cost deviation")
        p.add_argument("--min-displacement", type=float, help="trace: stop fraction of the seed displacement")
        p.add_argument("--seed-file", type=Path, help="seed gait JSON (read if present, else written)")
        p.add_argument("--trace", type=Path, help="verify/plot: trace CSV to read")
    return parser


def resolve_config(args) -> RunConfig:
    data = {}
    if args.config is not None:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}")
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    if args.system is not None:
        data["system"] = args.system
    if args.levels is not None:
        data["levels"] = args.levels
    if args.tol is not None:
        data["verify_tol"] = args.tol
    if args.min_displacement is not None:
        data["min_displacement_fraction"] = args.min_displacement
    return RunConfig.from_dict(data)


def _paths(cfg: RunConfig, args):
    seed_file = args.seed_file or cfg.output("seed", "{system}_seed.json")
    trace_file = args.trace or cfg.output("trace", "{system}_trace.csv")
    return seed_file, trace_file


def _cmd_seed(cfg, args, model):
    report = compute_seed(model, cfg)
    out = args.out or args.seed_file or cfg.output("seed", "{system}_seed.json")
    atomic_write(out, json.dumps(seed_to_json(model, report.p, report), indent=2) + "\n")
    print(f"seed: g={report.g:.10g} s={report.s:.10g} efficiency={report.efficiency:.10g} "
          f"iterations={report.iterations} -> {out}")
    if not report.converged:
        print(f"seed search did not converge: {report.message}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_trace(cfg, args, model):
    seed_file, _ = _paths(cfg, args)
    seed = load_or_compute_seed(model, cfg, seed_file)
    trace = run_trace(model, cfg, seed)
    out = args.out or cfg.output("trace", "{system}_trace.csv")
    write_trace_csv(out, trace)
    g0 = trace.states[0].g
    gait_dir = Path(cfg.outputs.get("gait_dir", Path(out).parent))
    for f in cfg.levels:
        st = trace.at_displacement(f * g0)
        if st is not None:
            write_gait_samples(gait_dir / f"{Path(out).stem}_gait_{_level_tag(f)}.csv", model, st.p)
    print(f"trace: {len(trace.states)} states, stop_reason={trace.stop_reason} -> {out}")
    if trace.stop_reason != STOP_MIN_DISPLACEMENT:
        print(f"trace stopped early: {trace.stop_reason}: {trace.message}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_verify(cfg, args, model):
    seed_file, trace_file = _paths(cfg, args)
    if not Path(trace_file).exists():
        seed = load_or_compute_seed(model, cfg, seed_file)
        trace = run_trace(model, cfg, seed)
        write_trace_csv(trace_file, trace)
    cols, P = read_trace_csv(trace_file)
    init = cfg.seeds.get("init")
    cold = np.asarray(init, dtype=float) if init is not None else model.initial_guess()
    rows = verify_levels(model, cols, P, cfg.levels, cold)
    out = args.out or cfg.output("verify", "{system}_verify.csv")
    atomic_write(out, _csv_text(VERIFY_COLUMNS, [[_fmt(v) for v in row] for row in rows]))
    worst = max(row[3] for row in rows)
    print(f"verify: {len(rows)} levels, max rel_dev={worst:.3g} (tol {cfg.verify_tol:g}) -> {out}")
    if worst > cfg.verify_tol:
        print(f"cost deviation {worst:.3g} exceeds tolerance {cfg.verify_tol:g}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_plot(cfg, args, model):
    _, trace_file = _paths(cfg, args)
    if not Path(trace_file).exists():
        raise ConfigError(f"trace file {trace_file} not found; run 'trace' first")
    cols, P = read_trace_csv(trace_file)
    out_dir = Path(args.out or cfg.outputs.get("plot_dir", "."))
    for path in plot_outputs(model, cols, P, cfg.levels, out_dir, cfg.system):
        print(f"plot: {path}")
    return EXIT_OK


def _cmd_info(cfg, args, model):
    info = {"config": asdict(cfg), "n_params": model.n_params}
    if isinstance(model, SwimmerModel):
        info["geometry"] = asdict(model.geometry)
    print(json.dumps(info, indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {"seed": _cmd_seed, "trace": _cmd_trace, "verify": _cmd_verify, "plot": _cmd_plot, "info": _cmd_info}


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        model = build_model(cfg)
    except (ConfigError, TypeError, ValueError) as exc:
        print(f"gaitlocus: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](cfg, args, model)
    except ConfigError as exc:
        print(f"gaitlocus: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GaitLocusError as exc:
        print(f"gaitlocus: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(run_cli())
