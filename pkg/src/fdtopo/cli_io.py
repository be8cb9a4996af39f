"""Command line entry points, INI configuration and VTK/CSV output."""
from __future__ import annotations

import argparse
import configparser
import contextlib
import csv
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .fem_core import Loads, Material, SolverError
from .levelset import HeavisideKernel, Variant
from .mesh import Mesh
from .optimizer import IterationRecord, OptimizationAborted, OptimizerConfig, optimize
from .presets import Preset, get_preset
from .sensitivity import DescentChoice, compute_d, directional_derivative
from .state import Problem, difference_norms, inside_triangles, solve_state

logger = logging.getLogger(__name__)

CSV_HEADER = ["iter", "J", "Jprime_w", "lambda", "volume", "ls_trials", "stop_reason"]
EPS_HEADER = ["epsilon", "kernel", "J", "L2_diff", "H1_diff", "status"]


def _fmt(v: float) -> str:
    return f"{v:.8e}"


def write_vtk(mesh: Mesh, point_fields: dict, cell_fields: dict, path, title: str = "fdtopo") -> None:
    """Legacy ASCII unstructured grid with P1 triangles (cell type 5).

    1-D arrays are written as scalars; (n, 2) or (n, 3) arrays as vectors,
    padded with a zero third component.
    """
    nv, nt = mesh.n_vertices, mesh.n_triangles
    for name, arr in point_fields.items():
        if len(arr) != nv:
            raise ValueError(f"point field {name!r} has {len(arr)} values, mesh has {nv} vertices")
    for name, arr in cell_fields.items():
        if len(arr) != nt:
            raise ValueError(f"cell field {name!r} has {len(arr)} values, mesh has {nt} triangles")

    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} {_fmt(0.0)}" for x, y in mesh.vertices]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt

    def block(fields):
        out = []
        for name, arr in fields.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 1:
                out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                out += [_fmt(v) for v in arr]
            else:
                vec = np.zeros((len(arr), 3))
                vec[:, :arr.shape[1]] = arr
                out.append(f"VECTORS {name} double")
                out += [" ".join(_fmt(v) for v in row) for row in vec]
        return out

    if point_fields:
        lines.append(f"POINT_DATA {nv}")
        lines += block(point_fields)
    if cell_fields:
        lines.append(f"CELL_DATA {nt}")
        lines += block(cell_fields)
    path = Path(path)
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc


def _csv_row(rec: IterationRecord) -> list[str]:
    return [str(rec.iter), _fmt(rec.cost), _fmt(rec.jprime_w), _fmt(rec.step),
            _fmt(rec.volume), str(rec.ls_trials), rec.stop_reason.value]


# --------------------------------------------------------------------------- config

@dataclass
class RunManifest:
    preset: Preset
    resolution: tuple[int, int]
    optimizer: OptimizerConfig
    out_dir: Path
    cadence: int = 5
    kernel_variant: Variant = Variant.SMOOTH
    solver: str = "direct"

    def __post_init__(self):
        if self.cadence < 1:
            raise ValueError("snapshot cadence must be at least 1")

    def problem(self) -> Problem:
        pb = self.preset.problem(self.resolution, solver=self.solver)
        if self.kernel_variant is not Variant.SMOOTH:
            pb = replace(pb, kernel=HeavisideKernel(self.preset.epsilon, self.kernel_variant))
        return pb


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _resolution(text: str) -> tuple[int, int]:
    nx, ny = text.lower().split("x")
    return int(nx), int(ny)


def load_config(path=None, preset_name: str | None = None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    for section in ("geometry", "material", "loads", "optimizer", "output"):
        cp.add_section(section)
    if path is not None:
        with open(path) as fh:
            cp.read_file(fh)
    if preset_name:
        cp["geometry"]["preset"] = preset_name
    return cp


def manifest_from_config(cp: configparser.ConfigParser) -> RunManifest:
    """Build a run manifest from a preset name plus override keys.

    Keys: ``[geometry] preset, n_x, n_y``; ``[material] lambda_s, mu_s``
    or ``young, poisson, plane``; ``[loads] body_force, traction,
    penalty, epsilon, kernel``; ``[optimizer] direction, max_iters, tol,
    rho, ls_max, c, gamma, grad_tol, solver``; ``[output] dir, cadence``.
    """
    geo, mat, lds, opt, out = (cp[s] for s in ("geometry", "material", "loads", "optimizer", "output"))
    preset = get_preset(geo.get("preset", "cantilever"))
    changes = {}
    if "lambda_s" in mat or "mu_s" in mat:
        changes["material"] = Material(mat.getfloat("lambda_s", preset.material.lambda_s),
                                       mat.getfloat("mu_s", preset.material.mu_s))
    elif "young" in mat:
        changes["material"] = Material.from_young_poisson(
            mat.getfloat("young"), mat.getfloat("poisson", 0.3), mat.get("plane", "strain"))
    if "body_force" in lds or "traction" in lds:
        bf = _floats(lds["body_force"]) if "body_force" in lds else preset.loads.body_force
        tr = _floats(lds["traction"]) if "traction" in lds else preset.loads.traction
        changes["loads"] = Loads(bf, tr)
    if "penalty" in lds:
        changes["penalty"] = lds.getfloat("penalty")
    if "epsilon" in lds:
        changes["epsilon"] = lds.getfloat("epsilon")
    if "rho" in opt:
        changes["rho"] = opt.getfloat("rho")
    preset = preset.with_overrides(**changes)

    resolution = (geo.getint("n_x", preset.resolution[0]), geo.getint("n_y", preset.resolution[1]))
    direction = DescentChoice(opt.get("direction", "i"), opt.getfloat("c", 1.0),
                              opt.getfloat("gamma", 0.001))
    grad_tol = opt.getfloat("grad_tol") if "grad_tol" in opt else None
    config = OptimizerConfig(max_iters=opt.getint("max_iters", preset.max_iters),
                             tol=opt.getfloat("tol", preset.tol), rho=preset.rho,
                             ls_max=opt.getint("ls_max", 10), direction=direction, grad_tol=grad_tol)
    return RunManifest(preset=preset, resolution=resolution, optimizer=config,
                       out_dir=Path(out.get("dir", "out")), cadence=out.getint("cadence", 5),
                       kernel_variant=Variant(lds.get("kernel", "smooth")),
                       solver=opt.get("solver", "direct"))


# --------------------------------------------------------------------------- commands

def _snapshot(problem: Problem, g, state, path) -> None:
    mesh = problem.mesh
    sens = compute_d(problem, state)
    disp = state.displacement.reshape(-1, 2)[:mesh.n_vertices]
    write_vtk(mesh,
              {"g": g, "Hg": problem.kernel.value(g), "displacement": disp},
              {"d": sens.d_quad @ problem.fem.qw},
              path)


def cmd_run(manifest: RunManifest) -> int:
    out = manifest.out_dir
    out.mkdir(parents=True, exist_ok=True)
    problem = manifest.problem()
    g0 = manifest.preset.g0(problem.mesh.vertices)
    csv_path = out / "history.csv"
    fh = open(csv_path, "w", newline="")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_HEADER)

    def sink(rec, g, state):
        writer.writerow(_csv_row(rec))
        fh.flush()
        if rec.iter % manifest.cadence == 0:
            _snapshot(problem, g, state, out / f"iter_{rec.iter:04d}.vtk")
        logger.info("iter %d  J=%.6f  J'w=%.3e  lambda=%.4g  vol=%.4f",
                    rec.iter, rec.cost, rec.jprime_w, rec.step, rec.volume)

    try:
        result = optimize(problem, g0, manifest.optimizer, sink)
    except OptimizationAborted as exc:
        fh.close()
        logger.error("run aborted: %s", exc)
        np.save(out / "g_last.npy", exc.g)
        return 2
    n_final = len(result.history)
    writer.writerow([str(n_final), _fmt(result.state.cost), "", "", _fmt(result.state.volume_term),
                     "0", result.stop_reason.value])
    fh.close()
    _snapshot(problem, result.g, result.state, out / f"iter_{n_final:04d}.vtk")
    np.save(out / "g_final.npy", result.g)
    logger.info("stopped: %s after %d iterations, J=%.6f", result.stop_reason.value,
                n_final, result.state.cost)
    return 0


def eps_study(problem: Problem, g: np.ndarray, eps_list) -> list[dict]:
    """State solves for each epsilon compared with the reference (1 / 1e-9) kernel.

    Differences are measured on the triangles where g >= 0 at all three vertices.
    """
    fem = problem.fem
    mask = inside_triangles(problem.mesh, g)
    ref = solve_state(problem, g, HeavisideKernel(1.0, Variant.REFERENCE))
    rows = []
    for eps in eps_list:
        kernel = HeavisideKernel.smooth(eps)
        try:
            st = solve_state(problem, g, kernel)
        except SolverError as exc:
            logger.warning("epsilon=%g failed: %s", eps, exc)
            rows.append(dict(epsilon=eps, kernel=kernel.for_state().variant.value, J=math.nan,
                             L2_diff=math.nan, H1_diff=math.nan, status="failed"))
            continue
        l2, h1 = difference_norms(fem, st.displacement, ref.displacement, mask)
        rows.append(dict(epsilon=eps, kernel=kernel.for_state().variant.value, J=st.cost,
                         L2_diff=l2, H1_diff=h1, status="ok"))
    rows.append(dict(epsilon=math.nan, kernel="reference", J=ref.cost, L2_diff=0.0, H1_diff=0.0,
                     status="ok"))
    return rows


def write_eps_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPS_HEADER)
        for r in rows:
            w.writerow(["" if math.isnan(r["epsilon"]) else repr(r["epsilon"]), r["kernel"],
                        _fmt(r["J"]), _fmt(r["L2_diff"]), _fmt(r["H1_diff"]), r["status"]])


def lcg_values(n: int, seed: int) -> np.ndarray:
    """``n`` values in [-1, 1) from the 32-bit LCG (a=1664525, c=1013904223)."""
    out = np.empty(n)
    state = seed % 2 ** 32
    for i in range(n):
        state = (1664525 * state + 1013904223) % 2 ** 32
        out[i] = state / 2 ** 32 * 2.0 - 1.0
    return out


def neighbor_average(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """One pass of averaging each vertex value with its edge neighbours."""
    e = mesh.edges
    total = values.copy()
    np.add.at(total, e[:, 0], values[e[:, 1]])
    np.add.at(total, e[:, 1], values[e[:, 0]])
    count = 1 + np.bincount(e.ravel(), minlength=mesh.n_vertices)
    return total / count


def random_directions(mesh: Mesh, m: int, seed: int) -> list[np.ndarray]:
    raw = lcg_values(m * mesh.n_vertices, seed).reshape(m, mesh.n_vertices)
    return [neighbor_average(mesh, r) for r in raw]


def grad_check(problem: Problem, g: np.ndarray, directions, fd_step: float) -> list[dict]:
    """Analytic directional derivatives against central differences of the cost."""
    if not fd_step > 0:
        raise ValueError("fd_step must be positive")
    state = solve_state(problem, g)
    sens = compute_d(problem, state)
    rows = []
    for k, w in enumerate(directions):
        analytic = directional_derivative(g, w, sens, problem.kernel)
        if not np.any(w):
            fd = 0.0
        else:
            fd = (solve_state(problem, g + fd_step * w).cost
                  - solve_state(problem, g - fd_step * w).cost) / (2 * fd_step)
        rel = abs(analytic - fd) / abs(fd) if fd != 0 else abs(analytic - fd)
        rows.append(dict(index=k, analytic=analytic, fd=fd, rel_error=rel))
    return rows


def _g_choice(problem: Problem, preset: Preset, choice: str) -> np.ndarray:
    if choice in (None, "", "initial"):
        return preset.g0(problem.mesh.vertices)
    g = np.load(choice)
    if len(g) != problem.mesh.n_vertices:
        raise ValueError(f"{choice}: {len(g)} values for a mesh of {problem.mesh.n_vertices} vertices")
    return g


def cmd_eps_study(manifest: RunManifest, g_choice: str, eps_list) -> list[dict]:
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("epsilon list must be positive and decreasing")
    problem = manifest.problem()
    g = _g_choice(problem, manifest.preset, g_choice)
    rows = eps_study(problem, g, eps_list)
    manifest.out_dir.mkdir(parents=True, exist_ok=True)
    write_eps_csv(rows, manifest.out_dir / "eps_study.csv")
    return rows


def cmd_grad_check(manifest: RunManifest, g_choice: str, m: int, fd_step: float, seed: int,
                   include_zero: bool = True) -> list[dict]:
    problem = manifest.problem()
    g = _g_choice(problem, manifest.preset, g_choice)
    dirs = random_directions(problem.mesh, m, seed)
    if include_zero:
        dirs.append(np.zeros(problem.mesh.n_vertices))
    return grad_check(problem, g, dirs, fd_step)


# --------------------------------------------------------------------------- argparse

def _thread_limit():
    n = int(os.environ.get("TOPOPT_THREADS", "0") or 0)
    if n <= 0:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdtopo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--preset", default=None, help="cantilever, bridge or bridge-half")
        p.add_argument("--config", default=None, help="INI file with override keys")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--resolution", type=_resolution, default=None, help="e.g. 120x60")
        p.add_argument("--solver", choices=["direct", "cg"], default=None)
        p.add_argument("--epsilon", type=float, default=None)

    run = sub.add_parser("run", help="run the descent algorithm")
    common(run)
    run.add_argument("--direction", choices=["i", "ii", "iii"], default=None)
    run.add_argument("--max-iters", type=int, default=None)
    run.add_argument("--cadence", type=int, default=None)
    run.add_argument("--gamma", type=float, default=None)
    run.add_argument("--c", type=float, default=None)

    eps = sub.add_parser("eps-study", help="state sensitivity to epsilon against the reference kernel")
    common(eps)
    eps.add_argument("--g", default="initial", help="'initial' or a .npy file of nodal values")
    eps.add_argument("--eps-list", default="0.01,0.005,0.001,0.0005")

    gc = sub.add_parser("grad-check", help="analytic vs finite-difference directional derivatives")
    common(gc)
    gc.add_argument("--g", default="initial")
    gc.add_argument("--directions", type=int, default=5)
    gc.add_argument("--fd-step", type=float, default=1e-5)
    gc.add_argument("--seed", type=int, default=12345)
    return parser


def _manifest(args) -> RunManifest:
    cp = load_config(args.config, args.preset)
    for key, section, attr in [("dir", "output", "out"),
                               ("solver", "optimizer", "solver"), ("epsilon", "loads", "epsilon"),
                               ("direction", "optimizer", "direction"),
                               ("max_iters", "optimizer", "max_iters"),
                               ("cadence", "output", "cadence"), ("gamma", "optimizer", "gamma"),
                               ("c", "optimizer", "c")]:
        if getattr(args, attr, None) is not None:
            cp[section][key] = str(getattr(args, attr))
    if args.resolution is not None:
        cp["geometry"]["n_x"], cp["geometry"]["n_y"] = map(str, args.resolution)
    return manifest_from_config(cp)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    manifest = _manifest(args)
    with _thread_limit():
        if args.command == "run":
            t0 = time.perf_counter()
            status = cmd_run(manifest)
            logger.info("run finished in %.1f s", time.perf_counter() - t0)
            return status
        if args.command == "eps-study":
            try:
                rows = cmd_eps_study(manifest, args.g, _floats(args.eps_list))
            except ValueError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 2
            print(",".join(EPS_HEADER))
            for r in rows:
                print(f"{r['epsilon']},{r['kernel']},{r['J']:.6f},{r['L2_diff']:.6e},"
                      f"{r['H1_diff']:.6e},{r['status']}")
            return 0
        rows = cmd_grad_check(manifest, args.g, args.directions, args.fd_step, args.seed)
        worst = 0.0
        for r in rows:
            print(f"w[{r['index']}]  analytic={r['analytic']:+.10e}  fd={r['fd']:+.10e}  "
                  f"rel_err={r['rel_error']:.3e}")
            if r["fd"] != 0:
                worst = max(worst, r["rel_error"])
        print(f"max relative error: {worst:.3e}")
        return 0


if __name__ == "__main__":
    sys.exit(main())
