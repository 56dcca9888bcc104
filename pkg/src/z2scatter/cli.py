"""Command line harness: branches, verify, converge, scatter, sweep, index.

Every subcommand takes ``--config FILE`` (INI format, see ``CONFIG_KEYS``)
and individual flags, which override the file.  Tables are written as CSV
with a versioned comment header; ``Z2SCATTER_OUTDIR`` redirects relative
output paths.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .model import (
    build_model,
    ftr_residual,
    hermiticity_residual,
    perturbation_library,
    random_ftr,
    support_grid,
    zero_perturbation,
)
from .scatter import ScatterProblem, leaf_partition, observables, smatrix_to_text, trace_identity_check
from .solver import LeafDiscretization, SolverError
from .spectral import ladder_coeff
from .theory import gap_pairing, index2_from_flows, model_h1_branches, sigma_from_flows, spectral_flow

CSV_VERSION = 1
FLAG_UNITARITY = 1e-6


@dataclass
class RunConfig:
    M: int = 1
    N: int = 1
    p: int = 1
    E: float = 1.8
    perturbation: str = "V_TR"
    length: float = 1.0
    seed: int = 0
    n_x: int = 6
    n_y: int = 40
    n_chan: int | None = None
    leaf_max: float = 1.0 / 16
    lengths: tuple = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0)
    workers: int = 1
    out: str | None = None
    # converge
    param: str = "n_x"
    values: tuple = (2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12)
    ref_n_x: int = 20
    ref_n_y: int = 40
    # index / branches
    E_minus: float = 1.7
    E_plus: float = 1.9
    xi_max: float = 4.0
    n_samples: int = 81
    # tolerances
    tol_unitarity: float = 1e-8
    tol_skew: float = 1e-8
    tol_trace: float = 1e-8
    tol_merge: float = 1e-8
    tol_ftr: float = 1e-12

    @property
    def model(self):
        return build_model(self.M, self.N, self.p)

    def disc(self, n_x=None, n_y=None) -> LeafDiscretization:
        return LeafDiscretization(0.0, 1.0, n_x or self.n_x, n_y or self.n_y, None, self.n_chan)

    def perturbation_spec(self, length=None):
        length = self.length if length is None else length
        model = self.model
        if self.perturbation == "zero":
            return zero_perturbation(model.spinor_dim, length)
        if self.perturbation == "random_ftr":
            return random_ftr(self.seed, model, perturbation_library("v1_scalar", self.E, length))
        V = perturbation_library(self.perturbation, self.E, length)
        if V.dim != model.spinor_dim:
            raise SystemExit(
                f"perturbation {self.perturbation} is {V.dim}x{V.dim}; model ({self.M},{self.N},{self.p}) "
                f"needs {model.spinor_dim}"
            )
        return V


# INI section -> keys; every key maps onto the RunConfig field of the same name
CONFIG_KEYS = {
    "model": ("M", "N", "p"),
    "run": ("E", "workers", "out"),
    "perturbation": ("perturbation", "length", "seed"),
    "discretization": ("n_x", "n_y", "n_chan", "leaf_max"),
    "sweep": ("lengths",),
    "converge": ("param", "values", "ref_n_x", "ref_n_y"),
    "index": ("E_minus", "E_plus"),
    "branches": ("xi_max", "n_samples"),
    "tolerances": ("tol_unitarity", "tol_skew", "tol_trace", "tol_merge", "tol_ftr"),
}
_ALIASES = {("perturbation", "name"): "perturbation"}


_DEFAULTS = {f.name: f.default for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, raw):
    default = _DEFAULTS[name]
    if isinstance(default, tuple):
        if isinstance(raw, str):
            raw = raw.replace(",", " ").split()
        return tuple(type(default[0])(v) for v in raw)
    if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none")):
        return None
    if name == "n_chan" or isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return str(raw)


def load_config(path: str) -> dict:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if not cp.read(path):
        raise SystemExit(f"cannot read config {path}")
    out = {}
    for section in cp.sections():
        allowed = CONFIG_KEYS.get(section)
        if allowed is None:
            raise SystemExit(f"{path}: unknown section [{section}]")
        for key, raw in cp[section].items():
            name = _ALIASES.get((section, key), key)
            if name not in allowed:
                raise SystemExit(f"{path}: unknown key {key!r} in [{section}]")
            out[name] = _coerce(name, raw)
    return out


def build_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(load_config(args.config))
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = _coerce(f.name, v)
    return RunConfig(**values)


def _out_path(cfg: RunConfig):
    if cfg.out is None or cfg.out == "-":
        return None
    outdir = os.environ.get("Z2SCATTER_OUTDIR")
    if outdir and not os.path.isabs(cfg.out):
        os.makedirs(outdir, exist_ok=True)
        return os.path.join(outdir, cfg.out)
    return cfg.out


class _Table:
    def __init__(self, cfg: RunConfig, command: str, columns):
        path = _out_path(cfg)
        self.fh = open(path, "w", newline="") if path else sys.stdout
        self.close_fh = path is not None
        self.fh.write(f"# z2scatter {command} csv v{CSV_VERSION}\n")
        self.w = csv.writer(self.fh, lineterminator="\n")
        self.w.writerow(columns)

    def row(self, values):
        self.w.writerow([_fmt(v) for v in values])
        self.fh.flush()

    def close(self):
        if self.close_fh:
            self.fh.close()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


# ------------------------------------------------------------------ commands


def cmd_branches(cfg: RunConfig) -> int:
    """Samples of E(xi) for every branch of h_p and its conjugate block."""
    t = _Table(cfg, "branches", ["branch", "xi", "E"])
    xi = np.linspace(-cfg.xi_max, cfg.xi_max, cfg.n_samples)
    n = 0
    while ladder_coeff(n, cfg.p) <= cfg.xi_max + abs(cfg.E) or n < cfg.p:
        for blk, sgn in (("h", 1.0), ("hbar", -1.0)):
            if n < cfg.p:
                curves = [(f"{blk}:{n}:lin", -sgn * xi)]
            else:
                beta = ladder_coeff(n, cfg.p)
                e = np.sqrt(xi * xi + beta * beta)
                curves = [(f"{blk}:{n}:+", e), (f"{blk}:{n}:-", -e)]
            for name, E in curves:
                for s, v in zip(xi, E):
                    t.row([name, float(s), float(v)])
        n += 1
    t.close()
    return 0


def _check(rows, name, value, tol, skip=False):
    if skip:
        rows.append((name, value, tol, "skipped"))
        return True
    ok = bool(np.isfinite(value) and value <= tol)
    rows.append((name, value, tol, "pass" if ok else "FAIL"))
    return ok


def cmd_verify(cfg: RunConfig) -> int:
    model = cfg.model
    V = cfg.perturbation_spec()
    grid = support_grid(V)
    rows = []
    ok = True
    ftr_case = model.ftr_symmetric and V.declared_ftr
    ok &= _check(rows, "hermiticity", hermiticity_residual(V, grid), cfg.tol_ftr)
    if model.ftr_symmetric:
        ok &= _check(rows, "ftr_residual", ftr_residual(V, model, grid), cfg.tol_ftr, skip=not V.declared_ftr)
    prob = ScatterProblem(model, V, cfg.E, cfg.disc(), cfg.workers)
    try:
        S = prob.smatrix(0.0, V.length, cfg.leaf_max)
        coarse = prob.smatrix(0.0, V.length, 2 * cfg.leaf_max)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    o = observables(S, model)
    ok &= _check(rows, "unitarity", o.unitarity_residual, cfg.tol_unitarity)
    ok &= _check(rows, "skew_reflection", o.skew_residual, cfg.tol_skew, skip=not ftr_case)
    ok &= _check(rows, "ftr_covariance", o.ftr_covariance, cfg.tol_skew, skip=not ftr_case)
    ok &= _check(rows, "trace_identity", trace_identity_check(S, prob.basis), cfg.tol_trace)
    ok &= _check(rows, "merge_consistency", float(np.linalg.norm(S.S - coarse.S)), cfg.tol_merge)
    if cfg.perturbation == "zero":
        free = float(np.linalg.norm(np.abs(S.S) - np.eye(S.S.shape[0])))
        ok &= _check(rows, "free_identity", free, 1e-12)
    t = _Table(cfg, "verify", ["check", "value", "tolerance", "status"])
    for r in rows:
        t.row([r[0], float(r[1]), float(r[2]), r[3]])
    t.close()
    return 0 if ok else 1


def cmd_converge(cfg: RunConfig) -> int:
    """Relative Frobenius error of S against a finer single-leaf reference."""
    model = cfg.model
    V = cfg.perturbation_spec()
    ref_disc = cfg.disc(cfg.ref_n_x, cfg.ref_n_y)
    if cfg.param == "n_x" and max(cfg.values) >= cfg.ref_n_x:
        raise SystemExit("reference n_x must exceed every sweep value")
    if cfg.param == "n_y" and max(cfg.values) >= cfg.ref_n_y:
        raise SystemExit("reference n_y must exceed every sweep value")
    if cfg.param not in ("n_x", "n_y", "L"):
        raise SystemExit("param must be n_x, n_y or L")
    try:
        ref = ScatterProblem(model, V, cfg.E, ref_disc).smatrix(0.0, V.length, None).S
    except SolverError as exc:
        raise SystemExit(f"reference failed: {exc}")
    t = _Table(cfg, "converge", [cfg.param, "error", "converged"])
    for v in cfg.values:
        v = int(v)
        if cfg.param == "n_x":
            S = ScatterProblem(model, V, cfg.E, cfg.disc(n_x=v, n_y=cfg.ref_n_y)).smatrix(0.0, V.length, None)
        elif cfg.param == "n_y":
            S = ScatterProblem(model, V, cfg.E, cfg.disc(n_x=cfg.ref_n_x, n_y=v)).smatrix(0.0, V.length, None)
        else:
            leaf = V.length / 2**v
            S = ScatterProblem(model, V, cfg.E, cfg.disc(n_y=cfg.ref_n_y)).smatrix(0.0, V.length, leaf)
        err = float(np.linalg.norm(S.S - ref) / np.linalg.norm(ref))
        t.row([v, err, int(err < 1e-12)])
    t.close()
    return 0


def cmd_scatter(cfg: RunConfig) -> int:
    model = cfg.model
    V = cfg.perturbation_spec()
    S = ScatterProblem(model, V, cfg.E, cfg.disc(), cfg.workers).smatrix(0.0, V.length, cfg.leaf_max)
    o = observables(S, model)
    text = smatrix_to_text(S)
    path = _out_path(cfg)
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for k, v in o.as_dict().items():
        print(f"{k} = {v}", file=sys.stderr if path is None else sys.stdout)
    return 0


SWEEP_COLUMNS = [
    "l",
    "trT_plus",
    "neg_trT_minus",
    "sigma2pi",
    "unitarity_residual",
    "skew_residual",
    "runtime",
    "flag",
]


def sweep_rows(cfg: RunConfig):
    """Yields one sweep row per length; leaf TRs are shared across lengths."""
    model = cfg.model
    lengths = sorted(float(l) for l in cfg.lengths)
    V = cfg.perturbation_spec(length=lengths[-1])
    prob = ScatterProblem(model, V, cfg.E, cfg.disc(), cfg.workers)
    # prefetch every leaf of the longest run so the pool sees them all at once
    prob.leaves(leaf_partition(0.0, lengths[-1], _leaf_size(lengths[-1], cfg.leaf_max)))
    for l in lengths:
        t0 = time.perf_counter()
        try:
            S = prob.smatrix(0.0, l, _leaf_size(l, cfg.leaf_max))
        except SolverError as exc:
            yield [l, math.nan, math.nan, math.nan, math.nan, math.nan, time.perf_counter() - t0, f"error: {exc}"]
            continue
        o = observables(S, model)
        flag = "unitarity" if o.unitarity_residual > FLAG_UNITARITY else ""
        yield [
            l,
            o.trT_plus,
            -o.trT_minus,
            o.sigma2pi,
            o.unitarity_residual,
            o.skew_residual,
            time.perf_counter() - t0,
            flag,
        ]


def _leaf_size(l: float, leaf_max: float) -> float:
    """Leaf length for [0, l]: l / 2^L, no longer than leaf_max."""
    a, b = leaf_partition(0.0, l, leaf_max)[0]
    return b - a


def cmd_sweep(cfg: RunConfig) -> int:
    t = _Table(cfg, "sweep", SWEEP_COLUMNS)
    for row in sweep_rows(cfg):
        t.row(row)
    t.close()
    return 0


def cmd_index(cfg: RunConfig) -> int:
    branches = model_h1_branches(cfg.M, cfg.N, cfg.p, cfg.E_minus, cfg.E_plus)
    t = _Table(cfg, "index", ["branch", "xi_minus", "xi_plus", "flow"])
    for b in branches:
        t.row([b.label, b.xi_minus, b.xi_plus, spectral_flow(b)])
    sigma = sigma_from_flows(branches)
    t.row(["sigma", "", "", sigma])
    if cfg.M == cfg.N:
        residual, idx = gap_pairing(branches)
        assert idx == index2_from_flows(branches)
        t.row(["index2", "", "", idx])
        t.row(["residual_crossings", "", "", residual])
    t.close()
    return 0


COMMANDS = {
    "branches": cmd_branches,
    "verify": cmd_verify,
    "converge": cmd_converge,
    "scatter": cmd_scatter,
    "sweep": cmd_sweep,
    "index": cmd_index,
}


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file; flags override its values")
    g = common.add_argument_group("model")
    g.add_argument("--M", type=int)
    g.add_argument("--N", type=int)
    g.add_argument("--p", type=int)
    g.add_argument("--E", type=float)
    g = common.add_argument_group("perturbation")
    g.add_argument("--perturbation", help="catalogue name, 'random_ftr' or 'zero'")
    g.add_argument("--length", type=float)
    g.add_argument("--seed", type=int)
    g = common.add_argument_group("discretization")
    g.add_argument("--n-x", dest="n_x", type=int)
    g.add_argument("--n-y", dest="n_y", type=int)
    g.add_argument("--n-chan", dest="n_chan", type=int)
    g.add_argument("--leaf-max", dest="leaf_max", type=float)
    g = common.add_argument_group("runs")
    g.add_argument("--lengths", nargs="+", type=float)
    g.add_argument("--workers", type=int)
    g.add_argument("--out", help="output file (default stdout)")
    g.add_argument("--param", choices=("n_x", "n_y", "L"))
    g.add_argument("--values", nargs="+", type=int)
    g.add_argument("--ref-n-x", dest="ref_n_x", type=int)
    g.add_argument("--ref-n-y", dest="ref_n_y", type=int)
    g.add_argument("--E-minus", dest="E_minus", type=float)
    g.add_argument("--E-plus", dest="E_plus", type=float)
    g.add_argument("--xi-max", dest="xi_max", type=float)
    g.add_argument("--n-samples", dest="n_samples", type=int)
    for name in ("tol_unitarity", "tol_skew", "tol_trace", "tol_merge", "tol_ftr"):
        g.add_argument("--" + name.replace("_", "-"), dest=name, type=float)

    parser = argparse.ArgumentParser(prog="z2scatter", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).strip().splitlines()[0])
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    cfg = build_config(args)
    return COMMANDS[args.command](cfg)


if __name__ == "__main__":
    sys.exit(main())
