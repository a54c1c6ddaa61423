"""Experiment specs and the sweep driver.

An experiment spec is a flat text file, one ``key = value`` per line. Blank
lines and lines starting with ``#`` are ignored, list values are
comma-separated, and unknown keys are rejected::

    kind = alpha_sweep          # convergence | alpha_sweep | size_sweep | noise_sweep
    schemes = agd, gd
    alphas = 1, 2, 4, 8, 16

Every key except ``kind`` has a per-kind default (see ``KIND_DEFAULTS``). The
driver runs every (size, alpha, noise level, scheme) combination; the kind only
picks the defaults, so any axis can be swept.
"""
import csv
import dataclasses
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Optional, Tuple

from .evolution import SCHEMES, SolverAbort, SolverConfig, run
from .fields import GridSpec, MapField
from .io import save_flow, save_pgm
from .stencils import warp
from .synth import add_salt_pepper, endpoint_error, gen_rect_pair, gen_square_pair, recon_error

KINDS = ("convergence", "alpha_sweep", "size_sweep", "noise_sweep")
PAIRS = ("square", "rect")

KIND_DEFAULTS = {
    "convergence": dict(square=20, shift=(10, 0), alphas=(5.0,)),
    "alpha_sweep": dict(square=16, shift=(7, 0), alphas=(1.0, 2.0, 4.0, 8.0, 16.0)),
    "size_sweep": dict(square=16, shift=(7, 0), alphas=(8.0,), sizes=(50, 75, 100)),
    "noise_sweep": dict(square=16, shift=(4, 0), alphas=(1.0,),
                        noise_levels=(0.0, 0.1, 0.2, 0.3)),
}

TRACE_COLUMNS = ("iter", "t", "potential", "kinetic", "total", "dt", "map_increment")
SUMMARY_COLUMNS = ("scheme", "pair", "size", "alpha", "noise", "iters_to_converge",
                   "iterations", "final_potential", "endpoint_error", "data_term",
                   "recon_error", "status", "seconds")


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    pair: str = "square"
    square: int = 20
    shift: Tuple[int, int] = (10, 0)
    rect_w: int = 20
    rect_h: int = 14
    alphas: Tuple[float, ...] = (5.0,)
    sizes: Tuple[int, ...] = (50,)
    noise_levels: Tuple[float, ...] = (0.0,)
    seed: int = 0
    schemes: Tuple[str, ...] = ("agd", "gd")
    tol: float = 1e-4
    max_iters: int = 100000
    p: int = 2
    C: float = 0.25
    safety: float = 0.9
    eps_visc: float = 0.0
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if self.pair not in PAIRS:
            raise SpecError(f"unknown pair {self.pair!r}; expected one of {PAIRS}")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise SpecError(f"schemes must be a non-empty subset of {SCHEMES}, got {self.schemes}")
        if not (self.alphas and self.sizes and self.noise_levels):
            raise SpecError("alphas, sizes and noise_levels must be non-empty")
        if any(not 0.0 <= lv <= 1.0 for lv in self.noise_levels):
            raise SpecError(f"noise levels must lie in [0, 1], got {self.noise_levels}")
        if self.workers < 1:
            raise SpecError("workers must be >= 1")

    @classmethod
    def for_kind(cls, kind, **overrides):
        if kind not in KINDS:
            raise SpecError(f"unknown kind {kind!r}; expected one of {KINDS}")
        return cls(kind=kind, **{**KIND_DEFAULTS[kind], **overrides})

    def solver_config(self, scheme, alpha):
        return SolverConfig(scheme=scheme, alpha=alpha, p=self.p, C=self.C,
                            safety=self.safety, tol=self.tol, max_iters=self.max_iters,
                            eps_visc=self.eps_visc)

    def configurations(self):
        """(size, alpha, noise, scheme) tuples in output order."""
        return list(product(self.sizes, self.alphas, self.noise_levels, self.schemes))

    def header_lines(self):
        out = []
        for f in dataclasses.fields(self):
            out.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return out


# -- key=value parsing ----------------------------------------------------------

def _ints(text):
    return tuple(int(t) for t in _items(text))


def _floats(text):
    return tuple(float(t) for t in _items(text))


def _items(text):
    items = [t.strip() for t in text.split(",")]
    if any(not t for t in items):
        raise ValueError(f"empty list item in {text!r}")
    return items


def _shift(text):
    vals = _ints(text)
    if len(vals) == 1:
        return (vals[0], 0)
    if len(vals) == 2:
        return vals
    raise ValueError(f"shift takes one or two integers, got {text!r}")


_PARSERS = {
    "kind": str, "pair": str, "square": int, "shift": _shift, "rect_w": int,
    "rect_h": int, "alphas": _floats, "sizes": _ints, "noise_levels": _floats,
    "seed": int, "schemes": lambda s: tuple(_items(s)), "tol": float,
    "max_iters": int, "p": int, "C": float, "safety": float, "eps_visc": float,
    "workers": int,
}


def _format_value(v):
    if isinstance(v, tuple):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_spec(text: str) -> ExperimentSpec:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise SpecError(f"line {lineno}: expected 'key = value'")
        if key not in _PARSERS:
            raise SpecError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise SpecError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise SpecError(f"line {lineno}: bad value for {key}: {exc}") from None
    if "kind" not in values:
        raise SpecError("spec has no 'kind'")
    return ExperimentSpec.for_kind(values.pop("kind"), **values)


def load_spec(path) -> ExperimentSpec:
    return parse_spec(Path(path).read_text())


def format_spec(spec: ExperimentSpec) -> str:
    return "\n".join(spec.header_lines()) + "\n"


# -- driver -------------------------------------------------------------------

def make_pair(spec: ExperimentSpec, size: int, noise: float):
    """(I0, I1, ground truth or None) for one configuration. Noise is seeded by
    the spec seed alone, so every scheme sees the same corrupted pair."""
    grid = GridSpec(size, size)
    if spec.pair == "square":
        I0, I1, gt = gen_square_pair(grid, spec.square, spec.shift)
    else:
        I0, I1 = gen_rect_pair(grid, spec.square, spec.rect_w, spec.rect_h, spec.shift)
        gt = None
    if noise > 0:
        I0 = add_salt_pepper(I0, noise, spec.seed)
        I1 = add_salt_pepper(I1, noise, spec.seed + 1)
    return I0, I1, gt


@dataclass
class ConfigResult:
    scheme: str
    size: int
    alpha: float
    noise: float
    status: str
    converged: bool
    iterations: int
    trace: list
    phi: Optional[MapField]
    endpoint_error: Optional[float]
    data_term: float
    recon_error: float
    seconds: float

    def summary_row(self, spec):
        final = self.trace[-1].potential if self.trace else float("nan")
        return {
            "scheme": self.scheme, "pair": spec.pair, "size": self.size,
            "alpha": self.alpha, "noise": self.noise,
            "iters_to_converge": self.iterations if self.converged else "",
            "iterations": self.iterations, "final_potential": final,
            "endpoint_error": "" if self.endpoint_error is None else self.endpoint_error,
            "data_term": self.data_term, "recon_error": self.recon_error,
            "status": self.status, "seconds": round(self.seconds, 3),
        }


def run_configuration(spec: ExperimentSpec, size, alpha, noise, scheme) -> ConfigResult:
    """One run; solver failures become a status string instead of an exception."""
    I0, I1, gt = make_pair(spec, size, noise)
    start = time.perf_counter()
    try:
        res = run(I0, I1, spec.solver_config(scheme, alpha))
        phi, trace, converged = res.phi, res.trace, res.converged
        status = "converged" if converged else "max_iters"
    except SolverAbort as exc:
        phi = exc.state.phi if exc.state is not None else None
        trace = list(exc.trace or [])
        converged = False
        status = f"abort: {exc}"
    seconds = time.perf_counter() - start
    if phi is None:
        phi = MapField.identity(I0.grid)
    data, rerr = recon_error(I0, I1, phi)
    epe = endpoint_error(phi, gt) if gt is not None else None
    return ConfigResult(scheme, size, alpha, noise, status, converged, len(trace), trace,
                        phi, epe, data, rerr, seconds)


def _run_args(args):
    return run_configuration(*args)


def _stem(r: ConfigResult):
    return f"{r.scheme}_n{r.size}_a{r.alpha:g}_s{r.noise:g}"


def _write_csv(path, header, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)


def write_trace(path, trace, header=()):
    rows = [{c: getattr(rec, c) for c in TRACE_COLUMNS} for rec in trace]
    _write_csv(path, header, TRACE_COLUMNS, rows)


def run_experiment(spec: ExperimentSpec, out_dir, progress=None):
    """Run every configuration and write, under ``out_dir``:

    * ``trace_<stem>.csv`` per run (iter, t, potential, kinetic, total, dt,
      map_increment),
    * ``warped_<stem>.pgm`` (I1 warped by the final map) and ``flow_<stem>.dflo``,
    * ``summary.csv`` with one row per run.

    ``<stem>`` is ``<scheme>_n<size>_a<alpha>_s<noise>``. Returns the list of
    :class:`ConfigResult` in configuration order.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(spec,) + cfg for cfg in spec.configurations()]
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_run_args, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_run_args(job))
            if progress is not None:
                progress(results[-1])
    base = spec.header_lines()
    for r in results:
        stem = _stem(r)
        extra = [f"run_scheme = {r.scheme}", f"run_size = {r.size}",
                 f"run_alpha = {r.alpha!r}", f"run_noise = {r.noise!r}",
                 f"status = {r.status}"]
        write_trace(out / f"trace_{stem}.csv", r.trace, base + extra)
        I0, I1, _ = make_pair(spec, r.size, r.noise)
        save_pgm(warp(I1, r.phi), out / f"warped_{stem}.pgm")
        save_flow(r.phi, out / f"flow_{stem}.dflo")
    _write_csv(out / "summary.csv", base, SUMMARY_COLUMNS,
               [r.summary_row(spec) for r in results])
    return results
