"""Accelerated optimization on diffeomorphisms for dense image registration.

Public surface:

* fields: :class:`GridSpec`, :class:`ScalarField`, :class:`VectorField`,
  :class:`MapField`, :class:`JacobianField`
* potential: :class:`HSPotential`, :func:`grad_check`, :func:`gradient_oracle`
* solvers: :class:`SolverConfig`, :func:`run` and the single-step functions
* synthetic pairs, metrics, PGM/DFLO IO and the experiment driver
"""
__version__ = "0.1.0"

from .evolution import (SCHEMES, RunResult, SolverAbort, SolverConfig, SolverState,
                        TraceRecord, agd_step, epdiff_step, gd_step, inverse_consistency,
                        kinetic_energy, nondissip_step, run, wave_step)
from .fields import GridSpec, JacobianField, MapField, ScalarField, VectorField
from .io import load_flow, load_pgm, save_flow, save_pgm
from .potential import HSPotential, grad_check, gradient_oracle
from .synth import (add_salt_pepper, endpoint_error, gen_rect_pair, gen_square_pair,
                    recon_error)

__all__ = [
    "SCHEMES", "GridSpec", "HSPotential", "JacobianField", "MapField", "RunResult",
    "ScalarField", "SolverAbort", "SolverConfig", "SolverState", "TraceRecord",
    "VectorField", "add_salt_pepper", "agd_step", "endpoint_error", "epdiff_step",
    "gd_step", "gen_rect_pair", "gen_square_pair", "grad_check", "gradient_oracle",
    "inverse_consistency", "kinetic_energy", "load_flow", "load_pgm", "nondissip_step",
    "recon_error", "run", "save_flow", "save_pgm", "wave_step",
]
