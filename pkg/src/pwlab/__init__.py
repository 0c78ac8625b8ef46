"""pwlab: numerical laboratory for first-order hyperbolic systems with
multiple characteristics on periodic domains.

Subpackages cover the full pipeline: a phase-space symbol DSL with exact
jets (:mod:`pwlab.symdsl`), eigenstructure and bracket-order
certification (:mod:`pwlab.characteristics`), periodic spectral fields
and operator quantization (:mod:`pwlab.grid`), half-wave/iterated-integral
propagators (:mod:`pwlab.propagator`), bicharacteristic geometry
(:mod:`pwlab.geometry`), sublevel-set measure machinery
(:mod:`pwlab.measure`), eigenvalue counting (:mod:`pwlab.spectral`),
example-system generators (:mod:`pwlab.systems`) and the ``pw`` CLI
(:mod:`pwlab.cli`).
"""

__version__ = "0.1.0"

from .symdsl import PhasePoint, SymbolExpr, parse  # noqa: F401
