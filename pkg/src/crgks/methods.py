"""Named solver variants and their per-experiment presets.

The four table methods differ in the penalty exponent and in whether the
cumulative outer loop runs:

========  ===  ==========
method     q   cumulative
========  ===  ==========
l2         2   no
l1         1   no
cr-l2      2   yes
cr-l1      1   yes
lq:<q>     q   yes
========  ===  ==========

Non-cumulative variants are a single inner solve (``n_outer=1``) run to its
relative-change tolerance or the budget.  Cumulative variants cap each inner
solve at a fixed number of enlarge-compress cycles so that the budget is
spread over several outer updates; the cap is a property of the problem.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .problems import InverseProblem
from .solver import CRResult, SolverConfig, cr_lq_rmm_gks

__all__ = [
    "METHODS",
    "CYCLE_CAPS",
    "DEFAULT_CYCLE_CAP",
    "parse_method",
    "method_config",
    "run_method",
    "iters_to_within",
]

METHODS = ("l2", "l1", "cr-l2", "cr-l1")
CYCLE_CAPS = {"exp1": 3, "exp2": 1, "exp3": 1}
DEFAULT_CYCLE_CAP = 3


def parse_method(method: str) -> tuple[float, bool]:
    """Return ``(q, cumulative)`` for a method name."""
    if method == "l2":
        return 2.0, False
    if method == "l1":
        return 1.0, False
    if method == "cr-l2":
        return 2.0, True
    if method == "cr-l1":
        return 1.0, True
    if method.startswith("lq:"):
        try:
            q = float(method[3:])
        except ValueError:
            raise ValueError(f"cannot read q from method {method!r}") from None
        if not 0.0 < q <= 2.0:
            raise ValueError(f"method {method!r} needs 0 < q <= 2")
        return q, True
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)} or lq:<q>")


def method_config(method: str, experiment: str | None = None, **overrides) -> SolverConfig:
    """Preset configuration of ``method`` on ``experiment``, then ``overrides``.

    Overrides use :class:`SolverConfig` field names; ``None`` values are
    ignored so that unset command-line flags fall through to the preset,
    and ``max_cycles=0`` removes the cycle cap.
    """
    q, cumulative = parse_method(method)
    if cumulative:
        cap = CYCLE_CAPS.get(experiment, DEFAULT_CYCLE_CAP)
        config = SolverConfig(q=q, max_cycles=cap)
    else:
        config = SolverConfig(q=q, n_outer=1, max_cycles=None)
    fields = {k: v for k, v in overrides.items() if v is not None}
    if fields.get("max_cycles") == 0:
        fields["max_cycles"] = None
    return replace(config, **fields) if fields else config


def run_method(problem: InverseProblem, config: SolverConfig) -> CRResult:
    """Run the outer driver on ``problem``; ``n_outer=1`` is a plain inner solve."""
    return cr_lq_rmm_gks(
        problem.A, problem.L, problem.b, config, problem.delta, x_true=problem.x_true
    )


def iters_to_within(rre, fraction: float = 0.1) -> int | None:
    """First 1-based iteration whose RRE is within ``fraction`` of the final RRE."""
    rre = np.asarray(rre, dtype=float)
    if rre.size == 0 or np.isnan(rre[-1]):
        return None
    hit = np.flatnonzero(rre <= (1.0 + fraction) * rre[-1])
    return int(hit[0]) + 1
