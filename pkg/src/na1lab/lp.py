"""Thin wrapper around scipy's HiGHS linear-programming backend.

Every LP in the package goes through :func:`solve_lp` so that status handling
and dual-multiplier conventions live in one place.  Problems are always passed
to scipy in minimization form; ``maximize=True`` negates the cost and the
reported optimum, nothing else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import InfeasibleError, NumericError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

#: Box used when a nominally unbounded variable needs a finite search range.
BIG_BOUND = 1e6


@dataclass(frozen=True)
class LpResult:
    """Outcome of one linear program.

    ``marginals_ub`` are scipy's sensitivities of the minimized optimum with
    respect to the upper-bound vector ``b_ub``; for a constraint ``a.x <= b``
    of a minimization the nonnegative Lagrange multiplier is
    ``-marginals_ub``.
    """

    status: str
    x: np.ndarray | None
    value: float | None
    marginals_ub: np.ndarray | None


def solve_lp(
    cost,
    a_ub=None,
    b_ub=None,
    a_eq=None,
    b_eq=None,
    bounds=None,
    maximize: bool = False,
) -> LpResult:
    """Solve ``min/max cost.x`` subject to ``a_ub x <= b_ub``, ``a_eq x = b_eq``.

    ``bounds`` follows scipy's convention; ``None`` means every variable is
    free (scipy's default is x >= 0, which is almost never what this package
    wants, so free is the default here).
    """
    cost = np.asarray(cost, dtype=float)
    sign = -1.0 if maximize else 1.0
    if bounds is None:
        bounds = [(None, None)] * cost.size
    if a_ub is not None and len(a_ub) == 0:
        a_ub, b_ub = None, None
    if a_eq is not None and len(a_eq) == 0:
        a_eq, b_eq = None, None
    # HiGHS mishandles objectives whose entries all sit near its zero
    # tolerance (observed: status 4 for costs around 1e-13), so extreme
    # objective magnitudes are normalized to 1 and undone on the way out.
    scale = float(np.max(np.abs(cost))) if cost.size else 0.0
    if not (1e-6 < scale < 1e6):
        scale = scale if scale > 0.0 else 1.0
    else:
        scale = 1.0
    res = linprog(
        sign * cost / scale,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs",
    )
    if res.status == 4:
        # HiGHS presolve occasionally gives up with "model_status Unknown" on
        # well-posed inputs; the plain solve handles those.
        res = linprog(
            sign * cost / scale,
            A_ub=a_ub,
            b_ub=b_ub,
            A_eq=a_eq,
            b_eq=b_eq,
            bounds=bounds,
            method="highs",
            options={"presolve": False},
        )
    if res.status == 0:
        marginals = None
        if a_ub is not None and res.ineqlin is not None:
            marginals = scale * np.asarray(res.ineqlin.marginals, dtype=float)
        return LpResult(
            OPTIMAL, np.asarray(res.x, dtype=float), sign * scale * res.fun, marginals
        )
    if res.status == 2:
        return LpResult(INFEASIBLE, None, None, None)
    if res.status == 3:
        return LpResult(UNBOUNDED, None, None, None)
    raise NumericError(f"LP solver failure (status {res.status}): {res.message}")


def require_optimal(result: LpResult, context: str) -> LpResult:
    """Raise with a descriptive message unless ``result`` is optimal."""
    if result.status == INFEASIBLE:
        raise InfeasibleError(f"{context}: constraint system is infeasible")
    if result.status != OPTIMAL:
        raise NumericError(f"{context}: LP ended with status {result.status}")
    return result


def is_feasible(a_ub: np.ndarray, b_ub: np.ndarray, dim: int) -> bool:
    """Whether ``{x : a_ub x <= b_ub}`` is nonempty."""
    if dim == 0:
        return bool(np.all(np.asarray(b_ub, dtype=float) >= 0)) if len(b_ub) else True
    res = solve_lp(np.zeros(dim), a_ub=a_ub, b_ub=b_ub)
    return res.status == OPTIMAL


def chebyshev_center(a_ub: np.ndarray, b_ub: np.ndarray, dim: int, box: float = BIG_BOUND):
    """Center of the largest ball inside ``{x : a_ub x <= b_ub}``.

    The polyhedron is intersected with ``|x_i| <= box`` so the LP stays
    bounded even when the input set is not.  Returns ``(center, radius)``;
    raises :class:`InfeasibleError` if the set is empty.
    """
    a_ub = np.asarray(a_ub, dtype=float).reshape(-1, dim)
    b_ub = np.asarray(b_ub, dtype=float)
    if dim == 0:
        if np.any(b_ub < 0):
            raise InfeasibleError("chebyshev_center: empty zero-dimensional set")
        return np.zeros(0), 0.0
    eye = np.eye(dim)
    rows = [a_ub, eye, -eye]
    rhs = [b_ub, np.full(dim, box), np.full(dim, box)]
    a_full = np.vstack(rows)
    b_full = np.concatenate(rhs)
    norms = np.linalg.norm(a_full, axis=1)
    a_aug = np.hstack([a_full, norms[:, None]])
    cost = np.zeros(dim + 1)
    cost[-1] = 1.0
    var_bounds = [(None, None)] * dim + [(0, 2 * box)]
    res = solve_lp(cost, a_ub=a_aug, b_ub=b_full, bounds=var_bounds, maximize=True)
    require_optimal(res, "chebyshev_center")
    return res.x[:-1], float(res.value)
