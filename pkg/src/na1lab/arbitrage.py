"""Arbitrage detection for one-period constrained markets.

Two distinct notions are handled, each with a machine-checkable certificate:

* a *classical arbitrage* is an allowed strategy with almost-surely
  nonnegative gains, positive with positive probability;
* a *scalable arbitrage* is such a strategy living in the recession cone of
  the allowed polyhedron, so it can be leveraged without bound.  Its absence
  is equivalent to boundedness of the allowed set within the return span.

The module also builds an equivalent supermartingale measure whenever no
classical arbitrage exists, via exponential-moment minimization over the cone
generated by the allowed polyhedron.
"""

from __future__ import annotations

import logging
import weakref
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space
from scipy.special import logsumexp

from .errors import NumericError, InvalidParameterError, PreconditionError
from .lp import OPTIMAL, UNBOUNDED, require_optimal, solve_lp
from .market import Cone, DiscreteMarket, generated_cone, recession_cone

logger = logging.getLogger(__name__)

#: An LP optimum above this value certifies a positive expected gain.
GAIN_TOL = 1e-9

#: Search box for arbitrage strategies (the LP must stay bounded).
STRATEGY_BOX = 1e6

#: Certificates are rescaled to at most this sup-norm before re-verification.
#: Scaling an arbitrage down keeps it one (the allowed set is convex and
#: contains the origin) and keeps float noise in the recomputed gains below
#: the certificate tolerances.
CERTIFICATE_SCALE = 100.0

#: Expected-gain slack allowed for a supermartingale measure.
SUPERMARTINGALE_TOL = 1e-8

#: Anything below this offset counts as a zero right-hand side.
ZERO_OFFSET_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ArbitrageCertificate:
    """Outcome of a classical (or relative) arbitrage search.

    ``objective`` is the expected gain of the returned strategy when one was
    found (after taming its scale), else the optimum of the search LP: the
    best expected gain achievable with nonnegative state-wise gains.
    ``reference`` is the benchmark strategy when the search was relative,
    else None.
    """

    verdict: str
    strategy: np.ndarray | None
    gains: np.ndarray | None
    objective: float
    reference: np.ndarray | None = None
    threshold: float = GAIN_TOL

    @property
    def found(self) -> bool:
        return self.verdict == "arbitrage_found"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "strategy": None if self.strategy is None else list(map(float, self.strategy)),
            "gains": None if self.gains is None else list(map(float, self.gains)),
            "objective": float(self.objective),
            "reference": None if self.reference is None else list(map(float, self.reference)),
            "threshold": float(self.threshold),
        }


@dataclass(frozen=True, eq=False)
class Na1Certificate:
    """Outcome of a scalable-arbitrage search.

    When the verdict is ``na1_holds``, ``bound_radius`` is the sup-norm radius
    of the allowed polyhedron intersected with the return span.  When it is
    ``na1_fails``, ``witness_ray`` is a recession direction with nonnegative
    gains, positive somewhere.
    """

    verdict: str
    witness_ray: np.ndarray | None = None
    bound_radius: float | None = None
    threshold: float = GAIN_TOL

    @property
    def holds(self) -> bool:
        return self.verdict == "na1_holds"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "witness_ray": None
            if self.witness_ray is None
            else list(map(float, self.witness_ray)),
            "bound_radius": None if self.bound_radius is None else float(self.bound_radius),
            "threshold": float(self.threshold),
        }


@dataclass(frozen=True, eq=False)
class Esmm:
    """Equivalent supermartingale measure on the market's states.

    ``measure`` is the new probability vector q, ``density`` its ratio to the
    market probabilities, ``strategy`` the exponential-moment minimizer that
    generated it, and ``slack`` the LP-certified maximum expected gain under q
    over the allowed polyhedron (must be <= SUPERMARTINGALE_TOL).
    """

    measure: np.ndarray
    density: np.ndarray
    strategy: np.ndarray
    slack: float
    threshold: float = SUPERMARTINGALE_TOL

    def to_dict(self) -> dict:
        return {
            "measure": list(map(float, self.measure)),
            "density": list(map(float, self.density)),
            "strategy": list(map(float, self.strategy)),
            "slack": float(self.slack),
            "threshold": float(self.threshold),
        }


_na1_cache: "weakref.WeakKeyDictionary[DiscreteMarket, Na1Certificate]" = (
    weakref.WeakKeyDictionary()
)


def _arbitrage_search(market: DiscreteMarket, offsets: np.ndarray, tol: float):
    """Shared LP core: maximize expected gain subject to nonnegative gains,
    membership in ``{A pi <= offsets}`` within the return span, and a large
    box keeping the LP bounded.  Returns (objective, strategy | None)."""
    basis = market.span.basis
    r = basis.shape[1]
    if r == 0:
        return 0.0, None
    returns_r = market.returns @ basis
    a_theta = market.allowed.normals @ basis
    a_rows = np.vstack([a_theta, -returns_r, basis, -basis])
    d = market.n_assets
    b_rows = np.concatenate(
        [offsets, np.zeros(market.n_states), np.full(2 * d, STRATEGY_BOX)]
    )
    cost = market.probs @ returns_r
    res = solve_lp(cost, a_ub=a_rows, b_ub=b_rows, maximize=True)
    require_optimal(res, "arbitrage search")
    if res.value <= tol:
        return float(res.value), None
    return float(res.value), basis @ res.x


def _tame_scale(direction: np.ndarray) -> float:
    """Scale factor in (0, 1] that caps a certificate direction's sup-norm.

    The search LP is free to run to its box, where recomputing ``R @ pi``
    in floats leaves noise far above the certificate tolerances; scaled-down
    copies of an arbitrage are still arbitrages, so certificates are tamed.
    """
    norm = float(np.max(np.abs(direction)))
    if norm <= CERTIFICATE_SCALE:
        return 1.0
    return CERTIFICATE_SCALE / norm


def _verify_gain_certificate(market, strategy, gains, offsets):
    theta = market.allowed
    residuals = theta.normals @ strategy - offsets
    scale = 1.0 + np.abs(offsets)
    if np.any(residuals > 1e-9 * scale):
        raise NumericError("arbitrage certificate violates the constraint polyhedron")
    if np.any(gains < -1e-12):
        raise NumericError("arbitrage certificate has a negative state gain")
    if float(np.max(gains)) <= GAIN_TOL:
        raise NumericError("arbitrage certificate has no strictly positive gain")


def find_classical_arbitrage(market: DiscreteMarket, tol: float = GAIN_TOL) -> ArbitrageCertificate:
    """Search the allowed polyhedron for a classical arbitrage.

    Maximizes the expected gain over strategies in the allowed set (within
    the return span) whose gains are nonnegative in every state; an optimum
    above ``tol`` certifies an arbitrage.
    """
    objective, strategy = _arbitrage_search(market, market.allowed.offsets, tol)
    if strategy is None:
        return ArbitrageCertificate("no_arbitrage", None, None, objective, threshold=tol)
    strategy = strategy * _tame_scale(strategy)
    gains = market.returns @ strategy
    _verify_gain_certificate(market, strategy, gains, market.allowed.offsets)
    return ArbitrageCertificate(
        "arbitrage_found", strategy, gains, float(market.probs @ gains), threshold=tol
    )


def relative_arbitrage(market: DiscreteMarket, reference, tol: float = GAIN_TOL) -> ArbitrageCertificate:
    """Search for an allowed strategy whose wealth dominates the reference's.

    The search runs over the allowed polyhedron translated by ``-reference``;
    the certificate's ``strategy`` is the dominating strategy itself and
    ``gains`` the state-wise wealth differences.
    """
    reference = np.asarray(reference, dtype=float).reshape(-1)
    theta = market.allowed
    if reference.size != market.n_assets:
        raise InvalidParameterError("reference strategy has the wrong dimension")
    if not theta.contains(reference):
        raise InvalidParameterError("reference strategy is not in the allowed polyhedron")
    shifted = theta.offsets - theta.normals @ reference
    objective, delta = _arbitrage_search(market, shifted, tol)
    if delta is None:
        return ArbitrageCertificate(
            "no_arbitrage", None, None, objective, reference=reference, threshold=tol
        )
    delta = delta * _tame_scale(delta)
    gains = market.returns @ delta
    strategy = reference + delta
    _verify_gain_certificate(market, strategy, gains, theta.offsets)
    return ArbitrageCertificate(
        "arbitrage_found", strategy, gains, float(market.probs @ gains),
        reference=reference, threshold=tol
    )


def check_na1(market: DiscreteMarket, tol: float = GAIN_TOL) -> Na1Certificate:
    """Decide whether scalable arbitrage is absent.

    The recession cone of the allowed polyhedron, intersected with the return
    span, must be the origin alone.  Nontrivial directions are hunted with
    one LP per signed basis direction of the span, each capped at unit
    sup-norm; any optimum above ``tol`` produces a witness ray.  When none is
    found, the sup-norm radius of the allowed set inside the span is computed
    as the boundedness certificate.
    """
    cached = _na1_cache.get(market) if tol == GAIN_TOL else None
    if cached is not None:
        return cached
    theta = market.allowed
    cone = recession_cone(theta)
    basis = market.span.basis
    d, r = basis.shape
    if r == 0:
        cert = Na1Certificate("na1_holds", bound_radius=0.0, threshold=tol)
    else:
        cert = None
        cone_rows = cone.normals @ basis
        box_rows = np.vstack([basis, -basis])
        a_rows = np.vstack([cone_rows, box_rows])
        b_rows = np.concatenate([np.zeros(cone_rows.shape[0]), np.ones(2 * d)])
        for j in range(r):
            for sign in (1.0, -1.0):
                cost = np.zeros(r)
                cost[j] = sign
                res = solve_lp(cost, a_ub=a_rows, b_ub=b_rows, maximize=True)
                require_optimal(res, "scalable arbitrage search")
                if res.value > tol:
                    ray = basis @ res.x
                    ray = ray / np.max(np.abs(ray))
                    gains = market.returns @ ray
                    if not cone.contains(ray) or np.any(gains < -1e-12):
                        raise NumericError("witness ray failed re-verification")
                    cert = Na1Certificate("na1_fails", witness_ray=ray, threshold=tol)
                    break
            if cert is not None:
                break
        if cert is None:
            a_theta = theta.normals @ basis
            radius = 0.0
            for i in range(d):
                for sign in (1.0, -1.0):
                    res = solve_lp(sign * basis[i], a_ub=a_theta, b_ub=theta.offsets, maximize=True)
                    if res.status == UNBOUNDED:
                        raise NumericError(
                            "allowed polyhedron is unbounded in the return span although "
                            "no scalable direction was found; tolerance boundary case"
                        )
                    require_optimal(res, "boundedness certificate")
                    radius = max(radius, float(res.value))
            cert = Na1Certificate("na1_holds", bound_radius=radius, threshold=tol)
    if tol == GAIN_TOL:
        _na1_cache[market] = cert
    return cert


def _minimize_exponential_moment(weights, returns_r, cone_rows, grad_tol=1e-10):
    """Minimize ``sum_w weights * exp(-1 - returns_r @ u)`` over the cone
    ``{u : cone_rows @ u <= 0}`` by a log-barrier interior-point method.

    Rows that the cone forces to equality are removed by restricting to their
    common null space first, so the barrier always has a strictly feasible
    region to work in.  Returns the minimizer ``u``.
    """
    n, r = returns_r.shape
    m = cone_rows.shape[0]
    if r == 0:
        return np.zeros(0)
    # split implicit equality rows from genuine inequality rows
    eq_idx, ineq_idx = [], []
    if m:
        eye = np.eye(r)
        a_rows = np.vstack([cone_rows, eye, -eye])
        b_rows = np.concatenate([np.zeros(m), np.ones(2 * r)])
        for i in range(m):
            res = solve_lp(cone_rows[i], a_ub=a_rows, b_ub=b_rows)
            require_optimal(res, "cone facet classification")
            (eq_idx if res.value > -1e-9 else ineq_idx).append(i)
    if eq_idx:
        reduce_basis = null_space(cone_rows[eq_idx])
        if reduce_basis.shape[1] == 0:
            return np.zeros(r)
    else:
        reduce_basis = np.eye(r)
    a = cone_rows[ineq_idx] @ reduce_basis if ineq_idx else np.zeros((0, reduce_basis.shape[1]))
    mat = returns_r @ reduce_basis
    s_dim = reduce_basis.shape[1]

    def moment(w):
        with np.errstate(over="ignore"):
            e = weights * np.exp(-1.0 - mat @ w)
        return e

    def objective(w):
        resid = a @ w
        if np.any(resid >= 0) and a.shape[0]:
            return np.inf, None
        e = moment(w)
        val = float(np.sum(e))
        if not np.isfinite(val):
            return np.inf, None
        return val, -resid

    # strictly feasible start
    if a.shape[0]:
        cost = np.zeros(s_dim + 1)
        cost[-1] = 1.0
        rows = np.hstack([a, np.ones((a.shape[0], 1))])
        eye = np.eye(s_dim)
        pad = np.zeros((2 * s_dim, 1))
        rows = np.vstack([rows, np.hstack([eye, pad[:s_dim]]), np.hstack([-eye, pad[s_dim:]])])
        rhs = np.concatenate([np.zeros(a.shape[0]), np.ones(2 * s_dim)])
        res = solve_lp(cost, a_ub=rows, b_ub=rhs, bounds=[(None, None)] * s_dim + [(0, 2)], maximize=True)
        require_optimal(res, "interior start for the exponential-moment problem")
        if res.value <= 0:
            raise NumericError("cone has no strict interior after facet reduction")
        w = res.x[:-1]
    else:
        w = np.zeros(s_dim)

    mu_schedule = [1.0 / 10**k for k in range(13)]
    eps = float(np.finfo(float).eps)
    for round_idx, mu in enumerate(mu_schedule):
        if a.shape[0] == 0 and round_idx > 0:
            break
        inner_tol = grad_tol if round_idx == len(mu_schedule) - 1 or a.shape[0] == 0 else max(
            grad_tol, mu * 1e-2
        )
        # A stalled inner loop falls through to the next barrier weight; the
        # measure built from the final iterate is certified by an LP anyway.
        for _ in range(200):
            e = moment(w)
            grad = -mat.T @ e
            hess = mat.T @ (e[:, None] * mat)
            if a.shape[0]:
                slack = -(a @ w)
                grad = grad + mu * (a / slack[:, None]).sum(axis=0)
                hess = hess + mu * a.T @ (a / slack[:, None] ** 2)
            gnorm = float(np.linalg.norm(grad))
            if gnorm <= inner_tol:
                break
            ridge = 1e-13 * max(1.0, float(np.trace(hess)))
            step = -np.linalg.solve(hess + ridge * np.eye(s_dim), grad)
            descent = float(grad @ step)
            if descent >= 0.0:
                step = -grad
                descent = -float(grad @ grad)
            val0, _ = objective(w)
            if a.shape[0]:
                val0 -= mu * float(np.sum(np.log(slack)))
            if abs(descent) <= 8.0 * eps * (1.0 + abs(val0)):
                break  # predicted progress is below float resolution
            t = 1.0
            if a.shape[0]:
                along = a @ step
                hit = along > 1e-16
                if np.any(hit):
                    t = min(1.0, 0.99 * float(np.min(slack[hit] / along[hit])))
            accepted = False
            for _ in range(60):
                cand = w + t * step
                val, slack_cand = objective(cand)
                if np.isfinite(val) and (a.shape[0] == 0 or slack_cand is not None):
                    if a.shape[0]:
                        val -= mu * float(np.sum(np.log(slack_cand)))
                    if val <= val0 + 1e-4 * t * descent:
                        w = cand
                        accepted = True
                        break
                t *= 0.5
            if not accepted:
                break
    return reduce_basis @ w


def max_expected_gain(market: DiscreteMarket, probs) -> float:
    """LP optimum of the expected gain under ``probs`` over the allowed
    polyhedron intersected with the return span."""
    basis = market.span.basis
    if basis.shape[1] == 0:
        return 0.0
    a_theta = market.allowed.normals @ basis
    cost = np.asarray(probs, dtype=float) @ (market.returns @ basis)
    res = solve_lp(cost, a_ub=a_theta, b_ub=market.allowed.offsets, maximize=True)
    if res.status == UNBOUNDED:
        return float("inf")
    require_optimal(res, "expected-gain verification")
    return float(res.value)


def construct_esmm(market: DiscreteMarket, tol: float = SUPERMARTINGALE_TOL) -> Esmm:
    """Build an equivalent supermartingale measure for an arbitrage-free market.

    The construction reweights states by ``exp(-|R|^2)``, minimizes the
    exponential moment of wealth over the cone generated by the allowed
    polyhedron, and normalizes ``p * exp(-wealth - |R|^2)`` at the minimizer.
    The result is certified by an LP bounding the expected gain under the new
    measure.
    """
    cert = find_classical_arbitrage(market)
    if cert.found:
        raise PreconditionError(
            "market admits a classical arbitrage; no supermartingale measure exists"
        )
    returns = market.returns
    sq_norms = np.sum(returns * returns, axis=1)
    log_aux = np.log(market.probs) - sq_norms
    with np.errstate(under="ignore"):
        weights = np.exp(log_aux - logsumexp(log_aux))
    basis = market.span.basis
    if basis.shape[1] == 0:
        strategy = np.zeros(market.n_assets)
    else:
        cone = generated_cone(market.allowed, tol=ZERO_OFFSET_TOL)
        cone_rows = cone.normals @ basis
        u = _minimize_exponential_moment(weights, returns @ basis, cone_rows)
        strategy = basis @ u
    wealth_at_min = 1.0 + returns @ strategy
    log_q = np.log(market.probs) - wealth_at_min - sq_norms
    with np.errstate(under="ignore"):
        q = np.exp(log_q - logsumexp(log_q))
    # extreme states can underflow to exactly zero in double precision; the
    # true mass is positive, so floor it at the smallest safe normal value
    q = np.maximum(q, 1e-300)
    q = q / q.sum()
    slack = max_expected_gain(market, q)
    if not slack <= tol:
        raise NumericError(
            f"supermartingale verification failed: expected-gain slack {slack:.3e}"
        )
    logger.debug("esmm constructed: slack %.3e", slack)
    return Esmm(measure=q, density=q / market.probs, strategy=strategy, slack=slack,
                threshold=tol)
