"""Multi-period markets on finite scenario trees.

A scenario tree assigns each non-root node a branch probability and the
return vector realized on the edge from its parent; each non-leaf node
carries the constraint set governing the strategy chosen there for the
coming period.  Every question about the tree reduces to its one-period
node markets:

* no-scalable-arbitrage holds globally exactly when it holds at every node
  (``global_na1``),
* expected-utility maximization propagates backward through the tree; for
  log and power utilities the value function separates into a per-node
  constant plus (or times) the running wealth term, so the dynamic program
  solves one wealth-independent problem per node and is exact
  (``backward_induction``),
* the wealth process of the per-node log optima prices everything: its
  reciprocal is a positive process that turns every allowed wealth process
  into a supermartingale, certified node-by-node with small LPs
  (``numeraire_process``),
* cheapest super-replication composes backward, one homogenized hedging LP
  per node (``superhedge_tree``).

General concave utilities do not separate; for those the value function is
tabulated on a caller-supplied wealth grid with a concave piecewise-linear
interpolant (see ``backward_induction`` and ``default_wealth_grid``).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .arbitrage import check_na1
from .errors import InvalidParameterError, NumericError, PreconditionError
from .hedging import Claim, superhedge
from .lp import require_optimal, solve_lp
from .market import ConstraintSet, DiscreteMarket
from .portfolio import UtilitySpec, maximize_utility, numeraire_portfolio, verify_deflator

#: Membership slack for recorded strategies (constraints and span).
POLICY_TOL = 1e-9

#: Allowed relative slack in per-node supermartingale certification.
DEFLATOR_SLACK_TOL = 1e-8

#: Children probabilities at a node must sum to one within this.
PROB_TOL = 1e-9


@dataclass(frozen=True)
class TreeNode:
    """One tree node: identity, parent link, and the incoming edge data.

    ``prob`` is the conditional probability of reaching this node from its
    parent; ``returns`` the asset returns realized on that edge.  The root
    has no incoming edge: ``parent`` and ``returns`` are None and ``prob``
    must be 1.
    """

    node_id: object
    parent: object | None = None
    prob: float = 1.0
    returns: object | None = None


@dataclass(frozen=True, eq=False)
class ScenarioTree:
    """Finite scenario tree with per-node strategy constraints.

    ``nodes`` must contain exactly one root; every leaf must sit at the same
    depth.  ``constraints`` maps each non-leaf node id to the ConstraintSet
    for the strategy chosen at that node.  Children keep the order in which
    they appear in ``nodes``; leaf-order-sensitive inputs (claims) follow
    ``leaf_ids``.
    """

    nodes: tuple[TreeNode, ...]
    constraints: dict = field(default_factory=dict)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        if not nodes:
            raise InvalidParameterError("a scenario tree needs at least one node")
        by_id: dict = {}
        for node in nodes:
            if not isinstance(node, TreeNode):
                raise InvalidParameterError("nodes must be TreeNode instances")
            if node.node_id in by_id:
                raise InvalidParameterError(f"duplicate node id {node.node_id!r}")
            by_id[node.node_id] = node
        roots = [n for n in nodes if n.parent is None]
        if len(roots) != 1:
            raise InvalidParameterError(
                f"expected exactly one root (parent None), found {len(roots)}"
            )
        root = roots[0]
        if root.returns is not None:
            raise InvalidParameterError("the root has no incoming edge; returns must be None")
        if float(root.prob) != 1.0:
            raise InvalidParameterError("the root's probability must be 1")
        children: dict = {n.node_id: [] for n in nodes}
        for node in nodes:
            if node.parent is None:
                continue
            if node.parent not in by_id:
                raise InvalidParameterError(
                    f"node {node.node_id!r} references unknown parent {node.parent!r}"
                )
            children[node.parent].append(node.node_id)
        depth = {root.node_id: 0}
        bfs = [root.node_id]
        queue = deque([root.node_id])
        while queue:
            current = queue.popleft()
            for child in children[current]:
                depth[child] = depth[current] + 1
                bfs.append(child)
                queue.append(child)
        if len(bfs) != len(nodes):
            raise InvalidParameterError(
                "tree is disconnected (some nodes unreachable from the root)"
            )
        leaves = tuple(nid for nid in bfs if not children[nid])
        horizons = {depth[leaf] for leaf in leaves}
        if len(horizons) != 1:
            raise InvalidParameterError(
                f"all leaves must sit at the same depth, found depths {sorted(horizons)}"
            )
        horizon = horizons.pop()
        if horizon < 1:
            raise InvalidParameterError("a scenario tree needs at least one period")
        dims = set()
        cleaned: dict = {}
        for node in nodes:
            if node.parent is None:
                continue
            returns = np.asarray(node.returns, dtype=float).reshape(-1)
            if returns.size == 0 or not np.all(np.isfinite(returns)):
                raise InvalidParameterError(
                    f"node {node.node_id!r} needs a finite return vector"
                )
            if np.any(returns < -1.0):
                raise InvalidParameterError(f"node {node.node_id!r} has a return below -1")
            dims.add(returns.size)
            returns.setflags(write=False)
            cleaned[node.node_id] = returns
            prob = float(node.prob)
            if not 0.0 < prob <= 1.0:
                raise InvalidParameterError(
                    f"node {node.node_id!r} branch probability {prob} outside (0, 1]"
                )
        if len(dims) > 1:
            raise InvalidParameterError(
                f"inconsistent asset counts across edges: {sorted(dims)}"
            )
        n_assets = dims.pop()
        for node_id, kids in children.items():
            if not kids:
                continue
            total = sum(float(by_id[k].prob) for k in kids)
            if abs(total - 1.0) > PROB_TOL:
                raise InvalidParameterError(
                    f"children of node {node_id!r} have probabilities summing to {total!r}"
                )
        internal = {nid for nid in bfs if children[nid]}
        for node_id in internal:
            cs = self.constraints.get(node_id)
            if not isinstance(cs, ConstraintSet):
                raise InvalidParameterError(f"non-leaf node {node_id!r} needs a ConstraintSet")
            if cs.dim != n_assets:
                raise InvalidParameterError(
                    f"constraints at node {node_id!r} have dim {cs.dim}, expected {n_assets}"
                )
        for node_id in self.constraints:
            if node_id not in internal:
                raise InvalidParameterError(
                    f"constraints given for {node_id!r}, which is not a non-leaf node"
                )
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "constraints", dict(self.constraints))
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_children", {k: tuple(v) for k, v in children.items()})
        object.__setattr__(self, "_depth", depth)
        object.__setattr__(self, "_returns", cleaned)
        object.__setattr__(self, "_root_id", root.node_id)
        object.__setattr__(self, "_leaves", leaves)
        object.__setattr__(self, "_horizon", horizon)
        object.__setattr__(self, "_n_assets", n_assets)
        object.__setattr__(self, "_bfs", tuple(bfs))

    @property
    def root_id(self):
        return self._root_id

    @property
    def leaf_ids(self) -> tuple:
        return self._leaves

    @property
    def horizon(self) -> int:
        return self._horizon

    @property
    def n_assets(self) -> int:
        return self._n_assets

    def node(self, node_id) -> TreeNode:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise InvalidParameterError(f"unknown node id {node_id!r}") from None

    def children(self, node_id) -> tuple:
        self.node(node_id)
        return self._children[node_id]

    def is_leaf(self, node_id) -> bool:
        return not self.children(node_id)

    def depth(self, node_id) -> int:
        self.node(node_id)
        return self._depth[node_id]

    def bfs_ids(self) -> tuple:
        """Node ids in breadth-first order (parents before children)."""
        return self._bfs

    def internal_ids(self) -> tuple:
        """Non-leaf ids in breadth-first order; reverse for backward passes."""
        return tuple(nid for nid in self._bfs if self._children[nid])

    def edge_returns(self, node_id) -> np.ndarray:
        """Returns realized on the edge into ``node_id`` (root has none)."""
        self.node(node_id)
        if node_id == self._root_id:
            raise InvalidParameterError("the root has no incoming edge")
        return self._returns[node_id]

    def path_probability(self, node_id) -> float:
        """Probability of reaching the node from the root."""
        prob = 1.0
        current = self.node(node_id)
        while current.parent is not None:
            prob *= float(current.prob)
            current = self.node(current.parent)
        return prob


def node_market(tree: ScenarioTree, node_id) -> DiscreteMarket:
    """One-period market seen standing at a non-leaf node.

    States are the node's children with their branch probabilities and edge
    returns; the constraint set is the node's own.
    """
    kids = tree.children(node_id)
    if not kids:
        raise InvalidParameterError(f"node {node_id!r} is a leaf; it has no market")
    probs = np.array([float(tree.node(k).prob) for k in kids])
    returns = np.vstack([tree.edge_returns(k) for k in kids])
    return DiscreteMarket(probs, returns, tree.constraints[node_id])


def iid_tree(market: DiscreteMarket, horizon: int, root_id: str = "root") -> ScenarioTree:
    """Tree repeating one market at every node for ``horizon`` periods.

    Child ids extend the parent id with ``/k``; every non-leaf node carries
    the market's constraint set.
    """
    if horizon < 1:
        raise InvalidParameterError("horizon must be at least 1")
    nodes = [TreeNode(root_id)]
    constraints = {}
    frontier = [root_id]
    for _ in range(horizon):
        next_frontier = []
        for parent in frontier:
            constraints[parent] = market.constraints
            for k in range(market.n_states):
                child = f"{parent}/{k}"
                nodes.append(
                    TreeNode(
                        child,
                        parent=parent,
                        prob=float(market.probs[k]),
                        returns=market.returns[k],
                    )
                )
                next_frontier.append(child)
        frontier = next_frontier
    return ScenarioTree(tuple(nodes), constraints)


# -- processes ----------------------------------------------------------------


@dataclass(frozen=True)
class PolicyProcess:
    """Strategy per non-leaf node plus the wealth reached at every node.

    ``wealth`` starts at 1 at the root and multiplies by one plus the chosen
    strategy's gain along each edge.
    """

    strategies: dict
    wealth: dict

    def validate(self, tree: ScenarioTree, require_positive_wealth: bool = False) -> None:
        """Check membership of every strategy in its node's allowed set.

        Membership means the node's admissibility-plus-constraints polyhedron
        and the span of the node's return support, both within a 1e-9 slack.
        """
        for node_id in tree.internal_ids():
            if node_id not in self.strategies:
                raise NumericError(f"no strategy recorded at node {node_id!r}")
            pi = np.asarray(self.strategies[node_id], dtype=float)
            market = node_market(tree, node_id)
            if not market.allowed.contains(pi, tol=POLICY_TOL):
                raise NumericError(f"policy at node {node_id!r} leaves the allowed polyhedron")
            off_span = pi - market.span.project(pi)
            scale = 1.0 + float(np.max(np.abs(pi), initial=0.0))
            if np.max(np.abs(off_span), initial=0.0) > POLICY_TOL * scale:
                raise NumericError(f"policy at node {node_id!r} leaves the return span")
        for node_id in tree.bfs_ids():
            if node_id not in self.wealth:
                raise NumericError(f"no wealth recorded at node {node_id!r}")
            if require_positive_wealth and not self.wealth[node_id] > 0.0:
                raise NumericError(
                    f"wealth at node {node_id!r} is {self.wealth[node_id]!r}, not positive"
                )


@dataclass(frozen=True)
class DeflatorProcess:
    """Positive node process, 1 at the root, deflating allowed wealth.

    The defining property (certified by ``verify_deflator_process``): at each
    non-leaf node, every allowed strategy's deflated one-step wealth has
    conditional expectation at most the node's own value.
    """

    values: dict


def _wealth_process(tree: ScenarioTree, strategies: dict) -> dict:
    wealth = {tree.root_id: 1.0}
    for node_id in tree.bfs_ids():
        node = tree.node(node_id)
        if node.parent is None:
            continue
        gain = float(tree.edge_returns(node_id) @ strategies[node.parent])
        wealth[node_id] = wealth[node.parent] * (1.0 + gain)
    return wealth


def verify_deflator_process(tree: ScenarioTree, process: DeflatorProcess) -> float:
    """Worst relative supermartingale violation across nodes (<= 0 is clean).

    Per node, a small LP maximizes the deflated expected one-step wealth over
    the allowed polyhedron; the result should not exceed the node's own
    deflator value.
    """
    values = process.values
    missing = [nid for nid in tree.bfs_ids() if nid not in values]
    if missing:
        raise InvalidParameterError(f"deflator process missing nodes {missing!r}")
    if abs(float(values[tree.root_id]) - 1.0) > 1e-12:
        raise InvalidParameterError("a deflator process must start at 1")
    for node_id in tree.bfs_ids():
        if not float(values[node_id]) > 0.0:
            raise InvalidParameterError(f"deflator at node {node_id!r} is not positive")
    worst = -math.inf
    for node_id in tree.internal_ids():
        z_here = float(values[node_id])
        market = node_market(tree, node_id)
        ratios = np.array([float(values[k]) / z_here for k in tree.children(node_id)])
        worst = max(worst, verify_deflator(market, ratios) - 1.0)
    return float(worst)


# -- global no-scalable-arbitrage ---------------------------------------------


@dataclass(frozen=True)
class TreeNa1Report:
    """Per-node scalable-arbitrage certificates and the overall verdict."""

    holds: bool
    certificates: dict
    failing: tuple

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "failing": [str(node_id) for node_id in self.failing],
            "certificates": {
                str(node_id): cert.to_dict() for node_id, cert in self.certificates.items()
            },
        }


def global_na1(tree: ScenarioTree) -> TreeNa1Report:
    """Check every node market for scalable arbitrage.

    The tree admits no scalable arbitrage exactly when no single node does,
    so the verdict is the conjunction; failing nodes keep their witness rays
    in the per-node certificates.
    """
    certificates: dict = {}
    failing = []
    for node_id in tree.internal_ids():
        cert = check_na1(node_market(tree, node_id))
        certificates[node_id] = cert
        if not cert.holds:
            failing.append(node_id)
    return TreeNa1Report(not failing, certificates, tuple(failing))


def _require_global_na1(tree: ScenarioTree, context: str) -> None:
    report = global_na1(tree)
    if not report.holds:
        raise PreconditionError(
            f"{context} requires no scalable arbitrage anywhere in the tree; "
            f"failing nodes: {list(report.failing)!r}"
        )


# -- backward induction -------------------------------------------------------


@dataclass(frozen=True)
class BackwardInductionResult:
    """Root value, per-node policy, and per-node continuation data.

    For log utility ``node_values[n]`` is the additive continuation constant
    (the value at node ``n`` with unit wealth); for power utility it is the
    multiplicative one (``value = node_values[n] * x**gamma / gamma``); for
    grid-based runs it is the value table on the wealth grid.
    """

    value: float
    policy: PolicyProcess
    node_values: dict
    diagnostics: dict


def _node_candidates(candidates, node_id) -> np.ndarray | None:
    if candidates is None:
        return None
    chosen = candidates[node_id] if isinstance(candidates, dict) else candidates
    chosen = np.atleast_2d(np.asarray(chosen, dtype=float))
    if chosen.shape[0] == 0:
        raise InvalidParameterError(f"empty candidate set at node {node_id!r}")
    return chosen


def _feasible_candidates(market: DiscreteMarket, chosen: np.ndarray, node_id) -> np.ndarray:
    keep = [pi for pi in chosen if market.allowed.contains(pi, tol=POLICY_TOL)]
    if not keep:
        raise InvalidParameterError(
            f"no candidate strategy at node {node_id!r} lies in the allowed set"
        )
    return np.vstack(keep)


def _best_candidate(weights, returns, candidates, base: UtilitySpec):
    """Expected-utility argmax over a finite strategy set."""
    values = base.value(1.0 + candidates @ returns.T) @ weights
    best = int(np.argmax(values))
    if not np.isfinite(values[best]):
        raise NumericError("every candidate strategy has expected utility -inf")
    return candidates[best], float(values[best])


def _separable_backward(tree, u: UtilitySpec, candidates) -> BackwardInductionResult:
    """Exact DP for log and power utilities.

    Log values add a per-node constant; power values multiply one, so each
    node solves a single wealth-independent one-period problem (with child
    weights tilted by the continuation constants in the power case).  The
    utility's ``scale`` factor shifts (log) or rescales (power) the optimal
    value without moving the optimizer, so the per-node problems use the
    unit-scale utility and the root value is adjusted at the end.
    """
    is_log = u.kind == "log"
    base = UtilitySpec.log() if is_log else UtilitySpec.power(u.gamma)
    node_values: dict = {leaf: (0.0 if is_log else 1.0) for leaf in tree.leaf_ids}
    strategies: dict = {}
    for node_id in reversed(tree.internal_ids()):
        market = node_market(tree, node_id)
        continuation = np.array([node_values[k] for k in tree.children(node_id)])
        if is_log:
            weights = market.probs
        else:
            tilt = market.probs * continuation
            weights = tilt / tilt.sum()
        chosen = _node_candidates(candidates, node_id)
        try:
            if chosen is None:
                tilted = DiscreteMarket(weights, market.returns, market.constraints)
                opt = maximize_utility(tilted, base)
                strategy, value = opt.strategy, opt.value
            else:
                chosen = _feasible_candidates(market, chosen, node_id)
                strategy, value = _best_candidate(weights, market.returns, chosen, base)
                strategy = market.span.project(strategy)
        except NumericError as exc:
            raise NumericError(f"optimization failed at node {node_id!r}: {exc}") from exc
        strategies[node_id] = np.asarray(strategy, dtype=float)
        if is_log:
            node_values[node_id] = float(market.probs @ continuation) + value
        else:
            node_values[node_id] = float(market.probs @ continuation) * u.gamma * value
    if is_log:
        root_value = node_values[tree.root_id] + math.log(u.scale)
    else:
        root_value = u.scale**u.gamma * node_values[tree.root_id] / u.gamma
    policy = PolicyProcess(strategies, _wealth_process(tree, strategies))
    policy.validate(tree, require_positive_wealth=True)
    return BackwardInductionResult(
        float(root_value),
        policy,
        node_values,
        {"utility_form": u.kind, "exact": True},
    )


def _concave_hull_pieces(xs: np.ndarray, ys: np.ndarray):
    """Upper concave hull of the points as (slope, intercept) pieces.

    Also returns the largest upward adjustment the hull applies to any input
    point (a measure of how non-concave the tabulated data was).
    """
    hull = [(xs[0], ys[0])]
    for x, y in zip(xs[1:], ys[1:]):
        hull.append((x, y))
        while len(hull) >= 3:
            (x0, y0), (x1, y1), (x2, y2) = hull[-3:]
            if (y1 - y0) / (x1 - x0) < (y2 - y1) / (x2 - x1) - 1e-15:
                del hull[-2]
            else:
                break
    pieces = []
    for (x0, y0), (x1, y1) in zip(hull, hull[1:]):
        slope = (y1 - y0) / (x1 - x0)
        pieces.append((slope, y0 - slope * x0))
    hull_at = np.array([[m * x + b for m, b in pieces] for x in xs]).min(axis=1)
    repair = float(np.max(hull_at - ys, initial=0.0))
    return pieces, repair


def _hull_value(pieces, x: float) -> float:
    return min(m * x + b for m, b in pieces)


def _grid_node_problem(market, x, child_pieces, probs):
    """One epigraph LP: best expected continuation at entering wealth ``x``.

    Variables are the strategy followed by one continuation value per child;
    each continuation value is pushed down onto every hull piece of that
    child's tabulated value function, evaluated at next-period wealth.
    """
    d = market.n_assets
    n = len(child_pieces)
    allowed = market.allowed
    rows, rhs = [], []
    for c, pieces in enumerate(child_pieces):
        returns_c = market.returns[c]
        for slope, intercept in pieces:
            row = np.zeros(d + n)
            row[:d] = -slope * x * returns_c
            row[d + c] = 1.0
            rows.append(row)
            rhs.append(slope * x + intercept)
    theta = np.zeros((allowed.normals.shape[0], d + n))
    theta[:, :d] = allowed.normals
    a_ub = np.vstack([np.vstack(rows), theta])
    b_ub = np.concatenate([np.asarray(rhs, dtype=float), allowed.offsets])
    cost = np.concatenate([np.zeros(d), probs])
    res = require_optimal(
        solve_lp(cost, a_ub=a_ub, b_ub=b_ub, maximize=True),
        "wealth-grid step",
    )
    return res.x[:d], float(res.value)


def _grid_backward(tree, u: UtilitySpec, grid, candidates) -> BackwardInductionResult:
    """Tabulated DP for utilities with no separable structure."""
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise InvalidParameterError("the wealth grid must be increasing with >= 2 points")
    leaf_table = np.asarray(u.value(grid), dtype=float)
    if not np.all(np.isfinite(leaf_table)):
        raise InvalidParameterError(
            "the utility is not finite on the whole wealth grid; restrict the "
            "grid to the utility's domain"
        )
    tables: dict = {leaf: leaf_table for leaf in tree.leaf_ids}
    leaf_pieces, leaf_repair = _concave_hull_pieces(grid, leaf_table)
    pieces: dict = {leaf: leaf_pieces for leaf in tree.leaf_ids}
    repairs = [leaf_repair]
    strategies_by_x: dict = {}
    for node_id in reversed(tree.internal_ids()):
        market = node_market(tree, node_id)
        child_pieces = [pieces[k] for k in tree.children(node_id)]
        chosen = _node_candidates(candidates, node_id)
        if chosen is not None:
            chosen = _feasible_candidates(market, chosen, node_id)
        values = np.empty(grid.size)
        best_pis = []
        for i, x in enumerate(grid):
            try:
                if chosen is None:
                    pi, value = _grid_node_problem(market, x, child_pieces, market.probs)
                else:
                    scores = [
                        sum(
                            market.probs[c]
                            * _hull_value(child_pieces[c], x * (1.0 + market.returns[c] @ pi))
                            for c in range(market.n_states)
                        )
                        for pi in chosen
                    ]
                    best = int(np.argmax(scores))
                    pi, value = chosen[best], float(scores[best])
            except NumericError as exc:
                raise NumericError(
                    f"wealth-grid step failed at node {node_id!r}, wealth {x:g}: {exc}"
                ) from exc
            best_pis.append(market.span.project(np.asarray(pi, dtype=float)))
            values[i] = value
        tables[node_id] = values
        pieces[node_id], repair = _concave_hull_pieces(grid, values)
        repairs.append(repair)
        strategies_by_x[node_id] = best_pis
    # Record the policy along realized wealth, starting from 1 at the root;
    # each node uses the strategy tabulated at the nearest grid point.
    strategies: dict = {}
    wealth = {tree.root_id: 1.0}
    for node_id in tree.bfs_ids():
        node = tree.node(node_id)
        if node.parent is not None:
            gain = float(tree.edge_returns(node_id) @ strategies[node.parent])
            wealth[node_id] = wealth[node.parent] * (1.0 + gain)
        if tree.is_leaf(node_id):
            continue
        nearest = int(np.argmin(np.abs(grid - wealth[node_id])))
        strategies[node_id] = strategies_by_x[node_id][nearest]
    root_value = float(np.interp(1.0, grid, tables[tree.root_id]))
    policy = PolicyProcess(strategies, wealth)
    policy.validate(tree)
    return BackwardInductionResult(
        root_value,
        policy,
        tables,
        {
            "utility_form": u.kind,
            "exact": False,
            "grid_points": int(grid.size),
            "max_concavity_repair": float(max(repairs)),
        },
    )


def backward_induction(
    tree: ScenarioTree,
    u: UtilitySpec,
    grid=None,
    candidates=None,
) -> BackwardInductionResult:
    """Maximize expected terminal utility of wealth over the tree.

    Log and power utilities separate across periods, so the dynamic program
    is exact: each node contributes one wealth-independent one-period
    problem (solved by ``maximize_utility``, or by enumeration when a finite
    ``candidates`` set restricts the strategies; ``candidates`` is a strategy
    array applied at every node, or a dict keyed by non-leaf node id).
    Other utilities require a wealth ``grid``; their value functions are
    tabulated with concave piecewise-linear interpolation and the per-node
    problems become small epigraph LPs.  Refuses trees with scalable
    arbitrage.
    """
    _require_global_na1(tree, "backward induction")
    if u.kind in ("log", "power") and u.shift == 0.0:
        return _separable_backward(tree, u, candidates)
    if grid is None:
        raise InvalidParameterError(
            "this utility has no separable structure across periods; supply a "
            "wealth grid (see default_wealth_grid)"
        )
    return _grid_backward(tree, u, grid, candidates)


def default_wealth_grid(tree: ScenarioTree, points: int = 257) -> np.ndarray:
    """Geometric wealth grid spanning the reachable range.

    Interval propagation: per node, LPs bound the one-step gain over the
    allowed polyhedron; products of the extreme gross returns bound terminal
    wealth.  The lower end is floored at a tiny positive fraction so the
    geometric spacing stays well defined.
    """
    if points < 2:
        raise InvalidParameterError("a wealth grid needs at least two points")
    _require_global_na1(tree, "wealth-grid construction")
    lo, hi = {tree.root_id: 1.0}, {tree.root_id: 1.0}
    for node_id in tree.bfs_ids():
        if tree.is_leaf(node_id):
            continue
        allowed = node_market(tree, node_id).allowed
        for child in tree.children(node_id):
            returns = tree.edge_returns(child)
            worst = require_optimal(
                solve_lp(returns, a_ub=allowed.normals, b_ub=allowed.offsets),
                "wealth lower bound",
            ).value
            best = require_optimal(
                solve_lp(returns, a_ub=allowed.normals, b_ub=allowed.offsets, maximize=True),
                "wealth upper bound",
            ).value
            lo[child] = lo[node_id] * max(1.0 + worst, 0.0)
            hi[child] = hi[node_id] * (1.0 + best)
    floor = max(min(lo[leaf] for leaf in tree.leaf_ids), 1e-6)
    ceil = max(max(hi[leaf] for leaf in tree.leaf_ids), floor * (1.0 + 1e-6))
    return np.geomspace(floor, ceil, points)


# -- numeraire and deflator processes -----------------------------------------


def numeraire_process(tree: ScenarioTree) -> tuple[PolicyProcess, DeflatorProcess]:
    """Per-node log-optimal strategies and the reciprocal-wealth deflator.

    The log optimum at each node makes every allowed wealth ratio a one-step
    supermartingale; stitched along the tree, the inverse of its wealth
    process deflates every allowed strategy's wealth.  Each node's
    supermartingale property is re-certified by LP before returning.
    """
    _require_global_na1(tree, "the numeraire process")
    strategies: dict = {}
    for node_id in tree.internal_ids():
        try:
            strategies[node_id] = numeraire_portfolio(node_market(tree, node_id)).strategy
        except NumericError as exc:
            raise NumericError(f"optimization failed at node {node_id!r}: {exc}") from exc
    wealth = _wealth_process(tree, strategies)
    policy = PolicyProcess(strategies, wealth)
    policy.validate(tree, require_positive_wealth=True)
    deflator = DeflatorProcess({node_id: 1.0 / w for node_id, w in wealth.items()})
    violation = verify_deflator_process(tree, deflator)
    if violation > DEFLATOR_SLACK_TOL:
        raise NumericError(
            f"numeraire deflator fails supermartingale certification by {violation:.3e}"
        )
    return policy, deflator


# -- super-replication ---------------------------------------------------------


@dataclass(frozen=True)
class TreeHedge:
    """Cheapest super-replication of a terminal claim over the tree.

    ``node_values`` gives the cost of covering the claim from each node on;
    ``strategies`` the wealth fractions backing that cost at each non-leaf
    node, so hedge capital compounds as ``x * (1 + <strategy, returns>)``
    along each edge.
    """

    value: float
    node_values: dict
    strategies: dict

    def to_dict(self) -> dict:
        return {
            "value": float(self.value),
            "node_values": {str(k): float(v) for k, v in self.node_values.items()},
            "strategies": {
                str(k): [float(x) for x in v] for k, v in self.strategies.items()
            },
        }


def _leaf_payoffs(tree: ScenarioTree, claim) -> dict:
    if isinstance(claim, dict):
        missing = [leaf for leaf in tree.leaf_ids if leaf not in claim]
        if missing:
            raise InvalidParameterError(f"claim missing leaves {missing!r}")
        extra = [k for k in claim if k not in set(tree.leaf_ids)]
        if extra:
            raise InvalidParameterError(f"claim names non-leaf nodes {extra!r}")
        payoffs = {leaf: float(claim[leaf]) for leaf in tree.leaf_ids}
    else:
        values = np.asarray(claim, dtype=float).reshape(-1)
        if values.size != len(tree.leaf_ids):
            raise InvalidParameterError(
                f"claim has {values.size} entries for {len(tree.leaf_ids)} leaves"
            )
        payoffs = dict(zip(tree.leaf_ids, values.tolist()))
    bad = {k: v for k, v in payoffs.items() if not (math.isfinite(v) and v >= 0.0)}
    if bad:
        raise InvalidParameterError(f"claim must be finite and nonnegative, got {bad!r}")
    return payoffs


def superhedge_tree(tree: ScenarioTree, claim) -> TreeHedge:
    """Cheapest capital covering a nonnegative terminal claim from the root.

    Works backward: each node's cost is the one-period super-replication
    price of the vector of its children's costs.  ``claim`` maps leaf id to
    payoff, or is a sequence in ``leaf_ids`` order.
    """
    _require_global_na1(tree, "tree super-replication")
    node_values = _leaf_payoffs(tree, claim)
    strategies: dict = {}
    for node_id in reversed(tree.internal_ids()):
        market = node_market(tree, node_id)
        payoff = np.array([node_values[k] for k in tree.children(node_id)])
        report = superhedge(market, Claim(payoff))
        # The cost of a nonnegative claim is nonnegative; clip LP noise so the
        # next level's Claim constructor accepts it.
        node_values[node_id] = max(float(report.primal_value), 0.0)
        strategies[node_id] = report.strategy
    return TreeHedge(float(node_values[tree.root_id]), node_values, strategies)
