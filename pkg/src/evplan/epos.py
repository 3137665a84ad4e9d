"""Bottom-up cooperative plan selection over a tree of agents.

Every agent offers a few candidate demand plans. Leaves pass their plans to
their parent. A parent enumerates the Cartesian product of its children's
candidate aggregates and, for each of its own plans, keeps the combination
that minimises the objective on its subtree. It then forwards one aggregate
per own plan. The root settles on one plan, and the choices are resolved top
down.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np


class Objective(str, Enum):
    MIN_DEV = "MIN-DEV"
    MIN_COST = "MIN-COST"


@dataclass(frozen=True)
class TreeTopology:
    nodes: tuple  # level order, root first
    children: Mapping[object, tuple]

    @property
    def root(self):
        return self.nodes[0]

    def depth(self) -> int:
        depth, frontier = 0, [self.root]
        while True:
            frontier = [c for n in frontier for c in self.children.get(n, ())]
            if not frontier:
                return depth
            depth += 1

    def post_order(self) -> list:
        """Nodes with every child ahead of its parent."""
        return list(reversed(self.nodes))


@dataclass(frozen=True, eq=False)
class CombinationalPlan:
    values: np.ndarray
    choice: tuple[int, ...]  # candidate index per child


@dataclass(frozen=True)
class Selection:
    combo: int
    own_plan: int
    score: float


@dataclass(frozen=True, eq=False)
class ParentDecision:
    """What one parent saw and chose, kept for audit."""

    agent: object
    own_plans: np.ndarray  # (v_own, T)
    child_candidates: tuple[np.ndarray, ...]  # per child (v_child, T)
    best_combo: tuple[int, ...]  # flat combo index per own plan


@dataclass(eq=False)
class OptimizationResult:
    selections: dict  # agent -> 0-based plan index
    curve: np.ndarray
    decisions: dict = field(default_factory=dict)  # agent -> ParentDecision


def build_tree(agent_ids: Sequence, seed: int, fanout: int = 2) -> TreeTopology:
    """Seeded shuffle of the agents laid out as a complete ``fanout``-ary tree."""
    agents = list(agent_ids)
    if not agents:
        raise ValueError("need at least one agent")
    order = np.random.default_rng(seed).permutation(len(agents))
    nodes = tuple(agents[i] for i in order)
    children = {}
    for i, node in enumerate(nodes):
        kids = tuple(nodes[c] for c in range(fanout * i + 1, fanout * i + fanout + 1) if c < len(nodes))
        if kids:
            children[node] = kids
    return TreeTopology(nodes, children)


def _stack(plans) -> np.ndarray:
    arr = np.asarray(plans, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


def combination_sums(children: Sequence) -> np.ndarray:
    """All elementwise sums across the children's candidates, first child major."""
    arrays = [_stack(c) for c in children]
    if not arrays:
        raise ValueError("need at least one child")
    horizon = arrays[0].shape[1]
    if any(a.shape[1] != horizon for a in arrays):
        raise ValueError("children disagree on horizon length")
    total = arrays[0]
    for a in arrays[1:]:
        total = (total[:, None, :] + a[None, :, :]).reshape(-1, horizon)
    return total


def combine(children: Sequence) -> list[CombinationalPlan]:
    """Cartesian product of the children's candidate aggregates."""
    sums = combination_sums(children)
    shape = [_stack(c).shape[0] for c in children]
    return [CombinationalPlan(sums[i], tuple(int(x) for x in np.unravel_index(i, shape))) for i in range(len(sums))]


def _scores(totals: np.ndarray, objective: Objective, price: np.ndarray | None) -> np.ndarray:
    if objective is Objective.MIN_DEV:
        return totals.std(axis=-1)
    if price is None:
        raise ValueError("MIN-COST needs a price signal")
    if price.shape[-1] != totals.shape[-1]:
        raise ValueError("price horizon differs from the demand horizon")
    return totals @ price


def _first_min(scores: np.ndarray, axis=None) -> np.ndarray:
    """Index of the first minimum, counting scores within rounding noise as tied.

    Summation order makes exactly tied candidates differ in the last bits,
    which would otherwise defeat the lowest-index tie-break.
    """
    best = scores.min(axis=axis, keepdims=True)
    tol = 1e-9 * np.maximum(1.0, np.abs(best))
    hits = scores <= best + tol
    if axis is None:
        return np.argmax(hits.ravel())
    return np.argmax(hits, axis=axis)


def _select(combos, parent_plans, objective: Objective, price=None) -> Selection:
    combo_arr = np.vstack([c.values if isinstance(c, CombinationalPlan) else np.asarray(c, float) for c in combos])
    own = np.vstack([getattr(p, "values", p) for p in parent_plans]) if len(parent_plans) else np.zeros((1, combo_arr.shape[1]))
    if own.shape[1] != combo_arr.shape[1]:
        raise ValueError("plan horizons differ")
    scores = _scores(own[:, None, :] + combo_arr[None, :, :], objective, price)
    # own plan major, combo minor
    flat = int(_first_min(scores))
    p, c = divmod(flat, combo_arr.shape[0])
    return Selection(combo=c, own_plan=p, score=float(scores[p, c]))


def select_min_dev(combos, parent_plans) -> Selection:
    """(combination, own plan) pair with the flattest summed demand."""
    return _select(combos, parent_plans, Objective.MIN_DEV)


def select_min_cost(combos, parent_plans, price) -> Selection:
    """(combination, own plan) pair with the lowest price-weighted demand."""
    return _select(combos, parent_plans, Objective.MIN_COST, np.asarray(price, dtype=float))


def run_optimization(
    plan_sets: Mapping[object, np.ndarray],
    topology: TreeTopology,
    objective: Objective | str = Objective.MIN_DEV,
    price: np.ndarray | None = None,
    non_participants: Mapping[object, np.ndarray] | None = None,
) -> OptimizationResult:
    """Select one plan per agent, bottom up over ``topology``.

    ``plan_sets`` maps an agent to its ``(v, T)`` plan matrix. Agents listed in
    ``non_participants`` run their fixed control plan instead.
    """
    objective = Objective(objective)
    non_participants = non_participants or {}
    price = None if price is None else np.asarray(price, dtype=float)
    own: dict = {}
    for agent in topology.nodes:
        if agent in non_participants:
            own[agent] = _stack(non_participants[agent])
        elif agent in plan_sets:
            own[agent] = _stack(plan_sets[agent])
        else:
            raise ValueError(f"agent {agent!r} has neither plans nor a control plan")
    extra = set(plan_sets) | set(non_participants)
    if extra - set(topology.nodes):
        raise ValueError(f"plans given for agents outside the tree: {sorted(map(str, extra - set(topology.nodes)))}")
    horizon = own[topology.root].shape[1]
    if any(p.shape[1] != horizon for p in own.values()):
        raise ValueError("plan horizons differ between agents")
    if objective is Objective.MIN_COST:
        if price is None:
            raise ValueError("MIN-COST needs a price signal")
        if price.shape != (horizon,):
            raise ValueError("price horizon differs from the demand horizon")

    candidates: dict = {}  # agent -> (v, T) aggregates forwarded upward
    decisions: dict = {}
    for agent in topology.post_order():
        kids = topology.children.get(agent, ())
        plans = own[agent]
        if not kids:
            candidates[agent] = plans
            continue
        child_cands = tuple(candidates[k] for k in kids)
        sums = combination_sums(child_cands)
        totals = plans[:, None, :] + sums[None, :, :]
        best = _first_min(_scores(totals, objective, price), axis=1)
        decisions[agent] = ParentDecision(agent, plans, child_cands, tuple(int(b) for b in best))
        candidates[agent] = totals[np.arange(plans.shape[0]), best]

    root_scores = _scores(candidates[topology.root], objective, price)
    selections = {topology.root: int(_first_min(root_scores))}
    for agent in topology.nodes:
        kids = topology.children.get(agent, ())
        if not kids:
            continue
        flat = decisions[agent].best_combo[selections[agent]]
        shape = [candidates[k].shape[0] for k in kids]
        for kid, idx in zip(kids, np.unravel_index(flat, shape)):
            selections[kid] = int(idx)

    curve = candidates[topology.root][selections[topology.root]].copy()
    return OptimizationResult(selections, curve, decisions)
