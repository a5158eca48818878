"""Node policies: the probability that a node's subtree holds the optimal antenna set."""

from __future__ import annotations

from .gnn import GnnParams, extract_features, forward


def label_node(node, A_star) -> int:
    """1 when the node's decisions agree with the optimal antenna set ``A_star``."""
    A_star = frozenset(A_star)
    if node.include <= A_star and not (node.exclude & A_star):
        return 1
    return 0


class Policy:
    def prob(self, node, snapshot, inst) -> float:
        raise NotImplementedError


class GnnPolicy(Policy):
    def __init__(self, params: GnnParams, backend=None):
        self.params = params
        self.backend = backend

    def prob(self, node, snapshot, inst):
        return forward(self.params, extract_features(node, snapshot, inst), self.backend)


class ConstantPolicy(Policy):
    def __init__(self, value):
        self.value = float(value)

    def prob(self, node, snapshot, inst):
        return self.value


class OraclePolicy(Policy):
    """Ground-truth labels from a known optimal antenna set."""

    def __init__(self, A_star):
        self.A_star = frozenset(A_star)

    def prob(self, node, snapshot, inst):
        return float(label_node(node, self.A_star))


def as_policy(policy) -> Policy:
    if isinstance(policy, Policy):
        return policy
    if isinstance(policy, GnnParams):
        return GnnPolicy(policy)
    if isinstance(policy, (int, float)):
        return ConstantPolicy(policy)
    raise TypeError(f"cannot use {type(policy).__name__} as a node policy")
