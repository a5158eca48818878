"""Online imitation learning of the node gate.

Every batch runs branch and bound, driven by the current classifier, on fresh
instances whose optimal antenna set is known, labels each popped node, and
refits the classifier on all batches so far with a random linear perturbation
of the objective.  The returned policy is the snapshot with the smallest
validation loss on data generated by that snapshot itself.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .bnb import BnbConfig, _engine, run_bb
from .errors import BeamselectError, ConfigurationError, ParseError, UsageError
from .gnn import DEFAULT_E, GnnParams, GraphSample, extract_features, init_params, loss_and_grad, project_spectral
from .gnn.model import save_checkpoint
from .instance import InstanceConfig, generate_instance
from .policy import GnnPolicy, as_policy, label_node

log = logging.getLogger(__name__)

CLAMP = 1e-12


@dataclass(eq=False)
class TrainingPair:
    sample: GraphSample
    label: int
    level: int
    instance_id: str
    include: frozenset = frozenset()
    exclude: frozenset = frozenset()

    def to_record(self):
        return {
            "instance_id": self.instance_id,
            "include": sorted(self.include),
            "exclude": sorted(self.exclude),
            "level": self.level,
            "label": self.label,
            "sample": self.sample.to_dict(),
        }

    @classmethod
    def from_record(cls, rec):
        return cls(
            sample=GraphSample.from_dict(rec["sample"]),
            label=int(rec["label"]),
            level=int(rec["level"]),
            instance_id=str(rec["instance_id"]),
            include=frozenset(rec["include"]),
            exclude=frozenset(rec["exclude"]),
        )


@dataclass
class TrainerConfig:
    batches: int = 20
    instances_per_batch: int = 30
    # expected perturbation mass is size/eta; keep it well below the loss scale
    eta: float = 1e5
    q: float = 11.0
    epochs: int = 10
    minibatch: int = 128
    lr: float = 1e-3
    validation_instances: int = 30
    min_validation_pairs: int = 500
    seed: int = 0
    embed_dim: int = DEFAULT_E
    n_antennas: int = 8
    n_users: int = 4
    budget: int = 4
    gamma: float = 10.0
    sigma2: float = 0.1
    eps: float = 0.0
    gate: float = 0.5
    rel_gap: float = 1e-4

    def __post_init__(self):
        for name in ("batches", "instances_per_batch", "epochs", "minibatch", "validation_instances", "embed_dim"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("eta", "q", "lr"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")

    def instance_config(self, seed):
        return InstanceConfig.uniform(
            self.n_antennas, self.n_users, self.budget, gamma=self.gamma, sigma2=self.sigma2, eps=self.eps, seed=seed
        )


@dataclass
class PolicySnapshot:
    params: GnnParams
    batch: int
    validation_loss: float = math.nan


@dataclass
class TrainingLog:
    snapshots: list = field(default_factory=list)
    selected: PolicySnapshot = None
    perturbations: list = field(default_factory=list)
    batch_sizes: list = field(default_factory=list)
    train_losses: list = field(default_factory=list)
    datasets: list = field(default_factory=list, repr=False)


class TrainingDiverged(BeamselectError, RuntimeError):
    def __init__(self, message, params=None):
        self.params = params
        super().__init__(message)


# ---------------------------------------------------------------------------
# loss


def pair_weight(y, level, q=11.0):
    return (q * (y == 1) + 1.0) / max(level, 1)


def weighted_loss(pi, y, level, q=11.0) -> float:
    """Class- and depth-weighted binary cross-entropy."""
    pi = min(max(float(pi), CLAMP), 1.0 - CLAMP)
    bce = -(y * math.log(pi) + (1 - y) * math.log(1.0 - pi))
    return pair_weight(y, level, q) * bce


def mean_weighted_loss(params, pairs, q=11.0) -> float:
    if not pairs:
        raise UsageError("empty validation set")
    y = np.array([p.label for p in pairs], dtype=float)
    w = np.array([pair_weight(p.label, p.level, q) for p in pairs])
    total, _ = _loss_only(params, pairs, y, w)
    return total / len(pairs)


def _loss_only(params, pairs, y, w):
    from .gnn import forward_batch

    pi = np.clip(forward_batch(params, [p.sample for p in pairs]), CLAMP, 1.0 - CLAMP)
    losses = w * -(y * np.log(pi) + (1.0 - y) * np.log(1.0 - pi))
    return float(losses.sum()), losses


# ---------------------------------------------------------------------------
# data generation


@dataclass
class InstanceRecord:
    """An instance with its exact solution and a solve memo shared by later replays."""

    instance_id: str
    inst: object
    A_star: frozenset
    objective: float
    memo: dict = field(default_factory=dict, repr=False)


def solve_reference(inst, instance_id="", rel_gap=1e-6) -> InstanceRecord:
    memo = {}
    res = run_bb(inst, BnbConfig(rel_gap=rel_gap), memo=memo)
    if not res.feasible:
        return None
    return InstanceRecord(instance_id, inst, res.A_star, res.objective, memo)


def collect_data(inst, policy=None, instance_id="", reference: InstanceRecord = None, gate=0.5, rel_gap=1e-4):
    """Labelled samples for every node popped by a branch and bound run.

    Without a policy every node is expanded; otherwise a node is expanded only
    when the policy scores it at least ``gate``.  Returns ``(pairs, result)``;
    an infeasible instance gives ``([], None)``.
    """
    ref = reference or solve_reference(inst, instance_id)
    if ref is None:
        log.info("instance %s infeasible; skipped", instance_id)
        return [], None
    pol = as_policy(policy) if policy is not None else None
    pairs = []

    def record(node, snap):
        sample = extract_features(node, snap, inst)
        y = label_node(node, ref.A_star)
        pairs.append(TrainingPair(sample, y, node.level, instance_id, node.include, node.exclude))
        if pol is None:
            return True
        return pol.prob(node, snap, inst) >= gate

    res = _engine(inst, BnbConfig(rel_gap=rel_gap), gate=record, memo=ref.memo, method="collect")
    return pairs, res


def save_dataset(pairs, path, append=True):
    with open(path, "a" if append else "w") as fh:
        for p in pairs:
            fh.write(json.dumps(p.to_record()) + "\n")


def load_dataset(path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(TrainingPair.from_record(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(f"bad dataset record: {exc}", line=lineno) from None
    return out


# ---------------------------------------------------------------------------
# training


class _Adam:
    def __init__(self, size, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta, grad):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1**self.t)
        vhat = self.v / (1 - self.b2**self.t)
        return theta - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def fit_perturbed(params, batches, psi, cfg: TrainerConfig, rng):
    """Approximately minimise the batch-averaged weighted loss minus ``psi . theta``.

    Pairs of batch t carry coefficient ``1 / (i |D_t|)`` with ``i`` batches in
    the pool.  Returns the new parameters and the achieved objective.
    """
    pool = [p for batch in batches for p in batch]
    coef = np.concatenate([np.full(len(b), 1.0 / (len(batches) * len(b))) for b in batches if b])
    y = np.array([p.label for p in pool], dtype=float)
    w = np.array([pair_weight(p.label, p.level, cfg.q) for p in pool]) * coef
    P = len(pool)
    opt = _Adam(params.size, cfg.lr)
    theta = params.theta.copy()
    for _ in range(cfg.epochs):
        order = rng.permutation(P)
        for start in range(0, P, cfg.minibatch):
            idx = order[start : start + cfg.minibatch]
            loss, grad = loss_and_grad(params, [pool[i].sample for i in idx], y[idx], w[idx])
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise TrainingDiverged("non-finite loss during training", params)
            grad = grad * (P / len(idx)) - psi
            theta = opt.step(theta, grad)
            params = project_spectral(params.replace(theta))
            theta = params.theta.copy()
    total, _ = _loss_only(params, pool, y, w)
    return params, total - float(psi @ params.theta)


def _seed_stream(seed, tag):
    ss = np.random.SeedSequence([seed, tag])
    rng = np.random.default_rng(ss)
    while True:
        yield int(rng.integers(0, 2**63 - 1))


def _draw_instances(cfg, count, seeds, prefix):
    out = []
    while len(out) < count:
        s = next(seeds)
        inst = generate_instance(cfg.instance_config(s))
        ref = solve_reference(inst, f"{prefix}-{s}")
        if ref is None:
            # infeasible draws are replaced by a fresh seed
            continue
        out.append(ref)
    return out


def validation_pairs(params, refs, cfg: TrainerConfig):
    pol = GnnPolicy(params)
    pairs = []
    for ref in refs:
        p, _ = collect_data(ref.inst, pol, ref.instance_id, ref, cfg.gate, cfg.rel_gap)
        pairs += p
    return pairs


def select_policy(snapshots, validation_sets=None, q=11.0) -> PolicySnapshot:
    """Snapshot with the smallest mean validation loss; ties go to the earlier batch."""
    if not snapshots:
        raise UsageError("no snapshots to select from")
    if validation_sets is not None:
        if len(validation_sets) != len(snapshots) or any(not v for v in validation_sets):
            raise UsageError("every snapshot needs a non-empty validation set")
        for snap, pairs in zip(snapshots, validation_sets):
            snap.validation_loss = mean_weighted_loss(snap.params, pairs, q)
    if any(not math.isfinite(s.validation_loss) for s in snapshots):
        raise UsageError("snapshot without a validation loss")
    return min(snapshots, key=lambda s: (s.validation_loss, s.batch))


def train_online(cfg: TrainerConfig, dump_path=None, progress=None) -> TrainingLog:
    """Run the batch loop and return every snapshot plus the selected one."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    train_seeds = _seed_stream(cfg.seed, 1)
    val_seeds = _seed_stream(cfg.seed, 2)
    params = init_params(cfg.embed_dim, seed=cfg.seed)
    out = TrainingLog()
    batches = []
    val_refs = _draw_instances(cfg, cfg.validation_instances, val_seeds, "val")
    for i in range(1, cfg.batches + 1):
        out.snapshots.append(PolicySnapshot(params, i))
        psi = rng.exponential(1.0 / cfg.eta, size=params.size)
        out.perturbations.append(psi)
        refs = _draw_instances(cfg, cfg.instances_per_batch, train_seeds, f"b{i}")
        policy = None if i == 1 else GnnPolicy(params)
        batch = []
        for ref in refs:
            pairs, _ = collect_data(ref.inst, policy, ref.instance_id, ref, cfg.gate, cfg.rel_gap)
            batch += pairs
        batches.append(batch)
        out.datasets.append(batch)
        out.batch_sizes.append(len(batch))
        try:
            params, achieved = fit_perturbed(params, batches, psi, cfg, rng)
        except TrainingDiverged as exc:
            if dump_path is not None and exc.params is not None:
                save_checkpoint(exc.params, dump_path)
            raise
        out.train_losses.append(achieved)
        if progress:
            progress(f"batch {i}: {len(batch)} pairs, objective {achieved:.4f}")

    val_sets = []
    for snap in out.snapshots:
        pairs = validation_pairs(snap.params, val_refs, cfg)
        while len(pairs) < cfg.min_validation_pairs:
            more = _draw_instances(cfg, 5, val_seeds, "val")
            val_refs += more
            pairs += validation_pairs(snap.params, more, cfg)
        val_sets.append(pairs)
    out.selected = select_policy(out.snapshots, val_sets, cfg.q)
    return out
