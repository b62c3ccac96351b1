"""A small categorical policy over discretized response tokens for checking
the supervised and reinforcement training math end to end.

A response is a fixed sequence of slots: six lattice values followed by six
pose values per block. Each slot picks one of 16 bins from its value grid.
The policy is a product of independent per-slot softmaxes (no context), so
log-probabilities and gradients are available in closed form:

    d log p(k) / d logits[s] = (onehot(k) - p[s]) / temperature
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .assembly import AssemblySpec, AtomStructure, assemble
from .codec import parse_response, render_sft_response
from .errors import ParseError
from .frames import BlockPose, BuildingBlock
from .lattice import LatticeParams
from .reward import (
    GroupSample,
    SapoConfig,
    reward_details,
    sapo_gradient,
    sapo_objective,
)
from .rotations import EulerAngles

N_BINS = 16
EOS = "<eos>"
LATTICE_SLOTS = 6
POSE_SLOTS = 6


def _euler_grid(lo, hi, n, closed):
    if closed:
        return np.linspace(lo, hi, n)
    return lo + (hi - lo) * np.arange(n) / n


@dataclass
class TokenVocab:
    """Per-field value grids; token ``k`` of a slot decodes to ``grid[k]``."""

    lengths: np.ndarray = field(default_factory=lambda: 6.0 + 0.5 * np.arange(N_BINS))
    angles: np.ndarray = field(default_factory=lambda: 60.0 + 5.0 * np.arange(N_BINS))
    translation: np.ndarray = field(default_factory=lambda: np.arange(N_BINS) / N_BINS)
    roll_yaw: np.ndarray = field(default_factory=lambda: _euler_grid(-math.pi, math.pi, N_BINS, False))
    pitch: np.ndarray = field(default_factory=lambda: _euler_grid(-math.pi / 2, math.pi / 2, N_BINS, True))
    eos: str = EOS

    def __post_init__(self):
        for name in ("lengths", "angles", "translation", "roll_yaw", "pitch"):
            grid = np.asarray(getattr(self, name), dtype=float)
            if np.any(np.diff(grid) <= 0):
                raise ValueError(f"{name} grid must be strictly increasing")
            setattr(self, name, grid)

    def slot_grids(self, n_blocks: int) -> list:
        grids = [self.lengths] * 3 + [self.angles] * 3
        for _ in range(n_blocks):
            grids += [self.translation] * 3 + [self.roll_yaw, self.pitch, self.roll_yaw]
        return grids

    def encode_value(self, value: float, grid_name: str) -> int:
        grid = getattr(self, grid_name)
        if grid_name == "translation":
            return int(round(value * N_BINS)) % N_BINS
        if grid_name == "roll_yaw":
            step = grid[1] - grid[0]
            return int(round((value - grid[0]) / step)) % len(grid)
        return int(np.argmin(np.abs(grid - value)))

    def encode(self, lattice, poses) -> np.ndarray:
        names = ["lengths"] * 3 + ["angles"] * 3
        values = list(LatticeParams.coerce(lattice))
        for pose in poses:
            names += ["translation"] * 3 + ["roll_yaw", "pitch", "roll_yaw"]
            values += list(pose.translation) + list(pose.euler)
        return np.array([self.encode_value(v, n) for v, n in zip(values, names)], dtype=int)

    def values(self, tokens) -> np.ndarray:
        tokens = np.asarray(tokens, dtype=int)
        n_blocks = (len(tokens) - LATTICE_SLOTS) // POSE_SLOTS
        return np.array([g[k] for g, k in zip(self.slot_grids(n_blocks), tokens)])

    def to_text(self, tokens) -> str:
        """Render a token sequence as a response; an invalid lattice yields a
        line the parser rejects, exactly like a malformed model response."""
        v = self.values(tokens)
        lat = v[:LATTICE_SLOTS]
        poses = [
            BlockPose(v[i : i + 3], EulerAngles(*v[i + 3 : i + 6]))
            for i in range(LATTICE_SLOTS, len(v), POSE_SLOTS)
        ]
        try:
            text = render_sft_response(LatticeParams(*lat), poses)
        except ValueError:
            head = " ".join(f"{x:.2f}" for x in lat)
            body = render_sft_response(LatticeParams(10, 10, 10, 90, 90, 90), poses).split("\n", 1)[1]
            text = head + "\n" + body
        return text + "\n" + self.eos

    def decode(self, tokens, strict: bool = False):
        """ParsedPrediction, or the ParseError the text produces."""
        n_blocks = (len(tokens) - LATTICE_SLOTS) // POSE_SLOTS
        text = self.to_text(tokens).rsplit("\n", 1)[0]
        try:
            return parse_response(text, expected_blocks=n_blocks, strict=strict)
        except ParseError as exc:
            return exc


def _log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class ToyPolicy:
    logits: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        self.logits = np.array(self.logits, dtype=float)
        if self.logits.ndim != 2:
            raise ValueError("logits must be [slots, bins]")
        if not np.all(np.isfinite(self.logits)):
            raise ValueError("logits must be finite")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    @classmethod
    def uniform(cls, n_slots: int, n_bins: int = N_BINS, temperature: float = 1.0):
        return cls(np.zeros((n_slots, n_bins)), temperature)

    @property
    def n_slots(self) -> int:
        return self.logits.shape[0]

    def copy(self) -> "ToyPolicy":
        return ToyPolicy(self.logits.copy(), self.temperature)

    def log_probs(self) -> np.ndarray:
        return _log_softmax(self.logits / self.temperature)

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs())

    def token_logprobs(self, tokens) -> np.ndarray:
        tokens = np.asarray(tokens, dtype=int)
        return self.log_probs()[np.arange(self.n_slots), tokens]

    def sample(self, n: int, rng) -> np.ndarray:
        """Inverse-CDF draws, shape ``(n, slots)``."""
        cdf = np.cumsum(self.probs(), axis=1)
        u = rng.random((n, self.n_slots, 1))
        tokens = (cdf[None, :, :] < u).sum(axis=-1)
        return np.minimum(tokens, self.logits.shape[1] - 1)

    def score_gradient(self, tokens) -> np.ndarray:
        """``d log p(tokens) / d logits`` for one sequence, per slot."""
        onehot = np.zeros_like(self.logits)
        onehot[np.arange(self.n_slots), np.asarray(tokens, dtype=int)] = 1.0
        return (onehot - self.probs()) / self.temperature


@dataclass
class Scenario:
    """Blocks, ground truth and the slots supervised during warm start."""

    blocks: list
    gt_lattice: LatticeParams
    gt_poses: list
    vocab: TokenVocab = field(default_factory=TokenVocab)
    sft_slots: np.ndarray | None = None

    def __post_init__(self):
        self.gt_lattice = LatticeParams.coerce(self.gt_lattice)
        self.gt_structure: AtomStructure = assemble(AssemblySpec(self.gt_lattice, self.blocks, self.gt_poses))
        self.gt_tokens = self.vocab.encode(self.gt_lattice, self.gt_poses)
        if self.sft_slots is None:
            self.sft_slots = np.arange(self.n_slots)
        self.sft_slots = np.asarray(self.sft_slots, dtype=int)

    @property
    def n_slots(self) -> int:
        return LATTICE_SLOTS + POSE_SLOTS * len(self.blocks)

    @classmethod
    def synthetic(cls, sft_slots="lattice"):
        """Zn and O single-atom blocks in a 10 A cubic cell.

        Every ground-truth value sits on a grid point, so the exact token
        sequence decodes to the ground truth up to text rounding (far inside
        ``stol = 0.5``). By default warm start only supervises the lattice
        slots, leaving block placement to the reinforcement stage.
        """
        blocks = [
            BuildingBlock.from_local(["Zn"], [[0.0, 0.0, 0.0]], smiles="[Zn]"),
            BuildingBlock.from_local(["O"], [[0.0, 0.0, 0.0]], smiles="[O]"),
        ]
        vocab = TokenVocab()
        poses = [
            BlockPose([0.25, 0.25, 0.25], EulerAngles(0.0, 0.0, 0.0)),
            BlockPose([0.625, 0.5, 0.75], EulerAngles(0.0, 0.0, 0.0)),
        ]
        slots = np.arange(LATTICE_SLOTS) if sft_slots == "lattice" else None
        return cls(blocks, LatticeParams(10, 10, 10, 90, 90, 90), poses, vocab, slots)

    @classmethod
    def from_dict(cls, d):
        blocks = [
            BuildingBlock.from_local(b["species"], b["local_coords"], smiles=b.get("smiles", ""))
            for b in d["blocks"]
        ]
        poses = [BlockPose(p["translation"], EulerAngles(*p["euler"])) for p in d["poses"]]
        slots = d.get("sft_slots", "lattice")
        if slots == "lattice":
            slots = list(range(LATTICE_SLOTS))
        elif slots == "all":
            slots = None
        return cls(blocks, LatticeParams.coerce(d["lattice"]), poses, TokenVocab(), slots)


class RewardCache:
    """Memoized reward per token sequence (the matcher is deterministic)."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self._store = {}

    def __call__(self, tokens):
        key = tuple(int(t) for t in tokens)
        if key not in self._store:
            parsed = self.scenario.vocab.decode(tokens)
            self._store[key] = reward_details(parsed, self.scenario.blocks, self.scenario.gt_structure)
        return self._store[key]


@dataclass
class SampledGroup:
    tokens: np.ndarray
    samples: list
    predictions: list
    details: list


def sample_group(policy: ToyPolicy, scenario: Scenario, G: int, seed, ref_policy=None, rewards=None):
    """Draw ``G`` responses; log-probs are taken under ``policy`` and under
    ``ref_policy`` (``policy`` itself when omitted)."""
    if G < 2:
        raise ValueError("G must be at least 2")
    rng = np.random.default_rng(seed)
    tokens = policy.sample(G, rng)
    ref = policy if ref_policy is None else ref_policy
    lp_pol = policy.token_logprobs(tokens)
    lp_ref = ref.token_logprobs(tokens)
    rewards = rewards or RewardCache(scenario)
    details = [rewards(t) for t in tokens]
    samples = [
        GroupSample(lp_pol[i], lp_ref[i], details[i].value, meta={"tier": details[i].tier})
        for i in range(G)
    ]
    predictions = [scenario.vocab.decode(t) for t in tokens]
    return SampledGroup(tokens, samples, predictions, details)


def sft_loss(policy: ToyPolicy, tokens, slots=None) -> float:
    lp = policy.token_logprobs(tokens)
    if slots is not None:
        lp = lp[np.asarray(slots, dtype=int)]
    return float(-lp.sum())


def sft_gradient(policy: ToyPolicy, tokens, slots=None) -> np.ndarray:
    """``d NLL / d logits``; unsupervised slots get zero gradient."""
    grad = -policy.score_gradient(tokens)
    if slots is not None:
        mask = np.zeros(policy.n_slots, dtype=bool)
        mask[np.asarray(slots, dtype=int)] = True
        grad[~mask] = 0.0
    return grad


def sft_step(policy: ToyPolicy, gt_tokens, learning_rate: float, slots=None):
    """One gradient-descent step on the NLL; returns ``(policy', nll)`` with
    the NLL measured before the step."""
    nll = sft_loss(policy, gt_tokens, slots)
    new = policy.copy()
    new.logits -= learning_rate * sft_gradient(policy, gt_tokens, slots)
    return new, nll


def sapo_logit_gradient(policy: ToyPolicy, ref_policy: ToyPolicy, tokens, rewards, cfg: SapoConfig):
    """``dJ / d logits`` for fixed sampled tokens and rewards."""
    lp_pol = policy.token_logprobs(tokens)
    lp_ref = ref_policy.token_logprobs(tokens)
    group = [GroupSample(lp_pol[i], lp_ref[i], rewards[i]) for i in range(len(tokens))]
    weights = sapo_gradient(group, cfg)
    grad = np.zeros_like(policy.logits)
    for w, tok in zip(weights, tokens):
        onehot = np.zeros_like(policy.logits)
        onehot[np.arange(policy.n_slots), tok] = 1.0
        grad += w[:, None] * (onehot - policy.probs()) / policy.temperature
    return grad


def sapo_value(policy: ToyPolicy, ref_policy: ToyPolicy, tokens, rewards, cfg: SapoConfig) -> float:
    lp_pol = policy.token_logprobs(tokens)
    lp_ref = ref_policy.token_logprobs(tokens)
    group = [GroupSample(lp_pol[i], lp_ref[i], rewards[i]) for i in range(len(tokens))]
    return sapo_objective(group, cfg)[0]


def sapo_step(
    policy: ToyPolicy,
    ref_policy,
    scenario: Scenario,
    cfg: SapoConfig = SapoConfig(),
    seed=None,
    learning_rate: float = 1.0,
    inner_epochs: int = 1,
    rewards=None,
):
    """Sample a group from the reference policy and take ``inner_epochs``
    ascent steps on the objective. The reference defaults to a snapshot of
    ``policy`` taken at the start of the step."""
    ref = policy.copy() if ref_policy is None else ref_policy
    group = sample_group(ref, scenario, cfg.G, seed, rewards=rewards)
    r = [s.reward for s in group.samples]
    new = policy.copy()
    J0 = sapo_value(new, ref, group.tokens, r, cfg)
    for _ in range(inner_epochs):
        new.logits += learning_rate * sapo_logit_gradient(new, ref, group.tokens, r, cfg)
    _, diag = sapo_objective(group.samples, cfg)
    tiers = Counter(str(d.tier) if d.value >= 0 else "parse-failure" for d in group.details)
    stats = {
        "objective": J0,
        "mean_reward": float(np.mean(r)),
        "mean_abs_advantage": float(np.mean([abs(d["advantage"]) for d in diag])),
        "gate_saturation": float(np.mean([d["saturated"] for d in diag])),
        "tiers": dict(sorted(tiers.items())),
    }
    return new, stats


@dataclass
class TrainingResult:
    policy: ToyPolicy
    sft_nll: list
    curve: list

    @property
    def rewards(self) -> np.ndarray:
        return np.array([c["mean_reward"] for c in self.curve])

    def trailing_mean(self, window: int = 100) -> float:
        r = self.rewards
        return float(r[-window:].mean()) if len(r) else float("nan")


def random_baseline(scenario: Scenario, n_groups: int = 100, G: int = 8, seed=0) -> float:
    """Mean reward of the uniform policy."""
    policy = ToyPolicy.uniform(scenario.n_slots)
    cache = RewardCache(scenario)
    seeds = np.random.SeedSequence(seed).spawn(n_groups)
    return float(
        np.mean([[s.reward for s in sample_group(policy, scenario, G, sd, rewards=cache).samples] for sd in seeds])
    )


def run_training(
    scenario: Scenario,
    steps: int = 500,
    cfg: SapoConfig = SapoConfig(),
    seed=0,
    learning_rate: float = 20.0,
    sft_steps: int = 200,
    sft_lr: float = 1.0,
    inner_epochs: int = 1,
    metrics_path=None,
) -> TrainingResult:
    """Warm start with supervised steps on the scenario's supervised slots,
    then run ``steps`` policy-gradient steps. One JSON line per SAPO step is
    written to ``metrics_path`` when given."""
    policy = ToyPolicy.uniform(scenario.n_slots)
    nlls = []
    for _ in range(sft_steps):
        policy, nll = sft_step(policy, scenario.gt_tokens, sft_lr, scenario.sft_slots)
        nlls.append(nll)
    if sft_steps:
        nlls.append(sft_loss(policy, scenario.gt_tokens, scenario.sft_slots))
    cache = RewardCache(scenario)
    seeds = np.random.SeedSequence(seed).spawn(steps)
    curve = []
    out = open(metrics_path, "w", encoding="utf-8") if metrics_path else None
    try:
        for step, sd in enumerate(seeds):
            policy, stats = sapo_step(
                policy, None, scenario, cfg, sd, learning_rate, inner_epochs, rewards=cache
            )
            stats["step"] = step
            curve.append(stats)
            if out:
                out.write(json.dumps(stats, sort_keys=True) + "\n")
    finally:
        if out:
            out.close()
    return TrainingResult(policy, nlls, curve)


class PolicySimulator(BaseEstimator):
    """Estimator wrapper around :func:`run_training`.

    ``fit(scenario)`` trains and stores ``policy_``, ``curve_`` and
    ``sft_nll_``; ``score()`` is the trailing 100-step mean reward.
    """

    def __init__(self, steps=500, G=8, tau_pos=1.0, tau_neg=1.05, learning_rate=20.0,
                 sft_steps=200, sft_lr=1.0, seed=0):
        self.steps = steps
        self.G = G
        self.tau_pos = tau_pos
        self.tau_neg = tau_neg
        self.learning_rate = learning_rate
        self.sft_steps = sft_steps
        self.sft_lr = sft_lr
        self.seed = seed

    def fit(self, scenario=None, y=None):
        scenario = scenario if scenario is not None else Scenario.synthetic()
        cfg = SapoConfig(self.G, self.tau_pos, self.tau_neg)
        result = run_training(
            scenario, self.steps, cfg, self.seed, self.learning_rate, self.sft_steps, self.sft_lr
        )
        self.policy_ = result.policy
        self.curve_ = result.curve
        self.sft_nll_ = result.sft_nll
        self.result_ = result
        return self

    def score(self, X=None, y=None, window: int = 100) -> float:
        return self.result_.trailing_mean(window)
