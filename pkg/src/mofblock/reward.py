"""Matching-driven rewards, group-relative advantages and the soft-gated
policy objective used for reinforcement fine-tuning, plus the plain
generation loss used for supervised fine-tuning.

The objective for a group of ``G`` sampled responses is

    J = (1/G) sum_i (1/|R_i|) sum_t f_tau_i(r_it) * A_i

with ``r_it = exp(logp_policy - logp_ref)`` per token, the gate
``f_tau(x) = sigmoid(tau * (x - 1)) * 4 / tau`` and ``tau_i`` equal to
``tau_pos`` for positive advantages and ``tau_neg`` otherwise. There is no
KL term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import AssemblySpec, assemble
from .codec import ParsedPrediction, parse_response
from .errors import AssemblyError, EmptySequenceError, LatticeError, LengthMismatchError, ParseError
from .matcher import tier_and_rmse

PARSE_FAILURE_REWARD = -1.0
TIER_REWARDS = {0.75: 0.6, 1.0: 0.3}
RATIO_LOG_CLAMP = 50.0
# sigmoid outside [SAT, 1 - SAT] counts as a saturated gate
GATE_SATURATION = 0.01


@dataclass
class RewardBreakdown:
    value: float
    branch: str
    tier: float | None = None
    rmse: float | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "reward": self.value,
            "branch": self.branch,
            "tier": self.tier,
            "rmse": self.rmse,
            "error": self.error,
        }


def tier_reward(tier, rmse=None) -> float:
    """Reward for a minimal match tier (``None`` = no match)."""
    if tier is None:
        return 0.0
    if tier == 0.5:
        return 1.0 + 0.5 * math.exp(-4.0 * float(rmse))
    return TIER_REWARDS[tier]


def reward_details(parse_result, blocks, gt) -> RewardBreakdown:
    """Reward with the branch that produced it.

    ``parse_result`` is a :class:`ParsedPrediction` or the
    :class:`ParseError` raised while parsing. A pose count that differs from
    the block count is treated as a parse failure. Predictions whose
    composition differs from ``gt`` simply do not match.
    """
    if isinstance(parse_result, ParseError):
        return RewardBreakdown(PARSE_FAILURE_REWARD, "parse-failure", error=parse_result.kind)
    if len(parse_result.poses) != len(blocks):
        return RewardBreakdown(PARSE_FAILURE_REWARD, "parse-failure", error="count-mismatch")
    try:
        structure = assemble(AssemblySpec(parse_result.lattice, list(blocks), parse_result.poses))
    except (AssemblyError, LatticeError) as exc:
        return RewardBreakdown(PARSE_FAILURE_REWARD, "parse-failure", error=str(exc))
    tier, rmse = tier_and_rmse(structure, gt)
    if tier is None:
        return RewardBreakdown(0.0, "no-match")
    value = tier_reward(tier, rmse)
    return RewardBreakdown(value, f"tier-{tier}", tier=tier, rmse=rmse)


def compute_reward(parse_result, blocks, gt) -> float:
    """-1 on parse failure, ``1 + 0.5 exp(-4 RMSE)`` at tier 0.5, 0.6 at
    tier 0.75, 0.3 at tier 1.0 and 0 without a match."""
    return reward_details(parse_result, blocks, gt).value


def reward_from_text(text: str, blocks, gt, strict: bool = False) -> RewardBreakdown:
    try:
        parsed = parse_response(text, expected_blocks=len(blocks), strict=strict)
    except ParseError as exc:
        parsed = exc
    return reward_details(parsed, blocks, gt)


def group_advantages(rewards, eps: float = 1e-6) -> np.ndarray:
    """``(r - mean) / (std + eps)`` with the population standard deviation."""
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 1 or len(r) < 2:
        raise ValueError("a group needs at least two rewards")
    return (r - r.mean()) / (r.std() + eps)


def _sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def gate(x, tau: float):
    """Soft replacement for ratio clipping: ``sigmoid(tau (x - 1)) * 4 / tau``.

    Equals ``2 / tau`` at ``x = 1`` with unit slope there, and saturates at
    ``4 / tau``.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    s = _sigmoid(tau * (np.asarray(x, dtype=float) - 1.0))
    out = s * 4.0 / tau
    return float(out) if out.ndim == 0 else out


def gate_derivative(x, tau: float):
    s = _sigmoid(tau * (np.asarray(x, dtype=float) - 1.0))
    out = 4.0 * s * (1.0 - s)
    return float(out) if out.ndim == 0 else out


@dataclass
class GroupSample:
    token_logprobs_policy: np.ndarray
    token_logprobs_ref: np.ndarray
    reward: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.token_logprobs_policy = np.asarray(self.token_logprobs_policy, dtype=float).ravel()
        self.token_logprobs_ref = np.asarray(self.token_logprobs_ref, dtype=float).ravel()
        if len(self.token_logprobs_policy) != len(self.token_logprobs_ref):
            raise LengthMismatchError(
                f"{len(self.token_logprobs_policy)} policy vs "
                f"{len(self.token_logprobs_ref)} reference log-probs"
            )
        for name in ("token_logprobs_policy", "token_logprobs_ref"):
            if np.any(getattr(self, name) > 1e-12):
                raise ValueError(f"{name} must be log-probabilities (<= 0)")
        self.reward = float(self.reward)

    def __len__(self):
        return len(self.token_logprobs_policy)


@dataclass(frozen=True)
class SapoConfig:
    G: int = 8
    tau_pos: float = 1.0
    tau_neg: float = 1.05
    advantage_epsilon: float = 1e-6

    def __post_init__(self):
        if self.G < 2:
            raise ValueError("group size must be at least 2")
        if self.tau_pos <= 0 or self.tau_neg <= 0:
            raise ValueError("gate temperatures must be positive")
        if self.advantage_epsilon <= 0:
            raise ValueError("advantage epsilon must be positive")


def importance_ratios(sample: GroupSample) -> np.ndarray:
    """Per-token ``exp(logp_policy - logp_ref)``, clamped to ``exp(+-50)``."""
    lp = np.asarray(sample.token_logprobs_policy, dtype=float)
    lr = np.asarray(sample.token_logprobs_ref, dtype=float)
    if lp.shape != lr.shape:
        raise LengthMismatchError("policy and reference log-probs differ in length")
    return np.exp(np.clip(lp - lr, -RATIO_LOG_CLAMP, RATIO_LOG_CLAMP))


def _check_group(group, cfg: SapoConfig):
    if len(group) != cfg.G:
        raise LengthMismatchError(f"group has {len(group)} samples, config expects {cfg.G}")
    for i, sample in enumerate(group):
        if len(sample) == 0:
            raise EmptySequenceError(f"sample {i} has no tokens")


def sapo_objective(group, cfg: SapoConfig = SapoConfig()):
    """Return ``(J, diagnostics)``; diagnostics has one dict per sample with
    its advantage, temperature, mean ratio, mean gate value and the fraction
    of saturated gates."""
    _check_group(group, cfg)
    adv = group_advantages([s.reward for s in group], cfg.advantage_epsilon)
    total = 0.0
    diagnostics = []
    for sample, a in zip(group, adv):
        tau = cfg.tau_pos if a > 0 else cfg.tau_neg
        ratios = importance_ratios(sample)
        gates = np.atleast_1d(gate(ratios, tau))
        sig = gates * tau / 4.0
        total += float(gates.mean()) * a
        diagnostics.append(
            {
                "advantage": float(a),
                "tau": tau,
                "mean_ratio": float(ratios.mean()),
                "mean_gate": float(gates.mean()),
                "saturated": float(np.mean((sig < GATE_SATURATION) | (sig > 1 - GATE_SATURATION))),
            }
        )
    return total / cfg.G, diagnostics


def sapo_gradient(group, cfg: SapoConfig = SapoConfig()):
    """Analytic ``dJ / d logp_policy`` per token, one array per sample.

    With ``r = exp(logp - logp_ref)`` the chain rule gives
    ``A / (G |R|) * f'(r) * r``; clamped ratios have zero gradient.
    """
    _check_group(group, cfg)
    adv = group_advantages([s.reward for s in group], cfg.advantage_epsilon)
    grads = []
    for sample, a in zip(group, adv):
        tau = cfg.tau_pos if a > 0 else cfg.tau_neg
        diff = sample.token_logprobs_policy - sample.token_logprobs_ref
        ratios = importance_ratios(sample)
        inside = np.abs(diff) < RATIO_LOG_CLAMP
        g = a / (cfg.G * len(sample)) * np.atleast_1d(gate_derivative(ratios, tau)) * ratios
        grads.append(np.where(inside, g, 0.0))
    return grads


def sft_nll(token_logprobs) -> float:
    """Generation loss: the negative sum of target-token log-probabilities."""
    lp = np.asarray(token_logprobs, dtype=float).ravel()
    if len(lp) == 0:
        raise EmptySequenceError("no tokens to score")
    return float(-lp.sum())


__all__ = [
    "GroupSample",
    "ParsedPrediction",
    "RewardBreakdown",
    "SapoConfig",
    "compute_reward",
    "gate",
    "gate_derivative",
    "group_advantages",
    "importance_ratios",
    "reward_details",
    "reward_from_text",
    "sapo_gradient",
    "sapo_objective",
    "sft_nll",
    "tier_reward",
]
