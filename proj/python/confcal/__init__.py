"""Confidence-calibration pipeline toolkit.

Python face of the C++ core: clustering, confidence labeling, calibration
metrics (per-sample ECE, Mann-Whitney AUROC), the quadratic/naive reward
functions, and the discrete-policy PPO simulator.
"""

from ._core import (
    BaselineKind,
    DomainError,
    Error,
    OutcomeRecord,
    PpoConfig,
    RewardKind,
    StyleViolationError,
    TrainReport,
    VerdictParseError,
    accuracy,
    auroc,
    build_judge_prompt,
    check_correct,
    compute_confidence,
    confidence_gap,
    cosine,
    ece,
    expected_reward,
    greedy_cluster,
    normalize_level,
    optimal_level,
    parse_verdict,
    ppo_surrogate,
    render_confidence,
    reward_naive,
    reward_quadratic,
    train_policy,
    validate_rationale,
)

__version__ = "0.1.0"

__all__ = [
    "BaselineKind",
    "DomainError",
    "Error",
    "OutcomeRecord",
    "PpoConfig",
    "RewardKind",
    "StyleViolationError",
    "TrainReport",
    "VerdictParseError",
    "accuracy",
    "auroc",
    "build_judge_prompt",
    "check_correct",
    "compute_confidence",
    "confidence_gap",
    "cosine",
    "ece",
    "expected_reward",
    "greedy_cluster",
    "normalize_level",
    "optimal_level",
    "parse_verdict",
    "ppo_surrogate",
    "render_confidence",
    "reward_naive",
    "reward_quadratic",
    "train_policy",
    "validate_rationale",
]
