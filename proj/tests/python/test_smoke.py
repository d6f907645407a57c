"""Smoke tests for the confcal extension module."""

import math

import pytest

import confcal


def test_metrics_roundtrip():
    records = [
        confcal.OutcomeRecord(correct=True, confidence=0.9),
        confcal.OutcomeRecord(correct=False, confidence=0.2),
        confcal.OutcomeRecord(correct=True, confidence=0.6),
    ]
    assert confcal.ece(records) == pytest.approx((0.1 + 0.2 + 0.4) / 3)
    assert confcal.auroc(records) == pytest.approx(1.0)
    assert confcal.accuracy(records) == pytest.approx(2 / 3)


def test_auroc_single_class_is_none():
    records = [confcal.OutcomeRecord(correct=True, confidence=0.5)]
    assert confcal.auroc(records) is None


def test_confidence_gap_matches_subtraction():
    answerable = [confcal.OutcomeRecord(True, 0.7406)]
    unanswerable = [confcal.OutcomeRecord(False, 0.4962)]
    avg_a, avg_u, delta = confcal.confidence_gap(answerable, unanswerable)
    assert avg_a == pytest.approx(0.7406)
    assert avg_u == pytest.approx(0.4962)
    assert delta == pytest.approx(0.2444)


def test_confidence_label():
    assert confcal.compute_confidence(33, 100) == 3
    assert confcal.compute_confidence(2, 100) == 1  # clamped
    assert confcal.render_confidence(5) == "My confidence is 5."
    with pytest.raises(confcal.DomainError):
        confcal.compute_confidence(0, 100)


def test_check_correct():
    assert confcal.check_correct("The capital is Paris.", ["Paris"])
    assert not confcal.check_correct("New York", ["New York City"])


def test_clustering():
    groups = confcal.greedy_cluster([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]], threshold=0.9)
    assert groups == [[0, 1], [2]]
    assert confcal.cosine([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)


def test_rewards_and_optimum():
    assert confcal.reward_quadratic(True, 1.0) == pytest.approx(1.0)
    assert confcal.reward_naive(False, 0.7) == pytest.approx(-0.7)
    assert confcal.optimal_level(0.73, confcal.RewardKind.quadratic) == 7
    assert confcal.optimal_level(0.9, confcal.RewardKind.naive) == 10
    assert confcal.ppo_surrogate(1.5, 1.0, 0.2) == pytest.approx(1.2)
    assert confcal.expected_reward(0.7, 7, confcal.RewardKind.quadratic) == pytest.approx(0.58)


def test_train_policy_small():
    cfg = confcal.PpoConfig()
    cfg.n_updates = 1500
    cfg.batch_size = 32
    report = confcal.train_policy([1.0], cfg, confcal.RewardKind.quadratic, seed=7)
    assert report.per_state_modal_level == [10]
    assert len(report.expected_reward_trace) == 1500


def test_validate_rationale():
    assert confcal.validate_rationale("N/A") is None
    assert confcal.validate_rationale(" fine text ") == "fine text"
    with pytest.raises(confcal.StyleViolationError):
        confcal.validate_rationale("my responses differ")


def test_parse_verdict():
    reason, score = confcal.parse_verdict("reason: solid score: 9")
    assert score == 9
    assert reason == "solid"
    with pytest.raises(confcal.VerdictParseError):
        confcal.parse_verdict("score: 11 reason: x")


def test_judge_prompt_contains_proportions():
    prompt = confcal.build_judge_prompt(
        "Which river?", [("The Nile.", 0.06), ("The Amazon.", 0.33)], "I am unsure."
    )
    assert "1. (6%) The Nile." in prompt
    assert "2. (33%) The Amazon." in prompt
    assert prompt.rstrip().endswith("Reason: I am unsure.")


def test_calibration_shape_sanity():
    # The quadratic optimum tracks p; the naive optimum saturates.
    for k in range(0, 101):
        p = k / 100.0
        quad = confcal.optimal_level(p, confcal.RewardKind.quadratic)
        naive = confcal.optimal_level(p, confcal.RewardKind.naive)
        assert abs(quad - 10 * p) <= 0.5 + 1e-9
        assert naive in (0, 10)
    assert math.isclose(confcal.normalize_level(7), 0.7)
