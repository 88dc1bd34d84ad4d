"""
Property-based tests for evaluation metrics.

AUROC is checked against the exhaustive pairwise statistic, the F1 threshold
against a scan over every candidate and AUPRC against a direct step sum.
"""
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from app.metrics import auprc, auroc, evaluate, pr_curve, select_threshold_max_f1


@st.composite
def scored_labels(draw, max_size=200):
    """Generate scores (tie-heavy or continuous) with both classes present."""
    n = draw(st.integers(min_value=2, max_value=max_size))
    if draw(st.booleans()):
        scores = draw(st.lists(st.integers(min_value=0, max_value=5), min_size=n, max_size=n))
        scores = [value / 5.0 for value in scores]
    else:
        scores = draw(st.lists(
            st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False),
            min_size=n, max_size=n,
        ))
    labels = draw(st.lists(st.integers(min_value=0, max_value=1), min_size=n, max_size=n))
    assume(0 < sum(labels) < n)
    return np.array(scores), np.array(labels)


def pairwise_auroc(scores, labels):
    positives = scores[labels == 1]
    negatives = scores[labels == 0]
    wins = 0.0
    for p in positives:
        wins += np.sum(p > negatives) + 0.5 * np.sum(p == negatives)
    return wins / (positives.size * negatives.size)


def scan_best_threshold(scores, labels):
    """Highest threshold among those with the exactly largest F1."""
    n_pos = int(labels.sum())
    best, best_f1 = None, Fraction(-1)
    for threshold in sorted(set(scores.tolist()), reverse=True):
        predicted = scores >= threshold
        tp = int(np.sum(predicted & (labels == 1)))
        fp = int(np.sum(predicted & (labels == 0)))
        f1 = Fraction(2 * tp, tp + fp + n_pos)
        if f1 > best_f1:
            best, best_f1 = threshold, f1
    return best


def step_average_precision(scores, labels):
    n_pos = int(labels.sum())
    total, previous_recall = 0.0, 0.0
    for threshold in sorted(set(scores.tolist()), reverse=True):
        predicted = scores >= threshold
        tp = int(np.sum(predicted & (labels == 1)))
        recall = tp / n_pos
        total += (recall - previous_recall) * tp / int(predicted.sum())
        previous_recall = recall
    return total


class TestAurocProperties:
    """Property tests for AUROC."""

    @pytest.mark.property
    @settings(max_examples=150, deadline=None)
    @given(data=scored_labels())
    def test_matches_pairwise_statistic(self, data):
        """
        Property: AUROC equals P(s+ > s-) + P(tie) / 2 over all pairs.
        """
        scores, labels = data

        assert abs(auroc(scores, labels) - pairwise_auroc(scores, labels)) <= 1e-9

    @pytest.mark.property
    @settings(max_examples=50, deadline=None)
    @given(data=scored_labels())
    def test_negating_scores_reflects(self, data):
        """
        Property: reversing the ranking maps AUROC a to 1 - a.
        """
        scores, labels = data

        assert auroc(-scores, labels) == pytest.approx(1.0 - auroc(scores, labels), abs=1e-9)


class TestThresholdProperties:
    """Property tests for maximum-F1 threshold selection."""

    @pytest.mark.property
    @settings(max_examples=150, deadline=None)
    @given(data=scored_labels())
    def test_matches_exhaustive_scan(self, data):
        """
        Property: the selected threshold equals the exhaustive scan's choice.
        """
        scores, labels = data

        assert select_threshold_max_f1(scores, labels) == scan_best_threshold(scores, labels)

    @pytest.mark.property
    @settings(max_examples=50, deadline=None)
    @given(data=scored_labels())
    def test_selected_threshold_reaches_best_f1(self, data):
        """
        Property: evaluating at the selected threshold reproduces the best F1.
        """
        scores, labels = data
        threshold = select_threshold_max_f1(scores, labels)

        report = evaluate(scores, labels, threshold)
        others = [evaluate(scores, labels, t).f1 for t in set(scores.tolist())]

        assert report.f1 == pytest.approx(max(others), abs=1e-12)


class TestAuprcProperties:
    """Property tests for the step-wise PR area."""

    @pytest.mark.property
    @settings(max_examples=100, deadline=None)
    @given(data=scored_labels())
    def test_matches_step_sum(self, data):
        """
        Property: AUPRC equals the sum of recall increments times precision.
        """
        scores, labels = data

        value = auprc(pr_curve(scores, labels))

        assert 0.0 <= value <= 1.0
        assert abs(value - step_average_precision(scores, labels)) <= 1e-9
