"""Unit tests for trace generation and violation injection."""
import json

import numpy as np
import pytest
from pydantic import ValidationError

from app.config import settings
from app.exceptions import ConfigInfeasible, NoInjectableKey, NothingToDowngrade, NoValidSharedKey
from app.models.gen_config import GenConfig
from app.models.labels import Category
from app.models.trace import Corpus, OpType
from app.services.corpus_store import CORPUS_MANIFEST, read_corpus, write_corpus
from app.services.tracegen_service import TraceGenService, corpus_summary, derive_stream
from tests.conftest import SMALL_COUNTS, TEST_SEED, small_gen_config
from tests.factories import keygen_only_trace, make_trace, simple_trace


class TestGenerateTrace:
    """Test single baseline traces."""

    def test_trace_is_valid(self, generator):
        """Test that a generated trace passes its own consistency check."""
        trace = generator.generate_trace(3, derive_stream(TEST_SEED, 3))

        trace.check()
        assert trace.trace_id == 3
        assert 5 <= len(trace) <= 60
        assert trace.operations[0].op_type is OpType.KEYGEN

    def test_uses_only_strong_algorithms(self, generator, gen_config):
        """Test that baseline traces never use weak algorithms."""
        trace = generator.generate_trace(0, derive_stream(TEST_SEED, 0))

        assert {op.algorithm_id for op in trace.operations} <= set(gen_config.strong_algorithms)

    def test_no_use_after_expiry(self, generator):
        """Test that every operation happens before its key expires."""
        for trace_id in range(20):
            trace = generator.generate_trace(trace_id, derive_stream(TEST_SEED, trace_id))
            for op in trace.operations:
                assert op.timestamp <= trace.keys[op.key_id].expires_at

    def test_same_stream_same_trace(self, generator):
        """Test that a trace depends only on its derived stream."""
        first = generator.generate_trace(5, derive_stream(TEST_SEED, 5))
        second = generator.generate_trace(5, derive_stream(TEST_SEED, 5))

        assert first == second

    def test_key_lifetime_matches_registry(self, generator):
        """Test that every row carries the lifetime of its key."""
        trace = generator.generate_trace(1, derive_stream(TEST_SEED, 1))

        for op in trace.operations:
            assert op.key_lifetime == trace.keys[op.key_id].lifetime


class TestApplyNoise:
    """Test multiplicative timing noise."""

    def test_zero_noise_is_identity(self, generator):
        trace = generator.generate_trace(0, derive_stream(TEST_SEED, 0))

        assert generator.apply_noise(trace, 0.0, np.random.default_rng(0)) is trace

    def test_noise_keeps_order_and_identity(self, generator):
        """Test that noise changes timing only."""
        trace = generator.generate_trace(0, derive_stream(TEST_SEED, 0))
        noisy = generator.apply_noise(trace, 0.3, np.random.default_rng(1))

        noisy.check()
        assert [op.key_id for op in noisy.operations] == [op.key_id for op in trace.operations]
        assert [op.algorithm_id for op in noisy.operations] == [op.algorithm_id for op in trace.operations]
        assert all(op.duration > 0 for op in noisy.operations)
        assert noisy.timestamps != trace.timestamps

    def test_noise_level_out_of_range(self, generator):
        trace = simple_trace()

        with pytest.raises(ValueError):
            generator.apply_noise(trace, 0.6, np.random.default_rng(0))


class TestLifetimeInjection:
    """Test use-after-expiry injection."""

    def test_final_use_moves_past_expiry(self, generator, oracle):
        trace = simple_trace(lifetime=100.0, use_times=(10.0, 20.0))

        injected = generator.inject_lifetime_violation(trace, np.random.default_rng(0))

        injected.check()
        assert injected.operations[-1].timestamp > 100.0
        index = oracle.build_key_index(Corpus(traces=(injected,)))
        assert oracle.annotate_trace(injected, index).lifetime

    def test_keygen_only_trace_rejected(self, generator):
        """Test that a trace without a non-KeyGen operation cannot be injected."""
        with pytest.raises(NoInjectableKey) as exc_info:
            generator.inject_lifetime_violation(keygen_only_trace(4), np.random.default_rng(0))

        assert exc_info.value.details["trace_id"] == 4


class TestDowngradeInjection:
    """Test strong-to-weak algorithm replacement."""

    def test_all_strong_ids_replaced(self, generator, gen_config):
        trace = generator.generate_trace(0, derive_stream(TEST_SEED, 0))

        injected = generator.inject_downgrade_violation(trace)

        assert {op.algorithm_id for op in injected.operations} <= set(gen_config.weak_algorithms)
        assert [op.timestamp for op in injected.operations] == trace.timestamps

    def test_uses_configured_bijection(self, generator):
        injected = generator.inject_downgrade_violation(simple_trace(algorithm_id=3))

        assert {op.algorithm_id for op in injected.operations} == {103}

    def test_already_weak_trace_rejected(self, generator):
        with pytest.raises(NothingToDowngrade):
            generator.inject_downgrade_violation(simple_trace(algorithm_id=101))


class TestReuseInjection:
    """Test cross-trace key sharing."""

    def test_recipient_uses_donor_key(self, generator):
        trace_a = simple_trace(0, key_id=7, lifetime=100.0, use_times=(10.0,))
        trace_b = simple_trace(1, key_id=9, lifetime=50.0, use_times=(5.0, 30.0))

        donor, recipient = generator.inject_reuse_violation(trace_a, trace_b, np.random.default_rng(0))

        assert donor == trace_a
        assert {op.key_id for op in recipient.operations} == {7}
        assert recipient.keys[7] == trace_a.keys[7]
        assert all(op.key_lifetime == 100.0 for op in recipient.operations)

    def test_no_valid_shared_key(self, generator):
        """Test that a donor key expiring before the recipient's usage is rejected."""
        trace_a = simple_trace(0, key_id=7, lifetime=1.0, use_times=(0.5,))
        trace_b = simple_trace(1, key_id=9, lifetime=50.0, use_times=(5.0,))

        with pytest.raises(NoValidSharedKey):
            generator.inject_reuse_violation(trace_a, trace_b, np.random.default_rng(0))

    def test_empty_trace_rejected(self, generator):
        empty = make_trace(1, [], {})

        with pytest.raises(ValueError):
            generator.inject_reuse_violation(simple_trace(0), empty, np.random.default_rng(0))


class TestGenerateCorpus:
    """Test corpus assembly."""

    def test_category_counts_exact(self, small_corpus):
        _, corpus, _ = small_corpus

        assert corpus.category_counts() == SMALL_COUNTS

    def test_trace_ids_consecutive(self, small_corpus):
        _, corpus, _ = small_corpus

        assert [trace.trace_id for trace in corpus] == list(range(len(corpus)))
        for trace in corpus:
            trace.check()

    def test_deterministic(self, small_corpus):
        config, corpus, _ = small_corpus

        assert TraceGenService(config).generate_corpus() == corpus

    def test_seed_changes_corpus(self, small_corpus):
        _, corpus, _ = small_corpus

        other = TraceGenService(small_gen_config(seed=TEST_SEED + 1)).generate_corpus()

        assert other != corpus

    def test_empty_config_gives_empty_corpus(self):
        corpus = TraceGenService(GenConfig(seed=1)).generate_corpus()

        assert len(corpus) == 0

    def test_infeasible_category(self):
        """Test that an impossible injection fails after the retry budget."""
        config = GenConfig(
            category_counts={Category.LIFETIME_ONLY: 1},
            length_bounds=(5, 5),
            keygen_probability=0.999999,
            seed=TEST_SEED,
        )

        with pytest.raises(ConfigInfeasible) as exc_info:
            TraceGenService(config).generate_corpus()

        assert exc_info.value.details["attempts"] == 16
        assert exc_info.value.details["reason"] == "NO_INJECTABLE_KEY"

    def test_corpus_summary(self, small_corpus):
        _, corpus, _ = small_corpus

        summary = corpus_summary(corpus)

        assert summary["n_traces"] == 67
        assert summary["n_operations"] == corpus.n_operations
        assert summary["category_counts"]["Reuse+Lifetime"] == 3


class TestCorpusStore:
    """Test corpus files on disk."""

    @pytest.mark.parametrize("fmt", ["jsonl", "csv"])
    def test_read_restores_corpus(self, tmp_path, small_corpus, fmt):
        config, corpus, _ = small_corpus

        write_corpus(corpus, tmp_path, fmt, config)

        assert read_corpus(tmp_path) == corpus

    def test_manifest_records_summary(self, tmp_path, small_corpus):
        config, corpus, _ = small_corpus

        write_corpus(corpus, tmp_path, "jsonl", config)
        manifest = json.loads((tmp_path / CORPUS_MANIFEST).read_text(encoding="utf-8"))

        assert manifest["summary"]["n_traces"] == 67
        assert manifest["seed"] == TEST_SEED

    def test_missing_operations_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_corpus(tmp_path)


class TestShiftCorpus:
    """Test temporally scaled all-normal corpora."""

    def test_all_normal(self, generator):
        corpus = generator.generate_shift_corpus(2.0, 15)

        assert len(corpus) == 15
        assert all(trace.category is Category.NORMAL for trace in corpus)

    def test_gaps_grow_with_factor(self, generator):
        def mean_gap(corpus):
            return np.mean([np.mean(np.diff(trace.timestamps)) for trace in corpus if len(trace) > 1])

        assert mean_gap(generator.generate_shift_corpus(3.0, 200)) > 2.0 * mean_gap(
            generator.generate_shift_corpus(1.0, 200)
        )

    def test_non_positive_factor_rejected(self, generator):
        with pytest.raises(ValueError):
            generator.generate_shift_corpus(0.0, 5)


class TestGenConfigValidation:
    """Test generator configuration invariants."""

    def test_single_reuse_trace_rejected(self):
        with pytest.raises(ValidationError):
            GenConfig(category_counts={Category.REUSE_ONLY: 1})

    def test_overlapping_algorithm_sets_rejected(self):
        with pytest.raises(ValidationError):
            GenConfig(strong_algorithms=[1, 2], weak_algorithms=[2, 101])

    def test_weak_algorithm_strength_checked(self):
        with pytest.raises(ValidationError):
            GenConfig(algorithm_strengths={1: 256, 2: 256, 3: 384, 4: 512,
                                           101: 256, 102: 112, 103: 80, 104: 64})

    def test_desk_scale_composition(self):
        config = GenConfig.desk_scale()

        assert config.total_traces == 21_000
        assert config.category_counts[Category.NORMAL] == 12_000
        assert config.category_counts[Category.REUSE_DOWNGRADE_LIFETIME] == 500

    def test_full_scale_composition(self):
        assert GenConfig.full_scale().total_traces == 210_000

    def test_scaled_multiplies_temporal_scale(self):
        config = GenConfig(temporal_scale=2.0).scaled(1.5)

        assert config.temporal_scale == 3.0
        assert config.mean_gap == 3.0
        assert config.scaled_lifetime_range == (30.0, 180.0)

    def test_recorded_settings_survive_revalidation(self, monkeypatch):
        """Test that a dumped config keeps its threshold and retry budget after the settings change."""
        payload = GenConfig(seed=TEST_SEED).model_dump_json()

        monkeypatch.setattr(settings, "strength_threshold_bits", 100)
        monkeypatch.setattr(settings, "max_injection_retries", 1)
        restored = GenConfig.model_validate_json(payload)

        assert restored.strength_threshold_bits == 256
        assert restored.max_injection_retries == 16
        with pytest.raises(ValidationError):
            GenConfig(seed=TEST_SEED)

    def test_retry_budget_from_config(self):
        config = GenConfig(
            category_counts={Category.LIFETIME_ONLY: 1},
            length_bounds=(5, 5),
            keygen_probability=0.999999,
            max_injection_retries=3,
            seed=TEST_SEED,
        )

        with pytest.raises(ConfigInfeasible) as exc_info:
            TraceGenService(config).generate_corpus()

        assert exc_info.value.details["attempts"] == 3
