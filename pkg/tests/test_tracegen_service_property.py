"""
Property-based tests for trace generation and injection.

Every generated or injected trace must remain well-formed, and every
injection must be visible to the oracle.
"""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.exceptions import NoValidSharedKey
from app.models.gen_config import GenConfig
from app.models.trace import Corpus, OpType
from app.services.oracle_service import OracleService
from app.services.tracegen_service import TraceGenService, derive_stream


seeds = st.integers(min_value=0, max_value=2**32 - 1)
trace_ids = st.integers(min_value=0, max_value=10_000)


@st.composite
def gen_config_strategy(draw):
    """Generate a valid generator configuration with varied timing."""
    low = draw(st.integers(min_value=2, max_value=20))
    high = draw(st.integers(min_value=low, max_value=40))
    lo_life = draw(st.floats(min_value=1.0, max_value=30.0))
    return GenConfig(
        mean_length=draw(st.floats(min_value=2.0, max_value=30.0)),
        length_bounds=(low, high),
        inter_arrival_rate=draw(st.floats(min_value=0.2, max_value=5.0)),
        lifetime_range=(lo_life, lo_life + draw(st.floats(min_value=1.0, max_value=60.0))),
        noise_level=draw(st.floats(min_value=0.0, max_value=0.5)),
        seed=draw(seeds),
    )


def _labels(trace):
    oracle = OracleService()
    return oracle.annotate_trace(trace, oracle.build_key_index(Corpus(traces=(trace,))))


class TestGenerationProperties:
    """Property tests for baseline generation."""

    @pytest.mark.property
    @settings(max_examples=60, deadline=None)
    @given(config=gen_config_strategy(), trace_id=trace_ids)
    def test_baseline_trace_is_clean(self, config, trace_id):
        """
        Property: a baseline trace is well-formed, respects its length bounds
        and carries no violation flag.
        """
        trace = TraceGenService(config).generate_trace(trace_id, derive_stream(config.seed, trace_id))

        trace.check()
        low, high = config.length_bounds
        assert low <= len(trace) <= high
        assert not _labels(trace).any()

    @pytest.mark.property
    @settings(max_examples=60, deadline=None)
    @given(config=gen_config_strategy(), trace_id=trace_ids, level=st.floats(min_value=0.0, max_value=0.5))
    def test_noise_preserves_order(self, config, trace_id, level):
        """
        Property: noisy traces keep nondecreasing timestamps, positive
        durations and the original key and algorithm sequence.
        """
        service = TraceGenService(config)
        rng = derive_stream(config.seed, trace_id)
        trace = service.generate_trace(trace_id, rng)
        noisy = service.apply_noise(trace, level, rng)

        noisy.check()
        assert np.all(np.diff(noisy.timestamps) >= 0)
        assert all(op.duration > 0 for op in noisy.operations)
        assert [op.key_id for op in noisy.operations] == [op.key_id for op in trace.operations]


class TestInjectionProperties:
    """Property tests for the three violation mechanisms."""

    @pytest.mark.property
    @settings(max_examples=60, deadline=None)
    @given(config=gen_config_strategy(), trace_id=trace_ids, seed=seeds)
    def test_lifetime_injection_is_flagged(self, config, trace_id, seed):
        """
        Property: after lifetime injection the trace stays ordered and the
        oracle flags lifetime.
        """
        service = TraceGenService(config)
        trace = service.generate_trace(trace_id, derive_stream(config.seed, trace_id))
        if all(op.op_type is OpType.KEYGEN for op in trace.operations):
            return

        injected = service.inject_lifetime_violation(trace, np.random.default_rng(seed))

        injected.check()
        assert _labels(injected).lifetime
        assert len(injected) == len(trace)

    @pytest.mark.property
    @settings(max_examples=60, deadline=None)
    @given(config=gen_config_strategy(), trace_id=trace_ids)
    def test_downgrade_injection_is_flagged(self, config, trace_id):
        """
        Property: downgrade leaves no strong algorithm and is flagged, while
        timing is untouched.
        """
        service = TraceGenService(config)
        trace = service.generate_trace(trace_id, derive_stream(config.seed, trace_id))

        injected = service.inject_downgrade_violation(trace)

        assert not {op.algorithm_id for op in injected.operations} & set(config.strong_algorithms)
        assert injected.timestamps == trace.timestamps
        assert _labels(injected).downgrade

    @pytest.mark.property
    @settings(max_examples=40, deadline=None)
    @given(config=gen_config_strategy(), first_id=st.integers(min_value=0, max_value=5_000), seed=seeds)
    def test_reuse_injection_is_flagged(self, config, first_id, seed):
        """
        Property: when reuse injection succeeds, both traces are flagged for
        reuse and neither uses a key after its expiry.
        """
        service = TraceGenService(config)
        trace_a = service.generate_trace(first_id, derive_stream(config.seed, first_id))
        trace_b = service.generate_trace(first_id + 1, derive_stream(config.seed, first_id + 1))
        try:
            trace_a, trace_b = service.inject_reuse_violation(trace_a, trace_b, np.random.default_rng(seed))
        except NoValidSharedKey:
            return

        oracle = OracleService()
        corpus = Corpus(traces=(trace_a, trace_b))
        index = oracle.build_key_index(corpus)
        for trace in corpus:
            labels = oracle.annotate_trace(trace, index)
            assert labels.reuse
            assert not labels.lifetime
