"""Synthetic cryptographic trace generation and violation injection."""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.exceptions import (
    ConfigInfeasible,
    InjectionError,
    NoInjectableKey,
    NothingToDowngrade,
    NoValidSharedKey,
)
from app.models.gen_config import GenConfig
from app.models.labels import Category
from app.models.trace import OP_TYPES, Corpus, CryptoOperation, KeyRecord, OpType, Trace


# Configure logging
logger = logging.getLogger(__name__)

# Multiplicative noise factors are floored here so gaps and durations stay positive.
NOISE_FLOOR = 1e-3
# Key ids are drawn below 2**63 so they fit signed 64-bit columns.
KEY_ID_UPPER = 2**63
SHIFT_SALT_BASE = 0x5348


def derive_stream(master_seed: int, trace_id: int, attempt: int = 0, salt: int = 0) -> np.random.Generator:
    """
    Build the random stream of one trace.

    Args:
        master_seed: Corpus master seed
        trace_id: Trace identifier
        attempt: Retry counter (fresh sub-stream per attempt)
        salt: Corpus salt (0 for the baseline corpus)

    Returns:
        Independent generator determined only by the arguments
    """
    sequence = np.random.SeedSequence([int(master_seed), int(salt), int(trace_id), int(attempt)])
    return np.random.default_rng(sequence)


def _owned_key_origins(trace: Trace) -> Dict[int, int]:
    """Step index of the KeyGen that created each key generated inside ``trace``."""
    origins: Dict[int, int] = {}
    for index, op in enumerate(trace.operations):
        if op.op_type is OpType.KEYGEN and op.key_id not in origins:
            record = trace.keys.get(op.key_id)
            if record is not None and abs(record.created_at - op.timestamp) <= 1e-9 * max(1.0, op.timestamp):
                origins[op.key_id] = index
    return origins


def _retime(trace: Trace, timestamps: np.ndarray, durations: Optional[np.ndarray] = None) -> Trace:
    """Copy of ``trace`` with new timestamps (and durations), keeping creation times in sync."""
    origins = _owned_key_origins(trace)
    operations = []
    for index, op in enumerate(trace.operations):
        update = {"timestamp": float(timestamps[index])}
        if durations is not None:
            update["duration"] = float(durations[index])
        operations.append(op.model_copy(update=update))
    keys = dict(trace.keys)
    for key_id, index in origins.items():
        keys[key_id] = keys[key_id].model_copy(update={"created_at": float(timestamps[index])})
    return trace.model_copy(update={"operations": tuple(operations), "keys": keys})


class TraceGenService:
    """Service generating traces, corpora and shifted corpora from a GenConfig."""

    def __init__(self, config: GenConfig):
        """
        Initialize trace generation service.

        Args:
            config: Validated generator configuration
        """
        self.config = config
        self.max_retries = config.max_injection_retries
        self.downgrade_map = config.resolved_downgrade_map

    # ------------------------------------------------------------------
    # Single traces
    # ------------------------------------------------------------------

    def _trace_length(self, rng: np.random.Generator) -> int:
        low, high = self.config.length_bounds
        for _ in range(10_000):
            n = int(rng.poisson(self.config.mean_length))
            if low <= n <= high:
                return n
        # Only reachable when the bounds sit far in a Poisson tail.
        return int(np.clip(round(self.config.mean_length), low, high))

    def generate_trace(self, trace_id: int, rng: np.random.Generator,
                       category: Category = Category.NORMAL) -> Trace:
        """
        Generate one valid baseline trace.

        Keys are retired once an operation would fall inside the final
        ``expiry_margin`` fraction of their lifetime, so baseline traces never
        reference an expired key.

        Args:
            trace_id: Trace identifier
            rng: Stream derived from the master seed and trace id
            category: Category tag stored on the trace

        Returns:
            The generated trace
        """
        config = self.config
        n_ops = self._trace_length(rng)
        lifetime_lo, lifetime_hi = config.scaled_lifetime_range
        strong = sorted(config.strong_algorithms)
        margin = config.expiry_margin

        keys: Dict[int, KeyRecord] = {}
        key_algorithm: Dict[int, int] = {}
        active: List[int] = []
        operations: List[CryptoOperation] = []
        timestamp = 0.0

        for step in range(n_ops):
            timestamp += float(rng.exponential(config.mean_gap))
            duration = float(rng.lognormal(config.duration_log_mu, config.duration_log_sigma)) * config.temporal_scale
            active = [
                key_id for key_id in active
                if timestamp <= keys[key_id].created_at + keys[key_id].lifetime * (1.0 - margin)
            ]
            if not active or rng.random() < config.keygen_probability:
                key_id = int(rng.integers(1, KEY_ID_UPPER, dtype=np.int64))
                while key_id in keys:
                    key_id = int(rng.integers(1, KEY_ID_UPPER, dtype=np.int64))
                algorithm_id = strong[int(rng.integers(len(strong)))]
                keys[key_id] = KeyRecord(
                    key_id=key_id,
                    created_at=timestamp,
                    lifetime=float(rng.uniform(lifetime_lo, lifetime_hi)),
                    strength_bits=config.algorithm_strengths[algorithm_id],
                )
                key_algorithm[key_id] = algorithm_id
                active.append(key_id)
                op_type = OpType.KEYGEN
            else:
                key_id = active[int(rng.integers(len(active)))]
                op_type = OP_TYPES[1 + int(rng.integers(len(OP_TYPES) - 1))]

            operations.append(CryptoOperation(
                trace_id=trace_id,
                step_index=step,
                timestamp=timestamp,
                op_type=op_type,
                key_id=key_id,
                algorithm_id=key_algorithm[key_id],
                key_lifetime=keys[key_id].lifetime,
                duration=duration,
            ))

        return Trace(trace_id=trace_id, operations=tuple(operations), keys=keys, category=category)

    def apply_noise(self, trace: Trace, noise_level: float, rng: np.random.Generator) -> Trace:
        """
        Perturb inter-arrival gaps and durations with multiplicative Gaussian noise.

        Timestamps are recomputed cumulatively from the perturbed gaps, so
        ordering holds; operation order, key ids and algorithm ids are kept.

        Args:
            trace: Input trace
            noise_level: Standard deviation of the multiplicative factor, in [0, 0.5]
            rng: Trace stream

        Returns:
            Perturbed trace (the input itself when noise_level is 0)
        """
        if not 0.0 <= noise_level <= 0.5:
            raise ValueError(f"noise level must lie in [0, 0.5], got {noise_level}")
        if noise_level == 0.0 or not trace.operations:
            return trace

        timestamps = np.asarray(trace.timestamps, dtype=np.float64)
        durations = np.asarray([op.duration for op in trace.operations], dtype=np.float64)
        gaps = np.diff(timestamps, prepend=0.0)

        gap_factors = np.maximum(NOISE_FLOOR, 1.0 + rng.normal(0.0, noise_level, size=len(gaps)))
        duration_factors = np.maximum(NOISE_FLOOR, 1.0 + rng.normal(0.0, noise_level, size=len(durations)))

        return _retime(trace, np.cumsum(gaps * gap_factors), durations * duration_factors)

    # ------------------------------------------------------------------
    # Violation mechanisms
    # ------------------------------------------------------------------

    def inject_lifetime_violation(self, trace: Trace, rng: np.random.Generator) -> Trace:
        """
        Shift one key's final operation past its expiry.

        Every later operation moves by the same delta so ordering is preserved.

        Args:
            trace: Input trace
            rng: Trace stream

        Returns:
            Trace with one expired use

        Raises:
            NoInjectableKey: If no key has a non-KeyGen operation
        """
        eligible = list(dict.fromkeys(
            op.key_id for op in trace.operations if op.op_type is not OpType.KEYGEN
        ))
        if not eligible:
            raise NoInjectableKey(trace.trace_id)

        target = eligible[int(rng.integers(len(eligible)))]
        record = trace.keys[target]
        final_index = max(i for i, op in enumerate(trace.operations) if op.key_id == target)
        final_time = trace.operations[final_index].timestamp

        extra = float(rng.uniform(0.05, 0.5)) * record.lifetime
        delta = max(0.0, record.expires_at - final_time) + extra

        timestamps = np.asarray(trace.timestamps, dtype=np.float64)
        timestamps[final_index:] += delta
        return _retime(trace, timestamps)

    def inject_downgrade_violation(self, trace: Trace) -> Trace:
        """
        Replace every strong algorithm id with its weak counterpart.

        Args:
            trace: Input trace

        Returns:
            Trace using weak algorithms only where strong ones were used

        Raises:
            NothingToDowngrade: If the trace uses no strong algorithm
        """
        mapping = self.downgrade_map
        if not any(op.algorithm_id in mapping for op in trace.operations):
            raise NothingToDowngrade(trace.trace_id)

        operations = tuple(
            op.model_copy(update={"algorithm_id": mapping[op.algorithm_id]})
            if op.algorithm_id in mapping else op
            for op in trace.operations
        )
        return trace.model_copy(update={"operations": operations})

    def inject_reuse_violation(self, trace_a: Trace, trace_b: Trace,
                               rng: np.random.Generator) -> Tuple[Trace, Trace]:
        """
        Make ``trace_b`` reuse a key of ``trace_a``.

        Donor keys are tried in ascending id order; the first one still valid at
        every use in ``trace_a`` and across the usage window of some key of
        ``trace_b`` replaces that key (chosen with ``rng`` among the valid ones).

        Args:
            trace_a: Donor trace (returned unchanged)
            trace_b: Recipient trace
            rng: Recipient stream

        Returns:
            (trace_a, rewritten trace_b)

        Raises:
            ValueError: If either trace is empty
            NoValidSharedKey: If no donor key can stay valid in both traces
        """
        if not trace_a.operations or not trace_b.operations:
            raise ValueError("reuse injection needs two nonempty traces")

        last_use_a: Dict[int, float] = {}
        for op in trace_a.operations:
            last_use_a[op.key_id] = op.timestamp
        last_use_b: Dict[int, float] = {}
        for op in trace_b.operations:
            last_use_b[op.key_id] = op.timestamp

        for donor_id in sorted(last_use_a):
            record = trace_a.keys[donor_id]
            if last_use_a[donor_id] > record.expires_at:
                continue
            candidates = [
                key_id for key_id in sorted(last_use_b)
                if key_id != donor_id and last_use_b[key_id] <= record.expires_at
            ]
            if not candidates:
                continue
            replaced = candidates[int(rng.integers(len(candidates)))]
            operations = tuple(
                op.model_copy(update={"key_id": donor_id, "key_lifetime": record.lifetime})
                if op.key_id == replaced else op
                for op in trace_b.operations
            )
            keys = {key_id: rec for key_id, rec in trace_b.keys.items() if key_id != replaced}
            keys[donor_id] = record
            logger.debug(f"Trace {trace_b.trace_id} reuses key {donor_id} of trace {trace_a.trace_id}")
            return trace_a, trace_b.model_copy(update={"operations": operations, "keys": keys})

        raise NoValidSharedKey(trace_a.trace_id, trace_b.trace_id)

    # ------------------------------------------------------------------
    # Corpora
    # ------------------------------------------------------------------

    def _base_trace(self, trace_id: int, attempt: int, category: Category,
                    salt: int = 0) -> Tuple[Trace, np.random.Generator]:
        rng = derive_stream(self.config.seed, trace_id, attempt, salt)
        trace = self.generate_trace(trace_id, rng, category)
        return self.apply_noise(trace, self.config.noise_level, rng), rng

    def _finish(self, trace: Trace, category: Category, rng: np.random.Generator) -> Trace:
        """Apply the non-relational injections of ``category`` (downgrade, then lifetime)."""
        flags = category.flags
        if flags.downgrade:
            trace = self.inject_downgrade_violation(trace)
        if flags.lifetime:
            trace = self.inject_lifetime_violation(trace, rng)
        return trace

    def _build_single(self, trace_id: int, category: Category) -> Trace:
        last_error: Optional[InjectionError] = None
        for attempt in range(self.max_retries):
            trace, rng = self._base_trace(trace_id, attempt, category)
            try:
                return self._finish(trace, category, rng)
            except InjectionError as e:
                last_error = e
                logger.warning(f"Retrying trace {trace_id} ({category.value}) after {e.error_code}")
        raise ConfigInfeasible(category.value, trace_id, self.max_retries, last_error.error_code)

    def _build_pair(self, first_id: int, category: Category) -> Tuple[Trace, Trace]:
        last_error: Optional[InjectionError] = None
        for attempt in range(self.max_retries):
            trace_a, rng_a = self._base_trace(first_id, attempt, category)
            trace_b, rng_b = self._base_trace(first_id + 1, attempt, category)
            try:
                trace_a, trace_b = self.inject_reuse_violation(trace_a, trace_b, rng_b)
                return self._finish(trace_a, category, rng_a), self._finish(trace_b, category, rng_b)
            except InjectionError as e:
                last_error = e
                logger.warning(f"Retrying pair {first_id}/{first_id + 1} ({category.value}) after {e.error_code}")
        raise ConfigInfeasible(category.value, first_id, self.max_retries, last_error.error_code)

    def _build_leftover(self, trace_id: int, donor: Trace, category: Category) -> Trace:
        last_error: Optional[InjectionError] = None
        for attempt in range(self.max_retries):
            trace, rng = self._base_trace(trace_id, attempt, category)
            try:
                _, trace = self.inject_reuse_violation(donor, trace, rng)
                return self._finish(trace, category, rng)
            except InjectionError as e:
                last_error = e
                logger.warning(f"Retrying trace {trace_id} ({category.value}) after {e.error_code}")
        raise ConfigInfeasible(category.value, trace_id, self.max_retries, last_error.error_code)

    def generate_corpus(self) -> Corpus:
        """
        Generate the full corpus with the configured per-category counts.

        Categories are emitted in declaration order with consecutive trace ids.
        Reuse categories are built from pairs; an odd remainder reuses a key of
        the category's first donor. Composite injections run reuse, then
        downgrade, then lifetime.

        Returns:
            The corpus

        Raises:
            ConfigInfeasible: If a trace cannot be built within the retry budget
        """
        traces: List[Trace] = []
        next_id = 0
        for category in Category:
            count = self.config.category_counts.get(category, 0)
            if count == 0:
                continue
            logger.info(f"Generating {count} {category.value} traces")
            if not category.flags.reuse:
                for offset in range(count):
                    traces.append(self._build_single(next_id + offset, category))
            else:
                built: List[Trace] = []
                for offset in range(0, count - 1, 2):
                    built.extend(self._build_pair(next_id + offset, category))
                if count % 2 == 1:
                    built.append(self._build_leftover(next_id + count - 1, built[0], category))
                traces.extend(built)
            next_id += count

        corpus = Corpus(traces=tuple(traces))
        logger.info(f"Generated corpus of {len(corpus)} traces and {corpus.n_operations} operations")
        return corpus

    def generate_shift_corpus(self, scale_factor: float, n_traces: int) -> Corpus:
        """
        Generate an all-normal corpus with scaled temporal characteristics.

        Args:
            scale_factor: Multiplier of gaps, durations and the lifetime range
            n_traces: Number of traces

        Returns:
            Corpus of ``n_traces`` normal traces
        """
        if scale_factor <= 0:
            raise ValueError(f"scale factor must be positive, got {scale_factor}")
        shifted = TraceGenService(self.config.scaled(scale_factor))
        salt = SHIFT_SALT_BASE + int(round(scale_factor * 1000))
        traces = tuple(
            shifted._base_trace(trace_id, 0, Category.NORMAL, salt)[0]
            for trace_id in range(n_traces)
        )
        logger.info(f"Generated shift corpus x{scale_factor} with {n_traces} traces")
        return Corpus(traces=traces)


def corpus_summary(corpus: Corpus) -> Dict[str, object]:
    """
    Summarize a corpus for manifests and logs.

    Args:
        corpus: Corpus to summarize

    Returns:
        Trace count, operation count, mean length and per-category counts
    """
    n_traces = len(corpus)
    n_ops = corpus.n_operations
    return {
        "n_traces": n_traces,
        "n_operations": n_ops,
        "mean_length": (n_ops / n_traces) if n_traces else 0.0,
        "category_counts": {category.value: count for category, count in corpus.category_counts().items()},
    }
