"""dialrep: local, partner-specific lexical repetition analytics for
two-party dialogue."""

__version__ = "0.1.0"

from .corpus import (
    Corpus, ContextSample, Dialogue, Token, Utterance,
    extract_samples, load_corpus, normalize_turns, tokenize,
)
from .miner import (
    Construction, ConstructionLexicon, ConstructionStats, Occurrence,
    construction_stats, filter_constructions, mine_shared_constructions,
)
from .metrics import (
    CorpusCounts, RepetitionRecord,
    construction_overlap, pair_records, pmi, vocabulary_overlap,
)
from .attrib import (
    AggregatedAttribution, AttributionRecord, ElementSpan,
    aggregate, element_table, load_attributions,
)
from .stats import (
    CorrelationResult, RegressionResult, TTestResult,
    decay_slope, ols, spearman, welch_t,
)
from .quality import (
    GenerationRecord, HumanLikenessRecord, QualityScores,
    corpus_bleu, humanlikeness_correlation, ingest_external_scores,
)
from .synth import SyntheticSpec, generate_synthetic
from .pipeline import RunConfig, run_pipeline
