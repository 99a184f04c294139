"""Estimate classroom Instructional Support scores from transcripts.

Pipeline: import transcriber output, judge each utterance (n-gram counts
and/or chat-backend indicator probabilities), sum the judgments per session,
z-score, and fit a sparse linear model. Predictions decompose exactly into
per-utterance marginal scores for explanation and visualization.
"""

from .aggregate import SessionFeatures, Standardizer, concat, fit_standardizer, standardize, sum_features
from .bow import Vocabulary, baseline_features, build_vocabulary, extract_ngrams, featurize, normalize
from .corpus import (
    Corpus,
    Dimension,
    LabelRecord,
    Session,
    Utterance,
    build_corpus,
    import_whisper,
    load_labels,
    mean_target,
)
from .evaluate import cross_validate, irr, make_folds, pearson, qwk, rmse, spearman
from .explain import MarginalScore, decompose, marginal_scores, sample_spanning, top_bottom
from .features import FeatureConfig, compute_features
from .lasso import RegressionModel, fit, kkt_residual, predict, standardized_weights
from .llm import (
    ChatRequest,
    ChatResponse,
    FeatureCache,
    IndicatorSet,
    MockBackend,
    RemoteBackend,
    explain_indicator,
    featurize_llm,
    parse_yes_feature,
    render_prompt,
)
from .render import HeatmapSpec, heatmap_svg
from .synth import generate_corpus

__version__ = "0.1.0"
