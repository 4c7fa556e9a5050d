"""Python bindings for the mtop cross-lingual semantic parsing toolkit."""

from ._core import (
    Alignment,
    AlignerConfig,
    AlignmentModel,
    BpeModel,
    EvalReport,
    Example,
    FilterList,
    ParserConfig,
    ParserModel,
    PlaceholderTemplate,
    ProjectionOutcome,
    adapt_top_annotation,
    bootstrap_corpus,
    corpus_bleu,
    decode_beam,
    exact_match,
    filtered_match,
    learn_bpe,
    make_template,
    mrl_tokens,
    normalize_mrl,
    project_example,
    restore_template,
    synthetic_corpus,
    tokenize_question,
    train_aligner,
    train_parser,
    translate_dict,
    viterbi_align,
)

__all__ = [name for name in dir() if not name.startswith("_")]
