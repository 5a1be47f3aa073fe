//! Translation metrics, language groupings, MQM scoring and paired
//! significance tests.

mod bleu;
mod evaluate;
mod feature;
mod groups;
mod mqm;
mod perplexity;
mod report;
mod significance;

pub use bleu::{bleu_text, corpus_bleu, corpus_bleu_tokens, BleuStats, MAX_ORDER};
pub use evaluate::{
    evaluate_outputs, metric_value, segment_scores, translate_split, IdealTranslator, LangOutputs,
    Metric, MetricTable, Translator,
};
pub use feature::{feature_counts, feature_usage_rate};
pub use groups::{group_aggregate, Group, GroupMean, LangGroups};
pub use mqm::{
    mqm_segment_scores, mqm_summary, mqm_weighted_score, read_annotations, specificity,
    weighted_from_means, MqmError, MqmSummary, Severity, Specificity,
};
pub use perplexity::{segment_perplexity, training_perplexity};
pub use report::{group_report_csv, metrics_to_jsonl, read_metrics, write_metrics, MetricRecord};
pub use significance::{monte_carlo, paired_randomization_test, RandomizationResult, EXACT_LIMIT};
