//! Synthetic multi-hop QA environment: documents are `(subject, relation,
//! object)` facts, questions are relation chains from a head entity.

pub mod dataset;
pub mod grounding;
pub mod metrics;
pub mod oracle;
pub mod pairwise;
pub mod subsample;
pub mod types;

pub use dataset::{gen_dataset, make_unanswerable_twin, Dataset, DatasetConfig};
pub use grounding::{enforce_grounded, is_off_document};
pub use metrics::{answer_f1, sufficiency_accuracy, support_f1};
pub use oracle::{oracle_best, OracleBest, DEFAULT_ENUMERATION_LIMIT};
pub use pairwise::pairwise_infer;
pub use subsample::{hop_quota, subsample_to_hops};
pub use types::{Doc, DocId, Entity, Instance, Question, Relation, Token};
