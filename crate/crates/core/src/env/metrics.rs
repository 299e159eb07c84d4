//! Token-set answer F1, document support F1 and sufficiency accuracy.

use std::collections::BTreeSet;

use crate::env::types::{DocId, Token};
use crate::error::{FlowError, Result};

fn set_f1<T: Ord>(predicted: &BTreeSet<T>, gold: &BTreeSet<T>) -> f64 {
    let common = predicted.intersection(gold).count();
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / predicted.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Largest token-set F1 of `predicted` against any of the gold answers.
///
/// An empty prediction scores 0 against every gold set.
pub fn answer_f1(predicted: &[Token], gold_answers: &[Vec<Token>]) -> f64 {
    let predicted: BTreeSet<Token> = predicted.iter().copied().collect();
    gold_answers
        .iter()
        .map(|gold| set_f1(&predicted, &gold.iter().copied().collect()))
        .fold(0.0, f64::max)
}

/// Set-overlap F1 between retrieved and gold supporting documents.
pub fn support_f1(retrieved: &[DocId], gold_support: &[DocId]) -> f64 {
    let retrieved: BTreeSet<DocId> = retrieved.iter().copied().collect();
    let gold: BTreeSet<DocId> = gold_support.iter().copied().collect();
    match (retrieved.is_empty(), gold.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        (false, false) => set_f1(&retrieved, &gold),
    }
}

pub fn sufficiency_accuracy(predictions: &[bool], labels: &[bool]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(FlowError::LengthMismatch(predictions.len(), labels.len()));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}
