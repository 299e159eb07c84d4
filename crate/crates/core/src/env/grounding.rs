use crate::env::types::{Doc, Token};

/// Rewrites a concise answer so it is a span of one retrieved document.
///
/// Answers already contained in a single scratchpad document pass through.
/// Otherwise the entity whose document overlaps the answer most is returned;
/// ties go to the most recently retrieved document, object before subject.
/// `scratchpad` is in retrieval order and must be non-empty.
pub fn enforce_grounded(concise: &[Token], scratchpad: &[Doc]) -> Vec<Token> {
    if scratchpad.iter().any(|doc| concise.iter().all(|t| doc.contains(*t))) {
        return concise.to_vec();
    }
    let mut best: Option<(usize, Token)> = None;
    for doc in scratchpad.iter().rev() {
        let overlap = doc.tokens().iter().filter(|t| concise.contains(t)).count();
        for entity in [doc.object, doc.subject] {
            if best.map_or(true, |(b, _)| overlap > b) {
                best = Some((overlap, Token::Entity(entity)));
            }
        }
    }
    match best {
        Some((_, token)) => vec![token],
        None => concise.to_vec(),
    }
}

/// True when the answer is not a span of any single scratchpad document.
pub fn is_off_document(concise: &[Token], scratchpad: &[Doc]) -> bool {
    !scratchpad.iter().any(|doc| concise.iter().all(|t| doc.contains(*t)))
}
