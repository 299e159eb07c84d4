use crate::env::types::Instance;
use crate::error::{FlowError, Result};

/// Predicts exactly one member of a question pair answerable: the one whose
/// sufficiency score is higher, or the lower instance id on equal scores.
pub fn pairwise_infer(pair: [&Instance; 2], scores: [f64; 2]) -> Result<[bool; 2]> {
    let [a, b] = pair;
    match (a.pair_id, b.pair_id) {
        (Some(x), Some(y)) if x == y && a.id != b.id => {}
        _ => {
            return Err(FlowError::PairMismatch(format!(
                "instances {} ({:?}) and {} ({:?}) are not twins",
                a.id, a.pair_id, b.id, b.pair_id
            )))
        }
    }
    let first_wins = if scores[0] == scores[1] { a.id < b.id } else { scores[0] > scores[1] };
    Ok([first_wins, !first_wins])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::types::{Entity, Question};

    fn inst(id: u64, pair: Option<u64>) -> Instance {
        Instance {
            id,
            pair_id: pair,
            question: Question { head: Entity(0), relations: vec![] },
            hops: 0,
            candidates: vec![],
            gold_support: vec![],
            gold_answers: vec![],
            answerable: false,
        }
    }

    #[test]
    fn higher_score_is_answerable() {
        let (a, b) = (inst(4, Some(1)), inst(5, Some(1)));
        assert_eq!(pairwise_infer([&a, &b], [0.9, 0.2]).unwrap(), [true, false]);
        assert_eq!(pairwise_infer([&a, &b], [0.1, 0.2]).unwrap(), [false, true]);
    }

    #[test]
    fn ties_go_to_lower_id() {
        let (a, b) = (inst(9, Some(1)), inst(5, Some(1)));
        assert_eq!(pairwise_infer([&a, &b], [0.5, 0.5]).unwrap(), [false, true]);
        assert_eq!(pairwise_infer([&b, &a], [0.5, 0.5]).unwrap(), [true, false]);
    }

    #[test]
    fn overrides_double_sufficient() {
        // raw predictions would both be "sufficient" (> 0.5)
        let (a, b) = (inst(1, Some(3)), inst(2, Some(3)));
        let out = pairwise_infer([&a, &b], [0.8, 0.7]).unwrap();
        assert_eq!(out.iter().filter(|x| **x).count(), 1);
    }

    #[test]
    fn rejects_mismatched_pairs() {
        let (a, b) = (inst(1, Some(3)), inst(2, Some(4)));
        assert!(pairwise_infer([&a, &b], [0.1, 0.2]).is_err());
        let c = inst(3, None);
        assert!(pairwise_infer([&a, &c], [0.1, 0.2]).is_err());
    }
}
