use crate::flow::NodeRole;
use crate::policy::features::{block_offset, concise, query, retrieve, stop, sufficiency, verbose};

/// Small weights on each role's obvious cues, so the untrained flow behaves
/// roughly as intended and earns some reward.
pub fn prior_weights(role: NodeRole, dimension: usize) -> Vec<f64> {
    let local: &[(usize, f64)] = match role {
        NodeRole::QueryGen => &[
            (query::RECENT_OBJECT, 0.5),
            (query::HEAD_ENTITY, 0.2),
            (query::UNCOVERED_RELATION, 0.5),
            (query::RELATION_POSITION, 0.3),
            (query::RELATION_POSITION + 1, 0.2),
            (query::RELATION_POSITION + 2, 0.1),
        ],
        NodeRole::Retrieve => &[(retrieve::OVERLAP + 1, 0.3), (retrieve::OVERLAP + 2, 0.6)],
        // stop once every question relation shows up in the scratchpad
        NodeRole::StopRetrieval => &[
            (stop::STOP + stop::RELATIONS_COVERED, 0.6),
            (stop::CONTINUE + stop::BIAS, 0.3),
        ],
        NodeRole::VerboseAnswer => &[(verbose::OBJECT, 0.3), (verbose::RECENT_DOC, 0.3)],
        NodeRole::ConciseAnswer => &[(concise::NEW_ENTITY, 0.5)],
        NodeRole::Sufficiency => &[
            (sufficiency::SUFFICIENT + sufficiency::RELATIONS_COVERED, 0.6),
            (sufficiency::INSUFFICIENT + sufficiency::BIAS, 0.3),
        ],
    };
    let mut w = vec![0.0; dimension];
    let offset = block_offset(role);
    for &(i, v) in local {
        w[offset + i] = v;
    }
    w
}
