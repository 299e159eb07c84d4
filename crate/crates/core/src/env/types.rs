use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};

macro_rules! prefixed_id {
    ($name:ident, $prefix:literal) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(into = "String", try_from = "String")]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }

        impl FromStr for $name {
            type Err = FlowError;

            fn from_str(s: &str) -> Result<Self> {
                s.strip_prefix($prefix)
                    .and_then(|n| n.parse().ok())
                    .map($name)
                    .ok_or_else(|| {
                        FlowError::Format(format!(
                            concat!("expected `", $prefix, "<n>`, got `{}`"),
                            s
                        ))
                    })
            }
        }

        impl From<$name> for String {
            fn from(v: $name) -> String {
                v.to_string()
            }
        }

        impl TryFrom<String> for $name {
            type Error = FlowError;

            fn try_from(s: String) -> Result<Self> {
                s.parse()
            }
        }
    };
}

prefixed_id!(Entity, "e");
prefixed_id!(Relation, "r");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocId(pub u32);

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}", self.0)
    }
}

/// A word of the shared vocabulary. Entities order before relations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Token {
    Entity(Entity),
    Relation(Relation),
}

impl Token {
    pub fn as_entity(self) -> Option<Entity> {
        match self {
            Token::Entity(e) => Some(e),
            Token::Relation(_) => None,
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Entity(e) => e.fmt(f),
            Token::Relation(r) => r.fmt(f),
        }
    }
}

impl FromStr for Token {
    type Err = FlowError;

    fn from_str(s: &str) -> Result<Self> {
        if s.starts_with('e') {
            s.parse().map(Token::Entity)
        } else {
            s.parse().map(Token::Relation)
        }
    }
}

impl From<Token> for String {
    fn from(t: Token) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for Token {
    type Error = FlowError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Entity> for Token {
    fn from(e: Entity) -> Self {
        Token::Entity(e)
    }
}

impl From<Relation> for Token {
    fn from(r: Relation) -> Self {
        Token::Relation(r)
    }
}

/// A three-token fact `(subject, relation, object)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "DocRepr", try_from = "DocRepr")]
pub struct Doc {
    pub id: DocId,
    pub subject: Entity,
    pub relation: Relation,
    pub object: Entity,
}

impl Doc {
    pub fn tokens(&self) -> [Token; 3] {
        [
            Token::Entity(self.subject),
            Token::Relation(self.relation),
            Token::Entity(self.object),
        ]
    }

    pub fn entities(&self) -> [Entity; 2] {
        [self.subject, self.object]
    }

    pub fn contains(&self, token: Token) -> bool {
        self.tokens().contains(&token)
    }
}

#[derive(Serialize, Deserialize)]
struct DocRepr {
    id: DocId,
    tokens: Vec<Token>,
}

impl From<Doc> for DocRepr {
    fn from(d: Doc) -> Self {
        DocRepr { id: d.id, tokens: d.tokens().to_vec() }
    }
}

impl TryFrom<DocRepr> for Doc {
    type Error = FlowError;

    fn try_from(r: DocRepr) -> Result<Self> {
        match r.tokens.as_slice() {
            [Token::Entity(s), Token::Relation(rel), Token::Entity(o)] => Ok(Doc {
                id: r.id,
                subject: *s,
                relation: *rel,
                object: *o,
            }),
            _ => Err(FlowError::Format(format!(
                "document {} must be (entity, relation, entity)",
                r.id
            ))),
        }
    }
}

/// A multi-hop question: start at `head` and follow `relations` in order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Question {
    pub head: Entity,
    pub relations: Vec<Relation>,
}

impl Question {
    pub fn tokens(&self) -> Vec<Token> {
        std::iter::once(Token::Entity(self.head))
            .chain(self.relations.iter().map(|&r| Token::Relation(r)))
            .collect()
    }

    pub fn contains(&self, token: Token) -> bool {
        match token {
            Token::Entity(e) => e == self.head,
            Token::Relation(r) => self.relations.contains(&r),
        }
    }
}

/// One synthetic multi-hop QA problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: u64,
    pub pair_id: Option<u64>,
    pub question: Question,
    pub hops: usize,
    pub candidates: Vec<Doc>,
    pub gold_support: Vec<DocId>,
    pub gold_answers: Vec<Vec<Token>>,
    pub answerable: bool,
}

impl Instance {
    pub fn doc(&self, id: DocId) -> Option<&Doc> {
        self.candidates.iter().find(|d| d.id == id)
    }

    pub fn candidate_ids(&self) -> Vec<DocId> {
        self.candidates.iter().map(|d| d.id).collect()
    }

    fn malformed(&self, reason: impl Into<String>) -> FlowError {
        FlowError::MalformedInstance { instance: self.id, reason: reason.into() }
    }

    /// Structural checks that every loaded or generated instance must pass.
    pub fn validate(&self, max_retrievals: usize) -> Result<()> {
        if self.hops != self.question.relations.len() {
            return Err(self.malformed("hops differs from question length"));
        }
        if self.hops == 0 {
            return Err(self.malformed("question has no relations"));
        }
        if self.hops > max_retrievals {
            return Err(self.malformed(format!(
                "{} hops exceed the retrieval cap {}",
                self.hops, max_retrievals
            )));
        }
        if self.candidates.len() < max_retrievals {
            return Err(self.malformed(format!(
                "{} candidates fewer than the retrieval cap {}",
                self.candidates.len(),
                max_retrievals
            )));
        }
        let mut ids = self.candidate_ids();
        ids.sort();
        ids.dedup();
        if ids.len() != self.candidates.len() {
            return Err(self.malformed("duplicate candidate ids"));
        }
        if self.gold_answers.is_empty() || self.gold_answers.iter().any(Vec::is_empty) {
            return Err(self.malformed("gold answers must be non-empty token sets"));
        }
        let missing = self.gold_support.iter().filter(|id| self.doc(**id).is_none()).count();
        match (self.answerable, missing) {
            (true, 0) | (false, 1) => Ok(()),
            (true, n) => Err(self.malformed(format!("answerable but {n} gold docs missing"))),
            (false, n) => Err(self.malformed(format!(
                "unanswerable instances miss exactly one gold doc, found {n}"
            ))),
        }
    }
}
