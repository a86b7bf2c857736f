//! Correlation-function specifications: factors carrying derivative slots and
//! the pairings that contract them.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::GraphError;

/// One factor `d^k f(x) / d theta...` of the product inside the expectation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorDoc {
    pub input: String,
    #[serde(default)]
    pub slots: Vec<String>,
}

/// Serialized form of a correlation function.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecDocument {
    pub factors: Vec<FactorDoc>,
    #[serde(default)]
    pub pairs: Vec<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depths: Option<Vec<usize>>,
}

/// Position of a slot: factor index and index within that factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotRef {
    pub factor: usize,
    pub slot: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Factor {
    pub input: String,
    pub slots: Vec<String>,
}

/// Validated correlation function.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrelationSpec {
    pub factors: Vec<Factor>,
    pub pairs: Vec<(SlotRef, SlotRef)>,
    /// Per-factor chain depths carried along from the document, if given.
    pub depths: Option<Vec<usize>>,
}

impl CorrelationSpec {
    pub fn from_document(doc: SpecDocument) -> Result<Self, GraphError> {
        let m = doc.factors.len();
        if m % 2 == 1 {
            return Err(GraphError::OddFactorCount { m });
        }
        let mut where_: BTreeMap<&str, SlotRef> = BTreeMap::new();
        for (f, factor) in doc.factors.iter().enumerate() {
            for (s, label) in factor.slots.iter().enumerate() {
                if let Some(first) = where_.insert(label.as_str(), SlotRef { factor: f, slot: s }) {
                    return Err(GraphError::DuplicateLabel {
                        label: label.clone(),
                        first_factor: first.factor,
                        second_factor: f,
                    });
                }
            }
        }
        let mut used: BTreeMap<&str, usize> = BTreeMap::new();
        let mut pairs = Vec::with_capacity(doc.pairs.len());
        for (p, [a, b]) in doc.pairs.iter().enumerate() {
            let mut ends = [SlotRef { factor: 0, slot: 0 }; 2];
            for (end, label) in ends.iter_mut().zip([a, b]) {
                let Some(&r) = where_.get(label.as_str()) else {
                    return Err(GraphError::UnknownSlot { label: label.clone(), pair: p });
                };
                if let Some(first) = used.insert(label.as_str(), p) {
                    return Err(GraphError::SlotPairedTwice { label: label.clone(), first_pair: first, second_pair: p });
                }
                *end = r;
            }
            pairs.push((ends[0], ends[1]));
        }
        for (f, factor) in doc.factors.iter().enumerate() {
            for label in &factor.slots {
                if !used.contains_key(label.as_str()) {
                    return Err(GraphError::UnpairedSlot { label: label.clone(), factor: f });
                }
            }
        }
        if let Some(d) = &doc.depths {
            check_depths(m, d)?;
        }
        Ok(Self {
            factors: doc.factors.into_iter().map(|f| Factor { input: f.input, slots: f.slots }).collect(),
            pairs,
            depths: doc.depths,
        })
    }

    pub fn to_document(&self) -> SpecDocument {
        let label = |r: SlotRef| self.factors[r.factor].slots[r.slot].clone();
        SpecDocument {
            factors: self.factors.iter().map(|f| FactorDoc { input: f.input.clone(), slots: f.slots.clone() }).collect(),
            pairs: self.pairs.iter().map(|&(a, b)| [label(a), label(b)]).collect(),
            depths: self.depths.clone(),
        }
    }

    /// Number of factors `m`.
    pub fn m(&self) -> usize {
        self.factors.len()
    }

    /// Contractions between factors `i < j`, keyed by `(i, j)`; self-contractions
    /// appear as `(i, i)`.
    pub fn contraction_counts(&self) -> BTreeMap<(usize, usize), usize> {
        let mut out = BTreeMap::new();
        for &(a, b) in &self.pairs {
            let key = (a.factor.min(b.factor), a.factor.max(b.factor));
            *out.entry(key).or_insert(0) += 1;
        }
        out
    }

    /// Factors whose two slots are contracted with each other.
    pub fn self_contracted(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.pairs.iter().filter(|(a, b)| a.factor == b.factor).map(|(a, _)| a.factor).collect();
        v.dedup();
        v
    }
}

pub(crate) fn check_depths(m: usize, depths: &[usize]) -> Result<(), GraphError> {
    if depths.len() != m {
        return Err(GraphError::DepthCount { expected: m, found: depths.len() });
    }
    if let Some(f) = depths.iter().position(|&d| d == 0) {
        return Err(GraphError::ZeroDepth { factor: f });
    }
    Ok(())
}

/// `f(x1)[a] f(x2)[b]` contracted on `(a, b)`: the NTK.
pub fn ntk_spec() -> CorrelationSpec {
    build(&[("x1", &["a"]), ("x2", &["b"])], &[("a", "b")])
}

/// `f(x1) f(x2)`.
pub fn pair_spec() -> CorrelationSpec {
    build(&[("x1", &[]), ("x2", &[])], &[])
}

/// `d^2 f(x1) . df(x2) . df(x3) . f(x4)`: the leading term of `E[dTheta/dt]`.
pub fn dtheta_dt_spec() -> CorrelationSpec {
    build(
        &[("x1", &["a", "b"]), ("x2", &["a'"]), ("x3", &["b'"]), ("x4", &[])],
        &[("a", "a'"), ("b", "b'")],
    )
}

/// Two NTK factors: `E[Theta^2]`.
pub fn ntk_squared_spec() -> CorrelationSpec {
    build(
        &[("x1", &["a"]), ("x2", &["a'"]), ("x3", &["b"]), ("x4", &["b'"])],
        &[("a", "a'"), ("b", "b'")],
    )
}

fn build(factors: &[(&str, &[&str])], pairs: &[(&str, &str)]) -> CorrelationSpec {
    let doc = SpecDocument {
        factors: factors
            .iter()
            .map(|(i, s)| FactorDoc { input: (*i).into(), slots: s.iter().map(|&x| x.into()).collect() })
            .collect(),
        pairs: pairs.iter().map(|(a, b)| [(*a).into(), (*b).into()]).collect(),
        depths: None,
    };
    CorrelationSpec::from_document(doc).expect("built-in spec is valid")
}
