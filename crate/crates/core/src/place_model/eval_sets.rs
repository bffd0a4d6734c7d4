use std::collections::{BTreeMap, BTreeSet};

use super::LabeledPair;

/// Probe sets for ACC and PRE@K/REC@K.
///
/// `omega` holds probes with both labeled duplicates and non-duplicates,
/// `theta` probes with at least one labeled duplicate. `phi[a]` / `psi[a]`
/// are the labeled duplicates / non-duplicates of `a`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalSets {
    pub omega: BTreeSet<String>,
    pub theta: BTreeSet<String>,
    pub phi: BTreeMap<String, BTreeSet<String>>,
    pub psi: BTreeMap<String, BTreeSet<String>>,
}

impl EvalSets {
    pub fn duplicates_of(&self, id: &str) -> Option<&BTreeSet<String>> {
        self.phi.get(id)
    }

    pub fn non_duplicates_of(&self, id: &str) -> Option<&BTreeSet<String>> {
        self.psi.get(id)
    }

    /// Every id mentioned anywhere in the sets.
    pub fn all_ids(&self) -> BTreeSet<&str> {
        let mut ids: BTreeSet<&str> = BTreeSet::new();
        for (a, bs) in self.phi.iter().chain(self.psi.iter()) {
            ids.insert(a);
            ids.extend(bs.iter().map(String::as_str));
        }
        ids
    }
}

/// Each pair contributes to both endpoints' sets. When sources disagree on a
/// pair the majority label wins and exact ties are left out of both sets.
pub fn build_eval_sets(labels: &[LabeledPair]) -> EvalSets {
    let mut votes: BTreeMap<(&str, &str), (u32, u32)> = BTreeMap::new();
    for l in labels {
        let v = votes.entry((l.a.as_str(), l.b.as_str())).or_default();
        if l.duplicate {
            v.0 += 1;
        } else {
            v.1 += 1;
        }
    }

    let mut sets = EvalSets::default();
    for ((a, b), (pos, neg)) in votes {
        let target = match pos.cmp(&neg) {
            std::cmp::Ordering::Greater => &mut sets.phi,
            std::cmp::Ordering::Less => &mut sets.psi,
            std::cmp::Ordering::Equal => continue,
        };
        target.entry(a.to_string()).or_default().insert(b.to_string());
        target.entry(b.to_string()).or_default().insert(a.to_string());
    }
    sets.theta = sets.phi.keys().cloned().collect();
    sets.omega = sets
        .theta
        .iter()
        .filter(|a| sets.psi.contains_key(*a))
        .cloned()
        .collect();
    sets
}
