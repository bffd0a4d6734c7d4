//! Place records, label pairs, dataset ingestion and the synthetic
//! ground-truth generator.

mod eval_sets;
mod io;
mod synthetic;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use eval_sets::{build_eval_sets, EvalSets};
pub use io::{
    load_ground_truth, load_labels, load_places, parse_labels, parse_places, write_ground_truth,
    write_labels, write_places,
};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticData, DEFAULT_CITIES};

/// Default category catalogue (19 common place categories).
pub const CATEGORY_CATALOGUE: [&str; 19] = [
    "Restaurant",
    "Cafe",
    "Bar",
    "Shopping",
    "Grocery",
    "Hotel",
    "Bank",
    "Pharmacy",
    "Hospital",
    "School",
    "Museum",
    "Park",
    "Gym",
    "Salon",
    "Bakery",
    "Theater",
    "Church",
    "Library",
    "Automotive",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coordinate {
    pub lat: f64,
    pub lon: f64,
}

impl Coordinate {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let c = Coordinate { lat, lon };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::Validation(format!(
                "coordinate ({}, {}) out of range",
                self.lat, self.lon
            )));
        }
        Ok(())
    }
}

/// One online place page.
#[derive(Debug, Clone, PartialEq)]
pub struct Place {
    pub id: String,
    pub name: String,
    pub address: Option<String>,
    pub coordinate: Option<Coordinate>,
    pub categories: BTreeSet<String>,
}

/// A validated collection of places with id lookup.
#[derive(Debug, Clone, Default)]
pub struct PlaceSet {
    places: Vec<Place>,
    by_id: HashMap<String, usize>,
}

impl PlaceSet {
    pub fn new(places: Vec<Place>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(places.len());
        for (i, p) in places.iter().enumerate() {
            if let Some(c) = &p.coordinate {
                c.validate()
                    .map_err(|e| Error::Validation(format!("place {:?}: {e}", p.id)))?;
            }
            if by_id.insert(p.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate place id {:?}", p.id)));
            }
        }
        Ok(PlaceSet { places, by_id })
    }

    pub fn places(&self) -> &[Place] {
        &self.places
    }

    pub fn len(&self) -> usize {
        self.places.len()
    }

    pub fn is_empty(&self) -> bool {
        self.places.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Place> {
        self.index_of(id).map(|i| &self.places[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.places.iter().map(|p| p.id.as_str())
    }
}

/// A labeled place pair from one source. `a < b` always holds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledPair {
    pub a: String,
    pub b: String,
    pub duplicate: bool,
    pub source: String,
}

impl LabeledPair {
    /// Builds a pair in canonical order. Self-pairs are rejected.
    pub fn new(
        a: impl Into<String>,
        b: impl Into<String>,
        duplicate: bool,
        source: impl Into<String>,
    ) -> Result<Self> {
        let (mut a, mut b) = (a.into(), b.into());
        if a == b {
            return Err(Error::Validation(format!("self-pair ({a}, {a})")));
        }
        if b < a {
            std::mem::swap(&mut a, &mut b);
        }
        Ok(LabeledPair {
            a,
            b,
            duplicate,
            source: source.into(),
        })
    }

    pub fn y(&self) -> f64 {
        if self.duplicate {
            1.0
        } else {
            0.0
        }
    }
}
