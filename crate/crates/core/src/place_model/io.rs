use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Coordinate, LabeledPair, Place, PlaceSet};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct PlaceRecord {
    id: String,
    name: String,
    #[serde(default)]
    address: Option<String>,
    #[serde(default)]
    lat: Option<f64>,
    #[serde(default)]
    lon: Option<f64>,
    #[serde(default)]
    categories: Vec<String>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Reads `places.jsonl`.
pub fn load_places(path: impl AsRef<Path>) -> Result<Vec<Place>> {
    let path = path.as_ref();
    parse_places(open(path)?)
}

/// Parses one JSON object per line. Blank lines are skipped.
pub fn parse_places(reader: impl BufRead) -> Result<Vec<Place>> {
    let mut places = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PlaceRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let coordinate = match (rec.lat, rec.lon) {
            (Some(lat), Some(lon)) => Some(
                Coordinate::new(lat, lon)
                    .map_err(|e| Error::Validation(format!("line {lineno}: {e}")))?,
            ),
            (None, None) => None,
            _ => {
                return Err(Error::Validation(format!(
                    "line {lineno}: lat and lon must both be present or both be null"
                )))
            }
        };
        if !seen.insert(rec.id.clone()) {
            return Err(Error::Validation(format!(
                "line {lineno}: duplicate place id {:?}",
                rec.id
            )));
        }
        places.push(Place {
            id: rec.id,
            name: rec.name,
            address: rec.address,
            coordinate,
            categories: rec.categories.into_iter().collect(),
        });
    }
    Ok(places)
}

pub fn write_places(path: impl AsRef<Path>, places: &[Place]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for p in places {
        let rec = PlaceRecord {
            id: p.id.clone(),
            name: p.name.clone(),
            address: p.address.clone(),
            lat: p.coordinate.map(|c| c.lat),
            lon: p.coordinate.map(|c| c.lon),
            categories: p.categories.iter().cloned().collect(),
        };
        let line = serde_json::to_string(&rec).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `labels.tsv` (`id_a, id_b, y, source`), validating against `places`.
pub fn load_labels(path: impl AsRef<Path>, places: &PlaceSet) -> Result<Vec<LabeledPair>> {
    parse_labels(open(path.as_ref())?, places)
}

/// Pairs are canonicalized, exact repeats dropped (first occurrence kept) and
/// conflicting labels for the same pair retained.
pub fn parse_labels(reader: impl BufRead, places: &PlaceSet) -> Result<Vec<LabeledPair>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 4 tab-separated columns, got {}", cols.len()),
            });
        }
        let y = match cols[2].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Validation(format!(
                    "line {lineno}: label {other:?} is not 0 or 1"
                )))
            }
        };
        for id in &cols[..2] {
            if places.index_of(id).is_none() {
                return Err(Error::Validation(format!(
                    "line {lineno}: unknown place id {id:?}"
                )));
            }
        }
        let pair = LabeledPair::new(cols[0], cols[1], y, cols[3])
            .map_err(|e| Error::Validation(format!("line {lineno}: {e}")))?;
        if seen.insert(pair.clone()) {
            out.push(pair);
        }
    }
    Ok(out)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[LabeledPair]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "# id_a\tid_b\ty\tsource").map_err(io)?;
    for l in labels {
        writeln!(w, "{}\t{}\t{}\t{}", l.a, l.b, u8::from(l.duplicate), l.source).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_ground_truth(path: impl AsRef<Path>, truth: &BTreeMap<String, String>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    for (id, t) in truth {
        writeln!(w, "{id}\t{t}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let mut out = BTreeMap::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, t) = line.split_once('\t').ok_or(Error::Parse {
            line: i + 1,
            message: "expected `id<TAB>true_id`".into(),
        })?;
        out.insert(id.to_string(), t.to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn set(ids: &[&str]) -> PlaceSet {
        PlaceSet::new(
            ids.iter()
                .map(|id| Place {
                    id: id.to_string(),
                    name: "x".into(),
                    address: None,
                    coordinate: None,
                    categories: BTreeSet::new(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn null_fields_parse_as_absent() {
        let line = r#"{"id":"p1","name":"The MET","address":null,"lat":null,"lon":null,"categories":[]}"#;
        let places = parse_places(line.as_bytes()).unwrap();
        assert_eq!(places.len(), 1);
        assert_eq!(places[0].name, "The MET");
        assert!(places[0].address.is_none());
        assert!(places[0].coordinate.is_none());
        assert!(places[0].categories.is_empty());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let text = "{\"id\":\"p1\",\"name\":\"a\"}\n{\"id\":\"p1\",\"name\":\"b\"}\n";
        let err = parse_places(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("duplicate")), "{err}");
    }

    #[test]
    fn empty_file_gives_empty_list() {
        assert!(parse_places("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn malformed_json_reports_line_number() {
        let text = "{\"id\":\"p1\",\"name\":\"a\"}\n{not json}\n";
        match parse_places(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_coordinate_is_rejected() {
        let text = r#"{"id":"p1","name":"a","lat":91.0,"lon":0.0}"#;
        assert!(matches!(
            parse_places(text.as_bytes()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn labels_are_canonicalized() {
        let places = set(&["p1", "p2"]);
        let pairs = parse_labels("p2\tp1\t1\tcuration\n".as_bytes(), &places).unwrap();
        assert_eq!(
            pairs,
            vec![LabeledPair::new("p1", "p2", true, "curation").unwrap()]
        );
        assert_eq!(pairs[0].a, "p1");
    }

    #[test]
    fn self_pair_is_rejected() {
        let places = set(&["p1"]);
        assert!(matches!(
            parse_labels("p1\tp1\t0\tsrc\n".as_bytes(), &places),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn exact_repeats_are_deduplicated_but_conflicts_kept() {
        let places = set(&["p1", "p2"]);
        let text = "# header\np1\tp2\t1\ts\np2\tp1\t1\ts\np1\tp2\t0\ts\n";
        let pairs = parse_labels(text.as_bytes(), &places).unwrap();
        assert_eq!(pairs.len(), 2);
    }

    #[test]
    fn bad_label_value_and_unknown_id() {
        let places = set(&["p1", "p2"]);
        assert!(matches!(
            parse_labels("p1\tp2\t2\ts\n".as_bytes(), &places),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse_labels("p1\tp9\t1\ts\n".as_bytes(), &places),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn places_round_trip_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("places.jsonl");
        let places = vec![Place {
            id: "p1".into(),
            name: "Corner $ Deli".into(),
            address: Some("12 main st".into()),
            coordinate: Some(Coordinate::new(40.7, -73.9).unwrap()),
            categories: ["Grocery".to_string()].into_iter().collect(),
        }];
        write_places(&path, &places).unwrap();
        assert_eq!(load_places(&path).unwrap(), places);
    }
}
