//! Long-format CSV dataset files with a JSON metadata sidecar.
//!
//! `data.csv` holds one row per alternative with columns
//! `individual,occasion,alternative,chosen,<fixed...>,<random...>`; indices
//! are 1-based and `chosen` is 0/1. `data.json` (same stem) records the
//! schema version, `J`, the fixed/random column partition and, for
//! synthetic data, the scenario settings and ground truth.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ChoiceDataset, ScenarioConfig, TruePopulation};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

const KEY_COLUMNS: [&str; 4] = ["individual", "occasion", "alternative", "chosen"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema_version: u32,
    pub num_alternatives: usize,
    pub fixed_columns: Vec<String>,
    pub random_columns: Vec<String>,
    /// Restores trailing individuals without occasions, which have no rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_individuals: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruePopulation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub dataset: ChoiceDataset,
    pub meta: DatasetMeta,
}

impl DatasetFile {
    pub fn truth(&self) -> Result<&TruePopulation> {
        self.meta.truth.as_ref().ok_or(Error::TruthUnavailable)
    }
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn save_dataset(
    path: &Path,
    dataset: &ChoiceDataset,
    scenario: Option<&ScenarioConfig>,
    truth: Option<&TruePopulation>,
) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));

    let mut header: Vec<&str> = KEY_COLUMNS.to_vec();
    header.extend(dataset.fixed_names().iter().map(String::as_str));
    header.extend(dataset.random_names().iter().map(String::as_str));
    w.write_record(&header)?;

    let j = dataset.num_alternatives();
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for (n, ind) in dataset.individuals().enumerate() {
        for (t, occ) in ind.occasions().enumerate() {
            let (l, k) = (occ.num_fixed(), occ.num_random());
            for alt in 0..j {
                record.clear();
                record.push((n + 1).to_string());
                record.push((t + 1).to_string());
                record.push((alt + 1).to_string());
                record.push(u8::from(occ.chosen == alt).to_string());
                record.extend(occ.fixed[alt * l..(alt + 1) * l].iter().map(|x| x.to_string()));
                record.extend(occ.random[alt * k..(alt + 1) * k].iter().map(|x| x.to_string()));
                w.write_record(&record)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let meta = DatasetMeta {
        schema_version: SCHEMA_VERSION,
        num_alternatives: j,
        fixed_columns: dataset.fixed_names().to_vec(),
        random_columns: dataset.random_names().to_vec(),
        num_individuals: Some(dataset.num_individuals()),
        scenario: scenario.cloned(),
        truth: truth.cloned(),
    };
    let side = sidecar_path(path);
    let file = File::create(&side).map_err(|e| Error::io(&side, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &meta)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<DatasetFile> {
    let side = sidecar_path(path);
    let file = File::open(&side).map_err(|e| Error::io(&side, e))?;
    let meta: DatasetMeta = serde_json::from_reader(BufReader::new(file))?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(Error::schema(
            &side,
            format!("schema version {} (expected {SCHEMA_VERSION})", meta.schema_version),
        ));
    }
    let j = meta.num_alternatives;
    if j == 0 {
        return Err(Error::schema(&side, "num_alternatives must be positive"));
    }
    let (l, k) = (meta.fixed_columns.len(), meta.random_columns.len());

    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let expected: Vec<&str> = KEY_COLUMNS
        .iter()
        .copied()
        .chain(meta.fixed_columns.iter().map(String::as_str))
        .chain(meta.random_columns.iter().map(String::as_str))
        .collect();
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::schema(path, "CSV header does not match the metadata column partition"));
    }

    let mut fixed = Vec::new();
    let mut random = Vec::new();
    let mut choices = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut chosen_in_occasion: Option<usize> = None;
    let mut pos = 0usize;
    let mut key = (0usize, 0usize);

    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = line + 2;
        let int = |i: usize| -> Result<usize> {
            rec[i]
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::schema(path, format!("row {row}: `{}` is not an integer", KEY_COLUMNS[i])))
        };
        let (ind, occ, alt, flag) = (int(0)?, int(1)?, int(2)?, int(3)?);

        if pos == 0 {
            if ind == counts.len() {
                if occ != counts[ind - 1] + 1 {
                    return Err(Error::schema(path, format!("row {row}: occasions must be consecutive")));
                }
                counts[ind - 1] += 1;
            } else if ind > counts.len() {
                if occ != 1 {
                    return Err(Error::schema(path, format!("row {row}: first occasion must be 1")));
                }
                // Skipped ids are individuals without occasions.
                counts.resize(ind - 1, 0);
                counts.push(1);
            } else {
                return Err(Error::schema(path, format!("row {row}: individuals must be in increasing order")));
            }
            key = (ind, occ);
            chosen_in_occasion = None;
        } else if (ind, occ) != key {
            return Err(Error::schema(
                path,
                format!("row {row}: occasion has {pos} alternatives, expected J = {j}"),
            ));
        }
        if alt != pos + 1 {
            return Err(Error::schema(path, format!("row {row}: alternative {alt} out of sequence")));
        }
        match flag {
            0 => {}
            1 if chosen_in_occasion.is_none() => chosen_in_occasion = Some(pos),
            1 => return Err(Error::schema(path, format!("row {row}: second chosen alternative"))),
            _ => return Err(Error::schema(path, format!("row {row}: chosen flag must be 0 or 1"))),
        }
        for (i, field) in rec.iter().enumerate().skip(KEY_COLUMNS.len()) {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::schema(path, format!("row {row}: `{}` is not a number", expected[i])))?;
            if i < KEY_COLUMNS.len() + l {
                fixed.push(x);
            } else {
                random.push(x);
            }
        }
        pos += 1;
        if pos == j {
            let c = chosen_in_occasion
                .ok_or_else(|| Error::schema(path, format!("row {row}: occasion without a chosen alternative")))?;
            choices.push(c);
            pos = 0;
        }
    }
    if pos != 0 {
        return Err(Error::schema(
            path,
            format!("final occasion has {pos} alternatives, expected J = {j}"),
        ));
    }
    debug_assert_eq!(random.len(), choices.len() * j * k);
    if let Some(n) = meta.num_individuals {
        if counts.len() > n {
            return Err(Error::schema(
                path,
                format!("{} individuals in the CSV, metadata declares {n}", counts.len()),
            ));
        }
        counts.resize(n, 0);
    }

    let dataset = ChoiceDataset::new(
        j,
        meta.fixed_columns.clone(),
        meta.random_columns.clone(),
        &counts,
        fixed,
        random,
        choices,
    )
    .map_err(|e| Error::schema(path, e.to_string()))?;
    Ok(DatasetFile { dataset, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_true_population, generate_dataset};

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let cfg = ScenarioConfig::new(3, 12, 3, 8).unwrap();
        let pop = build_true_population(&cfg).unwrap();
        let ds = generate_dataset(&cfg, &pop).unwrap();
        save_dataset(&path, &ds, Some(&cfg), Some(&pop)).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back.dataset, ds);
        assert_eq!(back.meta.truth.as_ref(), Some(&pop));
        assert_eq!(back.meta.scenario.as_ref(), Some(&cfg));
    }

    #[test]
    fn inconsistent_alternative_count_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "individual,occasion,alternative,chosen,x\n1,1,1,1,0.5\n1,1,2,0,0.1\n1,2,1,0,0.3\n1,2,2,0,0.2\n1,2,3,1,0.0\n",
        )
        .unwrap();
        std::fs::write(
            sidecar_path(&path),
            r#"{"schema_version":1,"num_alternatives":2,"fixed_columns":[],"random_columns":["x"]}"#,
        )
        .unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Schema { .. })));
    }

    #[test]
    fn missing_truth_loads_but_reports_unavailable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nt.csv");
        std::fs::write(&path, "individual,occasion,alternative,chosen,x\n1,1,1,0,0.5\n1,1,2,1,-0.5\n").unwrap();
        std::fs::write(
            sidecar_path(&path),
            r#"{"schema_version":1,"num_alternatives":2,"fixed_columns":[],"random_columns":["x"]}"#,
        )
        .unwrap();
        let f = load_dataset(&path).unwrap();
        assert_eq!(f.dataset.choices(), &[1]);
        assert!(matches!(f.truth(), Err(Error::TruthUnavailable)));
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        std::fs::write(&path, "individual,occasion,alternative,chosen,x\n").unwrap();
        std::fs::write(
            sidecar_path(&path),
            r#"{"schema_version":99,"num_alternatives":2,"fixed_columns":[],"random_columns":["x"]}"#,
        )
        .unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Schema { .. })));
    }
}
