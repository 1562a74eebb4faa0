//! JSON reports with attached numeric tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sle_core::invariants;
use sle_core::table::write_table;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub header: Vec<String>,
    #[serde(deserialize_with = "rows_with_nan")]
    pub rows: Vec<Vec<f64>>,
}

/// JSON has no NaN; serde_json writes it as `null`, so read `null` back as NaN.
fn rows_with_nan<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
    let raw: Vec<Vec<Option<f64>>> = Deserialize::deserialize(d)?;
    Ok(raw.into_iter().map(|r| r.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect()).collect())
}

impl Table {
    pub fn new(header: &[&str], rows: Vec<Vec<f64>>) -> Table {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows }
    }

    pub fn write_csv(&self, path: &Path) -> anyhow::Result<()> {
        let h: Vec<&str> = self.header.iter().map(String::as_str).collect();
        let f = fs::File::create(path)?;
        write_table(std::io::BufWriter::new(f), &h, self.rows.iter().cloned())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub version: String,
    /// Seconds since the Unix epoch. The only field that differs between
    /// reruns of the same configuration.
    pub timestamp: u64,
    pub config: BTreeMap<String, String>,
    pub pass: bool,
    pub result: Value,
    #[serde(default)]
    pub tables: BTreeMap<String, Table>,
    #[serde(default)]
    pub invariants: Value,
}

impl Report {
    pub fn new(command: &str, config: &BTreeMap<String, String>, pass: bool, result: Value) -> Report {
        let checks_ok = invariants::total_violations() == 0;
        Report {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            config: config.clone(),
            pass: pass && checks_ok,
            result,
            tables: BTreeMap::new(),
            invariants: serde_json::to_value(invariants::snapshot()).unwrap_or(Value::Null),
        }
    }

    pub fn with_table(mut self, name: &str, table: Table) -> Report {
        self.tables.insert(name.to_string(), table);
        self
    }

    /// Writes `<dir>/<stem>.json` and one `<dir>/<stem>_<table>.csv` per
    /// table. Returns the JSON path.
    pub fn save(&self, dir: &Path, stem: &str) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        for (name, t) in &self.tables {
            t.write_csv(&dir.join(format!("{stem}_{name}.csv")))?;
        }
        let path = dir.join(format!("{stem}.json"));
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BundleIndex {
    pub pass: usize,
    pub fail: usize,
    pub entries: Vec<BundleEntry>,
    pub unreadable: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleEntry {
    pub file: String,
    pub command: String,
    pub pass: bool,
    pub tables: Vec<String>,
}

pub const INDEX_NAME: &str = "index.json";

/// Reads every `*.json` report in `dir` (except the index), writes their
/// tables as CSV under `dir/tables/` and the summary to `dir/index.json`.
pub fn bundle(dir: &Path) -> anyhow::Result<BundleIndex> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != INDEX_NAME))
        .collect();
    files.sort();
    let mut index = BundleIndex::default();
    let tables_dir = dir.join("tables");
    for p in files {
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        let parsed: Option<Report> = fs::read_to_string(&p).ok().and_then(|s| serde_json::from_str(&s).ok());
        let Some(rep) = parsed else {
            index.unreadable.push(name);
            continue;
        };
        let stem = p.file_stem().unwrap().to_string_lossy().into_owned();
        let mut written = Vec::new();
        for (t, table) in &rep.tables {
            fs::create_dir_all(&tables_dir)?;
            let csv = format!("{stem}_{t}.csv");
            table.write_csv(&tables_dir.join(&csv))?;
            written.push(format!("tables/{csv}"));
        }
        if rep.pass {
            index.pass += 1;
        } else {
            index.fail += 1;
        }
        index.entries.push(BundleEntry { file: name, command: rep.command, pass: rep.pass, tables: written });
    }
    fs::write(dir.join(INDEX_NAME), serde_json::to_string_pretty(&index)?)?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_cells_survive_a_round_trip() {
        let rep = Report::new("x", &BTreeMap::new(), true, Value::Null)
            .with_table("t", Table::new(&["a", "b"], vec![vec![1.0, f64::NAN]]));
        let back: Report = serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
        let row = &back.tables["t"].rows[0];
        assert_eq!(row[0], 1.0);
        assert!(row[1].is_nan());
    }
}
