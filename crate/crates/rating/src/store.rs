//! Served cases and the append-only ratings file.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use ctm_core::outputs::SelectionRecord;
use ctm_core::provenance::short_hash;
use ctm_core::ratings::{parse_ratings, RatingError, RatingRecord};

use crate::ServiceError;

/// A case as raters see it: texts only, model identity replaced by an alias.
#[derive(Debug, Clone)]
pub struct ServedCase {
    pub case_id: String,
    pub model_id: String,
    pub alias: String,
    pub reference: String,
    pub candidate: String,
}

pub fn model_alias(model_id: &str) -> String {
    format!("m{}", &short_hash(model_id.as_bytes())[..8])
}

pub struct Store {
    cases: Vec<ServedCase>,
    index: HashMap<(String, String), usize>,
    path: PathBuf,
    writer: Mutex<File>,
    records: RwLock<Vec<RatingRecord>>,
}

impl Store {
    /// Opens (or creates) the ratings file and replays its records.
    pub fn open(selection: Vec<SelectionRecord>, ratings_path: &Path) -> Result<Self, ServiceError> {
        let mut aliases: BTreeMap<String, String> = BTreeMap::new();
        let mut cases = Vec::with_capacity(selection.len());
        let mut index = HashMap::new();
        for s in selection {
            let alias = model_alias(&s.case.model_id);
            if let Some(other) = aliases.insert(alias.clone(), s.case.model_id.clone()) {
                if other != s.case.model_id {
                    return Err(ServiceError::Selection(format!(
                        "models {other} and {} share alias {alias}",
                        s.case.model_id
                    )));
                }
            }
            let key = (s.case.case_id.clone(), alias.clone());
            if index.insert(key, cases.len()).is_some() {
                return Err(ServiceError::Selection(format!(
                    "case {} / {} listed twice",
                    s.case.case_id, s.case.model_id
                )));
            }
            cases.push(ServedCase {
                case_id: s.case.case_id,
                model_id: s.case.model_id,
                alias,
                reference: s.reference,
                candidate: s.candidate,
            });
        }
        let records = if ratings_path.exists() {
            parse_ratings(File::open(ratings_path).map_err(RatingError::from)?)?
        } else {
            Vec::new()
        };
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(ratings_path)
            .map_err(RatingError::from)?;
        Ok(Store {
            cases,
            index,
            path: ratings_path.to_path_buf(),
            writer: Mutex::new(writer),
            records: RwLock::new(records),
        })
    }

    pub fn cases(&self) -> &[ServedCase] {
        &self.cases
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn lookup(&self, case_id: &str, alias: &str) -> Option<&ServedCase> {
        self.index
            .get(&(case_id.to_string(), alias.to_string()))
            .map(|&i| &self.cases[i])
    }

    pub fn records(&self) -> Vec<RatingRecord> {
        self.records.read().expect("records lock").clone()
    }

    /// Keys of served cases this rater has rated.
    pub fn rated_by(&self, rater_id: &str) -> HashSet<(String, String)> {
        self.records
            .read()
            .expect("records lock")
            .iter()
            .filter(|r| r.rater_id == rater_id)
            .map(|r| (r.case_id.clone(), r.model_id.clone()))
            .collect()
    }

    /// Appends one line and syncs it to disk before the record becomes visible.
    pub fn append(&self, record: RatingRecord) -> Result<(), RatingError> {
        let mut file = self.writer.lock().expect("writer lock");
        let mut line = record.to_line();
        line.push('\n');
        file.write_all(line.as_bytes())?;
        file.sync_data()?;
        self.records.write().expect("records lock").push(record);
        Ok(())
    }
}
