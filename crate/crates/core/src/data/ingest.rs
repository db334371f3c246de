//! CSV ingestion of raw interaction logs.
//!
//! Expected header: `student_id,question_id,concept_ids,correct,order`, with
//! `concept_ids` joined by `;`. Extra columns are ignored.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// One answered question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub student_id: String,
    pub question_id: String,
    /// Non-empty, duplicate-free, in file order.
    pub concept_ids: Vec<String>,
    pub response: u8,
    pub order_key: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentLog {
    pub student_id: String,
    /// Sorted by `order_key`, ties kept in input order.
    pub interactions: Vec<Interaction>,
}

/// Interactions grouped by student, students in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionLog {
    pub students: Vec<StudentLog>,
}

impl InteractionLog {
    pub fn is_empty(&self) -> bool {
        self.students.iter().all(|s| s.interactions.is_empty())
    }

    pub fn num_interactions(&self) -> usize {
        self.students.iter().map(|s| s.interactions.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Interaction> {
        self.students.iter().flat_map(|s| s.interactions.iter())
    }

    /// Groups loose interactions by student and sorts each group by order key.
    pub fn from_interactions(items: impl IntoIterator<Item = Interaction>) -> Self {
        let mut position: HashMap<String, usize> = HashMap::new();
        let mut students: Vec<StudentLog> = Vec::new();
        for it in items {
            let idx = *position.entry(it.student_id.clone()).or_insert_with(|| {
                students.push(StudentLog {
                    student_id: it.student_id.clone(),
                    interactions: Vec::new(),
                });
                students.len() - 1
            });
            students[idx].interactions.push(it);
        }
        for s in &mut students {
            // sort_by_key is stable.
            s.interactions.sort_by_key(|i| i.order_key);
        }
        Self { students }
    }
}

/// A rejected data row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowIssue {
    /// 1-based line in the file, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestReport {
    pub log: InteractionLog,
    pub skipped: Vec<RowIssue>,
}

impl IngestReport {
    pub fn skipped_rows(&self) -> usize {
        self.skipped.len()
    }
}

const COLUMNS: [&str; 5] = ["student_id", "question_id", "concept_ids", "correct", "order"];

fn parse_row(record: &csv::StringRecord, cols: &[usize; 5]) -> Result<Interaction, String> {
    let field = |i: usize| record.get(cols[i]).map(str::trim).unwrap_or("");
    let student_id = field(0);
    let question_id = field(1);
    if student_id.is_empty() {
        return Err("empty student_id".into());
    }
    if question_id.is_empty() {
        return Err("empty question_id".into());
    }
    let mut concept_ids: Vec<String> = Vec::new();
    for c in field(2).split(';').map(str::trim).filter(|c| !c.is_empty()) {
        if !concept_ids.iter().any(|x| x == c) {
            concept_ids.push(c.to_string());
        }
    }
    if concept_ids.is_empty() {
        return Err("no concept ids".into());
    }
    let response = match field(3) {
        "0" => 0,
        "1" => 1,
        other => return Err(format!("correct must be 0 or 1, got `{other}`")),
    };
    let order_key = field(4)
        .parse::<i64>()
        .map_err(|_| format!("order must be an integer, got `{}`", field(4)))?;
    Ok(Interaction {
        student_id: student_id.to_string(),
        question_id: question_id.to_string(),
        concept_ids,
        response,
        order_key,
    })
}

/// Reads an interaction CSV. Rows that fail to parse are skipped and listed in
/// the report; a missing required column is an error.
pub fn ingest_interactions<R: Read>(reader: R) -> Result<IngestReport, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::Headers)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut cols = [0usize; 5];
    for (slot, name) in cols.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or(DataError::MissingColumn(name))?;
    }

    let mut items = Vec::new();
    let mut skipped = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = rdr.position().line();
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => match parse_row(&record, &cols) {
                Ok(it) => items.push(it),
                Err(reason) => skipped.push(RowIssue { line, reason }),
            },
            Err(e) if matches!(e.kind(), csv::ErrorKind::Utf8 { .. }) => skipped.push(RowIssue {
                line,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e.into()),
        }
    }
    if !skipped.is_empty() {
        log::warn!("skipped {} malformed row(s)", skipped.len());
    }
    Ok(IngestReport {
        log: InteractionLog::from_interactions(items),
        skipped,
    })
}

pub fn ingest_file(path: &Path) -> Result<IngestReport, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ingest_interactions(std::io::BufReader::new(file))
}
