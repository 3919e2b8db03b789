//! Line-delimited JSON dataset files: one `RewriteInstance` object per line.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use super::RewriteInstance;
use crate::error::{Error, Result};

const FIELDS: [&str; 8] = [
    "id",
    "task",
    "prompt",
    "initial",
    "critiques",
    "requirements",
    "instruction_text",
    "gold",
];

pub fn write_dataset<W: Write>(mut w: W, instances: &[RewriteInstance]) -> Result<()> {
    for inst in instances {
        let line = serde_json::to_string(inst).map_err(|e| Error::Serde(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn save_dataset(instances: &[RewriteInstance], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut buf = Vec::new();
    write_dataset(&mut buf, instances)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn field<T: DeserializeOwned>(obj: &mut Map<String, Value>, name: &str, line: usize) -> Result<T> {
    let v = obj.remove(name).ok_or_else(|| Error::Parse {
        line,
        field: name.to_owned(),
        message: "missing field".into(),
    })?;
    serde_json::from_value(v).map_err(|e| Error::Parse {
        line,
        field: name.to_owned(),
        message: e.to_string(),
    })
}

fn parse_line(text: &str, line: usize) -> Result<RewriteInstance> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        field: "<record>".into(),
        message: e.to_string(),
    })?;
    let Value::Object(mut obj) = value else {
        return Err(Error::Parse {
            line,
            field: "<record>".into(),
            message: "expected a JSON object".into(),
        });
    };
    let inst = RewriteInstance {
        id: field(&mut obj, FIELDS[0], line)?,
        task: field(&mut obj, FIELDS[1], line)?,
        prompt: field(&mut obj, FIELDS[2], line)?,
        initial: field(&mut obj, FIELDS[3], line)?,
        critiques: field(&mut obj, FIELDS[4], line)?,
        requirements: field(&mut obj, FIELDS[5], line)?,
        instruction_text: field(&mut obj, FIELDS[6], line)?,
        gold: field(&mut obj, FIELDS[7], line)?,
    };
    if let Some(extra) = obj.keys().next() {
        return Err(Error::Parse {
            line,
            field: extra.clone(),
            message: "unknown field".into(),
        });
    }
    Ok(inst)
}

/// Reads records until EOF. Blank lines are skipped; line numbers are 1-based.
pub fn read_dataset<R: Read>(r: R) -> Result<Vec<RewriteInstance>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(&line, i + 1)?);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<RewriteInstance>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(f)
}
