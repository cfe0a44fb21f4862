//! Rendering and atomic file writes.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "MSPS_OUTPUT_DIR";

/// A rectangular table, every cell already formatted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Prepends the same leading columns to every row.
    pub fn with_prefix(mut self, prefix: &[(String, String)]) -> Self {
        let mut header: Vec<String> = prefix.iter().map(|(k, _)| k.clone()).collect();
        header.append(&mut self.header);
        self.header = header;
        for row in &mut self.rows {
            let mut full: Vec<String> = prefix.iter().map(|(_, v)| v.clone()).collect();
            full.append(row);
            *row = full;
        }
        self
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is utf-8")
    }
}

/// Shortest round-trip text for a float; non-finite values as `inf`/`nan`.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Pretty JSON with a trailing newline.
pub fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

pub fn json(value: &impl Serialize) -> Value {
    serde_json::to_value(value).expect("output serializes")
}

/// Where a rendered document goes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Destination {
    Stdout,
    File(PathBuf),
}

/// An explicit path wins; otherwise `default_name` inside the directory
/// named by [`OUTPUT_DIR_ENV`]; otherwise standard output.
pub fn destination(explicit: Option<&Path>, default_name: &str, env_dir: Option<&str>) -> Destination {
    match (explicit, env_dir) {
        (Some(p), _) => Destination::File(p.to_path_buf()),
        (None, Some(dir)) if !dir.is_empty() => Destination::File(Path::new(dir).join(default_name)),
        _ => Destination::Stdout,
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_text() {
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(1e-300), "1e-300");
        assert_eq!(num(2.0), "2.0");
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(opt_num(None), "");
    }

    #[test]
    fn prefix_columns() {
        let mut t = Table::new(["n", "p"]);
        t.push(vec!["0".into(), "0.5".into()]);
        let t = t.with_prefix(&[("m".into(), "3".into())]);
        assert_eq!(t.to_csv(), "m,n,p\n3,0,0.5\n");
    }

    #[test]
    fn destination_rules() {
        let p = Path::new("x.csv");
        assert_eq!(destination(Some(p), "d.csv", Some("out")), Destination::File(p.into()));
        assert_eq!(destination(None, "d.csv", Some("out")), Destination::File("out/d.csv".into()));
        assert_eq!(destination(None, "d.csv", Some("")), Destination::Stdout);
        assert_eq!(destination(None, "d.csv", None), Destination::Stdout);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.txt");
        write_atomic(&path, "one").unwrap();
        write_atomic(&path, "two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
