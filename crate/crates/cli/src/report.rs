use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Writes artifacts into one output directory. Every file starts with the
/// config hash; nothing time-dependent is ever written.
pub struct Artifacts {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: &Path, hash: &str) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), hash: hash.to_string(), written: Vec::new() })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn put(&mut self, name: &str, body: String) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    /// `key: value` text.
    pub fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        self.put(name, format!("config_sha256: {}\n{body}", self.hash))
    }

    /// CSV, with the hash as a leading comment line.
    pub fn csv(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        self.put(name, format!("# config_sha256={}\n{body}", self.hash))
    }
}

/// A CSV table; with no rows it is just the header.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.header.len(), "row width");
        self.rows.push(cells);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

pub fn num(x: f64) -> String {
    format!("{x:.12e}")
}

/// Row-major CSV block of a matrix under a `# name` line.
pub fn matrix_block(name: &str, m: &twistprop::linalg::RMat) -> String {
    let mut s = format!("# {name}\n");
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| num(m[(i, j)])).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

pub fn vec_str(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
    format!("[{}]", parts.join(";"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(Table::new(&["t", "norm"]).to_csv(), "t,norm\n");
    }

    #[test]
    fn matrix_blocks_are_row_major() {
        let m = twistprop::linalg::RMat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = matrix_block("R", &m);
        let lines: Vec<&str> = b.lines().collect();
        assert_eq!(lines[0], "# R");
        assert!(lines[1].starts_with("1.000000000000e0,2.0"));
        assert!(lines[2].starts_with("3.000000000000e0,4.0"));
    }
}
