//! Run manifests and artifact writers.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Value,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn start(subcommand: &str, config: &impl Serialize, seed: Option<u64>) -> Self {
        let now = unix_ms();
        RunManifest {
            subcommand: subcommand.into(),
            config: serde_json::to_value(config).expect("configs serialize"),
            version: env!("CARGO_PKG_VERSION"),
            seed,
            started_unix_ms: now,
            finished_unix_ms: now,
            outputs: Vec::new(),
        }
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn finish(&mut self) {
        self.finished_unix_ms = unix_ms();
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("manifest serializes")
    }
}

fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// `printf("%.17g")`: 17 significant digits, trailing zeros dropped,
/// exponent form outside `1e-4 <= |x| < 1e17`.
pub fn g17(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (16 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}"))
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// A CSV artifact whose first line is `# manifest <json>`.
pub struct Csv {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &[&'static str]) -> Self {
        Csv {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert!(self.header.is_empty() || cells.len() == self.header.len());
        self.rows.push(cells);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn render(&self, manifest: &RunManifest) -> String {
        let mut out = format!("# manifest {}\n", manifest.to_json());
        if !self.header.is_empty() {
            out.push_str(&self.header.join(","));
            out.push('\n');
        }
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// Writes to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&PathBuf>, text: &str) -> io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_matches_printf() {
        let cases = [
            (0.1, "0.10000000000000001"),
            (1.0, "1"),
            (4.294871794871795, "4.2948717948717947"),
            (1e-5, "1.0000000000000001e-05"),
            (123456.0, "123456"),
            (1e17, "1e+17"),
            (-2.5, "-2.5"),
            (0.0, "0"),
            (0.0001, "0.0001"),
            (6.02214076e23, "6.0221407599999999e+23"),
        ];
        for (x, want) in cases {
            assert_eq!(g17(x), want, "{x}");
        }
    }

    #[test]
    fn g17_round_trips() {
        for x in [
            std::f64::consts::PI,
            1.0 / 3.0,
            2f64.powi(-40),
            12345.678e10,
            f64::MAX,
            f64::MIN_POSITIVE,
        ] {
            assert_eq!(g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_layout() {
        let m = RunManifest::start("oracle", &serde_json::json!({"n": 2}), Some(3));
        let mut c = Csv::new(&["a", "b"]);
        c.row(vec!["1".into(), "2".into()]);
        let text = c.render(&m);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# manifest {"));
        assert_eq!(&lines[1..], ["a,b", "1,2"]);
    }
}
