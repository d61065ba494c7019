//! CSV documents and where they go.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const RESULT_HEADER: &str = "engine,algorithm,s,N,rep,excess_risk,bias,variance,stderr,wall_time_ms";

/// Round-trip exact float: 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub engine: &'static str,
    pub algorithm: &'static str,
    pub s: usize,
    pub n: usize,
    /// Repetition index, or `bound` / `exact` / `mean` for aggregates.
    pub rep: String,
    pub excess_risk: f64,
    pub bias: Option<f64>,
    pub variance: Option<f64>,
    pub stderr: Option<f64>,
    pub wall_time_ms: f64,
}

impl ResultRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.engine,
            self.algorithm,
            self.s,
            self.n,
            self.rep,
            num(self.excess_risk),
            opt(self.bias),
            opt(self.variance),
            opt(self.stderr),
            num(self.wall_time_ms)
        )
    }
}

/// A named CSV body written as `<name>.csv` or printed to stdout.
#[derive(Debug, Clone)]
pub struct Document {
    pub name: String,
    pub body: String,
}

impl Document {
    /// Starts a document with the resolved config as a `#` comment block.
    pub fn new(name: impl Into<String>, title: &str, cfg: Option<&ExperimentConfig>) -> Self {
        let mut body = format!("# asgd {title}\n");
        if let Some(cfg) = cfg {
            for line in cfg.to_toml().lines() {
                let _ = writeln!(body, "# {line}");
            }
        }
        Self { name: name.into(), body }
    }

    pub fn line(&mut self, line: impl AsRef<str>) {
        self.body.push_str(line.as_ref());
        self.body.push('\n');
    }

    pub fn results(name: impl Into<String>, title: &str, cfg: &ExperimentConfig, rows: &[ResultRow]) -> Self {
        let mut doc = Self::new(name, title, Some(cfg));
        doc.line(RESULT_HEADER);
        for r in rows {
            doc.line(r.csv());
        }
        doc
    }
}

pub fn emit(docs: &[Document], out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for d in docs {
                std::fs::write(dir.join(format!("{}.csv", d.name)), &d.body)?;
            }
        }
        None => {
            for (i, d) in docs.iter().enumerate() {
                if i > 0 {
                    println!();
                }
                print!("{}", d.body);
            }
        }
    }
    Ok(())
}
