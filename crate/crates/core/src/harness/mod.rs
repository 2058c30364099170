//! Project manifests, Top-N evaluation and the mutation benchmark.

pub mod bench;
pub mod mutate;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blocks::{blockize, BlockError, BlockSet};
use crate::hdl::{elaborate, parse_sources, DesignAst, DesignHierarchy, ElabError, ParseError, SourceUnit};
use crate::logic::LogicVec;
use crate::sim::Inputs;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Manifest { path: String, message: String },
    #[error("file not found: {0}")]
    MissingFile(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Elab(#[from] ElabError),
    #[error(transparent)]
    Blocks(#[from] BlockError),
}

/// A value held on a top-level input over a cycle range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Drive {
    pub signal: String,
    pub value: u64,
    #[serde(default)]
    pub from: usize,
    /// Inclusive; open-ended when absent.
    #[serde(default)]
    pub to: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectManifest {
    pub sources: Vec<PathBuf>,
    pub top: String,
    pub clock: String,
    #[serde(default)]
    pub waveform: Option<PathBuf>,
    #[serde(default)]
    pub golden: Option<PathBuf>,
    #[serde(default)]
    pub report: Option<PathBuf>,
    /// `scripted:<file>`, `policy:<golden.vcd>` or `remote:<profile>`.
    #[serde(default)]
    pub backend: Option<String>,
    /// TOML file holding remote backend profiles.
    #[serde(default)]
    pub backend_config: Option<PathBuf>,
    /// Modules never mutated, such as instruction ROMs.
    #[serde(default)]
    pub exclude_mutation: Vec<String>,
    /// Signals compared against the golden run to detect a failure.
    #[serde(default)]
    pub observe: Vec<String>,
    /// Cycles before this one (reset, pipeline fill) are not compared.
    #[serde(default)]
    pub compare_from: usize,
    #[serde(default = "default_cycles")]
    pub cycles: usize,
    #[serde(default)]
    pub stimulus: Vec<Drive>,
    #[serde(skip)]
    pub root: PathBuf,
}

fn default_cycles() -> usize {
    100
}

impl ProjectManifest {
    /// Reads a TOML or JSON manifest. Relative paths are resolved against
    /// the manifest's directory and every named file must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|_| HarnessError::MissingFile(shown.clone()))?;
        let mut m: ProjectManifest = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| HarnessError::Manifest {
                path: shown.clone(),
                message: e.to_string(),
            })?
        } else {
            toml::from_str(&text).map_err(|e| HarnessError::Manifest {
                path: shown.clone(),
                message: e.to_string(),
            })?
        };
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.resolve()?;
        Ok(m)
    }

    fn resolve(&mut self) -> Result<(), HarnessError> {
        let root = self.root.clone();
        let fix = |p: &mut PathBuf| -> Result<(), HarnessError> {
            if p.is_relative() {
                *p = root.join(&*p);
            }
            if !p.exists() {
                return Err(HarnessError::MissingFile(p.display().to_string()));
            }
            Ok(())
        };
        for s in &mut self.sources {
            fix(s)?;
        }
        for p in [&mut self.waveform, &mut self.golden, &mut self.report, &mut self.backend_config]
            .into_iter()
            .flatten()
        {
            fix(p)?;
        }
        Ok(())
    }

    /// Source display name: the path relative to the manifest directory.
    pub fn display_name(&self, p: &Path) -> String {
        p.strip_prefix(&self.root).unwrap_or(p).to_string_lossy().replace('\\', "/")
    }

    pub fn read_sources(&self) -> Result<Vec<SourceUnit>, HarnessError> {
        self.sources
            .iter()
            .map(|p| {
                SourceUnit::read(p, self.display_name(p)).map_err(|_| HarnessError::MissingFile(p.display().to_string()))
            })
            .collect()
    }

    /// Per-cycle inputs from the `stimulus` list; undriven inputs are 0.
    pub fn stimulus_for(&self, design: &DesignHierarchy) -> Result<Vec<Inputs>, HarnessError> {
        let clock = design.lookup(&self.clock);
        let zeros: Inputs = design
            .primary_inputs()
            .into_iter()
            .filter(|s| Some(*s) != clock)
            .map(|s| (s, LogicVec::zeros(design.signal(s).width)))
            .collect();
        let mut out = Vec::with_capacity(self.cycles);
        for k in 0..self.cycles {
            let mut cyc = zeros.clone();
            for d in &self.stimulus {
                let s = design.lookup(&d.signal).ok_or_else(|| HarnessError::Manifest {
                    path: "stimulus".into(),
                    message: format!("unknown signal {}", d.signal),
                })?;
                if k >= d.from && d.to.is_none_or(|t| k <= t) {
                    cyc.retain(|(x, _)| *x != s);
                    cyc.push((s, LogicVec::from_u64(d.value, design.signal(s).width)));
                }
            }
            out.push(cyc);
        }
        Ok(out)
    }
}

/// A parsed, elaborated and blockized design.
pub struct Project {
    pub ast: DesignAst,
    pub design: DesignHierarchy,
    pub blocks: BlockSet,
}

impl Project {
    pub fn build(sources: &[SourceUnit], top: &str) -> Result<Project, HarnessError> {
        let ast = parse_sources(sources)?;
        let design = elaborate(&ast, top)?;
        let blocks = blockize(&design)?;
        Ok(Project { ast, design, blocks })
    }

    pub fn from_manifest(m: &ProjectManifest) -> Result<Project, HarnessError> {
        Project::build(&m.read_sources()?, &m.top)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub bug_id: String,
    pub ground_truth: Vec<(String, u32)>,
    pub ranked: Vec<String>,
    pub rank: Option<usize>,
}

/// 1-based rank of the first listed block holding a ground-truth line.
pub fn first_hit(ranked: &[String], blocks: &BlockSet, truth: &[(String, u32)]) -> Option<usize> {
    ranked.iter().position(|id| {
        blocks
            .by_id(id)
            .is_some_and(|b| truth.iter().any(|(f, l)| b.contains_line(f, *l)))
    })
    .map(|i| i + 1)
}

/// For each N, how many records have a hit within the first N positions.
pub fn evaluate_topn(records: &[EvalRecord], ns: &[usize]) -> Vec<(usize, usize)> {
    ns.iter()
        .map(|&n| (n, records.iter().filter(|r| r.rank.is_some_and(|k| k <= n)).count()))
        .collect()
}

/// Text histogram of block line counts.
pub fn size_histogram(sizes: &[usize]) -> String {
    const BUCKETS: [(usize, usize); 7] = [(1, 1), (2, 5), (6, 10), (11, 25), (26, 50), (51, 200), (201, usize::MAX)];
    let mut s = String::from("lines      blocks\n");
    for (lo, hi) in BUCKETS {
        let n = sizes.iter().filter(|x| **x >= lo && **x <= hi).count();
        let label = if hi == usize::MAX { format!("{lo}+") } else if lo == hi { format!("{lo}") } else { format!("{lo}-{hi}") };
        s.push_str(&format!("{label:<10} {n:>6} {}\n", "#".repeat(n.min(60))));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(rank: Option<usize>) -> EvalRecord {
        EvalRecord {
            bug_id: String::new(),
            ground_truth: vec![],
            ranked: vec![],
            rank,
        }
    }

    #[test]
    fn topn_counts() {
        let r = vec![rec(Some(1)), rec(Some(3)), rec(None), rec(Some(7))];
        assert_eq!(evaluate_topn(&r, &[1, 5, 10]), vec![(1, 1), (5, 2), (10, 3)]);
        let all = vec![rec(Some(1)); 4];
        assert_eq!(evaluate_topn(&all, &[1]), vec![(1, 4)]);
    }

    #[test]
    fn histogram_text() {
        let h = size_histogram(&[1, 1, 3, 300]);
        assert!(h.contains("1               2"));
        assert!(h.contains("201+            1"));
    }

    #[test]
    fn missing_source_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.toml");
        std::fs::write(&p, "sources = [\"nope.sv\"]\ntop = \"t\"\nclock = \"t.clk\"\n").unwrap();
        match ProjectManifest::load(&p) {
            Err(HarnessError::MissingFile(f)) => assert!(f.ends_with("nope.sv")),
            other => panic!("{other:?}"),
        }
    }
}
