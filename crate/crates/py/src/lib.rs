//! Python bindings. Results cross the boundary as JSON strings.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rtlfl_core::agent::backend::ScriptedBackend;
use rtlfl_core::agent::{run_localization, Budget, Session, TestReport};
use rtlfl_core::coverage::CoverageSource;
use rtlfl_core::harness::{Project, ProjectManifest};
use rtlfl_core::slice::{build_exec_path, ExecPath, SliceLimits};
use rtlfl_core::wave::Waveform;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

struct Loaded {
    manifest: ProjectManifest,
    project: Project,
}

impl Loaded {
    fn open(manifest: &str) -> PyResult<Loaded> {
        let manifest = ProjectManifest::load(manifest).map_err(err)?;
        let project = Project::from_manifest(&manifest).map_err(err)?;
        Ok(Loaded { manifest, project })
    }

    fn wave(&self) -> PyResult<Waveform> {
        let p = self.manifest.waveform.as_ref().ok_or_else(|| err("manifest has no waveform"))?;
        Waveform::load(p, &self.manifest.clock).map_err(err)
    }

    fn slice(&self, wave: &Waveform, signal: &str, cycle: i64) -> PyResult<ExecPath> {
        let d = &self.project.design;
        let s = d.lookup(signal).ok_or_else(|| err(format!("unknown signal {signal}")))?;
        build_exec_path(d, &self.project.blocks, s, cycle, wave, &CoverageSource::Replay, SliceLimits::default()).map_err(err)
    }
}

/// Code blocks of the manifest's design as a JSON array.
#[pyfunction]
fn blockize(manifest: &str) -> PyResult<String> {
    let l = Loaded::open(manifest)?;
    Ok(l.project.blocks.to_json(&l.project.design).to_string())
}

/// Backward slice from `signal` at `cycle` over the manifest's waveform.
#[pyfunction]
fn slice(manifest: &str, signal: &str, cycle: i64) -> PyResult<String> {
    let l = Loaded::open(manifest)?;
    let w = l.wave()?;
    Ok(l.slice(&w, signal, cycle)?.to_json(&l.project.blocks).to_string())
}

/// Replays a scripted backend against the manifest's failure report and
/// returns the ranking. `script` is resolved against the manifest directory.
#[pyfunction]
#[pyo3(signature = (manifest, script, max_tool_calls = 60))]
fn localize(manifest: &str, script: &str, max_tool_calls: usize) -> PyResult<String> {
    let l = Loaded::open(manifest)?;
    let w = l.wave()?;
    let rp = l.manifest.report.as_ref().ok_or_else(|| err("manifest has no report"))?;
    let text = std::fs::read_to_string(rp).map_err(|e| err(format!("{}: {e}", rp.display())))?;
    let report: TestReport = serde_json::from_str(&text).map_err(err)?;
    let path = l.slice(&w, &report.signal, report.cycle)?;
    let session = Session {
        design: &l.project.design,
        blocks: &l.project.blocks,
        path: &path,
        wave: &w,
        report: &report,
    };
    let root = Path::new(manifest).parent().map(Path::to_path_buf).unwrap_or_default();
    let sp: PathBuf = root.join(script);
    let mut b = ScriptedBackend::load(&sp).map_err(err)?;
    let budget = Budget { max_tool_calls, ..Budget::default() };
    let r = run_localization(&session, &mut b, budget).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    serde_json::to_string(&r.ranking).map_err(err)
}

/// 4-state value of `signal` at `cycle` as a binary string, MSB first.
#[pyfunction]
fn value_at(vcd: &str, clock: &str, signal: &str, cycle: i64) -> PyResult<String> {
    let w = Waveform::load(vcd, clock).map_err(err)?;
    Ok(w.value_at(signal, cycle).map_err(err)?.to_bin_string())
}

#[pymodule]
fn rtlfl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(blockize, m)?)?;
    m.add_function(wrap_pyfunction!(slice, m)?)?;
    m.add_function(wrap_pyfunction!(localize, m)?)?;
    m.add_function(wrap_pyfunction!(value_at, m)?)?;
    Ok(())
}
