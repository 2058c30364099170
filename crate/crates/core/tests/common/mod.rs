#![allow(dead_code)]

pub mod oracles;

use std::path::PathBuf;

use rtlfl_core::harness::{Project, ProjectManifest};
use rtlfl_core::wave::Waveform;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub struct Fixture {
    pub manifest: ProjectManifest,
    pub project: Project,
}

impl Fixture {
    pub fn load(rel: &str) -> Fixture {
        let manifest = ProjectManifest::load(fixtures().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"));
        let project = Project::from_manifest(&manifest).unwrap_or_else(|e| panic!("{rel}: {e}"));
        Fixture { manifest, project }
    }

    pub fn wave(&self) -> Waveform {
        Waveform::load(self.manifest.waveform.as_ref().expect("fixture has a waveform"), &self.manifest.clock).unwrap()
    }

    pub fn sig(&self, name: &str) -> usize {
        self.project.design.lookup(name).unwrap_or_else(|| panic!("no signal {name}"))
    }

    pub fn block(&self, id: &str) -> usize {
        self.project
            .blocks
            .blocks
            .iter()
            .position(|b| b.id == id)
            .unwrap_or_else(|| panic!("no block {id}"))
    }
}

/// Manifests of the small-design corpus, sorted by name.
pub fn corpus() -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(fixtures().join("corpus"))
        .unwrap()
        .map(|e| format!("corpus/{}/manifest.toml", e.unwrap().file_name().to_string_lossy()))
        .collect();
    v.sort();
    v
}

/// Simulates the fixture under seeded random stimulus.
pub fn random_run(f: &Fixture, seed: u64, cycles: usize) -> (rtlfl_core::sim::SimRun, Waveform) {
    let d = &f.project.design;
    let stim = rtlfl_core::sim::random_stimulus(d, &f.manifest.clock, seed, cycles);
    let run = rtlfl_core::harness::bench::simulate(d, &f.manifest.clock, &stim).unwrap();
    let w = Waveform::parse(&run.vcd, &f.manifest.clock).unwrap();
    (run, w)
}

/// Line disjointness, line coverage and the driver index, checked from the
/// elaborated statements and connections rather than from block internals.
pub fn block_invariants(d: &rtlfl_core::hdl::DesignHierarchy, bs: &rtlfl_core::blocks::BlockSet) -> Result<(), String> {
    use std::collections::{BTreeMap, BTreeSet};
    let mut owner: BTreeMap<(usize, &str, u32), usize> = BTreeMap::new();
    for b in &bs.blocks {
        for l in &b.lines {
            if let Some(o) = owner.insert((b.instance, b.file.as_str(), *l), b.index) {
                return Err(format!("{}:{} in blocks {} and {}", b.file, l, bs.blocks[o].id, b.id));
            }
        }
    }
    for st in &d.statements {
        for l in st.line_span.0..=st.line_span.1 {
            if !owner.contains_key(&(st.instance, st.file.as_str(), l)) {
                return Err(format!("statement line {}:{} in no block", st.file, l));
            }
        }
    }
    for c in d.connections.iter().filter(|c| c.binding.is_some()) {
        if !owner.contains_key(&(c.parent, c.file.as_str(), c.line)) {
            return Err(format!("connection line {}:{} in no block", c.file, c.line));
        }
    }
    let mut writers: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for b in &bs.blocks {
        for s in &b.v_out {
            writers.entry(*s).or_default().push(b.index);
        }
    }
    for (s, w) in &writers {
        if w.len() != 1 {
            return Err(format!("{} written by {} blocks", d.name(*s), w.len()));
        }
        if bs.driver_index.get(s) != Some(&w[0]) {
            return Err(format!("driver index wrong for {}", d.name(*s)));
        }
    }
    let keys: BTreeSet<usize> = bs.driver_index.keys().copied().collect();
    if keys != writers.keys().copied().collect::<BTreeSet<usize>>() {
        return Err("driver index keys differ from the driven signals".into());
    }
    Ok(())
}

/// A random network of single-target assigns over a small signal pool.
/// Statement i sits on line i + 1.
pub fn random_network(rng: &mut impl rand::Rng, max: usize) -> Vec<rtlfl_core::blocks::AssignUnit> {
    let n = rng.gen_range(1..=max);
    let pool = n + rng.gen_range(0..10);
    let mut outs: Vec<usize> = (0..pool).collect();
    for i in (1..outs.len()).rev() {
        outs.swap(i, rng.gen_range(0..=i));
    }
    (0..n)
        .map(|i| {
            let out = outs[i];
            let v_in = (0..rng.gen_range(0..4)).map(|_| rng.gen_range(0..pool)).filter(|s| *s != out).collect();
            rtlfl_core::blocks::AssignUnit {
                statement: i,
                lines: [i as u32 + 1].into(),
                v_in,
                v_out: [out].into(),
            }
        })
        .collect()
}

/// Merge result as a set of statement sets, read back from line numbers.
pub fn merged_partition(units: &[rtlfl_core::blocks::AssignUnit]) -> std::collections::BTreeSet<std::collections::BTreeSet<usize>> {
    rtlfl_core::blocks::merge_assign_blocks(units)
        .iter()
        .map(|u| u.lines.iter().map(|l| *l as usize - 1).collect())
        .collect()
}
