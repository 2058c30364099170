//! Seeded-mutation benchmark: inject a bug, simulate, take the first
//! observed mismatch against the golden run as the failure report, slice,
//! localize with the golden-waveform policy and score the ranking.

use serde::Serialize;

use super::mutate::{inject_mutation, Mutation, MutationRule};
use super::{first_hit, EvalRecord, Project};
use crate::agent::policy::MismatchPolicy;
use crate::agent::{run_localization, Budget, RunMeta, Session, TestReport};
use crate::coverage::CoverageSource;
use crate::hdl::DesignHierarchy;
use crate::sim::{Inputs, SimRun, Simulator};
use crate::slice::{build_exec_path, SliceLimits};
use crate::wave::Waveform;

pub struct BenchConfig<'a> {
    pub top: &'a str,
    pub clock: &'a str,
    pub stimulus: &'a [Inputs],
    pub observe: &'a [String],
    pub compare_from: usize,
    pub exclude: &'a [String],
    pub count: usize,
    /// Give up after this many seeds even if `count` bugs were not found.
    pub max_seeds: u64,
    pub budget: Budget,
    /// Mutants evaluated concurrently; results do not depend on it.
    pub jobs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BugOutcome {
    pub mutation: Mutation,
    pub report: TestReport,
    pub record: EvalRecord,
    pub path_blocks: usize,
    pub total_blocks: usize,
    pub meta: Option<RunMeta>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BenchResult {
    pub bugs: Vec<BugOutcome>,
    pub seeds_tried: u64,
    /// Mutants whose observed signals never differed from the golden run.
    pub undetected: usize,
    /// Mutants that failed to parse, elaborate or simulate.
    pub invalid: usize,
}

pub fn simulate(design: &DesignHierarchy, clock: &str, stimulus: &[Inputs]) -> Result<SimRun, crate::sim::SimError> {
    let mut sim = Simulator::new(design, clock)?;
    sim.run(stimulus.len(), |k| stimulus[k].clone())
}

/// First (signal, cycle) at or after `from` where an observed signal
/// differs between runs.
pub fn first_mismatch(
    golden_design: &DesignHierarchy,
    golden: &SimRun,
    design: &DesignHierarchy,
    run: &SimRun,
    observe: &[String],
    from: usize,
) -> Option<(String, usize)> {
    let ids: Vec<(usize, usize, &String)> = observe
        .iter()
        .filter_map(|n| Some((golden_design.lookup(n)?, design.lookup(n)?, n)))
        .collect();
    for k in from..golden.values.len().min(run.values.len()) {
        for (g, r, n) in &ids {
            if golden.values[k][*g] != run.values[k][*r] {
                return Some(((*n).clone(), k));
            }
        }
    }
    None
}

enum Trial {
    NoSite,
    Invalid,
    Undetected,
    Bug(Box<BugOutcome>),
}

fn trial(golden: &Project, golden_run: &SimRun, golden_wave: &Waveform, cfg: &BenchConfig, seed: u64) -> Trial {
    let rule = MutationRule::ALL[(seed % 5) as usize];
    let Ok(m) = inject_mutation(&golden.ast, rule, seed, cfg.exclude) else {
        return Trial::NoSite;
    };
    let Ok(p) = Project::build(&m.apply_to_sources(&golden.ast), cfg.top) else {
        return Trial::Invalid;
    };
    let Ok(run) = simulate(&p.design, cfg.clock, cfg.stimulus) else {
        return Trial::Invalid;
    };
    match first_mismatch(&golden.design, golden_run, &p.design, &run, cfg.observe, cfg.compare_from) {
        None => Trial::Undetected,
        Some((sig, t)) => Trial::Bug(Box::new(localize_bug(&p, m, &run, golden_wave, &sig, t, cfg))),
    }
}

/// Mutates with seeds 0, 1, 2, ... (rule = seed mod 5) until `count`
/// detected bugs are localized. Seeds run in batches of `jobs` threads but
/// are consumed in order, so the result is the same for any `jobs`.
pub fn run_benchmark(golden: &Project, cfg: &BenchConfig) -> Result<BenchResult, crate::sim::SimError> {
    let golden_run = simulate(&golden.design, cfg.clock, cfg.stimulus)?;
    let golden_wave = Waveform::parse(&golden_run.vcd, cfg.clock).expect("simulator output parses");
    let jobs = cfg.jobs.max(1) as u64;
    let mut res = BenchResult::default();
    let mut next = 0u64;
    while res.bugs.len() < cfg.count && next < cfg.max_seeds {
        let seeds: Vec<u64> = (next..(next + jobs).min(cfg.max_seeds)).collect();
        next += seeds.len() as u64;
        let trials: Vec<Trial> = if seeds.len() == 1 {
            vec![trial(golden, &golden_run, &golden_wave, cfg, seeds[0])]
        } else {
            std::thread::scope(|sc| {
                let hs: Vec<_> = seeds
                    .iter()
                    .map(|&s| {
                        let (gr, gw) = (&golden_run, &golden_wave);
                        sc.spawn(move || trial(golden, gr, gw, cfg, s))
                    })
                    .collect();
                hs.into_iter().map(|h| h.join().expect("benchmark worker panicked")).collect()
            })
        };
        for (s, t) in seeds.into_iter().zip(trials) {
            if res.bugs.len() >= cfg.count {
                break;
            }
            res.seeds_tried = s + 1;
            match t {
                Trial::NoSite => {}
                Trial::Invalid => res.invalid += 1,
                Trial::Undetected => res.undetected += 1,
                Trial::Bug(b) => res.bugs.push(*b),
            }
        }
    }
    Ok(res)
}

fn localize_bug(
    p: &Project,
    m: Mutation,
    run: &SimRun,
    golden_wave: &Waveform,
    sig: &str,
    t: usize,
    cfg: &BenchConfig,
) -> BugOutcome {
    let wave = Waveform::parse(&run.vcd, cfg.clock).expect("simulator output parses");
    let expected = golden_wave
        .value_at(sig, t as i64)
        .map(|v| v.to_hex_string())
        .unwrap_or_default();
    let report = TestReport {
        instruction: "test program".into(),
        pc: None,
        signal: sig.to_string(),
        cycle: t as i64,
        expected: format!("{sig} should be {expected} at cycle {t}"),
    };
    let truth: Vec<(String, u32)> = m.ground_truth_lines().into_iter().map(|l| (m.file.clone(), l)).collect();
    let mut out = BugOutcome {
        mutation: m.clone(),
        report: report.clone(),
        record: EvalRecord {
            bug_id: format!("{:?}-{}", m.rule, m.seed),
            ground_truth: truth.clone(),
            ranked: vec![],
            rank: None,
        },
        path_blocks: 0,
        total_blocks: p.blocks.len(),
        meta: None,
        error: None,
    };
    let sid = p.design.lookup(sig).expect("observed signal exists");
    let path = match build_exec_path(
        &p.design,
        &p.blocks,
        sid,
        t as i64,
        &wave,
        &CoverageSource::Replay,
        SliceLimits::default(),
    ) {
        Ok(path) => path,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    out.path_blocks = path.blocks().len();
    let session = Session {
        design: &p.design,
        blocks: &p.blocks,
        path: &path,
        wave: &wave,
        report: &report,
    };
    let mut backend = MismatchPolicy::new(wave.clone(), golden_wave.clone());
    match run_localization(&session, &mut backend, cfg.budget) {
        Ok(r) => {
            let ranked: Vec<String> = r.ranking.entries.iter().map(|e| e.block_id.clone()).collect();
            out.record.rank = first_hit(&ranked, &p.blocks, &truth);
            out.record.ranked = ranked;
            out.meta = Some(r.ranking.meta);
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}
