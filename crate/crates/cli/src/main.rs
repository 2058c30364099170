use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use rtlfl_core::agent::backend::{Backend, RemoteBackend, RemoteProfile, ScriptedBackend};
use rtlfl_core::agent::policy::MismatchPolicy;
use rtlfl_core::agent::{run_localization, Budget, RankedList, RunResult, Session, TestReport};
use rtlfl_core::coverage::{CoverageSource, CoverageTable};
use rtlfl_core::harness::bench::{run_benchmark, simulate, BenchConfig};
use rtlfl_core::harness::mutate::{inject_mutation, MutationRule};
use rtlfl_core::harness::{evaluate_topn, size_histogram, EvalRecord, Project, ProjectManifest};
use rtlfl_core::slice::{build_exec_path, ExecPath, SliceLimits};
use rtlfl_core::wave::Waveform;

#[derive(Parser)]
#[command(name = "rtlfl", version, about = "Block-level fault localization for SystemVerilog designs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Split the design into code blocks; writes blocks.json and a size histogram.
    Blockize {
        #[command(flatten)]
        m: ManifestArg,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Backward-slice from a signal at a cycle.
    Slice {
        #[command(flatten)]
        m: ManifestArg,
        #[command(flatten)]
        at: Target,
        /// External coverage file instead of replaying guards on the waveform.
        #[arg(long)]
        coverage: Option<PathBuf>,
        /// Write the path as JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a graph-description (dot) file.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Localize a failure and write a ranked list of suspicious blocks.
    Localize {
        #[command(flatten)]
        m: ManifestArg,
        /// Test report file(s); defaults to the manifest's report.
        #[arg(long = "report")]
        reports: Vec<PathBuf>,
        #[command(flatten)]
        at: OptTarget,
        /// scripted:<file>, policy:<golden.vcd> or remote:<profile>.
        #[arg(long)]
        backend: Option<String>,
        #[arg(long, default_value_t = 60)]
        max_tool_calls: usize,
        #[arg(long)]
        max_tokens: Option<usize>,
        /// Reports localized concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        coverage: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Inject one seeded mutation; writes the mutated sources and ground truth.
    Mutate {
        #[command(flatten)]
        m: ManifestArg,
        /// binary-op-swap, unary-negate-condition, signal-replace, constant-perturb or assignment-delete.
        #[arg(long, value_parser = parse_rule)]
        rule: MutationRule,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Top-N table over a JSON array of evaluation records.
    Eval {
        records: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
        n: Vec<usize>,
    },
    /// Simulate the manifest's stimulus and write a VCD.
    Simulate {
        #[command(flatten)]
        m: ManifestArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded-mutation benchmark with the golden-waveform policy backend.
    Bench {
        #[command(flatten)]
        m: ManifestArg,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 400)]
        max_seeds: u64,
        #[arg(long, default_value_t = 60)]
        max_tool_calls: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Write evaluation records (JSON) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ManifestArg {
    #[arg(long)]
    manifest: PathBuf,
    /// Overrides the manifest's waveform.
    #[arg(long)]
    waveform: Option<PathBuf>,
}

#[derive(Args)]
struct Target {
    #[arg(long)]
    signal: String,
    #[arg(long, required_unless_present = "time")]
    cycle: Option<i64>,
    /// Simulation time, converted to the cycle of the last rising edge at or before it.
    #[arg(long, conflicts_with = "cycle")]
    time: Option<u64>,
}

#[derive(Args)]
struct OptTarget {
    #[arg(long, requires = "cycle")]
    signal: Option<String>,
    #[arg(long)]
    cycle: Option<i64>,
}

enum Fail {
    Analysis(anyhow::Error),
    Backend(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail::Analysis(e.into())
    }
}

type CResult<T> = Result<T, Fail>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Analysis(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Fail::Backend(e)) => {
            eprintln!("backend error: {e:#}");
            ExitCode::from(3)
        }
    }
}

struct Loaded {
    manifest: ProjectManifest,
    project: Project,
}

fn load(m: &ManifestArg) -> CResult<Loaded> {
    let mut manifest = ProjectManifest::load(&m.manifest)?;
    if let Some(w) = &m.waveform {
        manifest.waveform = Some(w.clone());
    }
    let project = Project::from_manifest(&manifest)?;
    Ok(Loaded { manifest, project })
}

fn waveform(l: &Loaded) -> CResult<Waveform> {
    let path = l.manifest.waveform.as_ref().ok_or_else(|| anyhow!("no waveform given (manifest or --waveform)"))?;
    Ok(Waveform::load(path, &l.manifest.clock).with_context(|| path.display().to_string())?)
}

fn coverage(path: &Option<PathBuf>, p: &Project) -> CResult<CoverageSource> {
    Ok(match path {
        None => CoverageSource::Replay,
        Some(f) => CoverageSource::ExternalFile(CoverageTable::load(f, &p.blocks)?),
    })
}

fn write(path: &Path, text: &str) -> CResult<()> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(d).with_context(|| d.display().to_string())?;
    }
    std::fs::write(path, text).with_context(|| path.display().to_string())?;
    Ok(())
}

fn slice(l: &Loaded, wave: &Waveform, signal: &str, cycle: i64, cov: &CoverageSource) -> CResult<ExecPath> {
    let sid = l.project.design.lookup(signal).ok_or_else(|| anyhow!("unknown signal {signal}"))?;
    Ok(build_exec_path(&l.project.design, &l.project.blocks, sid, cycle, wave, cov, SliceLimits::default())?)
}

fn run(cmd: Cmd) -> CResult<()> {
    match cmd {
        Cmd::Blockize { m, out } => {
            let l = load(&m)?;
            let p = &l.project;
            write(&out.join("blocks.json"), &serde_json::to_string_pretty(&p.blocks.to_json(&p.design)).unwrap())?;
            let hist = size_histogram(&p.blocks.sizes());
            write(&out.join("histogram.txt"), &hist)?;
            println!("{} blocks", p.blocks.len());
            print!("{hist}");
        }
        Cmd::Slice { m, at, coverage: cov, out, dot } => {
            let l = load(&m)?;
            let wave = waveform(&l)?;
            let cycle = match (at.cycle, at.time) {
                (Some(c), _) => c,
                (None, Some(t)) => wave.cycle_of_time(t).ok_or_else(|| anyhow!("time {t} is before the first rising edge"))? as i64,
                (None, None) => unreachable!("clap requires one"),
            };
            let cov = coverage(&cov, &l.project)?;
            let path = slice(&l, &wave, &at.signal, cycle, &cov)?;
            let text = serde_json::to_string_pretty(&path.to_json(&l.project.blocks)).unwrap();
            match out {
                Some(o) => write(&o, &text)?,
                None => println!("{text}"),
            }
            if let Some(d) = dot {
                write(&d, &path.to_dot(&l.project.blocks))?;
            }
            eprintln!(
                "path blocks: {} of {} total; nodes {}, edges {}",
                path.blocks().len(),
                l.project.blocks.len(),
                path.nodes.len(),
                path.edges.len()
            );
        }
        Cmd::Localize {
            m,
            reports,
            at,
            backend,
            max_tool_calls,
            max_tokens,
            jobs,
            coverage: cov,
            out,
        } => {
            let l = load(&m)?;
            let wave = waveform(&l)?;
            let cov = coverage(&cov, &l.project)?;
            let reports = collect_reports(&l, reports, at)?;
            let spec = backend
                .or_else(|| l.manifest.backend.clone())
                .ok_or_else(|| anyhow!("no backend given (manifest or --backend)"))?;
            let budget = Budget {
                max_tool_calls,
                max_tokens,
                ..Budget::default()
            };
            let one = |r: &TestReport| -> CResult<(RankedList, String)> {
                let path = slice(&l, &wave, &r.signal, r.cycle, &cov)?;
                let session = Session {
                    design: &l.project.design,
                    blocks: &l.project.blocks,
                    path: &path,
                    wave: &wave,
                    report: r,
                };
                let mut b = make_backend(&spec, &l, &wave)?;
                let res: RunResult = run_localization(&session, b.as_mut(), budget).map_err(|e| match e {
                    rtlfl_core::agent::AgentError::Backend(b) => Fail::Backend(b.into()),
                    other => Fail::Analysis(other.into()),
                })?;
                Ok((res.ranking.clone(), res.transcript_jsonl()))
            };
            let results: Vec<CResult<(RankedList, String)>> = if jobs <= 1 || reports.len() <= 1 {
                reports.iter().map(one).collect()
            } else {
                let mut all = Vec::new();
                for chunk in reports.chunks(jobs) {
                    let done: Vec<_> = std::thread::scope(|sc| {
                        let hs: Vec<_> = chunk.iter().map(|r| sc.spawn(|| one(r))).collect();
                        hs.into_iter().map(|h| h.join().expect("localize worker panicked")).collect()
                    });
                    all.extend(done);
                }
                all
            };
            let many = reports.len() > 1;
            for (i, res) in results.into_iter().enumerate() {
                let (ranking, transcript) = res?;
                let dir = if many { out.join(format!("report{i}")) } else { out.clone() };
                write(&dir.join("ranking.json"), &serde_json::to_string_pretty(&ranking).unwrap())?;
                write(&dir.join("transcript.jsonl"), &transcript)?;
                let text = render_ranking(&ranking);
                write(&dir.join("ranking.txt"), &text)?;
                print!("{text}");
            }
        }
        Cmd::Mutate { m, rule, seed, out } => {
            let l = load(&m)?;
            let mu = inject_mutation(&l.project.ast, rule, seed, &l.manifest.exclude_mutation).map_err(anyhow::Error::from)?;
            for u in mu.apply_to_sources(&l.project.ast) {
                write(&out.join(&u.path), &u.text)?;
            }
            let truth = json!({
                "mutation": mu,
                "ground_truth": mu.ground_truth_lines().into_iter().map(|n| (mu.file.clone(), n)).collect::<Vec<_>>(),
            });
            write(&out.join("ground_truth.json"), &serde_json::to_string_pretty(&truth).unwrap())?;
            println!("{}:{} {:?}: `{}` -> `{}`", mu.file, mu.line, mu.rule, mu.original, mu.mutated);
        }
        Cmd::Eval { records, n } => {
            let text = std::fs::read_to_string(&records).with_context(|| records.display().to_string())?;
            let recs: Vec<EvalRecord> = serde_json::from_str(&text).context("evaluation records")?;
            if recs.is_empty() {
                return Err(anyhow!("no evaluation records").into());
            }
            for (k, c) in evaluate_topn(&recs, &n) {
                println!("Top-{k}: {c}/{}", recs.len());
            }
        }
        Cmd::Simulate { m, out } => {
            let l = load(&m)?;
            let stim = l.manifest.stimulus_for(&l.project.design)?;
            let run = simulate(&l.project.design, &l.manifest.clock, &stim).map_err(anyhow::Error::from)?;
            write(&out, &run.vcd)?;
            println!("{} cycles written to {}", stim.len(), out.display());
        }
        Cmd::Bench {
            m,
            count,
            max_seeds,
            max_tool_calls,
            jobs,
            out,
        } => {
            let l = load(&m)?;
            let stim = l.manifest.stimulus_for(&l.project.design)?;
            let cfg = BenchConfig {
                top: &l.manifest.top,
                clock: &l.manifest.clock,
                stimulus: &stim,
                observe: &l.manifest.observe,
                compare_from: l.manifest.compare_from,
                exclude: &l.manifest.exclude_mutation,
                count,
                max_seeds,
                budget: Budget {
                    max_tool_calls,
                    ..Budget::default()
                },
                jobs,
            };
            let res = run_benchmark(&l.project, &cfg).map_err(anyhow::Error::from)?;
            let recs: Vec<EvalRecord> = res.bugs.iter().map(|b| b.record.clone()).collect();
            println!(
                "{} bugs from {} seeds ({} undetected, {} invalid)",
                recs.len(),
                res.seeds_tried,
                res.undetected,
                res.invalid
            );
            for (k, c) in evaluate_topn(&recs, &[1, 5, 10]) {
                println!("Top-{k}: {c}/{}", recs.len());
            }
            if !res.bugs.is_empty() {
                let red: f64 = res
                    .bugs
                    .iter()
                    .map(|b| 1.0 - b.path_blocks as f64 / b.total_blocks as f64)
                    .sum::<f64>()
                    / res.bugs.len() as f64;
                println!("mean slice reduction: {:.1}%", 100.0 * red);
            }
            if let Some(o) = out {
                write(&o, &serde_json::to_string_pretty(&recs).unwrap())?;
            }
        }
    }
    Ok(())
}

fn collect_reports(l: &Loaded, files: Vec<PathBuf>, at: OptTarget) -> CResult<Vec<TestReport>> {
    if let (Some(signal), Some(cycle)) = (at.signal, at.cycle) {
        return Ok(vec![TestReport {
            instruction: String::new(),
            pc: None,
            expected: format!("{signal} has an unexpected value at cycle {cycle}"),
            signal,
            cycle,
        }]);
    }
    let files = if files.is_empty() {
        vec![l.manifest.report.clone().ok_or_else(|| anyhow!("no test report (manifest, --report or --signal/--cycle)"))?]
    } else {
        files
    };
    files
        .iter()
        .map(|f| {
            let text = std::fs::read_to_string(f).with_context(|| f.display().to_string())?;
            Ok(serde_json::from_str(&text).with_context(|| f.display().to_string())?)
        })
        .collect()
}

fn make_backend(spec: &str, l: &Loaded, wave: &Waveform) -> CResult<Box<dyn Backend>> {
    let (kind, arg) = spec.split_once(':').ok_or_else(|| anyhow!("backend must be kind:argument, got {spec}"))?;
    let rel = |a: &str| {
        let p = PathBuf::from(a);
        if p.exists() || p.is_absolute() {
            p
        } else {
            l.manifest.root.join(p)
        }
    };
    Ok(match kind {
        "scripted" => Box::new(ScriptedBackend::load(rel(arg)).map_err(|e| Fail::Backend(e.into()))?),
        "policy" => {
            let golden = Waveform::load(rel(arg), &l.manifest.clock).with_context(|| arg.to_string())?;
            Box::new(MismatchPolicy::new(wave.clone(), golden))
        }
        "remote" => {
            let cfg = l
                .manifest
                .backend_config
                .clone()
                .ok_or_else(|| Fail::Backend(anyhow!("remote backend needs backend_config in the manifest")))?;
            let profile = RemoteProfile::load(cfg, arg).map_err(|e| Fail::Backend(e.into()))?;
            Box::new(RemoteBackend::new(profile))
        }
        _ => return Err(anyhow!("unknown backend kind {kind}").into()),
    })
}

fn parse_rule(s: &str) -> Result<MutationRule, String> {
    MutationRule::parse(s).ok_or_else(|| format!("unknown mutation rule {s}"))
}

fn render_ranking(r: &RankedList) -> String {
    let mut s = String::new();
    if r.entries.is_empty() {
        s.push_str("no candidate blocks\n");
    }
    for e in &r.entries {
        let lines: Vec<String> = e.lines.iter().map(|(a, b)| if a == b { a.to_string() } else { format!("{a}-{b}") }).collect();
        s.push_str(&format!(
            "{:>3}. {:.3}{} {} ({}:{})\n",
            e.rank,
            e.confidence,
            if e.fallback { "*" } else { "" },
            e.block_id,
            e.file,
            lines.join(",")
        ));
        if !e.rationale.is_empty() {
            s.push_str(&format!("     {}\n", e.rationale));
        }
    }
    let m = &r.meta;
    s.push_str(&format!(
        "tool calls {}, tokens ~{}, states {}, exit {}, budget exhausted {}\n",
        m.tool_calls, m.tokens, m.states_visited, m.exit_called, m.budget_exhausted
    ));
    s
}
