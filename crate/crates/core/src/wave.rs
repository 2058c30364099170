//! VCD loading and per-cycle value queries.
//!
//! Cycle `k` is sampled at the timestamp of the `(k+1)`-th rising edge of the
//! clock, after every change at that timestamp has been applied. A register
//! updated by that edge therefore shows its new value at cycle `k`.

use std::collections::HashMap;
use std::path::Path;

use crate::logic::{Logic, LogicVec};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WaveError {
    #[error("cannot read waveform: {0}")]
    Io(String),
    #[error("malformed VCD at line {line}: {message}")]
    MalformedVcd { line: usize, message: String },
    #[error("clock `{0}` not found in waveform")]
    ClockNotFound(String),
    #[error("signal `{0}` is not recorded in the waveform")]
    SignalNotRecorded(String),
    #[error("cycle {cycle} is out of range (waveform has {count} cycles)")]
    CycleOutOfRange { cycle: i64, count: usize },
}

#[derive(Debug, Clone, Default)]
struct Trace {
    width: u32,
    times: Vec<u64>,
    values: Vec<LogicVec>,
}

impl Trace {
    fn push(&mut self, time: u64, v: LogicVec) {
        if self.times.last() == Some(&time) {
            *self.values.last_mut().unwrap() = v;
        } else {
            self.times.push(time);
            self.values.push(v);
        }
    }

    fn at(&self, time: u64) -> LogicVec {
        let k = self.times.partition_point(|t| *t <= time);
        if k == 0 {
            LogicVec::unknown(self.width)
        } else {
            self.values[k - 1].clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Waveform {
    clock: String,
    cycle_times: Vec<u64>,
    names: HashMap<String, usize>,
    traces: Vec<Trace>,
    timescale: Option<String>,
}

impl Waveform {
    pub fn load(path: impl AsRef<Path>, clock: &str) -> Result<Waveform, WaveError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| WaveError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Waveform::parse(&text, clock)
    }

    pub fn parse(text: &str, clock: &str) -> Result<Waveform, WaveError> {
        let mut p = VcdReader::default();
        p.read(text)?;
        let &ci = p.names.get(clock).ok_or_else(|| WaveError::ClockNotFound(clock.to_string()))?;
        let ct = &p.traces[ci];
        let mut cycle_times = Vec::new();
        let mut prev = Logic::X;
        for (t, v) in ct.times.iter().zip(&ct.values) {
            let cur = v.get(0);
            if prev == Logic::Zero && cur == Logic::One {
                cycle_times.push(*t);
            }
            prev = cur;
        }
        Ok(Waveform {
            clock: clock.to_string(),
            cycle_times,
            names: p.names,
            traces: p.traces,
            timescale: p.timescale,
        })
    }

    pub fn clock(&self) -> &str {
        &self.clock
    }

    pub fn cycle_times(&self) -> &[u64] {
        &self.cycle_times
    }

    pub fn cycle_count(&self) -> usize {
        self.cycle_times.len()
    }

    pub fn timescale(&self) -> Option<&str> {
        self.timescale.as_deref()
    }

    pub fn has_signal(&self, name: &str) -> bool {
        self.names.contains_key(name)
    }

    pub fn width(&self, name: &str) -> Option<u32> {
        self.names.get(name).map(|i| self.traces[*i].width)
    }

    pub fn signal_names(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.names.keys().map(String::as_str).collect();
        v.sort();
        v
    }

    pub fn value_at(&self, name: &str, cycle: i64) -> Result<LogicVec, WaveError> {
        let &i = self
            .names
            .get(name)
            .ok_or_else(|| WaveError::SignalNotRecorded(name.to_string()))?;
        if cycle < 0 || cycle as usize >= self.cycle_times.len() {
            return Err(WaveError::CycleOutOfRange {
                cycle,
                count: self.cycle_times.len(),
            });
        }
        Ok(self.traces[i].at(self.cycle_times[cycle as usize]))
    }

    /// The cycle whose sample time is the latest one at or before `time`.
    pub fn cycle_of_time(&self, time: u64) -> Option<usize> {
        self.cycle_times.partition_point(|t| *t <= time).checked_sub(1)
    }

    /// Renames every signal under scope `from` to live under `to`, e.g. to
    /// map a testbench scope `tb.dut` onto the design's top module name.
    pub fn remap_scope(&mut self, from: &str, to: &str) {
        let renamed: HashMap<String, usize> = self
            .names
            .drain()
            .map(|(k, v)| match k.strip_prefix(from) {
                Some(rest) if rest.is_empty() || rest.starts_with('.') => (format!("{to}{rest}"), v),
                _ => (k, v),
            })
            .collect();
        self.names = renamed;
        if let Some(rest) = self.clock.strip_prefix(from) {
            if rest.is_empty() || rest.starts_with('.') {
                self.clock = format!("{to}{rest}");
            }
        }
    }
}

#[derive(Default)]
struct VcdReader {
    names: HashMap<String, usize>,
    traces: Vec<Trace>,
    ids: HashMap<String, usize>,
    timescale: Option<String>,
}

impl VcdReader {
    fn read(&mut self, text: &str) -> Result<(), WaveError> {
        let mut scopes: Vec<String> = Vec::new();
        let mut tokens = text
            .lines()
            .enumerate()
            .flat_map(|(n, l)| l.split_whitespace().map(move |w| (n + 1, w)))
            .peekable();
        let bad = |line: usize, m: &str| WaveError::MalformedVcd {
            line,
            message: m.to_string(),
        };
        let mut in_defs = true;
        let mut time: u64 = 0;
        let mut seen_time = false;

        while let Some((line, tok)) = tokens.next() {
            if in_defs {
                match tok {
                    "$scope" => {
                        let _kind = tokens.next().ok_or_else(|| bad(line, "truncated $scope"))?;
                        let (_, name) = tokens.next().ok_or_else(|| bad(line, "truncated $scope"))?;
                        scopes.push(name.to_string());
                        expect_end(&mut tokens, line)?;
                    }
                    "$upscope" => {
                        scopes.pop().ok_or_else(|| bad(line, "$upscope without $scope"))?;
                        expect_end(&mut tokens, line)?;
                    }
                    "$var" => {
                        let mut parts = Vec::new();
                        loop {
                            let (l, t) = tokens.next().ok_or_else(|| bad(line, "truncated $var"))?;
                            if t == "$end" {
                                break;
                            }
                            parts.push((l, t));
                        }
                        if parts.len() < 4 {
                            return Err(bad(line, "incomplete $var"));
                        }
                        let kind = parts[0].1;
                        if kind == "real" || kind == "realtime" {
                            return Err(bad(line, "real-valued variables are not supported"));
                        }
                        let width: u32 = parts[1].1.parse().map_err(|_| bad(line, "bad $var width"))?;
                        if width == 0 {
                            return Err(bad(line, "zero-width $var"));
                        }
                        let id = parts[2].1.to_string();
                        let mut reference = parts[3].1.to_string();
                        let select = parts.get(4).map(|p| p.1).filter(|s| s.starts_with('['));
                        if let Some(b) = reference.find('[') {
                            let sel = reference[b..].to_string();
                            reference.truncate(b);
                            if width == 1 && !sel.contains(':') {
                                reference.push_str(&sel);
                            }
                        } else if let Some(sel) = select {
                            if width == 1 && !sel.contains(':') {
                                reference.push_str(sel);
                            }
                        }
                        let mut full = scopes.join(".");
                        if !full.is_empty() {
                            full.push('.');
                        }
                        full.push_str(&reference);
                        let idx = match self.ids.get(&id) {
                            Some(i) => *i,
                            None => {
                                self.traces.push(Trace {
                                    width,
                                    ..Default::default()
                                });
                                self.ids.insert(id, self.traces.len() - 1);
                                self.traces.len() - 1
                            }
                        };
                        self.names.insert(full, idx);
                    }
                    "$timescale" => {
                        let mut ts = String::new();
                        for (_, t) in tokens.by_ref() {
                            if t == "$end" {
                                break;
                            }
                            ts.push_str(t);
                        }
                        self.timescale = Some(ts);
                    }
                    "$enddefinitions" => {
                        expect_end(&mut tokens, line)?;
                        in_defs = false;
                    }
                    t if t.starts_with('$') => skip_to_end(&mut tokens, line)?,
                    _ => return Err(bad(line, &format!("unexpected `{tok}` in header"))),
                }
                continue;
            }
            let first = tok.as_bytes()[0];
            match first {
                b'#' => {
                    let t: u64 = tok[1..].parse().map_err(|_| bad(line, "bad timestamp"))?;
                    if seen_time && t < time {
                        return Err(bad(line, "timestamps must not decrease"));
                    }
                    time = t;
                    seen_time = true;
                }
                b'$' => match tok {
                    "$dumpvars" | "$dumpall" | "$dumpon" | "$dumpoff" | "$end" => {}
                    _ => skip_to_end(&mut tokens, line)?,
                },
                b'0' | b'1' | b'x' | b'X' | b'z' | b'Z' => {
                    let id = &tok[1..];
                    let &i = self.ids.get(id).ok_or_else(|| bad(line, &format!("unknown id code `{id}`")))?;
                    let b = Logic::from_char(first as char).unwrap();
                    let w = self.traces[i].width;
                    let v = LogicVec::filled(1, b).extend_vcd(w);
                    self.traces[i].push(time, v);
                }
                b'b' | b'B' => {
                    let (_, id) = tokens.next().ok_or_else(|| bad(line, "vector change without id"))?;
                    let &i = self.ids.get(id).ok_or_else(|| bad(line, &format!("unknown id code `{id}`")))?;
                    let v = LogicVec::from_bin_str(&tok[1..]).ok_or_else(|| bad(line, "bad vector value"))?;
                    let w = self.traces[i].width;
                    if v.width() > w {
                        return Err(bad(line, "vector value wider than its variable"));
                    }
                    self.traces[i].push(time, v.extend_vcd(w));
                }
                b'r' | b'R' => return Err(bad(line, "real-valued changes are not supported")),
                _ => return Err(bad(line, &format!("unexpected `{tok}`"))),
            }
        }
        if in_defs {
            return Err(bad(text.lines().count(), "missing $enddefinitions"));
        }
        Ok(())
    }
}

fn expect_end<'a>(tokens: &mut impl Iterator<Item = (usize, &'a str)>, line: usize) -> Result<(), WaveError> {
    match tokens.next() {
        Some((_, "$end")) => Ok(()),
        _ => Err(WaveError::MalformedVcd {
            line,
            message: "expected $end".into(),
        }),
    }
}

fn skip_to_end<'a>(tokens: &mut impl Iterator<Item = (usize, &'a str)>, line: usize) -> Result<(), WaveError> {
    for (_, t) in tokens {
        if t == "$end" {
            return Ok(());
        }
    }
    Err(WaveError::MalformedVcd {
        line,
        message: "unterminated section".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIMPLE: &str = "$timescale 1ns $end\n$scope module top $end\n$var wire 1 ! clk $end\n$var wire 1 \" x $end\n$var wire 4 # v [3:0] $end\n$upscope $end\n$enddefinitions $end\n#0\n$dumpvars\n0!\n0\"\nb0 #\n$end\n#5\n1!\n#7\n0!\n#10\n1!\n#15\n0!\n#20\n1!\n#25\n0!\n#30\n1!\n1\"\nbx1 #\n#35\n0!\n#40\n1!\n";

    #[test]
    fn post_update_sampling() {
        let w = Waveform::parse(SIMPLE, "top.clk").unwrap();
        assert_eq!(w.cycle_times(), &[5, 10, 20, 30, 40]);
        assert_eq!(w.value_at("top.x", 2).unwrap().to_u64(), Some(0));
        assert_eq!(w.value_at("top.x", 3).unwrap().to_u64(), Some(1));
        assert_eq!(w.value_at("top.v", 3).unwrap().to_bin_string(), "xxx1");
        assert_eq!(w.value_at("top.v", 0).unwrap().to_bin_string(), "0000");
    }

    #[test]
    fn errors() {
        let w = Waveform::parse(SIMPLE, "top.clk").unwrap();
        assert_eq!(w.value_at("top.nope", 0), Err(WaveError::SignalNotRecorded("top.nope".into())));
        assert!(matches!(w.value_at("top.x", 5), Err(WaveError::CycleOutOfRange { cycle: 5, count: 5 })));
        assert!(matches!(Waveform::parse(SIMPLE, "top.rst"), Err(WaveError::ClockNotFound(_))));
        let real = "$scope module t $end\n$var real 64 ! r $end\n$upscope $end\n$enddefinitions $end\n";
        assert!(matches!(Waveform::parse(real, "t.r"), Err(WaveError::MalformedVcd { line: 2, .. })));
    }

    #[test]
    fn time_to_cycle() {
        let w = Waveform::parse(SIMPLE, "top.clk").unwrap();
        assert_eq!(w.cycle_of_time(4), None);
        assert_eq!(w.cycle_of_time(10), Some(1));
        assert_eq!(w.cycle_of_time(29), Some(2));
    }

    #[test]
    fn remap() {
        let mut w = Waveform::parse(SIMPLE, "top.clk").unwrap();
        w.remap_scope("top", "core");
        assert!(w.has_signal("core.x"));
        assert_eq!(w.clock(), "core.clk");
    }
}
