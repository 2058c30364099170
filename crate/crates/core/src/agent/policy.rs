//! A deterministic backend that debugs by comparing against a known-good
//! waveform: it follows driven signals whose values differ from the golden
//! run and flags a block whose outputs differ while all its inputs agree.

use std::collections::{BTreeMap, BTreeSet};

use super::backend::{Backend, BackendError, Turn, TurnRequest};
use super::ToolCall;
use crate::wave::Waveform;

pub struct MismatchPolicy {
    run: Waveform,
    golden: Waveform,
    /// Flagged blocks in the order found.
    flagged: Vec<String>,
    /// States already answered with check_signals.
    followed: BTreeSet<(String, i64)>,
}

impl MismatchPolicy {
    pub fn new(run: Waveform, golden: Waveform) -> Self {
        MismatchPolicy {
            run,
            golden,
            flagged: Vec::new(),
            followed: BTreeSet::new(),
        }
    }

    /// Signals missing from either waveform never count as mismatching.
    pub fn mismatch(&self, name: &str, cycle: i64) -> bool {
        match (self.run.value_at(name, cycle), self.golden.value_at(name, cycle)) {
            (Ok(a), Ok(b)) => a != b,
            _ => false,
        }
    }

    fn scores(&self) -> BTreeMap<String, f64> {
        self.flagged
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), (0.9 - 0.1 * i as f64).max(0.1)))
            .collect()
    }
}

impl Backend for MismatchPolicy {
    fn next_turn(&mut self, req: &TurnRequest) -> Result<Turn, BackendError> {
        let st = req.state;
        let finish = |p: &Self| {
            if st.pending == 0 && !p.flagged.is_empty() {
                vec![ToolCall::Exit { scores: p.scores() }]
            } else {
                vec![]
            }
        };
        let key = (st.block_id.clone(), st.cycle);
        if self.flagged.contains(&st.block_id) || self.followed.contains(&key) {
            return Ok(Turn {
                text: None,
                calls: finish(self),
            });
        }
        let out_bad = st.traced.iter().any(|s| self.mismatch(s, st.cycle));
        if !out_bad {
            return Ok(Turn {
                text: None,
                calls: finish(self),
            });
        }
        let bad: Vec<String> = st
            .driven
            .iter()
            .filter(|d| self.mismatch(&d.name, d.cycle))
            .map(|d| d.name.clone())
            .collect();
        if bad.is_empty() {
            self.flagged.push(st.block_id.clone());
            return Ok(Turn {
                text: Some("outputs differ from the golden run while every input agrees".into()),
                calls: vec![ToolCall::AppendBlock {
                    rationale: Some(format!("{} differs at cycle {} with matching inputs", st.traced.join(", "), st.cycle)),
                }],
            });
        }
        self.followed.insert(key);
        Ok(Turn {
            text: None,
            calls: vec![ToolCall::CheckSignals { names: bad }],
        })
    }

    fn shareable(&self) -> bool {
        false
    }
}
