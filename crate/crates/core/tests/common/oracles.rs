// Reference implementations used only by tests. Each one takes a different
// route from the library code it checks.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rtlfl_core::blocks::{AssignUnit, BlockKind, BlockSet, CodeBlock};
use rtlfl_core::hdl::elab::{DesignHierarchy, EStmt, LValue, SignalId};
use rtlfl_core::sim::SimRun;
use rtlfl_core::slice::PathNode;

// ---------------------------------------------------------------- merging

/// Connected components of "one writes what the other reads", as sets of
/// statement indices.
pub fn uf_partition(units: &[AssignUnit]) -> BTreeSet<BTreeSet<usize>> {
    let n = units.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut x = x;
        while p[x] != r {
            let nx = p[x];
            p[x] = r;
            x = nx;
        }
        r
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && !units[i].v_out.is_disjoint(&units[j].v_in) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (i, u) in units.iter().enumerate().take(n) {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().insert(u.statement);
    }
    groups.into_values().collect()
}

// ---------------------------------------------------------- dependencies

#[derive(Clone, Default)]
struct PathState {
    blk: HashMap<SignalId, BTreeSet<SignalId>>,
    nba: HashMap<SignalId, BTreeSet<SignalId>>,
}

impl PathState {
    fn reads(&self, sigs: &BTreeSet<SignalId>) -> BTreeSet<SignalId> {
        let mut out = BTreeSet::new();
        for s in sigs {
            match self.blk.get(s) {
                Some(d) => out.extend(d),
                None => {
                    out.insert(*s);
                }
            }
        }
        out
    }
}

fn lv_parts(lv: &LValue, out: &mut Vec<(SignalId, bool)>) {
    match lv {
        LValue::Whole(s) => out.push((*s, true)),
        LValue::Bit { sig, .. } | LValue::Part { sig, .. } => out.push((*sig, false)),
        LValue::Concat(items) => items.iter().for_each(|l| lv_parts(l, out)),
    }
}

fn lv_index_sigs(lv: &LValue, out: &mut BTreeSet<SignalId>) {
    match lv {
        LValue::Bit { index, .. } => index.signals(out),
        LValue::Concat(items) => items.iter().for_each(|l| lv_index_sigs(l, out)),
        _ => {}
    }
}

/// Runs `s` from `st` under guards `ctrl`, returning one state per control
/// path.
fn paths(s: &EStmt, ctrl: &BTreeSet<SignalId>, st: PathState) -> Vec<PathState> {
    match s {
        EStmt::Null => vec![st],
        EStmt::Block(items) => {
            let mut cur = vec![st];
            for i in items {
                cur = cur.into_iter().flat_map(|p| paths(i, ctrl, p)).collect();
            }
            cur
        }
        EStmt::If { cond, then_, else_, .. } => {
            let mut c = ctrl.clone();
            c.extend(st.reads(&cond.signal_set()));
            let mut out = paths(then_, &c, st.clone());
            match else_ {
                Some(e) => out.extend(paths(e, &c, st)),
                None => out.push(st),
            }
            out
        }
        EStmt::Case { subject, items, .. } => {
            // the selection reads the subject and every label
            let mut c = ctrl.clone();
            c.extend(st.reads(&subject.signal_set()));
            for (labels, _) in items {
                for l in labels {
                    c.extend(st.reads(&l.signal_set()));
                }
            }
            let mut out = Vec::new();
            for (_, body) in items {
                out.extend(paths(body, &c, st.clone()));
            }
            if !items.iter().any(|(l, _)| l.is_empty()) {
                out.push(st);
            }
            out
        }
        EStmt::Assign { lhs, rhs, blocking, .. } => {
            let mut st = st;
            let mut d = st.reads(&rhs.signal_set());
            d.extend(ctrl);
            let mut idx = BTreeSet::new();
            lv_index_sigs(lhs, &mut idx);
            d.extend(st.reads(&idx));
            let mut parts = Vec::new();
            lv_parts(lhs, &mut parts);
            for (t, whole) in parts {
                let map = if *blocking { &mut st.blk } else { &mut st.nba };
                let mut nd = d.clone();
                if !whole {
                    match map.get(&t) {
                        Some(p) => nd.extend(p),
                        None => {
                            nd.insert(t);
                        }
                    }
                }
                map.insert(t, nd);
            }
            vec![st]
        }
    }
}

/// Dependencies of every output of `b`, by enumerating control paths.
pub fn path_deps(design: &DesignHierarchy, b: &CodeBlock) -> HashMap<SignalId, BTreeSet<SignalId>> {
    let mut out: HashMap<SignalId, BTreeSet<SignalId>> = HashMap::new();
    match b.kind {
        BlockKind::ModInputBlock | BlockKind::ModOutputBlock => {
            for s in &b.v_out {
                out.insert(*s, b.v_in.clone());
            }
        }
        BlockKind::AssignBlock => {
            let mut direct: HashMap<SignalId, BTreeSet<SignalId>> = HashMap::new();
            for &i in &b.statements {
                if let EStmt::Assign { lhs, rhs, .. } = &design.statements[i].body {
                    let mut d = rhs.signal_set();
                    lv_index_sigs(lhs, &mut d);
                    let mut parts = Vec::new();
                    lv_parts(lhs, &mut parts);
                    for (t, _) in parts {
                        direct.entry(t).or_default().extend(d.iter().copied());
                    }
                }
            }
            // substitute internal targets until nothing changes
            let mut cur = direct.clone();
            loop {
                let mut next = HashMap::new();
                for (t, d) in &cur {
                    let mut nd = BTreeSet::new();
                    for r in d {
                        match direct.get(r) {
                            Some(x) if r != t => nd.extend(x.iter().copied()),
                            _ => {
                                nd.insert(*r);
                            }
                        }
                    }
                    next.insert(*t, nd);
                }
                if next == cur {
                    break;
                }
                cur = next;
            }
            for s in &b.v_out {
                out.insert(*s, cur.get(s).cloned().unwrap_or_default());
            }
        }
        BlockKind::AlwaysBlock => {
            let st = &design.statements[b.statements[0]];
            let all = paths(&st.body, &BTreeSet::new(), PathState::default());
            for s in &b.v_out {
                let blk_somewhere = all.iter().any(|p| p.blk.contains_key(s));
                let mut d = BTreeSet::new();
                for p in &all {
                    if let Some(x) = p.nba.get(s) {
                        d.extend(x);
                    }
                    match p.blk.get(s) {
                        Some(x) => d.extend(x),
                        None if blk_somewhere => {
                            d.insert(*s);
                        }
                        None => {}
                    }
                }
                d.retain(|x| !b.triggers.contains(x));
                out.insert(*s, d);
            }
        }
    }
    out
}

// ------------------------------------------------------- dynamic slicing

/// Lines of every assignment to `s` inside the statement.
fn assign_lines(s: &EStmt, sig: SignalId, out: &mut BTreeSet<u32>) {
    s.visit(&mut |x| {
        if let EStmt::Assign { lhs, span, .. } = x {
            let mut parts = Vec::new();
            lv_parts(lhs, &mut parts);
            if parts.iter().any(|(t, _)| *t == sig) {
                out.insert(span.line);
            }
        }
    });
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct OraclePath {
    pub nodes: BTreeSet<PathNode>,
    pub edges: BTreeSet<(PathNode, PathNode)>,
}

/// Backward slice that decides whether a register was written from the
/// simulator's record of executed assignments rather than by re-evaluating
/// guards.
pub fn dynamic_slice(design: &DesignHierarchy, blocks: &BlockSet, run: &SimRun, sig: SignalId, t: i64) -> OraclePath {
    let mut driver: HashMap<SignalId, usize> = HashMap::new();
    for b in &blocks.blocks {
        for s in &b.v_out {
            driver.insert(*s, b.index);
        }
    }
    let deps: Vec<HashMap<SignalId, BTreeSet<SignalId>>> = blocks.blocks.iter().map(|b| path_deps(design, b)).collect();
    let mut out = OraclePath::default();
    let Some(&root) = driver.get(&sig) else { return out };
    if t < 0 || t as usize >= run.values.len() {
        return out;
    }
    let mut seen: BTreeSet<(SignalId, PathNode)> = BTreeSet::new();
    let mut work = vec![(sig, PathNode { block: root, cycle: t })];
    out.nodes.insert(PathNode { block: root, cycle: t });
    while let Some((s, n)) = work.pop() {
        if !seen.insert((s, n)) {
            continue;
        }
        let b = &blocks.blocks[n.block];
        let (srcs, c): (BTreeSet<SignalId>, i64) = if !b.is_sequential() {
            (deps[n.block].get(&s).cloned().unwrap_or_default(), n.cycle)
        } else {
            let c = n.cycle - 1;
            let mut lines = BTreeSet::new();
            assign_lines(&design.statements[b.statements[0]].body, s, &mut lines);
            let ran = c >= 0 && run.executed[c as usize].iter().any(|(x, l)| *x == s && lines.contains(l));
            if ran {
                (deps[n.block].get(&s).cloned().unwrap_or_default(), c)
            } else {
                (BTreeSet::from([s]), c)
            }
        };
        if c < 0 {
            continue;
        }
        for d in srcs {
            if let Some(&db) = driver.get(&d) {
                let src = PathNode { block: db, cycle: c };
                out.nodes.insert(src);
                out.edges.insert((src, n));
                work.push((d, src));
            }
        }
    }
    out
}

// ------------------------------------------------------------ waveforms

/// Replays a VCD one timestamp at a time and snapshots every variable as a
/// 0/1/x/z string at each rising clock edge.
pub struct NaiveVcd {
    /// cycles[k][name] = value string, most significant bit first.
    pub cycles: Vec<HashMap<String, String>>,
}

impl NaiveVcd {
    pub fn replay(text: &str, clock: &str) -> NaiveVcd {
        let mut widths: HashMap<String, usize> = HashMap::new();
        let mut names: Vec<(String, String)> = Vec::new();
        let mut scope: Vec<String> = Vec::new();
        let mut words = text.split_whitespace();
        // header
        while let Some(w) = words.next() {
            match w {
                "$scope" => {
                    words.next();
                    scope.push(words.next().unwrap().to_string());
                    words.next();
                }
                "$upscope" => {
                    scope.pop();
                    words.next();
                }
                "$var" => {
                    let mut v: Vec<&str> = Vec::new();
                    for x in words.by_ref() {
                        if x == "$end" {
                            break;
                        }
                        v.push(x);
                    }
                    let width: usize = v[1].parse().unwrap();
                    let code = v[2].to_string();
                    let mut r = v[3].to_string();
                    if let Some(i) = r.find('[') {
                        let sel = r[i..].to_string();
                        r.truncate(i);
                        if width == 1 && !sel.contains(':') {
                            r.push_str(&sel);
                        }
                    } else if let Some(sel) = v.get(4) {
                        if width == 1 && !sel.contains(':') {
                            r.push_str(sel);
                        }
                    }
                    let mut full = scope.clone();
                    full.push(r);
                    widths.insert(code.clone(), width);
                    names.push((full.join("."), code));
                }
                "$enddefinitions" => {
                    words.next();
                    break;
                }
                x if x.starts_with('$') => {
                    for y in words.by_ref() {
                        if y == "$end" {
                            break;
                        }
                    }
                }
                _ => {}
            }
        }
        let clock_code = names.iter().find(|(n, _)| n == clock).map(|(_, c)| c.clone()).expect("clock recorded");
        let mut cur: HashMap<String, String> = widths.iter().map(|(c, w)| (c.clone(), "x".repeat(*w))).collect();
        let extend = |v: &str, w: usize| -> String {
            if v.len() >= w {
                return v[v.len() - w..].to_string();
            }
            let pad = match v.chars().next().unwrap() {
                'x' => 'x',
                'z' => 'z',
                _ => '0',
            };
            let mut s: String = std::iter::repeat_n(pad, w - v.len()).collect();
            s.push_str(v);
            s
        };
        let mut cycles = Vec::new();
        let mut prev_clk = "x".to_string();
        let snapshot = |cur: &HashMap<String, String>, prev_clk: &mut String, cycles: &mut Vec<_>| {
            let now = cur[&clock_code].clone();
            if prev_clk == "0" && now == "1" {
                let snap: HashMap<String, String> = names.iter().map(|(n, c)| (n.clone(), cur[c].clone())).collect();
                cycles.push(snap);
            }
            *prev_clk = now;
        };
        let mut started = false;
        let mut pending: Option<&str> = None;
        for w in words {
            if let Some(val) = pending.take() {
                let width = widths[w];
                cur.insert(w.to_string(), extend(&val.to_ascii_lowercase(), width));
                continue;
            }
            if let Some(rest) = w.strip_prefix('#') {
                let _: u64 = rest.parse().unwrap();
                if started {
                    snapshot(&cur, &mut prev_clk, &mut cycles);
                }
                started = true;
            } else if w.starts_with('$') {
                continue;
            } else if let Some(v) = w.strip_prefix('b').or_else(|| w.strip_prefix('B')) {
                pending = Some(v);
            } else {
                let (v, code) = w.split_at(1);
                let width = widths[code];
                cur.insert(code.to_string(), extend(&v.to_ascii_lowercase(), width));
            }
        }
        if started {
            snapshot(&cur, &mut prev_clk, &mut cycles);
        }
        NaiveVcd { cycles }
    }
}
