//! Accepting lassos in a region automaton: counter degeneralization, nested
//! depth-first search, and deterministic lasso enumeration.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::region::RegionAutomaton;
use crate::tst::Tst;

/// Single-acceptance automaton: node `(q, k)` means sets `0..k` have been
/// seen since the last completion; `k == m` marks a completion.
#[derive(Debug, Clone)]
pub struct Degen {
    pub nodes: Vec<(usize, usize)>,
    /// `(target node, region-automaton edge)` in edge order.
    pub succ: Vec<Vec<(usize, usize)>>,
    pub accepting: Vec<bool>,
    pub init: usize,
    pub levels: usize,
}

fn advance(level: usize, m: usize, bits: u64) -> usize {
    let mut k = if level == m { 0 } else { level };
    while k < m && bits >> k & 1 == 1 {
        k += 1;
    }
    k
}

/// Whether the initial transition's output allows the requirement on `y`.
fn initial_ok(tst: &Tst, ra: &RegionAutomaton, edge: usize, want: Option<bool>) -> bool {
    match (want, tst.outputs.first()) {
        (Some(w), Some(y)) => tst.transitions[ra.edges[edge].transition].output.0.get(y) == Some(&w),
        _ => true,
    }
}

/// Reachable part of the counter construction. Initial edges are filtered
/// by `want` on the first output.
pub fn degeneralize(ra: &RegionAutomaton, tst: &Tst, want: Option<bool>) -> Degen {
    let m = ra.num_acc;
    let levels = m + 1;
    let mut id = vec![usize::MAX; ra.states.len() * levels];
    let mut nodes = vec![(0usize, 0usize)];
    id[0] = 0;
    let mut succ: Vec<Vec<(usize, usize)>> = vec![Vec::new()];
    let mut i = 0;
    while i < nodes.len() {
        let (q, k) = nodes[i];
        for &e in &ra.out[q] {
            if q == 0 && !initial_ok(tst, ra, e, want) {
                continue;
            }
            let edge = &ra.edges[e];
            let bits = edge.acc | ra.states[edge.dst].acc;
            let k2 = advance(k, m, bits);
            let slot = edge.dst * levels + k2;
            if id[slot] == usize::MAX {
                id[slot] = nodes.len();
                nodes.push((edge.dst, k2));
                succ.push(Vec::new());
            }
            succ[i].push((id[slot], e));
        }
        i += 1;
    }
    let accepting = nodes.iter().map(|&(_, k)| k == m).collect();
    Degen {
        nodes,
        succ,
        accepting,
        init: 0,
        levels,
    }
}

/// Region-automaton lasso: `edges[j]` leads from `states[j]` to
/// `states[j + 1]`; the last edge returns to `states[loop_start]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lasso {
    pub states: Vec<usize>,
    pub edges: Vec<usize>,
    pub loop_start: usize,
}

impl Lasso {
    pub fn prefix_len(&self) -> usize {
        self.loop_start
    }

    pub fn suffix_len(&self) -> usize {
        self.states.len() - self.loop_start
    }
}

fn to_lasso(d: &Degen, nodes: &[usize], edges: &[usize], loop_start: usize) -> Lasso {
    Lasso {
        states: nodes.iter().map(|&n| d.nodes[n].0).collect(),
        edges: edges.to_vec(),
        loop_start,
    }
}

/// Nested depth-first search; `None` iff no accepting lasso exists whose
/// initial edge meets `want`.
pub fn find_lasso(ra: &RegionAutomaton, tst: &Tst, want: Option<bool>) -> Option<Lasso> {
    let d = degeneralize(ra, tst, want);
    ndfs(&d)
}

pub fn ndfs(d: &Degen) -> Option<Lasso> {
    let n = d.nodes.len();
    let mut blue = vec![false; n];
    let mut red = vec![false; n];
    // (node, next successor index, edge used to enter)
    let mut stack: Vec<(usize, usize, usize)> = vec![(d.init, 0, usize::MAX)];
    blue[d.init] = true;
    while let Some(&mut (v, ref mut i, _)) = stack.last_mut() {
        if *i < d.succ[v].len() {
            let (w, _) = d.succ[v][*i];
            let e = d.succ[v][*i].1;
            *i += 1;
            if !blue[w] {
                blue[w] = true;
                stack.push((w, 0, e));
            }
            continue;
        }
        if d.accepting[v] {
            if let Some((rn, re)) = red_search(d, v, &mut red) {
                let mut nodes: Vec<usize> = stack.iter().map(|f| f.0).collect();
                let mut edges: Vec<usize> = stack.iter().skip(1).map(|f| f.2).collect();
                let loop_start = nodes.len() - 1;
                nodes.extend(rn);
                edges.extend(re);
                return Some(to_lasso(d, &nodes, &edges, loop_start));
            }
        }
        stack.pop();
    }
    None
}

/// Cycle back to `seed`; returns the nodes after `seed` and all edges.
fn red_search(d: &Degen, seed: usize, red: &mut [bool]) -> Option<(Vec<usize>, Vec<usize>)> {
    let mut stack: Vec<(usize, usize, usize)> = vec![(seed, 0, usize::MAX)];
    red[seed] = true;
    while let Some(&mut (v, ref mut i, _)) = stack.last_mut() {
        if *i < d.succ[v].len() {
            let (w, e) = d.succ[v][*i];
            *i += 1;
            if w == seed {
                let nodes = stack.iter().skip(1).map(|f| f.0).collect();
                let mut edges: Vec<usize> = stack.iter().skip(1).map(|f| f.2).collect();
                edges.push(e);
                return Some((nodes, edges));
            }
            if !red[w] {
                red[w] = true;
                stack.push((w, 0, e));
            }
            continue;
        }
        stack.pop();
    }
    None
}

/// Nodes from which an accepting cycle is reachable.
pub fn live_nodes(d: &Degen) -> Vec<bool> {
    let n = d.nodes.len();
    let comp = tarjan(d);
    let ncomp = comp.iter().copied().max().map_or(0, |c| c + 1);
    let mut size = vec![0usize; ncomp];
    let mut good = vec![false; ncomp];
    for v in 0..n {
        size[comp[v]] += 1;
    }
    for v in 0..n {
        if d.accepting[v] {
            let c = comp[v];
            let cyclic = size[c] > 1 || d.succ[v].iter().any(|&(w, _)| w == v);
            if cyclic {
                good[c] = true;
            }
        }
    }
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    for v in 0..n {
        for &(w, _) in &d.succ[v] {
            pred[w].push(v);
        }
    }
    let mut live: Vec<bool> = (0..n).map(|v| good[comp[v]]).collect();
    let mut queue: Vec<usize> = (0..n).filter(|&v| live[v]).collect();
    while let Some(v) = queue.pop() {
        for &u in &pred[v] {
            if !live[u] {
                live[u] = true;
                queue.push(u);
            }
        }
    }
    live
}

fn tarjan(d: &Degen) -> Vec<usize> {
    let n = d.nodes.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on = vec![false; n];
    let mut comp = vec![usize::MAX; n];
    let mut st = Vec::new();
    let mut counter = 0;
    let mut ncomp = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        st.push(root);
        on[root] = true;
        while let Some(&mut (v, ref mut i)) = call.last_mut() {
            if *i < d.succ[v].len() {
                let w = d.succ[v][*i].0;
                *i += 1;
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    st.push(w);
                    on[w] = true;
                    call.push((w, 0));
                } else if on[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(u, _)) = call.last() {
                low[u] = low[u].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = st.pop().unwrap();
                    on[w] = false;
                    comp[w] = ncomp;
                    if w == v {
                        break;
                    }
                }
                ncomp += 1;
            }
        }
    }
    comp
}

/// Enumerates simple accepting lassos of the degeneralized automaton in DFS
/// order (edges in automaton order), skipping repeats at the region level.
pub struct LassoIter {
    d: Degen,
    live: Vec<bool>,
    stack: Vec<(usize, usize, usize)>,
    pos: Vec<usize>,
    seen: HashSet<Lasso>,
    pub bound: usize,
    pub emitted: usize,
    pub max_steps: u64,
    steps: u64,
    /// Set when enumeration stopped at `bound` or `max_steps`.
    pub bound_hit: bool,
}

impl LassoIter {
    pub fn new(ra: &RegionAutomaton, tst: &Tst, want: Option<bool>, bound: usize) -> LassoIter {
        let d = degeneralize(ra, tst, want);
        let live = live_nodes(&d);
        let n = d.nodes.len();
        let mut pos = vec![usize::MAX; n];
        let stack = if live[d.init] {
            pos[d.init] = 0;
            vec![(d.init, 0, usize::MAX)]
        } else {
            Vec::new()
        };
        LassoIter {
            d,
            live,
            stack,
            pos,
            seen: HashSet::new(),
            bound,
            emitted: 0,
            max_steps: 20_000_000,
            steps: 0,
            bound_hit: false,
        }
    }

    pub fn degen(&self) -> &Degen {
        &self.d
    }
}

impl Iterator for LassoIter {
    type Item = Lasso;

    fn next(&mut self) -> Option<Lasso> {
        if self.emitted >= self.bound {
            self.bound_hit = true;
            return None;
        }
        while let Some(&mut (v, ref mut i, _)) = self.stack.last_mut() {
            self.steps += 1;
            if self.steps > self.max_steps {
                self.bound_hit = true;
                return None;
            }
            if *i >= self.d.succ[v].len() {
                self.pos[v] = usize::MAX;
                self.stack.pop();
                continue;
            }
            let (w, e) = self.d.succ[v][*i];
            *i += 1;
            if self.pos[w] != usize::MAX {
                let p = self.pos[w];
                if (p..self.stack.len()).any(|k| self.d.accepting[self.stack[k].0]) {
                    let nodes: Vec<usize> = self.stack.iter().map(|f| f.0).collect();
                    let mut edges: Vec<usize> = self.stack.iter().skip(1).map(|f| f.2).collect();
                    edges.push(e);
                    let lasso = to_lasso(&self.d, &nodes, &edges, p);
                    if self.seen.insert(lasso.clone()) {
                        self.emitted += 1;
                        return Some(lasso);
                    }
                }
                continue;
            }
            if self.live[w] {
                self.pos[w] = self.stack.len();
                self.stack.push((w, 0, e));
            }
        }
        None
    }
}

/// Checks the lasso invariants against the automaton.
pub fn check_lasso(ra: &RegionAutomaton, tst: &Tst, l: &Lasso, want: Option<bool>) -> Result<(), String> {
    let n = l.states.len();
    if n == 0 || l.edges.len() != n || l.loop_start == 0 || l.loop_start >= n {
        return Err("malformed lasso".into());
    }
    if l.states[0] != 0 {
        return Err("lasso must start at the initial state".into());
    }
    for j in 0..n {
        let e = &ra.edges[l.edges[j]];
        let to = if j + 1 < n { l.states[j + 1] } else { l.states[l.loop_start] };
        if e.src != l.states[j] || e.dst != to {
            return Err(format!("edge {j} does not connect the lasso"));
        }
    }
    if !initial_ok(tst, ra, l.edges[0], want) {
        return Err("initial output does not meet the requirement".into());
    }
    let mut bits = 0u64;
    for j in l.loop_start..n {
        bits |= ra.states[l.states[j]].acc | ra.edges[l.edges[j]].acc;
    }
    let all = if ra.num_acc == 64 { u64::MAX } else { (1u64 << ra.num_acc) - 1 };
    if bits & all != all {
        return Err(format!("suffix misses acceptance sets {:b}", all & !bits));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(succ: Vec<Vec<usize>>, accepting: Vec<bool>) -> Degen {
        let n = succ.len();
        let mut e = 0;
        let succ = succ
            .into_iter()
            .map(|v| {
                v.into_iter()
                    .map(|w| {
                        e += 1;
                        (w, e - 1)
                    })
                    .collect()
            })
            .collect();
        Degen {
            nodes: (0..n).map(|i| (i, 0)).collect(),
            succ,
            accepting,
            init: 0,
            levels: 1,
        }
    }

    #[test]
    fn counter_advance() {
        assert_eq!(advance(0, 2, 0b01), 1);
        assert_eq!(advance(0, 2, 0b11), 2);
        assert_eq!(advance(2, 2, 0b10), 0);
        assert_eq!(advance(1, 2, 0b01), 1);
        assert_eq!(advance(0, 0, 0), 0);
    }

    #[test]
    fn ndfs_finds_and_rejects() {
        // 0 -> 1 -> 2 -> 1, accepting 2.
        let d = toy(vec![vec![1], vec![2], vec![1]], vec![false, false, true]);
        let l = ndfs(&d).unwrap();
        // The seed is 2, so the cycle is 2 -> 1 -> 2 after prefix 0 -> 1.
        assert_eq!(l.states, vec![0, 1, 2, 1]);
        assert_eq!(l.loop_start, 2);
        assert_eq!(l.edges.len(), 4);
        // Accepting node off every cycle.
        let d = toy(vec![vec![1], vec![2], vec![2]], vec![false, true, false]);
        assert!(ndfs(&d).is_none());
        assert!(!live_nodes(&d)[0]);
    }

    #[test]
    fn live_nodes_track_accepting_cycles() {
        let d = toy(vec![vec![1, 2], vec![1], vec![3], vec![2]], vec![false, false, false, true]);
        let live = live_nodes(&d);
        assert_eq!(live, vec![true, false, true, true]);
    }
}
