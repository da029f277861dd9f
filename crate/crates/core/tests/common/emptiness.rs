//! Random small transducers and a grid-discretized emptiness check used as
//! an independent oracle for the region automaton and lasso search.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sitl_planner::predicates::Cube;
use sitl_planner::rat::int;
use sitl_planner::tst::{ClockAtom, Constraint, Rel, State, Transition, Tst};

const RELS: [Rel; 5] = [Rel::Lt, Rel::Le, Rel::Eq, Rel::Ge, Rel::Gt];

fn atom(rng: &mut ChaCha8Rng, clocks: usize) -> ClockAtom {
    ClockAtom {
        clock: rng.gen_range(0..clocks),
        rel: RELS[rng.gen_range(0..RELS.len())],
        k: int(rng.gen_range(0..=3)),
    }
}

fn constraint(rng: &mut ChaCha8Rng, clocks: usize, max_atoms: usize) -> Constraint {
    let n = rng.gen_range(0..=max_atoms);
    Constraint((0..n).map(|_| atom(rng, clocks)).collect())
}

pub fn random_tst(seed: u64) -> Tst {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clocks = rng.gen_range(1..=3);
    let n_states = rng.gen_range(2..=4);
    let num_acc = rng.gen_range(1..=2);
    let states = (0..n_states)
        .map(|i| {
            let invariant = if rng.gen_bool(0.4) {
                let c = rng.gen_range(0..clocks);
                let rel = if rng.gen_bool(0.5) { Rel::Lt } else { Rel::Le };
                Constraint(vec![ClockAtom { clock: c, rel, k: int(rng.gen_range(1..=3)) }])
            } else {
                Constraint::top()
            };
            State {
                name: format!("q{i}"),
                invariant,
                input: Cube::top(),
                output: Cube::top(),
                acc: rng.gen_range(0..1u64 << num_acc),
            }
        })
        .collect();
    let n_trans = rng.gen_range(3..=9);
    let mut transitions = Vec::new();
    for i in 0..n_trans {
        let src = if i == 0 || rng.gen_bool(0.15) { None } else { Some(rng.gen_range(0..n_states)) };
        let reset = (0..clocks).filter(|_| rng.gen_bool(0.4)).collect();
        transitions.push(Transition {
            src,
            dst: rng.gen_range(0..n_states),
            guard: if src.is_none() { Constraint::top() } else { constraint(&mut rng, clocks, 2) },
            reset,
            input: Cube::top(),
            output: Cube::top(),
            acc: rng.gen_range(0..1u64 << num_acc),
        });
    }
    Tst {
        name: format!("random{seed}"),
        inputs: vec![],
        outputs: vec![],
        clocks: (0..clocks).map(|c| format!("c{c}")).collect(),
        states,
        transitions,
        num_acc,
    }
}

/// Clock values in units of `1/den`, capped just above the largest constant.
struct Grid {
    den: i64,
    cap: Vec<i64>,
}

impl Grid {
    fn new(tst: &Tst) -> Grid {
        let n = tst.clocks.len();
        let den = 2 * (n as i64 + 1);
        let mut cmax = vec![0i64; n];
        let all = tst.states.iter().map(|s| &s.invariant).chain(tst.transitions.iter().map(|t| &t.guard));
        for c in all {
            for a in &c.0 {
                assert!(a.k.is_integer());
                cmax[a.clock] = cmax[a.clock].max(a.k.to_integer().try_into().unwrap());
            }
        }
        Grid {
            den,
            cap: cmax.iter().map(|m| m * den + 1).collect(),
        }
    }

    fn holds(&self, c: &Constraint, v: &[i64]) -> bool {
        c.0.iter().all(|a| {
            let x = v[a.clock];
            let k: i64 = a.k.to_integer().try_into().unwrap();
            let k = k * self.den;
            match a.rel {
                Rel::Lt => x < k,
                Rel::Le => x <= k,
                Rel::Eq => x == k,
                Rel::Ge => x >= k,
                Rel::Gt => x > k,
            }
        })
    }

    /// Truth just before reaching `v` (left limit).
    fn holds_before(&self, c: &Constraint, v: &[i64]) -> bool {
        c.0.iter().all(|a| {
            let x = v[a.clock];
            let k: i64 = a.k.to_integer().try_into().unwrap();
            let k = k * self.den;
            match a.rel {
                Rel::Lt | Rel::Le => x <= k,
                Rel::Eq => false,
                Rel::Ge | Rel::Gt => x > k,
            }
        })
    }

    fn delay(&self, v: &[i64], d: i64) -> Vec<i64> {
        v.iter().zip(&self.cap).map(|(x, c)| (x + d).min(*c)).collect()
    }

    fn beyond(&self, v: &[i64], o: usize) -> bool {
        v[o] == self.cap[o]
    }
}

/// Whether an accepting run exists, found on the grid graph: nodes are
/// (location, clock values at entry), an edge is a positive grid delay
/// followed by one transition. Acceptance mirrors the region automaton,
/// including one progress set per clock.
pub fn brute_force_nonempty(tst: &Tst) -> bool {
    let g = Grid::new(tst);
    let n = tst.clocks.len();
    let m = tst.num_acc + n;
    let max_delay = g.cap.iter().copied().max().unwrap_or(1);
    let mut index: HashMap<(Option<usize>, Vec<i64>), usize> = HashMap::new();
    let mut nodes: Vec<(Option<usize>, Vec<i64>)> = vec![(None, vec![0; n])];
    index.insert(nodes[0].clone(), 0);
    let mut adj: Vec<Vec<(usize, u64)>> = vec![Vec::new()];
    let mut i = 0;
    while i < nodes.len() {
        let (s, v) = nodes[i].clone();
        let mut fires: Vec<Vec<i64>> = Vec::new();
        match s {
            None => fires.push(v.clone()),
            Some(q) => {
                let inv = &tst.states[q].invariant;
                if g.holds(inv, &v) {
                    for d in 1..=max_delay + 1 {
                        let w = g.delay(&v, d);
                        if !g.holds_before(inv, &w) {
                            break;
                        }
                        fires.push(w);
                    }
                }
            }
        }
        fires.dedup();
        for w in fires {
            for t in tst.transitions.iter().filter(|t| t.src == s) {
                if !g.holds(&t.guard, &w) {
                    continue;
                }
                let mut dstv = w.clone();
                for &c in &t.reset {
                    dstv[c] = 0;
                }
                let mut bits = t.acc | tst.states[t.dst].acc;
                for o in 0..n {
                    if g.beyond(&w, o) || t.reset.contains(&o) || g.beyond(&dstv, o) {
                        bits |= 1 << (tst.num_acc + o);
                    }
                }
                let key = (Some(t.dst), dstv);
                let j = *index.entry(key.clone()).or_insert_with(|| {
                    nodes.push(key);
                    adj.push(Vec::new());
                    nodes.len() - 1
                });
                adj[i].push((j, bits));
            }
        }
        i += 1;
    }
    let comp = scc(&adj);
    let mut seen: HashMap<usize, u64> = HashMap::new();
    for (u, es) in adj.iter().enumerate() {
        for &(w, bits) in es {
            if comp[u] == comp[w] {
                *seen.entry(comp[u]).or_default() |= bits;
            }
        }
    }
    let full = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
    seen.values().any(|b| b & full == full)
}

/// Iterative Tarjan; returns the component id of each node.
fn scc(adj: &[Vec<(usize, u64)>]) -> Vec<usize> {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on = vec![false; n];
    let mut comp = vec![usize::MAX; n];
    let mut stack = Vec::new();
    let mut next = 0;
    let mut ncomp = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call = vec![(root, 0usize)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on[root] = true;
        while let Some(&mut (u, ref mut k)) = call.last_mut() {
            if *k < adj[u].len() {
                let w = adj[u][*k].0;
                *k += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on[w] = true;
                    call.push((w, 0));
                } else if on[w] {
                    low[u] = low[u].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(p, _)) = call.last() {
                    low[p] = low[p].min(low[u]);
                }
                if low[u] == index[u] {
                    while let Some(w) = stack.pop() {
                        on[w] = false;
                        comp[w] = ncomp;
                        if w == u {
                            break;
                        }
                    }
                    ncomp += 1;
                }
            }
        }
    }
    comp
}
