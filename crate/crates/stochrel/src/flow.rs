//! Transportation feasibility by augmenting-path max-flow.
//!
//! The network has a source feeding every left state with its mass, an
//! edge of full capacity from each left state to each related right
//! state, and each right state draining into a sink with its mass. A
//! coupling supported on the relation exists exactly when the max flow
//! ships the whole mass; otherwise the source side of a minimum cut is a
//! set `B` with `μ(B) > ν(B→)`.
//!
//! Augmenting paths are chosen shortest-first, so the number of
//! augmentations is bounded independently of the capacities and the
//! procedure terminates on exact rational data.

use num_traits::Zero;

use crate::rational::Rat;

/// Scalar abstraction: exact rationals compare against zero, floats
/// against a caller-provided tolerance.
pub(crate) trait FlowNum: Clone + PartialOrd {
    fn flow_zero() -> Self;
    fn add(&mut self, o: &Self);
    fn sub(&mut self, o: &Self);
    /// `self > eps`
    fn exceeds(&self, eps: &Self) -> bool;
}

impl FlowNum for Rat {
    fn flow_zero() -> Self {
        Rat::zero()
    }
    fn add(&mut self, o: &Self) {
        *self += o;
    }
    fn sub(&mut self, o: &Self) {
        *self -= o;
    }
    fn exceeds(&self, eps: &Self) -> bool {
        self > eps
    }
}

impl FlowNum for f64 {
    fn flow_zero() -> Self {
        0.0
    }
    fn add(&mut self, o: &Self) {
        *self += o;
    }
    fn sub(&mut self, o: &Self) {
        *self -= o;
    }
    fn exceeds(&self, eps: &Self) -> bool {
        self > eps
    }
}

impl FlowNum for u128 {
    fn flow_zero() -> Self {
        0
    }
    fn add(&mut self, o: &Self) {
        *self += o;
    }
    fn sub(&mut self, o: &Self) {
        *self -= o;
    }
    fn exceeds(&self, eps: &Self) -> bool {
        self > eps
    }
}

pub(crate) enum Transport<S> {
    /// Shipping plan `(left, right, mass)` over support indices.
    Feasible(Vec<(usize, usize, S)>),
    /// Left support indices on the source side of a minimum cut.
    Infeasible { cut_left: Vec<usize>, shipped: S },
}

struct Edge<S> {
    to: u32,
    rev: u32,
    cap: S,
}

/// Reusable network buffers; one instance per worker thread keeps the
/// hot per-pair checks allocation-free.
pub(crate) struct FlowBuffer<S> {
    adj: Vec<Vec<Edge<S>>>,
    parent: Vec<Option<(u32, u32)>>,
    queue: Vec<u32>,
}

impl<S: FlowNum> Default for FlowBuffer<S> {
    fn default() -> Self {
        FlowBuffer { adj: Vec::new(), parent: Vec::new(), queue: Vec::new() }
    }
}

impl<S: FlowNum> FlowBuffer<S> {
    fn add_edge(&mut self, a: usize, b: usize, cap: S) {
        let ra = self.adj[a].len() as u32;
        let rb = self.adj[b].len() as u32;
        self.adj[a].push(Edge { to: b as u32, rev: rb, cap });
        self.adj[b].push(Edge { to: a as u32, rev: ra, cap: S::flow_zero() });
    }

    /// Runs max-flow; afterwards `self.parent` marks residual-reachable
    /// nodes of the final breadth-first search. Returns whether the whole
    /// mass was shipped.
    fn max_flow<F>(&mut self, mu: &[S], nu: &[S], related: F, eps: &S) -> bool
    where
        F: Fn(usize, usize) -> bool,
    {
        let p = mu.len();
        let q = nu.len();
        let nodes = p + q + 2;
        let source = 0usize;
        let sink = p + q + 1;

        let mut total = S::flow_zero();
        for m in mu {
            total.add(m);
        }

        if self.adj.len() < nodes {
            self.adj.resize_with(nodes, Vec::new);
        }
        for a in &mut self.adj[..nodes] {
            a.clear();
        }
        self.parent.clear();
        self.parent.resize(nodes, None);

        for (i, m) in mu.iter().enumerate() {
            self.add_edge(source, 1 + i, m.clone());
        }
        for i in 0..p {
            for j in 0..q {
                if related(i, j) {
                    self.add_edge(1 + i, 1 + p + j, total.clone());
                }
            }
        }
        for (j, m) in nu.iter().enumerate() {
            self.add_edge(1 + p + j, sink, m.clone());
        }

        let mut shipped = S::flow_zero();
        loop {
            self.parent[..nodes].iter_mut().for_each(|x| *x = None);
            self.queue.clear();
            self.queue.push(source as u32);
            self.parent[source] = Some((source as u32, u32::MAX));
            let mut head = 0;
            while head < self.queue.len() && self.parent[sink].is_none() {
                let v = self.queue[head] as usize;
                head += 1;
                for (k, e) in self.adj[v].iter().enumerate() {
                    if self.parent[e.to as usize].is_none() && e.cap.exceeds(eps) {
                        self.parent[e.to as usize] = Some((v as u32, k as u32));
                        self.queue.push(e.to);
                    }
                }
            }
            if self.parent[sink].is_none() {
                break;
            }
            // bottleneck along the path
            let mut bottleneck: Option<S> = None;
            let mut v = sink;
            while v != source {
                let (u, k) = self.parent[v].unwrap();
                let cap = &self.adj[u as usize][k as usize].cap;
                if bottleneck.as_ref().map_or(true, |b| cap < b) {
                    bottleneck = Some(cap.clone());
                }
                v = u as usize;
            }
            let bottleneck = bottleneck.unwrap();
            let mut v = sink;
            while v != source {
                let (u, k) = self.parent[v].unwrap();
                let rev = self.adj[u as usize][k as usize].rev;
                self.adj[u as usize][k as usize].cap.sub(&bottleneck);
                self.adj[v][rev as usize].cap.add(&bottleneck);
                v = u as usize;
            }
            shipped.add(&bottleneck);
        }

        let mut deficit = total;
        deficit.sub(&shipped);
        !deficit.exceeds(eps)
    }

    /// Feasibility only: `Ok(())` or the cut's left support indices.
    pub fn check<F>(&mut self, mu: &[S], nu: &[S], related: F, eps: &S) -> Result<(), Vec<usize>>
    where
        F: Fn(usize, usize) -> bool,
    {
        if self.max_flow(mu, nu, related, eps) {
            Ok(())
        } else {
            Err(self.cut_left(mu.len()))
        }
    }

    /// Full transport outcome with a shipping plan on success.
    pub fn transport<F>(&mut self, mu: &[S], nu: &[S], related: F, eps: &S) -> Transport<S>
    where
        F: Fn(usize, usize) -> bool,
    {
        let p = mu.len();
        let q = nu.len();
        if self.max_flow(mu, nu, related, eps) {
            // read the plan off the reverse capacities of relation edges
            let mut plan = Vec::new();
            for i in 0..p {
                for e in &self.adj[1 + i] {
                    let t = e.to as usize;
                    if t >= 1 + p && t < 1 + p + q {
                        let carried = self.adj[t][e.rev as usize].cap.clone();
                        if carried.exceeds(eps) {
                            plan.push((i, t - 1 - p, carried));
                        }
                    }
                }
            }
            Transport::Feasible(plan)
        } else {
            let mut shipped = S::flow_zero();
            for e in &self.adj[0] {
                shipped.add(&self.adj[e.to as usize][e.rev as usize].cap);
            }
            Transport::Infeasible { cut_left: self.cut_left(p), shipped }
        }
    }

    fn cut_left(&self, p: usize) -> Vec<usize> {
        // the last breadth-first search marked every residual-reachable
        // node; the reachable left supports form the violating set
        (0..p).filter(|&i| self.parent[1 + i].is_some()).collect()
    }
}

/// One-shot convenience wrapper around [`FlowBuffer::transport`].
pub(crate) fn transport<S, F>(mu: &[S], nu: &[S], related: F, eps: &S) -> Transport<S>
where
    S: FlowNum,
    F: Fn(usize, usize) -> bool,
{
    FlowBuffer::default().transport(mu, nu, related, eps)
}
