//! Max-flow / min-cut on directed networks with real capacities.
//!
//! Solvers are interchangeable behind [`MaxFlowSolver`] and can be looked up
//! by name through [`SolverRegistry`].

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("node {node} out of range for a network of {nodes} nodes")]
    NodeOutOfRange { node: usize, nodes: usize },
    #[error("capacity {0} must be finite and non-negative")]
    BadCapacity(f64),
    #[error("source and sink must be distinct")]
    SourceIsSink,
    #[error("unknown max-flow solver {0:?}")]
    UnknownSolver(String),
}

/// Residual-graph representation: arcs are stored in pairs, arc `a` and its
/// reverse `a ^ 1`.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    source: usize,
    sink: usize,
    adjacency: Vec<Vec<u32>>,
    to: Vec<u32>,
    capacity: Vec<f64>,
}

impl FlowNetwork {
    pub fn new(nodes: usize, source: usize, sink: usize) -> Result<Self, FlowError> {
        for node in [source, sink] {
            if node >= nodes {
                return Err(FlowError::NodeOutOfRange { node, nodes });
            }
        }
        if source == sink {
            return Err(FlowError::SourceIsSink);
        }
        Ok(Self {
            source,
            sink,
            adjacency: vec![Vec::new(); nodes],
            to: Vec::new(),
            capacity: Vec::new(),
        })
    }

    pub fn nodes(&self) -> usize {
        self.adjacency.len()
    }
    pub fn source(&self) -> usize {
        self.source
    }
    pub fn sink(&self) -> usize {
        self.sink
    }

    /// Directed arc `from -> to`.
    pub fn add_arc(&mut self, from: usize, to: usize, capacity: f64) -> Result<(), FlowError> {
        self.add_edge(from, to, capacity, 0.0)
    }

    /// A pair of opposite arcs sharing one residual pair.
    pub fn add_edge(
        &mut self,
        a: usize,
        b: usize,
        cap_ab: f64,
        cap_ba: f64,
    ) -> Result<(), FlowError> {
        let n = self.nodes();
        for node in [a, b] {
            if node >= n {
                return Err(FlowError::NodeOutOfRange { node, nodes: n });
            }
        }
        for c in [cap_ab, cap_ba] {
            if !c.is_finite() || c < 0.0 {
                return Err(FlowError::BadCapacity(c));
            }
        }
        let id = self.to.len() as u32;
        self.to.push(b as u32);
        self.capacity.push(cap_ab);
        self.to.push(a as u32);
        self.capacity.push(cap_ba);
        self.adjacency[a].push(id);
        self.adjacency[b].push(id + 1);
        Ok(())
    }

    /// Capacity of the cut separating `source_side` from the rest.
    pub fn cut_capacity(&self, source_side: &[bool]) -> f64 {
        let mut total = 0.0;
        for (u, arcs) in self.adjacency.iter().enumerate() {
            if !source_side[u] {
                continue;
            }
            for &a in arcs {
                if !source_side[self.to[a as usize] as usize] {
                    total += self.capacity[a as usize];
                }
            }
        }
        total
    }

    fn epsilon(&self) -> f64 {
        let max = self.capacity.iter().copied().fold(1.0f64, f64::max);
        max * 1e-13
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxFlow {
    pub value: f64,
    /// `true` for nodes reachable from the source in the final residual graph.
    pub source_side: Vec<bool>,
}

pub trait MaxFlowSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, network: &FlowNetwork) -> MaxFlow;
}

struct Residual<'a> {
    net: &'a FlowNetwork,
    residual: Vec<f64>,
    eps: f64,
}

impl<'a> Residual<'a> {
    fn new(net: &'a FlowNetwork) -> Self {
        Self { net, residual: net.capacity.clone(), eps: net.epsilon() }
    }

    fn push(&mut self, arc: usize, amount: f64) {
        self.residual[arc] -= amount;
        self.residual[arc ^ 1] += amount;
    }

    fn finish(self) -> MaxFlow {
        let net = self.net;
        let mut seen = vec![false; net.nodes()];
        let mut queue = VecDeque::from([net.source]);
        seen[net.source] = true;
        while let Some(u) = queue.pop_front() {
            for &a in &net.adjacency[u] {
                let v = net.to[a as usize] as usize;
                if !seen[v] && self.residual[a as usize] > self.eps {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        let value = net.adjacency[net.source]
            .iter()
            .map(|&a| net.capacity[a as usize] - self.residual[a as usize])
            .sum();
        MaxFlow { value, source_side: seen }
    }
}

/// Dinic's blocking-flow algorithm with an iterative DFS.
#[derive(Debug, Default, Clone, Copy)]
pub struct Dinic;

impl MaxFlowSolver for Dinic {
    fn name(&self) -> &'static str {
        "dinic"
    }

    fn solve(&self, net: &FlowNetwork) -> MaxFlow {
        let n = net.nodes();
        let mut res = Residual::new(net);
        let mut level = vec![u32::MAX; n];
        let mut cursor = vec![0usize; n];
        let mut queue = VecDeque::new();
        let mut path: Vec<u32> = Vec::new();

        loop {
            level.fill(u32::MAX);
            level[net.source] = 0;
            queue.clear();
            queue.push_back(net.source);
            while let Some(u) = queue.pop_front() {
                for &a in &net.adjacency[u] {
                    let v = net.to[a as usize] as usize;
                    if level[v] == u32::MAX && res.residual[a as usize] > res.eps {
                        level[v] = level[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            if level[net.sink] == u32::MAX {
                break;
            }
            cursor.fill(0);

            // Blocking flow: grow a path from the source along admissible arcs.
            path.clear();
            let mut u = net.source;
            loop {
                if u == net.sink {
                    let bottleneck = path
                        .iter()
                        .map(|&a| res.residual[a as usize])
                        .fold(f64::INFINITY, f64::min);
                    let mut retreat_to = None;
                    for (i, &a) in path.iter().enumerate() {
                        res.push(a as usize, bottleneck);
                        if retreat_to.is_none() && res.residual[a as usize] <= res.eps {
                            retreat_to = Some(i);
                        }
                    }
                    let cut = retreat_to.unwrap_or(0);
                    path.truncate(cut);
                    u = match path.last() {
                        Some(&a) => net.to[a as usize] as usize,
                        None => net.source,
                    };
                    continue;
                }

                let arcs = &net.adjacency[u];
                let mut advanced = false;
                while cursor[u] < arcs.len() {
                    let a = arcs[cursor[u]] as usize;
                    let v = net.to[a] as usize;
                    if res.residual[a] > res.eps && level[v] == level[u] + 1 {
                        path.push(a as u32);
                        u = v;
                        advanced = true;
                        break;
                    }
                    cursor[u] += 1;
                }
                if advanced {
                    continue;
                }
                // Dead end: prune `u` and step back.
                level[u] = u32::MAX;
                match path.pop() {
                    Some(a) => {
                        u = net.to[(a ^ 1) as usize] as usize;
                        cursor[u] += 1;
                    }
                    None => break,
                }
            }
        }
        res.finish()
    }
}

/// Shortest-augmenting-path (BFS) max flow.
#[derive(Debug, Default, Clone, Copy)]
pub struct EdmondsKarp;

impl MaxFlowSolver for EdmondsKarp {
    fn name(&self) -> &'static str {
        "edmonds-karp"
    }

    fn solve(&self, net: &FlowNetwork) -> MaxFlow {
        let n = net.nodes();
        let mut res = Residual::new(net);
        let mut parent_arc = vec![u32::MAX; n];
        loop {
            parent_arc.fill(u32::MAX);
            let mut queue = VecDeque::from([net.source]);
            let mut reached = false;
            while let Some(u) = queue.pop_front() {
                for &a in &net.adjacency[u] {
                    let v = net.to[a as usize] as usize;
                    if v != net.source
                        && parent_arc[v] == u32::MAX
                        && res.residual[a as usize] > res.eps
                    {
                        parent_arc[v] = a;
                        if v == net.sink {
                            reached = true;
                            break;
                        }
                        queue.push_back(v);
                    }
                }
                if reached {
                    break;
                }
            }
            if !reached {
                break;
            }
            let mut bottleneck = f64::INFINITY;
            let mut v = net.sink;
            while v != net.source {
                let a = parent_arc[v] as usize;
                bottleneck = bottleneck.min(res.residual[a]);
                v = net.to[a ^ 1] as usize;
            }
            let mut v = net.sink;
            while v != net.source {
                let a = parent_arc[v] as usize;
                res.push(a, bottleneck);
                v = net.to[a ^ 1] as usize;
            }
        }
        res.finish()
    }
}

pub type SolverFactory = fn() -> Box<dyn MaxFlowSolver>;

/// Name-indexed max-flow solvers.
#[derive(Clone)]
pub struct SolverRegistry {
    factories: BTreeMap<&'static str, SolverFactory>,
}

impl SolverRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("dinic", || Box::new(Dinic));
        reg.register("edmonds-karp", || Box::new(EdmondsKarp));
        reg
    }

    pub fn register(&mut self, name: &'static str, factory: SolverFactory) {
        self.factories.insert(name, factory);
    }

    pub fn create(&self, name: &str) -> Result<Box<dyn MaxFlowSolver>, FlowError> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| FlowError::UnknownSolver(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }
}

impl Default for SolverRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

pub fn max_flow(network: &FlowNetwork) -> MaxFlow {
    Dinic.solve(network)
}
