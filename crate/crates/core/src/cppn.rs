//! Compositional pattern producing networks: small acyclic function networks
//! queried over spatial coordinates. They encode component geometries and
//! robot body plans; structure grows by mutation from a minimal
//! inputs-to-outputs net.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights are clamped into this range on construction and mutation.
pub const WEIGHT_BOUND: f64 = 3.0;

/// Hidden-node activation functions. Inputs pass values through unchanged;
/// output nodes always apply the bounded squash regardless of their tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Sigmoid,
    Sine,
    Gaussian,
    Absolute,
}

pub const ACTIVATIONS: [Activation; 5] = [
    Activation::Linear,
    Activation::Sigmoid,
    Activation::Sine,
    Activation::Gaussian,
    Activation::Absolute,
];

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Sigmoid => sigmoid(x),
            Activation::Sine => x.sin(),
            Activation::Gaussian => (-x * x).exp(),
            Activation::Absolute => x.abs(),
        }
    }

    /// Even functions of their input; a net whose x-dependence passes only
    /// through these is mirror-symmetric in x.
    pub fn is_even(&self) -> bool {
        matches!(self, Activation::Gaussian | Activation::Absolute)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Bounded output squash: `2*sigmoid(x) - 1`, mapping the real line into
/// [-1, 1].
pub fn squash(x: f64) -> f64 {
    2.0 * sigmoid(x) - 1.0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: u32,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub from: u32,
    pub to: u32,
    pub weight: f64,
}

/// Mutation rates for one mutation call. Every operator fires independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CppnMutationRates {
    /// Per-connection probability of a Gaussian weight perturbation.
    pub weight_prob: f64,
    /// Standard deviation of the weight perturbation.
    pub weight_sigma: f64,
    /// Probability of adding one connection between a uniform valid pair.
    pub add_connection_prob: f64,
    /// Probability of splitting a uniform connection with a new node.
    pub add_node_prob: f64,
    /// Probability of re-rolling the activation of a uniform hidden node.
    pub change_activation_prob: f64,
}

impl Default for CppnMutationRates {
    fn default() -> Self {
        Self {
            weight_prob: 0.8,
            weight_sigma: 0.2,
            add_connection_prob: 0.1,
            add_node_prob: 0.05,
            change_activation_prob: 0.05,
        }
    }
}

impl CppnMutationRates {
    pub fn zero() -> Self {
        Self {
            weight_prob: 0.0,
            weight_sigma: 0.0,
            add_connection_prob: 0.0,
            add_node_prob: 0.0,
            change_activation_prob: 0.0,
        }
    }
}

/// An acyclic function network. Node ids 0..inputs are the input nodes
/// (the last input is conventionally fed the bias 1.0), the next `outputs`
/// ids are output nodes, and higher ids are hidden nodes added by mutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cppn {
    pub nodes: Vec<Node>,
    pub connections: Vec<Connection>,
    pub inputs: usize,
    pub outputs: usize,
}

impl Cppn {
    /// Minimal-structure net: every input wired to every output, no hidden
    /// nodes, weights uniform in [-1, 1].
    pub fn fully_connected<R: rand::Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let mut nodes = Vec::with_capacity(inputs + outputs);
        for id in 0..inputs {
            nodes.push(Node { id: id as u32, activation: Activation::Linear });
        }
        for id in inputs..inputs + outputs {
            nodes.push(Node { id: id as u32, activation: Activation::Sigmoid });
        }
        let mut connections = Vec::with_capacity(inputs * outputs);
        for from in 0..inputs {
            for to in inputs..inputs + outputs {
                connections.push(Connection {
                    from: from as u32,
                    to: to as u32,
                    weight: rng.random_range(-1.0..=1.0),
                });
            }
        }
        Self { nodes, connections, inputs, outputs }
    }

    pub fn is_input(&self, id: u32) -> bool {
        (id as usize) < self.inputs
    }

    pub fn is_output(&self, id: u32) -> bool {
        (id as usize) >= self.inputs && (id as usize) < self.inputs + self.outputs
    }

    pub fn is_hidden(&self, id: u32) -> bool {
        (id as usize) >= self.inputs + self.outputs
    }

    fn hidden_ids(&self) -> Vec<u32> {
        self.nodes.iter().map(|n| n.id).filter(|&id| self.is_hidden(id)).collect()
    }

    /// Map from node id to index in `self.nodes`.
    fn index_of(&self) -> std::collections::BTreeMap<u32, usize> {
        self.nodes.iter().enumerate().map(|(idx, n)| (n.id, idx)).collect()
    }

    /// Feedforward evaluation in topological order. Output nodes map their
    /// weighted input sum through the bounded squash, so every output lies
    /// in [-1, 1].
    pub fn eval(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        if inputs.len() != self.inputs {
            return Err(Error::Dimension { expected: self.inputs, actual: inputs.len() });
        }
        let index_of = self.index_of();
        let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.nodes.len()];
        for conn in &self.connections {
            incoming[index_of[&conn.to]].push((index_of[&conn.from], conn.weight));
        }
        let mut values = vec![0.0; self.nodes.len()];
        for &idx in &self.topo_order() {
            let node = &self.nodes[idx];
            if self.is_input(node.id) {
                values[idx] = inputs[node.id as usize];
                continue;
            }
            let mut sum = 0.0;
            for &(from, weight) in &incoming[idx] {
                sum += weight * values[from];
            }
            values[idx] = if self.is_output(node.id) { squash(sum) } else { node.activation.apply(sum) };
        }
        Ok((0..self.outputs)
            .map(|o| values[index_of[&((self.inputs + o) as u32)]])
            .collect())
    }

    /// Query the net over a `width x height` lattice. Cell (col, row) is fed
    /// x = 2*col/(width-1) - 1 (0 when width = 1), y likewise from the row,
    /// r = sqrt(x^2 + y^2) and bias 1. Returns `grid[row][col]`.
    pub fn query_lattice(&self, width: usize, height: usize) -> Result<Vec<Vec<Vec<f64>>>> {
        if width < 1 || height < 1 {
            return Err(Error::Dimension { expected: 1, actual: 0 });
        }
        if self.inputs != 4 {
            return Err(Error::Dimension { expected: 4, actual: self.inputs });
        }
        let coord = |i: usize, n: usize| {
            if n == 1 {
                0.0
            } else {
                2.0 * i as f64 / (n - 1) as f64 - 1.0
            }
        };
        let mut grid = Vec::with_capacity(height);
        for row in 0..height {
            let y = coord(row, height);
            let mut cells = Vec::with_capacity(width);
            for col in 0..width {
                let x = coord(col, width);
                let r = (x * x + y * y).sqrt();
                cells.push(self.eval(&[x, y, r, 1.0])?);
            }
            grid.push(cells);
        }
        Ok(grid)
    }

    /// Structural mutation. Operators fire independently: weight jitter per
    /// connection, add-connection, add-node-on-connection (split), and
    /// change-activation on a hidden node. The result is always acyclic.
    pub fn mutate<R: rand::Rng>(&self, rng: &mut R, rates: &CppnMutationRates) -> Self {
        use rand_distr::Distribution;
        let mut net = self.clone();

        if rates.weight_prob > 0.0 {
            let normal = rand_distr::Normal::new(0.0, rates.weight_sigma.max(f64::MIN_POSITIVE))
                .expect("finite sigma");
            for conn in &mut net.connections {
                if rng.random::<f64>() < rates.weight_prob {
                    conn.weight =
                        (conn.weight + normal.sample(rng)).clamp(-WEIGHT_BOUND, WEIGHT_BOUND);
                }
            }
        }

        if rates.add_connection_prob > 0.0 && rng.random::<f64>() < rates.add_connection_prob {
            let candidates = net.missing_acyclic_pairs();
            if !candidates.is_empty() {
                let (from, to) = candidates[rng.random_range(0..candidates.len())];
                net.connections.push(Connection {
                    from,
                    to,
                    weight: rng.random_range(-1.0..=1.0),
                });
            }
        }

        if rates.add_node_prob > 0.0
            && !net.connections.is_empty()
            && rng.random::<f64>() < rates.add_node_prob
        {
            let idx = rng.random_range(0..net.connections.len());
            let split = net.connections.remove(idx);
            let id = net.nodes.iter().map(|n| n.id).max().unwrap_or(0) + 1;
            let activation = ACTIVATIONS[rng.random_range(0..ACTIVATIONS.len())];
            net.nodes.push(Node { id, activation });
            net.connections.push(Connection { from: split.from, to: id, weight: 1.0 });
            net.connections.push(Connection { from: id, to: split.to, weight: split.weight });
        }

        if rates.change_activation_prob > 0.0 && rng.random::<f64>() < rates.change_activation_prob
        {
            let hidden = net.hidden_ids();
            if !hidden.is_empty() {
                let id = hidden[rng.random_range(0..hidden.len())];
                let activation = ACTIVATIONS[rng.random_range(0..ACTIVATIONS.len())];
                if let Some(node) = net.nodes.iter_mut().find(|n| n.id == id) {
                    node.activation = activation;
                }
            }
        }

        debug_assert!(net.is_acyclic());
        net
    }

    /// All (from, to) pairs that are absent, legal (from is not an output,
    /// to is not an input) and would keep the graph acyclic, in a fixed
    /// deterministic order.
    fn missing_acyclic_pairs(&self) -> Vec<(u32, u32)> {
        let index_of = self.index_of();
        let n = self.nodes.len();
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut present = std::collections::BTreeSet::new();
        for conn in &self.connections {
            adjacency[index_of[&conn.from]].push(index_of[&conn.to]);
            present.insert((conn.from, conn.to));
        }
        // One DFS per node gives full reachability; adding from->to cycles
        // iff `to` already reaches `from`.
        let mut reach = vec![vec![false; n]; n];
        for start in 0..n {
            let mut stack = vec![start];
            while let Some(idx) = stack.pop() {
                for &next in &adjacency[idx] {
                    if !reach[start][next] {
                        reach[start][next] = true;
                        stack.push(next);
                    }
                }
            }
        }
        let mut pairs = Vec::new();
        for from_node in &self.nodes {
            let from = from_node.id;
            if self.is_output(from) {
                continue;
            }
            for to_node in &self.nodes {
                let to = to_node.id;
                if from == to
                    || self.is_input(to)
                    || present.contains(&(from, to))
                    || reach[index_of[&to]][index_of[&from]]
                {
                    continue;
                }
                pairs.push((from, to));
            }
        }
        pairs
    }

    pub fn is_acyclic(&self) -> bool {
        self.topo_order().len() == self.nodes.len()
    }

    /// Kahn's algorithm, processing ready nodes in ascending id order.
    /// Returns indices into `self.nodes`; shorter than `nodes.len()` iff the
    /// graph has a cycle.
    fn topo_order(&self) -> Vec<usize> {
        let index_of = self.index_of();
        let n = self.nodes.len();
        let mut outgoing: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut in_degree = vec![0usize; n];
        for conn in &self.connections {
            outgoing[index_of[&conn.from]].push(index_of[&conn.to]);
            in_degree[index_of[&conn.to]] += 1;
        }
        let mut ready: std::collections::BTreeSet<u32> = self
            .nodes
            .iter()
            .filter(|node| in_degree[index_of[&node.id]] == 0)
            .map(|node| node.id)
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&id) = ready.iter().next() {
            ready.remove(&id);
            let idx = index_of[&id];
            order.push(idx);
            for &next in &outgoing[idx] {
                in_degree[next] -= 1;
                if in_degree[next] == 0 {
                    ready.insert(self.nodes[next].id);
                }
            }
        }
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// 1 input, 1 output, single pass-through connection of weight w.
    fn passthrough(w: f64) -> Cppn {
        Cppn {
            nodes: vec![
                Node { id: 0, activation: Activation::Linear },
                Node { id: 1, activation: Activation::Sigmoid },
            ],
            connections: vec![Connection { from: 0, to: 1, weight: w }],
            inputs: 1,
            outputs: 1,
        }
    }

    #[test]
    fn eval_single_passthrough() {
        let net = passthrough(1.0);
        let out = net.eval(&[0.5]).unwrap();
        let expected = 2.0 / (1.0 + (-0.5f64).exp()) - 1.0;
        assert!((out[0] - expected).abs() < 1e-15);
        assert!((out[0] - 0.2449).abs() < 1e-4);
    }

    #[test]
    fn eval_arity_mismatch() {
        let net = passthrough(1.0);
        assert!(matches!(net.eval(&[0.1, 0.2]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn eval_gaussian_path_is_even() {
        // x -> gaussian hidden -> output; gaussian is even in x.
        let net = Cppn {
            nodes: vec![
                Node { id: 0, activation: Activation::Linear },
                Node { id: 1, activation: Activation::Sigmoid },
                Node { id: 2, activation: Activation::Gaussian },
            ],
            connections: vec![
                Connection { from: 0, to: 2, weight: 1.3 },
                Connection { from: 2, to: 1, weight: -0.9 },
            ],
            inputs: 1,
            outputs: 1,
        };
        for i in 0..50 {
            let x = -2.0 + 4.0 * i as f64 / 49.0;
            let a = net.eval(&[x]).unwrap()[0];
            let b = net.eval(&[-x]).unwrap()[0];
            assert!((a - b).abs() < 1e-15);
        }
    }

    /// Three-node net evaluated by hand:
    ///   input 0 --(1.5)--> hidden 2 (gaussian) --(-2.0)--> output 1
    ///   eval(0.3): h = exp(-(0.45)^2); out = squash(-2h).
    #[test]
    fn eval_three_node_hand_oracle() {
        let net = Cppn {
            nodes: vec![
                Node { id: 0, activation: Activation::Linear },
                Node { id: 1, activation: Activation::Sigmoid },
                Node { id: 2, activation: Activation::Gaussian },
            ],
            connections: vec![
                Connection { from: 0, to: 2, weight: 1.5 },
                Connection { from: 2, to: 1, weight: -2.0 },
            ],
            inputs: 1,
            outputs: 1,
        };
        let out = net.eval(&[0.3]).unwrap()[0];
        let h = (-(0.45f64 * 0.45)).exp();
        let expected = 2.0 / (1.0 + (2.0 * h).exp()) - 1.0;
        assert!((out - expected).abs() < 1e-15);
        // Frozen hand calculation of the same fixture.
        assert!((out - (-0.6732623548402528)).abs() < 1e-12, "got {out}");
    }

    #[test]
    fn outputs_always_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rates = CppnMutationRates::default();
        let mut net = Cppn::fully_connected(4, 7, &mut rng);
        for _ in 0..200 {
            net = net.mutate(&mut rng, &rates);
            let inputs: Vec<f64> = (0..4).map(|_| rng.random_range(-10.0..10.0)).collect();
            for out in net.eval(&inputs).unwrap() {
                assert!((-1.0..=1.0).contains(&out));
            }
        }
    }

    #[test]
    fn mutate_zero_rates_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Cppn::fully_connected(4, 2, &mut rng);
        let child = net.mutate(&mut rng, &CppnMutationRates::zero());
        assert_eq!(child, net);
    }

    #[test]
    fn mutate_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Cppn::fully_connected(4, 2, &mut rng);
        let rates = CppnMutationRates::default();
        let a = net.mutate(&mut ChaCha8Rng::seed_from_u64(99), &rates);
        let b = net.mutate(&mut ChaCha8Rng::seed_from_u64(99), &rates);
        assert_eq!(a, b);
    }

    #[test]
    fn add_node_bookkeeping() {
        let net = passthrough(0.7);
        let rates = CppnMutationRates {
            weight_prob: 0.0,
            weight_sigma: 0.0,
            add_connection_prob: 0.0,
            add_node_prob: 1.0,
            change_activation_prob: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let child = net.mutate(&mut rng, &rates);
        assert_eq!(child.nodes.len(), net.nodes.len() + 1);
        assert_eq!(child.connections.len(), net.connections.len() + 1);
        // Split keeps the downstream weight and feeds the new node with 1.0.
        let new_id = child.nodes.last().unwrap().id;
        let incoming = child.connections.iter().find(|c| c.to == new_id).unwrap();
        let outgoing = child.connections.iter().find(|c| c.from == new_id).unwrap();
        assert_eq!(incoming.weight, 1.0);
        assert_eq!(outgoing.weight, 0.7);
    }

    #[test]
    fn mutation_preserves_acyclicity() {
        // Many short chains from fresh parents, matching how the archive
        // loop actually applies mutation.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let rates = CppnMutationRates::default();
        for _ in 0..200 {
            let mut net = Cppn::fully_connected(4, 2, &mut rng);
            for _ in 0..50 {
                net = net.mutate(&mut rng, &rates);
                assert!(net.is_acyclic());
            }
        }
    }

    #[test]
    fn weights_stay_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let rates = CppnMutationRates { weight_sigma: 2.0, ..CppnMutationRates::default() };
        let mut net = Cppn::fully_connected(4, 2, &mut rng);
        for _ in 0..500 {
            net = net.mutate(&mut rng, &rates);
            for c in &net.connections {
                assert!(c.weight.abs() <= WEIGHT_BOUND);
            }
        }
    }

    #[test]
    fn lattice_single_cell_queries_origin() {
        // Constant net: output independent of coordinates.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Cppn::fully_connected(4, 2, &mut rng);
        let grid = net.query_lattice(1, 1).unwrap();
        assert_eq!(grid.len(), 1);
        assert_eq!(grid[0].len(), 1);
        assert_eq!(grid[0][0], net.eval(&[0.0, 0.0, 0.0, 1.0]).unwrap());
    }

    #[test]
    fn lattice_matches_pointwise_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut net = Cppn::fully_connected(4, 2, &mut rng);
        for _ in 0..30 {
            net = net.mutate(&mut rng, &CppnMutationRates::default());
        }
        let (w, h) = (4, 6);
        let grid = net.query_lattice(w, h).unwrap();
        for row in 0..h {
            for col in 0..w {
                let x = 2.0 * col as f64 / (w - 1) as f64 - 1.0;
                let y = 2.0 * row as f64 / (h - 1) as f64 - 1.0;
                let r = (x * x + y * y).sqrt();
                assert_eq!(grid[row][col], net.eval(&[x, y, r, 1.0]).unwrap());
            }
        }
    }

    #[test]
    fn lattice_constant_net_is_uniform() {
        // Only the bias input is connected, so the output ignores x, y, r.
        let net = Cppn {
            nodes: vec![
                Node { id: 0, activation: Activation::Linear },
                Node { id: 1, activation: Activation::Linear },
                Node { id: 2, activation: Activation::Linear },
                Node { id: 3, activation: Activation::Linear },
                Node { id: 4, activation: Activation::Sigmoid },
            ],
            connections: vec![Connection { from: 3, to: 4, weight: 0.4 }],
            inputs: 4,
            outputs: 1,
        };
        let grid = net.query_lattice(4, 4).unwrap();
        let first = grid[0][0].clone();
        for row in &grid {
            for cell in row {
                assert_eq!(*cell, first);
            }
        }
    }

    #[test]
    fn lattice_even_x_dependence_mirrors_columns() {
        // x feeds a gaussian hidden node; y and r are unconnected, bias wired
        // straight through. Output depends on x only through an even function.
        let net = Cppn {
            nodes: vec![
                Node { id: 0, activation: Activation::Linear },
                Node { id: 1, activation: Activation::Linear },
                Node { id: 2, activation: Activation::Linear },
                Node { id: 3, activation: Activation::Linear },
                Node { id: 4, activation: Activation::Sigmoid },
                Node { id: 5, activation: Activation::Gaussian },
            ],
            connections: vec![
                Connection { from: 0, to: 5, weight: 1.1 },
                Connection { from: 5, to: 4, weight: 0.8 },
                Connection { from: 3, to: 4, weight: -0.2 },
            ],
            inputs: 4,
            outputs: 1,
        };
        let (w, h) = (5, 3);
        let grid = net.query_lattice(w, h).unwrap();
        for row in 0..h {
            for col in 0..w {
                assert_eq!(grid[row][col], grid[row][w - 1 - col]);
            }
        }
    }

    #[test]
    fn lattice_rejects_zero_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Cppn::fully_connected(4, 1, &mut rng);
        assert!(net.query_lattice(0, 3).is_err());
        assert!(net.query_lattice(3, 0).is_err());
    }

    #[test]
    fn serialization_schema() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Cppn::fully_connected(2, 1, &mut rng);
        let json = serde_json::to_value(&net).unwrap();
        assert!(json.get("nodes").is_some());
        assert!(json.get("connections").is_some());
        assert_eq!(json["inputs"], 2);
        assert_eq!(json["outputs"], 1);
        let back: Cppn = serde_json::from_value(json).unwrap();
        assert_eq!(back, net);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            /// Random mutation chains keep the graph acyclic and outputs bounded.
            #[test]
            fn mutation_chain_invariants(seed in any::<u64>(), steps in 1usize..40) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rates = CppnMutationRates::default();
                let mut net = Cppn::fully_connected(4, 2, &mut rng);
                for _ in 0..steps {
                    net = net.mutate(&mut rng, &rates);
                    prop_assert!(net.is_acyclic());
                }
                let out = net.eval(&[0.3, -0.7, 0.76, 1.0]).unwrap();
                for v in out {
                    prop_assert!((-1.0..=1.0).contains(&v));
                }
            }
        }
    }
}
