//! Minimum-roll scheduler for multi-batch MLP execution on an NPE(K, N)
//! array.
//!
//! The array splits into K groups of N MACs, each group computing N
//! neuron values of one batch per roll. For a layer problem of B batches
//! and T neurons, every feasible configuration partially covers the
//! problem with some number of full rolls and leaves two residual
//! subproblems: untouched batches (with all T neurons left) and covered
//! batches missing their remaining neurons. Expanding every configuration
//! choice recursively yields a computational tree; the schedule is the
//! breadth-first traversal of the binary execution tree with the fewest
//! total rolls.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::rc::Rc;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapperError {
    #[error("model needs an input layer and at least one computing layer")]
    TooFewLayers,
    #[error("model layer sizes must be positive")]
    EmptyLayer,
    #[error("brute-force guard exceeded: batches {batches} > {max_batches} or neurons {neurons} > {max_neurons}")]
    GuardExceeded {
        batches: u32,
        neurons: u32,
        max_batches: u32,
        max_neurons: u32,
    },
    #[error("no configurations supplied")]
    NoConfigs,
}

/// PE array geometry: `rows` MAC groups of `cols` MACs each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArrayShape {
    pub rows: u32,
    pub cols: u32,
}

impl ArrayShape {
    pub fn new(rows: u32, cols: u32) -> Self {
        assert!(rows >= 1 && cols >= 1, "array must be at least 1x1");
        Self { rows, cols }
    }

    pub fn total_pes(&self) -> u32 {
        self.rows * self.cols
    }
}

/// One layer-slice problem: compute `neurons` outputs fed by `inputs`
/// features for `batches` batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerProblem {
    pub batches: u32,
    pub inputs: u32,
    pub neurons: u32,
}

impl LayerProblem {
    pub fn new(batches: u32, inputs: u32, neurons: u32) -> Self {
        assert!(batches >= 1 && inputs >= 1 && neurons >= 1);
        Self {
            batches,
            inputs,
            neurons,
        }
    }
}

/// One array configuration: `batches_per_roll * neurons_per_roll` equals
/// the PE count, each roll computing `neurons_per_roll` neuron values in
/// `batches_per_roll` batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NpeConfig {
    pub batches_per_roll: u32,
    pub neurons_per_roll: u32,
}

impl NpeConfig {
    pub fn total_pes(&self) -> u32 {
        self.batches_per_roll * self.neurons_per_roll
    }

    /// A configuration is legal when the whole array is used, no MAC group
    /// is split across batches, and every group stays within one batch:
    /// `neurons_per_roll >= cols` and `batches_per_roll` divides `rows`.
    pub fn is_legal(&self, shape: ArrayShape) -> bool {
        self.batches_per_roll >= 1
            && self.neurons_per_roll >= shape.cols
            && self.batches_per_roll <= shape.rows
            && shape.rows.is_multiple_of(self.batches_per_roll)
            && self.total_pes() == shape.total_pes()
    }
}

/// All legal configurations for an array, ordered by descending
/// neurons-per-roll. Never empty: one-batch whole-array is always legal.
pub fn enumerate_configs(shape: ArrayShape) -> Vec<NpeConfig> {
    let mut out = Vec::new();
    for k in 1..=shape.rows {
        let pes = shape.total_pes();
        if !pes.is_multiple_of(k) {
            continue;
        }
        let cfg = NpeConfig {
            batches_per_roll: k,
            neurons_per_roll: pes / k,
        };
        if cfg.is_legal(shape) {
            out.push(cfg);
        }
    }
    out.sort_by_key(|cfg| std::cmp::Reverse(cfg.neurons_per_roll));
    out
}

/// One expansion of a subproblem under a particular configuration.
#[derive(Debug, Clone)]
pub struct ConfigOption {
    pub config: NpeConfig,
    /// Effective load per roll: batches and neurons actually occupied.
    pub load_batches: u32,
    pub load_neurons: u32,
    /// Full rolls taken with this load.
    pub rolls: u64,
    /// Batches untouched by the rolls (still need all neurons).
    pub residual_batches: Option<Rc<CompTree>>,
    /// Covered batches missing their remaining neurons.
    pub residual_neurons: Option<Rc<CompTree>>,
}

impl ConfigOption {
    /// Batches fully covered by the rolls of this option.
    pub fn covered_batches(&self, batches: u32) -> u32 {
        (batches / self.load_batches) * self.load_batches
    }

    /// Neurons fully covered by the rolls of this option.
    pub fn covered_neurons(&self, neurons: u32) -> u32 {
        (neurons / self.load_neurons) * self.load_neurons
    }
}

/// Computational tree node: one subproblem together with every
/// configuration expansion. Shared subtrees are memoized on the
/// (batches, neurons) pair.
#[derive(Debug, Clone)]
pub struct CompTree {
    pub batches: u32,
    pub neurons: u32,
    pub options: Vec<ConfigOption>,
}

fn build_tree(
    batches: u32,
    neurons: u32,
    configs: &[NpeConfig],
    memo: &mut HashMap<(u32, u32), Rc<CompTree>>,
) -> Option<Rc<CompTree>> {
    if batches == 0 || neurons == 0 {
        return None;
    }
    if let Some(hit) = memo.get(&(batches, neurons)) {
        return Some(Rc::clone(hit));
    }
    let mut options = Vec::with_capacity(configs.len());
    for cfg in configs {
        let load_b = batches.min(cfg.batches_per_roll);
        let load_n = neurons.min(cfg.neurons_per_roll);
        let rolls = (batches / load_b) as u64 * (neurons / load_n) as u64;
        let residual_batches = build_tree(batches % load_b, neurons, configs, memo);
        let residual_neurons =
            build_tree(batches - batches % load_b, neurons % load_n, configs, memo);
        options.push(ConfigOption {
            config: *cfg,
            load_batches: load_b,
            load_neurons: load_n,
            rolls,
            residual_batches,
            residual_neurons,
        });
    }
    let node = Rc::new(CompTree {
        batches,
        neurons,
        options,
    });
    memo.insert((batches, neurons), Rc::clone(&node));
    Some(node)
}

/// Expand the full computational tree for a (batches, neurons) problem.
/// Returns `None` for an empty problem.
pub fn create_tree(batches: u32, neurons: u32, shape: ArrayShape) -> Option<Rc<CompTree>> {
    create_tree_with_configs(batches, neurons, &enumerate_configs(shape))
}

/// [`create_tree`] restricted to an explicit configuration set (used to
/// force a particular arrangement, e.g. for utilization studies).
pub fn create_tree_with_configs(
    batches: u32,
    neurons: u32,
    configs: &[NpeConfig],
) -> Option<Rc<CompTree>> {
    assert!(!configs.is_empty(), "need at least one configuration");
    build_tree(batches, neurons, configs, &mut HashMap::new())
}

/// Binary execution tree: one configuration chosen per subproblem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecTree {
    pub config: NpeConfig,
    pub load_batches: u32,
    pub load_neurons: u32,
    pub rolls: u64,
    /// Grid of rolls covered by this node: batch direction x neuron
    /// direction, `rolls == grid_batches * grid_neurons`.
    pub grid_batches: u32,
    pub grid_neurons: u32,
    pub residual_batches: Option<Box<ExecTree>>,
    pub residual_neurons: Option<Box<ExecTree>>,
}

impl ExecTree {
    pub fn total_rolls(&self) -> u64 {
        self.rolls
            + self.residual_batches.as_deref().map_or(0, ExecTree::total_rolls)
            + self.residual_neurons.as_deref().map_or(0, ExecTree::total_rolls)
    }
}

fn min_rolls_of(tree: &CompTree, memo: &mut HashMap<(u32, u32), u64>) -> u64 {
    let key = (tree.batches, tree.neurons);
    if let Some(&hit) = memo.get(&key) {
        return hit;
    }
    let mut best = u64::MAX;
    for opt in &tree.options {
        let mut total = opt.rolls;
        if let Some(rb) = &opt.residual_batches {
            total += min_rolls_of(rb, memo);
        }
        if let Some(rn) = &opt.residual_neurons {
            total += min_rolls_of(rn, memo);
        }
        best = best.min(total);
    }
    memo.insert(key, best);
    best
}

fn extract_best(tree: &CompTree, memo: &mut HashMap<(u32, u32), u64>) -> ExecTree {
    let target = min_rolls_of(tree, memo);
    // Options are ordered by descending neurons-per-roll, so taking the
    // first hit prefers wider (fewer-reconfiguration) arrangements; among
    // equal widths, larger batch counts cannot occur twice.
    let opt = tree
        .options
        .iter()
        .find(|opt| {
            let mut total = opt.rolls;
            if let Some(rb) = &opt.residual_batches {
                total += min_rolls_of(rb, memo);
            }
            if let Some(rn) = &opt.residual_neurons {
                total += min_rolls_of(rn, memo);
            }
            total == target
        })
        .expect("at least one option reaches the minimum");
    ExecTree {
        config: opt.config,
        load_batches: opt.load_batches,
        load_neurons: opt.load_neurons,
        rolls: opt.rolls,
        grid_batches: tree.batches / opt.load_batches,
        grid_neurons: tree.neurons / opt.load_neurons,
        residual_batches: opt
            .residual_batches
            .as_deref()
            .map(|rb| Box::new(extract_best(rb, memo))),
        residual_neurons: opt
            .residual_neurons
            .as_deref()
            .map(|rn| Box::new(extract_best(rn, memo))),
    }
}

/// Pick the binary execution tree with the fewest total rolls out of a
/// computational tree. Ties prefer wider configurations.
pub fn best_exec_tree(root: &CompTree) -> ExecTree {
    extract_best(root, &mut HashMap::new())
}

/// Minimum rolls for a (batches, neurons) problem on a given array.
pub fn min_rolls(batches: u32, neurons: u32, shape: ArrayShape) -> u64 {
    match create_tree(batches, neurons, shape) {
        Some(tree) => best_exec_tree(&tree).total_rolls(),
        None => 0,
    }
}

/// One scheduled computation round (or grid of identical rounds).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleEvent {
    /// Index of the computing layer this event belongs to (0-based).
    pub layer: usize,
    pub config: NpeConfig,
    /// Effective load per roll.
    pub load_batches: u32,
    pub load_neurons: u32,
    /// Roll grid: `rolls() == grid_batches * grid_neurons`.
    pub grid_batches: u32,
    pub grid_neurons: u32,
    /// First batch / neuron index covered by this event.
    pub batch_base: u32,
    pub neuron_base: u32,
    /// Input feature count of the layer; one deferring cycle per input.
    pub inputs: u32,
}

impl ScheduleEvent {
    pub fn rolls(&self) -> u64 {
        self.grid_batches as u64 * self.grid_neurons as u64
    }

    /// Array cycles per roll with deferring MACs: one per input feature
    /// plus the carry-propagating round.
    pub fn cycles_per_roll_deferred(&self) -> u64 {
        self.inputs as u64 + 1
    }

    /// Array cycles per roll with conventional MACs.
    pub fn cycles_per_roll_conventional(&self) -> u64 {
        self.inputs as u64
    }
}

fn emit_events(
    root: &ExecTree,
    layer: usize,
    inputs: u32,
    out: &mut Vec<ScheduleEvent>,
) {
    let mut queue: VecDeque<(&ExecTree, u32, u32)> = VecDeque::new();
    queue.push_back((root, 0, 0));
    while let Some((node, batch_base, neuron_base)) = queue.pop_front() {
        out.push(ScheduleEvent {
            layer,
            config: node.config,
            load_batches: node.load_batches,
            load_neurons: node.load_neurons,
            grid_batches: node.grid_batches,
            grid_neurons: node.grid_neurons,
            batch_base,
            neuron_base,
            inputs,
        });
        let covered_b = node.grid_batches * node.load_batches;
        let covered_n = node.grid_neurons * node.load_neurons;
        if let Some(rb) = &node.residual_batches {
            queue.push_back((rb, batch_base + covered_b, neuron_base));
        }
        if let Some(rn) = &node.residual_neurons {
            queue.push_back((rn, batch_base, neuron_base + covered_n));
        }
    }
}

/// Schedule one layer problem with the configurations of `shape`.
pub fn schedule_layer(problem: LayerProblem, layer: usize, shape: ArrayShape) -> Vec<ScheduleEvent> {
    schedule_layer_with_configs(problem, layer, &enumerate_configs(shape))
}

/// [`schedule_layer`] restricted to an explicit configuration set.
pub fn schedule_layer_with_configs(
    problem: LayerProblem,
    layer: usize,
    configs: &[NpeConfig],
) -> Vec<ScheduleEvent> {
    let tree = create_tree_with_configs(problem.batches, problem.neurons, configs)
        .expect("non-empty problem");
    let exec = best_exec_tree(&tree);
    let mut out = Vec::new();
    emit_events(&exec, layer, problem.inputs, &mut out);
    out
}

/// Schedule a whole model: breadth-first events of the best execution
/// tree of every consecutive layer pair, in layer order.
pub fn schedule(
    model_layers: &[usize],
    batches: u32,
    shape: ArrayShape,
) -> Result<Vec<ScheduleEvent>, MapperError> {
    if model_layers.len() < 2 {
        return Err(MapperError::TooFewLayers);
    }
    if model_layers.contains(&0) || batches == 0 {
        return Err(MapperError::EmptyLayer);
    }
    let mut out = Vec::new();
    for l in 1..model_layers.len() {
        let problem = LayerProblem::new(batches, model_layers[l - 1] as u32, model_layers[l] as u32);
        out.extend(schedule_layer(problem, l - 1, shape));
    }
    Ok(out)
}

/// Fraction of PE-roll slots doing useful work over a layer's events:
/// `batches * neurons / (total rolls * array size)`.
pub fn utilization(events: &[ScheduleEvent], problem: LayerProblem) -> f64 {
    let rolls: u64 = events.iter().map(ScheduleEvent::rolls).sum();
    if rolls == 0 {
        return 0.0;
    }
    let pes = events[0].config.total_pes() as u64;
    debug_assert!(events.iter().all(|e| e.config.total_pes() as u64 == pes));
    (problem.batches as u64 * problem.neurons as u64) as f64 / (rolls * pes) as f64
}

pub const BRUTE_FORCE_MAX_BATCHES: u32 = 16;
pub const BRUTE_FORCE_MAX_NEURONS: u32 = 64;

fn brute_force_rec(
    batches: u32,
    neurons: u32,
    configs: &[NpeConfig],
    memo: &mut HashMap<(u32, u32), u64>,
) -> u64 {
    if batches == 0 || neurons == 0 {
        return 0;
    }
    if let Some(&hit) = memo.get(&(batches, neurons)) {
        return hit;
    }
    let mut best = u64::MAX;
    for cfg in configs {
        let load_b = batches.min(cfg.batches_per_roll);
        let load_n = neurons.min(cfg.neurons_per_roll);
        let rolls = (batches / load_b) as u64 * (neurons / load_n) as u64;
        let total = rolls
            + brute_force_rec(batches % load_b, neurons, configs, memo)
            + brute_force_rec(batches - batches % load_b, neurons % load_n, configs, memo);
        best = best.min(total);
    }
    memo.insert((batches, neurons), best);
    best
}

/// Exhaustive minimum roll count over every recursive configuration
/// choice. Test oracle for the execution-tree extraction; guarded to stay
/// small.
pub fn brute_force_min_rolls(
    batches: u32,
    neurons: u32,
    shape: ArrayShape,
) -> Result<u64, MapperError> {
    if batches > BRUTE_FORCE_MAX_BATCHES || neurons > BRUTE_FORCE_MAX_NEURONS {
        return Err(MapperError::GuardExceeded {
            batches,
            neurons,
            max_batches: BRUTE_FORCE_MAX_BATCHES,
            max_neurons: BRUTE_FORCE_MAX_NEURONS,
        });
    }
    Ok(brute_force_rec(
        batches,
        neurons,
        &enumerate_configs(shape),
        &mut HashMap::new(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn shape6x3() -> ArrayShape {
        ArrayShape::new(6, 3)
    }

    fn cfg(k: u32, n: u32) -> NpeConfig {
        NpeConfig {
            batches_per_roll: k,
            neurons_per_roll: n,
        }
    }

    #[test]
    fn configs_for_6x3() {
        assert_eq!(
            enumerate_configs(shape6x3()),
            vec![cfg(1, 18), cfg(2, 9), cfg(3, 6), cfg(6, 3)]
        );
    }

    #[test]
    fn configs_for_single_group() {
        assert_eq!(enumerate_configs(ArrayShape::new(1, 4)), vec![cfg(1, 4)]);
    }

    #[test]
    fn configs_for_16x8() {
        let configs = enumerate_configs(ArrayShape::new(16, 8));
        assert!(configs.contains(&cfg(2, 64)));
        assert_eq!(
            configs,
            vec![cfg(1, 128), cfg(2, 64), cfg(4, 32), cfg(8, 16), cfg(16, 8)]
        );
    }

    #[test]
    fn tree_empty_leaf() {
        assert!(create_tree(0, 9, shape6x3()).is_none());
        assert!(create_tree(5, 0, shape6x3()).is_none());
    }

    #[test]
    fn tree_for_3x9_contains_expected_expansion() {
        let tree = create_tree(3, 9, shape6x3()).unwrap();
        let opt = tree
            .options
            .iter()
            .find(|o| o.config == cfg(2, 9))
            .unwrap();
        assert_eq!((opt.load_batches, opt.load_neurons), (2, 9));
        assert_eq!(opt.rolls, 1);
        let rb = opt.residual_batches.as_ref().unwrap();
        assert_eq!((rb.batches, rb.neurons), (1, 9));
        assert!(opt.residual_neurons.is_none());
    }

    #[test]
    fn best_tree_for_3x9_needs_two_rolls() {
        assert_eq!(min_rolls(3, 9, shape6x3()), 2);
    }

    #[test]
    fn single_roll_when_fits() {
        // cols neurons, one batch: fits a single roll on any shape.
        for shape in [shape6x3(), ArrayShape::new(16, 8), ArrayShape::new(1, 4)] {
            assert_eq!(min_rolls(1, shape.cols, shape), 1);
        }
    }

    #[test]
    fn brute_force_known_minima() {
        assert_eq!(brute_force_min_rolls(3, 9, shape6x3()).unwrap(), 2);
        assert_eq!(brute_force_min_rolls(1, 1, shape6x3()).unwrap(), 1);
    }

    #[test]
    fn brute_force_guard() {
        assert!(matches!(
            brute_force_min_rolls(17, 4, shape6x3()),
            Err(MapperError::GuardExceeded { .. })
        ));
    }

    #[test]
    fn five_batches_seven_neurons_matches_oracle() {
        let want = brute_force_min_rolls(5, 7, shape6x3()).unwrap();
        assert_eq!(min_rolls(5, 7, shape6x3()), want);
        assert_eq!(want, 3);
    }

    #[test]
    fn schedule_mnist_first_layer() {
        let events = schedule(&[784, 700, 10], 1, ArrayShape::new(16, 8)).unwrap();
        let layer0: Vec<_> = events.iter().filter(|e| e.layer == 0).collect();
        let rolls: u64 = layer0.iter().map(|e| e.rolls()).sum();
        assert_eq!(rolls, 6); // ceil(700 / 128)
        assert!(layer0.iter().all(|e| e.config == cfg(1, 128)));
        assert!(layer0.iter().all(|e| e.inputs == 784));
    }

    #[test]
    fn schedule_single_event_when_layer_fits() {
        let events = schedule(&[40, 8], 1, ArrayShape::new(16, 8)).unwrap();
        assert_eq!(events.iter().map(|e| e.rolls()).sum::<u64>(), 1);
    }

    #[test]
    fn schedule_rejects_tiny_models() {
        assert_eq!(schedule(&[7], 1, shape6x3()).unwrap_err(), MapperError::TooFewLayers);
        assert_eq!(schedule(&[], 1, shape6x3()).unwrap_err(), MapperError::TooFewLayers);
    }

    #[test]
    fn utilization_three_batches_nine_neurons() {
        let problem = LayerProblem::new(3, 100, 9);
        let best = schedule_layer(problem, 0, shape6x3());
        assert_eq!(best.iter().map(|e| e.rolls()).sum::<u64>(), 2);
        assert!((utilization(&best, problem) - 0.75).abs() < 1e-12);

        for forced in [cfg(1, 18), cfg(6, 3)] {
            let events = schedule_layer_with_configs(problem, 0, &[forced]);
            assert!((utilization(&events, problem) - 0.50).abs() < 1e-12);
        }
    }

    #[test]
    fn utilization_perfect_fit() {
        let problem = LayerProblem::new(6, 10, 3);
        let events = schedule_layer_with_configs(problem, 0, &[cfg(6, 3)]);
        assert_eq!(utilization(&events, problem), 1.0);
    }

    fn coverage(events: &[ScheduleEvent]) -> Vec<(u32, u32)> {
        let mut cells = Vec::new();
        for e in events {
            for gb in 0..e.grid_batches {
                for gn in 0..e.grid_neurons {
                    for b in 0..e.load_batches {
                        for n in 0..e.load_neurons {
                            cells.push((
                                e.batch_base + gb * e.load_batches + b,
                                e.neuron_base + gn * e.load_neurons + n,
                            ));
                        }
                    }
                }
            }
        }
        cells
    }

    proptest! {
        #[test]
        fn schedule_covers_each_cell_once(b in 1u32..=8, n in 1u32..=24) {
            let problem = LayerProblem::new(b, 5, n);
            let events = schedule_layer(problem, 0, shape6x3());
            let cells = coverage(&events);
            let unique: HashSet<_> = cells.iter().copied().collect();
            prop_assert_eq!(cells.len() as u64, (b * n) as u64);
            prop_assert_eq!(unique.len(), cells.len());
            prop_assert!(unique.iter().all(|&(bb, nn)| bb < b && nn < n));
        }

        #[test]
        fn best_tree_matches_brute_force(b in 1u32..=8, n in 1u32..=24) {
            let want = brute_force_min_rolls(b, n, shape6x3()).unwrap();
            prop_assert_eq!(min_rolls(b, n, shape6x3()), want);
        }

        #[test]
        fn rolls_monotone_in_problem_size(b in 1u32..=7, n in 1u32..=23) {
            let shape = shape6x3();
            prop_assert!(min_rolls(b, n, shape) <= min_rolls(b + 1, n, shape));
            prop_assert!(min_rolls(b, n, shape) <= min_rolls(b, n + 1, shape));
        }
    }

    #[test]
    fn schedules_are_deterministic() {
        let a = schedule(&[13, 10, 3], 5, shape6x3()).unwrap();
        let b = schedule(&[13, 10, 3], 5, shape6x3()).unwrap();
        assert_eq!(a, b);
    }
}
