//! Schedule executor: drives the PE array through mapper events against
//! the memory images, producing neuron outputs and access counters.

use crate::bitmac::{MacParams, TcdMac};
use crate::goldref::{MlpModel, WeightMatrix};
use crate::mapper::{self, ArrayShape, LayerProblem, ScheduleEvent};

use super::cast::make_cast_pattern;
use super::mem::{layout_features, pack_weight_block, weight_block_rows, MemGeometry, MemImage};
use super::rlc::rlc_encoded_len;
use super::{quantize_relu, Dataflow, NpeError};

/// Aggregated activity of one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineCounters {
    /// Array cycles under the run's dataflow.
    pub total_cycles: u64,
    /// PE-cycles actually doing work (gated PEs excluded).
    pub pe_active_cycles: u64,
    /// Row reads from weight memory.
    pub w_mem_reads: u64,
    /// Row reads from feature memory.
    pub fm_mem_reads: u64,
    /// Word writes to feature memory (input fill plus neuron writebacks).
    pub fm_mem_writes: u64,
    /// Run-length-coded bytes transferred from main memory.
    pub rlc_bytes_in: u64,
}

/// Activity of one layer, kept fine-grained enough for the analytical
/// dataflow timing models.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LayerCounters {
    pub layer: usize,
    pub batches: u32,
    pub inputs: u32,
    pub neurons: u32,
    pub rolls: u64,
    /// Array cycles with deferring MACs: rolls x (inputs + 1).
    pub cycles_deferred: u64,
    /// Array cycles with conventional MACs: rolls x inputs.
    pub cycles_conventional: u64,
    /// Multiply-accumulate operations performed.
    pub pe_macs: u64,
    /// Carry-propagate (finalize) operations of the deferring flow.
    pub pe_finalize: u64,
    pub w_mem_reads: u64,
    pub w_mem_word_writes: u64,
    pub fm_mem_reads: u64,
    pub fm_mem_word_writes: u64,
    /// Coded weight bytes streamed in for this layer.
    pub rlc_bytes_in: u64,
    /// Ping-pong bank read / written by this layer.
    pub fm_read_bank: usize,
    pub fm_write_bank: usize,
}

impl LayerCounters {
    fn absorb(&mut self, other: &LayerCounters) {
        debug_assert_eq!(self.layer, other.layer);
        self.rolls += other.rolls;
        self.cycles_deferred += other.cycles_deferred;
        self.cycles_conventional += other.cycles_conventional;
        self.pe_macs += other.pe_macs;
        self.pe_finalize += other.pe_finalize;
        self.w_mem_reads += other.w_mem_reads;
        self.w_mem_word_writes += other.w_mem_word_writes;
        self.fm_mem_reads += other.fm_mem_reads;
        self.fm_mem_word_writes += other.fm_mem_word_writes;
        self.rlc_bytes_in += other.rlc_bytes_in;
        self.batches += other.batches;
    }
}

/// Per-layer counters plus run totals for one simulated model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunCounters {
    pub dataflow: Dataflow,
    /// PE count of the simulated array.
    pub total_pes: u32,
    pub per_layer: Vec<LayerCounters>,
    /// Word writes of the initial input-feature fill.
    pub input_fill_word_writes: u64,
    /// Coded bytes of the initial input-feature transfer.
    pub input_rlc_bytes: u64,
    pub totals: EngineCounters,
}

impl RunCounters {
    fn compute_totals(&mut self) {
        let deferred = self.dataflow.uses_deferring_macs();
        let mut t = EngineCounters::default();
        for l in &self.per_layer {
            t.total_cycles += if deferred { l.cycles_deferred } else { l.cycles_conventional };
            t.pe_active_cycles += if deferred { l.pe_macs + l.pe_finalize } else { l.pe_macs };
            t.w_mem_reads += l.w_mem_reads;
            t.fm_mem_reads += l.fm_mem_reads;
            t.fm_mem_writes += l.fm_mem_word_writes;
            t.rlc_bytes_in += l.rlc_bytes_in;
        }
        t.fm_mem_writes += self.input_fill_word_writes;
        t.rlc_bytes_in += self.input_rlc_bytes;
        self.totals = t;
    }
}

/// Outputs and counters of one executed layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRunResult {
    /// Neuron outputs, indexed `[batch][neuron]`.
    pub outputs: Vec<Vec<i16>>,
    pub counters: LayerCounters,
}

fn check_schedule(problem: LayerProblem, events: &[ScheduleEvent]) -> Result<(), NpeError> {
    let b = problem.batches as usize;
    let u = problem.neurons as usize;
    let mut seen = vec![false; b * u];
    for e in events {
        if e.inputs != problem.inputs {
            return Err(NpeError::ScheduleMismatch(format!(
                "event expects {} inputs, layer has {}",
                e.inputs, problem.inputs
            )));
        }
        for gb in 0..e.grid_batches as usize {
            for gn in 0..e.grid_neurons as usize {
                for db in 0..e.load_batches as usize {
                    for dn in 0..e.load_neurons as usize {
                        let batch = e.batch_base as usize + gb * e.load_batches as usize + db;
                        let neuron = e.neuron_base as usize + gn * e.load_neurons as usize + dn;
                        if batch >= b || neuron >= u {
                            return Err(NpeError::ScheduleMismatch(format!(
                                "roll touches ({batch},{neuron}) outside {b}x{u}"
                            )));
                        }
                        let cell = &mut seen[batch * u + neuron];
                        if *cell {
                            return Err(NpeError::ScheduleMismatch(format!(
                                "cell ({batch},{neuron}) covered twice"
                            )));
                        }
                        *cell = true;
                    }
                }
            }
        }
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(NpeError::ScheduleMismatch(format!(
            "cell ({},{}) never computed",
            missing / u,
            missing % u
        )));
    }
    Ok(())
}

enum PeBank {
    Deferring(Vec<TcdMac>),
    Behavioral(Vec<i64>),
}

impl PeBank {
    fn new(count: usize, deferring: bool) -> Self {
        if deferring {
            PeBank::Deferring(vec![TcdMac::default(); count])
        } else {
            PeBank::Behavioral(vec![0; count])
        }
    }

    fn accumulate(&mut self, idx: usize, x: i16, w: i16) {
        match self {
            PeBank::Deferring(macs) => macs[idx].accumulate(x as i32, w as i32),
            PeBank::Behavioral(accs) => {
                accs[idx] = accs[idx].wrapping_add((x as i64) * (w as i64));
            }
        }
    }

    fn finalize(&mut self, idx: usize) -> u64 {
        match self {
            PeBank::Deferring(macs) => macs[idx].propagate(),
            PeBank::Behavioral(accs) => (accs[idx] as u64) & MacParams::default().mask(),
        }
    }
}

/// Execute one layer's schedule against the memory images.
///
/// Weights are reshaped block by block as the rolls need them: each roll
/// column of an event gets one block where every weight-memory row packs
/// `row_words / N` input segments of `N` words, so one row read feeds the
/// array for that many cycles. Feature rows are split into one segment
/// per batch and likewise buffered. Outputs pass the activation unit and
/// are word-written into the other feature bank.
#[allow(clippy::too_many_arguments)]
pub fn run_layer(
    shape: ArrayShape,
    geom: &MemGeometry,
    problem: LayerProblem,
    events: &[ScheduleEvent],
    weights: &WeightMatrix,
    features: &mut MemImage,
    out_features: &mut MemImage,
    dataflow: Dataflow,
    fraction_bits: u32,
) -> Result<LayerRunResult, NpeError> {
    if weights.inputs() != problem.inputs as usize || weights.outputs() != problem.neurons as usize
    {
        return Err(NpeError::DimensionMismatch(format!(
            "weights are {}x{}, layer needs {}x{}",
            weights.inputs(),
            weights.outputs(),
            problem.inputs,
            problem.neurons
        )));
    }
    check_schedule(problem, events)?;

    let b_total = problem.batches as usize;
    let inputs = problem.inputs as usize;
    let seg = geom.feature_segment_words(b_total);
    if seg == 0 {
        return Err(NpeError::FeatureCapacity {
            batches: b_total,
            features: inputs,
            needed_rows: usize::MAX,
            available_rows: geom.fm_mem_rows,
        });
    }
    let out_seg = seg;
    let deferring = dataflow.uses_deferring_macs();

    let mut outputs = vec![vec![0i16; problem.neurons as usize]; b_total];
    let mut counters = LayerCounters {
        layer: events.first().map_or(0, |e| e.layer),
        batches: problem.batches,
        inputs: problem.inputs,
        neurons: problem.neurons,
        ..LayerCounters::default()
    };
    let fm_reads_before = features.stats.read_count;
    let out_writes_before = out_features.stats.word_write_count;

    let pes = shape.total_pes() as usize;
    let cols = shape.cols as usize;

    for event in events {
        let pattern = make_cast_pattern(event.config, shape)?;
        let n = event.config.neurons_per_roll as usize;
        let ipr = geom.weight_inputs_per_row(n);
        if ipr == 0 {
            return Err(NpeError::RollTooWide {
                neurons_per_roll: event.config.neurons_per_roll,
                row_words: geom.w_mem_row_words,
            });
        }
        let block_rows = weight_block_rows(inputs, n, geom);
        if block_rows > geom.w_mem_rows {
            return Err(NpeError::WeightCapacity {
                needed_rows: block_rows,
                available_rows: geom.w_mem_rows,
            });
        }
        let load_b = event.load_batches as usize;
        let load_n = event.load_neurons as usize;

        for gn in 0..event.grid_neurons as usize {
            let neuron0 = event.neuron_base as usize + gn * load_n;
            // One weight block serves every batch roll of this column.
            let mut block = MemImage::new(block_rows, geom.w_mem_row_words);
            pack_weight_block(&mut block, weights, neuron0, neuron0 + load_n, n, 0);
            counters.w_mem_word_writes += block.stats.word_write_count;

            for gb in 0..event.grid_batches as usize {
                let batch0 = event.batch_base as usize + gb * load_b;
                let mut bank = PeBank::new(pes, deferring);
                let mut w_buf = vec![0u16; geom.w_mem_row_words];
                let mut f_buf = vec![0u16; geom.fm_mem_row_words];
                let mut w_row = usize::MAX;
                let mut f_row = usize::MAX;

                for i in 0..inputs {
                    let need_w = i / ipr;
                    if need_w != w_row {
                        w_buf.copy_from_slice(block.read_row(need_w));
                        w_row = need_w;
                    }
                    let need_f = i / seg;
                    if need_f != f_row {
                        f_buf.copy_from_slice(features.read_row(need_f));
                        f_row = need_f;
                    }
                    let w_base = (i % ipr) * n;
                    let f_off = i % seg;
                    for pe in 0..pes {
                        let slot = pattern.feature_source[pe / cols] as usize;
                        let word = pattern.weight_word[pe] as usize;
                        if slot >= load_b || word >= load_n {
                            continue; // gated
                        }
                        let x = f_buf[(batch0 + slot) * seg + f_off] as i16;
                        let w = w_buf[w_base + word] as i16;
                        bank.accumulate(pe, x, w);
                    }
                }

                for pe in 0..pes {
                    let slot = pattern.feature_source[pe / cols] as usize;
                    let word = pattern.weight_word[pe] as usize;
                    if slot >= load_b || word >= load_n {
                        continue;
                    }
                    let batch = batch0 + slot;
                    let neuron = neuron0 + word;
                    let q = quantize_relu(bank.finalize(pe), fraction_bits);
                    outputs[batch][neuron] = q.raw();
                    out_features.write_word(neuron / out_seg, batch * out_seg + neuron % out_seg, q.to_bits());
                }

                let active = (load_b * load_n) as u64;
                counters.rolls += 1;
                counters.cycles_deferred += inputs as u64 + 1;
                counters.cycles_conventional += inputs as u64;
                counters.pe_macs += inputs as u64 * active;
                counters.pe_finalize += active;
            }
            counters.w_mem_reads += block.stats.read_count;
        }
    }

    counters.fm_mem_reads = features.stats.read_count - fm_reads_before;
    counters.fm_mem_word_writes = out_features.stats.word_write_count - out_writes_before;
    Ok(LayerRunResult { outputs, counters })
}

/// Run-wide simulation parameters.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub shape: ArrayShape,
    pub geom: MemGeometry,
    pub dataflow: Dataflow,
    pub fraction_bits: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            shape: ArrayShape::new(16, 8),
            geom: MemGeometry::default(),
            dataflow: Dataflow::OsTcd,
            fraction_bits: super::DEFAULT_FRACTION_BITS,
        }
    }
}

/// Result of one simulated model run.
#[derive(Debug, Clone)]
pub struct SimOutput {
    /// Final layer outputs, indexed `[batch][neuron]`.
    pub outputs: Vec<Vec<i16>>,
    /// Per-layer outputs, indexed `[layer][batch][neuron]`.
    pub layer_outputs: Vec<Vec<Vec<i16>>>,
    pub counters: RunCounters,
    /// Batch passes the run was split into when the feature memory could
    /// not hold every batch at once.
    pub passes: u32,
}

fn words_to_bytes(words: &[i16]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(words.len() * 2);
    for &w in words {
        bytes.extend_from_slice(&(w as u16).to_le_bytes());
    }
    bytes
}

/// Largest batch count whose features fit one bank for every layer.
fn max_batches_fitting(model: &MlpModel, geom: &MemGeometry, want: usize) -> usize {
    let largest = model.layer_sizes().iter().copied().max().unwrap_or(1);
    for b in (1..=want.min(geom.fm_mem_row_words)).rev() {
        let seg = geom.feature_segment_words(b);
        if seg >= 1 && largest.div_ceil(seg) <= geom.fm_mem_rows {
            return b;
        }
    }
    0
}

/// Simulate a whole model: per layer, schedule, execute, and swap the
/// ping-pong feature banks so layer `l + 1` reads what layer `l` wrote.
/// Batches beyond feature-memory capacity are split into passes.
#[allow(clippy::needless_range_loop)] // l indexes sizes, weights and outputs alike
pub fn run_model(
    model: &MlpModel,
    input_batches: &[Vec<i16>],
    cfg: &SimConfig,
) -> Result<SimOutput, NpeError> {
    if input_batches.is_empty() {
        return Err(NpeError::DimensionMismatch("no input batches".into()));
    }
    for batch in input_batches {
        if batch.len() != model.layer_sizes()[0] {
            return Err(NpeError::DimensionMismatch(format!(
                "input vector has {} features, model expects {}",
                batch.len(),
                model.layer_sizes()[0]
            )));
        }
    }

    let batch_limit = max_batches_fitting(model, &cfg.geom, input_batches.len());
    if batch_limit == 0 {
        let largest = model.layer_sizes().iter().copied().max().unwrap();
        return Err(NpeError::FeatureCapacity {
            batches: 1,
            features: largest,
            needed_rows: largest.div_ceil(cfg.geom.feature_segment_words(1).max(1)),
            available_rows: cfg.geom.fm_mem_rows,
        });
    }

    let depth = model.depth();
    let mut per_layer: Vec<LayerCounters> = Vec::new();
    let mut input_fill_word_writes = 0u64;
    let mut input_rlc_bytes = 0u64;
    let mut outputs: Vec<Vec<i16>> = Vec::new();
    let mut layer_outputs: Vec<Vec<Vec<i16>>> = vec![Vec::new(); depth];
    let mut passes = 0u32;

    for chunk in input_batches.chunks(batch_limit) {
        passes += 1;
        let batches = chunk.len() as u32;
        let events = mapper::schedule(model.layer_sizes(), batches, cfg.shape)
            .map_err(|e| NpeError::ScheduleMismatch(e.to_string()))?;

        let mut read_bank = layout_features(chunk, &cfg.geom)?;
        input_fill_word_writes += read_bank.stats.word_write_count;
        for batch in chunk {
            input_rlc_bytes += rlc_encoded_len(&words_to_bytes(batch));
        }
        let mut write_bank = MemImage::new(cfg.geom.fm_mem_rows, cfg.geom.fm_mem_row_words);
        let mut read_idx = 0usize;

        for l in 0..depth {
            let problem = LayerProblem::new(
                batches,
                model.layer_sizes()[l] as u32,
                model.layer_sizes()[l + 1] as u32,
            );
            let layer_events: Vec<ScheduleEvent> =
                events.iter().copied().filter(|e| e.layer == l).collect();
            let mut result = run_layer(
                cfg.shape,
                &cfg.geom,
                problem,
                &layer_events,
                model.weight_layer(l),
                &mut read_bank,
                &mut write_bank,
                cfg.dataflow,
                cfg.fraction_bits,
            )?;
            result.counters.rlc_bytes_in =
                rlc_encoded_len(&words_to_bytes(model.weight_layer(l).rows()));
            result.counters.fm_read_bank = read_idx;
            result.counters.fm_write_bank = 1 - read_idx;

            match per_layer.iter_mut().find(|c| c.layer == l) {
                Some(existing) => existing.absorb(&result.counters),
                None => per_layer.push(result.counters),
            }
            layer_outputs[l].extend(result.outputs.iter().cloned());
            if l == depth - 1 {
                outputs.extend(result.outputs);
            }
            std::mem::swap(&mut read_bank, &mut write_bank);
            read_idx = 1 - read_idx;
        }
    }

    let mut counters = RunCounters {
        dataflow: cfg.dataflow,
        total_pes: cfg.shape.total_pes(),
        per_layer,
        input_fill_word_writes,
        input_rlc_bytes,
        totals: EngineCounters::default(),
    };
    counters.compute_totals();
    Ok(SimOutput {
        outputs,
        layer_outputs,
        counters,
        passes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::goldref::{self, random_inputs, MlpModel};
    use crate::mapper::{schedule_layer_with_configs, NpeConfig};

    fn cfg16x8() -> SimConfig {
        SimConfig::default()
    }

    fn npe(k: u32, n: u32) -> NpeConfig {
        NpeConfig {
            batches_per_roll: k,
            neurons_per_roll: n,
        }
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        let model = MlpModel::zeroed(&[8, 5]).unwrap();
        let inputs = random_inputs(2, 8, 4, -256, 255);
        let out = run_model(&model, &inputs, &cfg16x8()).unwrap();
        assert!(out.outputs.iter().all(|b| b.iter().all(|&v| v == 0)));
    }

    #[test]
    fn matches_golden_forward_pass() {
        let model = MlpModel::random(&[13, 10, 3], 77, -256, 255).unwrap();
        let inputs = random_inputs(2, 13, 78, -256, 255);
        let sim = run_model(&model, &inputs, &cfg16x8()).unwrap();
        let gold = goldref::mlp_forward(&model, &inputs, 8).unwrap();
        assert_eq!(sim.outputs, gold.outputs());
        for l in 0..model.depth() {
            assert_eq!(sim.layer_outputs[l], gold.layer(l), "layer {l}");
        }
    }

    #[test]
    fn conventional_flow_is_bit_identical() {
        let model = MlpModel::random(&[10, 9, 4], 5, -256, 255).unwrap();
        let inputs = random_inputs(3, 10, 6, -256, 255);
        let tcd = run_model(&model, &inputs, &cfg16x8()).unwrap();
        let conv = run_model(
            &model,
            &inputs,
            &SimConfig {
                dataflow: Dataflow::OsConv,
                ..cfg16x8()
            },
        )
        .unwrap();
        assert_eq!(tcd.outputs, conv.outputs);
        // Timing differs by exactly the finalize cycles.
        let t = &tcd.counters.totals;
        let c = &conv.counters.totals;
        let rolls: u64 = tcd.counters.per_layer.iter().map(|l| l.rolls).sum();
        assert_eq!(t.total_cycles, c.total_cycles + rolls);
    }

    #[test]
    fn cycle_accounting_follows_schedule() {
        let model = MlpModel::random(&[20, 12], 8, -64, 63).unwrap();
        let inputs = random_inputs(2, 20, 9, -64, 63);
        let out = run_model(&model, &inputs, &cfg16x8()).unwrap();
        let l = &out.counters.per_layer[0];
        assert_eq!(l.cycles_deferred, l.rolls * 21);
        assert_eq!(l.cycles_conventional, l.rolls * 20);
        assert_eq!(out.counters.totals.total_cycles, l.cycles_deferred);
    }

    #[test]
    fn ping_pong_banks_never_collide() {
        let model = MlpModel::random(&[6, 7, 8, 3], 11, -128, 127).unwrap();
        let inputs = random_inputs(2, 6, 12, -128, 127);
        let out = run_model(&model, &inputs, &cfg16x8()).unwrap();
        for l in &out.counters.per_layer {
            assert_ne!(l.fm_read_bank, l.fm_write_bank);
        }
        // Consecutive layers alternate banks.
        for w in out.counters.per_layer.windows(2) {
            assert_eq!(w[0].fm_write_bank, w[1].fm_read_bank);
        }
    }

    #[test]
    fn memory_access_counts_for_buffered_layout() {
        // 2 batches of a 200-input, 100-neuron layer in 2x64 arrangement.
        let geom = MemGeometry::default();
        let shape = ArrayShape::new(16, 8);
        let problem = LayerProblem::new(2, 200, 100);
        let events = schedule_layer_with_configs(problem, 0, &[npe(2, 64)]);
        assert_eq!(events.iter().map(|e| e.rolls()).sum::<u64>(), 2);

        let weights = WeightMatrix::zeros(200, 100);
        let batches = vec![vec![0i16; 200]; 2];
        let mut fm = layout_features(&batches, &geom).unwrap();
        let mut out = MemImage::new(geom.fm_mem_rows, geom.fm_mem_row_words);
        let res = run_layer(
            shape,
            &geom,
            problem,
            &events,
            &weights,
            &mut fm,
            &mut out,
            Dataflow::OsTcd,
            8,
        )
        .unwrap();
        let c = res.counters;
        // One row read serves 128/64 = 2 weight-consuming cycles: half the
        // unbuffered count. 200 cycles per roll -> 100 reads per roll.
        assert_eq!(c.w_mem_reads, 200);
        assert_eq!(c.w_mem_reads * 2, c.cycles_conventional);
        // One feature row serves 64/2 = 32 cycles: ceil(200/32) = 7 per roll.
        assert_eq!(c.fm_mem_reads, 14);
        assert_eq!(geom.feature_segment_words(2), 32);
        // Every computed neuron is written back once.
        assert_eq!(c.fm_mem_word_writes, 200);
    }

    #[test]
    fn schedule_mismatch_is_rejected() {
        let geom = MemGeometry::default();
        let problem = LayerProblem::new(2, 10, 10);
        // Schedule for a *different* problem: one batch only.
        let wrong = schedule_layer_with_configs(LayerProblem::new(1, 10, 10), 0, &[npe(2, 64)]);
        let weights = WeightMatrix::zeros(10, 10);
        let mut fm = layout_features(&vec![vec![0i16; 10]; 2], &geom).unwrap();
        let mut out = MemImage::new(geom.fm_mem_rows, geom.fm_mem_row_words);
        let err = run_layer(
            ArrayShape::new(16, 8),
            &geom,
            problem,
            &wrong,
            &weights,
            &mut fm,
            &mut out,
            Dataflow::OsTcd,
            8,
        )
        .unwrap_err();
        assert!(matches!(err, NpeError::ScheduleMismatch(_)));
    }

    #[test]
    fn oversized_layer_is_rejected_with_capacity_error() {
        let model = MlpModel::zeroed(&[70_000, 4]).unwrap();
        let inputs = vec![vec![0i16; 70_000]];
        let err = run_model(&model, &inputs, &cfg16x8()).unwrap_err();
        assert!(matches!(err, NpeError::FeatureCapacity { .. }));
    }

    #[test]
    fn batch_overflow_splits_into_passes() {
        // Shrink the feature memory so only a couple of batches fit.
        let geom = MemGeometry {
            fm_mem_row_words: 8,
            fm_mem_rows: 4,
            ..MemGeometry::default()
        };
        let cfg = SimConfig {
            geom,
            ..SimConfig::default()
        };
        let model = MlpModel::random(&[6, 5], 31, -100, 100).unwrap();
        let inputs = random_inputs(5, 6, 32, -100, 100);
        let sim = run_model(&model, &inputs, &cfg).unwrap();
        assert!(sim.passes > 1, "expected a batch split, got {}", sim.passes);
        let gold = goldref::mlp_forward(&model, &inputs, 8).unwrap();
        assert_eq!(sim.outputs, gold.outputs());
    }

    #[test]
    fn identical_runs_are_identical() {
        let model = MlpModel::random(&[14, 48, 2], 3, -256, 255).unwrap();
        let inputs = random_inputs(2, 14, 4, -256, 255);
        let a = run_model(&model, &inputs, &cfg16x8()).unwrap();
        let b = run_model(&model, &inputs, &cfg16x8()).unwrap();
        assert_eq!(a.outputs, b.outputs);
        assert_eq!(a.counters, b.counters);
    }

    #[test]
    fn active_cycles_bounded_by_array_capacity() {
        let model = MlpModel::random(&[30, 17, 5], 21, -256, 255).unwrap();
        let inputs = random_inputs(3, 30, 22, -256, 255);
        let out = run_model(&model, &inputs, &cfg16x8()).unwrap();
        let t = &out.counters.totals;
        assert!(t.pe_active_cycles <= t.total_cycles * out.counters.total_pes as u64);
    }

    #[test]
    fn weight_reads_follow_row_buffer_formula() {
        // Mixed-configuration schedule: 3 batches of 9 neurons on a 6x3
        // array picks a (2,9) event plus a (1,18) remainder event.
        let geom = MemGeometry::default();
        let shape = ArrayShape::new(6, 3);
        let problem = LayerProblem::new(3, 200, 9);
        let events = crate::mapper::schedule_layer(problem, 0, shape);
        let configs: Vec<u32> = events.iter().map(|e| e.config.neurons_per_roll).collect();
        assert_eq!(configs, vec![9, 18]);

        let weights = WeightMatrix::zeros(200, 9);
        let mut fm = layout_features(&vec![vec![0i16; 200]; 3], &geom).unwrap();
        let mut out = MemImage::new(geom.fm_mem_rows, geom.fm_mem_row_words);
        let res = run_layer(
            shape, &geom, problem, &events, &weights, &mut fm, &mut out, Dataflow::OsTcd, 8,
        )
        .unwrap();
        let want: u64 = events
            .iter()
            .map(|e| {
                let per_row = geom.weight_inputs_per_row(e.config.neurons_per_roll as usize);
                e.rolls() * (200u64.div_ceil(per_row as u64))
            })
            .sum();
        assert_eq!(res.counters.w_mem_reads, want);
    }

    #[test]
    fn active_pe_cycles_track_loads() {
        let model = MlpModel::random(&[9, 20], 13, -64, 63).unwrap();
        let inputs = random_inputs(1, 9, 14, -64, 63);
        let out = run_model(&model, &inputs, &cfg16x8()).unwrap();
        let l = &out.counters.per_layer[0];
        // One roll, load (1, 20): every deferring cycle drives 20 PEs.
        assert_eq!(l.rolls, 1);
        assert_eq!(l.pe_macs, 9 * 20);
        assert_eq!(l.pe_finalize, 20);
        assert_eq!(out.counters.totals.pe_active_cycles, 10 * 20);
    }
}
