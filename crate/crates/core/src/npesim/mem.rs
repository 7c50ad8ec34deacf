//! Weight and feature memory models.
//!
//! Data is reshaped so that everything the array consumes in consecutive
//! cycles sits in one row: weight memory packs the N weights of one roll
//! per input neuron side by side, feature memory splits each row into one
//! segment per batch. Reading a row into a buffer then serves several
//! cycles, which is where the access savings come from.

use crate::goldref::WeightMatrix;
use crate::mapper::NpeConfig;

use super::NpeError;

/// Geometry of the two global buffers. Words are 16 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemGeometry {
    pub w_mem_row_words: usize,
    pub w_mem_rows: usize,
    pub fm_mem_row_words: usize,
    pub fm_mem_rows: usize,
}

impl Default for MemGeometry {
    /// 512 KByte weight memory in 128-word rows and two 64 KByte feature
    /// memories in 64-word rows.
    fn default() -> Self {
        Self {
            w_mem_row_words: 128,
            w_mem_rows: 512 * 1024 / (128 * 2),
            fm_mem_row_words: 64,
            fm_mem_rows: 64 * 1024 / (64 * 2),
        }
    }
}

impl MemGeometry {
    /// Features of one batch per feature-memory row; one row read serves
    /// this many consecutive cycles.
    pub fn feature_segment_words(&self, batches: usize) -> usize {
        self.fm_mem_row_words / batches.max(1)
    }

    /// Input-neuron segments of one roll per weight-memory row; one row
    /// read serves this many consecutive cycles.
    pub fn weight_inputs_per_row(&self, neurons_per_roll: usize) -> usize {
        self.w_mem_row_words / neurons_per_roll.max(1)
    }
}

/// Access counters of one memory image. All counters only grow.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MemStats {
    /// Whole-row reads into a line buffer.
    pub read_count: u64,
    /// Whole-row writes.
    pub write_count: u64,
    /// Single-word writes (the memories are word-writable).
    pub word_write_count: u64,
}

/// A word-addressable memory image with access counting.
#[derive(Debug, Clone)]
pub struct MemImage {
    row_words: usize,
    rows: Vec<u16>,
    n_rows: usize,
    pub stats: MemStats,
}

impl MemImage {
    pub fn new(n_rows: usize, row_words: usize) -> Self {
        Self {
            row_words,
            rows: vec![0; n_rows * row_words],
            n_rows,
            stats: MemStats::default(),
        }
    }

    pub fn rows(&self) -> usize {
        self.n_rows
    }

    pub fn row_words(&self) -> usize {
        self.row_words
    }

    /// Read a whole row into a buffer (counted).
    pub fn read_row(&mut self, row: usize) -> &[u16] {
        self.stats.read_count += 1;
        &self.rows[row * self.row_words..(row + 1) * self.row_words]
    }

    /// Write one word without touching the rest of its row (counted).
    pub fn write_word(&mut self, row: usize, col: usize, word: u16) {
        debug_assert!(col < self.row_words);
        self.stats.word_write_count += 1;
        self.rows[row * self.row_words + col] = word;
    }

    /// Write a whole row (counted once).
    pub fn write_row(&mut self, row: usize, words: &[u16]) {
        debug_assert_eq!(words.len(), self.row_words);
        self.stats.write_count += 1;
        self.rows[row * self.row_words..(row + 1) * self.row_words].copy_from_slice(words);
    }

    /// Uncounted access for tests and debugging.
    pub fn peek(&self, row: usize, col: usize) -> u16 {
        self.rows[row * self.row_words + col]
    }

    /// Hex dump, one row per line.
    pub fn dump_hex(&self) -> String {
        let mut out = String::new();
        for r in 0..self.n_rows {
            let row = &self.rows[r * self.row_words..(r + 1) * self.row_words];
            let line: Vec<String> = row.iter().map(|w| format!("{w:04x}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Rows needed by one roll-width block of a layer's weights.
pub fn weight_block_rows(inputs: usize, neurons_per_roll: usize, geom: &MemGeometry) -> usize {
    let per_row = geom.weight_inputs_per_row(neurons_per_roll);
    inputs.div_ceil(per_row.max(1))
}

/// Pack weights of `neuron_range` into `img` starting at `base_row`,
/// one `segment_width`-word slot group per input neuron. Returns rows used.
pub(super) fn pack_weight_block(
    img: &mut MemImage,
    weights: &WeightMatrix,
    neuron_lo: usize,
    neuron_hi: usize,
    segment_width: usize,
    base_row: usize,
) -> usize {
    let per_row = img.row_words() / segment_width;
    let inputs = weights.inputs();
    for i in 0..inputs {
        let row = base_row + i / per_row;
        let slot = (i % per_row) * segment_width;
        for (k, u) in (neuron_lo..neuron_hi).enumerate() {
            img.write_word(row, slot + k, weights.at(i, u) as u16);
        }
    }
    inputs.div_ceil(per_row)
}

/// Lay out a whole layer's weights for one configuration.
///
/// Neurons are grouped into roll-width blocks; block `g` packs, for every
/// input neuron, the weights of neurons `[g*N, (g+1)*N)` into consecutive
/// `N`-word segments, occupying `ceil(inputs / (row_words / N))` rows. A
/// final partial block keeps the full segment stride.
pub fn layout_weights(
    weights: &WeightMatrix,
    config: NpeConfig,
    geom: &MemGeometry,
) -> Result<MemImage, NpeError> {
    let n = config.neurons_per_roll as usize;
    if n > geom.w_mem_row_words {
        return Err(NpeError::RollTooWide {
            neurons_per_roll: config.neurons_per_roll,
            row_words: geom.w_mem_row_words,
        });
    }
    let block_rows = weight_block_rows(weights.inputs(), n, geom);
    let blocks = weights.outputs().div_ceil(n);
    let needed = blocks * block_rows;
    if needed > geom.w_mem_rows {
        return Err(NpeError::WeightCapacity {
            needed_rows: needed,
            available_rows: geom.w_mem_rows,
        });
    }
    let mut img = MemImage::new(needed, geom.w_mem_row_words);
    for g in 0..blocks {
        let lo = g * n;
        let hi = (lo + n).min(weights.outputs());
        pack_weight_block(&mut img, weights, lo, hi, n, g * block_rows);
    }
    Ok(img)
}

/// Inverse read of [`layout_weights`] (uncounted).
pub fn read_weight(
    img: &MemImage,
    input: usize,
    neuron: usize,
    inputs: usize,
    config: NpeConfig,
    geom: &MemGeometry,
) -> u16 {
    let n = config.neurons_per_roll as usize;
    let per_row = geom.weight_inputs_per_row(n);
    let block_rows = inputs.div_ceil(per_row);
    let g = neuron / n;
    let row = g * block_rows + input / per_row;
    let col = (input % per_row) * n + neuron % n;
    img.peek(row, col)
}

/// Lay out feature vectors of all batches: row `r` holds features
/// `[r*seg, (r+1)*seg)` of every batch in `batches.len()` contiguous
/// segments of `seg = row_words / B` words.
pub fn layout_features(batches: &[Vec<i16>], geom: &MemGeometry) -> Result<MemImage, NpeError> {
    let b = batches.len();
    assert!(b >= 1, "need at least one batch");
    let len = batches[0].len();
    assert!(
        batches.iter().all(|f| f.len() == len),
        "batches must have equal length"
    );
    let seg = geom.feature_segment_words(b);
    let needed = if seg == 0 { usize::MAX } else { len.div_ceil(seg) };
    if seg == 0 || needed > geom.fm_mem_rows {
        return Err(NpeError::FeatureCapacity {
            batches: b,
            features: len,
            needed_rows: needed,
            available_rows: geom.fm_mem_rows,
        });
    }
    let mut img = MemImage::new(geom.fm_mem_rows, geom.fm_mem_row_words);
    for (bi, features) in batches.iter().enumerate() {
        for (i, &x) in features.iter().enumerate() {
            img.write_word(i / seg, bi * seg + i % seg, x as u16);
        }
    }
    Ok(img)
}

/// Inverse read of [`layout_features`] (uncounted).
pub fn read_feature(
    img: &MemImage,
    batch: usize,
    index: usize,
    total_batches: usize,
    geom: &MemGeometry,
) -> u16 {
    let seg = geom.feature_segment_words(total_batches);
    img.peek(index / seg, batch * seg + index % seg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn cfg(k: u32, n: u32) -> NpeConfig {
        NpeConfig {
            batches_per_roll: k,
            neurons_per_roll: n,
        }
    }

    #[test]
    fn weight_block_spans_100_rows() {
        // 200 inputs, 64-neuron rolls, 128-word rows: 2 inputs per row.
        let geom = MemGeometry::default();
        assert_eq!(weight_block_rows(200, 64, &geom), 100);
        let weights = WeightMatrix::zeros(200, 100);
        let img = layout_weights(&weights, cfg(2, 64), &geom).unwrap();
        assert_eq!(img.rows(), 200); // two blocks of 100
    }

    #[test]
    fn weight_layout_single_row() {
        let geom = MemGeometry::default();
        let weights = WeightMatrix::zeros(1, 64);
        let img = layout_weights(&weights, cfg(2, 64), &geom).unwrap();
        assert_eq!(img.rows(), 1);
    }

    #[test]
    fn weight_layout_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let geom = MemGeometry {
            w_mem_row_words: 16,
            w_mem_rows: 256,
            ..MemGeometry::default()
        };
        let inputs = 11;
        let outputs = 13;
        let data: Vec<i16> = (0..inputs * outputs).map(|_| rng.gen()).collect();
        let weights = WeightMatrix::from_rows(inputs, outputs, data);
        let config = cfg(1, 4);
        let img = layout_weights(&weights, config, &geom).unwrap();
        for i in 0..inputs {
            for u in 0..outputs {
                assert_eq!(
                    read_weight(&img, i, u, inputs, config, &geom),
                    weights.at(i, u) as u16,
                    "({i},{u})"
                );
            }
        }
    }

    #[test]
    fn weight_layout_capacity_error() {
        let geom = MemGeometry {
            w_mem_rows: 4,
            ..MemGeometry::default()
        };
        let weights = WeightMatrix::zeros(200, 100);
        assert!(matches!(
            layout_weights(&weights, cfg(2, 64), &geom),
            Err(NpeError::WeightCapacity { needed_rows: 200, available_rows: 4 })
        ));
    }

    #[test]
    fn feature_layout_spans_7_rows() {
        // 200 features, 2 batches, 64-word rows: 32-feature segments.
        let geom = MemGeometry::default();
        let batches = vec![vec![0i16; 200]; 2];
        let img = layout_features(&batches, &geom).unwrap();
        assert_eq!(geom.feature_segment_words(2), 32);
        assert_eq!(200usize.div_ceil(32), 7);
        assert!(img.rows() >= 7);
    }

    #[test]
    fn feature_layout_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        let geom = MemGeometry::default();
        let batches: Vec<Vec<i16>> = (0..3)
            .map(|_| (0..50).map(|_| rng.gen()).collect())
            .collect();
        let img = layout_features(&batches, &geom).unwrap();
        for (b, batch) in batches.iter().enumerate() {
            for (i, &x) in batch.iter().enumerate() {
                assert_eq!(read_feature(&img, b, i, 3, &geom), x as u16);
            }
        }
    }

    #[test]
    fn feature_layout_capacity_error() {
        let geom = MemGeometry {
            fm_mem_rows: 2,
            ..MemGeometry::default()
        };
        let batches = vec![vec![0i16; 500]];
        assert!(matches!(
            layout_features(&batches, &geom),
            Err(NpeError::FeatureCapacity { .. })
        ));
    }

    #[test]
    fn single_feature_single_batch() {
        let geom = MemGeometry::default();
        let img = layout_features(&[vec![42]], &geom).unwrap();
        assert_eq!(read_feature(&img, 0, 0, 1, &geom), 42);
    }

    #[test]
    fn hex_dump_one_line_per_row() {
        let mut img = MemImage::new(3, 4);
        img.write_word(1, 2, 0xbeef);
        let dump = img.dump_hex();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "0000 0000 beef 0000");
    }

    #[test]
    fn counters_grow_monotonically() {
        let mut img = MemImage::new(2, 4);
        img.write_word(0, 0, 1);
        img.read_row(0);
        img.write_row(1, &[1, 2, 3, 4]);
        assert_eq!(
            img.stats,
            MemStats {
                read_count: 1,
                write_count: 1,
                word_write_count: 1
            }
        );
    }
}
