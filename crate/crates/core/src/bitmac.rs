//! Bit-exact models of the temporal-carry-deferring MAC and a behavioral
//! reference MAC.
//!
//! A deferring MAC never ripples carries while a stream is in flight.
//! Each cycle it reshapes the incoming product into per-position bit
//! columns, folds in the previous cycle's output register and carry
//! buffer, compresses every column down to two bits with a tree of
//! hamming-weight compressors, and stores the resulting propagate bits in
//! the output register and the generate bits in the carry buffer. Only
//! the final cycle of a stream closes the carry chain, producing the
//! exact dot product one cycle after the last input pair.
//!
//! The running-sum invariant maintained by every deferring step is
//!
//! ```text
//! oru + 2 * cbu  ==  sum(a_i * b_i)   (mod 2^acc_bits)
//! ```
//!
//! where `cbu` holds generate bits at the position they were produced,
//! consumed one position to the left on the next cycle.

/// Accumulator width of the default 16-bit MAC: a full 32-bit product plus
/// 16 guard bits, enough for streams of up to 2^16 terms without wrap.
pub const ACC_WIDTH: u32 = 48;

/// Signed 16-bit fixed-point operand (weight or feature word).
///
/// The integer/fraction split is a run-wide convention (default Q8.8) that
/// only affects how accumulator values are quantized back to 16 bits; it
/// has no influence on bit behavior here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, PartialOrd, Ord)]
pub struct FixedWord(i16);

impl FixedWord {
    pub const fn new(raw: i16) -> Self {
        Self(raw)
    }

    pub const fn raw(self) -> i16 {
        self.0
    }

    pub const fn to_bits(self) -> u16 {
        self.0 as u16
    }

    pub const fn from_bits(bits: u16) -> Self {
        Self(bits as i16)
    }
}

impl From<i16> for FixedWord {
    fn from(raw: i16) -> Self {
        Self(raw)
    }
}

/// Operand and accumulator geometry of a MAC instance.
///
/// The default is signed 16-bit operands accumulating into [`ACC_WIDTH`]
/// bits. Reduced widths (e.g. 4-bit operands) are used by exhaustive
/// equivalence tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MacParams {
    pub operand_bits: u32,
    pub acc_bits: u32,
}

impl Default for MacParams {
    fn default() -> Self {
        Self {
            operand_bits: 16,
            acc_bits: ACC_WIDTH,
        }
    }
}

impl MacParams {
    /// A reduced-width geometry. The accumulator must fit the shifted
    /// two's-complement row of the sign-weight term, i.e.
    /// `acc_bits >= 2 * operand_bits - 2`.
    pub fn new(operand_bits: u32, acc_bits: u32) -> Self {
        assert!((2..=16).contains(&operand_bits), "operand width out of range");
        assert!(
            acc_bits >= 2 * operand_bits - 2 && acc_bits <= 62,
            "accumulator width out of range"
        );
        Self {
            operand_bits,
            acc_bits,
        }
    }

    pub fn mask(&self) -> u64 {
        (1u64 << self.acc_bits) - 1
    }

    pub fn operand_min(&self) -> i32 {
        -(1i32 << (self.operand_bits - 1))
    }

    pub fn operand_max(&self) -> i32 {
        (1i32 << (self.operand_bits - 1)) - 1
    }

    fn check_operand(&self, v: i32) {
        assert!(
            v >= self.operand_min() && v <= self.operand_max(),
            "operand {} outside signed {}-bit range",
            v,
            self.operand_bits
        );
    }
}

/// Interpret the low `bits` of `value` as a two's-complement integer.
pub fn sign_extend(value: u64, bits: u32) -> i64 {
    debug_assert!((1..=63).contains(&bits));
    let shift = 64 - bits;
    ((value << shift) as i64) >> shift
}

/// Bit multiset of one column. Only the multiplicities matter: which
/// individual wire carries which bit never changes a hamming weight.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ColumnBits {
    pub zeros: u32,
    pub ones: u32,
}

impl ColumnBits {
    pub fn total(&self) -> u32 {
        self.zeros + self.ones
    }
}

/// Backing store width; accumulators are capped at 62 bits.
const MAX_COLUMNS: usize = 64;

/// Per-bit-position columns of bits feeding the compressor tree.
///
/// Bits pushed past the accumulator width are dropped, matching modular
/// two's-complement arithmetic. Stored as fixed multiplicity arrays so a
/// MAC cycle never touches the heap.
#[derive(Debug, Clone)]
pub struct BitColumns {
    width: usize,
    zeros: [u16; MAX_COLUMNS],
    ones: [u16; MAX_COLUMNS],
}

impl BitColumns {
    pub fn new(width: u32) -> Self {
        debug_assert!(width as usize <= MAX_COLUMNS);
        Self {
            width: width as usize,
            zeros: [0; MAX_COLUMNS],
            ones: [0; MAX_COLUMNS],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn column(&self, pos: usize) -> ColumnBits {
        assert!(pos < self.width);
        ColumnBits {
            zeros: self.zeros[pos] as u32,
            ones: self.ones[pos] as u32,
        }
    }

    pub fn push_bit(&mut self, pos: usize, bit: bool) {
        if pos >= self.width {
            return;
        }
        if bit {
            self.ones[pos] += 1;
        } else {
            self.zeros[pos] += 1;
        }
    }

    /// Push one `width`-bit row of `value` starting at column `base`.
    /// Zero bits are pushed too: a partial-product row occupies its full
    /// span whether or not a wire happens to carry a one.
    pub fn push_row(&mut self, base: usize, width: u32, value: u64) {
        debug_assert!(width == 64 || value < (1u64 << width));
        let hi = (base + width as usize).min(self.width);
        for (k, pos) in (base..hi).enumerate() {
            if (value >> k) & 1 == 1 {
                self.ones[pos] += 1;
            } else {
                self.zeros[pos] += 1;
            }
        }
    }

    /// Push a full accumulator-width row (e.g. a feedback register).
    pub fn push_bit_vector(&mut self, bits: u64) {
        let mask = if self.width == 64 { u64::MAX } else { (1u64 << self.width) - 1 };
        self.push_row(0, self.width as u32, bits & mask);
    }

    pub fn max_height(&self) -> u32 {
        let mut max = 0u16;
        for p in 0..self.width {
            max = max.max(self.zeros[p] + self.ones[p]);
        }
        max as u32
    }

    /// Integer value of the columns modulo 2^width.
    pub fn value(&self) -> u64 {
        let mut sum = 0u64;
        for p in 0..self.width {
            sum = sum.wrapping_add((self.ones[p] as u64) << p);
        }
        let mask = if self.width == 64 { u64::MAX } else { (1u64 << self.width) - 1 };
        sum & mask
    }
}

/// Binary population count of a bit multiset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HammingCount {
    pub value: u32,
    pub width: u32,
}

/// Output width of a hamming-weight compressor over `m` bits.
///
/// `ceil(log2(m + 1))` bits are needed to represent counts 0..=m without
/// truncation; complete compressors (m = 2^n - 1, e.g. 3:2 and 7:3) are
/// the special case where this is also `ceil(log2 m)`.
pub fn compressor_width(m: u32) -> u32 {
    assert!(m >= 1);
    32 - m.leading_zeros()
}

/// Count the ones in `bits`, reporting the count and its lossless width.
pub fn hwc(bits: &[bool]) -> HammingCount {
    assert!(!bits.is_empty(), "hamming-weight compressor needs >= 1 input");
    HammingCount {
        value: bits.iter().filter(|&&b| b).count() as u32,
        width: compressor_width(bits.len() as u32),
    }
}

/// Result of one full compression pass: the two surviving rows plus the
/// number of compressor layers the pass used (0 when no column exceeded
/// two bits).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompressedRows {
    pub row_a: u64,
    pub row_b: u64,
    pub layers: u32,
}

/// Reduce columns to at most two bits each with repeated compressor
/// layers, after merging the injected carry bits into their columns.
///
/// Each layer consumes every column higher than two bits greedily with
/// complete 7:3 and 3:2 compressors; a two-bit remainder goes through an
/// incomplete 2:2 counter and a lone leftover bit passes through.
/// The column-sum value is preserved modulo 2^width throughout.
pub fn compress_cel(mut cols: BitColumns, injected_carries: u64) -> CompressedRows {
    cols.push_bit_vector(injected_carries);
    let width = cols.width();
    let mut layers = 0u32;
    while cols.max_height() > 2 {
        layers += 1;
        let mut next_zeros = [0u16; MAX_COLUMNS];
        let mut next_ones = [0u16; MAX_COLUMNS];
        for p in 0..width {
            let m = cols.zeros[p] + cols.ones[p];
            if m <= 2 {
                next_zeros[p] += cols.zeros[p];
                next_ones[p] += cols.ones[p];
                continue;
            }
            let mut rem_bits = m;
            let mut rem_ones = cols.ones[p];
            while rem_bits > 0 {
                let take = if rem_bits >= 7 {
                    7
                } else if rem_bits >= 3 {
                    3
                } else {
                    rem_bits
                };
                if take == 1 {
                    if rem_ones > 0 {
                        next_ones[p] += 1;
                    } else {
                        next_zeros[p] += 1;
                    }
                    break;
                }
                let ones = rem_ones.min(take);
                rem_bits -= take;
                rem_ones -= ones;
                let out_width = compressor_width(take as u32) as usize;
                for k in 0..out_width {
                    let q = p + k;
                    if q < width {
                        if (ones >> k) & 1 == 1 {
                            next_ones[q] += 1;
                        } else {
                            next_zeros[q] += 1;
                        }
                    }
                }
            }
        }
        cols.zeros = next_zeros;
        cols.ones = next_ones;
    }
    let mut row_a = 0u64;
    let mut row_b = 0u64;
    for p in 0..width {
        match cols.ones[p] {
            0 => {}
            1 => row_a |= 1 << p,
            2 => {
                row_a |= 1 << p;
                row_b |= 1 << p;
            }
            _ => unreachable!("column not reduced"),
        }
    }
    CompressedRows {
        row_a,
        row_b,
        layers,
    }
}

/// First carry-propagate-adder layer: per-position propagate and generate
/// signals. The generate bit at position `i` is worth 2^(i+1), so
/// `P + 2G == row_a + row_b` exactly.
pub fn gen_stage(row_a: u64, row_b: u64) -> (u64, u64) {
    (row_a ^ row_b, row_a & row_b)
}

/// Remainder of the carry-propagate adder: the only place in the MAC where
/// the carry chain closes. Returns `propagate + (generate << 1)` modulo
/// the accumulator width.
pub fn pcpa(propagate: u64, generate: u64, acc_bits: u32) -> u64 {
    propagate.wrapping_add(generate << 1) & ((1u64 << acc_bits) - 1)
}

/// Generate the partial-product bit columns for `a * b`.
///
/// Sign handling: a negative operand (if any) is used as the multiplier,
/// so the accumulated rows are shifted copies of a non-negative
/// multiplicand, and the multiplier's sign-weight term `-2^(w-1) * a` is
/// appended as one extra row holding the shifted two's complement of the
/// multiplicand. If both operands are negative, both are negated up front
/// and the product is formed positive.
pub fn gen_partial_products(params: MacParams, a: i32, b: i32) -> BitColumns {
    params.check_operand(a);
    params.check_operand(b);
    let w = params.operand_bits;
    let mut cols = BitColumns::new(params.acc_bits);
    let (multiplicand, multiplier) = if a < 0 && b >= 0 { (b, a) } else { (a, b) };
    if multiplicand < 0 {
        // Both negative: negate both, product is positive. The negated
        // values may reach 2^(w-1), hence the w-bit row span.
        let d = (-multiplicand) as u64;
        let m = (-multiplier) as u64;
        for i in 0..w as usize {
            let row = if (m >> i) & 1 == 1 { d } else { 0 };
            cols.push_row(i, w, row);
        }
    } else {
        let d = multiplicand as u64;
        let m_bits = (multiplier as u64) & ((1u64 << w) - 1);
        for i in 0..(w - 1) as usize {
            let row = if (m_bits >> i) & 1 == 1 { d } else { 0 };
            cols.push_row(i, w - 1, row);
        }
        if multiplier < 0 {
            // Sign-weight row: -2^(w-1) * d as a two's complement value in
            // the remaining accumulator field, left-shifted by w-1.
            let field = params.acc_bits - (w - 1);
            let complement = if d == 0 { 0 } else { (1u64 << field) - d };
            cols.push_row((w - 1) as usize, field, complement);
        }
    }
    cols
}

/// Operating mode of a deferring MAC cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MacMode {
    /// Accumulate one product, deferring carries to the next cycle.
    CarryDefer,
    /// Close the carry chain and emit the exact sum; used once per stream.
    CarryPropagate,
}

/// Register state of a deferring MAC.
///
/// `oru` holds the propagate/sum bits, `cbu` the deferred generate bits
/// (stored at generation position, worth twice that weight). The cycle
/// counter is a lifetime counter and is not cleared by a propagate cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TcdMacState {
    pub oru: u64,
    pub cbu: u64,
    pub cycle_count: u64,
}

/// A temporal-carry-deferring multiply-accumulate unit.
#[derive(Debug, Clone)]
pub struct TcdMac {
    params: MacParams,
    state: TcdMacState,
    peak_cel_layers: u32,
}

impl Default for TcdMac {
    fn default() -> Self {
        Self::new(MacParams::default())
    }
}

impl TcdMac {
    pub fn new(params: MacParams) -> Self {
        Self {
            params,
            state: TcdMacState::default(),
            peak_cel_layers: 0,
        }
    }

    pub fn params(&self) -> MacParams {
        self.params
    }

    pub fn state(&self) -> TcdMacState {
        self.state
    }

    /// Deepest compressor tree observed so far, for timing inspection.
    pub fn peak_cel_layers(&self) -> u32 {
        self.peak_cel_layers
    }

    /// Current value of the deferred running sum (what a propagate cycle
    /// would emit), modulo the accumulator width.
    pub fn deferred_value(&self) -> u64 {
        pcpa(self.state.oru, self.state.cbu, self.params.acc_bits)
    }

    /// One cycle. In deferring mode the operands are accumulated and
    /// `None` is returned; in propagating mode the operands are ignored,
    /// the exact sum is returned, and the value registers reset.
    pub fn step(&mut self, mode: MacMode, a: i32, b: i32) -> Option<u64> {
        match mode {
            MacMode::CarryDefer => {
                self.accumulate(a, b);
                None
            }
            MacMode::CarryPropagate => Some(self.propagate()),
        }
    }

    /// Deferring cycle: reshape `a * b` into bit columns, fold in the
    /// output register as an extra row and the carry buffer one position
    /// left, compress, and capture the new propagate/generate pair.
    pub fn accumulate(&mut self, a: i32, b: i32) {
        let mask = self.params.mask();
        let mut cols = gen_partial_products(self.params, a, b);
        cols.push_bit_vector(self.state.oru);
        let carries = (self.state.cbu << 1) & mask;
        let rows = compress_cel(cols, carries);
        let (propagate, generate) = gen_stage(rows.row_a, rows.row_b);
        self.state.oru = propagate & mask;
        self.state.cbu = generate & mask;
        self.state.cycle_count += 1;
        self.peak_cel_layers = self.peak_cel_layers.max(rows.layers);
    }

    /// Propagating cycle: emit the exact accumulated sum and clear the
    /// value registers. Legal (and wasteful) on a reset unit, returning 0.
    pub fn propagate(&mut self) -> u64 {
        let value = pcpa(self.state.oru, self.state.cbu, self.params.acc_bits);
        self.state.oru = 0;
        self.state.cbu = 0;
        self.state.cycle_count += 1;
        value
    }
}

/// Value and cycle count of one stream run through a MAC model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamResult {
    pub value: u64,
    pub cycles: u64,
}

/// Run a full input stream through a deferring MAC: one deferring cycle
/// per pair plus one propagating cycle, `N + 1` cycles total. An empty
/// stream takes zero cycles and yields zero.
pub fn tcd_mac_stream(pairs: &[(FixedWord, FixedWord)]) -> StreamResult {
    let wide: Vec<(i32, i32)> = pairs
        .iter()
        .map(|&(a, b)| (a.raw() as i32, b.raw() as i32))
        .collect();
    tcd_mac_stream_with(MacParams::default(), &wide)
}

/// Width-parameterized variant of [`tcd_mac_stream`].
pub fn tcd_mac_stream_with(params: MacParams, pairs: &[(i32, i32)]) -> StreamResult {
    if pairs.is_empty() {
        return StreamResult { value: 0, cycles: 0 };
    }
    let mut mac = TcdMac::new(params);
    for &(a, b) in pairs {
        mac.accumulate(a, b);
    }
    let value = mac.propagate();
    StreamResult {
        value,
        cycles: mac.state().cycle_count,
    }
}

/// Behavioral reference MAC: a multiplier feeding an adder, one exact
/// result per cycle, `N` cycles for an `N`-pair stream. Functional and
/// timing baseline for output-stationary engines built from conventional
/// MACs.
pub fn conv_mac_stream(pairs: &[(FixedWord, FixedWord)]) -> StreamResult {
    let wide: Vec<(i32, i32)> = pairs
        .iter()
        .map(|&(a, b)| (a.raw() as i32, b.raw() as i32))
        .collect();
    conv_mac_stream_with(MacParams::default(), &wide)
}

/// Width-parameterized variant of [`conv_mac_stream`].
pub fn conv_mac_stream_with(params: MacParams, pairs: &[(i32, i32)]) -> StreamResult {
    let mut acc: i64 = 0;
    for &(a, b) in pairs {
        params.check_operand(a);
        params.check_operand(b);
        acc = acc.wrapping_add((a as i64) * (b as i64));
    }
    StreamResult {
        value: (acc as u64) & params.mask(),
        cycles: pairs.len() as u64,
    }
}
