//! Symbol-difference spectrum: the grouped multiset of `a - b` over all
//! ordered symbol pairs of an alphabet.
//!
//! Every pairwise metric in this crate depends on codeword pairs only
//! through the per-user symbol differences, so enumerating difference
//! vectors with multiplicities replaces enumerating `M^J x M^J` pairs.

use super::alphabet::Alphabet;
use num_complex::Complex64;

/// One distinct difference value with its pair statistics.
#[derive(Debug, Clone)]
pub struct DifferenceEntry {
    /// The complex difference value.
    pub value: Complex64,
    /// Number of ordered symbol pairs `(a, b)` with `a - b = value`.
    pub mult: u64,
    /// Total differing label bits summed over those pairs.
    pub bit_err_total: u64,
}

/// The difference multiset of an alphabet, with index structure used by the
/// enumeration engine: entry 0 is the zero difference, and each nonzero
/// entry knows its negation.
#[derive(Debug, Clone)]
pub struct DifferenceSpectrum {
    entries: Vec<DifferenceEntry>,
    neg_of: Vec<usize>,
    positive_reps: Vec<usize>,
    m_symbols: usize,
}

impl DifferenceSpectrum {
    pub fn entries(&self) -> &[DifferenceEntry] {
        &self.entries
    }

    /// Number of distinct difference values (including zero).
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, idx: usize) -> Complex64 {
        self.entries[idx].value
    }

    pub fn mult(&self, idx: usize) -> u64 {
        self.entries[idx].mult
    }

    /// `bit_err_total / mult` for the entry: average differing bits per pair.
    pub fn bit_err_rate(&self, idx: usize) -> f64 {
        self.entries[idx].bit_err_total as f64 / self.entries[idx].mult as f64
    }

    /// Index of `-value(idx)`.
    pub fn neg_of(&self, idx: usize) -> usize {
        self.neg_of[idx]
    }

    /// Canonical half of the nonzero values: one representative per
    /// `{d, -d}` pair, used to enumerate difference vectors up to sign.
    pub fn positive_reps(&self) -> &[usize] {
        &self.positive_reps
    }

    pub fn m_symbols(&self) -> usize {
        self.m_symbols
    }
}

/// Quantization grid for grouping nearly equal differences (print-precision
/// noise in literature constellations).
const GROUP_GRID: f64 = 1e-9;

fn group_key(v: Complex64) -> (i64, i64) {
    ((v.re / GROUP_GRID).round() as i64, (v.im / GROUP_GRID).round() as i64)
}

/// Group all `M^2` ordered symbol pairs by exact difference value.
pub fn symbol_difference_spectrum(alphabet: &Alphabet) -> DifferenceSpectrum {
    let m = alphabet.m();
    let mut keys: Vec<(i64, i64)> = Vec::new();
    let mut entries: Vec<DifferenceEntry> = Vec::new();

    let mut upsert = |value: Complex64, bits: u32| {
        let key = group_key(value);
        match keys.iter().position(|&k| k == key) {
            Some(i) => {
                entries[i].mult += 1;
                entries[i].bit_err_total += bits as u64;
            }
            None => {
                keys.push(key);
                entries.push(DifferenceEntry { value, mult: 1, bit_err_total: bits as u64 });
            }
        }
    };

    for a in 0..m {
        for b in 0..m {
            let d = alphabet.symbol(a) - alphabet.symbol(b);
            upsert(d, alphabet.bit_errors(a, b));
        }
    }

    // Deterministic order: zero first, then ascending (re, im).
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by_key(|&i| {
        let k = group_key(entries[i].value);
        (k.0 != 0 || k.1 != 0, k.0, k.1)
    });
    let entries: Vec<DifferenceEntry> = order.iter().map(|&i| entries[i].clone()).collect();

    let neg_of: Vec<usize> = entries
        .iter()
        .map(|e| {
            let nk = group_key(-e.value);
            entries
                .iter()
                .position(|o| group_key(o.value) == nk)
                .expect("difference multiset is symmetric under negation")
        })
        .collect();

    let positive_reps = (0..entries.len())
        .filter(|&i| {
            let v = entries[i].value;
            v.re > GROUP_GRID || (v.re.abs() <= GROUP_GRID && v.im > GROUP_GRID)
        })
        .collect();

    DifferenceSpectrum { entries, neg_of, positive_reps, m_symbols: m }
}
