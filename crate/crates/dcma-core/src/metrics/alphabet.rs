//! M-ary complex symbol sets with bit labels.

use num_complex::Complex64;
use std::f64::consts::FRAC_1_SQRT_2;

/// A modulation alphabet: `M` unit-average-energy symbols, where the symbol
/// at index `l` carries the `log2(M)`-bit label `l` (MSB first).
#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    symbols: Vec<Complex64>,
    bits: u32,
    name: String,
}

impl Alphabet {
    /// Gray-labeled 4-QAM `{(±1 ± i)/√2}`: bit 1 selects the real sign,
    /// bit 0 the imaginary sign, so adjacent symbols differ in one bit.
    pub fn qam4() -> Self {
        let symbols = (0..4u32)
            .map(|l| {
                let re = if l & 0b10 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                let im = if l & 0b01 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                Complex64::new(re, im)
            })
            .collect();
        Self { symbols, bits: 2, name: "qam4".into() }
    }

    /// Gray-labeled square 16-QAM with levels `{±1, ±3}/√10`.
    pub fn qam16() -> Self {
        // Per-axis 2-bit Gray ramp: 00, 01, 11, 10 -> -3, -1, +1, +3.
        const LEVELS: [f64; 4] = [-3.0, -1.0, 1.0, 3.0];
        const GRAY: [usize; 4] = [0, 1, 3, 2];
        let scale = 1.0 / 10.0f64.sqrt();
        let mut symbols = vec![Complex64::ZERO; 16];
        for (pos_re, &g_re) in GRAY.iter().enumerate() {
            for (pos_im, &g_im) in GRAY.iter().enumerate() {
                let label = (g_re << 2) | g_im;
                symbols[label] =
                    Complex64::new(LEVELS[pos_re] * scale, LEVELS[pos_im] * scale);
            }
        }
        Self { symbols, bits: 4, name: "qam16".into() }
    }

    /// Look up a built-in alphabet.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "qam4" => Some(Self::qam4()),
            "qam16" => Some(Self::qam16()),
            _ => None,
        }
    }

    /// Wrap an arbitrary symbol list (length a power of two, average energy
    /// 1 within 1e-12). Labels are the indices.
    pub fn from_symbols(symbols: Vec<Complex64>, name: &str) -> Result<Self, String> {
        let m = symbols.len();
        if m < 2 || !m.is_power_of_two() {
            return Err(format!("alphabet size {m} is not a power of two >= 2"));
        }
        let energy: f64 = symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / m as f64;
        if (energy - 1.0).abs() > 1e-12 {
            return Err(format!("average symbol energy {energy} != 1"));
        }
        Ok(Self { symbols, bits: m.trailing_zeros(), name: name.into() })
    }

    pub fn m(&self) -> usize {
        self.symbols.len()
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.bits
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn symbol(&self, label: usize) -> Complex64 {
        self.symbols[label]
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    /// Hamming distance between two labels.
    pub fn bit_errors(&self, a: usize, b: usize) -> u32 {
        (a ^ b).count_ones()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qam4_unit_energy_and_gray() {
        let a = Alphabet::qam4();
        assert_eq!(a.m(), 4);
        let e: f64 = a.symbols().iter().map(|s| s.norm_sqr()).sum::<f64>() / 4.0;
        assert!((e - 1.0).abs() < 1e-15);
        // Labels differing in one bit sit at squared distance 2.
        for l in 0..4usize {
            for b in 0..2 {
                let other = l ^ (1 << b);
                let d2 = (a.symbol(l) - a.symbol(other)).norm_sqr();
                assert!((d2 - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn qam16_unit_energy_and_gray() {
        let a = Alphabet::qam16();
        assert_eq!(a.m(), 16);
        let e: f64 = a.symbols().iter().map(|s| s.norm_sqr()).sum::<f64>() / 16.0;
        assert!((e - 1.0).abs() < 1e-12);
        // Nearest neighbors (squared distance 4/10) differ in exactly 1 bit.
        let min_d2 = 4.0 / 10.0;
        for i in 0..16usize {
            for j in 0..16usize {
                if i == j {
                    continue;
                }
                let d2 = (a.symbol(i) - a.symbol(j)).norm_sqr();
                if (d2 - min_d2).abs() < 1e-9 {
                    assert_eq!(a.bit_errors(i, j), 1, "labels {i} {j}");
                }
            }
        }
    }

    #[test]
    fn from_symbols_validates() {
        assert!(Alphabet::from_symbols(vec![Complex64::new(1.0, 0.0); 3], "bad").is_err());
        assert!(Alphabet::from_symbols(
            vec![Complex64::new(2.0, 0.0), Complex64::new(-2.0, 0.0)],
            "hot"
        )
        .is_err());
        let ok = Alphabet::from_symbols(
            vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            "bpsk",
        )
        .unwrap();
        assert_eq!(ok.bits_per_symbol(), 1);
    }
}
