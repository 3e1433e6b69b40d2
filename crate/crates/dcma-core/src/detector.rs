//! Generalized sphere decoding for the overloaded (`K < J`) linear model.
//!
//! The rank-deficient least-squares problem is lifted to a full-rank one by
//! Tikhonov regularization: `Q = Gᴴ G + ρ I` is positive definite for any
//! `ρ > 0`, its Cholesky factor `U` is upper triangular, and
//! `‖r − U α‖² = ‖y − G α‖² + ρ‖α‖² + const`, so a standard depth-first
//! sphere search over `U` returns the exact minimizer of the regularized
//! cost. For constant-modulus alphabets `ρ‖α‖²` is the same for every
//! candidate, making the decision the true ML decision for any `ρ`.

use crate::metrics::Alphabet;
use num_complex::Complex64;
use thiserror::Error;

/// Brute-force oracle refuses above this many candidates.
pub const ML_EXHAUSTIVE_GUARD: u128 = 1 << 22;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("Cholesky factorization failed (non-finite input?)")]
    Factorization,
    #[error("exhaustive search over {candidates} candidates exceeds guard of {guard}")]
    TooLarge { candidates: u128, guard: u128 },
}

/// One detection instance: received vector, effective matrix
/// `G = diag(h) D`, alphabet, and the regularization constant.
#[derive(Debug, Clone)]
pub struct DetectionProblem<'a> {
    pub y: &'a [Complex64],
    /// Row-major `K x J`.
    pub g: &'a [Complex64],
    pub k: usize,
    pub j: usize,
    pub alphabet: &'a Alphabet,
    pub rho: f64,
}

impl<'a> DetectionProblem<'a> {
    pub fn new(
        y: &'a [Complex64],
        g: &'a [Complex64],
        k: usize,
        j: usize,
        alphabet: &'a Alphabet,
        rho: f64,
    ) -> Self {
        assert_eq!(y.len(), k);
        assert_eq!(g.len(), k * j);
        assert!(rho > 0.0 && rho.is_finite(), "regularizer must be positive");
        Self { y, g, k, j, alphabet, rho }
    }

    /// `‖y - G α‖² + ρ‖α‖²` for a label assignment.
    pub fn regularized_cost(&self, labels: &[usize]) -> f64 {
        assert_eq!(labels.len(), self.j);
        let mut cost = 0.0;
        for row in 0..self.k {
            let mut acc = Complex64::ZERO;
            for col in 0..self.j {
                acc += self.g[row * self.j + col] * self.alphabet.symbol(labels[col]);
            }
            cost += (self.y[row] - acc).norm_sqr();
        }
        cost + self.rho
            * labels
                .iter()
                .map(|&l| self.alphabet.symbol(l).norm_sqr())
                .sum::<f64>()
    }
}

/// The lifted full-rank system: `Uᴴ U = Gᴴ G + ρ I` with `U` upper
/// triangular (real positive diagonal), and `r` solving `Uᴴ r = Gᴴ y`.
#[derive(Debug, Clone)]
pub struct TriangularSystem {
    /// Row-major `J x J`, strictly lower part zero.
    pub u: Vec<Complex64>,
    pub r: Vec<Complex64>,
    pub j: usize,
}

impl TriangularSystem {
    /// `‖r - U α‖²` for a label assignment.
    pub fn cost(&self, alphabet: &Alphabet, labels: &[usize]) -> f64 {
        let j = self.j;
        let mut cost = 0.0;
        for row in 0..j {
            let mut acc = Complex64::ZERO;
            for col in row..j {
                acc += self.u[row * j + col] * alphabet.symbol(labels[col]);
            }
            cost += (self.r[row] - acc).norm_sqr();
        }
        cost
    }
}

/// Form `Q = Gᴴ G + ρ I`, factor it as `Uᴴ U`, and forward-solve
/// `Uᴴ r = Gᴴ y`.
pub fn regularize_and_factor(p: &DetectionProblem<'_>) -> Result<TriangularSystem, DetectorError> {
    let (k, j) = (p.k, p.j);

    // Gram matrix, upper triangle only.
    let mut q = vec![Complex64::ZERO; j * j];
    for a in 0..j {
        for b in a..j {
            let mut acc = Complex64::ZERO;
            for row in 0..k {
                acc += p.g[row * j + a].conj() * p.g[row * j + b];
            }
            if a == b {
                acc += p.rho;
            }
            q[a * j + b] = acc;
        }
    }

    // Upper Cholesky: U[i][c] with i <= c.
    let mut u = vec![Complex64::ZERO; j * j];
    for col in 0..j {
        let mut d = q[col * j + col].re;
        for i in 0..col {
            d -= u[i * j + col].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(DetectorError::Factorization);
        }
        let diag = d.sqrt();
        u[col * j + col] = Complex64::new(diag, 0.0);
        for c in col + 1..j {
            let mut acc = q[col * j + c];
            for i in 0..col {
                acc -= u[i * j + col].conj() * u[i * j + c];
            }
            u[col * j + c] = acc / diag;
        }
    }

    // b = Gᴴ y, then forward substitution on Uᴴ (lower triangular).
    let mut r = vec![Complex64::ZERO; j];
    for a in 0..j {
        let mut acc = Complex64::ZERO;
        for row in 0..k {
            acc += p.g[row * j + a].conj() * p.y[row];
        }
        r[a] = acc;
    }
    for i in 0..j {
        let mut acc = r[i];
        for t in 0..i {
            acc -= u[t * j + i].conj() * r[t];
        }
        r[i] = acc / u[i * j + i].re;
    }

    Ok(TriangularSystem { u, r, j })
}

/// Detection output with search statistics.
#[derive(Debug, Clone)]
pub struct Detection {
    /// Symbol label per user.
    pub labels: Vec<usize>,
    /// Search-tree nodes expanded.
    pub nodes: u64,
}

/// Exact sphere search: depth-first over users `J..1` with per-level
/// Schnorr–Euchner candidate ordering, radius from +∞ (the first leaf is the
/// Babai-like point), shrunk at every improving leaf. Ties break toward the
/// lexicographically smallest label vector, users first.
pub fn gsd_detect_with_stats(p: &DetectionProblem<'_>) -> Result<Detection, DetectorError> {
    let ts = regularize_and_factor(p)?;
    Ok(sphere_search(&ts, p.alphabet))
}

/// [`gsd_detect_with_stats`] without the statistics.
pub fn gsd_detect(p: &DetectionProblem<'_>) -> Result<Vec<usize>, DetectorError> {
    gsd_detect_with_stats(p).map(|d| d.labels)
}

fn sphere_search(ts: &TriangularSystem, alphabet: &Alphabet) -> Detection {
    let j = ts.j;
    let m = alphabet.m();
    let mut best_cost = f64::INFINITY;
    let mut best: Vec<usize> = vec![0; j];
    let mut have_best = false;
    let mut choice: Vec<usize> = vec![0; j];
    let mut nodes: u64 = 0;

    // Per-level candidate scratch: (increment, label).
    let mut cand: Vec<Vec<(f64, usize)>> = vec![vec![(0.0, 0); m]; j];

    fn descend(
        ts: &TriangularSystem,
        alphabet: &Alphabet,
        level: usize,
        acc: f64,
        choice: &mut Vec<usize>,
        cand: &mut Vec<Vec<(f64, usize)>>,
        best_cost: &mut f64,
        best: &mut Vec<usize>,
        have_best: &mut bool,
        nodes: &mut u64,
    ) {
        *nodes += 1;
        let j = ts.j;
        // Residual at this level given the symbols fixed above it.
        let mut b = ts.r[level];
        for c in level + 1..j {
            b -= ts.u[level * j + c] * alphabet.symbol(choice[c]);
        }
        let diag = ts.u[level * j + level];

        let slots = &mut cand[level];
        for (label, slot) in slots.iter_mut().enumerate() {
            *slot = ((b - diag * alphabet.symbol(label)).norm_sqr(), label);
        }
        slots.sort_unstable_by(|a, b| {
            a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1))
        });
        let slots = cand[level].clone();

        for &(inc, label) in &slots {
            let partial = acc + inc;
            if partial > *best_cost {
                break; // Schnorr-Euchner order: the rest only grow.
            }
            choice[level] = label;
            if level == 0 {
                if partial < *best_cost
                    || (partial == *best_cost && (!*have_best || choice[..] < best[..]))
                {
                    *best_cost = partial;
                    best.copy_from_slice(choice);
                    *have_best = true;
                }
            } else {
                descend(
                    ts, alphabet, level - 1, partial, choice, cand, best_cost, best,
                    have_best, nodes,
                );
            }
        }
    }

    descend(
        ts,
        alphabet,
        j - 1,
        0.0,
        &mut choice,
        &mut cand,
        &mut best_cost,
        &mut best,
        &mut have_best,
        &mut nodes,
    );
    debug_assert!(have_best);
    Detection { labels: best, nodes }
}

/// Brute-force minimizer of the regularized cost over all `M^J` label
/// vectors, in lexicographic order (so ties keep the lexicographically
/// smallest vector — the same rule as the sphere search).
pub fn ml_exhaustive(p: &DetectionProblem<'_>) -> Result<Vec<usize>, DetectorError> {
    let m = p.alphabet.m() as u128;
    let candidates = m.pow(p.j as u32);
    if candidates > ML_EXHAUSTIVE_GUARD {
        return Err(DetectorError::TooLarge { candidates, guard: ML_EXHAUSTIVE_GUARD });
    }

    let mut labels = vec![0usize; p.j];
    let mut best = labels.clone();
    let mut best_cost = f64::INFINITY;
    loop {
        let cost = p.regularized_cost(&labels);
        if cost < best_cost {
            best_cost = cost;
            best.copy_from_slice(&labels);
        }
        // Odometer: last user fastest, so iteration is lexicographic.
        let mut i = p.j;
        loop {
            if i == 0 {
                return Ok(best);
            }
            i -= 1;
            labels[i] += 1;
            if labels[i] < p.alphabet.m() {
                break;
            }
            labels[i] = 0;
        }
    }
}

/// Effective matrix `G = diag(h) · D` for a fading realization.
pub fn effective_matrix(
    d: &[Complex64],
    k: usize,
    j: usize,
    h: &[Complex64],
) -> Vec<Complex64> {
    assert_eq!(d.len(), k * j);
    assert_eq!(h.len(), k);
    let mut g = Vec::with_capacity(k * j);
    for row in 0..k {
        for col in 0..j {
            g.push(h[row] * d[row * j + col]);
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_awgn, sample_fading, ChannelModel, RngStream};
    use crate::codebook::paper_codebook;
    use crate::metrics::Alphabet;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn factor_identity_small_rho() {
        let a = Alphabet::qam4();
        let g = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        let y = vec![c(0.3, -0.2), c(-0.9, 0.4)];
        let p = DetectionProblem::new(&y, &g, 2, 2, &a, 1e-12);
        let ts = regularize_and_factor(&p).unwrap();
        for i in 0..2 {
            assert!((ts.u[i * 2 + i] - c(1.0, 0.0)).norm() < 1e-9);
            assert!((ts.r[i] - y[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn factor_reproduces_gram() {
        let a = Alphabet::qam4();
        let mut rng = RngStream::new(3, 0).rng();
        let (k, j) = (4, 6);
        let g: Vec<Complex64> = (0..k * j)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let y: Vec<Complex64> = (0..k)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let rho = 0.05;
        let p = DetectionProblem::new(&y, &g, k, j, &a, rho);
        let ts = regularize_and_factor(&p).unwrap();

        // U^H U == G^H G + rho I within 1e-10 entrywise.
        for aa in 0..j {
            for bb in 0..j {
                let mut uhu = Complex64::ZERO;
                for i in 0..j {
                    uhu += ts.u[i * j + aa].conj() * ts.u[i * j + bb];
                }
                let mut q = Complex64::ZERO;
                for row in 0..k {
                    q += g[row * j + aa].conj() * g[row * j + bb];
                }
                if aa == bb {
                    q += rho;
                }
                assert!((uhu - q).norm() < 1e-10, "entry ({aa},{bb})");
            }
        }
        // Diagonal real positive.
        for i in 0..j {
            assert!(ts.u[i * j + i].im == 0.0 && ts.u[i * j + i].re > 0.0);
        }
    }

    #[test]
    fn cost_identity_constant_offset() {
        let a = Alphabet::qam4();
        let mut rng = RngStream::new(5, 0).rng();
        let (k, j) = (3, 5);
        let g: Vec<Complex64> = (0..k * j)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let y: Vec<Complex64> = (0..k)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let p = DetectionProblem::new(&y, &g, k, j, &a, 0.3);
        let ts = regularize_and_factor(&p).unwrap();

        let mut offsets = Vec::new();
        for _ in 0..100 {
            let labels: Vec<usize> = (0..j).map(|_| rng.random_range(0..4)).collect();
            offsets.push(ts.cost(&a, &labels) - p.regularized_cost(&labels));
        }
        let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
        let var = offsets.iter().map(|o| (o - mean).powi(2)).sum::<f64>()
            / offsets.len() as f64;
        assert!(var < 1e-18, "offset variance {var}");
    }

    #[test]
    fn noiseless_recovery() {
        let a = Alphabet::qam4();
        let cb = paper_codebook("4x6").unwrap();
        let mut rng = RngStream::new(11, 0).rng();
        for _ in 0..50 {
            let labels: Vec<usize> = (0..6).map(|_| rng.random_range(0..4)).collect();
            let alpha: Vec<Complex64> = labels.iter().map(|&l| a.symbol(l)).collect();
            let h = sample_fading(&ChannelModel::nakagami(4.0), 4, &mut rng);
            let g = effective_matrix(cb.entries(), 4, 6, &h);
            let x = cb.mix(&alpha);
            let y = crate::channel::apply_channel(&x, &h);
            for rho in [1e-6, 0.1, 1.0] {
                let p = DetectionProblem::new(&y, &g, 4, 6, &a, rho);
                assert_eq!(gsd_detect(&p).unwrap(), labels);
            }
        }
    }

    #[test]
    fn single_user_is_nearest_symbol() {
        let a = Alphabet::qam4();
        let g = vec![c(1.0, 0.0)];
        let mut rng = RngStream::new(13, 0).rng();
        for _ in 0..200 {
            let y = vec![c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))];
            let p = DetectionProblem::new(&y, &g, 1, 1, &a, 1e-3);
            let got = gsd_detect(&p).unwrap()[0];
            let nearest = (0..4)
                .min_by(|&x, &z| {
                    (y[0] - a.symbol(x))
                        .norm_sqr()
                        .partial_cmp(&(y[0] - a.symbol(z)).norm_sqr())
                        .unwrap()
                })
                .unwrap();
            assert_eq!(got, nearest);
        }
    }

    fn random_instance(
        rng: &mut impl Rng,
        ebn0_db: f64,
    ) -> (Vec<Complex64>, Vec<Complex64>, Vec<usize>) {
        let a = Alphabet::qam4();
        let cb = paper_codebook("4x6").unwrap();
        let n0 = 0.5 * 10f64.powf(-ebn0_db / 10.0);
        let labels: Vec<usize> = (0..6).map(|_| rng.random_range(0..4)).collect();
        let alpha: Vec<Complex64> = labels.iter().map(|&l| a.symbol(l)).collect();
        let h = sample_fading(&ChannelModel::nakagami(4.0), 4, rng);
        let g = effective_matrix(cb.entries(), 4, 6, &h);
        let x = cb.mix(&alpha);
        let noise = sample_awgn(n0, 4, rng);
        let y: Vec<Complex64> = crate::channel::apply_channel(&x, &h)
            .iter()
            .zip(&noise)
            .map(|(s, n)| s + n)
            .collect();
        (y, g, labels)
    }

    #[test]
    fn matches_exhaustive_oracle() {
        let a = Alphabet::qam4();
        let mut rng = RngStream::new(17, 0).rng();
        for i in 0..300 {
            let (y, g, _) = random_instance(&mut rng, 8.0);
            let p = DetectionProblem::new(&y, &g, 4, 6, &a, 0.1);
            let fast = gsd_detect(&p).unwrap();
            let slow = ml_exhaustive(&p).unwrap();
            assert_eq!(fast, slow, "instance {i}");
        }
    }

    #[test]
    fn rho_invariance_for_constant_modulus() {
        let a = Alphabet::qam4();
        let mut rng = RngStream::new(19, 0).rng();
        for _ in 0..100 {
            let (y, g, _) = random_instance(&mut rng, 8.0);
            let base = {
                let p = DetectionProblem::new(&y, &g, 4, 6, &a, 1e-6);
                gsd_detect(&p).unwrap()
            };
            for rho in [0.1, 1.0] {
                let p = DetectionProblem::new(&y, &g, 4, 6, &a, rho);
                assert_eq!(gsd_detect(&p).unwrap(), base);
            }
        }
    }

    #[test]
    fn node_count_well_below_exhaustive() {
        let a = Alphabet::qam4();
        let mut rng = RngStream::new(23, 0).rng();
        let trials = 200;
        let mut total_nodes = 0u64;
        for _ in 0..trials {
            let (y, g, _) = random_instance(&mut rng, 12.0);
            let p = DetectionProblem::new(&y, &g, 4, 6, &a, 0.1);
            total_nodes += gsd_detect_with_stats(&p).unwrap().nodes;
        }
        let avg = total_nodes as f64 / trials as f64;
        assert!(avg < 4096.0 / 10.0, "average nodes {avg}");
    }

    #[test]
    fn exhaustive_guard() {
        let a = Alphabet::qam16();
        let g = vec![c(1.0, 0.0); 12 * 12];
        let y = vec![c(0.0, 0.0); 12];
        let p = DetectionProblem::new(&y, &g, 12, 12, &a, 0.1);
        assert!(matches!(
            ml_exhaustive(&p),
            Err(DetectorError::TooLarge { .. })
        ));
    }
}
