//! Monte-Carlo BER estimation of the downlink chain
//! `y = diag(h) D α + n`, with union bounds attached to every operating
//! point.
//!
//! Fading is quasi-static per codeword block and i.i.d. across blocks and
//! resource elements; the detector sees the true `h` (perfect CSI). Blocks
//! are embarrassingly parallel: each block derives its RNG stream from its
//! index, batches have deterministic sizes, and aggregation is integer
//! addition, so error counts are identical for any worker count.

use crate::channel::{apply_channel, sample_awgn, sample_fading, ChannelModel, RngStream};
use crate::codebook::Codebook;
use crate::detector::{effective_matrix, gsd_detect, DetectionProblem};
use crate::io::LoadError;
use crate::metrics::{
    default_policy, union_bounds, union_bounds_gaussian, Alphabet, EnumPolicy, EnumerationError,
    MetricContext,
};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error("codebook: {0}")]
    Codebook(#[from] crate::codebook::CodebookError),
    #[error("codebook file: {0}")]
    Load(#[from] LoadError),
    #[error("bounds: {0}")]
    Bounds(#[from] EnumerationError),
    #[error("detector: {0}")]
    Detector(#[from] crate::detector::DetectorError),
}

/// Where the simulated codebook comes from.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum CodebookRef {
    Paper { paper: String },
    File { path: String },
}

fn default_alphabet() -> String {
    "qam4".to_string()
}

fn default_min_bit_errors() -> u64 {
    200
}

fn default_max_blocks() -> u64 {
    100_000_000
}

/// Full description of a BER sweep.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub codebook: CodebookRef,
    #[serde(default = "default_alphabet")]
    pub alphabet: String,
    pub channel: ChannelModel,
    /// Regularization constant; `null`/absent means "match N0" (the
    /// MMSE-flavored default).
    #[serde(default)]
    pub rho: Option<f64>,
    pub ebn0_db: Vec<f64>,
    #[serde(default = "default_min_bit_errors")]
    pub min_bit_errors: u64,
    #[serde(default = "default_max_blocks")]
    pub max_blocks: u64,
    pub seed: u64,
    /// Enumeration policy for the attached bounds; default is exact for
    /// `J <= 6`, weight-3 truncation beyond.
    #[serde(default)]
    pub bound_policy: Option<String>,
}

/// One operating point's outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BerPoint {
    pub ebn0_db: f64,
    pub blocks: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub bound_tight: f64,
    pub bound_loose: f64,
    /// True when the stopping rule ran out of blocks before reaching the
    /// requested error count.
    pub low_confidence: bool,
}

/// Sweep outcome with the policy actually used for bounds.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub points: Vec<BerPoint>,
    pub bound_policy: String,
    pub wall_s: f64,
}

/// `N0` for a target `Eb/N0`: the block carries `J` unit-energy symbols
/// over `J log2 M` bits, so `Eb = 1/log2(M)`.
pub fn ebn0_to_n0(ebn0_db: f64, alphabet: &Alphabet) -> f64 {
    let eb = 1.0 / alphabet.bits_per_symbol() as f64;
    eb * 10f64.powf(-ebn0_db / 10.0)
}

/// Map a bit block (0/1 per entry, `J log2 M` bits, MSB first per user) to
/// symbol labels.
pub fn map_bits(bits: &[u8], alphabet: &Alphabet) -> Vec<usize> {
    let q = alphabet.bits_per_symbol() as usize;
    assert_eq!(bits.len() % q, 0, "bit count must be a multiple of log2(M)");
    bits.chunks(q)
        .map(|chunk| chunk.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize))
        .collect()
}

/// Inverse of [`map_bits`].
pub fn labels_to_bits(labels: &[usize], alphabet: &Alphabet) -> Vec<u8> {
    let q = alphabet.bits_per_symbol() as usize;
    let mut bits = Vec::with_capacity(labels.len() * q);
    for &l in labels {
        for i in (0..q).rev() {
            bits.push(((l >> i) & 1) as u8);
        }
    }
    bits
}

/// Everything fixed across the blocks of one operating point.
pub struct BlockSim<'a> {
    pub codebook: &'a Codebook,
    pub alphabet: &'a Alphabet,
    pub channel: &'a ChannelModel,
    pub n0: f64,
    pub rho: f64,
}

/// Simulate one block: draw bits, superimpose, fade, add noise, detect with
/// the true channel, count differing bits. Returns `(bit_errors, block_error)`.
pub fn run_block<R: Rng>(sim: &BlockSim<'_>, rng: &mut R) -> (u32, bool) {
    let j = sim.codebook.j_users();
    let k = sim.codebook.k_resources();
    let q = sim.alphabet.bits_per_symbol() as usize;

    let mut labels = Vec::with_capacity(j);
    for _ in 0..j {
        let mut l = 0usize;
        for _ in 0..q {
            l = (l << 1) | rng.random::<bool>() as usize;
        }
        labels.push(l);
    }
    let alpha: Vec<Complex64> = labels.iter().map(|&l| sim.alphabet.symbol(l)).collect();
    let x = sim.codebook.mix(&alpha);
    let h = sample_fading(sim.channel, k, rng);
    let noise = sample_awgn(sim.n0, k, rng);
    let y: Vec<Complex64> = apply_channel(&x, &h)
        .iter()
        .zip(&noise)
        .map(|(s, n)| s + n)
        .collect();

    let g = effective_matrix(sim.codebook.entries(), k, j, &h);
    let p = DetectionProblem::new(&y, &g, k, j, sim.alphabet, sim.rho);
    let decided = gsd_detect(&p).expect("finite inputs factor cleanly");

    let bit_errors: u32 = labels
        .iter()
        .zip(&decided)
        .map(|(&a, &b)| (a ^ b).count_ones())
        .sum();
    (bit_errors, bit_errors > 0)
}

/// Blocks per point are capped at `2^40` so the point index and block index
/// pack into one ChaCha stream id.
const STREAM_BLOCK_BITS: u32 = 40;

fn block_stream(point_idx: usize, block_idx: u64) -> u64 {
    ((point_idx as u64) << STREAM_BLOCK_BITS) | block_idx
}

/// Resolve the codebook reference against the filesystem.
pub fn resolve_codebook(cfg: &SimConfig) -> Result<Codebook, SimError> {
    match &cfg.codebook {
        CodebookRef::Paper { paper } => Ok(crate::codebook::paper_codebook(paper)?),
        CodebookRef::File { path } => Ok(crate::io::load_codebook(std::path::Path::new(path))?),
    }
}

fn resolve_alphabet(name: &str) -> Result<Alphabet, SimError> {
    Alphabet::by_name(name)
        .ok_or_else(|| SimError::Config(format!("unknown alphabet {name:?}")))
}

fn resolve_policy(cfg: &SimConfig, j_users: usize) -> Result<EnumPolicy, SimError> {
    match cfg.bound_policy.as_deref() {
        None => Ok(default_policy(j_users)),
        Some(s) => s
            .parse()
            .map_err(|e: String| SimError::Config(format!("bound_policy: {e}"))),
    }
}

/// Run the whole sweep: for each `Eb/N0`, attach union bounds and stream
/// blocks in doubling batches until `min_bit_errors` or `max_blocks`.
pub fn run_ber_sweep(cfg: &SimConfig) -> Result<SweepResult, SimError> {
    let start = std::time::Instant::now();
    if cfg.ebn0_db.is_empty() {
        return Err(SimError::Config("ebn0_db list is empty".into()));
    }
    if cfg.max_blocks >= 1 << STREAM_BLOCK_BITS {
        return Err(SimError::Config(format!(
            "max_blocks must be below 2^{STREAM_BLOCK_BITS}"
        )));
    }
    if cfg.min_bit_errors < 100 {
        return Err(SimError::Config(
            "min_bit_errors below 100 gives meaningless estimates".into(),
        ));
    }
    let codebook = resolve_codebook(cfg)?;
    let alphabet = resolve_alphabet(&cfg.alphabet)?;
    let policy = resolve_policy(cfg, codebook.j_users())?;
    let bits_per_block = codebook.j_users() as u64 * alphabet.bits_per_symbol() as u64;

    let mut points = Vec::with_capacity(cfg.ebn0_db.len());
    for (pi, &ebn0) in cfg.ebn0_db.iter().enumerate() {
        let n0 = ebn0_to_n0(ebn0, &alphabet);
        let (bound_tight, bound_loose) = match cfg.channel.m() {
            Some(m) => {
                let ctx = MetricContext::new(m, n0);
                union_bounds(&codebook, &alphabet, &ctx, policy, false)?
            }
            None => union_bounds_gaussian(&codebook, &alphabet, n0, policy, false)?,
        };

        let sim = BlockSim {
            codebook: &codebook,
            alphabet: &alphabet,
            channel: &cfg.channel,
            n0,
            rho: cfg.rho.unwrap_or(n0),
        };

        let mut blocks: u64 = 0;
        let mut bit_errors: u64 = 0;
        let mut batch: u64 = 4096;
        while bit_errors < cfg.min_bit_errors && blocks < cfg.max_blocks {
            let n = batch.min(cfg.max_blocks - blocks);
            let errs: u64 = (blocks..blocks + n)
                .into_par_iter()
                .map(|b| {
                    let mut rng = RngStream::new(cfg.seed, block_stream(pi, b)).rng();
                    run_block(&sim, &mut rng).0 as u64
                })
                .sum();
            bit_errors += errs;
            blocks += n;
            batch = (batch * 2).min(1 << 20);
        }

        let ber = bit_errors as f64 / (blocks * bits_per_block) as f64;
        points.push(BerPoint {
            ebn0_db: ebn0,
            blocks,
            bit_errors,
            ber,
            bound_tight,
            bound_loose,
            low_confidence: bit_errors < cfg.min_bit_errors,
        });
    }

    Ok(SweepResult {
        points,
        bound_policy: policy.to_string(),
        wall_s: start.elapsed().as_secs_f64(),
    })
}

/// Render points as the CSV the CLI emits. Floats use shortest
/// round-trip formatting, so a fixed seed reproduces identical bytes.
pub fn points_to_csv(points: &[BerPoint]) -> String {
    let mut out = String::from("ebn0_db,blocks,bit_errors,ber,bound_tight,bound_loose,flag\n");
    for p in points {
        let flag = if p.low_confidence { "low-confidence" } else { "ok" };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.ebn0_db, p.blocks, p.bit_errors, p.ber, p.bound_tight, p.bound_loose, flag
        ));
    }
    out
}
