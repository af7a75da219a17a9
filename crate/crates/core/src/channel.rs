//! Channel realisations for the two-device link.
//!
//! The direct link `H` (N x M, P1 -> P2) is i.i.d. unit-power Rayleigh; the
//! reverse link P2 -> P1 is its transpose. The self-interference loops at
//! each device (`h1` at P1, M x M; `h2` at P2, N x N) are Rician with a
//! unit line-of-sight component and a configurable attenuation. A
//! [`SubsystemConfig`] slices these into the blocks the metrics need.

use std::fmt::Write as _;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::allocation::SubsystemConfig;
use crate::numerics::{scaled_identity, CMatrix};
use crate::units::db_to_linear;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("each device needs at least two antennas (got M={m}, N={n})")]
    TooFewAntennas { m: usize, n: usize },
    #[error("invalid channel parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed antenna configuration: {0}")]
    MalformedConfig(String),
    #[error("channel file line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    /// Antennas at P1 (energy transmitter / information receiver).
    pub m: usize,
    /// Antennas at P2 (energy harvester / information transmitter).
    pub n: usize,
    /// Rician K-factor of the self-interference loops, dB. `+inf` gives a
    /// purely deterministic line-of-sight loop.
    pub rician_k_db: f64,
    /// Power attenuation applied to both self-interference loops, dB.
    pub si_attenuation_db: f64,
    pub noise_psd_dbm_hz: f64,
    pub bandwidth_hz: f64,
}

impl ChannelParams {
    pub const DEFAULT_RICIAN_K_DB: f64 = 10.0;
    pub const DEFAULT_SI_ATTENUATION_DB: f64 = 0.0;
    pub const DEFAULT_NOISE_PSD_DBM_HZ: f64 = -169.0;
    pub const DEFAULT_BANDWIDTH_HZ: f64 = 1e6;

    pub fn new(m: usize, n: usize) -> Result<Self, ChannelError> {
        let params = Self {
            m,
            n,
            rician_k_db: Self::DEFAULT_RICIAN_K_DB,
            si_attenuation_db: Self::DEFAULT_SI_ATTENUATION_DB,
            noise_psd_dbm_hz: Self::DEFAULT_NOISE_PSD_DBM_HZ,
            bandwidth_hz: Self::DEFAULT_BANDWIDTH_HZ,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.m < 2 || self.n < 2 {
            return Err(ChannelError::TooFewAntennas { m: self.m, n: self.n });
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(ChannelError::InvalidParameter(format!("bandwidth_hz must be > 0, got {}", self.bandwidth_hz)));
        }
        if !self.noise_psd_dbm_hz.is_finite() {
            return Err(ChannelError::InvalidParameter("noise_psd_dbm_hz must be finite".into()));
        }
        if !self.si_attenuation_db.is_finite() {
            return Err(ChannelError::InvalidParameter("si_attenuation_db must be finite".into()));
        }
        if self.rician_k_db.is_nan() || self.rician_k_db == f64::NEG_INFINITY {
            return Err(ChannelError::InvalidParameter(format!("rician_k_db must be a number, got {}", self.rician_k_db)));
        }
        Ok(())
    }

    /// Noise power per receive antenna, watts.
    pub fn noise_power(&self) -> f64 {
        noise_power(self.noise_psd_dbm_hz, self.bandwidth_hz)
    }
}

/// `10^((psd - 30) / 10) * bandwidth`, watts.
pub fn noise_power(psd_dbm_hz: f64, bandwidth_hz: f64) -> f64 {
    10f64.powf((psd_dbm_hz - 30.0) / 10.0) * bandwidth_hz
}

/// `sigma^2 * I_dim` for the given noise density and bandwidth.
pub fn noise_covariance(psd_dbm_hz: f64, bandwidth_hz: f64, dim: usize) -> CMatrix {
    assert!(dim >= 1, "noise covariance needs dim >= 1");
    scaled_identity(dim, noise_power(psd_dbm_hz, bandwidth_hz))
}

/// Full CSI for one coherence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Direct link, N x M; entry `(n, m)` couples P1 antenna `m` to P2 antenna `n`.
    pub h: CMatrix,
    /// Self-interference at P1, M x M; entry `(i, j)` couples transmit antenna `j` into receive antenna `i`.
    pub h1: CMatrix,
    /// Self-interference at P2, N x N, same convention.
    pub h2: CMatrix,
    pub seed: u64,
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn rician_weights(k_db: f64) -> (f64, f64) {
    if k_db == f64::INFINITY {
        return (1.0, 0.0);
    }
    let k = db_to_linear(k_db);
    ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
}

/// Draws `H`, then `h1`, then `h2`, each row-major, from a ChaCha8 stream
/// seeded with `seed`. The scatter components are drawn even when the
/// K-factor is infinite so that every parameter set consumes the same draws.
pub fn sample_channel(params: &ChannelParams, seed: u64) -> ChannelRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n) = (params.m, params.n);
    let h = CMatrix::from_fn(n, m, |_, _| complex_gaussian(&mut rng));
    let (los, scatter) = rician_weights(params.rician_k_db);
    let amplitude = db_to_linear(-params.si_attenuation_db).sqrt();
    let mut si = |dim: usize| {
        let mut out = CMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                let nlos = complex_gaussian(&mut rng);
                out[(i, j)] = (Complex64::new(los, 0.0) + nlos * scatter) * amplitude;
            }
        }
        out
    };
    let h1 = si(m);
    let h2 = si(n);
    ChannelRealization { h, h1, h2, seed }
}

/// Channel blocks seen by one antenna partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemChannels {
    /// Information link P2 -> P1, M_I x N_I (transpose of the direct-link block).
    pub h_i: CMatrix,
    /// Energy link P1 -> P2, N_h x M_h.
    pub h_h: CMatrix,
    /// P1 self-interference restricted to (IT receive, EH transmit), M_I x M_h.
    pub h1: CMatrix,
    /// P2 self-interference restricted to (EH receive, IT transmit), N_h x N_I.
    pub h2: CMatrix,
    /// Noise power per antenna, watts.
    pub noise: f64,
}

impl SubsystemChannels {
    pub fn m_i(&self) -> usize {
        self.h_i.nrows()
    }
    pub fn n_i(&self) -> usize {
        self.h_i.ncols()
    }
    pub fn n_h(&self) -> usize {
        self.h_h.nrows()
    }
    pub fn m_h(&self) -> usize {
        self.h_h.ncols()
    }
    /// `Sigma_1 = sigma^2 I_{M_I}`.
    pub fn sigma1(&self) -> CMatrix {
        scaled_identity(self.m_i(), self.noise)
    }
    /// `Sigma_2 = sigma^2 I_{N_h}`.
    pub fn sigma2(&self) -> CMatrix {
        scaled_identity(self.n_h(), self.noise)
    }
}

fn block(source: &CMatrix, rows: &[usize], cols: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), cols.len(), |i, j| source[(rows[i], cols[j])])
}

impl ChannelRealization {
    pub fn m(&self) -> usize {
        self.h.ncols()
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    /// `H[rows, cols]` for P2 antenna indices `rows` and P1 antenna indices `cols`.
    pub fn direct_block(&self, p2_rows: &[usize], p1_cols: &[usize]) -> CMatrix {
        block(&self.h, p2_rows, p1_cols)
    }

    /// Plain-text export; see [`ChannelRealization::from_text`] for the layout.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "fdeh-channel v1");
        let _ = writeln!(out, "m {} n {} seed {}", self.m(), self.n(), self.seed);
        for (name, matrix) in [("H", &self.h), ("H1", &self.h1), ("H2", &self.h2)] {
            let _ = writeln!(out, "{name} {} {}", matrix.nrows(), matrix.ncols());
            for i in 0..matrix.nrows() {
                let row: Vec<String> = (0..matrix.ncols()).map(|j| format_complex(matrix[(i, j)])).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        out
    }

    /// Parses the format written by [`ChannelRealization::to_text`]:
    ///
    /// ```text
    /// fdeh-channel v1
    /// m <M> n <N> seed <seed>
    /// H <N> <M>
    /// <one line per row, entries "a+bi" separated by spaces>
    /// H1 <M> <M>
    /// ...
    /// H2 <N> <N>
    /// ...
    /// ```
    ///
    /// Floats use shortest round-trip formatting, so export/import is bit-exact.
    pub fn from_text(text: &str) -> Result<Self, ChannelError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let err = |line: usize, message: &str| ChannelError::Format { line: line + 1, message: message.to_string() };
        let (i, magic) = lines.next().ok_or_else(|| err(0, "empty input"))?;
        if magic.trim() != "fdeh-channel v1" {
            return Err(err(i, "missing 'fdeh-channel v1' header"));
        }
        let (i, dims) = lines.next().ok_or_else(|| err(i, "missing dimension line"))?;
        let tokens: Vec<&str> = dims.split_whitespace().collect();
        if tokens.len() != 6 || tokens[0] != "m" || tokens[2] != "n" || tokens[4] != "seed" {
            return Err(err(i, "expected 'm <M> n <N> seed <seed>'"));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| err(i, &e.to_string()));
        let m = parse_usize(tokens[1])?;
        let n = parse_usize(tokens[3])?;
        let seed = tokens[5].parse::<u64>().map_err(|e| err(i, &e.to_string()))?;
        let mut read_matrix = |name: &str, rows: usize, cols: usize| -> Result<CMatrix, ChannelError> {
            let (i, header) = lines.next().ok_or_else(|| err(0, &format!("missing {name} block")))?;
            let expected = format!("{name} {rows} {cols}");
            if header.split_whitespace().collect::<Vec<_>>().join(" ") != expected {
                return Err(err(i, &format!("expected '{expected}'")));
            }
            let mut matrix = CMatrix::zeros(rows, cols);
            for r in 0..rows {
                let (i, line) = lines.next().ok_or_else(|| err(0, &format!("{name} ends early")))?;
                let entries: Vec<&str> = line.split_whitespace().collect();
                if entries.len() != cols {
                    return Err(err(i, &format!("expected {cols} entries, found {}", entries.len())));
                }
                for (col, entry) in entries.iter().enumerate() {
                    matrix[(r, col)] = parse_complex(entry).map_err(|m| err(i, &m))?;
                }
            }
            Ok(matrix)
        };
        let h = read_matrix("H", n, m)?;
        let h1 = read_matrix("H1", m, m)?;
        let h2 = read_matrix("H2", n, n)?;
        Ok(Self { h, h1, h2, seed })
    }
}

impl FromStr for ChannelRealization {
    type Err = ChannelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_text(s)
    }
}

/// `a+bi` / `a-bi` with shortest round-trip exponent formatting.
pub fn format_complex(z: Complex64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{:e}{}{:e}i", z.re, sign, z.im.abs())
}

pub fn parse_complex(s: &str) -> Result<Complex64, String> {
    let body = s.strip_suffix('i').ok_or_else(|| format!("'{s}' does not end in 'i'"))?;
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'))
        .ok_or_else(|| format!("'{s}' has no imaginary part"))?;
    let re = body[..split].parse::<f64>().map_err(|e| format!("'{s}': {e}"))?;
    let im = body[split..].parse::<f64>().map_err(|e| format!("'{s}': {e}"))?;
    Ok(Complex64::new(re, im))
}

/// Extracts the channel blocks for `config`, which must be a disjoint,
/// exhaustive split of both antenna arrays.
pub fn partition(chan: &ChannelRealization, config: &SubsystemConfig, noise: f64) -> Result<SubsystemChannels, ChannelError> {
    config.validate(chan.m(), chan.n()).map_err(ChannelError::MalformedConfig)?;
    if !(noise > 0.0 && noise.is_finite()) {
        return Err(ChannelError::InvalidParameter(format!("noise power must be > 0, got {noise}")));
    }
    let h_i = chan.direct_block(&config.p2_it, &config.p1_it).transpose();
    let h_h = chan.direct_block(&config.p2_eh, &config.p1_eh);
    let h1 = block(&chan.h1, &config.p1_it, &config.p1_eh);
    let h2 = block(&chan.h2, &config.p2_eh, &config.p2_it);
    Ok(SubsystemChannels { h_i, h_h, h1, h2, noise })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(m: usize, n: usize) -> ChannelParams {
        ChannelParams::new(m, n).unwrap()
    }

    #[test]
    fn rejects_small_arrays_and_bad_bandwidth() {
        assert!(matches!(ChannelParams::new(1, 4), Err(ChannelError::TooFewAntennas { .. })));
        let mut p = params(2, 2);
        p.bandwidth_hz = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let p = params(4, 3);
        assert_eq!(sample_channel(&p, 99), sample_channel(&p, 99));
        assert_ne!(sample_channel(&p, 99).h, sample_channel(&p, 100).h);
    }

    #[test]
    fn dimensions_follow_params() {
        let chan = sample_channel(&params(5, 3), 1);
        assert_eq!(chan.h.shape(), (3, 5));
        assert_eq!(chan.h1.shape(), (5, 5));
        assert_eq!(chan.h2.shape(), (3, 3));
    }

    #[test]
    fn infinite_k_factor_gives_line_of_sight() {
        let mut p = params(3, 2);
        p.rician_k_db = f64::INFINITY;
        p.si_attenuation_db = 20.0;
        let chan = sample_channel(&p, 5);
        for z in chan.h1.iter().chain(chan.h2.iter()) {
            assert!((z - Complex64::new(0.1, 0.0)).norm() < 1e-15);
        }
        // Direct link is untouched by SI settings.
        assert_eq!(chan.h, sample_channel(&params(3, 2), 5).h);
    }

    #[test]
    fn noise_power_reference_values() {
        let sigma2 = noise_power(-169.0, 1e6);
        assert!((sigma2 / 1.2589254117941673e-14 - 1.0).abs() < 1e-12);
        let cov = noise_covariance(-169.0, 1e6, 2);
        assert_eq!(cov[(0, 1)], Complex64::new(0.0, 0.0));
        assert!((cov[(1, 1)].re - sigma2).abs() < 1e-28);
        assert_eq!(noise_covariance(-169.0, 1e6, 1).shape(), (1, 1));
        assert!((noise_power(-169.0, 2e6) / sigma2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_partition_is_scalar_slicing() {
        let chan = sample_channel(&params(2, 2), 3);
        let config = SubsystemConfig::from_sets(0, vec![0], vec![1], vec![0], vec![1]);
        let sub = partition(&chan, &config, 1e-3).unwrap();
        assert_eq!(sub.h_h[(0, 0)], chan.h[(0, 0)]);
        assert_eq!(sub.h_i[(0, 0)], chan.h[(1, 1)]);
        assert_eq!(sub.h1[(0, 0)], chan.h1[(1, 0)]);
        assert_eq!(sub.h2[(0, 0)], chan.h2[(0, 1)]);
    }

    #[test]
    fn worked_example_dimensions() {
        // M = 8, N = 4: EH {m3, m4, m7} x {n1}, IT {m1, m2, m5, m6, m8} x {n2, n3, n4}.
        let chan = sample_channel(&params(8, 4), 8);
        let config = SubsystemConfig::from_sets(0, vec![2, 3, 6], vec![0, 1, 4, 5, 7], vec![0], vec![1, 2, 3]);
        let sub = partition(&chan, &config, 1e-3).unwrap();
        assert_eq!(sub.h_h.shape(), (1, 3));
        assert_eq!(sub.h_i.shape(), (5, 3));
        assert_eq!(sub.h1.shape(), (5, 3));
        assert_eq!(sub.h2.shape(), (1, 3));
    }

    #[test]
    fn swapping_roles_swaps_blocks() {
        let chan = sample_channel(&params(4, 3), 13);
        let a = SubsystemConfig::from_sets(0, vec![0, 2], vec![1, 3], vec![1], vec![0, 2]);
        let b = SubsystemConfig::from_sets(0, vec![1, 3], vec![0, 2], vec![0, 2], vec![1]);
        let sa = partition(&chan, &a, 1.0).unwrap();
        let sb = partition(&chan, &b, 1.0).unwrap();
        assert_eq!(sa.h_i.transpose(), sb.h_h);
        assert_eq!(sb.h_i.transpose(), sa.h_h);
    }

    #[test]
    fn quadrants_reassemble_direct_link() {
        let chan = sample_channel(&params(5, 4), 21);
        let cfg = SubsystemConfig::from_sets(0, vec![1, 4], vec![0, 2, 3], vec![3], vec![0, 1, 2]);
        let mut seen = vec![vec![0u32; 5]; 4];
        for rows in [&cfg.p2_eh, &cfg.p2_it] {
            for cols in [&cfg.p1_eh, &cfg.p1_it] {
                let b = chan.direct_block(rows, cols);
                for (i, &r) in rows.iter().enumerate() {
                    for (j, &c) in cols.iter().enumerate() {
                        assert_eq!(b[(i, j)], chan.h[(r, c)]);
                        seen[r][c] += 1;
                    }
                }
            }
        }
        assert!(seen.iter().flatten().all(|&k| k == 1));
    }

    #[test]
    fn malformed_config_is_rejected() {
        let chan = sample_channel(&params(3, 3), 1);
        let overlapping = SubsystemConfig::from_sets(0, vec![0, 1], vec![1, 2], vec![0], vec![1, 2]);
        assert!(matches!(partition(&chan, &overlapping, 1.0), Err(ChannelError::MalformedConfig(_))));
        let empty = SubsystemConfig::from_sets(0, vec![], vec![0, 1, 2], vec![0], vec![1, 2]);
        assert!(partition(&chan, &empty, 1.0).is_err());
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let chan = sample_channel(&params(3, 2), 77);
        let text = chan.to_text();
        let back: ChannelRealization = text.parse().unwrap();
        assert_eq!(back, chan);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn complex_parsing_handles_exponent_signs() {
        assert_eq!(parse_complex("1e-3-2.5e2i").unwrap(), Complex64::new(1e-3, -250.0));
        assert_eq!(parse_complex("-1e0+0e0i").unwrap(), Complex64::new(-1.0, 0.0));
        assert!(parse_complex("1.0").is_err());
        let text = "fdeh-channel v1\nm 2 n 2 seed 1\nH 2 2\n1e0+0e0i\n";
        assert!(matches!(ChannelRealization::from_text(text), Err(ChannelError::Format { .. })));
    }
}
