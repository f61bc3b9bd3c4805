//! Missing-feature masks and the three generating patterns.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SparseMatrix};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPattern {
    /// Entries removed uniformly at random.
    Uniform,
    /// 90% of a subset of "sensitive" columns and 10% of the rest removed.
    Biased,
    /// Whole rows (nodes) removed.
    Structural,
}

impl MissingPattern {
    pub const ALL: [MissingPattern; 3] = [Self::Uniform, Self::Biased, Self::Structural];

    pub fn name(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Biased => "biased",
            Self::Structural => "structural",
        }
    }
}

impl fmt::Display for MissingPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MissingPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "biased" => Ok(Self::Biased),
            "structural" => Ok(Self::Structural),
            other => Err(Error::InvalidArgument(format!("unknown missing pattern `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskSpec {
    pub pattern: MissingPattern,
    pub mr: f64,
    pub seed: u64,
}

/// Boolean N×D matrix, `true` = missing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl MissingMask {
    pub fn none(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn all(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    pub fn from_bits(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::BadLength {
                rows,
                cols,
                len: bits.len(),
            });
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn from_positions(rows: usize, cols: usize, positions: &[(usize, usize)]) -> Result<Self> {
        let mut m = Self::none(rows, cols);
        for &(i, j) in positions {
            if i >= rows || j >= cols {
                return Err(Error::InvalidArgument(format!(
                    "mask position ({i}, {j}) outside {rows}x{cols}"
                )));
            }
            m.bits[i * cols + j] = true;
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn is_missing(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn missing_rate(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.bits.len() as f64
        }
    }

    /// Missing positions in row-major order.
    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = self.cols;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(p, _)| (p / cols, p % cols))
    }

    pub fn row_fully_missing(&self, i: usize) -> bool {
        self.bits[i * self.cols..(i + 1) * self.cols].iter().all(|&b| b)
    }

    /// The mask as a 0/1 CSR matrix.
    pub fn to_sparse(&self) -> SparseMatrix {
        let mut offsets = Vec::with_capacity(self.rows + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for i in 0..self.rows {
            for j in 0..self.cols {
                if self.is_missing(i, j) {
                    indices.push(j);
                }
            }
            offsets.push(indices.len());
        }
        let values = vec![1.0; indices.len()];
        SparseMatrix::from_csr(self.rows, self.cols, offsets, indices, values)
            .expect("mask rows are generated in column order")
    }

    /// Text form: header `#mask N D pattern mr seed`, then one `i<TAB>j` per missing entry.
    pub fn write_to<W: Write>(&self, mut w: W, spec: &MaskSpec) -> Result<()> {
        writeln!(
            w,
            "#mask {} {} {} {} {}",
            self.rows, self.cols, spec.pattern, spec.mr, spec.seed
        )?;
        for (i, j) in self.positions() {
            writeln!(w, "{i}\t{j}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R, file: &Path) -> Result<(Self, MaskSpec)> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            file: file.to_path_buf(),
            line,
            msg,
        };
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty mask file".into()))??;
        let fields: Vec<&str> = header.split(' ').collect();
        if fields.len() != 6 || fields[0] != "#mask" {
            return Err(parse_err(1, format!("bad header `{header}`")));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| parse_err(1, e.to_string()));
        let rows = num(fields[1])?;
        let cols = num(fields[2])?;
        let pattern: MissingPattern = fields[3].parse().map_err(|e: Error| parse_err(1, e.to_string()))?;
        let mr: f64 = fields[4].parse().map_err(|_| parse_err(1, format!("bad mr `{}`", fields[4])))?;
        let seed: u64 = fields[5]
            .parse()
            .map_err(|_| parse_err(1, format!("bad seed `{}`", fields[5])))?;
        let mut mask = Self::none(rows, cols);
        for (k, line) in lines.enumerate() {
            let line = line?;
            let lineno = k + 2;
            let (a, b) = line
                .split_once('\t')
                .ok_or_else(|| parse_err(lineno, format!("expected `i<TAB>j`, got `{line}`")))?;
            let i: usize = a.parse().map_err(|_| parse_err(lineno, format!("bad row `{a}`")))?;
            let j: usize = b.parse().map_err(|_| parse_err(lineno, format!("bad column `{b}`")))?;
            if i >= rows || j >= cols {
                return Err(parse_err(lineno, format!("({i}, {j}) outside {rows}x{cols}")));
            }
            mask.bits[i * cols + j] = true;
        }
        Ok((mask, MaskSpec { pattern, mr, seed }))
    }

    pub fn save(&self, path: &Path, spec: &MaskSpec) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(f, spec)
    }

    pub fn load(path: &Path) -> Result<(Self, MaskSpec)> {
        let f = std::fs::File::open(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        Self::read_from(std::io::BufReader::new(f), path)
    }
}

/// Fraction of columns designated sensitive in the biased pattern,
/// solving `0.9 p + 0.1 (1 - p) = mr`.
pub fn sensitive_fraction(mr: f64) -> f64 {
    (mr - 0.1) / 0.8
}

fn exact_count(frac: f64, total: usize) -> usize {
    // f64::round rounds half away from zero.
    ((frac * total as f64).round() as usize).min(total)
}

pub fn generate_mask(spec: &MaskSpec, n: usize, d: usize) -> Result<MissingMask> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("mask needs N, D >= 1".into()));
    }
    let mr = spec.mr;
    let mut rng = rng_from_seed(spec.seed);
    let mut mask = MissingMask::none(n, d);
    match spec.pattern {
        MissingPattern::Uniform => {
            if !(0.0..=1.0).contains(&mr) {
                return Err(Error::UnsatisfiableMissingRate {
                    pattern: "uniform",
                    mr,
                    allowed: "[0, 1]",
                });
            }
            for p in sample(&mut rng, n * d, exact_count(mr, n * d)) {
                mask.bits[p] = true;
            }
        }
        MissingPattern::Structural => {
            if !(0.0..=1.0).contains(&mr) {
                return Err(Error::UnsatisfiableMissingRate {
                    pattern: "structural",
                    mr,
                    allowed: "[0, 1]",
                });
            }
            for i in sample(&mut rng, n, exact_count(mr, n)) {
                mask.bits[i * d..(i + 1) * d].fill(true);
            }
        }
        MissingPattern::Biased => {
            if !(0.1..=0.9).contains(&mr) {
                return Err(Error::UnsatisfiableMissingRate {
                    pattern: "biased",
                    mr,
                    allowed: "[0.1, 0.9]",
                });
            }
            // Stochastic rounding keeps the expected masked count at mr·N·D
            // even when p·D falls on a half.
            let target = sensitive_fraction(mr) * d as f64;
            let mut n_sensitive = target.floor() as usize;
            if rng.random::<f64>() < target - target.floor() {
                n_sensitive += 1;
            }
            let n_sensitive = n_sensitive.min(d);
            let mut is_sensitive = vec![false; d];
            for j in sample(&mut rng, d, n_sensitive) {
                is_sensitive[j] = true;
            }
            for (flag, rate) in [(true, 0.9), (false, 0.1)] {
                let group: Vec<usize> = (0..d).filter(|&j| is_sensitive[j] == flag).collect();
                let cells = group.len() * n;
                for p in sample(&mut rng, cells, exact_count(rate, cells)) {
                    let (i, g) = (p / group.len(), p % group.len());
                    mask.bits[i * d + group[g]] = true;
                }
            }
        }
    }
    Ok(mask)
}

/// Features with a missing mask; missing entries are stored as 0.0.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedFeatures {
    x: DenseMatrix,
    mask: MissingMask,
}

impl MaskedFeatures {
    pub fn complete(x: DenseMatrix) -> Self {
        let mask = MissingMask::none(x.rows(), x.cols());
        Self { x, mask }
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn mask(&self) -> &MissingMask {
        &self.mask
    }

    pub fn rows(&self) -> usize {
        self.x.rows()
    }

    pub fn cols(&self) -> usize {
        self.x.cols()
    }

    pub fn missing_rate(&self) -> f64 {
        self.mask.missing_rate()
    }
}

pub fn apply_mask(x_full: &DenseMatrix, mask: &MissingMask) -> Result<MaskedFeatures> {
    if x_full.shape() != mask.shape() {
        return Err(Error::dims("apply_mask", x_full.shape(), mask.shape()));
    }
    let mut x = x_full.clone();
    for (v, &m) in x.data_mut().iter_mut().zip(mask.bits()) {
        if m {
            *v = 0.0;
        }
    }
    Ok(MaskedFeatures {
        x,
        mask: mask.clone(),
    })
}
