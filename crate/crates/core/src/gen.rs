//! Random lower-triangular test matrices.
//!
//! Both generators use `ChaCha8Rng::seed_from_u64(seed)` and turn each
//! `next_u64` into a uniform `u = (x >> 11) * 2^-53` in `[0, 1)`.
//!
//! Rows are generated in order. For row `i` the stream holds:
//!
//! 1. the diagonal magnitude `2^(2u - 1)`, then its sign (`u < 0.5` is
//!    negative);
//! 2. one value draw for every candidate whose probability is 1, nearest
//!    first;
//! 3. for the remaining candidates, alternating *gap* and *value* draws,
//!    ending with the gap draw that runs past column 0.
//!
//! Candidates are visited by distance `d = i - j`. A gap draw `u` becomes
//! an exponential variate `E = -ln(1 - u)`, and the next entry is the first
//! distance whose cumulative hazard `sum -ln(1 - p_d)` passes the previous
//! entry's by at least `E`. This gives exactly independent Bernoulli(`p_d`)
//! presence per candidate in `O(nnz log n)` time. Step 3 is skipped for
//! rows with no uncertain candidates and when every `p_d` is zero.
//!
//! Off-diagonal values are uniform on `[-2, 2]`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::CsrLowerTriangular;

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn exponential(rng: &mut ChaCha8Rng) -> f64 {
    -(-uniform(rng)).ln_1p()
}

enum Hazard {
    None,
    /// Same per-candidate hazard at every distance.
    Constant(f64),
    /// `cum[d]` is the hazard summed over distances `certain+1 ..= d`.
    Table(Vec<f64>),
}

impl Hazard {
    /// First distance after `cur` whose cumulative hazard passes `e`.
    fn next(&self, cur: usize, e: f64, max_d: usize) -> Option<usize> {
        let d = match self {
            Hazard::None => return None,
            Hazard::Constant(h) => {
                let steps = (e / h).ceil().max(1.0);
                if steps > (max_d - cur) as f64 {
                    return None;
                }
                cur + steps as usize
            }
            Hazard::Table(cum) => {
                let target = cum[cur] + e;
                let tail = &cum[cur + 1..=max_d];
                cur + 1 + tail.partition_point(|&h| h < target)
            }
        };
        (d <= max_d).then_some(d)
    }
}

struct Model {
    /// Distances `1..=certain` are always present.
    certain: usize,
    hazard: Hazard,
}

fn generate(n: usize, model: &Model, seed: u64) -> Result<CsrLowerTriangular> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    let mut row: Vec<(usize, f64)> = Vec::new();
    for i in 0..n {
        let mag = (2.0 * uniform(&mut rng) - 1.0).exp2();
        let diag = if uniform(&mut rng) < 0.5 { -mag } else { mag };

        row.clear();
        let certain = model.certain.min(i);
        for d in 1..=certain {
            row.push((i - d, 4.0 * uniform(&mut rng) - 2.0));
        }
        if certain < i && !matches!(model.hazard, Hazard::None) {
            let mut cur = certain;
            while let Some(d) = model.hazard.next(cur, exponential(&mut rng), i) {
                row.push((i - d, 4.0 * uniform(&mut rng) - 2.0));
                cur = d;
            }
        }
        for &(c, v) in row.iter().rev() {
            col_idx.push(c);
            values.push(v);
        }
        col_idx.push(i);
        values.push(diag);
        row_ptr.push(col_idx.len());
    }
    CsrLowerTriangular::from_csr(n, row_ptr, col_idx, values)
}

/// Every strictly-lower entry present independently with probability `p`.
pub fn gen_erdos_renyi(n: usize, p: f64, seed: u64) -> Result<CsrLowerTriangular> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "p must lie in [0, 1], got {p}"
        )));
    }
    let model = if p >= 1.0 {
        Model {
            certain: usize::MAX,
            hazard: Hazard::None,
        }
    } else if p == 0.0 {
        Model {
            certain: 0,
            hazard: Hazard::None,
        }
    } else {
        Model {
            certain: 0,
            hazard: Hazard::Constant(-(-p).ln_1p()),
        }
    };
    generate(n, &model, seed)
}

/// Entry `(i, j)` present with probability `min(1, p * exp((1 + j - i) / b))`.
pub fn gen_narrow_bandwidth(n: usize, p: f64, b: f64, seed: u64) -> Result<CsrLowerTriangular> {
    if !(p >= 0.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "p must be non-negative, got {p}"
        )));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "bandwidth must be positive, got {b}"
        )));
    }
    let prob = |d: usize| (p * ((1.0 - d as f64) / b).exp()).min(1.0);
    let max_d = n.saturating_sub(1);
    let certain = (1..=max_d).take_while(|&d| prob(d) >= 1.0).count();
    let hazard = if p == 0.0 || certain == max_d {
        Hazard::None
    } else {
        let mut cum = vec![0.0; max_d + 1];
        for d in certain + 1..=max_d {
            cum[d] = cum[d - 1] - (-prob(d)).ln_1p();
        }
        Hazard::Table(cum)
    };
    generate(n, &Model { certain, hazard }, seed)
}
