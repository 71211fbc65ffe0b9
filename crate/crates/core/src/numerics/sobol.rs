//! Sobol low-discrepancy sequence (unscrambled, Gray-code ordering).
//!
//! Direction numbers come from `sobol_directions.txt`; see the header of
//! that file for its format. The first point of the sequence is the
//! origin, matching the usual unscrambled convention.

use super::scalar::Real;
use crate::error::{Error, Result};

const BITS: usize = 32;
const TABLE: &str = include_str!("sobol_directions.txt");

/// Largest supported dimension.
pub const MAX_DIM: usize = 10;

#[derive(Debug, Clone)]
struct Primitive {
    degree: usize,
    coefficients: u32,
    initial: Vec<u32>,
}

fn parse_table() -> Vec<Primitive> {
    TABLE
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|line| {
            let fields: Vec<u32> = line
                .split_whitespace()
                .map(|f| f.parse().expect("integer in direction table"))
                .collect();
            let degree = fields[1] as usize;
            Primitive {
                degree,
                coefficients: fields[2],
                initial: fields[3..3 + degree].to_vec(),
            }
        })
        .collect()
}

fn directions(p: &Primitive) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if p.degree == 0 {
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = 1u32 << (BITS - 1 - k);
        }
        return v;
    }
    let s = p.degree;
    for k in 0..BITS {
        v[k] = if k < s {
            p.initial[k] << (BITS - 1 - k)
        } else {
            let mut x = v[k - s] ^ (v[k - s] >> s);
            for j in 1..s {
                if (p.coefficients >> (s - 1 - j)) & 1 == 1 {
                    x ^= v[k - j];
                }
            }
            x
        };
    }
    v
}

/// Streaming generator over `[0,1)^dim`.
#[derive(Debug, Clone)]
pub struct Sobol {
    directions: Vec<[u32; BITS]>,
    state: Vec<u32>,
    index: u64,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Unsupported(format!(
                "Sobol dimension {dim} unsupported (1..={MAX_DIM})"
            )));
        }
        let table = parse_table();
        Ok(Self {
            directions: table[..dim].iter().map(directions).collect(),
            state: vec![0; dim],
            index: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.state.len()
    }

    /// Next point; the first call returns the origin.
    pub fn next_point<T: Real>(&mut self) -> Vec<T> {
        let scale = T::lit(1.0 / (1u64 << BITS) as f64);
        let out = self
            .state
            .iter()
            .map(|&s| T::lit(f64::from(s)) * scale)
            .collect();
        // rightmost zero bit of the current index selects the direction
        let c = (!self.index).trailing_zeros() as usize;
        assert!(c < BITS, "Sobol sequence exhausted");
        for (s, v) in self.state.iter_mut().zip(&self.directions) {
            *s ^= v[c];
        }
        self.index += 1;
        out
    }

    /// Skips `n` points.
    pub fn skip(&mut self, n: u64) {
        for _ in 0..n {
            self.next_point::<f64>();
        }
    }
}

/// First `count` points of the `dim`-dimensional sequence.
pub fn sobol<T: Real>(dim: usize, count: usize) -> Result<Vec<Vec<T>>> {
    let mut gen = Sobol::new(dim)?;
    Ok((0..count).map(|_| gen.next_point()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_points_dimension_one() {
        let p = sobol::<f64>(1, 4).unwrap();
        assert_eq!(p, vec![vec![0.0], vec![0.5], vec![0.75], vec![0.25]]);
    }

    #[test]
    fn matches_reference_points_in_ten_dimensions() {
        // Reference values from an independent Joe–Kuo implementation.
        let p = sobol::<f64>(10, 10_000).unwrap();
        assert_eq!(
            p[4],
            vec![0.375, 0.375, 0.625, 0.875, 0.375, 0.125, 0.375, 0.875, 0.875, 0.625]
        );
        assert_eq!(
            p[1000],
            vec![
                0.2197265625,
                0.0966796875,
                0.5185546875,
                0.6767578125,
                0.2802734375,
                0.9072265625,
                0.0458984375,
                0.8994140625,
                0.5009765625,
                0.0693359375
            ]
        );
        assert_eq!(
            p[9999],
            vec![
                0.06707763671875,
                0.92144775390625,
                0.98272705078125,
                0.33941650390625,
                0.22332763671875,
                0.13494873046875,
                0.05023193359375,
                0.72698974609375,
                0.35882568359375,
                0.99395751953125
            ]
        );
    }

    #[test]
    fn range_and_determinism() {
        let a = sobol::<f64>(7, 513).unwrap();
        let b = sobol::<f64>(7, 513).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn unsupported_dimensions() {
        assert!(Sobol::new(0).is_err());
        assert!(Sobol::new(11).is_err());
    }

    #[test]
    fn skip_equals_drawing() {
        let mut a = Sobol::new(3).unwrap();
        a.skip(17);
        let p = sobol::<f64>(3, 18).unwrap();
        assert_eq!(a.next_point::<f64>(), p[17]);
    }
}
