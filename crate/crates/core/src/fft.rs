//! Mixed-radix discrete Fourier transforms and the Fourier Mix token mixer.
//!
//! Convention: the forward transform uses `exp(-2πi kn/N)` with no scaling,
//! the inverse uses `exp(+2πi kn/N)` and divides by `N`. Lengths factor into
//! radices 2, 3, 5 and 7 where possible; any remaining prime factor is handled
//! by a direct O(p²) sum at that level of the recursion.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Complex {
    re: f64,
    im: f64,
}

impl Complex {
    #[inline]
    fn mul(self, o: Complex) -> Complex {
        Complex {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }

    #[inline]
    fn add(self, o: Complex) -> Complex {
        Complex {
            re: self.re + o.re,
            im: self.im + o.im,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Split-storage complex vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexBuffer {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexBuffer {
    pub fn new(re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::shape("complex_buffer", &[re.len()], &[im.len()]));
        }
        Ok(ComplexBuffer { re, im })
    }

    pub fn from_real(re: &[f64]) -> Self {
        ComplexBuffer {
            re: re.to_vec(),
            im: vec![0.0; re.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.re.iter().zip(&self.im).map(|(a, b)| a * a + b * b).sum()
    }
}

/// Precomputed factorization and twiddle table for one transform length.
#[derive(Clone, Debug)]
pub struct FftPlan {
    len: usize,
    factors: Vec<usize>,
    // exp(-2πi j / len) for j in 0..len
    twiddles: Vec<Complex>,
}

const RADICES: [usize; 4] = [2, 3, 5, 7];

fn factorize(mut n: usize) -> Vec<usize> {
    let mut factors = Vec::new();
    for &r in &RADICES {
        while n.is_multiple_of(r) && n > 1 {
            factors.push(r);
            n /= r;
        }
    }
    if n > 1 {
        // leftover has no factor <= 7; transform it directly
        factors.push(n);
    }
    factors
}

impl FftPlan {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::invalid("dft_1d", "zero-length transform"));
        }
        let twiddles = (0..len)
            .map(|j| {
                let angle = -2.0 * PI * j as f64 / len as f64;
                Complex {
                    re: angle.cos(),
                    im: angle.sin(),
                }
            })
            .collect();
        Ok(FftPlan {
            len,
            factors: factorize(len),
            twiddles,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    fn twiddle(&self, exponent: usize, sub_len: usize, inverse: bool) -> Complex {
        let w = self.twiddles[(exponent * (self.len / sub_len)) % self.len];
        if inverse {
            Complex { re: w.re, im: -w.im }
        } else {
            w
        }
    }

    fn transform(&self, input: &[Complex], out: &mut [Complex], direction: Direction) {
        assert_eq!(input.len(), self.len);
        let inverse = direction == Direction::Inverse;
        let mut scratch = vec![Complex::default(); self.len];
        self.recurse(input, 0, 1, self.len, 0, out, &mut scratch, inverse);
        if inverse {
            let s = 1.0 / self.len as f64;
            for v in out.iter_mut() {
                v.re *= s;
                v.im *= s;
            }
        }
    }

    /// Transforms `input[offset + stride*t]` for `t < n` into `out[..n]`.
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &self,
        input: &[Complex],
        offset: usize,
        stride: usize,
        n: usize,
        level: usize,
        out: &mut [Complex],
        scratch: &mut [Complex],
        inverse: bool,
    ) {
        if n == 1 {
            out[0] = input[offset];
            return;
        }
        let p = self.factors[level];
        let m = n / p;
        if m == 1 {
            // direct DFT of length p
            for (k, slot) in out.iter_mut().enumerate().take(p) {
                let mut acc = Complex::default();
                for r in 0..p {
                    acc = acc.add(input[offset + stride * r].mul(self.twiddle(r * k, n, inverse)));
                }
                *slot = acc;
            }
            return;
        }
        // sub-transform r of length m lives in out[r*m..(r+1)*m]
        for r in 0..p {
            let (sub_out, sub_scratch) = (&mut out[r * m..(r + 1) * m], &mut scratch[r * m..(r + 1) * m]);
            self.recurse(input, offset + stride * r, stride * p, m, level + 1, sub_out, sub_scratch, inverse);
        }
        let tmp = &mut scratch[..n];
        for k in 0..m {
            for q in 0..p {
                let mut acc = Complex::default();
                for r in 0..p {
                    let w = self.twiddle(r * (k + m * q), n, inverse);
                    acc = acc.add(out[r * m + k].mul(w));
                }
                tmp[k + m * q] = acc;
            }
        }
        out[..n].copy_from_slice(tmp);
    }

    pub fn run(&self, x: &ComplexBuffer, direction: Direction) -> Result<ComplexBuffer> {
        if x.len() != self.len {
            return Err(Error::shape("dft_1d", &[self.len], &[x.len()]));
        }
        let input: Vec<Complex> = x
            .re
            .iter()
            .zip(&x.im)
            .map(|(&re, &im)| Complex { re, im })
            .collect();
        let mut out = vec![Complex::default(); self.len];
        self.transform(&input, &mut out, direction);
        Ok(ComplexBuffer {
            re: out.iter().map(|c| c.re).collect(),
            im: out.iter().map(|c| c.im).collect(),
        })
    }
}

/// One-dimensional DFT of arbitrary length.
pub fn dft_1d(x: &ComplexBuffer, direction: Direction) -> Result<ComplexBuffer> {
    FftPlan::new(x.len())?.run(x, direction)
}

/// `Re(F_time(F_feature(x)))` for a real `[L, d]` matrix: a DFT over the
/// feature axis of each row, then over the time axis of each column, then the
/// real part.
pub fn fourier_mix(x: &Tensor) -> Result<Tensor> {
    let [rows, cols] = *x.shape() else {
        return Err(Error::invalid("fourier_mix", format!("expected [L, d], got {:?}", x.shape())));
    };
    let feature_plan = FftPlan::new(cols)?;
    let time_plan = FftPlan::new(rows)?;

    let mut grid = vec![Complex::default(); rows * cols];
    let mut line = vec![Complex::default(); cols];
    for i in 0..rows {
        for (slot, &v) in line.iter_mut().zip(x.row(i)) {
            *slot = Complex { re: v, im: 0.0 };
        }
        feature_plan.transform(&line, &mut grid[i * cols..(i + 1) * cols], Direction::Forward);
    }

    let mut column = vec![Complex::default(); rows];
    let mut spectrum = vec![Complex::default(); rows];
    let mut out = vec![0.0; rows * cols];
    for j in 0..cols {
        for i in 0..rows {
            column[i] = grid[i * cols + j];
        }
        time_plan.transform(&column, &mut spectrum, Direction::Forward);
        for i in 0..rows {
            out[i * cols + j] = spectrum[i].re;
        }
    }
    Tensor::new(&[rows, cols], out)
}

/// Adjoint of [`fourier_mix`] with respect to the real inner product.
///
/// Both DFT matrices are symmetric, so for real `y`
/// `<Re(F_L x F_d), y> = <x, Re(F_L y F_d)>`: the operator is self-adjoint.
pub fn fourier_mix_backward(upstream: &Tensor) -> Result<Tensor> {
    fourier_mix(upstream)
}
