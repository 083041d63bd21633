//! Real part of the 2-d discrete Fourier transform used for token mixing.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{Float, Tensor, TensorError};

type C = Complex<Float>;

thread_local! {
    static PLANNER: RefCell<FftPlanner<Float>> = RefCell::new(FftPlanner::new());
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DftStrategy {
    /// O(n log n) FFT on every axis length.
    Auto,
    /// Direct O(n²) summation on every axis.
    Naive,
}

/// Direct summation `X[k] = Σ x[j]·exp(-2πi·jk/n)`.
pub fn naive_dft(input: &[C]) -> Vec<C> {
    naive_with_roots(input, &twiddle_table(input.len()))
}

fn naive_with_roots(input: &[C], roots: &[C]) -> Vec<C> {
    let n = input.len();
    (0..n)
        .map(|k| {
            input
                .iter()
                .enumerate()
                .map(|(j, x)| x * roots[(j * k) % n])
                .sum()
        })
        .collect()
}

fn twiddle_table(n: usize) -> Vec<C> {
    (0..n)
        .map(|j| {
            let theta = -2.0 * PI * j as f64 / n as f64;
            C::new(theta.cos() as Float, theta.sin() as Float)
        })
        .collect()
}

/// One axis transform, planned once per call.
enum AxisPlan {
    Fast(Arc<dyn Fft<Float>>),
    Direct(Vec<C>),
}

impl AxisPlan {
    fn new(n: usize, strategy: DftStrategy) -> Self {
        match strategy {
            DftStrategy::Auto => AxisPlan::Fast(PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))),
            DftStrategy::Naive => AxisPlan::Direct(twiddle_table(n)),
        }
    }

    fn run(&self, buf: &mut [C]) {
        match self {
            AxisPlan::Fast(fft) => fft.process(buf),
            AxisPlan::Direct(roots) => {
                let out = naive_with_roots(buf, roots);
                buf.copy_from_slice(&out);
            }
        }
    }
}

/// `Re(DFT_seq(DFT_hidden(a)))` for a `seq×hidden` matrix.
pub fn dft2_real(a: &Tensor) -> Result<Tensor, TensorError> {
    dft2_real_with(a, DftStrategy::Auto)
}

pub fn dft2_real_with(a: &Tensor, strategy: DftStrategy) -> Result<Tensor, TensorError> {
    let (rows, cols) = a.dims2()?;
    let out = dft2_real_raw(a.data(), rows, cols, strategy);
    Tensor::new(a.shape(), out)
}

pub(crate) fn dft2_real_raw(
    data: &[Float],
    rows: usize,
    cols: usize,
    strategy: DftStrategy,
) -> Vec<Float> {
    let mut grid: Vec<C> = data.iter().map(|&x| C::new(x, 0.0)).collect();
    let row_plan = AxisPlan::new(cols, strategy);
    for row in grid.chunks_mut(cols) {
        row_plan.run(row);
    }
    let column_plan = AxisPlan::new(rows, strategy);
    let mut column = vec![C::new(0.0, 0.0); rows];
    let mut out = vec![0.0; rows * cols];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = grid[r * cols + c];
        }
        column_plan.run(&mut column);
        for r in 0..rows {
            out[r * cols + c] = column[r].re;
        }
    }
    out
}
