//! Classical iterative and brute-force sparse-coding solvers: the oracles
//! and baselines the unrolled block is validated against.

use crate::error::{Error, Result};
use crate::tensor::{conv2d_same, ConvKernel, Tensor};
use crate::threshold::{hard, soft};

/// Dense dictionary with column-major atoms: atom j is
/// `atoms[j * n .. (j + 1) * n]`.
#[derive(Debug, Clone)]
pub struct DenseDictionary {
    n: usize,
    m: usize,
    atoms: Vec<f64>,
}

impl DenseDictionary {
    pub fn from_columns(n: usize, m: usize, atoms: Vec<f64>) -> Result<Self> {
        if atoms.len() != n * m {
            return Err(Error::contract(
                "DenseDictionary::from_columns",
                format!("atoms length {} != {}x{}", atoms.len(), n, m),
            ));
        }
        Ok(DenseDictionary { n, m, atoms })
    }

    /// Random dictionary with unit l2-norm atoms.
    pub fn random_unit(n: usize, m: usize, rng: &mut impl rand::Rng) -> Self {
        let mut atoms = vec![0.0; n * m];
        for j in 0..m {
            let col = &mut atoms[j * n..(j + 1) * n];
            loop {
                for v in col.iter_mut() {
                    *v = rng.gen_range(-1.0..1.0);
                }
                let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-6 {
                    for v in col.iter_mut() {
                        *v /= norm;
                    }
                    break;
                }
            }
        }
        DenseDictionary { n, m, atoms }
    }

    pub fn signal_dim(&self) -> usize {
        self.n
    }

    pub fn atom_count(&self) -> usize {
        self.m
    }

    pub fn atom(&self, j: usize) -> &[f64] {
        &self.atoms[j * self.n..(j + 1) * self.n]
    }

    /// D z
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (j, &c) in z.iter().enumerate() {
            if c != 0.0 {
                for (o, &a) in out.iter_mut().zip(self.atom(j)) {
                    *o += c * a;
                }
            }
        }
        out
    }

    /// D^T r
    pub fn apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|j| self.atom(j).iter().zip(r).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Largest squared singular value, by power iteration on D^T D.
    pub fn sigma_max_sq(&self) -> f64 {
        let mut v = vec![1.0; self.m];
        let mut lambda = 0.0;
        for _ in 0..200 {
            let w = self.apply_transpose(&self.apply(&v));
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm;
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / norm;
            }
        }
        lambda
    }
}

/// The l0 objective: 0.5 ||x - D z||^2 + lambda ||z||_0.
pub fn l0_objective(x: &[f64], dict: &DenseDictionary, z: &[f64], lambda: f64) -> f64 {
    let recon = dict.apply(z);
    let resid: f64 = x.iter().zip(&recon).map(|(a, b)| (a - b) * (a - b)).sum();
    let nnz = z.iter().filter(|&&v| v != 0.0).count();
    0.5 * resid + lambda * nnz as f64
}

/// Per-iteration record of an iterative solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    pub final_support: Vec<usize>,
    /// The l0 weight implied by (theta, mu): lambda = theta^2 / (2 mu).
    pub lambda: f64,
}

/// Solves a small dense linear system in place by Gaussian elimination
/// with partial pivoting. `a` is n x n row-major.
fn solve_small(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[pivot * n + col].abs() {
                pivot = r;
            }
        }
        if a[pivot * n + col].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for c in 0..n {
                a.swap(col * n + c, pivot * n + c);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f != 0.0 {
                for c in col..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in row + 1..n {
            acc -= a[row * n + c] * x[c];
        }
        x[row] = acc / a[row * n + row];
    }
    Some(x)
}

/// Least squares of x on the atoms in `support`; returns the coefficients.
fn least_squares_on_support(x: &[f64], dict: &DenseDictionary, support: &[usize]) -> Option<Vec<f64>> {
    let s = support.len();
    if s == 0 {
        return Some(Vec::new());
    }
    let mut gram = vec![0.0; s * s];
    let mut rhs = vec![0.0; s];
    for (a, &ja) in support.iter().enumerate() {
        for (b, &jb) in support.iter().enumerate() {
            gram[a * s + b] = dict.atom(ja).iter().zip(dict.atom(jb)).map(|(u, v)| u * v).sum();
        }
        rhs[a] = dict.atom(ja).iter().zip(x).map(|(u, v)| u * v).sum();
    }
    solve_small(&mut gram, &mut rhs, s)
}

fn combinations(m: usize, size: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..size).collect();
    if size == 0 {
        visit(&[]);
        return;
    }
    if size > m {
        return;
    }
    loop {
        visit(&idx);
        // advance
        let mut i = size;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + m - size {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Global minimizer of 0.5||x - Dz||^2 + lambda ||z||_0 over all supports
/// of size <= max_support, by exhaustive enumeration with per-support
/// least squares. Guarded to m <= 20 and max_support <= 4 so enumeration
/// stays in the millisecond range.
pub fn exhaustive_l0(
    x: &[f64],
    dict: &DenseDictionary,
    lambda: f64,
    max_support: usize,
) -> Result<(Vec<f64>, f64)> {
    if dict.atom_count() > 20 || max_support > 4 {
        return Err(Error::SizeGuard(format!(
            "exhaustive_l0 limited to m <= 20, support <= 4 (got m = {}, support = {})",
            dict.atom_count(),
            max_support
        )));
    }
    if x.len() != dict.signal_dim() {
        return Err(Error::contract(
            "exhaustive_l0",
            format!("signal length {} != n {}", x.len(), dict.signal_dim()),
        ));
    }
    let mut best_z = vec![0.0; dict.atom_count()];
    let mut best_obj = l0_objective(x, dict, &best_z, lambda);
    for size in 1..=max_support.min(dict.atom_count()) {
        combinations(dict.atom_count(), size, |support| {
            if let Some(coef) = least_squares_on_support(x, dict, support) {
                let mut z = vec![0.0; dict.atom_count()];
                for (&j, &c) in support.iter().zip(&coef) {
                    z[j] = c;
                }
                let obj = l0_objective(x, dict, &z, lambda);
                if obj < best_obj {
                    best_obj = obj;
                    best_z = z;
                }
            }
        });
    }
    Ok((best_z, best_obj))
}

/// Normalized iterative hard thresholding on a dense dictionary:
/// z <- H_theta(z - mu D^T (D z - x)) from z = 0. The reported objective
/// uses the implied weight lambda = theta^2 / (2 mu).
pub fn nihta_dense(
    x: &[f64],
    dict: &DenseDictionary,
    theta: f64,
    mu: f64,
    iters: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParam(format!("mu {} must be > 0", mu)));
    }
    if x.len() != dict.signal_dim() {
        return Err(Error::contract(
            "nihta_dense",
            format!("signal length {} != n {}", x.len(), dict.signal_dim()),
        ));
    }
    let lambda = theta * theta / (2.0 * mu);
    let mut z = vec![0.0; dict.atom_count()];
    let mut trace = Vec::with_capacity(iters + 1);
    trace.push(l0_objective(x, dict, &z, lambda));
    for _ in 0..iters {
        let recon = dict.apply(&z);
        let resid: Vec<f64> = recon.iter().zip(x).map(|(r, t)| r - t).collect();
        let grad = dict.apply_transpose(&resid);
        for (zi, g) in z.iter_mut().zip(&grad) {
            *zi = hard(*zi - mu * g, theta);
        }
        trace.push(l0_objective(x, dict, &z, lambda));
    }
    let support = z
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, _)| i)
        .collect();
    let report = SolveReport {
        iterations: iters,
        objective_trace: trace,
        final_support: support,
        lambda,
    };
    Ok((z, report))
}

fn conv_solver_check(
    op: &'static str,
    image: &Tensor,
    w_d: &ConvKernel,
    w_u: &ConvKernel,
) -> Result<()> {
    let c = image.channels();
    let k = w_d.in_channels();
    if w_d.out_channels() != c || w_u.in_channels() != c || w_u.out_channels() != k {
        return Err(Error::contract(
            op,
            format!(
                "need w_d: K->C and w_u: C->K with C = {}; got w_d {}->{}, w_u {}->{}",
                c,
                w_d.in_channels(),
                w_d.out_channels(),
                w_u.in_channels(),
                w_u.out_channels()
            ),
        ));
    }
    Ok(())
}

fn iterative_conv(
    image: &Tensor,
    w_d: &ConvKernel,
    w_u: &ConvKernel,
    theta: f64,
    iters: usize,
    threshold: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    let mut z = Tensor::zeros(image.height(), image.width(), w_d.in_channels());
    for _ in 0..iters {
        let resid = conv2d_same(&z, w_d)?.sub(image)?;
        let step = conv2d_same(&resid, w_u)?;
        for (zi, s) in z.data_mut().iter_mut().zip(step.data()) {
            *zi = threshold(*zi - s, theta);
        }
    }
    Ok(z)
}

/// Convolutional ISTA baseline: z <- S_theta(z - W_u(W_d(z) - I)) from 0.
/// The step size is folded into `w_u`.
pub fn ista_conv(
    image: &Tensor,
    w_d: &ConvKernel,
    w_u: &ConvKernel,
    theta: f64,
    iters: usize,
) -> Result<Tensor> {
    conv_solver_check("ista_conv", image, w_d, w_u)?;
    iterative_conv(image, w_d, w_u, theta, iters, soft)
}

/// Convolutional NIHTA: as [`ista_conv`] with hard thresholding.
pub fn nihta_conv(
    image: &Tensor,
    w_d: &ConvKernel,
    w_u: &ConvKernel,
    theta: f64,
    iters: usize,
) -> Result<Tensor> {
    conv_solver_check("nihta_conv", image, w_d, w_u)?;
    iterative_conv(image, w_d, w_u, theta, iters, hard)
}

/// Largest eigenvalue of z -> adj(W_d)(W_d(z)) by power iteration; the
/// Lipschitz constant of the convolutional least-squares gradient.
pub fn conv_operator_norm(w_d: &ConvKernel, height: usize, width: usize) -> f64 {
    let k = w_d.in_channels();
    let adj = w_d.adjoint();
    let mut v = Tensor::from_fn(height, width, k, |y, x, c| {
        // Deterministic pseudo-random start vector.
        let seed = (y * 31 + x * 17 + c * 7) as f64;
        (seed * 12.9898).sin()
    });
    let mut lambda = 0.0;
    for _ in 0..100 {
        let w = conv2d_same(&conv2d_same(&v, w_d).unwrap(), &adj).unwrap();
        let norm = w.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = w.scale(1.0 / norm);
    }
    lambda
}

/// l0 objective of a convolutional code: 0.5||I - W_d(z)||^2 + lambda ||z||_0.
pub fn conv_l0_objective(image: &Tensor, w_d: &ConvKernel, z: &Tensor, lambda: f64) -> Result<f64> {
    let recon = conv2d_same(z, w_d)?;
    let resid: f64 = image
        .data()
        .iter()
        .zip(recon.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let nnz = z.data().iter().filter(|&&v| v != 0.0).count();
    Ok(0.5 * resid + lambda * nnz as f64)
}
