//! Alternating least squares with weighted-lambda regularization.
//!
//! Each half-sweep solves the regularized normal equations exactly for one
//! factor block while the other stays fixed, so the objective
//!
//!   sum_observed (r_ui - p_u . q_i)^2
//!     + lambda * (sum_u n_u |p_u|^2 + sum_i n_i |q_i|^2)
//!
//! never increases across half-sweeps.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::RatingMatrix;

/// Trained factor model.
#[derive(Debug, Clone)]
pub struct FactorModel {
    rank: usize,
    lambda: f64,
    user_factors: Vec<Vec<f64>>,
    item_factors: Vec<Vec<f64>>,
    /// Objective after initialization and after every half-sweep.
    pub loss_trace: Vec<f64>,
    /// Solves that needed the ridge jitter fallback.
    pub jitter_events: usize,
}

impl FactorModel {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn user_factors(&self, user: usize) -> &[f64] {
        &self.user_factors[user]
    }

    pub fn item_factors(&self, item: usize) -> &[f64] {
        &self.item_factors[item]
    }

    pub fn predict(&self, user: usize, item: usize) -> f64 {
        self.user_factors[user]
            .iter()
            .zip(&self.item_factors[item])
            .map(|(p, q)| p * q)
            .sum()
    }
}

const JITTER: f64 = 1e-9;

/// Trains a rank-`f` model by `sweeps` full ALS passes.
///
/// Factors initialize from a seeded uniform draw in [0, 0.1], so a fixed
/// seed reproduces factors bit for bit.
pub fn als_train(
    matrix: &RatingMatrix,
    rank: usize,
    lambda: f64,
    sweeps: usize,
    seed: u64,
) -> Result<FactorModel> {
    if rank < 1 {
        return Err(Error::config("als rank must be at least 1"));
    }
    if !(lambda > 0.0) {
        return Err(Error::config("als lambda must be positive"));
    }
    if sweeps < 1 {
        return Err(Error::config("als sweeps must be at least 1"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new(0.0, 0.1);
    let mut init = |n: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..rank).map(|_| dist.sample(&mut rng)).collect())
            .collect()
    };
    let mut user_factors = init(matrix.n_users());
    let mut item_factors = init(matrix.n_items());

    let mut loss_trace = Vec::with_capacity(2 * sweeps + 1);
    loss_trace.push(objective(matrix, lambda, &user_factors, &item_factors));
    let mut jitter_events = 0usize;

    for _ in 0..sweeps {
        let (solved, jitters) = solve_block(
            matrix.n_users(),
            |u| matrix.row(u),
            &item_factors,
            rank,
            lambda,
        );
        user_factors = solved;
        jitter_events += jitters;
        loss_trace.push(objective(matrix, lambda, &user_factors, &item_factors));

        let (solved, jitters) = solve_block(
            matrix.n_items(),
            |i| matrix.col(i),
            &user_factors,
            rank,
            lambda,
        );
        item_factors = solved;
        jitter_events += jitters;
        loss_trace.push(objective(matrix, lambda, &user_factors, &item_factors));
    }

    Ok(FactorModel {
        rank,
        lambda,
        user_factors,
        item_factors,
        loss_trace,
        jitter_events,
    })
}

/// Solves every row of one block: A = sum q q^T + lambda * n * I, b = sum r q.
fn solve_block<'a>(
    n_rows: usize,
    observed: impl Fn(usize) -> &'a [(u32, f64)] + Sync,
    fixed: &[Vec<f64>],
    rank: usize,
    lambda: f64,
) -> (Vec<Vec<f64>>, usize) {
    let results: Vec<(Vec<f64>, usize)> = (0..n_rows)
        .into_par_iter()
        .map(|row| solve_row(observed(row), fixed, rank, lambda))
        .collect();
    let mut jitters = 0;
    let mut out = Vec::with_capacity(n_rows);
    for (factors, j) in results {
        jitters += j;
        out.push(factors);
    }
    (out, jitters)
}

fn solve_row(entries: &[(u32, f64)], fixed: &[Vec<f64>], rank: usize, lambda: f64) -> (Vec<f64>, usize) {
    if entries.is_empty() {
        return (vec![0.0; rank], 0);
    }
    let n = entries.len() as f64;
    let mut a = DMatrix::<f64>::zeros(rank, rank);
    let mut b = DVector::<f64>::zeros(rank);
    for &(j, r) in entries {
        let q = &fixed[j as usize];
        for x in 0..rank {
            b[x] += r * q[x];
            for y in x..rank {
                a[(x, y)] += q[x] * q[y];
            }
        }
    }
    // mirror the upper triangle and add the weighted regularizer
    for x in 0..rank {
        for y in 0..x {
            a[(x, y)] = a[(y, x)];
        }
        a[(x, x)] += lambda * n;
    }

    match Cholesky::new(a.clone()) {
        Some(chol) => ((chol.solve(&b)).iter().copied().collect(), 0),
        None => {
            for x in 0..rank {
                a[(x, x)] += JITTER;
            }
            let solved = Cholesky::new(a)
                .map(|chol| chol.solve(&b).iter().copied().collect())
                .unwrap_or_else(|| vec![0.0; rank]);
            (solved, 1)
        }
    }
}

/// The exact objective the sweeps minimize.
pub fn objective(
    matrix: &RatingMatrix,
    lambda: f64,
    user_factors: &[Vec<f64>],
    item_factors: &[Vec<f64>],
) -> f64 {
    let mut loss = 0.0;
    for u in 0..matrix.n_users() {
        for &(i, r) in matrix.row(u) {
            let pred: f64 = user_factors[u]
                .iter()
                .zip(&item_factors[i as usize])
                .map(|(p, q)| p * q)
                .sum();
            let e = r - pred;
            loss += e * e;
        }
        let n_u = matrix.row(u).len() as f64;
        let norm: f64 = user_factors[u].iter().map(|p| p * p).sum();
        loss += lambda * n_u * norm;
    }
    for i in 0..matrix.n_items() {
        let n_i = matrix.col(i).len() as f64;
        let norm: f64 = item_factors[i].iter().map(|q| q * q).sum();
        loss += lambda * n_i * norm;
    }
    loss
}
