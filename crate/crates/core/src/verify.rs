//! Finite-difference ODE residuals and RMSE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opalgebra::Assignment;
use crate::systems::{linspace, SystemSpec};

/// Shift used for the forward differences.
pub const DELTA: f64 = 1e-3;
/// Width of the centered moving average applied to every sampled sequence.
pub const FILTER_WINDOW: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeErrorReport {
    /// Mean absolute residual of each equation.
    pub per_equation: Vec<f64>,
    pub mean: f64,
    pub point_count: usize,
    pub delta: f64,
    pub filter: String,
}

/// Centered moving average; windows are truncated at the ends.
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Mean absolute residual of `A f = 0` for the trajectory `eval`.
///
/// Base points are uniform on `interval` (500 for first-order systems, 333
/// otherwise) and each is duplicated at `t + Δ` and, for second order, at
/// `t + 2Δ`. Derivatives are forward differences, and each state is
/// attributed to the center of its stencil: `t + Δ/2` for first order
/// (value averaged), `t + Δ` for second order (first derivative
/// `(d0 + d1) / 2`).
pub fn ode_residual(
    eval: &dyn Fn(&[f64]) -> Result<Vec<Vec<f64>>>,
    spec: &SystemSpec,
    interval: (f64, f64),
    params: &Assignment,
) -> Result<OdeErrorReport> {
    if !(interval.0 < interval.1) {
        return Err(Error::InvalidInput("empty interval".into()));
    }
    let order = spec.order();
    if order > 2 {
        return Err(Error::UnsupportedOrder(order));
    }
    let base_count = if order <= 1 { 500 } else { 333 };
    let base = linspace(interval.0, interval.1, base_count);
    let shifts = order;

    let mut all: Vec<f64> = Vec::with_capacity(base.len() * (shifts + 1));
    for k in 0..=shifts {
        all.extend(base.iter().map(|t| t + k as f64 * DELTA));
    }
    let mut order_idx: Vec<usize> = (0..all.len()).collect();
    order_idx.sort_by(|&a, &b| all[a].total_cmp(&all[b]));
    let sorted: Vec<f64> = order_idx.iter().map(|&i| all[i]).collect();
    let values_sorted = eval(&sorted)?;
    let n = spec.channels.len();
    if values_sorted.len() != sorted.len() || values_sorted.iter().any(|r| r.len() != n) {
        return Err(Error::ShapeMismatch("trajectory shape".into()));
    }
    let mut values = vec![Vec::new(); all.len()];
    for (pos, &i) in order_idx.iter().enumerate() {
        values[i] = values_sorted[pos].clone();
    }

    // seq[k][c][i]: channel c at base point i shifted by kΔ, filtered
    let m = base.len();
    let seq: Vec<Vec<Vec<f64>>> = (0..=shifts)
        .map(|k| {
            (0..n)
                .map(|c| {
                    let raw: Vec<f64> = (0..m).map(|i| values[k * m + i][c]).collect();
                    moving_average(&raw, FILTER_WINDOW)
                })
                .collect()
        })
        .collect();

    // state[j][c][i] = j-th derivative
    let state: Vec<Vec<Vec<f64>>> = match shifts {
        0 => vec![seq[0].clone()],
        1 => {
            let mid = (0..n)
                .map(|c| (0..m).map(|i| 0.5 * (seq[0][c][i] + seq[1][c][i])).collect())
                .collect();
            let d0 = (0..n)
                .map(|c| (0..m).map(|i| (seq[1][c][i] - seq[0][c][i]) / DELTA).collect())
                .collect();
            vec![mid, d0]
        }
        _ => {
            let mut first = Vec::new();
            let mut second = Vec::new();
            for c in 0..n {
                let d0: Vec<f64> = (0..m).map(|i| (seq[1][c][i] - seq[0][c][i]) / DELTA).collect();
                let d1: Vec<f64> = (0..m).map(|i| (seq[2][c][i] - seq[1][c][i]) / DELTA).collect();
                first.push((0..m).map(|i| 0.5 * (d0[i] + d1[i])).collect());
                second.push((0..m).map(|i| (d1[i] - d0[i]) / DELTA).collect());
            }
            vec![seq[1].clone(), first, second]
        }
    };

    let a = &spec.matrix;
    let mut per_equation = Vec::with_capacity(a.rows());
    for r in 0..a.rows() {
        let mut coeffs: Vec<(usize, usize, f64)> = Vec::new();
        for c in 0..a.cols() {
            for (j, q) in a[(r, c)].coeffs().iter().enumerate() {
                if !q.is_zero() {
                    coeffs.push((c, j, q.eval(params)?));
                }
            }
        }
        let total: f64 = (0..m)
            .map(|i| {
                coeffs
                    .iter()
                    .map(|&(c, j, w)| w * state[j][c][i])
                    .sum::<f64>()
                    .abs()
            })
            .sum();
        per_equation.push(total / m as f64);
    }
    let mean = per_equation.iter().sum::<f64>() / per_equation.len().max(1) as f64;
    Ok(OdeErrorReport {
        per_equation,
        mean,
        point_count: m * (shifts + 1),
        delta: DELTA,
        filter: format!("centered moving average, window {FILTER_WINDOW}"),
    })
}

/// Root mean squared elementwise difference.
pub fn rmse(pred: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<f64> {
    if pred.len() != reference.len()
        || pred.iter().zip(reference).any(|(a, b)| a.len() != b.len())
    {
        return Err(Error::ShapeMismatch("prediction and reference differ in shape".into()));
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for (a, b) in pred.iter().zip(reference) {
        for (x, y) in a.iter().zip(b) {
            sum += (x - y).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok((sum / count as f64).sqrt())
}

/// Adapter for closed-form trajectories.
pub fn trajectory_eval(f: fn(f64) -> Vec<f64>) -> impl Fn(&[f64]) -> Result<Vec<Vec<f64>>> {
    move |ts: &[f64]| Ok(ts.iter().map(|&t| f(t)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opalgebra::{parse_operator, OperatorMatrix};
    use crate::systems::{bipendulum_solution, make_system};

    #[test]
    fn moving_average_edges() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = moving_average(&x, 5);
        assert_eq!(y[0], 2.0);
        assert_eq!(y[2], 3.0);
        assert_eq!(y[5], 5.0);
    }

    #[test]
    fn bipendulum_closed_form() {
        let s = make_system("bipendulum").unwrap();
        let r = ode_residual(
            &trajectory_eval(bipendulum_solution),
            &s,
            s.eval_interval,
            &Assignment::new(),
        )
        .unwrap();
        assert!(r.mean > 5e-8 && r.mean < 5e-7, "{}", r.mean);
        assert_eq!(r.point_count, 999);
    }

    #[test]
    fn zero_trajectory() {
        let s = make_system("three-tank").unwrap();
        let r = ode_residual(
            &|ts: &[f64]| Ok(vec![vec![0.0; 5]; ts.len()]),
            &s,
            (1.0, 11.0),
            &Assignment::new(),
        )
        .unwrap();
        assert_eq!(r.mean, 0.0);
        assert_eq!(r.point_count, 1000);
    }

    #[test]
    fn single_oscillator() {
        let mut s = make_system("bipendulum").unwrap();
        s.matrix = OperatorMatrix::from_rows(vec![vec![parse_operator("D^2 + 1").unwrap()]]).unwrap();
        s.channels = vec!["x".into()];
        let r = ode_residual(
            &|ts: &[f64]| Ok(ts.iter().map(|t| vec![t.sin()]).collect()),
            &s,
            (0.0, 10.0),
            &Assignment::new(),
        )
        .unwrap();
        assert!(r.mean <= 1e-4, "{}", r.mean);
    }

    #[test]
    fn rmse_cases() {
        let a = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let b: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|x| x + 2.0).collect()).collect();
        assert_eq!(rmse(&a, &b).unwrap(), 2.0);
        assert!(rmse(&a, &a[..1]).is_err());
    }
}
