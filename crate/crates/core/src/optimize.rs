//! Derivative-free minimization with the Nelder-Mead simplex method.

use crate::scalar::{c, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions<T> {
    pub max_iter: usize,
    /// Stop once the spread of objective values over the simplex is below this,
    pub f_tol: T,
    /// or once the simplex diameter is below this.
    pub x_tol: T,
    /// Edge length of the initial simplex along each axis.
    pub initial_step: T,
}

impl<T: Scalar> Default for SimplexOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 2_000,
            f_tol: c(1e-28),
            x_tol: c(1e-10),
            initial_step: c(0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult<T> {
    pub x: Vec<T>,
    pub fx: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` starting from `x0`.
///
/// Non-finite objective values are treated as `+inf`, so the objective may
/// signal infeasible points that way.
pub fn nelder_mead<T, F>(mut f: F, x0: &[T], opts: &SimplexOptions<T>) -> SimplexResult<T>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    let n = x0.len();
    assert!(n > 0, "nelder_mead needs at least one dimension");
    let mut eval = |x: &[T]| {
        let v = f(x);
        if v.is_nan() {
            T::infinity()
        } else {
            v
        }
    };

    let (reflect, expand, contract, shrink): (T, T, T, T) = (c(1.0), c(2.0), c(0.5), c(0.5));

    let mut simplex: Vec<Vec<T>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        simplex.push(v);
    }
    let mut values: Vec<T> = simplex.iter().map(|v| eval(v)).collect();
    let mut evaluations = n + 1;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[n] - values[0];
        let diameter = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (*a - *b).abs())
                    .fold(T::zero(), T::max)
            })
            .fold(T::zero(), T::max);
        if diameter <= opts.x_tol || spread <= opts.f_tol {
            converged = true;
            break;
        }

        let centroid: Vec<T> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).fold(T::zero(), |a, b| a + b) / T::from_usize(n).unwrap())
            .collect();
        let along = |t: T| -> Vec<T> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(&cj, &wj)| cj + t * (cj - wj))
                .collect()
        };

        let xr = along(reflect);
        let fr = eval(&xr);
        evaluations += 1;
        if fr < values[0] {
            let xe = along(reflect * expand);
            let fe = eval(&xe);
            evaluations += 1;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(reflect * contract);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-contract);
            let fc = eval(&xc);
            (xc, fc)
        };
        evaluations += 1;
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            let v: Vec<T> = simplex[i]
                .iter()
                .zip(&best)
                .map(|(&xi, &bi)| bi + shrink * (xi - bi))
                .collect();
            values[i] = eval(&v);
            simplex[i] = v;
        }
        evaluations += n;
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    SimplexResult {
        x: simplex[best].clone(),
        fx: values[best],
        iterations,
        evaluations,
        converged,
    }
}
