//! Derivative-free Nelder–Mead simplex minimization.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    /// Converged once the spread of simplex values is within
    /// `f_tol * (|f_best| + f_tol)`,
    pub f_tol: f64,
    /// or every vertex is within `x_tol` of the best one (max-norm).
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5_000,
            f_tol: 1e-12,
            x_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective value after each iteration.
    pub history: Vec<f64>,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimizes `f` from `x0`, with the initial simplex spanned by `x0` and
/// `x0 + step[i] e_i`. Non-finite objective values are treated as `+inf`.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    step: &[f64],
    opts: NelderMeadOptions,
) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    assert_eq!(step.len(), dim);
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += step[i];
        let v = eval(&x);
        simplex.push((x, v));
    }

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        let spread = (worst - best).abs();
        let size = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol * (best.abs() + opts.f_tol) || size <= opts.x_tol {
            converged = best.is_finite();
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|(x, _)| x[j]).sum::<f64>() / dim as f64)
            .collect();
        let toward = |coef: f64, from: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(from)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let worst_x = simplex[dim].0.clone();
        let xr = toward(REFLECT, &worst_x);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = toward(EXPAND, &worst_x);
            let fe = eval(&xe);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[dim].1 {
                let xc = toward(CONTRACT, &worst_x);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = toward(-CONTRACT, &worst_x);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < simplex[dim].1.min(fr) {
                simplex[dim] = (xc, fc);
            } else {
                let best_x = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best_x
                        .iter()
                        .zip(&vertex.0)
                        .map(|(b, v)| b + SHRINK * (v - b))
                        .collect();
                    let v = eval(&x);
                    *vertex = (x, v);
                }
            }
        }
        let current = simplex.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        history.push(current);
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        f,
        iterations,
        evaluations,
        converged,
        history,
    }
}
