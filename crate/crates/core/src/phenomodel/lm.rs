//! Small dense Levenberg-Marquardt solver with Marquardt diagonal scaling.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Stop once an accepted step improves the SSR by less than this
    /// fraction.
    pub rel_tol: f64,
    pub initial_lambda: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            max_iterations: 500,
            rel_tol: 1e-10,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOutcome<const P: usize> {
    pub x: [f64; P],
    pub ssr: f64,
    pub iterations: usize,
    pub converged: bool,
}

const LAMBDA_MAX: f64 = 1e16;

/// Residuals and Jacobian rows at a parameter vector; `None` when the model
/// cannot be evaluated there.
pub type Evaluation<const P: usize> = Option<(Vec<f64>, Vec<[f64; P]>)>;

/// Minimizes the sum of squared residuals returned by `eval`, starting at
/// `x0`. Each trial point passes through `project`, which may clamp it onto
/// the feasible box or reject it with `None`.
pub fn minimize<const P: usize>(
    x0: [f64; P],
    cfg: &LmConfig,
    eval: impl Fn(&[f64; P]) -> Evaluation<P>,
    project: impl Fn([f64; P]) -> Option<[f64; P]>,
) -> Option<LmOutcome<P>> {
    let mut x = project(x0)?;
    let (mut r, mut jac) = eval(&x)?;
    let mut ssr = sum_sq(&r);
    if !ssr.is_finite() {
        return None;
    }
    let mut lambda = cfg.initial_lambda;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iterations {
        iterations += 1;
        if ssr == 0.0 {
            converged = true;
            break;
        }
        let (h, g) = normal_equations(&r, &jac);
        let dmax = (0..P).map(|i| h[i][i]).fold(0.0, f64::max);
        if dmax == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda <= LAMBDA_MAX {
            let mut a = h;
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += lambda * h[i][i].max(1e-12 * dmax);
            }
            let step = cholesky_solve(&a, &g.map(|v| -v));
            let trial = step
                .map(|dx| std::array::from_fn(|i| x[i] + dx[i]))
                .and_then(&project)
                .and_then(|xt| eval(&xt).map(|(rt, jt)| (xt, rt, jt)));
            if let Some((xt, rt, jt)) = trial {
                let ssr_t = sum_sq(&rt);
                if ssr_t.is_finite() && ssr_t < ssr {
                    let improvement = (ssr - ssr_t) / ssr;
                    x = xt;
                    r = rt;
                    jac = jt;
                    ssr = ssr_t;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    if improvement < cfg.rel_tol {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no damping level yields descent: stationary to rounding
            converged = true;
        }
        if converged {
            break;
        }
    }
    Some(LmOutcome {
        x,
        ssr,
        iterations,
        converged,
    })
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn normal_equations<const P: usize>(r: &[f64], jac: &[[f64; P]]) -> ([[f64; P]; P], [f64; P]) {
    let mut h = [[0.0; P]; P];
    let mut g = [0.0; P];
    for (ri, row) in r.iter().zip(jac) {
        for i in 0..P {
            g[i] += row[i] * ri;
            for j in i..P {
                h[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..P {
        for j in 0..i {
            h[i][j] = h[j][i];
        }
    }
    (h, g)
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub(crate) fn cholesky_solve<const P: usize>(a: &[[f64; P]; P], b: &[f64; P]) -> Option<[f64; P]> {
    let mut l = [[0.0; P]; P];
    for i in 0..P {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    let mut y = [0.0; P];
    for i in 0..P {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = [0.0; P];
    for i in (0..P).rev() {
        let s: f64 = (i + 1..P).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
