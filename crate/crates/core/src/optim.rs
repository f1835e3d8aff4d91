//! Small unconstrained minimisers: Nelder-Mead simplex and BFGS.
//!
//! Objectives may return `+inf` for infeasible points; both methods treat that
//! as "worse than anything finite".

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct NelderMead {
    pub max_iter: usize,
    /// Stop once `max f − min f` over the simplex falls below this.
    pub f_tol: f64,
    /// ... and every vertex is within this distance of the best one.
    pub x_tol: f64,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self { max_iter: 4000, f_tol: 1e-10, x_tol: 1e-8, initial_step: 0.5 }
    }
}

fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

impl NelderMead {
    pub fn minimize<F: Fn(&[f64]) -> f64>(&self, f: F, x0: &[f64]) -> Minimum {
        let n = x0.len();
        let eval = |x: &[f64]| sanitize(f(x));
        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        simplex.push(x0.to_vec());
        for i in 0..n {
            let mut v = x0.to_vec();
            v[i] += self.initial_step;
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

        let (alpha, gamma, rho, shrink) = (1.0, 2.0, 0.5, 0.5);
        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.max_iter {
            // stable sort keeps ties in vertex order, so runs are deterministic
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let spread = values[n] - values[0];
            let size = simplex[1..]
                .iter()
                .map(|v| dist(v, &simplex[0]))
                .fold(0.0, f64::max);
            if values[0].is_finite() && spread <= self.f_tol && size <= self.x_tol {
                converged = true;
                break;
            }
            if values[0].is_finite() && spread <= self.f_tol * 1e-2 {
                converged = true;
                break;
            }
            iterations += 1;

            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
                .collect();
            let toward = |coef: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n])
                    .map(|(c, w)| c + coef * (c - w))
                    .collect()
            };

            let xr = toward(alpha);
            let fr = eval(&xr);
            if fr < values[0] {
                let xe = toward(gamma);
                let fe = eval(&xe);
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
                let xc = toward(rho);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = toward(-rho);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
                continue;
            }
            let best = simplex[0].clone();
            for i in 1..=n {
                for j in 0..n {
                    simplex[i][j] = best[j] + shrink * (simplex[i][j] - best[j]);
                }
                values[i] = eval(&simplex[i]);
            }
        }
        let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
        Minimum { x: simplex[best].clone(), f: values[best], iterations, converged }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Quasi-Newton minimiser with a backtracking Armijo line search.
#[derive(Debug, Clone)]
pub struct Bfgs {
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for Bfgs {
    fn default() -> Self {
        Self { max_iter: 500, grad_tol: 1e-7 }
    }
}

impl Bfgs {
    /// `fg` returns the objective and its gradient.
    pub fn minimize<F>(&self, fg: F, x0: &[f64]) -> Minimum
    where
        F: Fn(&[f64]) -> (f64, Vec<f64>),
    {
        let n = x0.len();
        let mut x = x0.to_vec();
        let (mut fx, mut gx) = fg(&x);
        fx = sanitize(fx);
        if !fx.is_finite() || gx.iter().any(|g| !g.is_finite()) {
            return Minimum { x, f: fx, iterations: 0, converged: false };
        }
        // inverse Hessian approximation
        let mut h = identity(n);
        let mut iterations = 0;
        let mut converged = norm(&gx) < self.grad_tol;
        while !converged && iterations < self.max_iter {
            iterations += 1;
            let mut p: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| h[i][j] * gx[j]).sum::<f64>()).collect();
            let mut slope: f64 = p.iter().zip(&gx).map(|(a, b)| a * b).sum();
            if slope >= 0.0 {
                // not a descent direction; fall back to steepest descent
                h = identity(n);
                p = gx.iter().map(|g| -g).collect();
                slope = -norm(&gx).powi(2);
            }
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let xn: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + step * b).collect();
                let (fnew, gnew) = fg(&xn);
                let fnew = sanitize(fnew);
                if fnew.is_finite() && fnew <= fx + 1e-4 * step * slope && gnew.iter().all(|g| g.is_finite()) {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
                step *= 0.5;
            }
            let Some((xn, fnew, gnew)) = accepted else {
                break;
            };
            let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = gnew.iter().zip(&gx).map(|(a, b)| a - b).collect();
            let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
            if sy > 1e-12 * norm(&s) * norm(&yv) {
                let rho = 1.0 / sy;
                let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * yv[j]).sum()).collect();
                let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
                for i in 0..n {
                    for j in 0..n {
                        h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                    }
                }
            }
            let progress = fx - fnew;
            x = xn;
            fx = fnew;
            gx = gnew;
            converged = norm(&gx) < self.grad_tol;
            if !converged && progress <= f64::EPSILON * fx.abs() && norm(&s) <= 1e-14 {
                break;
            }
        }
        Minimum { x, f: fx, iterations, converged }
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    fn rosenbrock_grad(x: &[f64]) -> (f64, Vec<f64>) {
        let g0 = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
        let g1 = 200.0 * (x[1] - x[0] * x[0]);
        (rosenbrock(x), vec![g0, g1])
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let m = NelderMead { f_tol: 1e-14, x_tol: 1e-10, ..Default::default() }.minimize(rosenbrock, &[-1.2, 1.0]);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn nelder_mead_handles_infeasible_region() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::INFINITY } else { (x[0] - 2.0).powi(2) + x[1].powi(2) };
        let m = NelderMead::default().minimize(f, &[0.1, 0.3]);
        assert!((m.x[0] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn bfgs_rosenbrock() {
        let m = Bfgs::default().minimize(rosenbrock_grad, &[-1.2, 1.0]);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bfgs_quadratic_converges_fast() {
        let fg = |x: &[f64]| {
            let f = 3.0 * (x[0] - 1.0).powi(2) + 0.5 * (x[1] + 2.0).powi(2) + (x[0] - 1.0) * (x[1] + 2.0);
            let g = vec![6.0 * (x[0] - 1.0) + (x[1] + 2.0), (x[1] + 2.0) + (x[0] - 1.0)];
            (f, g)
        };
        let m = Bfgs::default().minimize(fg, &[5.0, 5.0]);
        assert!(m.converged);
        assert!(m.iterations < 20);
        assert!((m.x[0] - 1.0).abs() < 1e-7 && (m.x[1] + 2.0).abs() < 1e-7);
    }
}
