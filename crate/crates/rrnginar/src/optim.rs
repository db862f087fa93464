//! Derivative-free minimization (Nelder–Mead).

/// Outcome of one Nelder–Mead run.
#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Standard Nelder–Mead with reflection/expansion/contraction/shrink
/// coefficients (1, 2, 0.5, 0.5). Non-finite objective values are treated as
/// infinitely bad. Stops when the simplex f-spread falls below
/// `ftol * (1 + |f_best|)` or the evaluation budget is exhausted.
pub fn nelder_mead<F>(
    f: F,
    x0: &[f64],
    step: f64,
    max_eval: usize,
    ftol: f64,
) -> MinimizeResult
where
    F: Fn(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut evals = 0usize;
    let eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    if dim == 0 {
        let fv = eval(x0, &mut evals);
        return MinimizeResult { x: x0.to_vec(), f: fv, evaluations: evals, converged: true };
    }

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut p = x0.to_vec();
        p[i] += step;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(p, &mut evals)).collect();

    let mut converged = false;
    while evals < max_eval {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        let spread = values[worst] - values[best];
        if spread.is_finite() && spread <= ftol * (1.0 + values[best].abs()) {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; dim];
        for &i in order.iter().take(dim) {
            for (c, v) in centroid.iter_mut().zip(&simplex[i]) {
                *c += v;
            }
        }
        for c in centroid.iter_mut() {
            *c /= dim as f64;
        }

        let lerp = |from: &[f64], to: &[f64], t: f64| -> Vec<f64> {
            from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
        };

        // Reflection through the centroid.
        let reflected = lerp(&centroid, &simplex[worst], -1.0);
        let f_reflected = eval(&reflected, &mut evals);

        if f_reflected < values[best] {
            let expanded = lerp(&centroid, &simplex[worst], -2.0);
            let f_expanded = eval(&expanded, &mut evals);
            if f_expanded < f_reflected {
                simplex[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_reflected;
            }
        } else if f_reflected < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_reflected;
        } else {
            let (contracted, f_contracted) = if f_reflected < values[worst] {
                let c = lerp(&centroid, &reflected, 0.5);
                let fc = eval(&c, &mut evals);
                (c, fc)
            } else {
                let c = lerp(&centroid, &simplex[worst], 0.5);
                let fc = eval(&c, &mut evals);
                (c, fc)
            };
            if f_contracted < values[worst].min(f_reflected) {
                simplex[worst] = contracted;
                values[worst] = f_contracted;
            } else {
                // Shrink toward the best vertex.
                let best_point = simplex[best].clone();
                for i in 0..=dim {
                    if i == best {
                        continue;
                    }
                    simplex[i] = lerp(&best_point, &simplex[i], 0.5);
                    values[i] = eval(&simplex[i], &mut evals);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=dim {
        if values[i] < values[best] {
            best = i;
        }
    }
    MinimizeResult {
        x: simplex[best].clone(),
        f: values[best],
        evaluations: evals,
        converged,
    }
}
