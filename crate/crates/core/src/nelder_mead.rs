//! Adaptive Nelder-Mead simplex search (dimension-dependent coefficients).

pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Stopped on the evaluation budget rather than the spread criterion.
    pub exhausted: bool,
}

pub(crate) struct Settings {
    /// Initial simplex edge along each coordinate.
    pub step: f64,
    /// Stop once `f(worst) - f(best)` falls to this value.
    pub spread_tolerance: f64,
    pub max_evaluations: usize,
}

/// Minimizes `f` from `start`. The best vertex value never increases.
pub(crate) fn minimize<F>(f: &mut F, start: &[f64], settings: &Settings) -> Outcome
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    let nf = n as f64;
    let reflect = 1.0;
    let expand = 1.0 + 2.0 / nf;
    let contract = 0.75 - 0.5 / nf;
    let shrink = 1.0 - 1.0 / nf;

    let mut evaluations = 0usize;
    let mut eval = |x: &[f64], count: &mut usize| {
        *count += 1;
        f(x)
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), eval(start, &mut evaluations)));
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += settings.step;
        let v = eval(&x, &mut evaluations);
        simplex.push((x, v));
    }

    let mut exhausted = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if worst - best <= settings.spread_tolerance {
            break;
        }
        if evaluations >= settings.max_evaluations {
            exhausted = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(reflect);
        let fr = eval(&xr, &mut evaluations);
        if fr < best {
            let xe = along(reflect * expand);
            let fe = eval(&xe, &mut evaluations);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = along(reflect * contract);
            let fc = eval(&xc, &mut evaluations);
            (xc, fc)
        } else {
            let xc = along(-contract);
            let fc = eval(&xc, &mut evaluations);
            (xc, fc)
        };
        if fc < worst.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }

        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = anchor
                .iter()
                .zip(&vertex.0)
                .map(|(a, v)| a + shrink * (v - a))
                .collect();
            let v = eval(&x, &mut evaluations);
            *vertex = (x, v);
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Outcome {
        x,
        value,
        evaluations,
        exhausted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_rosenbrock_minimum() {
        let mut f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let out = minimize(
            &mut f,
            &[-1.2, 1.0],
            &Settings {
                step: 0.5,
                spread_tolerance: 1e-16,
                max_evaluations: 5_000,
            },
        );
        assert!(!out.exhausted);
        assert!((out.x[0] - 1.0).abs() < 1e-4 && (out.x[1] - 1.0).abs() < 1e-4, "{:?}", out.x);
    }

    #[test]
    fn respects_budget() {
        let mut f = |x: &[f64]| x.iter().map(|v| v.abs().sqrt()).sum::<f64>();
        let out = minimize(
            &mut f,
            &[3.0; 6],
            &Settings {
                step: 1.0,
                spread_tolerance: 0.0,
                max_evaluations: 200,
            },
        );
        assert!(out.exhausted);
        // the budget check runs once per iteration, which may cost up to n + 2 evaluations
        assert!(out.evaluations <= 200 + 8);
    }
}
