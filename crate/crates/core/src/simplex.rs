//! Nelder–Mead simplex descent.

#[derive(Clone, Copy, Debug)]
pub(crate) struct SimplexOptions {
    pub initial_step: f64,
    /// Stop once every vertex is within this distance (max-norm) of the best.
    pub xtol: f64,
    /// Stop once the vertex values span at most this much.
    pub ftol: f64,
    pub max_evals: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct SimplexOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimises `f` from `x0`, whose value `f0` is already known. Never returns
/// a point worse than `x0`.
pub(crate) fn nelder_mead<F>(mut f: F, x0: &[f64], f0: f64, opts: &SimplexOptions) -> SimplexOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    if n == 0 || opts.max_evals == 0 {
        return SimplexOutcome { x: x0.to_vec(), f: f0, evals };
    }

    let mut vertices: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut values: Vec<f64> = Vec::with_capacity(n + 1);
    vertices.push(x0.to_vec());
    values.push(f0);
    for i in 0..n {
        if evals >= opts.max_evals {
            break;
        }
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        values.push(f(&v));
        evals += 1;
        vertices.push(v);
    }
    if vertices.len() < n + 1 {
        return best_of(vertices, values, evals);
    }

    let mut order: Vec<usize> = (0..=n).collect();
    let mut centroid = vec![0.0; n];
    let trial = |c: &[f64], worst: &[f64], coef: f64| -> Vec<f64> {
        c.iter().zip(worst).map(|(ci, wi)| ci + coef * (ci - wi)).collect()
    };

    while evals < opts.max_evals {
        // ties resolved by vertex index so runs are reproducible
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let (best, worst, second) = (order[0], order[n], order[n - 1]);

        let spread = values[worst] - values[best];
        let diameter = vertices
            .iter()
            .flat_map(|v| v.iter().zip(&vertices[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if diameter <= opts.xtol || spread <= opts.ftol {
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &i in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&vertices[i]) {
                *c += v / n as f64;
            }
        }

        let reflected = trial(&centroid, &vertices[worst], REFLECT);
        let fr = f(&reflected);
        evals += 1;

        if fr < values[best] {
            if evals < opts.max_evals {
                let expanded = trial(&centroid, &vertices[worst], EXPAND);
                let fe = f(&expanded);
                evals += 1;
                if fe < fr {
                    vertices[worst] = expanded;
                    values[worst] = fe;
                    continue;
                }
            }
            vertices[worst] = reflected;
            values[worst] = fr;
            continue;
        }
        if fr < values[second] {
            vertices[worst] = reflected;
            values[worst] = fr;
            continue;
        }
        if evals >= opts.max_evals {
            break;
        }

        // contract towards the better of the worst vertex and its reflection
        let (toward, f_ref) = if fr < values[worst] {
            (reflected, fr)
        } else {
            (vertices[worst].clone(), values[worst])
        };
        let contracted = trial(&centroid, &toward, -CONTRACT);
        let fc = f(&contracted);
        evals += 1;
        if fc < f_ref {
            vertices[worst] = contracted;
            values[worst] = fc;
            continue;
        }

        let anchor = vertices[best].clone();
        for &i in &order[1..] {
            if evals >= opts.max_evals {
                break;
            }
            for (v, a) in vertices[i].iter_mut().zip(&anchor) {
                *v = a + SHRINK * (*v - a);
            }
            values[i] = f(&vertices[i]);
            evals += 1;
        }
    }
    best_of(vertices, values, evals)
}

fn best_of(vertices: Vec<Vec<f64>>, values: Vec<f64>, evals: usize) -> SimplexOutcome {
    let best = (0..values.len())
        .min_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)))
        .unwrap_or(0);
    SimplexOutcome {
        x: vertices[best].clone(),
        f: values[best],
        evals,
    }
}
