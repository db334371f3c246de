//! Central finite-difference verification of analytic gradients.

use rand::Rng;

use super::graph::{Graph, NodeId};
use super::params::{Gradients, ParamId, ParamStore};
use crate::error::ModelError;

/// Denominator guard for the relative error.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checks: Vec<CoordinateCheck>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&CoordinateCheck> {
        self.checks
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn evaluate<F>(store: &ParamStore, loss: &F) -> Result<f64, ModelError>
where
    F: Fn(&mut Graph<'_>) -> NodeId,
{
    let mut graph = Graph::new(store);
    let out = loss(&mut graph);
    let v = graph.scalar(out);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ModelError::NonFinite("loss".into()))
    }
}

/// Loss value and analytic parameter gradients.
pub fn analytic_gradients<F>(store: &ParamStore, loss: &F) -> Result<(f64, Gradients), ModelError>
where
    F: Fn(&mut Graph<'_>) -> NodeId,
{
    let mut graph = Graph::new(store);
    let out = loss(&mut graph);
    let v = graph.scalar(out);
    if !v.is_finite() {
        return Err(ModelError::NonFinite("loss".into()));
    }
    Ok((v, graph.backward(out)))
}

/// Compares analytic gradients to `(L(θ+ε) − L(θ−ε)) / 2ε` at each listed
/// coordinate. `loss` must be deterministic: rebuild any rng from a fixed seed
/// inside the closure.
pub fn finite_difference_check<F>(
    store: &mut ParamStore,
    loss: F,
    coords: &[(ParamId, usize)],
    eps: f64,
) -> Result<GradCheckReport, ModelError>
where
    F: Fn(&mut Graph<'_>) -> NodeId,
{
    let (_, grads) = analytic_gradients(store, &loss)?;
    check_against(store, &loss, &grads, coords, eps)
}

fn check_against<F>(
    store: &mut ParamStore,
    loss: &F,
    grads: &Gradients,
    coords: &[(ParamId, usize)],
    eps: f64,
) -> Result<GradCheckReport, ModelError>
where
    F: Fn(&mut Graph<'_>) -> NodeId,
{
    let mut checks = Vec::with_capacity(coords.len());
    for &(id, index) in coords {
        let original = store.get(id).data()[index];
        store.get_mut(id).data_mut()[index] = original + eps;
        let plus = evaluate(store, loss);
        store.get_mut(id).data_mut()[index] = original - eps;
        let minus = evaluate(store, loss);
        store.get_mut(id).data_mut()[index] = original;
        let numeric = (plus? - minus?) / (2.0 * eps);
        let analytic = grads.at(id, index);
        checks.push(CoordinateCheck {
            param: store.get(id).name().to_string(),
            index,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
        });
    }
    let max_rel_error = checks.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        checks,
    })
}

/// Picks `count` coordinates: a uniformly random trainable parameter, then a
/// coordinate inside it, preferring coordinates with a nonzero analytic
/// gradient so sparse embedding tables are not checked only at untouched rows.
pub fn sample_coordinates<R: Rng + ?Sized>(
    store: &ParamStore,
    grads: &Gradients,
    count: usize,
    rng: &mut R,
) -> Vec<(ParamId, usize)> {
    let trainable: Vec<ParamId> = store
        .iter()
        .filter(|(_, p)| p.trainable())
        .map(|(id, _)| id)
        .collect();
    if trainable.is_empty() {
        return Vec::new();
    }
    (0..count)
        .map(|_| {
            let id = trainable[rng.gen_range(0..trainable.len())];
            let len = store.get(id).len();
            let active: Vec<usize> = grads
                .get(id)
                .map(|g| (0..len).filter(|&i| g[i] != 0.0).collect())
                .unwrap_or_default();
            let index = if active.is_empty() {
                rng.gen_range(0..len)
            } else {
                active[rng.gen_range(0..active.len())]
            };
            (id, index)
        })
        .collect()
}

/// Samples `count` coordinates and checks them.
pub fn check_random_coordinates<F, R>(
    store: &mut ParamStore,
    loss: F,
    count: usize,
    eps: f64,
    rng: &mut R,
) -> Result<GradCheckReport, ModelError>
where
    F: Fn(&mut Graph<'_>) -> NodeId,
    R: Rng + ?Sized,
{
    let (_, grads) = analytic_gradients(store, &loss)?;
    let coords = sample_coordinates(store, &grads, count, rng);
    check_against(store, &loss, &grads, &coords, eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_matches_exactly() {
        let mut store = ParamStore::new();
        let theta = store
            .add("theta", vec![4], vec![0.3, -1.2, 2.0, 0.05], true)
            .unwrap();
        let coords: Vec<_> = (0..4).map(|i| (theta, i)).collect();
        let report = finite_difference_check(
            &mut store,
            |g| {
                let t = g.param(theta);
                g.dot(t, t)
            },
            &coords,
            1e-4,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn zero_gradient_point() {
        // sigmoid(w·x)·(w·x) with w = 0 and a symmetric pair of inputs.
        let mut store = ParamStore::new();
        let w = store.zeros("w", vec![1, 2], true).unwrap();
        let coords = vec![(w, 0), (w, 1)];
        let report = finite_difference_check(
            &mut store,
            |g| {
                let a = g.input(vec![1.0, -1.0]);
                let b = g.input(vec![-1.0, 1.0]);
                let ya = g.matvec(w, a);
                let yb = g.matvec(w, b);
                let sa = g.sigmoid(ya);
                let sb = g.sigmoid(yb);
                g.sub(sa, sb)
            },
            &coords,
            1e-4,
        )
        .unwrap();
        for c in &report.checks {
            assert!(c.analytic.abs() < 1.0, "{c:?}");
            assert!((c.analytic - c.numeric).abs() < 1e-8, "{c:?}");
        }
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut store = ParamStore::new();
        let w = store.add("w", vec![1], vec![0.0], true).unwrap();
        let r = finite_difference_check(
            &mut store,
            |g| {
                let _ = g.param(w);
                g.input(vec![f64::NAN])
            },
            &[(w, 0)],
            1e-4,
        );
        assert!(matches!(r, Err(ModelError::NonFinite(_))));
    }
}
