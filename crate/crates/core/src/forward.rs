//! One-dimensional Darcy forward model.
//!
//! Solves `-(a p')' = g` on `[0, 1]` with `p(0) = p(1) = 0` through the
//! explicit flux representation
//!
//! ```text
//! G(x) = int_0^x g,    C = (int_0^1 G / a) / (int_0^1 1 / a),
//! p(x) = int_0^x (C - G(s)) / a(s) ds,
//! ```
//!
//! with every integral evaluated by the (cumulative) trapezoidal rule on a
//! uniform mesh, then observes `p` at equispaced points.

use crate::error::{Error, Result};
use crate::field::{BasisSpec, CoefficientVector, UniformFieldEvaluator};

/// Uniform mesh of `[0, 1]` with nodes `x_i = i / n_cells`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mesh {
    n_cells: usize,
}

impl Mesh {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::InvalidParameter(format!(
                "mesh needs at least 2 cells, got {n_cells}"
            )));
        }
        Ok(Self { n_cells })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.n_cells as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_cells).map(|i| self.node(i)).collect()
    }
}

/// Source `g` tabulated on mesh nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceTerm {
    g_values: Vec<f64>,
}

impl SourceTerm {
    pub fn new(g_values: Vec<f64>) -> Result<Self> {
        if let Some(v) = g_values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite source value {v}")));
        }
        Ok(Self { g_values })
    }

    /// `g = 1` on every node.
    pub fn unit(mesh: &Mesh) -> Self {
        Self {
            g_values: vec![1.0; mesh.n_nodes()],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.g_values
    }

    /// Cumulative trapezoid `G(x_i) = int_0^{x_i} g`.
    pub fn cumulative(&self, mesh: &Mesh) -> Result<Vec<f64>> {
        check_len(mesh, self.g_values.len())?;
        Ok(cumulative_trapezoid(&self.g_values, mesh.h()))
    }
}

/// Pressure on mesh nodes; both boundary values are exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PressureSolution {
    p_values: Vec<f64>,
}

impl PressureSolution {
    pub fn values(&self) -> &[f64] {
        &self.p_values
    }

    /// Piecewise-linear interpolant at `x` in `[0, 1]`.
    pub fn at(&self, x: f64) -> f64 {
        let n = self.p_values.len() - 1;
        let t = (x.clamp(0.0, 1.0)) * n as f64;
        let i = (t.floor() as usize).min(n - 1);
        let theta = t - i as f64;
        (1.0 - theta) * self.p_values[i] + theta * self.p_values[i + 1]
    }
}

/// Point evaluations at `x = i d` for `i = 0..=floor(1/d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationOperator {
    d: f64,
    locations: Vec<f64>,
}

impl ObservationOperator {
    pub fn new(d: f64) -> Result<Self> {
        if !(d > 0.0 && d <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "observation spacing must lie in (0, 1], got {d}"
            )));
        }
        // absorb representation error in 1/d for spacings such as 0.2
        let count = (1.0 / d + 1e-9).floor() as usize;
        let locations = (0..=count).map(|i| (i as f64 * d).min(1.0)).collect();
        Ok(Self { d, locations })
    }

    pub fn spacing(&self) -> f64 {
        self.d
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }
}

fn check_len(mesh: &Mesh, len: usize) -> Result<()> {
    if len != mesh.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_nodes(),
            found: len,
        });
    }
    Ok(())
}

fn cumulative_trapezoid(f: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in f.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

fn trapezoid(f: impl Iterator<Item = f64>, n: usize, h: f64) -> f64 {
    let mut sum = 0.0;
    for (i, v) in f.enumerate() {
        sum += if i == 0 || i == n { 0.5 * v } else { v };
    }
    sum * h
}

/// Trapezoidal flux-formula solve given `G = int_0^x g` on the nodes.
fn solve_with_cumulative(a: &[f64], g_cum: &[f64], mesh: &Mesh) -> Result<PressureSolution> {
    check_len(mesh, a.len())?;
    if let Some((node, &value)) = a.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveCoefficient { node, value });
    }
    let n = mesh.n_cells();
    let h = mesh.h();
    let inv_a: Vec<f64> = a.iter().map(|v| 1.0 / v).collect();
    let i0 = trapezoid(inv_a.iter().copied(), n, h);
    let i1 = trapezoid(g_cum.iter().zip(&inv_a).map(|(g, r)| g * r), n, h);
    let flux = i1 / i0;

    let integrand: Vec<f64> = g_cum
        .iter()
        .zip(&inv_a)
        .map(|(g, r)| (flux - g) * r)
        .collect();
    let mut p = cumulative_trapezoid(&integrand, h);
    let residual = p[n];
    for (i, v) in p.iter_mut().enumerate() {
        *v -= residual * i as f64 / n as f64;
    }
    p[0] = 0.0;
    p[n] = 0.0;
    Ok(PressureSolution { p_values: p })
}

/// Pressure for coefficient values `a` (one per node) and source `g`.
pub fn solve_pressure(a: &[f64], g: &SourceTerm, mesh: &Mesh) -> Result<PressureSolution> {
    let g_cum = g.cumulative(mesh)?;
    solve_with_cumulative(a, &g_cum, mesh)
}

/// Noiseless observation vector.
pub fn observe(p: &PressureSolution, obs: &ObservationOperator) -> Vec<f64> {
    obs.locations.iter().map(|&x| p.at(x)).collect()
}

/// Discrete flux `C - G(x_i)` at every node, for consistency checks.
pub fn discrete_flux(a: &[f64], g: &SourceTerm, mesh: &Mesh) -> Result<Vec<f64>> {
    let g_cum = g.cumulative(mesh)?;
    check_len(mesh, a.len())?;
    let n = mesh.n_cells();
    let h = mesh.h();
    let i0 = trapezoid(a.iter().map(|v| 1.0 / v), n, h);
    let i1 = trapezoid(g_cum.iter().zip(a).map(|(g, v)| g / v), n, h);
    Ok(g_cum.iter().map(|g| i1 / i0 - g).collect())
}

/// Complete forward map `u -> G(u)` with the mesh-level work cached.
#[derive(Clone, Debug)]
pub struct ForwardModel {
    evaluator: UniformFieldEvaluator,
    mesh: Mesh,
    source: SourceTerm,
    g_cum: Vec<f64>,
    obs: ObservationOperator,
}

impl ForwardModel {
    pub fn new(
        spec: BasisSpec,
        mesh: Mesh,
        source: SourceTerm,
        obs: ObservationOperator,
    ) -> Result<Self> {
        let g_cum = source.cumulative(&mesh)?;
        Ok(Self {
            evaluator: UniformFieldEvaluator::new(spec, mesh.n_cells()),
            mesh,
            source,
            g_cum,
            obs,
        })
    }

    pub fn spec(&self) -> &BasisSpec {
        self.evaluator.spec()
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn source(&self) -> &SourceTerm {
        &self.source
    }

    pub fn observation(&self) -> &ObservationOperator {
        &self.obs
    }

    /// `sup |int_0^x g|` over the mesh.
    pub fn source_cumulative_sup(&self) -> f64 {
        self.g_cum.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn field(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut a = Vec::with_capacity(self.mesh.n_nodes());
        self.evaluator.evaluate_into(u, &mut a)?;
        Ok(a)
    }

    pub fn pressure(&self, u: &[f64]) -> Result<PressureSolution> {
        solve_with_cumulative(&self.field(u)?, &self.g_cum, &self.mesh)
    }

    /// Forward map on an unchecked slice; callers guarantee `u` lies in the cube.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(observe(&self.pressure(u)?, &self.obs))
    }
}

/// `G(u) = observe(solve_pressure(a(u), g), obs)`.
pub fn forward_map(model: &ForwardModel, u: &CoefficientVector) -> Result<Vec<f64>> {
    model.apply(u.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{evaluate_field_on_mesh, sample_prior};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p_mid(a: &[f64], mesh: &Mesh) -> f64 {
        let p = solve_pressure(a, &SourceTerm::unit(mesh), mesh).unwrap();
        p.values()[mesh.n_cells() / 2]
    }

    /// Second-order finite differences for `-(a p')' = 1` with `a` sampled
    /// at cell midpoints; an independent route to the same solution.
    fn fd_oracle(a_mid: impl Fn(f64) -> f64, n: usize) -> Vec<f64> {
        let h = 1.0 / n as f64;
        let m = n - 1;
        let mut lower = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut rhs = vec![h * h; m];
        for k in 0..m {
            let i = k + 1;
            let aw = a_mid((i as f64 - 0.5) * h);
            let ae = a_mid((i as f64 + 0.5) * h);
            diag[k] = aw + ae;
            if k > 0 {
                lower[k] = -aw;
            }
            if k + 1 < m {
                upper[k] = -ae;
            }
        }
        // Thomas algorithm
        for k in 1..m {
            let w = lower[k] / diag[k - 1];
            diag[k] -= w * upper[k - 1];
            rhs[k] -= w * rhs[k - 1];
        }
        let mut x = vec![0.0; m];
        x[m - 1] = rhs[m - 1] / diag[m - 1];
        for k in (0..m - 1).rev() {
            x[k] = (rhs[k] - upper[k] * x[k + 1]) / diag[k];
        }
        let mut p = vec![0.0];
        p.extend(x);
        p.push(0.0);
        p
    }

    #[test]
    fn constant_coefficient_analytic() {
        let mesh = Mesh::new(4096).unwrap();
        assert!((p_mid(&vec![1.0; 4097], &mesh) - 0.125).abs() < 1e-7);
        assert!((p_mid(&vec![2.0; 4097], &mesh) - 0.0625).abs() < 1e-7);
        let p = solve_pressure(&vec![1.0; 4097], &SourceTerm::unit(&mesh), &mesh).unwrap();
        for (i, v) in p.values().iter().enumerate() {
            let x = mesh.node(i);
            assert!((v - x * (1.0 - x) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn piecewise_coefficient() {
        let mesh = Mesh::new(4096).unwrap();
        let a: Vec<f64> = mesh.nodes().iter().map(|&x| if x <= 0.5 { 1.0 } else { 2.0 }).collect();
        let p = p_mid(&a, &mesh);
        assert!((p - 1.0 / 12.0).abs() < 1e-5, "{p}");
        let fd = fd_oracle(|x| if x <= 0.5 { 1.0 } else { 2.0 }, 4096);
        assert!((fd[2048] - 1.0 / 12.0).abs() < 1e-5, "fd {}", fd[2048]);
    }

    #[test]
    fn matches_finite_difference_oracle_on_smooth_field() {
        let spec = BasisSpec::with_k(3);
        let u = sample_prior(&mut ChaCha8Rng::seed_from_u64(1), spec.dim());
        let mesh = Mesh::new(2048).unwrap();
        let a = evaluate_field_on_mesh(&spec, &u, &mesh.nodes()).unwrap();
        let p = solve_pressure(&a, &SourceTerm::unit(&mesh), &mesh).unwrap();
        let fd = fd_oracle(
            |x| crate::field::evaluate_field(&spec, &u, x).unwrap(),
            2048,
        );
        for (x, y) in p.values().iter().zip(&fd) {
            assert!((x - y).abs() < 1e-7);
        }
    }

    #[test]
    fn boundary_values_exact() {
        let mesh = Mesh::new(100).unwrap();
        let a: Vec<f64> = mesh.nodes().iter().map(|x| 1.5 + x.sin()).collect();
        let g = SourceTerm::new(mesh.nodes().iter().map(|x| 3.0 * x - 1.0).collect()).unwrap();
        let p = solve_pressure(&a, &g, &mesh).unwrap();
        assert_eq!(p.values()[0], 0.0);
        assert_eq!(p.values()[100], 0.0);
    }

    #[test]
    fn rejects_non_positive_coefficient() {
        let mesh = Mesh::new(4).unwrap();
        let a = vec![1.0, 1.0, 0.0, 1.0, 1.0];
        assert!(matches!(
            solve_pressure(&a, &SourceTerm::unit(&mesh), &mesh),
            Err(Error::NonPositiveCoefficient { node: 2, .. })
        ));
        assert!(Mesh::new(1).is_err());
    }

    #[test]
    fn scaling_in_coefficient() {
        let mesh = Mesh::new(512).unwrap();
        let a: Vec<f64> = mesh.nodes().iter().map(|x| 2.0 + (6.0 * x).cos()).collect();
        let g = SourceTerm::unit(&mesh);
        let p1 = solve_pressure(&a, &g, &mesh).unwrap();
        for c in [2.0, 3.5] {
            let scaled: Vec<f64> = a.iter().map(|v| c * v).collect();
            let p2 = solve_pressure(&scaled, &g, &mesh).unwrap();
            for (x, y) in p1.values().iter().zip(p2.values()) {
                assert!((x / c - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn flux_matches_midpoint_derivative() {
        let f = |x: f64| 2.0 + (2.0 * std::f64::consts::PI * x).sin();
        let mut errs = Vec::new();
        for n in [256, 512] {
            let mesh = Mesh::new(n).unwrap();
            let a: Vec<f64> = mesh.nodes().iter().map(|&x| f(x)).collect();
            let g = SourceTerm::unit(&mesh);
            let p = solve_pressure(&a, &g, &mesh).unwrap();
            let flux = discrete_flux(&a, &g, &mesh).unwrap();
            let h = mesh.h();
            let err = (0..n)
                .map(|i| {
                    let xm = (i as f64 + 0.5) * h;
                    let dp = (p.values()[i + 1] - p.values()[i]) / h;
                    let fm = 0.5 * (flux[i] + flux[i + 1]);
                    (f(xm) * dp - fm).abs()
                })
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[0] < 1e-4);
        let ratio = errs[0] / errs[1];
        assert!((3.0..5.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn richardson_ratio() {
        let f = |x: f64| 3.0 + (2.0 * std::f64::consts::PI * x).cos() + 0.5 * (6.0 * x).sin();
        let at_half = |n: usize| {
            let mesh = Mesh::new(n).unwrap();
            let a: Vec<f64> = mesh.nodes().iter().map(|&x| f(x)).collect();
            p_mid(&a, &mesh)
        };
        let reference = at_half(1 << 16);
        let e1 = (at_half(256) - reference).abs();
        let e2 = (at_half(512) - reference).abs();
        let ratio = e1 / e2;
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn observation_layout() {
        let mesh = Mesh::new(64).unwrap();
        let p = solve_pressure(&vec![1.0; 65], &SourceTerm::unit(&mesh), &mesh).unwrap();
        assert_eq!(observe(&p, &ObservationOperator::new(1.0).unwrap()), vec![0.0, 0.0]);
        let half = observe(&p, &ObservationOperator::new(0.5).unwrap());
        assert_eq!(half.len(), 3);
        assert!((half[1] - 0.125).abs() < 1e-12 && half[0] == 0.0 && half[2] == 0.0);
        assert_eq!(ObservationOperator::new(0.1).unwrap().len(), 11);
        assert_eq!(ObservationOperator::new(1.0 / 32.0).unwrap().len(), 33);
        assert_eq!(ObservationOperator::new(0.2).unwrap().len(), 6);
        assert_eq!(ObservationOperator::new(0.03).unwrap().len(), 34);
        assert!(ObservationOperator::new(0.0).is_err());
    }

    fn model(k: usize, n: usize, d: f64) -> ForwardModel {
        let mesh = Mesh::new(n).unwrap();
        ForwardModel::new(
            BasisSpec::with_k(k),
            mesh,
            SourceTerm::unit(&mesh),
            ObservationOperator::new(d).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn forward_at_prior_mean() {
        let m = model(5, 4096, 0.1);
        let y = forward_map(&m, &CoefficientVector::zeros(11)).unwrap();
        for (i, v) in y.iter().enumerate() {
            let x = m.observation().locations()[i];
            assert!((v - x * (1.0 - x) / 2.0 / 4.38).abs() < 1e-6);
        }
        assert_eq!(y, forward_map(&m, &CoefficientVector::zeros(11)).unwrap());
    }

    #[test]
    fn forward_converges_at_second_order() {
        let spec_k = 4;
        let u = sample_prior(&mut ChaCha8Rng::seed_from_u64(21), 2 * spec_k + 1);
        let reference = forward_map(&model(spec_k, 1 << 15, 1.0 / 32.0), &u).unwrap();
        let err = |n| {
            let y = forward_map(&model(spec_k, n, 1.0 / 32.0), &u).unwrap();
            y.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let ratio = err(1024) / err(2048);
        assert!((3.2..=4.8).contains(&ratio), "{ratio}");
    }
}
