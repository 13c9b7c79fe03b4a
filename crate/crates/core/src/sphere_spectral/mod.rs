//! Band-limited scalar and tensor calculus on the round unit sphere
//! `(S², ĝ)`.
//!
//! Scalars of degree at most the bandlimit `L` are differentiated exactly
//! through Legendre derivative tables. Tensor fields are differentiated by
//! embedding: every Cartesian component of a tangential tensor is a smooth
//! scalar that is analysed up to the grid's extended degree (about `3L/2`),
//! differentiated spectrally and projected back onto the frame.

mod fields;
mod grid;
mod snapshot;

pub use fields::{flat_index, unflatten, CovectorField, Direction, FrameTensor, ScalarField, SymTensor2Field};
pub use grid::{coeff_index, coeff_len, evaluate_expansion, gauss_legendre, DerivativeBundle, SphereGrid};
pub use snapshot::{parse_snapshot, snapshot_to_string, Snapshot};

use crate::error::Result;

/// Convert a field between grid and spectral representation.
pub fn transform(f: &ScalarField, direction: Direction) -> Result<ScalarField> {
    f.transform(direction)
}

/// `∫ f dμ̂` over the unit sphere.
pub fn integrate(f: &ScalarField) -> f64 {
    f.integrate()
}

/// Orthonormal-frame gradient `(∂_θ f, ∂_φ f / sin θ)`.
pub fn grad(f: &ScalarField) -> Result<CovectorField> {
    f.grad()
}

/// Round Laplacian, `Δ̂Y_{lm} = −l(l+1)Y_{lm}`.
pub fn laplace_round(f: &ScalarField) -> Result<ScalarField> {
    f.laplace_round()
}

/// Covariant Hessian with respect to `ĝ` in the orthonormal frame.
pub fn hess_round(f: &ScalarField) -> Result<SymTensor2Field> {
    f.hess_round()
}

/// Seeded random band-limited field `Σ_{1 ≤ l ≤ degree} c_{lm} Y_{lm}` with
/// `c_{lm}` uniform in `[−amplitude, amplitude] / l²`.
pub fn random_band_limited(
    grid: &std::sync::Arc<SphereGrid>,
    degree: usize,
    amplitude: f64,
    seed: u64,
) -> Result<ScalarField> {
    use rand::{Rng, SeedableRng};
    if degree > grid.bandlimit() {
        return Err(crate::error::Error::InvalidArgument(format!(
            "degree {degree} exceeds bandlimit {}",
            grid.bandlimit()
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = vec![0.0; coeff_len(degree)];
    for l in 1..=degree {
        for m in -(l as i64)..=(l as i64) {
            coeffs[coeff_index(l, m)] = amplitude * rng.gen_range(-1.0..1.0) / (l * l) as f64;
        }
    }
    ScalarField::from_coeffs(grid, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn random_coeffs(degree: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..coeff_len(degree)).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Independent oracle: composite Simpson rule in `z = cos θ` for an
    /// axisymmetric integrand, `∫ f dμ̂ = 2π ∫_{-1}^{1} f(z) dz`.
    fn simpson_axisymmetric(f: impl Fn(f64) -> f64, n: usize) -> f64 {
        let h = 2.0 / n as f64;
        let mut s = f(-1.0) + f(1.0);
        for i in 1..n {
            let z = -1.0 + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(z);
        }
        2.0 * PI * s * h / 3.0
    }

    #[test]
    fn grid_sizes_and_no_poles() {
        let g = SphereGrid::new(16).unwrap();
        assert_eq!(g.n_theta(), 25);
        assert_eq!(g.n_phi(), 49);
        assert_eq!(SphereGrid::new(32).unwrap().n_phi(), 98);
        assert_eq!(SphereGrid::new(6).unwrap().n_phi(), 20);
        assert!(g.sin_theta().iter().all(|&s| s > 0.0));
        assert!(g.theta().windows(2).all(|w| w[0] < w[1]));
        assert!(SphereGrid::with_size(16, 24, 49).is_err());
        assert!(SphereGrid::new(0).is_err());
    }

    #[test]
    fn constant_has_single_degree_zero_coefficient() {
        let g = SphereGrid::new(8).unwrap();
        let f = ScalarField::from_values(&g, vec![1.0; g.len()]).unwrap();
        let c = f.spectral().unwrap();
        assert_abs_diff_eq!(c[0], (4.0 * PI).sqrt(), epsilon = 1e-13);
        assert_abs_diff_eq!(c[0], 3.5449077, epsilon = 1e-7);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn round_trip_band_limited() {
        let g = SphereGrid::new(24).unwrap();
        let c = random_coeffs(24, 1);
        let values = g.synthesize(&c).unwrap();
        let back = g.analyze(&values, 24).unwrap();
        let err = c.iter().zip(&back).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(err < 1e-12, "coefficient round trip error {err}");
        let f = ScalarField::from_values(&g, values.clone()).unwrap();
        let again = f.transform(Direction::ToSpectral).unwrap().transform(Direction::ToGrid).unwrap();
        let scale = f.max_abs();
        let err = values.iter().zip(again.values()).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(err <= 1e-12 * scale);
    }

    #[test]
    fn round_trip_half_bandlimit_checked_at_doubled_resolution() {
        let g = SphereGrid::new(32).unwrap();
        let g2 = SphereGrid::new(64).unwrap();
        let c = random_coeffs(16, 7);
        let f = g.synthesize(&c).unwrap();
        let back = g.synthesize(&g.analyze(&f, 32).unwrap()).unwrap();
        let scale = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let err = f.iter().zip(&back).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(err <= 1e-12 * scale);
        let f2 = g2.synthesize(&c).unwrap();
        let c2 = g2.analyze(&f2, 16).unwrap();
        let err = c.iter().zip(&c2).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(err < 1e-12);
    }

    #[test]
    fn quadrature_orthonormality() {
        let l = 10;
        let g = SphereGrid::new(l).unwrap();
        let n = coeff_len(l);
        let fields: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut c = vec![0.0; n];
                c[i] = 1.0;
                g.synthesize(&c).unwrap()
            })
            .collect();
        for i in 0..n {
            for j in 0..n {
                let prod: Vec<f64> = fields[i].iter().zip(&fields[j]).map(|(a, b)| a * b).collect();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(g.integrate(&prod), expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn integrate_examples() {
        let g = SphereGrid::new(16).unwrap();
        let one = ScalarField::constant(&g, 1.0);
        assert_abs_diff_eq!(integrate(&one), 4.0 * PI, epsilon = 1e-12);
        let z2 = ScalarField::from_fn(&g, |x| x[2] * x[2]);
        assert_abs_diff_eq!(integrate(&z2), 4.0 * PI / 3.0, epsilon = 1e-12);
        let gamma = 1.25f64.sqrt();
        let b2 = |z: f64| 1.0 / (gamma - 0.5 * z).powi(2);
        let oracle = simpson_axisymmetric(b2, 20_000);
        let f = ScalarField::from_fn(&g, |x| b2(x[2]));
        assert_abs_diff_eq!(integrate(&f), oracle, epsilon = 1e-10);
        assert_abs_diff_eq!(integrate(&f), 4.0 * PI, epsilon = 1e-10);
    }

    #[test]
    fn grad_examples() {
        let g = SphereGrid::new(12).unwrap();
        let z = ScalarField::harmonic(&g, 1, 0, (4.0 * PI / 3.0).sqrt()).unwrap();
        for k in 0..g.len() {
            assert_abs_diff_eq!(z.values()[k], g.position(k)[2], epsilon = 1e-13);
        }
        let d = grad(&z).unwrap();
        for k in 0..g.len() {
            assert_abs_diff_eq!(d.comps()[0][k], -g.sin_at(k), epsilon = 1e-13);
            assert_abs_diff_eq!(d.comps()[1][k], 0.0, epsilon = 1e-13);
        }
        let c = grad(&ScalarField::constant(&g, 3.0)).unwrap();
        assert!(c.max_norm() < 1e-13);
        for l in 0..=12 {
            for m in -(l as i64)..=(l as i64) {
                let y = ScalarField::harmonic(&g, l, m, 1.0).unwrap();
                let gy = grad(&y).unwrap();
                let dirichlet = g.integrate(&gy.norm_sq());
                let lap = laplace_round(&y).unwrap();
                let by_parts: Vec<f64> = y.values().iter().zip(lap.values()).map(|(a, b)| -a * b).collect();
                assert_abs_diff_eq!(dirichlet, (l * (l + 1)) as f64, epsilon = 1e-10);
                assert_abs_diff_eq!(dirichlet, g.integrate(&by_parts), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn laplace_examples() {
        let g = SphereGrid::new(10).unwrap();
        for m in -2..=2 {
            let y = ScalarField::harmonic(&g, 2, m, 1.0).unwrap();
            let l = laplace_round(&y).unwrap();
            for (a, b) in l.values().iter().zip(y.values()) {
                assert_abs_diff_eq!(*a, -6.0 * b, epsilon = 1e-12);
            }
        }
        let c = laplace_round(&ScalarField::constant(&g, 2.0)).unwrap();
        assert!(c.max_abs() < 1e-13);
        let f = ScalarField::from_coeffs(&g, random_coeffs(10, 3)).unwrap();
        let lf = laplace_round(&f).unwrap();
        assert!(integrate(&lf).abs() <= 1e-12 * f.max_abs() * 4.0 * PI);
    }

    #[test]
    fn hessian_examples() {
        let g = SphereGrid::new(16).unwrap();
        let z = ScalarField::harmonic(&g, 1, 0, (4.0 * PI / 3.0).sqrt()).unwrap();
        let h = hess_round(&z).unwrap();
        for k in 0..g.len() {
            let ct = g.position(k)[2];
            assert_abs_diff_eq!(h.comps()[0][k], -ct, epsilon = 1e-12);
            assert_abs_diff_eq!(h.comps()[1][k], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(h.comps()[2][k], -ct, epsilon = 1e-12);
        }
        let gamma = 1.25f64.sqrt();
        let inv_b = ScalarField::from_fn(&g, |x| gamma - 0.5 * x[2]).band_limited().unwrap();
        let h = hess_round(&inv_b).unwrap();
        let top = 0;
        let ax = 0.5 * g.position(top)[2];
        assert_abs_diff_eq!(h.comps()[0][top], ax, epsilon = 1e-12);
        assert_abs_diff_eq!(h.comps()[2][top], ax, epsilon = 1e-12);
        assert!((ax - 0.5).abs() < 1e-2, "first ring sits near the north pole");
        let f = ScalarField::from_coeffs(&g, random_coeffs(16, 5)).unwrap();
        let h = hess_round(&f).unwrap();
        let lap = laplace_round(&f).unwrap();
        let scale = f.max_abs();
        for (t, l) in h.trace().iter().zip(lap.values()) {
            assert!((t - l).abs() <= 1e-11 * scale * 300.0);
        }
    }

    #[test]
    fn tensor_derivative_of_gradient_is_hessian() {
        let g = SphereGrid::new(16).unwrap();
        let f = ScalarField::from_coeffs(&g, random_coeffs(16, 11)).unwrap();
        let dd = f.grad().unwrap().to_tensor().covariant_derivative_round().unwrap();
        let h = f.hess_round().unwrap();
        let scale = h.comps()[0].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let pairs = [(0usize, 0usize, 0usize), (1, 0, 1), (2, 1, 0), (3, 1, 1)];
        for (flat, i, j) in pairs {
            let expected = match (i, j) {
                (0, 0) => &h.comps()[0],
                (1, 1) => &h.comps()[2],
                _ => &h.comps()[1],
            };
            let err = dd.comps()[flat].iter().zip(expected).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(err < 1e-10 * scale, "component {flat}: {err}");
        }
    }

    #[test]
    fn conformal_metric_is_parallel() {
        let g = SphereGrid::new(16).unwrap();
        let mut c = vec![0.0; coeff_len(4)];
        c[0] = 20.0 * (4.0 * PI).sqrt();
        c[coeff_index(2, 1)] = 0.4;
        c[coeff_index(3, -2)] = 0.3;
        let omega = ScalarField::from_coeffs(&g, c).unwrap();
        let u = omega.map(f64::ln);
        let du = u.grad().unwrap();
        let w2: Vec<f64> = omega.values().iter().map(|w| w * w).collect();
        let mut metric = FrameTensor::zero(&g, 2);
        metric.comps_mut()[0] = w2.clone();
        metric.comps_mut()[3] = w2;
        let d = metric.covariant_derivative_conformal(&du).unwrap();
        assert!(d.max_abs() < 1e-9 * 400.0, "{}", d.max_abs());
    }

    #[test]
    fn point_evaluation_matches_grid() {
        let g = SphereGrid::new(12).unwrap();
        let c = random_coeffs(12, 2);
        let v = g.synthesize(&c).unwrap();
        for k in (0..g.len()).step_by(37) {
            assert_abs_diff_eq!(g.evaluate_at(&c, g.position(k)).unwrap(), v[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let g = SphereGrid::new(6).unwrap();
        let f = ScalarField::from_coeffs(&g, random_coeffs(6, 9)).unwrap();
        let text = snapshot_to_string(&f);
        assert!(text.starts_with("# SPHEREFIELD 1\n# bandlimit: 6\n# ntheta: 10\n# nphi: 20\n# ordering:"));
        let snap = parse_snapshot(&text).unwrap();
        let back = snap.into_field(&g).unwrap();
        assert_eq!(back.values(), f.values());
        assert!(parse_snapshot("# SPHEREFIELD 2\n").is_err());
    }

    #[test]
    fn mismatched_grids_rejected() {
        let g1 = SphereGrid::new(6).unwrap();
        let g2 = SphereGrid::new(8).unwrap();
        let a = ScalarField::constant(&g1, 1.0);
        let b = ScalarField::constant(&g2, 1.0);
        assert!(a.axpby(1.0, &b, 1.0).is_err());
        assert!(ScalarField::from_values(&g1, vec![0.0; 3]).is_err());
        assert!(g1.analyze(&vec![0.0; g1.len()], 100).is_err());
    }

    fn grid_for_props() -> Arc<SphereGrid> {
        SphereGrid::new(8).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn prop_transform_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let g = grid_for_props();
            let c1 = random_coeffs(8, seed);
            let c2 = random_coeffs(8, seed + 1);
            let v1 = g.synthesize(&c1).unwrap();
            let v2 = g.synthesize(&c2).unwrap();
            let combo: Vec<f64> = v1.iter().zip(&v2).map(|(x, y)| a * x + b * y).collect();
            let cc = g.analyze(&combo, 8).unwrap();
            for i in 0..cc.len() {
                prop_assert!((cc[i] - (a * c1[i] + b * c2[i])).abs() < 1e-11);
            }
        }

        #[test]
        fn prop_gauss_bonnet_spectral(seed in 0u64..1000) {
            let g = grid_for_props();
            let f = ScalarField::from_coeffs(&g, random_coeffs(8, seed)).unwrap();
            let lap = f.laplace_round().unwrap();
            prop_assert!(lap.integrate().abs() <= 1e-12 * f.max_abs() * 4.0 * PI);
        }

        #[test]
        fn prop_gradient_commutes_with_spectral_recurrences(seed in 0u64..1000) {
            let g = grid_for_props();
            let f = ScalarField::from_coeffs(&g, random_coeffs(8, seed)).unwrap();
            let d = f.grad().unwrap();
            let dd = d.to_tensor().covariant_derivative_round().unwrap();
            let trace: Vec<f64> = (0..g.len()).map(|k| dd.comps()[0][k] + dd.comps()[3][k]).collect();
            let lap = f.laplace_round().unwrap();
            let scale = lap.max_abs().max(1.0);
            for (t, l) in trace.iter().zip(lap.values()) {
                prop_assert!((t - l).abs() < 1e-11 * scale * 10.0);
            }
        }

        #[test]
        fn prop_sym_tensor_trace_is_diagonal_sum(seed in 0u64..1000) {
            let g = grid_for_props();
            let f = ScalarField::from_coeffs(&g, random_coeffs(8, seed)).unwrap();
            let h = f.hess_round().unwrap();
            let t = h.trace();
            for k in 0..g.len() {
                prop_assert_eq!(t[k], h.comps()[0][k] + h.comps()[2][k]);
                prop_assert!(h.comps()[1][k].is_finite());
            }
        }
    }
}
