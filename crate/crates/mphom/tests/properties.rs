use mphom::cellsolver::SolverSettings;
use mphom::darcy::{solve_darcy, FieldSpec, MacroProblem};
use mphom::factors::{compute_flow_factors, FactorRequest, FlowFactors};
use mphom::geometry::{build_cell_mask, CellGeometry, Dim, MacroDomain, ObstacleShape};
use mphom::linalg::sym_eigenvalues;
use mphom::params::RegimeParams;
use mphom::vtpm::phi;
use proptest::prelude::*;

fn factors(params: RegimeParams, shape: ObstacleShape, n: usize, m: usize) -> FlowFactors {
    compute_flow_factors(&FactorRequest {
        params,
        geometry: CellGeometry::new(shape, n, m),
        settings: SolverSettings::default(),
        estimate_error: false,
    })
    .unwrap()
}

#[test]
fn larger_obstacles_lower_both_permeability_eigenvalues() {
    let radii = [0.1, 0.15, 0.2, 0.25, 0.3, 0.35];
    let run = |name: &str, r: f64| {
        let disk = ObstacleShape::Disk { radius: r };
        match name {
            "htpm" => factors(RegimeParams::htpm(0.6, 0.1).unwrap(), disk, 32, 0),
            "vtpm" => factors(RegimeParams::vtpm(0.6, 0.1).unwrap(), disk, 32, 0),
            _ => factors(RegimeParams::ptpm(1.0, 0.6, 0.1).unwrap(), disk, 16, 8),
        }
    };
    for name in ["htpm", "vtpm", "ptpm"] {
        let ev: Vec<[f64; 2]> = radii.iter().map(|&r| sym_eigenvalues(run(name, r).k1)).collect();
        for (w, r) in ev.windows(2).zip(radii.windows(2)) {
            assert!(w[1][0] < w[0][0] && w[1][1] < w[0][1], "{name}: r {} -> {}: {:?} -> {:?}", r[0], r[1], w[0], w[1]);
        }
    }
}

fn k1_of(f: &FlowFactors) -> [f64; 4] {
    [f.k1[0][0], f.k1[0][1], f.k1[1][0], f.k1[1][1]]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn thin_film_permeability_scales_with_the_closure(n in 0.0f64..0.95, rc in 0.01f64..5.0) {
        let shape = ObstacleShape::Ellipse { a: 0.3, b: 0.2 };
        let base = factors(RegimeParams::vtpm(0.0, rc).unwrap(), shape, 24, 0);
        let f = factors(RegimeParams::vtpm(n, rc).unwrap(), shape, 24, 0);
        let ratio = 12.0 * phi(n, rc).unwrap() / (1.0 - n * n);
        let scale = base.k1[0][0].abs().max(base.k1[1][1].abs());
        for (a, b) in k1_of(&f).iter().zip(k1_of(&base)) {
            prop_assert!((a - ratio * b).abs() <= 1e-10 * ratio * scale, "{} vs {}", a, ratio * b);
        }
    }

    #[test]
    fn factor_json_round_trips_bitwise(n in 0.0f64..0.99, rc in 1e-3f64..10.0, r in 0.1f64..0.35) {
        let f = factors(RegimeParams::vtpm(n, rc).unwrap(), ObstacleShape::Disk { radius: r }, 12, 0);
        let back = FlowFactors::from_json(&f.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn masks_are_consistent_across_dimensions(r in 0.05f64..0.45, n in 8usize..40, m in 2usize..6) {
        let geom = CellGeometry::new(ObstacleShape::Disk { radius: r }, n, m);
        let flat = build_cell_mask(&geom, Dim::Two).unwrap();
        let slab = build_cell_mask(&geom, Dim::Three).unwrap();
        let p = flat.porosity();
        prop_assert!(p > 0.0 && p <= 1.0);
        prop_assert_eq!(p, slab.porosity());
        for level in slab.cells().chunks(n * n) {
            prop_assert_eq!(level, flat.cells());
        }
        // porosity of the staircase tracks the disk area to first order
        let area = 1.0 - std::f64::consts::PI * r * r;
        prop_assert!((p - area).abs() <= 8.0 * r / n as f64 + 1e-12);
    }

    #[test]
    fn darcy_flux_is_conservative_for_any_permeability(
        k11 in 0.01f64..1.0, k22 in 0.01f64..1.0, t in -0.9f64..0.9,
        fx in -1.0f64..1.0, amp in -1.0f64..1.0, shift in -5.0f64..5.0,
    ) {
        let k12 = t * (k11 * k22).sqrt();
        let mut ff = factors(RegimeParams::vtpm(0.5, 0.1).unwrap(), ObstacleShape::Disk { radius: 0.2 }, 12, 0);
        ff.k1 = [[k11, k12], [k12, k22]];
        let d = MacroDomain::new(1.5, 1.0, 18, 12).unwrap();
        let force = FieldSpec::Constant { x: fx, y: shift }.sample(&d).unwrap();
        let torque = FieldSpec::Vortex { amplitude: amp }.sample(&d).unwrap();
        let s = solve_darcy(&MacroProblem::new(d, force, torque, ff).unwrap(), 1e-12, 100_000).unwrap();
        prop_assert!(s.total_flux_divergence.abs() <= 1e-13);
        prop_assert!(s.boundary_flux_residual <= 1e-8);
        let mean = s.pressure.iter().sum::<f64>() / s.pressure.len() as f64;
        prop_assert!(mean.abs() <= 1e-12);
    }
}
