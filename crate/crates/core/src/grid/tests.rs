use super::io::{decode_field, encode_field};
use super::*;
use crate::dynamics::SystemParams;
use crate::seed;
use rand::Rng;

fn linear_field() -> ValueField {
    let sys = SystemSpec::air3d();
    let grid = Grid::uniform(&sys, 5).unwrap();
    let slice: Vec<f64> = grid.nodes().map(|x| 2.0 * x[0] - x[1] + 0.5 * x[2]).collect();
    let later: Vec<f64> = slice.iter().map(|v| v + 1.0).collect();
    ValueField { grid, system: sys, times: vec![0.0, 1.0], slices: vec![slice, later] }
}

#[test]
fn grid_validation() {
    assert!(Grid::new(vec![2, 5], vec![[0.0, 1.0]; 2], vec![false; 2]).is_err());
    assert!(Grid::new(vec![5, 5], vec![[1.0, 0.0], [0.0, 1.0]], vec![false; 2]).is_err());
    assert!(Grid::new(vec![5], vec![[0.0, 1.0]; 2], vec![false; 2]).is_err());
    let g = Grid::new(vec![5, 4], vec![[0.0, 1.0], [0.0, 1.0]], vec![false, true]).unwrap();
    assert_eq!(g.spacing(0), 0.25);
    assert_eq!(g.spacing(1), 0.25);
    assert_eq!(g.len(), 20);
    assert_eq!(g.strides(), vec![4, 1]);
    assert_eq!(g.multi_index(7), vec![1, 3]);
    assert!(Grid::uniform(&SystemSpec::particle(), 3).is_ok());
    assert!(Grid::for_system(&SystemSpec::particle(), &[3, 3]).is_err());
}

#[test]
fn node_queries_are_bit_exact() {
    let field = linear_field();
    let mut rng = seed::rng(1);
    for _ in 0..100 {
        let flat = rng.random_range(0..field.grid.len());
        let x = field.grid.node(flat);
        assert_eq!(field.sample_value(0.0, &x).unwrap(), field.slices[0][flat]);
        assert_eq!(field.sample_value(1.0, &x).unwrap(), field.slices[1][flat]);
    }
}

#[test]
fn midpoints_average_linear_slices() {
    let field = linear_field();
    let a = field.grid.node(6);
    let b = field.grid.node(7);
    let mid: Vec<f64> = a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect();
    let v = field.sample_value(0.0, &mid).unwrap();
    let mean = 0.5 * (field.slices[0][6] + field.slices[0][7]);
    assert!((v - mean).abs() < 1e-14);
    // linear in time as well
    let vt = field.sample_value(0.25, &a).unwrap();
    assert!((vt - (field.slices[0][6] + 0.25)).abs() < 1e-14);
}

#[test]
fn out_of_bounds_is_rejected_and_periodic_dims_wrap() {
    let field = linear_field();
    assert!(matches!(field.sample_value(0.0, &[1.5, 0.0, 0.0]), Err(Error::OutOfBounds { dim: 0, .. })));
    assert!(matches!(field.sample_value(1.5, &[0.0, 0.0, 0.0]), Err(Error::TimeOutOfRange { .. })));
    assert!(field.sample_value(0.0, &[0.0, 0.0]).is_err());
    let a = field.sample_value(0.0, &[0.1, 0.2, 0.3]).unwrap();
    let b = field.sample_value(0.0, &[0.1, 0.2, 0.3 + 2.0 * std::f64::consts::PI]).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn interpolant_gradient_matches_linear_data() {
    let field = linear_field();
    let e = field.evaluate(0.4, &[0.13, -0.27, 0.9]).unwrap();
    // within a cell the multilinear interpolant of a linear function is exact;
    // the periodic dimension wraps the data, so check the two linear dims
    assert!((e.grad_x[0] - 2.0).abs() < 1e-12);
    assert!((e.grad_x[1] + 1.0).abs() < 1e-12);
    assert!((e.dv_dt - 1.0).abs() < 1e-12);
}

#[test]
fn terminal_slice_is_boundary_and_slices_decrease_backward() {
    let sys = SystemSpec::air3d();
    let grid = Grid::uniform(&sys, 21).unwrap();
    let (field, stats) = solve_brt(&sys, &grid, &SolveOptions::default()).unwrap();
    assert!(stats.stored_slices <= 50);
    assert_eq!(field.times[0], 0.0);
    assert_eq!(*field.times.last().unwrap(), sys.horizon);
    for (flat, x) in grid.nodes().enumerate() {
        assert_eq!(field.terminal_slice()[flat], sys.boundary_value(&x));
    }
    for k in 1..field.slices.len() {
        for (a, b) in field.slices[k - 1].iter().zip(&field.slices[k]) {
            assert!(a <= b);
        }
    }
}

#[test]
fn symmetric_grid_gives_symmetric_values() {
    let sys = SystemSpec::air3d();
    let grid = Grid::for_system(&sys, &[21, 17, 20]).unwrap();
    let (field, _) = solve_brt(&sys, &grid, &SolveOptions::default()).unwrap();
    let jac = sys.symmetry_jacobian();
    for slice in &field.slices {
        for flat in 0..grid.len() {
            let m = mirrored_node(&grid, &jac, flat);
            assert!((slice[flat] - slice[m]).abs() <= 1e-9);
        }
    }
}

#[test]
fn coarse_particle_solution_stays_near_boundary() {
    let sys = SystemSpec::particle();
    let grid = Grid::uniform(&sys, 9).unwrap();
    let (field, _) = solve_brt(&sys, &grid, &SolveOptions::default()).unwrap();
    let tol = 2.0 * grid.max_spacing();
    for (flat, x) in grid.nodes().enumerate() {
        assert!((field.initial_slice()[flat] - sys.boundary_value(&x)).abs() <= tol);
    }
}

#[test]
fn membership_examples() {
    let sys = SystemSpec { horizon: 0.2, params: SystemParams::Air3d(Default::default()) };
    let grid = Grid::uniform(&sys, 21).unwrap();
    let (field, _) = solve_brt(&sys, &grid, &SolveOptions::default()).unwrap();
    assert!(!field.brt_membership(sys.horizon, &[0.1, 0.0, 1.0]).unwrap());
    // relative speed at most 1.5, so 0.3 of travel cannot close a gap of 0.9
    assert!(field.brt_membership(0.0, &[-0.9, 0.9, 0.0]).unwrap());
    assert!(field.brt_membership(0.0, &[2.0, 0.0, 0.0]).is_err());
}

#[test]
fn solver_rejects_bad_options() {
    let sys = SystemSpec::air3d();
    let grid = Grid::uniform(&sys, 5).unwrap();
    assert!(solve_brt(&sys, &grid, &SolveOptions { cfl: 0.0, store_stride: None }).is_err());
    assert!(solve_brt(&sys, &grid, &SolveOptions { cfl: 1.5, store_stride: None }).is_err());
    let other = Grid::uniform(&SystemSpec::particle(), 5).unwrap();
    assert!(solve_brt(&sys, &other, &SolveOptions::default()).is_err());
    let bad = SystemSpec { horizon: f64::NAN, ..SystemSpec::air3d() };
    assert!(solve_brt(&bad, &grid, &SolveOptions::default()).is_err());
}

#[test]
fn store_stride_controls_slice_count() {
    let sys = SystemSpec::air3d();
    let grid = Grid::uniform(&sys, 11).unwrap();
    let (field, stats) = solve_brt(&sys, &grid, &SolveOptions { cfl: 0.5, store_stride: Some(1) }).unwrap();
    assert_eq!(field.times.len(), stats.steps + 1);
    let (coarse, _) = solve_brt(&sys, &grid, &SolveOptions { cfl: 0.5, store_stride: Some(1000) }).unwrap();
    assert_eq!(coarse.times.len(), 2);
    assert_eq!(coarse.initial_slice(), field.initial_slice());
    assert!(memory_estimate(&sys, &grid, &SolveOptions::default()) > grid.len() * 8);
    assert_eq!(default_store_stride(49), 1);
    assert_eq!(default_store_stride(50), 2);
}

#[test]
fn field_files_roundtrip_and_reject_damage() {
    let field = linear_field();
    let bytes = encode_field(&field).unwrap();
    assert_eq!(decode_field(&bytes).unwrap(), field);
    assert_eq!(encode_field(&decode_field(&bytes).unwrap()).unwrap(), bytes);

    assert!(matches!(decode_field(&bytes[..bytes.len() - 3]), Err(Error::TruncatedBlob { .. })));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_field(&bad), Err(Error::MalformedHeader(_))));
    let mut bad = bytes.clone();
    bad[17] = b'#';
    assert!(matches!(decode_field(&bad), Err(Error::MalformedHeader(_))));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.bin");
    write_field(&field, &path).unwrap();
    assert_eq!(read_field(&path).unwrap(), field);
}
