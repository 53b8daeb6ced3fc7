mod common;

use common::*;
use wp_dynamics::dynamics::{classify, Verdict};
use wp_dynamics::lattice::*;
use wp_dynamics::scan::*;

fn cfg() -> ToleranceConfig {
    ToleranceConfig::default()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn prepole_root_renders_white() {
    let root = at(SQUARE_PREPOLE_ROOT);
    let grid = ScanGrid::new(root, c(1e-3, -1e-3), 1, 1).unwrap();
    let (image, csv) = render_parameter_plane(LatticeKind::Square, &grid, 500, &cfg());
    assert_eq!(image.pixels, vec![WHITE]);
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], CLASSIFICATION_HEADER);
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("0,0,") && rows[1].contains(",AllCriticalPrepole,"), "{}", rows[1]);
}

#[test]
fn zero_parameter_gets_the_reserved_colour() {
    // 3×3 grid centred on the origin
    let grid = ScanGrid::new(c(-0.5, 0.5), c(1.5, -1.5), 3, 3).unwrap();
    assert_eq!(grid.center(1, 1), c(0.0, 0.0));
    let (image, csv) = render_parameter_plane(LatticeKind::Triangular, &grid, 50, &cfg());
    assert_eq!(image.get(1, 1), RESERVED);
    assert_eq!(image.pixels.iter().filter(|&&p| p == RESERVED).count(), 1);
    let row = csv.lines().find(|l| l.starts_with("1,1,")).unwrap();
    assert!(row.contains("ZeroParameter"), "{row}");
    assert_eq!(csv.lines().count(), 10);
}

#[test]
fn csv_matches_direct_classification() {
    let grid = ScanGrid::from_bounds(0.5, 3.0, 0.5, 3.0, 6, 5).unwrap();
    let (image, csv) = render_parameter_plane(LatticeKind::Square, &grid, 300, &cfg());
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 10);
        let (px, py): (usize, usize) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        let v = classify(LatticeKind::Square, grid.center(px, py), 300, &cfg()).unwrap();
        assert_eq!(f[4], v.tag());
        assert_eq!(image.get(px, py), verdict_color(LatticeKind::Square, &v));
        if let Verdict::AttractingCycles { count, cycle } = &v {
            assert_eq!(f[5], count.to_string());
            assert_eq!(f[6], cycle.period.to_string());
            let abs: f64 = f[9].parse().unwrap();
            assert!(abs < 1.0);
        }
    }
}

#[test]
fn lattice_point_pixel_is_hit_at_step_zero() {
    let lambda = c(1.25, 0.5);
    let lat = Lattice::new(LatticeKind::Square, lambda, &cfg()).unwrap();
    // pixel (2, 1) sits exactly on λ·(1 + i)
    let p = lat.pole(1, 1);
    let grid = ScanGrid::new(p - c(2.0 * 0.25, -0.25), c(1.0, -1.0), 4, 4).unwrap();
    assert_eq!(grid.center(2, 1), p);
    let image = render_dynamical_plane(LatticeKind::Square, lambda, &grid, 20, &cfg()).unwrap();
    assert_eq!(image.get(2, 1), step_color(Some(0)));
    assert_eq!(pole_hit_step(&lat, p, 20), Some(0));
}

#[test]
fn budget_exhaustion_is_black() {
    assert_eq!(step_color(None), BLACK);
    assert_ne!(step_color(Some(0)), BLACK);
    assert_ne!(step_color(Some(0)), step_color(Some(1)));
}

#[test]
fn triangular_image_is_rotation_invariant() {
    let lambda = c(1.7, 0.9);
    let lat = Lattice::new(LatticeKind::Triangular, lambda, &cfg()).unwrap();
    let w = C64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
    let n = 96;
    let grid = ScanGrid::from_bounds(-2.0, 2.0, -2.0, 2.0, n, n).unwrap();
    let image = render_dynamical_plane(LatticeKind::Triangular, lambda, &grid, 30, &cfg()).unwrap();

    // as a point map: the rotated point lands on a pole at the same step
    let mut same_point = 0;
    // as an image: the pixel nearest the rotated centre has the same colour
    let (mut same_pixel, mut compared) = (0, 0);
    for py in 0..n {
        for px in 0..n {
            let z = grid.center(px, py);
            let colour = image.get(px, py);
            if step_color(pole_hit_step(&lat, w * z, 30)) == colour {
                same_point += 1;
            }
            if let Some((qx, qy)) = grid.pixel_of(w * z) {
                compared += 1;
                if image.get(qx, qy) == colour {
                    same_pixel += 1;
                }
            }
        }
    }
    let total = n * n;
    assert!(same_point as f64 >= 0.99 * total as f64, "{same_point}/{total}");
    // quantization only disturbs pixels straddling colour boundaries
    assert!(same_pixel as f64 >= 0.7 * compared as f64, "{same_pixel}/{compared}");
}

#[test]
fn renders_do_not_depend_on_thread_count() {
    let grid = ScanGrid::from_bounds(0.5, 3.0, 0.5, 3.0, 24, 20).unwrap();
    let one = in_pool(1, || render_parameter_plane(LatticeKind::Square, &grid, 300, &cfg()));
    let four = in_pool(4, || render_parameter_plane(LatticeKind::Square, &grid, 300, &cfg()));
    assert_eq!(one.0.to_ppm(), four.0.to_ppm());
    assert_eq!(one.1, four.1);

    let dyn_grid = ScanGrid::from_bounds(-2.0, 2.0, -2.0, 2.0, 40, 33).unwrap();
    let render = || render_dynamical_plane(LatticeKind::Triangular, c(1.7, 0.9), &dyn_grid, 40, &cfg()).unwrap();
    let a = in_pool(1, render).to_ppm();
    let b = in_pool(4, render).to_ppm();
    let again = in_pool(3, render).to_ppm();
    assert_eq!(a, b);
    assert_eq!(a, again);
}

#[test]
fn ppm_bytes_and_round_trip() {
    let red = Image {
        width: 1,
        height: 1,
        pixels: vec![[255, 0, 0]],
    };
    let bytes = red.to_ppm();
    assert_eq!(bytes, b"P6\n1 1\n255\n\xff\x00\x00");
    assert_eq!(read_ppm(&bytes).unwrap(), red);

    let grid = ScanGrid::from_bounds(-1.0, 1.0, -1.0, 1.0, 7, 5).unwrap();
    let image = render_dynamical_plane(LatticeKind::Square, c(1.1, 0.2), &grid, 15, &cfg()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dyn.ppm");
    write_ppm(&image, &path).unwrap();
    let back = read_ppm(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(back, image);
    // top row first
    assert_eq!(back.get(0, 0), image.pixels[0]);
}

#[test]
fn failed_write_leaves_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("x.ppm");
    let err = write_ppm(&Image::new(2, 2, WHITE), &path).unwrap_err();
    assert!(matches!(err, wp_dynamics::Error::Io { .. }));
    assert!(!path.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn pixel_centres_invert_exactly() {
    let grid = ScanGrid::from_bounds(-3.0, 1.0, -0.5, 2.5, 160, 120).unwrap();
    for py in (0..120).step_by(7) {
        for px in (0..160).step_by(11) {
            assert_eq!(grid.pixel_of(grid.center(px, py)), Some((px, py)));
        }
    }
    assert_eq!(grid.center(0, 0), grid.origin);
    assert!(ScanGrid::new(c(0.0, 0.0), c(1.0, 1.0), 0, 3).is_err());
}
