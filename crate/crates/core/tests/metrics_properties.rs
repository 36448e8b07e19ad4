use implantbeam::beamform::{delay_and_sum, BeamformConfig};
use implantbeam::field::{FieldEngine, FieldSettings};
use implantbeam::metrics::{attenuation_db, compute_ispta, ispta_over, transfer_efficiency, IsptaSearch, LinkSettings};
use implantbeam::{build_array_layout, ArrayLayout, ExcitationSet, Implant, LayeredMedium, Medium, Point3, SampleGrid};
use proptest::prelude::*;

fn array() -> ArrayLayout {
    build_array_layout(8, 8, 1.8, 0.8, 3, 1.5).unwrap()
}

fn focused(target: Point3) -> (ArrayLayout, ExcitationSet, LayeredMedium) {
    let l = array();
    let m = LayeredMedium::homogeneous(Medium::oil());
    let tx = delay_and_sum(&l, target, &m, &BeamformConfig::default()).unwrap();
    (l, tx, m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn efficiency_ignores_drive_scale(k in 0.01f64..100.0, x in -10.0f64..10.0) {
        let t = Point3::new(x, 0.0, 45.0);
        let (l, tx, m) = focused(t);
        let implant = Implant::new(t);
        let s = FieldSettings::default();
        let link = LinkSettings::default();
        let a = transfer_efficiency(&l, &tx, &implant, &m, &s, &link).unwrap();
        let b = transfer_efficiency(&l, &tx.clone().with_scale(k), &implant, &m, &s, &link).unwrap();
        prop_assert!((a / b - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ispta_scales_quadratically(k in 0.1f64..10.0) {
        let (l, tx, m) = focused(Point3::new(2.0, -1.0, 40.0));
        let grid = SampleGrid::with_spacing(Point3::new(-6.0, -1.0, 30.0), Point3::new(6.0, -1.0, 50.0), 0.5).unwrap();
        let s = FieldSettings::default().with_period(100.0);
        let base = compute_ispta(&FieldEngine::new(&l, &tx, &m, &s).unwrap().intensity_on(&grid).unwrap()).unwrap();
        let scaled = tx.clone().with_scale(k);
        let r = compute_ispta(&FieldEngine::new(&l, &scaled, &m, &s).unwrap().intensity_on(&grid).unwrap()).unwrap();
        prop_assert_eq!(r.1, base.1);
        prop_assert!((r.0 / (k * k * base.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn on_axis_attenuation_is_closed_form(alpha in 0.0f64..5.0, z in 1.0f64..120.0) {
        let m = LayeredMedium::homogeneous(Medium::new(1540.0, 1000.0, alpha).unwrap());
        let closed = -alpha * z / 10.0;
        prop_assert!((attenuation_db(&m, Point3::new(0.0, 0.0, z)) - closed).abs() < 0.1);
    }
}

#[test]
fn ispta_is_stable_under_grid_refinement() {
    let target = Point3::new(0.0, 0.0, 50.0);
    let (l, tx, m) = focused(target);
    let e = FieldEngine::new(&l, &tx, &m, &FieldSettings::default().with_period(100.0)).unwrap();
    let coarse = IsptaSearch { spacing: 0.4, ..IsptaSearch::default() };
    let fine = IsptaSearch { spacing: 0.2, ..IsptaSearch::default() };
    let a = ispta_over(&e, &coarse.grids(&l, target).unwrap()).unwrap().0;
    let b = ispta_over(&e, &fine.grids(&l, target).unwrap()).unwrap().0;
    assert!((a / b - 1.0).abs() < 0.02, "{a} vs {b}");
}
