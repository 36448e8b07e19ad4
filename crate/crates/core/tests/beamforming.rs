use implantbeam::beamform::{
    delay_and_sum, iterative_reverse, phase_reverse_active, superpose, time_reverse_active, BeamformConfig,
    IterativeConfig, ReversalMode,
};
use implantbeam::field::{beamwidth, FieldEngine, FieldSettings};
use implantbeam::metrics::{compute_ispta, transfer_efficiency, LinkSettings};
use implantbeam::scene::{capture_backscatter, difference_signal, emit_ping};
use implantbeam::signal::sum_on_grid;
use implantbeam::{
    build_array_layout, ArrayLayout, Clutter, ExcitationSet, Implant, LayeredMedium, LoadState, Medium, Point3,
    SampleGrid, Scene, Slab,
};

fn array() -> ArrayLayout {
    build_array_layout(8, 8, 1.8, 0.8, 3, 1.5).unwrap()
}

fn oil() -> LayeredMedium {
    LayeredMedium::homogeneous(Medium::oil())
}

#[test]
fn capture_is_linear_in_reflectors() {
    let l = array();
    let cfg = BeamformConfig::default();
    let tx = delay_and_sum(&l, Point3::new(0.0, 0.0, 40.0), &oil(), &cfg).unwrap();
    let a = Implant::new(Point3::new(2.0, 1.0, 40.0));
    let b = Clutter::new(Point3::new(-4.0, 3.0, 35.0), 0.8);
    for state in [LoadState::Open, LoadState::Short] {
        let both = Scene::new(oil(), vec![a.clone()], vec![b]).unwrap();
        let only_a = Scene::new(oil(), vec![a.clone()], vec![]).unwrap();
        let only_b = Scene::new(oil(), vec![], vec![b]).unwrap();
        let cb = capture_backscatter(&l, &tx, &both, state).unwrap();
        let ca = capture_backscatter(&l, &tx, &only_a, state).unwrap();
        let cc = capture_backscatter(&l, &tx, &only_b, state).unwrap();
        let fs = cb.sample_rate().unwrap();
        for i in 0..l.len() {
            let sum = sum_on_grid([ca.waveform(i), cc.waveform(i)], fs).unwrap();
            let w = cb.waveform(i);
            for (k, &v) in w.samples().iter().enumerate() {
                let j = w.start_index() + k as i64 - sum.start_index();
                let s = if j >= 0 && (j as usize) < sum.len() { sum.samples()[j as usize] } else { 0.0 };
                assert!((v - s).abs() <= 1e-12 * (1.0 + v.abs()), "element {i} sample {k}");
            }
        }
    }
}

#[test]
fn difference_envelope_starts_at_round_trip() {
    let l = build_array_layout(1, 1, 1.0, 0.8, 0, 1.5).unwrap();
    let cfg = BeamformConfig::default();
    let tx = implantbeam::beamform::unfocused(&l, &cfg).unwrap();
    let depth = 30.0;
    let scene = Scene::new(oil(), vec![Implant::new(Point3::new(0.0, 0.0, depth))], vec![]).unwrap();
    let d = difference_signal(
        &capture_backscatter(&l, &tx, &scene, LoadState::Open).unwrap(),
        &capture_backscatter(&l, &tx, &scene, LoadState::Short).unwrap(),
    )
    .unwrap();
    let w = d.waveform(0);
    let first = w.samples().iter().position(|v| v.abs() > 1e-9 * w.peak()).unwrap();
    let onset = w.start_time() + first as f64 / w.sample_rate();
    let expected = 2.0 * depth / Medium::oil().speed_mm_per_us();
    assert!((onset - expected).abs() <= 1.0 / w.sample_rate(), "{onset} vs {expected}");
}

#[test]
fn iterative_delay_change_is_non_increasing() {
    let l = array();
    let cfg = BeamformConfig::default();
    let scene = Scene::new(oil(), vec![Implant::new(Point3::from_spherical_deg(50.0, 20.0, 30.0))], vec![]).unwrap();
    let it = IterativeConfig { delay_tol: Some(0.0), max_iter: 5, ..IterativeConfig::default() };
    let res = iterative_reverse(&l, &scene, ReversalMode::Phase, &cfg, &it).unwrap();
    let changes: Vec<f64> = res.trace.steps.iter().filter_map(|s| s.delay_change).collect();
    assert_eq!(changes.len(), 4);
    for w in changes.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "{changes:?}");
    }
}

#[test]
fn noisy_iterations_are_seeded() {
    let l = array();
    let cfg = BeamformConfig::default();
    let scene = Scene::new(oil(), vec![Implant::new(Point3::new(3.0, -2.0, 45.0))], vec![]).unwrap();
    let it = IterativeConfig { noise_rms: 1e-4, seed: 11, max_iter: 3, ..IterativeConfig::default() };
    let a = iterative_reverse(&l, &scene, ReversalMode::Time, &cfg, &it).unwrap();
    let b = iterative_reverse(&l, &scene, ReversalMode::Time, &cfg, &it).unwrap();
    assert_eq!(a.transmit, b.transmit);
    assert_eq!(a.trace, b.trace);
}

fn peak_location(l: &ArrayLayout, tx: &ExcitationSet, depth: f64) -> Point3 {
    let grid = SampleGrid::with_spacing(Point3::new(-14.0, -14.0, depth), Point3::new(14.0, 14.0, depth), 0.4).unwrap();
    let e = FieldEngine::new(l, tx, &oil(), &FieldSettings::default().with_period(100.0)).unwrap();
    compute_ispta(&e.intensity_on(&grid).unwrap()).unwrap().1
}

#[test]
fn superposition_keeps_each_focus() {
    let l = array();
    let cfg = BeamformConfig::default();
    let targets = [Point3::new(-6.0, 0.0, 50.0), Point3::new(6.0, 0.0, 50.0)];
    let solo: Vec<ExcitationSet> = targets.iter().map(|&t| delay_and_sum(&l, t, &oil(), &cfg).unwrap()).collect();
    let both = superpose(&solo, &cfg).unwrap();
    let bw = 50.0 * beamwidth(l.aperture(), Medium::oil().wavelength(1.5)).unwrap().to_radians().tan();
    let e = FieldEngine::new(&l, &both, &oil(), &FieldSettings::default().with_period(100.0)).unwrap();
    for (s, t) in solo.iter().zip(targets) {
        let p = peak_location(&l, s, 50.0);
        // the superposed field still peaks locally within a beamwidth of each solo focus
        let local = SampleGrid::with_spacing(
            Point3::new(p.x - 2.0 * bw, p.y - 2.0 * bw, 50.0),
            Point3::new(p.x + 2.0 * bw, p.y + 2.0 * bw, 50.0),
            0.25,
        )
        .unwrap();
        let q = compute_ispta(&e.intensity_on(&local).unwrap()).unwrap().1;
        assert!(q.distance(p) <= bw, "{q:?} vs {p:?}");
        assert!(p.distance(t) <= bw);
    }
}

#[test]
fn reversal_beats_geometry_through_unmodeled_slab() {
    let l = array();
    let cfg = BeamformConfig::default();
    let truth = LayeredMedium::new(
        vec![Slab { medium: Medium::oil(), thickness: 10.0 }, Slab { medium: Medium::tissue(), thickness: 30.0 }],
        Medium::oil(),
    )
    .unwrap();
    let scene = Scene::empty(truth.clone());
    let link = LinkSettings::default();
    let s = FieldSettings::default();
    // off broadside, where a laterally uniform slab actually aberrates
    for x in [-12.0, -8.0, 10.0, 14.0] {
        let t = Point3::new(x, 0.0, 50.0);
        let implant = Implant::active(t, 1.5, cfg.cycles, cfg.sample_rate).unwrap();
        let capture = emit_ping(&implant, &l, &scene).unwrap();
        let eff = |tx: &ExcitationSet| transfer_efficiency(&l, tx, &implant, &truth, &s, &link).unwrap();
        let das = eff(&delay_and_sum(&l, t, &oil(), &cfg).unwrap());
        assert!(eff(&time_reverse_active(&capture, &l, &cfg).unwrap()) >= das);
        assert!(eff(&phase_reverse_active(&capture, &l, &cfg).unwrap()) >= das);
    }
}
