//! Scenario execution.

use implantbeam::beamform::{
    das_delays, delay_and_sum, estimate_delays, iterative_reverse, partition, phase_reverse_active, superpose,
    time_reverse_active, unfocused, ConvergenceTrace, DelayProfile, IterativeConfig, ReversalMode,
};
use implantbeam::field::io::{encode_field, write_field_csv, write_signals_csv};
use implantbeam::field::{array_factor, element_directivity, FieldEngine};
use implantbeam::metrics::{db, from_db, ispta_over, link_efficiency, transfer_efficiency, EfficiencyReport, LinkSettings};
use implantbeam::scene::{add_receive_noise, emit_ping};
use implantbeam::{ArrayLayout, ExcitationSet, LayeredMedium, Point3, Scene};
use rayon::prelude::*;

use crate::error::{CliResult, Context};
use crate::output::Artifacts;
use crate::scenario::{
    parse_scenario, value_label, with_parameter, Combine, DasAssumption, Experiment, Method, Scenario,
};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub grid_spacing: Option<f64>,
    pub write_signals: bool,
}

/// One line of a results table; column order is preserved.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Row(pub Vec<(String, String)>);

impl Row {
    fn push(&mut self, k: &str, v: impl Into<String>) {
        self.0.push((k.to_string(), v.into()));
    }

    pub fn get(&self, k: &str) -> Option<&str> {
        self.0.iter().find(|(c, _)| c == k).map(|(_, v)| v.as_str())
    }
}

pub fn rows_csv(rows: &[Row]) -> String {
    let Some(first) = rows.first() else { return String::new() };
    let mut s = first.0.iter().map(|(k, _)| k.as_str()).collect::<Vec<_>>().join(",");
    s.push('\n');
    for r in rows {
        s += &r.0.iter().map(|(_, v)| v.as_str()).collect::<Vec<_>>().join(",");
        s.push('\n');
    }
    s
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Artifacts,
    pub rows: Vec<Row>,
    pub log: Vec<String>,
}

fn g(v: f64) -> String {
    format!("{v:.6e}")
}

fn d1(v: f64) -> String {
    format!("{v:.2}")
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> implantbeam::Result<()>) -> implantbeam::Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

struct Focused {
    tx: ExcitationSet,
    delays: Option<DelayProfile>,
    trace: Option<ConvergenceTrace>,
}

struct World {
    nominal: ArrayLayout,
    actual: ArrayLayout,
    scene: Scene,
}

impl World {
    fn new(scn: &Scenario) -> CliResult<World> {
        let nominal = scn.array.nominal().context(|| "building the array".into())?;
        let actual = scn.array.actual(scn.seed).context(|| "perturbing the array".into())?;
        let scene = scn.scene().context(|| "building the scene".into())?;
        Ok(World { nominal, actual, scene })
    }

    fn das_medium(&self, scn: &Scenario) -> LayeredMedium {
        match scn.beamform.das_assumes {
            DasAssumption::Homogeneous => LayeredMedium::homogeneous(*scn.medium.medium_at(0.0)),
            DasAssumption::Layered => scn.medium.clone(),
        }
    }
}

fn focus(scn: &Scenario, w: &World, method: Method, target: usize) -> CliResult<Focused> {
    let cfg = &scn.beamform.config;
    let ctx = || format!("{} focusing on implant {target}", method.name());
    let position = scn.implants.get(target).map(|i| i.position);
    let noisy_ping = || -> CliResult<ExcitationSet> {
        let c = emit_ping(&scn.implants[target], &w.actual, &w.scene).context(ctx)?;
        add_receive_noise(&c, scn.beamform.noise_rms, scn.seed).context(ctx)
    };
    Ok(match method {
        Method::Unfocused => Focused { tx: unfocused(&w.actual, cfg).context(ctx)?, delays: None, trace: None },
        Method::DelayAndSum => {
            let p = position.expect("validated");
            let m = w.das_medium(scn);
            Focused {
                tx: delay_and_sum(&w.nominal, p, &m, cfg).context(ctx)?,
                delays: Some(das_delays(&w.nominal, p, &m).context(ctx)?),
                trace: None,
            }
        }
        Method::TimeReversal | Method::PhaseReversal => {
            let capture = noisy_ping()?;
            let tx = if method == Method::TimeReversal {
                time_reverse_active(&capture, &w.actual, cfg)
            } else {
                phase_reverse_active(&capture, &w.actual, cfg)
            }
            .context(ctx)?;
            let delays = estimate_delays(&capture, &w.actual, cfg).context(ctx)?.reversed();
            Focused { tx, delays: Some(delays), trace: None }
        }
        Method::IterativeTimeReversal | Method::IterativePhaseReversal => {
            let mode = if method == Method::IterativeTimeReversal { ReversalMode::Time } else { ReversalMode::Phase };
            let it = IterativeConfig {
                max_iter: scn.beamform.max_iter,
                delay_tol: scn.beamform.delay_tol,
                target,
                noise_rms: scn.beamform.noise_rms,
                seed: scn.seed,
            };
            let r = iterative_reverse(&w.actual, &w.scene, mode, cfg, &it).context(ctx)?;
            Focused { tx: r.transmit, delays: Some(r.profile.reversed()), trace: Some(r.trace) }
        }
    })
}

fn link_settings(scn: &Scenario) -> LinkSettings {
    let mut l = scn.link.clone();
    if !scn.fda_rescale {
        l.ispta = None;
    }
    l
}

/// Intensity maps for every grid; scaled to the intensity limit when `peak`
/// is given.
fn field_maps(
    scn: &Scenario,
    w: &World,
    tx: &ExcitationSet,
    period: f64,
    peak: Option<f64>,
    out: &mut Artifacts,
) -> CliResult<()> {
    if scn.grids.is_empty() {
        return Ok(());
    }
    let scale = peak.map_or(1.0, |p| (scn.link.limit / p).sqrt());
    let tx = tx.clone().with_scale(tx.drive_amplitude_scale() * scale);
    let settings = scn.field.clone().with_period(period);
    let engine = FieldEngine::new(&w.actual, &tx, &scn.medium, &settings).context(|| "field engine".into())?;
    for g in &scn.grids {
        let ctx = || format!("field map `{}`", g.name);
        let f = engine.intensity_on(&g.grid).context(ctx)?;
        out.add(format!("fields/{}.ibf", g.name), encode_field(&f));
        out.add(format!("fields/{}.csv", g.name), csv_bytes(|b| write_field_csv(&f, g.csv_stride, b)).context(ctx)?);
    }
    Ok(())
}

fn report_row(method: Method, target: usize, p: Point3, r: &EfficiencyReport, trace: Option<&ConvergenceTrace>) -> Row {
    let mut row = Row::default();
    row.push("method", method.name());
    row.push("target", target.to_string());
    row.push("x_mm", d1(p.x));
    row.push("y_mm", d1(p.y));
    row.push("z_mm", d1(p.z));
    row.push("eta_link_db", d1(r.eta_link_db));
    row.push("eta_tx_db", d1(r.eta_tx_db));
    row.push("eta_foc_db", d1(r.eta_foc_db));
    row.push("eta_att_db", d1(r.eta_att_db));
    row.push("eta_rx_db", d1(r.eta_rx_db));
    row.push("residual_db", d1(r.residual_db));
    row.push("efficiency", g(r.received_energy / r.transmitted_energy));
    row.push("ispta_mw_cm2", r.ispta.map_or(String::new(), |(i, _)| g(i)));
    row.push(
        "incident_power_at_limit_uw",
        r.available_power_at_fda.map_or(String::new(), |p| format!("{:.1}", p / from_db(r.eta_rx_db))),
    );
    row.push("available_power_uw", r.available_power_at_fda.map_or(String::new(), |p| format!("{p:.1}")));
    row.push("converged_after", trace.and_then(|t| t.converged_after).map_or(String::new(), |k| k.to_string()));
    row
}

fn single_method(scn: &Scenario, w: &World, method: Method, opts: &RunOptions) -> CliResult<Outcome> {
    let t = scn.beamform.target;
    let implant = &scn.implants[t];
    let f = focus(scn, w, method, t)?;
    let ctx = || format!("link budget for {}", method.name());
    let link = link_settings(scn);
    let r = link_efficiency(&w.actual, &f.tx, implant, &scn.medium, &scn.field, &link).context(ctx)?;
    let mut out = Outcome::default();
    out.artifacts.add("efficiency.csv", csv_bytes(|b| r.write_csv(b)).context(ctx)?);
    out.artifacts.add_text("report.txt", r.summary());
    if let Some(p) = &f.delays {
        out.artifacts.add("delays.csv", csv_bytes(|b| p.write_csv(b)).context(ctx)?);
    }
    if let Some(tr) = &f.trace {
        out.artifacts.add("convergence.csv", csv_bytes(|b| tr.write_csv(b)).context(ctx)?);
    }
    if opts.write_signals {
        out.artifacts.add("transmit.csv", csv_bytes(|b| write_signals_csv(&f.tx, b)).context(ctx)?);
    }
    let period = FieldEngine::new(&w.actual, &f.tx, &scn.medium, &scn.field)
        .context(ctx)?
        .repetition_period(&[implant.position]);
    field_maps(scn, w, &f.tx, period, r.ispta.map(|p| p.0), &mut out.artifacts)?;
    out.log.push(format!(
        "{:<26} eta_link {:>6.1} dB  eta_foc {:>6.1} dB{}",
        method.name(),
        r.eta_link_db,
        r.eta_foc_db,
        r.available_power_at_fda.map_or(String::new(), |p| format!("  available {p:.1} uW"))
    ));
    out.rows.push(report_row(method, t, implant.position, &r, f.trace.as_ref()));
    Ok(out)
}

fn multi_target(scn: &Scenario, w: &World, method: Method, targets: &[usize]) -> CliResult<Outcome> {
    let cfg = &scn.beamform.config;
    let link = link_settings(scn);
    let solos: Vec<ExcitationSet> =
        targets.iter().map(|&t| focus(scn, w, method, t).map(|f| f.tx)).collect::<CliResult<_>>()?;
    let sup = superpose(&solos, cfg).context(|| "superposition".into())?;
    let positions: Vec<Point3> = targets.iter().map(|&t| scn.implants[t].position).collect();
    let part = partition(&w.nominal, &positions, &w.das_medium(scn), cfg).context(|| "partition".into())?;
    let mut out = Outcome::default();
    for (k, &t) in targets.iter().enumerate() {
        let implant = &scn.implants[t];
        let eff = |tx: &ExcitationSet| {
            transfer_efficiency(&w.actual, tx, implant, &scn.medium, &scn.field, &link)
                .context(|| format!("efficiency at implant {t}"))
        };
        let (solo, s, p) = (eff(&solos[k])?, eff(&sup)?, eff(&part)?);
        let mut row = Row::default();
        row.push("method", method.name());
        row.push("target", t.to_string());
        row.push("x_mm", d1(implant.position.x));
        row.push("y_mm", d1(implant.position.y));
        row.push("z_mm", d1(implant.position.z));
        row.push("solo_efficiency", g(solo));
        row.push("superposition_efficiency", g(s));
        row.push("partition_efficiency", g(p));
        row.push("superposition_relative", format!("{:.3}", s / solo));
        row.push("partition_relative", format!("{:.3}", p / solo));
        out.log.push(format!(
            "implant {t}: superposition {:.0}% of solo, partition {:.0}% of solo",
            100.0 * s / solo,
            100.0 * p / solo
        ));
        out.rows.push(row);
    }
    let combined = match scn.beamform.combine {
        Combine::Superpose => &sup,
        Combine::Partition => &part,
    };
    let ctx = || "combined field".to_string();
    let probe = FieldEngine::new(&w.actual, combined, &scn.medium, &scn.field).context(ctx)?;
    let period = probe.repetition_period(&positions);
    let peak = match (&link.ispta, scn.grids.is_empty()) {
        (Some(search), false) => {
            let engine = FieldEngine::new(&w.actual, combined, &scn.medium, &scn.field.clone().with_period(period))
                .context(ctx)?;
            let mut best = 0.0f64;
            for p in &positions {
                let grids = search.grids(&w.actual, *p).context(ctx)?;
                best = best.max(ispta_over(&engine, &grids).context(ctx)?.0);
            }
            Some(best)
        }
        _ => None,
    };
    field_maps(scn, w, combined, period, peak, &mut out.artifacts)?;
    out.artifacts.add_text("multi.csv", rows_csv(&out.rows));
    Ok(out)
}

fn directivity(scn: &Scenario, w: &World) -> CliResult<Outcome> {
    let scan = scn.scan.as_ref().expect("validated");
    let method = scn.beamform.methods[0];
    let f = focus(scn, w, method, scn.beamform.target)?;
    let pts: Vec<Point3> =
        scan.angles.iter().map(|&t| Point3::from_spherical_deg(scan.radius, t, scan.azimuth)).collect();
    let ctx = || "directivity scan".to_string();
    let engine = FieldEngine::new(&w.actual, &f.tx, &scn.medium, &scn.field).context(ctx)?;
    let sim = engine.intensity_at(&pts).context(ctx)?;
    let lambda = scn.medium.medium_at(0.0).wavelength(scn.array.carrier);
    let along_rows = (scan.azimuth.rem_euclid(180.0) - 90.0).abs() < 45.0;
    let n = if along_rows { scn.array.rows } else { scn.array.cols };
    let steer = match (method, scn.implants.get(scn.beamform.target)) {
        (Method::Unfocused, _) | (_, None) => 0.0,
        (_, Some(i)) => {
            let lateral = if along_rows { i.position.y } else { i.position.x };
            lateral.atan2(i.position.z).to_degrees()
        }
    };
    let theory: Vec<f64> = scan
        .angles
        .iter()
        .map(|&t| {
            (array_factor(n, scn.array.pitch, lambda, t, steer)
                * element_directivity(scn.array.element_size, lambda, t))
            .powi(2)
        })
        .collect();
    let ms = sim.iter().cloned().fold(0.0, f64::max);
    let mt = theory.iter().cloned().fold(0.0, f64::max);
    let mut csv = String::from("angle_deg,simulated,analytic,simulated_db,analytic_db\n");
    let mut sq = 0.0;
    for ((a, s), t) in scan.angles.iter().zip(&sim).zip(&theory) {
        let (s, t) = (s / ms, t / mt);
        sq += (s - t).powi(2);
        csv += &format!("{a:.3},{s:.6},{t:.6},{:.2},{:.2}\n", db(s.max(1e-12)), db(t.max(1e-12)));
    }
    let rms = (sq / sim.len() as f64).sqrt();
    let mut out = Outcome::default();
    out.artifacts.add_text("directivity.csv", csv);
    let mut row = Row::default();
    row.push("method", method.name());
    row.push("radius_mm", d1(scan.radius));
    row.push("steer_deg", d1(steer));
    row.push("rms_deviation", format!("{rms:.5}"));
    out.rows.push(row);
    out.log.push(format!("directivity rms deviation from analytic pattern {rms:.4}"));
    Ok(out)
}

/// Run one scenario without its sweep table.
pub fn run_single(scn: &Scenario, opts: &RunOptions) -> CliResult<Outcome> {
    let w = World::new(scn)?;
    match scn.experiment {
        Experiment::Directivity => directivity(scn, &w),
        Experiment::Link => {
            let methods = &scn.beamform.methods;
            let mut out = Outcome::default();
            for &m in methods {
                let o = match &scn.beamform.targets {
                    Some(ts) => multi_target(scn, &w, m, ts)?,
                    None => single_method(scn, &w, m, opts)?,
                };
                if methods.len() == 1 {
                    out.artifacts = o.artifacts;
                } else {
                    out.artifacts.absorb(m.name(), o.artifacts);
                }
                out.rows.extend(o.rows);
                out.log.extend(o.log);
            }
            Ok(out)
        }
    }
}

pub fn apply_options(mut scn: Scenario, opts: &RunOptions) -> CliResult<Scenario> {
    if let Some(s) = opts.seed {
        scn.set_seed(s);
    }
    if let Some(sp) = opts.grid_spacing {
        scn.set_grid_spacing(sp)?;
    }
    Ok(scn)
}

/// Prepare the scenario variants of a sweep; every value is validated before
/// anything runs.
pub fn sweep_variants(
    src: &str,
    origin: &str,
    parameter: &str,
    values: &[toml::Value],
    opts: &RunOptions,
) -> CliResult<Vec<(String, Scenario)>> {
    if values.is_empty() {
        return Err(crate::error::CliError::Validation("sweep has no values".into()));
    }
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let text = with_parameter(src, parameter, v)?;
            let label = value_label(v);
            let scn = parse_scenario(&text, &format!("{origin} [{parameter} = {label}]"))?;
            Ok((format!("{i:03}_{label}"), apply_options(scn, opts)?))
        })
        .collect()
}

/// Run sweep variants as independent jobs and aggregate their rows.
pub fn run_sweep(parameter: &str, variants: &[(String, Scenario)], opts: &RunOptions) -> CliResult<Outcome> {
    let results: Vec<CliResult<Outcome>> = variants.par_iter().map(|(_, s)| run_single(s, opts)).collect();
    let mut out = Outcome::default();
    for ((dir, _), r) in variants.iter().zip(results) {
        let r = r?;
        let value = dir.split_once('_').map_or(dir.as_str(), |(_, v)| v).to_string();
        for row in r.rows {
            let mut full = Row::default();
            full.push("parameter", parameter);
            full.push("value", value.clone());
            full.0.extend(row.0);
            out.rows.push(full);
        }
        out.log.extend(r.log.into_iter().map(|l| format!("[{value}] {l}")));
        out.artifacts.absorb(&format!("runs/{dir}"), r.artifacts);
    }
    Ok(out)
}

/// Rank link rows by efficiency.
pub fn ranking(rows: &[Row]) -> String {
    let mut items: Vec<(String, f64, String)> = rows
        .iter()
        .filter_map(|r| {
            let eta: f64 = r.get("eta_link_db")?.parse().ok()?;
            let label = match r.get("value") {
                Some(v) => format!("{} @ {v}", r.get("method").unwrap_or("")),
                None => r.get("method").unwrap_or("").to_string(),
            };
            let avail = r.get("available_power_uw").unwrap_or("").to_string();
            Some((label, eta, avail))
        })
        .collect();
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let best = items.first().map_or(0.0, |i| i.1);
    let mut s =
        format!("{:<4} {:<40} {:>12} {:>10} {:>14}\n", "rank", "method", "eta_link_dB", "relative", "available_uW");
    for (k, (label, eta, avail)) in items.iter().enumerate() {
        s += &format!(
            "{:<4} {:<40} {:>12.2} {:>9.1}% {:>14}\n",
            k + 1,
            label,
            eta,
            100.0 * 10f64.powf((eta - best) / 10.0),
            avail
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_to_csv() {
        let mut a = Row::default();
        a.push("x", "1");
        a.push("y", "2");
        assert_eq!(rows_csv(&[a.clone(), a]), "x,y\n1,2\n1,2\n");
        assert_eq!(rows_csv(&[]), "");
    }

    #[test]
    fn ranking_orders_by_efficiency() {
        let mk = |m: &str, e: &str| {
            let mut r = Row::default();
            r.push("method", m);
            r.push("eta_link_db", e);
            r
        };
        let t = ranking(&[mk("unfocused", "-50.0"), mk("time_reversal", "-30.0")]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[1].contains("time_reversal") && lines[1].contains("100.0%"));
        assert!(lines[2].contains("unfocused") && lines[2].contains("1.0%"));
    }
}
