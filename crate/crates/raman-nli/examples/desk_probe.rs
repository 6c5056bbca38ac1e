use raman_nli::fiber::{sample_network_occupancy, WdmGrid};
use raman_nli::gn::{pair_coefficients, scaling_xpm, xpm_closed_form_total, GnIntegrator, NliConfig};
use raman_nli::profile::{log_z_grid, triangular_profile};
use raman_nli::raman::{NonlinearTransfer, Polarization, RamanFitParams, RamanSpectrum};
use raman_nli::scenario::{build_fiber, choose_grid, ScenarioConfig, SsfmRunConfig};
use raman_nli::ssfm::{measure_delta_eta, snapped_plan, SimGrid, SsfmConfig, StepDistribution};
use raman_nli::units::{dbm_to_watts, linear_to_db};
use std::time::Instant;

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2u64);
    let power_dbm: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(4.0);
    let spacing_ghz: f64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(45.0);
    let steps: usize = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(600);
    let grid = WdmGrid {
        slots: 15,
        spacing_hz: spacing_ghz * 1e9,
        symbol_rate_hz: 5e9,
        roll_off: 0.0,
        power_w: dbm_to_watts(power_dbm),
    };
    let plan = sample_network_occupancy(&grid, 10.0 / 15.0, seed).unwrap();
    let occ = plan.occupied_indices();
    println!("seed {seed}: occupied {occ:?}, spacing {spacing_ghz} GHz, {power_dbm} dBm");

    let cfg = ScenarioConfig::default();
    let fiber = build_fiber(&cfg).unwrap();
    let spectrum =
        RamanSpectrum::from_analytic_fit(&RamanFitParams::default(), 1550e-9, 2.1e-20).unwrap();
    let transfer = NonlinearTransfer::from_spectrum(&spectrum, Polarization::Dual);
    let psd = raman_nli::fiber::build_psd(&plan, 5e9 / 8.0).unwrap();
    let z = log_z_grid(fiber.span_length, 96);
    let span = grid.slots as f64 * grid.spacing_hz;
    let f_grid: Vec<f64> = (0..161).map(|i| -0.75 * span + i as f64 * span / 106.0).collect();
    let profile = triangular_profile(&psd, &fiber, &z, &f_grid).unwrap();
    let nli = NliConfig::new(Polarization::Dual, 5e9 / 8.0);
    let integrator = GnIntegrator::new(&psd, &fiber, &transfer, &profile, nli).unwrap();
    let t = Instant::now();
    let pairs = pair_coefficients(&integrator, &plan, &occ).unwrap();
    let eta = xpm_closed_form_total(&plan, &transfer, &pairs, false).unwrap();
    let eta_dbp = xpm_closed_form_total(&plan, &transfer, &pairs, true).unwrap();
    println!("closed-form pair coefficients in {:.1} s", t.elapsed().as_secs_f64());
    println!("ch  f(GHz)  snr(dB)  delta_eta(dB)  delta_eta_dbp(dB)");
    let k = 8.0 / (8.0 + transfer.fractional_raman);
    let mut model: Vec<(usize, f64, f64)> = Vec::new();
    for (row, &i) in pairs.channel_indices.iter().enumerate() {
        let ch = &plan.channels[i];
        let mut eta_ref = pairs.spm[row];
        for (_, c) in &pairs.xpm[row] {
            eta_ref += c;
        }
        let mut eta_ref_dbp = 0.0;
        for (_, c) in &pairs.xpm[row] {
            eta_ref_dbp += c;
        }
        let de = linear_to_db(k * k * eta[row] / eta_ref);
        let de_dbp = linear_to_db(k * k * eta_dbp[row] / eta_ref_dbp);
        let snr = linear_to_db(1.0 / (eta[row] * ch.power_w * ch.power_w));
        model.push((i, de, de_dbp));
        println!(
            "{i:2}  {:7.1}  {snr:6.2}   {de:8.4}      {de_dbp:8.4}   (r_xpm {:.4} dB)",
            ch.center_hz / 1e9,
            linear_to_db(scaling_xpm(&transfer, ch.center_hz.abs()))
        );
    }

    // Grid the full-fidelity run would use.
    let ssfm_cfg = SsfmRunConfig { n_symbols: 8192, ..Default::default() };
    let (sim, _) = choose_grid(&plan, &ssfm_cfg).unwrap();
    println!(
        "full-scale grid: fs = {} GHz, n = 2^{}",
        sim.sample_rate_hz / 1e9,
        sim.n_samples.trailing_zeros()
    );

    // Paired-estimator noise at reduced scale: same plan, fewer symbols,
    // reduced step count, 2 realizations, several independent base seeds.
    // The seed-to-seed spread scales ∝ 1/sqrt(symbols·realizations).
    let n_sym: usize = std::env::args().nth(5).and_then(|s| s.parse().ok()).unwrap_or(1024);
    let n_seeds: usize = std::env::args().nth(6).and_then(|s| s.parse().ok()).unwrap_or(2);
    let reduced = SimGrid {
        sample_rate_hz: sim.sample_rate_hz,
        n_samples: n_sym * (sim.sample_rate_hz / 5e9) as usize,
    };
    println!(
        "noise probe grid: fs = {} GHz, n = 2^{}, {steps} steps, {n_seeds} seeds",
        reduced.sample_rate_hz / 1e9,
        reduced.n_samples.trailing_zeros()
    );
    let snapped = snapped_plan(&plan, reduced.sample_rate_hz, reduced.n_samples).unwrap();

    // Receiver implementation floor: linear-only propagation (γ = 0) of the
    // same waveform, received identically. Any finite SNR here is tx/rx
    // machinery, not nonlinear interference.
    {
        use raman_nli::ssfm::tx_generate;
        let linear_fiber = raman_nli::fiber::FiberSpec { gamma: 0.0, ..fiber };
        let tx = tx_generate(&snapped, reduced.sample_rate_hz, reduced.n_samples, 7).unwrap();
        let cfg = SsfmConfig {
            distribution: StepDistribution::Logarithmic,
            ..SsfmConfig::new(120, 7)
        };
        let (out, _) = raman_nli::ssfm::propagate_gme(&tx.field, &linear_fiber, &transfer, &cfg).unwrap();
        let floors: Vec<f64> = occ
            .iter()
            .map(|&ch| {
                let rec = tx.record_for(ch).unwrap();
                let r = raman_nli::ssfm::rx_process(&out, rec, &linear_fiber, linear_fiber.span_length)
                    .unwrap();
                10.0 * r.snr_linear.log10()
            })
            .collect();
        let worst = floors.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("rx floor (linear-only) SNR per channel: {floors:.1?}  worst {worst:.1} dB");
    }
    let mut estimates = Vec::new();
    for s in 0..n_seeds {
        let base_seed = 7 + 1000 * s as u64;
        let config = SsfmConfig {
            distribution: StepDistribution::Logarithmic,
            ..SsfmConfig::new(steps, base_seed)
        };
        let t = Instant::now();
        let rows = measure_delta_eta(
            &snapped,
            &fiber,
            Some(&spectrum),
            Polarization::Dual,
            reduced,
            &config,
            &occ,
            &[occ[0]],
        )
        .unwrap();
        println!("measure_delta_eta(seed {base_seed}) in {:.1} s", t.elapsed().as_secs_f64());
        estimates.push(rows);
    }
    println!("ch   model     mean       sd        per-seed");
    for i in 0..occ.len() {
        let (ch, de_model, _) = model[i];
        let vals: Vec<f64> = estimates.iter().map(|e| e[i].delta_eta_db).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / (vals.len() as f64 - 1.0).max(1.0))
        .sqrt();
        let list: Vec<String> = vals.iter().map(|v| format!("{v:7.4}")).collect();
        println!("{ch:2}  {de_model:8.4}  {mean:8.4}  {sd:8.4}   [{}]", list.join(" "));
    }
    let (_, de_model_dbp0) = (model[0].0, model[0].2);
    let dbp_vals: Vec<f64> = estimates
        .iter()
        .filter_map(|e| e[0].delta_eta_dbp_db)
        .collect();
    if !dbp_vals.is_empty() {
        let mean = dbp_vals.iter().sum::<f64>() / dbp_vals.len() as f64;
        let list: Vec<String> = dbp_vals.iter().map(|v| format!("{v:7.4}")).collect();
        println!(
            "dbp ch{}: model {de_model_dbp0:8.4}  mean {mean:8.4}  [{}]  snr_dbp(s7) {:.2} dB (plain {:.2})",
            occ[0],
            list.join(" "),
            estimates[0][0].snr_full_dbp_db.unwrap_or(f64::NAN),
            estimates[0][0].snr_full_db,
        );
    }
    let status = std::fs::read_to_string("/proc/self/status").unwrap();
    for line in status.lines() {
        if line.starts_with("VmPeak") || line.starts_with("VmRSS") {
            println!("{line}");
        }
    }
}
