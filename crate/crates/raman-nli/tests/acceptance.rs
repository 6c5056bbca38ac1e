//! End-to-end acceptance checks: each test drives the public API the way a
//! user would and prints a PASS line with the measured numbers, so a plain
//! `cargo test --test acceptance -- --nocapture` doubles as a results table.
//!
//! The full-fidelity sparse-plan comparison (`desk_scale_full`) propagates
//! 2^21-sample fields for 10^4 steps four times and is `#[ignore]`d from the
//! default suite; `desk_scale_smoke` runs the identical protocol at reduced
//! depth. Run the full version with
//! `cargo test --release --test acceptance desk_scale_full -- --ignored --nocapture`.

use raman_nli::fiber::build_psd;
use raman_nli::gn::{evaluate_plan, NliConfig};
use raman_nli::profile::{log_z_grid, raman_ode_profile};
use raman_nli::raman::Polarization;
use raman_nli::scenario::{
    build_fiber, build_plan, build_spectrum, build_transfer, choose_grid, load_scenario,
    LoadedScenario,
};
use raman_nli::ssfm::{measure_delta_eta, snapped_plan, DeltaEtaRow, SsfmConfig};
use std::time::Instant;

fn desk_scenario() -> LoadedScenario {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../configs/desk_cband_sparse.json"
    );
    load_scenario(std::path::Path::new(path)).expect("desk scenario config loads")
}

/// Shared body of the sparse-plan model-vs-simulation comparison. Asserts,
/// on one paired simulation of the whole plan:
///  (a) every measured Δη₁ ≤ 0, the magnitude is largest on the isolated
///      low-frequency edge channel, and back-propagation deepens it, and
///  (b) |Δη₁(model) − Δη₁(simulation)| ≤ 0.05 dB on every checked channel.
fn run_desk_comparison(loaded: &LoadedScenario, gn_channels: &[usize], label: &str) {
    let config = &loaded.config;
    let fiber = build_fiber(config).expect("fiber");
    let (spectrum, _) = build_spectrum(config, &loaded.base_dir).expect("spectrum");
    let transfer = build_transfer(config, &spectrum);
    let plan = build_plan(config).expect("plan");
    let occ = plan.occupied_indices();
    let dbp_channel = config.run.dbp_channels[0];

    let (grid, _) = choose_grid(&plan, &config.run.ssfm).expect("grid");
    let snapped = snapped_plan(&plan, grid.sample_rate_hz, grid.n_samples).expect("snapped plan");
    println!(
        "{label}: fs = {} GHz, n = 2^{}, {} log steps, 2^{} symbols x {} realizations, \
         {} rayon threads",
        grid.sample_rate_hz / 1e9,
        grid.n_samples.trailing_zeros(),
        config.run.ssfm.steps_per_span,
        config.run.ssfm.n_symbols.trailing_zeros(),
        config.run.ssfm.realizations,
        rayon::current_num_threads(),
    );

    // Model: full spectral integral, plain on the checked channels and with
    // the self-window removed on the back-propagated one.
    let t = Instant::now();
    let b_min = snapped.min_symbol_rate().expect("occupied plan");
    let psd = build_psd(&snapped, b_min / 8.0).expect("psd");
    let z = log_z_grid(fiber.span_length, 96);
    let runs = support_runs(&psd);
    let profile = raman_ode_profile(&psd, &spectrum, &fiber, &z, b_min / 2.0, false)
        .expect("power profile")
        .widened_to(runs.first().expect("occupied psd").0, runs.last().unwrap().1);
    let mut nli = NliConfig::new(Polarization::Dual, b_min / 8.0);
    nli.channels = gn_channels.to_vec();
    let report = evaluate_plan(&snapped, &psd, &fiber, &transfer, &profile, &nli, 0.0, 1)
        .expect("model evaluation");
    let mut nli_dbp = nli.clone();
    nli_dbp.channels = vec![dbp_channel];
    nli_dbp.dbp = true;
    let report_dbp = evaluate_plan(&snapped, &psd, &fiber, &transfer, &profile, &nli_dbp, 0.0, 1)
        .expect("model evaluation with back-propagation");
    let model_secs = t.elapsed().as_secs_f64();

    // Simulation: one paired run measures every channel plainly and the
    // back-propagated channel both ways.
    let s = &config.run.ssfm;
    let sim_config = SsfmConfig {
        steps_per_span: s.steps_per_span,
        distribution: s.distribution,
        response: raman_nli::ssfm::ResponseMode::FullTransfer,
        seed: s.seed,
        realizations: s.realizations,
    };
    let t = Instant::now();
    let rows = measure_delta_eta(
        &snapped,
        &fiber,
        Some(&spectrum),
        config.run.polarization,
        grid,
        &sim_config,
        &occ,
        &[dbp_channel],
    )
    .expect("paired simulation");
    let sim_secs = t.elapsed().as_secs_f64();

    let row_of = |ch: usize| -> &DeltaEtaRow {
        rows.iter()
            .find(|r| r.channel_index == ch)
            .expect("measured channel")
    };

    println!("{label}: model {model_secs:.0} s, simulation {sim_secs:.0} s");
    println!("{label}: ch   f(GHz)    sim Δη₁(dB)   model Δη₁(dB)");
    for (slot, &ch) in gn_channels.iter().enumerate() {
        let sim = row_of(ch).delta_eta_db;
        let model = report.delta_eta_db[slot];
        println!(
            "{label}: {ch:3}  {:7.1}   {sim:11.4}   {model:11.4}",
            snapped.channels[ch].center_hz / 1e9
        );
        assert!(
            (model - sim).abs() <= 0.05,
            "channel {ch}: model {model:.4} dB vs simulation {sim:.4} dB \
             differ by more than 0.05 dB"
        );
    }
    let sim_dbp = row_of(dbp_channel)
        .delta_eta_dbp_db
        .expect("back-propagated measurement");
    let model_dbp = report_dbp.delta_eta_db[0];
    println!(
        "{label}: ch {dbp_channel} with back-propagation: sim {sim_dbp:.4} dB, \
         model {model_dbp:.4} dB"
    );
    assert!(
        (model_dbp - sim_dbp).abs() <= 0.05,
        "back-propagated channel {dbp_channel}: model {model_dbp:.4} dB vs \
         simulation {sim_dbp:.4} dB differ by more than 0.05 dB"
    );

    // (a) sign: the real-response impact never increases the interference.
    for r in &rows {
        assert!(
            r.delta_eta_db <= 0.0,
            "channel {}: measured Δη₁ = {:.4} dB > 0",
            r.channel_index,
            r.delta_eta_db
        );
    }
    assert!(sim_dbp <= 0.0, "back-propagated Δη₁ = {sim_dbp:.4} dB > 0");

    // (a) ordering: largest magnitude on the isolated low-frequency edge.
    let edge = row_of(occ[0]).delta_eta_db;
    for r in rows.iter().filter(|r| r.channel_index != occ[0]) {
        assert!(
            edge < r.delta_eta_db,
            "edge channel {} (Δη₁ = {edge:.4} dB) must carry a larger impact \
             than channel {} ({:.4} dB)",
            occ[0],
            r.channel_index,
            r.delta_eta_db
        );
    }

    // (a) back-propagation: removing the self-interference deepens the
    // relative impact of the remaining cross terms.
    let plain = row_of(dbp_channel).delta_eta_db;
    assert!(
        sim_dbp < plain,
        "back-propagation must deepen Δη₁ (with: {sim_dbp:.4} dB, without: {plain:.4} dB)"
    );

    println!(
        "PASS {label}: sign, edge ordering, and back-propagation deepening hold; \
         worst |model − sim| within 0.05 dB"
    );
}

/// Sparse-plan comparison at the full protocol depth (10^4 log steps, 2^13
/// symbols, 2 realizations). Several CPU-hours of work when single-threaded;
/// realizations and the paired runs parallelize across rayon workers.
#[test]
#[ignore = "full-fidelity comparison; run explicitly with --ignored"]
fn desk_scale_full() {
    let loaded = desk_scenario();
    let occ = vec![0, 3, 4, 5, 9, 10, 11, 12, 13, 14];
    run_desk_comparison(&loaded, &occ, "desk full");
}

/// The identical protocol at reduced depth (600 steps, 2^10 symbols): the
/// paired estimator resolves the same ordering at a tenth of a millidecibel,
/// so the default suite exercises every assertion of the full run.
#[test]
fn desk_scale_smoke() {
    let mut loaded = desk_scenario();
    loaded.config.run.ssfm.steps_per_span = 600;
    loaded.config.run.ssfm.n_symbols = 1024;
    run_desk_comparison(&loaded, &[0, 11], "desk smoke");
}
