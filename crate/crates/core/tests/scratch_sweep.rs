// Temporary diagnostic — deleted before shipping.
use ddlink::channel::{assemble_td_channel, sample_paths};
use ddlink::harness::parse_config;
use ddlink::pda;
use ddlink::rng::{complex_gaussian, substream};
use ddlink::simopt::{optimize_system, AscentConfig, GainKnowledge, Objective};
use ddlink::waveforms::{effective_channel, qpsk_map};
use nalgebra::DVector;
use rand::Rng;

#[test]
fn sweep_support_recovery() {
    let text = std::fs::read_to_string("../../configs/mse_sensing.toml").unwrap();
    let cfg = parse_config(&text).unwrap();
    let grid = cfg.sampling_grid();
    let sampler = cfg.channel_sampler();
    let est_grid = cfg.estimator_grid().unwrap();
    let specs = cfg.frame_specs().unwrap();
    let n = cfg.frame.n;
    let truth = [36usize, 96]; // tap5@-60mps, tap13@+60mps

    for (its, damp) in [(30usize, 0.5f64)] {
        for snr_db in [30.0f64, 40.0, 50.0, 80.0] {
            let mut exact = 0;
            let mut total = 0;
            for seed in 0..20u64 {
                let mut chan_rng = substream(seed, &[7, 0, 0, 0]);
                let paths = sample_paths(&sampler, &grid, &mut chan_rng);
                let mut sys = cfg.build_mpdd_system().unwrap();
                optimize_system(&mut sys, &paths.direct, Objective::Sensing,
                    GainKnowledge::Unity, &AscentConfig::new(200, 0.99).unwrap()).unwrap();
                for spec in &specs {
                    let td = assemble_td_channel(&sys, &paths, n, spec.cp_phase()).unwrap();
                    let (td, _) = td.normalized(n as f64).unwrap();
                    let eff = effective_channel(&td, spec).unwrap();
                    let mut bit_rng = substream(seed, &[7, 0, 0, 1]);
                    let bits: Vec<u8> = (0..2*n).map(|_| bit_rng.random_range(0..=1) as u8).collect();
                    let x = qpsk_map(&bits, 2.0).unwrap();
                    let nv = 2.0 / 10f64.powf(snr_db / 10.0);
                    let mut noise_rng = substream(seed, &[7, 0, 0, 2]);
                    let w = DVector::from_fn(n, |_, _| complex_gaussian(&mut noise_rng, nv));
                    let y = eff.apply(&x).unwrap() + w;
                    let dict = pda::build_dictionary(&est_grid, &x, spec).unwrap();
                    let pda_cfg = pda::PdaConfig::new(its, damp, nv, 2).unwrap();
                    let est = pda::estimate(&y, &dict, &pda_cfg).unwrap();
                    let mut sel: Vec<usize> = est.atoms.iter().map(|a| a.index).collect();
                    sel.sort_unstable();
                    total += 1;
                    if sel == truth { exact += 1; } else {
                        println!("MISS seed={seed} wf={} sel={sel:?}", spec.kind.label());
                        let mut ranked: Vec<(f64, usize)> = (0..dict.columns.ncols()).map(|k| (est.state.scores[k], k)).collect();
                        ranked.sort_by(|a,b| b.0.partial_cmp(&a.0).unwrap());
                        for (sc, k) in ranked.iter().take(5) {
                            let (tap, f) = dict.grid.point(*k);
                            println!("   atom {k} tap {tap} f {f:+.4}: score {sc:.1} |h| {:.4}", est.state.replicas[*k].norm());
                        }
                    }
                }
            }
            println!("its={its} damp={damp} snr={snr_db}: exact {exact}/{total}");
        }
    }
}
