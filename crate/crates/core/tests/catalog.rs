use phip_core::catalog::{self, category, BuildOptions, NAMES};
use phip_core::propagator::{evolve, EvolveOptions};
use phip_core::sequence::{schedule, Category, SegmentKind};
use phip_core::spin::{ErrorParams, MoleculeParams};
use std::f64::consts::TAU;

fn final_p(name: &str, p: &MoleculeParams, o: &BuildOptions, e: &ErrorParams) -> f64 {
    let prog = catalog::build(name, p, o).unwrap();
    let sch = schedule(&prog, p).unwrap();
    evolve(&sch, e, &EvolveOptions { samples: 2, ..Default::default() }).unwrap().final_transfer()
}

fn pulsed(name: &str, p: &MoleculeParams) -> bool {
    let prog = catalog::build(name, p, &BuildOptions::default()).unwrap();
    prog.core.iter().all(|s| matches!(s.kind, SegmentKind::Pulse | SegmentKind::Wait))
}

#[test]
fn every_entry_transfers_without_errors() {
    let p = MoleculeParams::pyruvate();
    let mut low = Vec::new();
    for name in NAMES {
        // The swept sequence is specified together with its (2π)3 Hz dipolar field.
        let (o, e) = if name == "amp swept SLIC" {
            let ddf = TAU * 3.0;
            (BuildOptions { design_df: Some(ddf), ..Default::default() }, ErrorParams { delta_df: ddf, ..Default::default() })
        } else {
            Default::default()
        };
        let v = final_p(name, &p, &o, &e);
        if v < 0.95 {
            low.push((name, v));
        }
    }
    assert!(low.is_empty(), "{low:?}");
}

#[test]
fn ideal_pulses_transfer_fully() {
    // Pulse-length-bound sequences need Ω-proportional repetition counts, so stay moderate.
    let mut p = MoleculeParams::pyruvate();
    p.omega *= 20.0;
    p.omega_i *= 20.0;
    let mut low = Vec::new();
    for name in NAMES.into_iter().filter(|n| pulsed(n, &p)) {
        // PP+XY ties τ to the pulse filling; ideal pulses at the same Jτ mean a filling shrunk by the same factor.
        let o = BuildOptions { eta: (name == "PP+XY").then_some(0.2 / 20.0), ..Default::default() };
        let v = final_p(name, &p, &o, &ErrorParams::default());
        if v < 0.99 {
            low.push((name, v));
        }
    }
    assert!(low.is_empty(), "{low:?}");
}

#[test]
fn ideal_core_matches_nominal_period() {
    let mut p = MoleculeParams::pyruvate();
    p.omega *= 1e6;
    p.omega_i *= 1e6;
    // PulsePol* unrolls all repetitions into one core.
    for name in NAMES.into_iter().filter(|n| *n != "PulsePol*" && pulsed(n, &p)) {
        let prog = catalog::build(name, &p, &BuildOptions { reps: Some(1), ..Default::default() }).unwrap();
        let sch = schedule(&prog, &p).unwrap();
        let nominal = prog.metadata.period;
        assert!((sch.period - nominal).abs() <= 1e-5 * nominal, "{name}: {} vs {nominal}", sch.period);
    }
}

#[test]
fn adjusted_sequences_cancel_their_design_field() {
    let p = MoleculeParams::pyruvate();
    for (adj, plain) in [("SLIC*", "SLIC"), ("PulsePol*", "PulsePol")] {
        assert_eq!(category(adj), Category::Adjusted);
        let ddf = TAU * 0.25;
        let o = BuildOptions { design_df: Some(ddf), ..Default::default() };
        let with = final_p(adj, &p, &o, &ErrorParams { delta_df: ddf, ..Default::default() });
        let reference = final_p(plain, &p, &BuildOptions::default(), &ErrorParams::default());
        assert!((with - reference).abs() < 0.01, "{adj}: {with} vs {plain} {reference}");
        let spoiled = final_p(plain, &p, &BuildOptions::default(), &ErrorParams { delta_df: ddf, ..Default::default() });
        assert!(spoiled < with - 0.05, "{plain} under the same field: {spoiled}");
    }
}
