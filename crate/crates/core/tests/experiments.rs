use std::collections::HashSet;

use tpm_kdc_core::experiments::{
    derive_trial_seeds, mean, median, run_attack_bench, run_randomness, run_sweep, Dimension,
    RunLimits, SweepSpec, SWEEP_COLUMNS,
};
use tpm_kdc_core::{LearningRule, TpmParams};

fn sweep_spec() -> SweepSpec {
    SweepSpec {
        varying: Dimension::N,
        values: vec![4, 8, 12],
        k: 3,
        n: 11,
        l: 3,
        rule: LearningRule::Hebbian,
        trials_per_value: 6,
        base_seed: 99,
        limits: RunLimits::default(),
    }
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>)) -> String {
    let mut buf = Vec::new();
    write(&mut buf);
    String::from_utf8(buf).unwrap()
}

fn drop_column(csv: &str, column: usize) -> String {
    csv.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            if f.len() == SWEEP_COLUMNS.len() {
                f.remove(column);
            }
            f.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn sweep_replays_identically() {
    let a = run_sweep(&sweep_spec()).unwrap();
    let b = run_sweep(&sweep_spec()).unwrap();
    let ca = csv_bytes(|buf| a.write_csv(buf).unwrap());
    let cb = csv_bytes(|buf| b.write_csv(buf).unwrap());
    let elapsed = SWEEP_COLUMNS
        .iter()
        .position(|c| *c == "elapsed_micros")
        .unwrap();
    assert_eq!(drop_column(&ca, elapsed), drop_column(&cb, elapsed));
    let order: Vec<(u64, u64)> = a
        .rows
        .iter()
        .map(|r| (r.varying_value, r.trial_index))
        .collect();
    let mut sorted = order.clone();
    sorted.sort();
    assert_eq!(order, sorted);
}

#[test]
fn sweep_summary_recomputes_from_rows() {
    let r = run_sweep(&sweep_spec()).unwrap();
    let text = csv_bytes(|buf| r.write_csv(buf).unwrap());
    let (data, summary) = text.split_once("\n\n").unwrap();
    let mut rdr = csv::Reader::from_reader(data.as_bytes());
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        SWEEP_COLUMNS.to_vec()
    );
    let mut by_value: std::collections::BTreeMap<u64, Vec<u64>> = Default::default();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert_eq!(rec.len(), SWEEP_COLUMNS.len());
        let pct: f64 = rec[5].parse().unwrap();
        assert!((0.0..=1.0).contains(&pct));
        by_value
            .entry(rec[0].parse().unwrap())
            .or_default()
            .push(rec[3].parse().unwrap());
    }
    let mut srdr = csv::Reader::from_reader(summary.as_bytes());
    let mut seen = 0;
    for rec in srdr.records() {
        let rec = rec.unwrap();
        let rounds = &by_value[&rec[0].parse::<u64>().unwrap()];
        assert_eq!(rec[1].parse::<usize>().unwrap(), rounds.len());
        assert!((rec[4].parse::<f64>().unwrap() - mean(rounds)).abs() < 1e-9);
        assert!((rec[5].parse::<f64>().unwrap() - median(rounds)).abs() < 1e-9);
        seen += 1;
    }
    assert_eq!(seen, 3);
}

#[test]
fn sweep_over_l_and_k() {
    let mut s = sweep_spec();
    s.varying = Dimension::L;
    s.values = vec![1, 2, 3];
    s.trials_per_value = 2;
    assert_eq!(run_sweep(&s).unwrap().rows.len(), 6);
    s.varying = Dimension::K;
    s.values = vec![1, 2, 3];
    assert_eq!(run_sweep(&s).unwrap().rows.len(), 6);
}

#[test]
fn trial_seeds_are_pairwise_distinct() {
    let mut seen = HashSet::new();
    for v in [4u64, 8, 12] {
        for t in 0..6 {
            let s = derive_trial_seeds(99, v, t);
            for seed in [s.input, s.weight_a, s.weight_b, s.weight_e] {
                assert!(seen.insert(seed));
            }
        }
    }
}

#[test]
fn attack_rows_and_summary() {
    let p = TpmParams::new(3, 6, 2, LearningRule::Hebbian).unwrap();
    let r = run_attack_bench(40, p, 5, RunLimits::default()).unwrap();
    assert_eq!(r.rows.len(), 40);
    for row in &r.rows {
        if row.attacker_synced == 1 {
            assert_eq!(row.attacker_mean_overlap, 1.0);
        }
    }
    let n = r.rows.len() as f64;
    let attacker = r.rows.iter().filter(|x| x.attacker_synced == 1).count() as f64 / n;
    assert_eq!(r.summary.attacker_sync_fraction, attacker);
    let again = run_attack_bench(40, p, 5, RunLimits::default()).unwrap();
    assert_eq!(r.rows, again.rows);
    let text = csv_bytes(|buf| r.write_csv(buf).unwrap());
    assert!(text.starts_with(
        "trial_index,partner_synced,partner_rounds_used,attacker_synced,attacker_mean_overlap\n"
    ));
}

#[test]
fn randomness_csv_shape() {
    let p = TpmParams::new(3, 11, 3, LearningRule::Hebbian).unwrap();
    let r = run_randomness(5, p, 3, RunLimits::default()).unwrap();
    let text = csv_bytes(|buf| r.write_csv(buf).unwrap());
    let (data, summary) = text.split_once("\n\n").unwrap();
    assert_eq!(data.lines().count(), 6);
    assert!(data.starts_with("trial_index,synced,rounds_used,fingerprint\n"));
    assert!(summary.starts_with("trials,synced,distinct_fingerprints,distinct_keys\n5,5,5,5"));
    // keys never leak into the CSV
    for k in &r.keys {
        assert!(!text.contains(&hex::encode(k)));
    }
}
