//! Straight-line reference model of the key exchange, written with plain
//! nested vectors and loops. It shares no code with the crate under test and
//! serves as the oracle for golden values.

#![allow(dead_code)]

pub struct Mix {
    s: u64,
}

impl Mix {
    pub fn new(seed: u64) -> Self {
        Mix { s: seed }
    }

    pub fn next(&mut self) -> u64 {
        self.s = self.s.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.s;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    pub fn weights(&mut self, k: usize, n: usize, l: i64) -> Vec<Vec<i64>> {
        let mut w = vec![vec![0i64; n]; k];
        for row in w.iter_mut() {
            for v in row.iter_mut() {
                *v = (self.next() % (2 * l as u64 + 1)) as i64 - l;
            }
        }
        w
    }

    pub fn input(&mut self, k: usize, n: usize) -> Vec<Vec<i64>> {
        let mut x = vec![vec![0i64; n]; k];
        for row in x.iter_mut() {
            for v in row.iter_mut() {
                *v = if self.next() % 2 == 1 { 1 } else { -1 };
            }
        }
        x
    }
}

pub fn hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 14695981039346656037;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(1099511628211);
    }
    h
}

pub fn key_bytes(w: &[Vec<i64>], l: i64) -> Vec<u8> {
    let mut out = Vec::new();
    for row in w {
        for &v in row {
            out.push((v + l) as u8);
        }
    }
    out
}

pub fn key_hash(w: &[Vec<i64>], l: i64) -> u64 {
    hash(&key_bytes(w, l))
}

/// Returns (sigma, tau) with sign(0) = -1.
pub fn evaluate(w: &[Vec<i64>], x: &[Vec<i64>]) -> (Vec<i64>, i64) {
    let mut sigma = Vec::new();
    let mut tau = 1;
    for i in 0..w.len() {
        let mut h = 0i64;
        for j in 0..w[i].len() {
            h += w[i][j] * x[i][j];
        }
        let s = if h > 0 { 1 } else { -1 };
        sigma.push(s);
        tau *= s;
    }
    (sigma, tau)
}

/// rule: 0 Hebbian, 1 Anti-Hebbian, 2 random walk.
pub fn learn(w: &mut [Vec<i64>], x: &[Vec<i64>], sigma: &[i64], tau: i64, l: i64, rule: u8) {
    for i in 0..w.len() {
        if sigma[i] != tau {
            continue;
        }
        for j in 0..w[i].len() {
            let mut v = match rule {
                0 => w[i][j] + x[i][j] * tau,
                1 => w[i][j] - x[i][j] * tau,
                _ => w[i][j] + x[i][j],
            };
            if v > l {
                v = l;
            }
            if v < -l {
                v = -l;
            }
            w[i][j] = v;
        }
    }
}

pub fn mean_overlap(a: &[Vec<i64>], b: &[Vec<i64>]) -> f64 {
    let mut total = 0.0;
    for i in 0..a.len() {
        let mut dot = 0i64;
        let mut na = 0i64;
        let mut nb = 0i64;
        for j in 0..a[i].len() {
            dot += a[i][j] * b[i][j];
            na += a[i][j] * a[i][j];
            nb += b[i][j] * b[i][j];
        }
        if na != 0 && nb != 0 {
            total += dot as f64 / ((na as f64) * (nb as f64)).sqrt();
        }
    }
    total / a.len() as f64
}

#[derive(Debug, Clone, Copy)]
pub struct Setup {
    pub k: usize,
    pub n: usize,
    pub l: i64,
    pub rule: u8,
    pub max_rounds: u64,
    pub window: u64,
    pub input_seed: u64,
    pub seed_a: u64,
    pub seed_b: u64,
    pub seed_e: u64,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub synced: bool,
    pub rounds: u64,
    pub updates: u64,
    pub wa: Vec<Vec<i64>>,
    pub wb: Vec<Vec<i64>>,
    pub we: Vec<Vec<i64>>,
    pub attacker_synced: bool,
    pub attacker_overlap: f64,
}

/// Plays the session: agreement streak triggers a fingerprint comparison,
/// a mismatch resets the streak, the cap ends it.
pub fn simulate(s: Setup) -> Outcome {
    let mut inputs = Mix::new(s.input_seed);
    let mut wa = Mix::new(s.seed_a).weights(s.k, s.n, s.l);
    let mut wb = Mix::new(s.seed_b).weights(s.k, s.n, s.l);
    let mut we = Mix::new(s.seed_e).weights(s.k, s.n, s.l);
    let mut rounds = 0u64;
    let mut updates = 0u64;
    let mut streak = 0u64;
    let mut synced = false;
    while rounds < s.max_rounds {
        let x = inputs.input(s.k, s.n);
        let (sa, ta) = evaluate(&wa, &x);
        let (sb, tb) = evaluate(&wb, &x);
        let (se, _) = evaluate(&we, &x);
        if ta == tb {
            learn(&mut wa, &x, &sa, ta, s.l, s.rule);
            learn(&mut wb, &x, &sb, tb, s.l, s.rule);
            learn(&mut we, &x, &se, ta, s.l, s.rule);
            streak += 1;
            updates += 1;
        } else {
            streak = 0;
        }
        rounds += 1;
        if streak >= s.window {
            if key_hash(&wa, s.l) == key_hash(&wb, s.l) {
                synced = true;
                break;
            }
            streak = 0;
        }
    }
    let attacker_synced = we == wa;
    let attacker_overlap = mean_overlap(&we, &wa);
    Outcome {
        synced,
        rounds,
        updates,
        wa,
        wb,
        we,
        attacker_synced,
        attacker_overlap,
    }
}

/// Per-trial seeds: FNV-1a of base, value and trial as big-endian u64,
/// then three SplitMix64 draws for A, B and E.
pub fn trial_setup(base: u64, value: u64, trial: u64) -> (u64, u64, u64, u64) {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&base.to_be_bytes());
    bytes.extend_from_slice(&value.to_be_bytes());
    bytes.extend_from_slice(&trial.to_be_bytes());
    let seed = hash(&bytes);
    let mut m = Mix::new(seed);
    let a = m.next();
    let b = m.next();
    let e = m.next();
    (seed, a, b, e)
}

pub fn trial(k: usize, n: usize, l: i64, rule: u8, base: u64, value: u64, t: u64) -> Outcome {
    let (input_seed, seed_a, seed_b, seed_e) = trial_setup(base, value, t);
    simulate(Setup {
        k,
        n,
        l,
        rule,
        max_rounds: 100_000,
        window: 50,
        input_seed,
        seed_a,
        seed_b,
        seed_e,
    })
}
