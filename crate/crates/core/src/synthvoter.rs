//! Synthetic voter: tile entropy times tile-pattern KL similarity to a corpus.
//!
//! Used to label pretraining pairs and to stand in for live voters in
//! closed-loop simulations.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tilemap::{Grid, PatternLibrary, TileMap, CHANNELS};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("pattern corpus is empty")]
    EmptyCorpus,
    #[error("corpus is for tileset {corpus:?}, map uses {map:?}")]
    TilesetMismatch { corpus: String, map: String },
    #[error("maps in a poll must share a tileset")]
    PairMismatch,
    #[error("invalid synthetic voter config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub k: usize,
    pub epsilon: f64,
    pub voters_per_poll: u32,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            k: 2,
            epsilon: 1e-5,
            voters_per_poll: 28,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.epsilon > 0.0) || self.voters_per_poll == 0 || !(2..=4).contains(&self.k) || !(self.noise_sigma >= 0.0) {
            return Err(SynthError::BadConfig(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn noiseless(self) -> Self {
        SynthConfig {
            noise_sigma: 0.0,
            ..self
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        SynthConfig { seed, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoScore {
    pub entropy: f64,
    pub kl: f64,
    pub similarity: f64,
    pub votes_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulatedPoll {
    pub votes_a: u32,
    pub votes_b: u32,
}

impl SimulatedPoll {
    pub fn y_a(&self) -> f64 {
        self.votes_a as f64 / (self.votes_a + self.votes_b) as f64
    }
}

/// Shannon entropy of the tile histogram normalised by log 16.
pub fn tile_entropy(grid: &Grid) -> f64 {
    let mut hist = [0usize; CHANNELS];
    for &c in grid.cells() {
        hist[c as usize] += 1;
    }
    let n = grid.cells().len() as f64;
    let h: f64 = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * (1.0 / p).ln()
        })
        .sum();
    (h / (CHANNELS as f64).ln()).clamp(0.0, 1.0)
}

fn check_corpus(map: &TileMap, corpus: &PatternLibrary) -> Result<(), SynthError> {
    if corpus.is_empty() {
        return Err(SynthError::EmptyCorpus);
    }
    if corpus.tileset_id != map.tileset_id {
        return Err(SynthError::TilesetMismatch {
            corpus: corpus.tileset_id.clone(),
            map: map.tileset_id.clone(),
        });
    }
    Ok(())
}

fn grid_patterns(grid: &Grid, k: usize) -> BTreeMap<Vec<u8>, u64> {
    let mut counts = BTreeMap::new();
    let n = grid.size();
    if n >= k {
        for r in 0..=n - k {
            for c in 0..=n - k {
                *counts.entry(grid.block(r, c, k)).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// KL(P‖Q) between ε-smoothed pattern distributions of a grid (P) and a
/// corpus (Q) over their union support.
pub fn pattern_kl(grid: &Grid, corpus: &PatternLibrary, epsilon: f64) -> f64 {
    let p_counts = grid_patterns(grid, corpus.k);
    let p_total: u64 = p_counts.values().sum();
    let q_total = corpus.total();
    if p_total == 0 {
        return 0.0;
    }

    // merge the two sorted supports
    let mut pairs: Vec<(u64, u64)> = Vec::with_capacity(corpus.counts().len() + p_counts.len());
    let mut ps = p_counts.iter().peekable();
    let mut qs = corpus.counts().iter().peekable();
    loop {
        let next = match (ps.peek(), qs.peek()) {
            (None, None) => break,
            (Some(_), None) => (*ps.next().unwrap().1, 0),
            (None, Some(_)) => (0, *qs.next().unwrap().1),
            (Some((pk, _)), Some((qk, _))) => match pk.cmp(qk) {
                Ordering::Less => (*ps.next().unwrap().1, 0),
                Ordering::Greater => (0, *qs.next().unwrap().1),
                Ordering::Equal => (*ps.next().unwrap().1, *qs.next().unwrap().1),
            },
        };
        pairs.push(next);
    }

    let support = pairs.len() as f64;
    let zp = 1.0 + epsilon * support;
    let zq = 1.0 + epsilon * support;
    let kl: f64 = pairs
        .iter()
        .map(|&(pc, qc)| {
            let p = (pc as f64 / p_total as f64 + epsilon) / zp;
            let q = (qc as f64 / q_total as f64 + epsilon) / zq;
            p * (p / q).ln()
        })
        .sum();
    kl.max(0.0)
}

pub fn tpkl_divergence(map: &TileMap, corpus: &PatternLibrary, cfg: &SynthConfig) -> Result<f64, SynthError> {
    check_corpus(map, corpus)?;
    Ok(pattern_kl(&map.grid, corpus, cfg.epsilon))
}

/// Noise-free score of a grid against a corpus of the same tileset.
pub fn pseudo_score_grid(grid: &Grid, corpus: &PatternLibrary, cfg: &SynthConfig) -> PseudoScore {
    let entropy = tile_entropy(grid);
    let kl = pattern_kl(grid, corpus, cfg.epsilon);
    let similarity = 1.0 / (1.0 + kl);
    PseudoScore {
        entropy,
        kl,
        similarity,
        votes_value: cfg.voters_per_poll as f64 * entropy * similarity,
    }
}

pub fn pseudo_score(map: &TileMap, corpus: &PatternLibrary, cfg: &SynthConfig) -> Result<PseudoScore, SynthError> {
    cfg.validate()?;
    check_corpus(map, corpus)?;
    Ok(pseudo_score_grid(&map.grid, corpus, cfg))
}

fn add_noise<R: Rng>(value: f64, cfg: &SynthConfig, rng: &mut R) -> f64 {
    let sigma = cfg.noise_sigma * cfg.voters_per_poll as f64;
    let noise = if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    };
    (value + noise).max(0.0)
}

/// Simulated vote mass, noise drawn from `rng`.
pub fn pseudo_votes_with<R: Rng>(
    map: &TileMap,
    corpus: &PatternLibrary,
    cfg: &SynthConfig,
    rng: &mut R,
) -> Result<f64, SynthError> {
    let s = pseudo_score(map, corpus, cfg)?;
    Ok(add_noise(s.votes_value, cfg, rng))
}

/// Simulated vote mass with noise seeded from `cfg.seed`.
pub fn pseudo_votes(map: &TileMap, corpus: &PatternLibrary, cfg: &SynthConfig) -> Result<f64, SynthError> {
    pseudo_votes_with(map, corpus, cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

/// Splits `voters` proportionally to two vote values.
pub fn split_votes(voters: u32, va: f64, vb: f64) -> SimulatedPoll {
    let votes_a = if va + vb > 0.0 {
        ((voters as f64 * va / (va + vb)).round() as u32).min(voters)
    } else {
        voters / 2
    };
    SimulatedPoll {
        votes_a,
        votes_b: voters - votes_a,
    }
}

/// One simulated poll. Noise for A then B is drawn from a generator seeded
/// with `cfg.seed`.
pub fn simulate_poll(a: &TileMap, b: &TileMap, corpus: &PatternLibrary, cfg: &SynthConfig) -> Result<SimulatedPoll, SynthError> {
    if a.tileset_id != b.tileset_id {
        return Err(SynthError::PairMismatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let va = pseudo_votes_with(a, corpus, cfg, &mut rng)?;
    let vb = pseudo_votes_with(b, corpus, cfg, &mut rng)?;
    Ok(split_votes(cfg.voters_per_poll, va, vb))
}

/// Grid-level variant without tileset checks, for hot loops.
pub fn simulate_grids(a: &Grid, b: &Grid, corpus: &PatternLibrary, cfg: &SynthConfig) -> SimulatedPoll {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let va = add_noise(pseudo_score_grid(a, corpus, cfg).votes_value, cfg, &mut rng);
    let vb = add_noise(pseudo_score_grid(b, corpus, cfg).votes_value, cfg, &mut rng);
    split_votes(cfg.voters_per_poll, va, vb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tilemap::Origin;
    use chrono::{DateTime, Utc};
    use proptest::prelude::*;
    use rand::Rng;
    use std::collections::HashMap;

    fn at() -> DateTime<Utc> {
        "2022-05-02T09:00:00Z".parse().unwrap()
    }

    fn map(rows: &[&[u8]]) -> TileMap {
        let rows: Vec<Vec<u8>> = rows.iter().map(|r| r.to_vec()).collect();
        TileMap::new("m", "dungeon", pad_grid(&rows), Origin::User, at()).unwrap()
    }

    // TileMap requires size >= 6; tests on smaller grids go through Grid.
    fn pad_grid(rows: &[Vec<u8>]) -> Grid {
        Grid::from_rows(rows).unwrap()
    }

    fn lib(grids: &[&Grid]) -> PatternLibrary {
        PatternLibrary::from_grids("dungeon", grids.iter().copied(), 2).unwrap()
    }

    /// Independent histogram oracle: string keys, explicit union, explicit
    /// normalisation.
    fn brute_kl(map: &[Vec<u8>], corpus: &[Vec<Vec<u8>>], k: usize, eps: f64) -> f64 {
        fn hist(g: &[Vec<u8>], k: usize, into: &mut HashMap<String, f64>) {
            let n = g.len();
            if n < k {
                return;
            }
            for r in 0..=n - k {
                for c in 0..=n - k {
                    let mut key = String::new();
                    for dr in 0..k {
                        for dc in 0..k {
                            key.push_str(&format!("{},", g[r + dr][c + dc]));
                        }
                    }
                    *into.entry(key).or_insert(0.0) += 1.0;
                }
            }
        }
        let mut p = HashMap::new();
        hist(map, k, &mut p);
        let mut q = HashMap::new();
        for g in corpus {
            hist(g, k, &mut q);
        }
        let pt: f64 = p.values().sum();
        let qt: f64 = q.values().sum();
        let mut union: Vec<&String> = p.keys().chain(q.keys()).collect();
        union.sort();
        union.dedup();
        let mut ps: Vec<f64> = union.iter().map(|k| p.get(*k).copied().unwrap_or(0.0) / pt + eps).collect();
        let mut qs: Vec<f64> = union.iter().map(|k| q.get(*k).copied().unwrap_or(0.0) / qt + eps).collect();
        let sp: f64 = ps.iter().sum();
        let sq: f64 = qs.iter().sum();
        ps.iter_mut().for_each(|v| *v /= sp);
        qs.iter_mut().for_each(|v| *v /= sq);
        ps.iter().zip(&qs).map(|(a, b)| a * (a / b).ln()).sum()
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(tile_entropy(&Grid::filled(6, 3)), 0.0);
        let all: Vec<u8> = (0..64).map(|i| (i % 16) as u8).collect();
        assert!((tile_entropy(&Grid::new(8, all).unwrap()) - 1.0).abs() < 1e-12);
        let half: Vec<u8> = (0..36).map(|i| if i < 18 { 0 } else { 5 }).collect();
        assert!((tile_entropy(&Grid::new(6, half).unwrap()) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn kl_of_map_against_itself_is_tiny() {
        let rows: Vec<Vec<u8>> = (0..6).map(|r| (0..6).map(|c| ((r * 5 + c * 3) % 16) as u8).collect()).collect();
        let g = pad_grid(&rows);
        assert!(pattern_kl(&g, &lib(&[&g]), 1e-5) <= 1e-6);
    }

    #[test]
    fn disjoint_patterns_give_large_kl() {
        let a = pad_grid(&[vec![0, 1, 0], vec![1, 0, 1], vec![0, 1, 0]]);
        let b = pad_grid(&[vec![7, 7, 7], vec![7, 7, 7], vec![7, 7, 7]]);
        let kl = pattern_kl(&a, &lib(&[&b]), 1e-5);
        assert!(kl > (1.0f64 / 1e-5).ln() / 2.0, "{kl}");
        let brute = brute_kl(&a.rows(), &[b.rows()], 2, 1e-5);
        assert!((kl - brute).abs() < 1e-9);
    }

    #[test]
    fn hand_counted_map_matches_oracle() {
        // 3x3 map: four 2x2 patterns, corpus of two maps
        let m = pad_grid(&[vec![0, 1, 2], vec![3, 4, 5], vec![0, 1, 2]]);
        let c1 = pad_grid(&[vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]]);
        let c2 = pad_grid(&[vec![3, 4, 5, 5], vec![0, 1, 2, 2], vec![9, 9, 9, 9], vec![3, 4, 5, 5]]);
        let kl = pattern_kl(&m, &lib(&[&c1, &c2]), 1e-5);
        let brute = brute_kl(&m.rows(), &[c1.rows(), c2.rows()], 2, 1e-5);
        assert!((kl - brute).abs() < 1e-9, "{kl} vs {brute}");
    }

    #[test]
    fn errors() {
        let m = map(&[&[0; 6], &[0; 6], &[0; 6], &[0; 6], &[0; 6], &[0; 6]]);
        let other = PatternLibrary::from_grids("maze", [&m.grid], 2).unwrap();
        assert!(matches!(
            tpkl_divergence(&m, &other, &SynthConfig::default()),
            Err(SynthError::TilesetMismatch { .. })
        ));
        let empty = PatternLibrary::from_grids("dungeon", [&Grid::filled(1, 0)], 2).unwrap();
        assert_eq!(
            tpkl_divergence(&m, &empty, &SynthConfig::default()),
            Err(SynthError::EmptyCorpus)
        );
        let bad = SynthConfig {
            k: 5,
            ..SynthConfig::default()
        };
        assert!(pseudo_votes(&m, &lib(&[&m.grid]), &bad).is_err());
    }

    fn varied(seed: u64) -> TileMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = (0..64).map(|_| rng.random_range(0..16)).collect();
        TileMap::new("v", "dungeon", Grid::new(8, cells).unwrap(), Origin::User, at()).unwrap()
    }

    #[test]
    fn pseudo_vote_limits() {
        let rich = varied(1);
        let corpus = lib(&[&rich.grid]);
        let flat = TileMap::new("f", "dungeon", Grid::filled(8, 2), Origin::Random, at()).unwrap();
        let quiet = SynthConfig::default().noiseless();
        assert_eq!(pseudo_votes(&flat, &corpus, &quiet).unwrap(), 0.0);
        let h = tile_entropy(&rich.grid);
        let v = pseudo_votes(&rich, &corpus, &quiet).unwrap();
        assert!((v - 28.0 * h).abs() < 1e-3, "{v}");

        let cfg = SynthConfig::default().with_seed(77);
        let first = pseudo_votes(&rich, &corpus, &cfg).unwrap();
        assert_eq!(first, pseudo_votes(&rich, &corpus, &cfg).unwrap());
        assert_ne!(first, v);
        // noise is sigma * voters
        let spread: Vec<f64> = (0..400)
            .map(|s| pseudo_votes(&rich, &corpus, &cfg.with_seed(s)).unwrap() - v)
            .collect();
        let sd = (spread.iter().map(|d| d * d).sum::<f64>() / spread.len() as f64).sqrt();
        assert!((sd - 1.4).abs() < 0.2, "{sd}");
    }

    #[test]
    fn poll_examples() {
        let rich = varied(3);
        let corpus = lib(&[&rich.grid]);
        let quiet = SynthConfig::default().noiseless();
        let same = simulate_poll(&rich, &rich, &corpus, &quiet).unwrap();
        assert_eq!(same.y_a(), 0.5);
        let flat = TileMap::new("f", "dungeon", Grid::filled(8, 2), Origin::Random, at()).unwrap();
        let p = simulate_poll(&rich, &flat, &corpus, &quiet).unwrap();
        assert!(p.y_a() > 0.9);
        let both_zero = simulate_poll(&flat, &flat, &corpus, &quiet).unwrap();
        assert_eq!((both_zero.votes_a, both_zero.votes_b), (14, 14));
    }

    #[test]
    fn split_rounds_and_conserves() {
        assert_eq!(split_votes(28, 3.0, 1.0), SimulatedPoll { votes_a: 21, votes_b: 7 });
        assert_eq!(split_votes(5, 0.0, 0.0), SimulatedPoll { votes_a: 2, votes_b: 3 });
        assert_eq!(split_votes(28, 1.0, 0.0).votes_a, 28);
    }

    fn small_grid() -> impl Strategy<Value = Vec<Vec<u8>>> {
        (1usize..=5).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(0u8..6, n), n))
    }

    proptest! {
        #[test]
        fn kl_matches_oracle(m in small_grid(), c1 in small_grid(), c2 in small_grid(), k in 2usize..=3) {
            let gm = pad_grid(&m);
            let g1 = pad_grid(&c1);
            let g2 = pad_grid(&c2);
            let corpus = PatternLibrary::from_grids("dungeon", [&g1, &g2], k).unwrap();
            prop_assume!(!corpus.is_empty() && gm.size() >= k);
            let kl = pattern_kl(&gm, &corpus, 1e-5);
            let brute = brute_kl(&m, &[c1, c2], k, 1e-5);
            prop_assert!((kl - brute).abs() < 1e-9, "{} vs {}", kl, brute);
            prop_assert!(kl >= 0.0);
        }

        #[test]
        fn entropy_bounded(m in small_grid()) {
            let h = tile_entropy(&pad_grid(&m));
            prop_assert!((0.0..=1.0).contains(&h));
        }

        #[test]
        fn tallies_sum_and_winner_scale_invariant(sa in 0u64..1000, sb in 0u64..1000, voters in 1u32..200, scale in 1u32..20) {
            let a = varied(sa);
            let b = varied(sb + 5000);
            let corpus = lib(&[&varied(7).grid, &varied(8).grid]);
            let cfg = SynthConfig { voters_per_poll: voters, ..SynthConfig::default() }.noiseless();
            let p = simulate_poll(&a, &b, &corpus, &cfg).unwrap();
            prop_assert_eq!(p.votes_a + p.votes_b, voters);
            let big = SynthConfig { voters_per_poll: voters * scale, ..cfg };
            let va = pseudo_votes(&a, &corpus, &cfg).unwrap();
            let vb = pseudo_votes(&b, &corpus, &cfg).unwrap();
            let wa = pseudo_votes(&a, &corpus, &big).unwrap();
            let wb = pseudo_votes(&b, &corpus, &big).unwrap();
            prop_assert_eq!(va.partial_cmp(&vb), wa.partial_cmp(&wb));
        }
    }
}
