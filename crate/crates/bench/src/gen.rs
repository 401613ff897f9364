//! Seeded synthetic stream generators.
//!
//! Every generator first inserts until the active set reaches the target
//! size, then churns with a random-walk mix of inserts and deletes of
//! active examples, so every prefix of the stream is a valid update
//! sequence. The hot-leaf generator concentrates its churn in one small
//! region to hammer a single subtree's rebuild cadence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dyntree::multiset::{FeatureVector, Label, LabeledExample, UpdateRequest};

use crate::stream::{LabelType, StreamHeader, STREAM_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    TwoGaussians,
    Checkerboard,
    PiecewiseRegression,
    HotLeaf,
}

impl GeneratorKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "two-gaussians" | "gaussians" => Some(Self::TwoGaussians),
            "checkerboard" => Some(Self::Checkerboard),
            "piecewise-regression" | "regression" => Some(Self::PiecewiseRegression),
            "hot-leaf" => Some(Self::HotLeaf),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::TwoGaussians => "two-gaussians",
            Self::Checkerboard => "checkerboard",
            Self::PiecewiseRegression => "piecewise-regression",
            Self::HotLeaf => "hot-leaf",
        }
    }

    pub fn label_type(&self) -> LabelType {
        match self {
            Self::PiecewiseRegression => LabelType::Real,
            _ => LabelType::Class,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GenConfig {
    pub seed: u64,
    /// Total update requests to emit.
    pub total_requests: usize,
    /// Active-set size the insert phase builds up to (and the churn phase
    /// hovers around).
    pub target_active: usize,
    pub d: usize,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller transform.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn draw(kind: GeneratorKind, rng: &mut ChaCha8Rng, d: usize, hot: bool) -> LabeledExample {
    let (x, y) = match kind {
        GeneratorKind::TwoGaussians => {
            let class = rng.gen_range(0..2i64);
            let mu = if class == 0 { -2.0 } else { 2.0 };
            let mut x = vec![0.0; d];
            x[0] = mu + gaussian(rng);
            for v in x.iter_mut().skip(1) {
                *v = gaussian(rng);
            }
            (x, Label::Class(class))
        }
        GeneratorKind::Checkerboard => {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..4.0)).collect();
            let parity = if d >= 2 {
                (x[0].floor() + x[1].floor()) as i64
            } else {
                x[0].floor() as i64
            };
            (x, Label::Class(parity.rem_euclid(2)))
        }
        GeneratorKind::PiecewiseRegression => {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
            let levels = [-0.8, -0.3, 0.4, 0.9];
            let step = (x[0] * 4.0).floor().min(3.0) as usize;
            let y = levels[step] + rng.gen_range(-0.02..0.02);
            (x, Label::Real(y))
        }
        GeneratorKind::HotLeaf => {
            // Two well-separated clusters; the churn phase draws almost
            // exclusively from the hot one.
            let class = if hot { 1 } else { rng.gen_range(0..2i64) };
            let mu = if class == 0 { -3.0 } else { 3.0 };
            let mut x = vec![0.0; d];
            x[0] = mu + rng.gen_range(-0.5..0.5);
            for v in x.iter_mut().skip(1) {
                *v = rng.gen_range(-1.0..1.0);
            }
            (x, Label::Class(class))
        }
    };
    LabeledExample::new(FeatureVector::new(x).unwrap(), y)
}

/// Generate a reproducible stream. Deletes always target a currently
/// active example, so every prefix keeps multiplicities nonnegative.
pub fn generate(kind: GeneratorKind, cfg: &GenConfig) -> (StreamHeader, Vec<UpdateRequest>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut requests = Vec::with_capacity(cfg.total_requests);
    let mut active: Vec<LabeledExample> = Vec::new();
    let hot_region = |ex: &LabeledExample| ex.x.values()[0] > 0.0;

    while requests.len() < cfg.total_requests {
        let ins = if active.len() < cfg.target_active.min(8) {
            true
        } else if requests.len() < cfg.target_active {
            // Insert phase.
            true
        } else if active.len() * 5 < cfg.target_active * 4 {
            true
        } else if active.len() * 5 > cfg.target_active * 6 {
            false
        } else {
            rng.gen_bool(0.5)
        };
        let hot_phase = requests.len() >= cfg.target_active && kind == GeneratorKind::HotLeaf;
        if ins {
            let ex = draw(kind, &mut rng, cfg.d, hot_phase);
            active.push(ex.clone());
            requests.push(UpdateRequest::ins(ex));
        } else {
            // Delete an active example; in the hot phase prefer the hot
            // region.
            let idx = if hot_phase {
                let tries = 16;
                let mut pick = rng.gen_range(0..active.len());
                for _ in 0..tries {
                    if hot_region(&active[pick]) {
                        break;
                    }
                    pick = rng.gen_range(0..active.len());
                }
                pick
            } else {
                rng.gen_range(0..active.len())
            };
            let ex = active.swap_remove(idx);
            requests.push(UpdateRequest::del(ex));
        }
    }

    let header = StreamHeader {
        version: STREAM_VERSION,
        d: cfg.d,
        label_type: kind.label_type(),
        c: match kind {
            GeneratorKind::PiecewiseRegression => Some(0.5),
            _ => None,
        },
        n_max: Some((cfg.target_active as u64 * 3 / 2).max(16)),
    };
    (header, requests)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dyntree::multiset::{active_set, ExampleMultiset};

    #[test]
    fn streams_are_valid_and_deterministic() {
        for kind in [
            GeneratorKind::TwoGaussians,
            GeneratorKind::Checkerboard,
            GeneratorKind::PiecewiseRegression,
            GeneratorKind::HotLeaf,
        ] {
            let cfg = GenConfig {
                seed: 7,
                total_requests: 500,
                target_active: 120,
                d: 2,
            };
            let (h, a) = generate(kind, &cfg);
            let (_, b) = generate(kind, &cfg);
            assert_eq!(a, b, "{kind:?} not deterministic");
            assert_eq!(a.len(), 500);
            assert_eq!(h.d, 2);
            // Every prefix valid: folding the whole stream must succeed.
            let s = active_set(&ExampleMultiset::new(), &a).unwrap();
            assert!(s.len() > 0);
        }
    }

    #[test]
    fn hot_leaf_concentrates_churn() {
        let cfg = GenConfig {
            seed: 3,
            total_requests: 800,
            target_active: 200,
            d: 2,
        };
        let (_, reqs) = generate(GeneratorKind::HotLeaf, &cfg);
        let churn = &reqs[200..];
        let hot = churn
            .iter()
            .filter(|r| r.example.x.values()[0] > 0.0)
            .count();
        assert!(
            hot * 10 > churn.len() * 7,
            "hot region got only {hot}/{}",
            churn.len()
        );
    }
}
