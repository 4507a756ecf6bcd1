//! The linear model, its SGD trainer and the `LSBL1` file format.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::hashed::{check_bits, HashedVector};
use crate::error::{Error, Result};
use crate::hashing::{HASH_ALGORITHM, HASH_SEED};
use crate::model::FieldType;

/// Output classes: the eight targets, then `Undefined`.
pub const CLASSES: [FieldType; 9] = [
    FieldType::Number,
    FieldType::Date,
    FieldType::Currency,
    FieldType::OrderId,
    FieldType::Total,
    FieldType::LineTotal,
    FieldType::TaxTotal,
    FieldType::TaxPercent,
    FieldType::Undefined,
];
const C: usize = CLASSES.len();

const MAGIC: &[u8; 5] = b"LSBL1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct BaselineConfig {
    pub bits: u32,
    pub epochs: usize,
    /// Initial step size; epoch `e` (from 1) uses `learning_rate / sqrt(e)`.
    pub learning_rate: f64,
    /// L2 penalty, applied to the weights an example touches.
    pub l2: f64,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { bits: 22, epochs: 10, learning_rate: 0.1, l2: 0.0, seed: 0 }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        check_bits(self.bits, 8)?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("learning rate must be positive and l2 non-negative".into()));
        }
        Ok(())
    }
}

/// A hashed vector with its label set as a bit mask over [`CLASSES`].
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub x: HashedVector,
    pub labels: u16,
}

impl Example {
    pub fn new(x: HashedVector, labels: &[FieldType]) -> Self {
        let mask = labels.iter().fold(0u16, |m, f| m | (1 << class_index(*f)));
        Example { x, labels: mask }
    }
}

pub fn class_index(f: FieldType) -> usize {
    CLASSES.iter().position(|c| *c == f).expect("every field is a class")
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-class scores `b + sum of w[i]` over active indices; weights are index-major.
pub(crate) fn scores(weights: &[f64], bias: &[f64], x: &[u32]) -> [f64; C] {
    let mut z = [0.0; C];
    z.copy_from_slice(bias);
    for &i in x {
        let row = &weights[i as usize * C..(i as usize + 1) * C];
        for (zc, w) in z.iter_mut().zip(row) {
            *zc += w;
        }
    }
    z
}

/// d(loss)/d(score) per class for the summed binary cross-entropy.
pub(crate) fn residuals(z: &[f64; C], labels: u16) -> [f64; C] {
    let mut r = [0.0; C];
    for (c, rc) in r.iter_mut().enumerate() {
        *rc = sigmoid(z[c]) - f64::from((labels >> c) & 1);
    }
    r
}

/// Runs SGD and returns the double-precision weights and biases.
pub(crate) fn sgd(examples: &[Example], config: &BaselineConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if let Some(e) = examples.iter().find(|e| e.x.bits() != config.bits) {
        return Err(Error::DimensionMismatch { expected: config.bits as usize, got: e.x.bits() as usize });
    }
    let mut w = vec![0.0f64; (1usize << config.bits) * C];
    let mut b = vec![0.0f64; C];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 1..=config.epochs {
        let lr = config.learning_rate / (epoch as f64).sqrt();
        order.shuffle(&mut rng);
        for &k in &order {
            let ex = &examples[k];
            let r = residuals(&scores(&w, &b, ex.x.indices()), ex.labels);
            for &i in ex.x.indices() {
                let row = &mut w[i as usize * C..(i as usize + 1) * C];
                for (wc, rc) in row.iter_mut().zip(&r) {
                    *wc -= lr * (rc + config.l2 * *wc);
                }
            }
            for (bc, rc) in b.iter_mut().zip(&r) {
                *bc -= lr * rc;
            }
        }
    }
    Ok((w, b))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub config: BaselineConfig,
    classes: Vec<FieldType>,
    /// Index-major: the weights of index `i` are `weights[i*9 .. i*9+9]`.
    weights: Vec<f32>,
    bias: Vec<f32>,
}

pub fn train_baseline(examples: &[Example], config: &BaselineConfig) -> Result<LinearModel> {
    let (w, b) = sgd(examples, config)?;
    Ok(LinearModel {
        config: config.clone(),
        classes: CLASSES.to_vec(),
        weights: w.iter().map(|&x| x as f32).collect(),
        bias: b.iter().map(|&x| x as f32).collect(),
    })
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Header {
    bits: u32,
    hash_algorithm: String,
    hash_seed: u64,
    classes: Vec<FieldType>,
    config: BaselineConfig,
}

impl LinearModel {
    pub fn zeros(config: BaselineConfig) -> Result<Self> {
        config.validate()?;
        Ok(LinearModel { classes: CLASSES.to_vec(), weights: vec![0.0; (1usize << config.bits) * C], bias: vec![0.0; C], config })
    }

    pub fn bits(&self) -> u32 {
        self.config.bits
    }

    pub fn classes(&self) -> &[FieldType] {
        &self.classes
    }

    pub fn weight(&self, index: u32, class: FieldType) -> f32 {
        self.weights[index as usize * C + class_index(class)]
    }

    pub fn set_weight(&mut self, index: u32, class: FieldType, value: f32) {
        self.weights[index as usize * C + class_index(class)] = value;
    }

    /// Independent per-class probabilities in [`CLASSES`] order.
    pub fn predict(&self, x: &HashedVector) -> Result<[f64; 9]> {
        if x.bits() != self.config.bits {
            return Err(Error::DimensionMismatch { expected: self.config.bits as usize, got: x.bits() as usize });
        }
        let mut z: [f64; C] = std::array::from_fn(|c| f64::from(self.bias[c]));
        for &i in x.indices() {
            for (zc, w) in z.iter_mut().zip(&self.weights[i as usize * C..(i as usize + 1) * C]) {
                *zc += f64::from(*w);
            }
        }
        Ok(z.map(sigmoid))
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        let header = serde_json::to_vec(&Header {
            bits: self.config.bits,
            hash_algorithm: HASH_ALGORITHM.into(),
            hash_seed: HASH_SEED,
            classes: self.classes.clone(),
            config: self.config.clone(),
        })?;
        out.write_all(MAGIC)?;
        out.write_all(&(header.len() as u32).to_le_bytes())?;
        out.write_all(&header)?;
        let mut buf = Vec::with_capacity(4 * (self.weights.len() + C));
        for x in self.weights.iter().chain(&self.bias) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    pub fn read_from(input: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 5];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::ModelFormat("not a baseline model (bad magic)".into()));
        }
        let mut len = [0u8; 4];
        input.read_exact(&mut len)?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        input.read_exact(&mut header)?;
        let header: Header = serde_json::from_slice(&header)?;
        if header.hash_algorithm != HASH_ALGORITHM || header.hash_seed != HASH_SEED {
            return Err(Error::ModelFormat(format!("unsupported hash {} seed {:#x}", header.hash_algorithm, header.hash_seed)));
        }
        if header.classes != CLASSES || header.bits != header.config.bits {
            return Err(Error::ModelFormat("unexpected class list or bit width".into()));
        }
        check_bits(header.bits, 8)?;
        let n = (1usize << header.bits) * C;
        let mut raw = vec![0u8; 4 * (n + C)];
        input.read_exact(&mut raw)?;
        let floats: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        if floats.iter().any(|x| !x.is_finite()) {
            return Err(Error::ModelFormat("non-finite weight".into()));
        }
        Ok(LinearModel { config: header.config, classes: header.classes, weights: floats[..n].to_vec(), bias: floats[n..].to_vec() })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut &bytes[..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeMap;

    fn cfg(bits: u32) -> BaselineConfig {
        BaselineConfig { bits, ..BaselineConfig::default() }
    }

    fn bce(p: f64, y: f64) -> f64 {
        -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x: Vec<u32> = {
                let mut v: Vec<u32> = (0..6).map(|_| rng.random_range(0..16)).collect();
                v.sort_unstable();
                v.dedup();
                v
            };
            let w: Vec<f64> = (0..16 * C).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..C).map(|_| rng.random_range(-1.0..1.0)).collect();
            let labels: u16 = rng.random_range(0..(1 << C));
            // textbook loss written independently of `scores`/`residuals`
            let loss = |w: &[f64], b: &[f64]| -> f64 {
                (0..C)
                    .map(|c| {
                        let z = b[c] + x.iter().map(|&i| w[i as usize * C + c]).sum::<f64>();
                        bce(1.0 / (1.0 + (-z).exp()), f64::from((labels >> c) & 1))
                    })
                    .sum()
            };
            let r = residuals(&scores(&w, &b, &x), labels);
            let h = 1e-6;
            for &i in &x {
                for c in 0..C {
                    let k = i as usize * C + c;
                    let (mut wp, mut wm) = (w.clone(), w.clone());
                    wp[k] += h;
                    wm[k] -= h;
                    let numeric = (loss(&wp, &b) - loss(&wm, &b)) / (2.0 * h);
                    let rel = (numeric - r[c]).abs() / numeric.abs().max(r[c].abs()).max(1e-8);
                    assert!(rel < 1e-6, "rel {rel}");
                }
            }
            for c in 0..C {
                let (mut bp, mut bm) = (b.clone(), b.clone());
                bp[c] += h;
                bm[c] -= h;
                let numeric = (loss(&w, &bp) - loss(&w, &bm)) / (2.0 * h);
                assert!((numeric - r[c]).abs() / numeric.abs().max(1e-8) < 1e-6);
            }
        }
    }

    /// One-hot reference trainer over feature names instead of hashed indices.
    fn one_hot_train(examples: &[(Vec<String>, u16)], config: &BaselineConfig) -> (BTreeMap<String, [f64; C]>, [f64; C]) {
        let mut w: BTreeMap<String, [f64; C]> = BTreeMap::new();
        let mut b = [0.0; C];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        for epoch in 1..=config.epochs {
            let lr = config.learning_rate / (epoch as f64).sqrt();
            order.shuffle(&mut rng);
            for &k in &order {
                let (names, y) = &examples[k];
                let mut z = b;
                // sum in ascending hashed-index order to mirror the hashed trainer bit for bit
                for n in names {
                    let row = w.entry(n.clone()).or_insert([0.0; C]);
                    for c in 0..C {
                        z[c] += row[c];
                    }
                }
                let r: Vec<f64> = (0..C).map(|c| 1.0 / (1.0 + (-z[c]).exp()) - f64::from((y >> c) & 1)).collect();
                for n in names {
                    let row = w.get_mut(n).unwrap();
                    for c in 0..C {
                        row[c] -= lr * (r[c] + config.l2 * row[c]);
                    }
                }
                for c in 0..C {
                    b[c] -= lr * r[c];
                }
            }
        }
        (w, b)
    }

    #[test]
    fn hashed_training_equals_one_hot_training() {
        use crate::hashing::bucket;
        let bits = 24;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let vocab: Vec<String> = (0..40).map(|i| format!("feat{i}=v")).collect();
        let idx = |n: &str| bucket(n.as_bytes(), bits);
        let mut seen: Vec<u32> = vocab.iter().map(|n| idx(n)).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), vocab.len(), "toy vocabulary must not collide");
        let mut hashed = Vec::new();
        let mut named = Vec::new();
        for _ in 0..60 {
            let mut names: Vec<String> = (0..5).map(|_| vocab[rng.random_range(0..vocab.len())].clone()).collect();
            names.sort_by_key(|n| idx(n));
            names.dedup();
            let labels = 1u16 << rng.random_range(0..C);
            hashed.push(Example { x: HashedVector::new(bits, names.iter().map(|n| idx(n)).collect()).unwrap(), labels });
            named.push((names, labels));
        }
        let config = BaselineConfig { bits, l2: 0.01, seed: 4, ..BaselineConfig::default() };
        let (w, b) = sgd(&hashed, &config).unwrap();
        let (ow, ob) = one_hot_train(&named, &config);
        for c in 0..C {
            assert!((b[c] - ob[c]).abs() <= 1e-12);
        }
        for (n, row) in &ow {
            let i = idx(n) as usize;
            for c in 0..C {
                assert!((w[i * C + c] - row[c]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn separable_toy_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let examples: Vec<Example> = (0..100)
            .map(|k| {
                let class = if k % 2 == 0 { FieldType::Total } else { FieldType::Undefined };
                let base = if k % 2 == 0 { 0 } else { 100 };
                let x = HashedVector::new(10, (0..5).map(|_| base + rng.random_range(0..50)).collect()).unwrap();
                Example::new(x, &[class])
            })
            .collect();
        let model = train_baseline(&examples, &cfg(10)).unwrap();
        let correct = examples
            .iter()
            .filter(|e| {
                let p = model.predict(&e.x).unwrap();
                let total = p[class_index(FieldType::Total)] > 0.5;
                total == (e.labels & (1 << class_index(FieldType::Total)) != 0)
            })
            .count();
        assert!(correct as f64 / 100.0 >= 0.99);
    }

    #[test]
    fn undefined_only_training_keeps_fields_unlikely() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut make = |n| -> Vec<Example> {
            (0..n)
                .map(|_| {
                    Example::new(
                        HashedVector::new(12, (0..20).map(|_| rng.random_range(0..4096)).collect()).unwrap(),
                        &[FieldType::Undefined],
                    )
                })
                .collect()
        };
        let train = make(500);
        let held_out = make(100);
        let model = train_baseline(&train, &cfg(12)).unwrap();
        for e in &held_out {
            let p = model.predict(&e.x).unwrap();
            assert!(FieldType::TARGETS.iter().all(|f| p[class_index(*f)] <= 0.05));
        }
    }

    #[test]
    fn fixed_seed_bit_identical() {
        let examples: Vec<Example> = (0..50u32)
            .map(|k| Example::new(HashedVector::new(8, vec![k % 7, k % 11 + 20]).unwrap(), &[CLASSES[(k % 9) as usize]]))
            .collect();
        let a = train_baseline(&examples, &cfg(8)).unwrap().to_bytes();
        let b = train_baseline(&examples, &cfg(8)).unwrap().to_bytes();
        assert_eq!(a, b);
    }

    #[test]
    fn sigmoid_edge_values() {
        let mut model = LinearModel::zeros(cfg(8)).unwrap();
        let x = HashedVector::new(8, vec![3]).unwrap();
        assert!(model.predict(&x).unwrap().iter().all(|&p| p == 0.5));
        model.set_weight(3, FieldType::Total, 10.0);
        assert!(model.predict(&x).unwrap()[class_index(FieldType::Total)] > 0.999);
        assert!(model.predict(&HashedVector::new(9, vec![3]).unwrap()).is_err());
    }

    #[test]
    fn probabilities_match_textbook_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let mut model = LinearModel::zeros(cfg(8)).unwrap();
            for i in 0..256u32 {
                for f in CLASSES {
                    model.set_weight(i, f, rng.random_range(-2.0..2.0));
                }
            }
            let x = HashedVector::new(8, (0..10).map(|_| rng.random_range(0..256)).collect()).unwrap();
            let p = model.predict(&x).unwrap();
            for (c, f) in CLASSES.iter().enumerate() {
                let z: f64 = x.indices().iter().map(|&i| f64::from(model.weight(i, *f))).sum();
                let expected = 1.0 / (1.0 + (-z).exp());
                assert!((p[c] - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn model_file_round_trip() {
        let examples: Vec<Example> = (0..30u32)
            .map(|k| Example::new(HashedVector::new(8, vec![k % 5, 100 + k % 3]).unwrap(), &[CLASSES[(k % 9) as usize]]))
            .collect();
        let model = train_baseline(&examples, &cfg(8)).unwrap();
        let bytes = model.to_bytes();
        assert_eq!(&bytes[..5], b"LSBL1");
        assert_eq!(LinearModel::from_bytes(&bytes).unwrap(), model);
        assert!(LinearModel::from_bytes(b"LSSQ1....").is_err());
        assert!(matches!(train_baseline(&[], &cfg(8)), Err(Error::EmptyTrainingSet)));
    }

    proptest! {
        #[test]
        fn prediction_ignores_index_order(mut idx in proptest::collection::vec(0u32..256, 1..20), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut model = LinearModel::zeros(cfg(8)).unwrap();
            for &i in &idx {
                model.set_weight(i, FieldType::Date, rng.random_range(-3.0..3.0));
            }
            let a = model.predict(&HashedVector::new(8, idx.clone()).unwrap()).unwrap();
            idx.reverse();
            let b = model.predict(&HashedVector::new(8, idx).unwrap()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
