//! l2-regularized linear classifier trained by stochastic subgradient descent
//! on the hinge loss, one-vs-rest for more than two classes.
//!
//! The objective per binary problem is
//! `lambda/2 |w|^2 + 1/n sum_i max(0, 1 - y_i (w.x_i + b))` with
//! `lambda = 1 / (C n)`, i.e. the usual `1/2 |w|^2 + C sum hinge` rescaled.
//! The returned weights are the average of the iterates of the final epoch.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataio::Dataset;
use crate::error::{check_domain, Error, Result};
use crate::vectors::{SparseVector, VectorView};

const MODEL_MAGIC: &str = "kernlin-linear-model v1";

/// Folding threshold for the lazy weight scale.
const MIN_SCALE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Regularization trade-off; larger means weaker regularization.
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Base of the step size `eta_t = base / (R^2 + t lambda base)`, where
    /// `R^2` is the largest squared row norm.
    pub base_lr: f64,
}

impl TrainConfig {
    pub fn new(c: f64, epochs: usize, seed: u64) -> Result<Self> {
        let cfg = TrainConfig {
            c,
            epochs,
            seed,
            base_lr: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_domain("C", self.c, self.c > 0.0, "(0, inf)")?;
        check_domain("base_lr", self.base_lr, self.base_lr > 0.0, "(0, inf)")?;
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    dim: usize,
    classes: Vec<f64>,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl LinearModel {
    pub fn new(dim: usize, classes: Vec<f64>, weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::SingleClass(classes.len()));
        }
        if weights.len() != classes.len() || bias.len() != classes.len() {
            return Err(Error::ModelFormat("one weight vector and bias per class".into()));
        }
        if let Some(w) = weights.iter().find(|w| w.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: w.len(),
            });
        }
        Ok(LinearModel {
            dim,
            classes,
            weights,
            bias,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> &[f64] {
        &self.classes
    }

    pub fn weights(&self, class: usize) -> &[f64] {
        &self.weights[class]
    }

    pub fn bias(&self, class: usize) -> f64 {
        self.bias[class]
    }

    pub fn scores(&self, x: &SparseVector) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + x.nonzeros().map(|(i, v)| w[i] * v).sum::<f64>())
            .collect()
    }

    /// Label of the highest-scoring class; ties go to the earlier class.
    pub fn predict(&self, x: &SparseVector) -> f64 {
        let s = self.scores(x);
        let mut best = 0;
        for (c, &v) in s.iter().enumerate().skip(1) {
            if v > s[best] {
                best = c;
            }
        }
        self.classes[best]
    }

    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        let mut text = String::new();
        writeln!(text, "{MODEL_MAGIC}").unwrap();
        writeln!(text, "dim {}", self.dim).unwrap();
        writeln!(text, "classes {}", self.classes.len()).unwrap();
        for ((label, w), b) in self.classes.iter().zip(&self.weights).zip(&self.bias) {
            let nz: Vec<String> = w
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, v)| format!("{}:{}", i + 1, v))
                .collect();
            writeln!(text, "class {label} {b} {}", nz.len()).unwrap();
            writeln!(text, "{}", nz.join(" ")).unwrap();
        }
        out.write_all(text.as_bytes())?;
        out.flush()?;
        Ok(())
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let bad = |m: &str| Error::ModelFormat(m.to_string());
        let mut lines = reader.lines();
        let mut next =
            || -> Result<String> { lines.next().ok_or_else(|| bad("truncated model"))?.map_err(Error::from) };
        if next()?.trim_end() != MODEL_MAGIC {
            return Err(bad("missing or unsupported header"));
        }
        let field = |line: String, key: &str| -> Result<usize> {
            line.strip_prefix(key)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| bad(&format!("expected '{key} <n>'")))
        };
        let dim = field(next()?, "dim ")?;
        let n = field(next()?, "classes ")?;
        let mut classes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut bias = Vec::with_capacity(n);
        for _ in 0..n {
            let head = next()?;
            let parts: Vec<&str> = head.split_ascii_whitespace().collect();
            let [tag, label, b, nnz] = parts[..] else {
                return Err(bad("expected 'class <label> <bias> <nnz>'"));
            };
            let num = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(&format!("invalid number '{s}'")))
            };
            if tag != "class" {
                return Err(bad("expected 'class <label> <bias> <nnz>'"));
            }
            classes.push(num(label)?);
            bias.push(num(b)?);
            let nnz: usize = nnz.parse().map_err(|_| bad("invalid nonzero count"))?;
            let mut w = vec![0.0; dim];
            let body = next()?;
            let toks: Vec<&str> = body.split_ascii_whitespace().collect();
            if toks.len() != nnz {
                return Err(bad("nonzero count does not match weights"));
            }
            for t in toks {
                let (i, v) = t.split_once(':').ok_or_else(|| bad("malformed weight"))?;
                let i: usize = i.parse().map_err(|_| bad("malformed weight index"))?;
                if i == 0 || i > dim {
                    return Err(bad("weight index out of range"));
                }
                w[i - 1] = num(v)?;
            }
            weights.push(w);
        }
        LinearModel::new(dim, classes, weights, bias)
    }
}

/// Sorted distinct labels.
fn distinct_labels(ds: &Dataset) -> Vec<f64> {
    let mut labels: Vec<f64> = ds.labels().collect();
    labels.sort_by(f64::total_cmp);
    labels.dedup();
    labels
}

/// One binary problem: `w = scale * v`, averaged over the final epoch.
fn train_binary(ds: &Dataset, positive: &[bool], cfg: &TrainConfig, orders: &[Vec<usize>]) -> (Vec<f64>, f64) {
    let n = ds.len();
    let rows = ds.rows();
    let lambda = 1.0 / (cfg.c * n as f64);
    let r2 = rows
        .iter()
        .map(|(_, x)| x.norm_sq())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut v = vec![0.0; ds.dim()];
    let mut scale = 1.0;
    let mut b = 0.0;
    // final-epoch averaging: sum_t w_t = big_a * v - acc
    let mut acc = vec![0.0; ds.dim()];
    let mut big_a = 0.0;
    let mut b_sum = 0.0;
    let mut t = 0usize;
    for (epoch, order) in orders.iter().enumerate() {
        let last = epoch + 1 == orders.len();
        for &r in order {
            t += 1;
            let x = &rows[r].1;
            let y = if positive[r] { 1.0 } else { -1.0 };
            let eta = cfg.base_lr / (r2 + t as f64 * lambda * cfg.base_lr);
            let margin = y * (scale * x.nonzeros().map(|(i, xi)| v[i] * xi).sum::<f64>() + b);
            scale *= 1.0 - eta * lambda;
            if scale < MIN_SCALE {
                v.iter_mut().for_each(|vi| *vi *= scale);
                big_a /= scale;
                scale = 1.0;
            }
            if margin < 1.0 {
                let step = eta * y / scale;
                for (i, xi) in x.nonzeros() {
                    let d = step * xi;
                    v[i] += d;
                    if last {
                        acc[i] += d * big_a;
                    }
                }
                b += eta * y * r2;
            }
            if last {
                big_a += scale;
                b_sum += b;
            }
        }
    }
    let m = orders.last().map_or(1, Vec::len) as f64;
    let w = v.iter().zip(&acc).map(|(vi, ai)| (big_a * vi - ai) / m).collect();
    (w, b_sum / m)
}

/// Trains one-vs-rest classifiers; with two classes a single problem is
/// solved and the second class gets the negated scores.
pub fn train(ds: &Dataset, config: &TrainConfig) -> Result<LinearModel> {
    config.validate()?;
    if ds.is_empty() {
        return Err(Error::Empty);
    }
    let classes = distinct_labels(ds);
    if classes.len() < 2 {
        return Err(Error::SingleClass(classes.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let orders: Vec<Vec<usize>> = (0..config.epochs)
        .map(|_| {
            let mut o: Vec<usize> = (0..ds.len()).collect();
            o.shuffle(&mut rng);
            o
        })
        .collect();
    let positives = |c: f64| -> Vec<bool> { ds.labels().map(|y| y == c).collect() };
    let (weights, bias): (Vec<Vec<f64>>, Vec<f64>) = if classes.len() == 2 {
        let (w, b) = train_binary(ds, &positives(classes[1]), config, &orders);
        let neg = w.iter().map(|x| -x).collect();
        (vec![neg, w], vec![-b, b])
    } else {
        classes
            .par_iter()
            .map(|&c| train_binary(ds, &positives(c), config, &orders))
            .collect::<Vec<_>>()
            .into_iter()
            .unzip()
    };
    LinearModel::new(ds.dim(), classes, weights, bias)
}

/// Fraction of rows whose predicted label equals their label.
pub fn evaluate(model: &LinearModel, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Empty);
    }
    if ds.dim() > model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            found: ds.dim(),
        });
    }
    let correct: usize = ds
        .rows()
        .par_iter()
        .map(|(y, x)| usize::from(model.predict(x) == *y))
        .sum();
    Ok(correct as f64 / ds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{hash_dataset, parse_libsvm_str, Scheme};
    use crate::gcws_hash::GcwsConfig;
    use crate::synth;

    fn ds(text: &str) -> Dataset {
        parse_libsvm_str(text).unwrap()
    }

    fn xor() -> Dataset {
        ds("1 1:1 2:1\n1 1:-1 2:-1\n-1 1:1 2:-1\n-1 1:-1 2:1\n")
    }

    fn fit(d: &Dataset, c: f64) -> LinearModel {
        train(d, &TrainConfig::new(c, 50, 7).unwrap()).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::new(0.0, 1, 0).is_err());
        assert!(TrainConfig::new(-1.0, 1, 0).is_err());
        assert!(TrainConfig::new(1.0, 0, 0).is_err());
        assert!(TrainConfig::new(f64::INFINITY, 1, 0).is_err());
    }

    #[test]
    fn separable_pair() {
        let d = ds("1 1:1\n-1 1:-1\n");
        assert_eq!(evaluate(&fit(&d, 1.0), &d).unwrap(), 1.0);
    }

    #[test]
    fn single_class_and_empty_rejected() {
        assert!(matches!(
            train(&ds("1 1:1\n1 2:1\n"), &TrainConfig::new(1.0, 1, 0).unwrap()),
            Err(Error::SingleClass(1))
        ));
        assert!(matches!(
            train(&Dataset::default(), &TrainConfig::new(1.0, 1, 0).unwrap()),
            Err(Error::Empty)
        ));
        let m = fit(&ds("1 1:1\n-1 1:-1\n"), 1.0);
        assert!(matches!(evaluate(&m, &Dataset::default()), Err(Error::Empty)));
        assert!(evaluate(&m, &ds("1 3:1\n")).is_err());
    }

    #[test]
    fn xor_needs_hashing() {
        let raw = xor();
        for c in [0.1, 1.0, 10.0, 100.0] {
            assert!(evaluate(&fit(&raw, c), &raw).unwrap() <= 0.75);
        }
        let h = hash_dataset(&raw, &Scheme::Gcws(GcwsConfig::new(64, 4, 11).unwrap())).unwrap();
        assert_eq!(evaluate(&fit(&h, 10.0), &h).unwrap(), 1.0);
    }

    #[test]
    fn deterministic_and_order_invariant_evaluation() {
        let d = synth::signed_mixture(200, 6, 3);
        let cfg = TrainConfig::new(1.0, 5, 9).unwrap();
        let m = train(&d, &cfg).unwrap();
        assert_eq!(m, train(&d, &cfg).unwrap());
        let acc = evaluate(&m, &d).unwrap();
        let rev: Vec<usize> = (0..d.len()).rev().collect();
        assert_eq!(evaluate(&m, &d.select(&rev)).unwrap(), acc);
    }

    #[test]
    fn multiclass_one_vs_rest() {
        let text: String = (0..90)
            .map(|i| {
                let c = i % 3;
                let jitter = 0.1 * ((i * 37 % 11) as f64 / 11.0);
                format!("{} {}:{} 4:{}\n", c + 1, c + 1, 1.0 + jitter, 0.2 - jitter)
            })
            .collect();
        let d = ds(&text);
        let m = fit(&d, 10.0);
        assert_eq!(m.classes(), &[1.0, 2.0, 3.0]);
        assert_eq!(evaluate(&m, &d).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_support_falls_back_to_bias() {
        let m = LinearModel::new(
            6,
            vec![0.0, 1.0, 2.0],
            vec![
                vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
                vec![0.0; 6],
            ],
            vec![-0.5, 0.25, 0.1],
        )
        .unwrap();
        // rows only touch feature 6, where every class weight is zero
        let d = ds("1 6:3\n1 6:-1\n0 6:2\n2 6:1\n1 6:5\n");
        assert_eq!(evaluate(&m, &d).unwrap(), 3.0 / 5.0);
    }

    #[test]
    fn scaling_features_with_c_keeps_predictions() {
        let d = synth::signed_mixture(300, 5, 1);
        let s = 4.0;
        let scaled = Dataset::with_dim(
            d.rows().iter().map(|(y, x)| (*y, x.scaled(s).unwrap())).collect(),
            d.dim(),
        )
        .unwrap();
        for c in [0.1, 1.0, 10.0] {
            let a = train(&d, &TrainConfig::new(c, 5, 2).unwrap()).unwrap();
            let b = train(&scaled, &TrainConfig::new(c / (s * s), 5, 2).unwrap()).unwrap();
            for ((_, x), (_, xs)) in d.rows().iter().zip(scaled.rows()) {
                assert_eq!(a.predict(x), b.predict(xs));
            }
        }
    }

    #[test]
    fn model_text_round_trip() {
        let d = synth::signed_mixture(100, 4, 5);
        let m = fit(&d, 1.0);
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("kernlin-linear-model v1\ndim 4\nclasses 2\n"));
        assert_eq!(LinearModel::load(&buf[..]).unwrap(), m);
        assert!(LinearModel::load(&b"kernlin-linear-model v2\n"[..]).is_err());
        assert!(LinearModel::load(&text.as_bytes()[..text.len() / 2]).is_err());
    }

    #[test]
    fn averaging_matches_explicit_iterates() {
        // replay with explicit dense weights and compare the averages
        let d = synth::signed_mixture(60, 3, 8);
        let cfg = TrainConfig {
            c: 1e6,
            ..TrainConfig::new(1.0, 3, 4).unwrap()
        };
        let positive: Vec<bool> = d.labels().map(|y| y == 1.0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let orders: Vec<Vec<usize>> = (0..cfg.epochs)
            .map(|_| {
                let mut o: Vec<usize> = (0..d.len()).collect();
                o.shuffle(&mut rng);
                o
            })
            .collect();
        let (w, b) = train_binary(&d, &positive, &cfg, &orders);

        let lambda = 1.0 / (cfg.c * d.len() as f64);
        let r2 = d.rows().iter().map(|(_, x)| x.norm_sq()).fold(0.0, f64::max);
        let mut wd = vec![0.0; d.dim()];
        let mut bd = 0.0;
        let (mut wsum, mut bsum) = (vec![0.0; d.dim()], 0.0);
        let mut t = 0;
        for (e, order) in orders.iter().enumerate() {
            for &r in order {
                t += 1;
                let x = &d.rows()[r].1;
                let y = if positive[r] { 1.0 } else { -1.0 };
                let eta = cfg.base_lr / (r2 + t as f64 * lambda * cfg.base_lr);
                let margin = y * (x.nonzeros().map(|(i, xi)| wd[i] * xi).sum::<f64>() + bd);
                wd.iter_mut().for_each(|wi| *wi *= 1.0 - eta * lambda);
                if margin < 1.0 {
                    x.nonzeros().for_each(|(i, xi)| wd[i] += eta * y * xi);
                    bd += eta * y * r2;
                }
                if e + 1 == orders.len() {
                    wsum.iter_mut().zip(&wd).for_each(|(s, wi)| *s += wi);
                    bsum += bd;
                }
            }
        }
        let m = d.len() as f64;
        for (a, s) in w.iter().zip(&wsum) {
            assert!((a - s / m).abs() < 1e-9 * (1.0 + a.abs()), "{a} vs {}", s / m);
        }
        assert!((b - bsum / m).abs() < 1e-12);
    }
}
