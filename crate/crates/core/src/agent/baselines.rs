//! Question-only baselines: they never look at the house.

use crate::dataset::{Answer, QuestionRecord};
use crate::qa::QuestionType;
use crate::vocab::TokenVocab;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Majority answer per question type.
#[derive(Debug, Clone, Default)]
pub struct MostFrequent {
    by_type: BTreeMap<QuestionType, Answer>,
    global: Option<Answer>,
}

fn majority(yes: usize, total: usize) -> Answer {
    Answer::from_bool(2 * yes > total)
}

impl MostFrequent {
    pub fn fit(train: &[QuestionRecord]) -> Self {
        let mut counts: BTreeMap<QuestionType, (usize, usize)> = BTreeMap::new();
        for r in train {
            let c = counts.entry(r.qtype).or_default();
            c.0 += r.answer.is_yes() as usize;
            c.1 += 1;
        }
        let yes = train.iter().filter(|r| r.answer.is_yes()).count();
        MostFrequent {
            by_type: counts.into_iter().map(|(t, (y, n))| (t, majority(y, n))).collect(),
            global: (!train.is_empty()).then(|| majority(yes, train.len())),
        }
    }

    pub fn predict(&self, record: &QuestionRecord) -> Answer {
        self.by_type.get(&record.qtype).copied().or(self.global).unwrap_or(Answer::No)
    }
}

/// Logistic regression on a bag of question tokens.
#[derive(Debug, Clone)]
pub struct BowModel {
    vocab: TokenVocab,
    weights: Vec<f64>,
    bias: f64,
}

impl BowModel {
    fn bag(&self, text: &str) -> Vec<f64> {
        let mut x = vec![0.0; self.vocab.len()];
        for t in self.vocab.encode(text) {
            x[t] = 1.0;
        }
        x
    }

    fn logit(&self, x: &[f64]) -> f64 {
        self.bias + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Full-batch gradient descent with a small L2 penalty.
    pub fn fit(train: &[QuestionRecord], epochs: usize, lr: f64) -> Self {
        let vocab = TokenVocab::default();
        let mut model = BowModel { weights: vec![0.0; vocab.len()], vocab, bias: 0.0 };
        let data: Vec<(Vec<f64>, f64)> =
            train.iter().map(|r| (model.bag(&r.text), r.answer.is_yes() as u8 as f64)).collect();
        if data.is_empty() {
            return model;
        }
        let n = data.len() as f64;
        for _ in 0..epochs {
            let mut gw = vec![0.0; model.weights.len()];
            let mut gb = 0.0;
            for (x, y) in &data {
                let d = crate::nn::sigmoid(model.logit(x)) - y;
                gb += d;
                for (g, xi) in gw.iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            for (w, g) in model.weights.iter_mut().zip(&gw) {
                *w -= lr * (g / n + 1e-3 * *w);
            }
            model.bias -= lr * gb / n;
        }
        model
    }

    pub fn probability(&self, record: &QuestionRecord) -> f64 {
        crate::nn::sigmoid(self.logit(&self.bag(&record.text)))
    }

    pub fn predict(&self, record: &QuestionRecord) -> Answer {
        Answer::from_bool(self.probability(record) > 0.5)
    }
}

/// Copies the answer of the most token-similar training question.
#[derive(Debug, Clone)]
pub struct NearestNeighbor {
    vocab: TokenVocab,
    train: Vec<(BTreeSet<usize>, Answer)>,
}

impl NearestNeighbor {
    pub fn fit(train: &[QuestionRecord]) -> Self {
        let vocab = TokenVocab::default();
        let train = train.iter().map(|r| (vocab.encode(&r.text).into_iter().collect(), r.answer)).collect();
        NearestNeighbor { vocab, train }
    }

    /// Highest Jaccard overlap wins; ties go to the earliest training question.
    pub fn predict(&self, record: &QuestionRecord) -> Answer {
        let q: BTreeSet<usize> = self.vocab.encode(&record.text).into_iter().collect();
        let mut best = (-1.0, Answer::No);
        for (t, a) in &self.train {
            let inter = q.intersection(t).count() as f64;
            let union = q.union(t).count().max(1) as f64;
            if inter / union > best.0 {
                best = (inter / union, *a);
            }
        }
        best.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineScores {
    pub most_frequent: f64,
    pub bow: f64,
    pub nearest_neighbor: f64,
}

fn accuracy(test: &[QuestionRecord], f: impl Fn(&QuestionRecord) -> Answer) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    test.iter().filter(|r| f(r) == r.answer).count() as f64 / test.len() as f64
}

/// Fits every baseline on `train` and scores it on `test`.
pub fn question_only_baselines(train: &[QuestionRecord], test: &[QuestionRecord]) -> BaselineScores {
    let mf = MostFrequent::fit(train);
    let bow = BowModel::fit(train, 300, 0.5);
    let nn = NearestNeighbor::fit(train);
    BaselineScores {
        most_frequent: accuracy(test, |r| mf.predict(r)),
        bow: accuracy(test, |r| bow.predict(r)),
        nearest_neighbor: accuracy(test, |r| nn.predict(r)),
    }
}
