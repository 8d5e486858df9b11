use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::smo::{KernelSource, SubKernel};
use super::{train_binary, BinarySvmModel};
use crate::error::{Error, Result};
use crate::kernels::{GramMatrix, MetricContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// One model per class against the rest.
    Oaa,
    /// One model per unordered pair of classes.
    Oao,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Oaa => "oaa",
            Strategy::Oao => "oao",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oaa" | "one-against-all" => Ok(Strategy::Oaa),
            "oao" | "one-against-one" => Ok(Strategy::Oao),
            _ => Err(Error::InvalidParameter(format!("unknown strategy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryEntry {
    pub positive: u32,
    /// `None` for the "rest" side of a one-against-all model.
    pub negative: Option<u32>,
    /// Positions of this model's examples in the full training order.
    pub indices: Vec<usize>,
    pub model: BinarySvmModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassModel {
    pub strategy: Strategy,
    pub class_list: Vec<u32>,
    pub binary_models: Vec<BinaryEntry>,
    pub context: MetricContext,
    pub penalty: f64,
    pub training_ids: Vec<u32>,
}

impl MulticlassModel {
    pub fn all_converged(&self) -> bool {
        self.binary_models.iter().all(|b| b.model.converged)
    }

    pub fn training_len(&self) -> usize {
        self.training_ids.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn class_list(labels: &[u32]) -> Vec<u32> {
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    classes
}

pub fn train_multiclass(
    gram: &GramMatrix,
    labels: &[u32],
    strategy: Strategy,
    penalty: f64,
) -> Result<MulticlassModel> {
    train_multiclass_on(gram, *gram.context(), labels, strategy, penalty)
}

/// As [`train_multiclass`] on any kernel source; `context` is recorded in
/// the model for building query rows later.
pub fn train_multiclass_on<K: KernelSource + Sync + ?Sized>(
    kernel: &K,
    context: MetricContext,
    labels: &[u32],
    strategy: Strategy,
    penalty: f64,
) -> Result<MulticlassModel> {
    if kernel.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: kernel.len(),
            got: labels.len(),
        });
    }
    let classes = class_list(labels);
    if classes.len() < 2 {
        return Err(Error::OneClassOnly);
    }
    let tasks: Vec<(u32, Option<u32>)> = match strategy {
        Strategy::Oaa => classes.iter().map(|&c| (c, None)).collect(),
        Strategy::Oao => classes
            .iter()
            .enumerate()
            .flat_map(|(a, &ca)| classes[a + 1..].iter().map(move |&cb| (ca, Some(cb))))
            .collect(),
    };
    let binary_models = tasks
        .par_iter()
        .map(|&(pos, neg)| {
            let indices: Vec<usize> = (0..labels.len())
                .filter(|&i| neg.is_none() || labels[i] == pos || Some(labels[i]) == neg)
                .collect();
            let y: Vec<f64> = indices
                .iter()
                .map(|&i| if labels[i] == pos { 1.0 } else { -1.0 })
                .collect();
            let model = train_binary(&SubKernel::new(kernel, &indices), &y, penalty)?;
            log::info!(
                "trained {pos} vs {}: {} iterations, converged={}",
                neg.map_or("rest".to_string(), |n| n.to_string()),
                model.iterations,
                model.converged
            );
            Ok(BinaryEntry {
                positive: pos,
                negative: neg,
                indices,
                model,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MulticlassModel {
        strategy,
        class_list: classes,
        binary_models,
        context,
        penalty,
        training_ids: (0..kernel.len()).map(|i| kernel.id(i)).collect(),
    })
}

/// Class of one query region from its kernel row against every training
/// example.
///
/// OAA takes the largest decision value. OAO counts pairwise wins; ties go
/// to the class with the larger summed decision value in its favour, then to
/// the lowest class index.
pub fn predict(model: &MulticlassModel, kernel_row: &[f64]) -> Result<u32> {
    if kernel_row.len() != model.training_len() {
        return Err(Error::DimensionMismatch {
            expected: model.training_len(),
            got: kernel_row.len(),
        });
    }
    let position = |c: u32| model.class_list.binary_search(&c).expect("known class");
    let k = model.class_list.len();
    let mut votes = vec![0usize; k];
    let mut score = vec![0.0f64; k];
    for entry in &model.binary_models {
        let d = entry
            .model
            .decision_unchecked(entry.indices.iter().map(|&i| kernel_row[i]));
        let p = position(entry.positive);
        match entry.negative {
            None => score[p] = d,
            Some(neg) => {
                let n = position(neg);
                if d > 0.0 {
                    votes[p] += 1;
                } else {
                    votes[n] += 1;
                }
                score[p] += d;
                score[n] -= d;
            }
        }
    }
    let mut best = 0;
    for c in 1..k {
        let better = match model.strategy {
            Strategy::Oaa => score[c] > score[best],
            Strategy::Oao => {
                votes[c] > votes[best] || (votes[c] == votes[best] && score[c] > score[best])
            }
        };
        if better {
            best = c;
        }
    }
    Ok(model.class_list[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::{DistanceKind, SymmetricMatrix};
    use std::collections::HashSet;
    use std::sync::Mutex;

    fn ctx() -> MetricContext {
        MetricContext::new(DistanceKind::Hellinger, 1.0, 1.0).unwrap()
    }

    /// Kernel from well separated 1-D clusters, one per class.
    fn clusters(classes: &[u32], per_class: usize) -> (SymmetricMatrix, Vec<u32>, Vec<f64>) {
        let mut xs = Vec::new();
        let mut labels = Vec::new();
        for (ci, &c) in classes.iter().enumerate() {
            for k in 0..per_class {
                xs.push(ci as f64 * 4.0 + 0.3 * k as f64);
                labels.push(c);
            }
        }
        let k = SymmetricMatrix::from_fn(xs.len(), |i, j| (-(xs[i] - xs[j]).powi(2) / 4.0).exp());
        (k, labels, xs)
    }

    fn row(xs: &[f64], q: f64) -> Vec<f64> {
        xs.iter().map(|x| (-(x - q).powi(2) / 4.0).exp()).collect()
    }

    #[test]
    fn model_counts() {
        for (c, oaa, oao) in [(2usize, 2usize, 1usize), (3, 3, 3), (6, 6, 15)] {
            let classes: Vec<u32> = (0..c as u32).collect();
            let (k, labels, _) = clusters(&classes, 3);
            let a = train_multiclass_on(&k, ctx(), &labels, Strategy::Oaa, 10.0).unwrap();
            let o = train_multiclass_on(&k, ctx(), &labels, Strategy::Oao, 10.0).unwrap();
            assert_eq!(a.binary_models.len(), oaa);
            assert_eq!(o.binary_models.len(), oao);
        }
    }

    #[test]
    fn training_points_come_back_as_their_class() {
        let classes = [3, 7, 11, 20];
        let (k, labels, _) = clusters(&classes, 4);
        for s in [Strategy::Oaa, Strategy::Oao] {
            let m = train_multiclass_on(&k, ctx(), &labels, s, 100.0).unwrap();
            assert!(m.all_converged());
            for i in 0..labels.len() {
                assert_eq!(predict(&m, k.row(i)).unwrap(), labels[i], "{s} example {i}");
            }
        }
    }

    #[test]
    fn two_class_strategies_agree() {
        let (k, labels, xs) = clusters(&[0, 1], 5);
        let a = train_multiclass_on(&k, ctx(), &labels, Strategy::Oaa, 10.0).unwrap();
        let o = train_multiclass_on(&k, ctx(), &labels, Strategy::Oao, 10.0).unwrap();
        for q in (0..50).map(|t| -2.0 + 0.2 * t as f64) {
            let r = row(&xs, q);
            assert_eq!(predict(&a, &r).unwrap(), predict(&o, &r).unwrap(), "q={q}");
        }
    }

    fn fixed_model(strategy: Strategy, entries: Vec<(u32, Option<u32>, f64)>) -> MulticlassModel {
        MulticlassModel {
            strategy,
            class_list: vec![0, 1, 2],
            binary_models: entries
                .into_iter()
                .map(|(p, n, bias)| BinaryEntry {
                    positive: p,
                    negative: n,
                    indices: vec![],
                    model: BinarySvmModel {
                        alpha: vec![],
                        labels: vec![],
                        bias,
                        penalty: 1.0,
                        support_ids: vec![],
                        converged: true,
                        iterations: 0,
                    },
                })
                .collect(),
            context: ctx(),
            penalty: 1.0,
            training_ids: vec![],
        }
    }

    #[test]
    fn oaa_takes_the_argmax() {
        let m = fixed_model(
            Strategy::Oaa,
            vec![(0, None, -1.0), (1, None, 2.0), (2, None, -1.0)],
        );
        assert_eq!(predict(&m, &[]).unwrap(), 1);
    }

    #[test]
    fn oao_majority_vote() {
        // 0 beats 1, 0 beats 2, 1 beats 2.
        let m = fixed_model(
            Strategy::Oao,
            vec![(0, Some(1), 0.5), (0, Some(2), 0.2), (1, Some(2), 3.0)],
        );
        assert_eq!(predict(&m, &[]).unwrap(), 0);
    }

    #[test]
    fn oao_ties_use_decision_magnitudes_then_index() {
        // Cycle: 0 beats 1, 1 beats 2, 2 beats 0; one vote each.
        let m = fixed_model(
            Strategy::Oao,
            vec![(0, Some(1), 0.5), (0, Some(2), -0.4), (1, Some(2), 2.0)],
        );
        // Scores: 0 → 0.1, 1 → 1.5, 2 → −1.6.
        assert_eq!(predict(&m, &[]).unwrap(), 1);
        let m = fixed_model(
            Strategy::Oao,
            vec![(0, Some(1), 1.0), (0, Some(2), -1.0), (1, Some(2), 1.0)],
        );
        // Scores: 0 → 0, 1 → 0, 2 → 0.
        assert_eq!(predict(&m, &[]).unwrap(), 0);
    }

    #[test]
    fn row_length_is_checked() {
        let (k, labels, _) = clusters(&[0, 1], 3);
        let m = train_multiclass_on(&k, ctx(), &labels, Strategy::Oao, 10.0).unwrap();
        assert!(matches!(predict(&m, &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    struct Recording<'a> {
        inner: &'a SymmetricMatrix,
        seen: Mutex<HashSet<(usize, usize)>>,
    }

    impl KernelSource for Recording<'_> {
        fn len(&self) -> usize {
            self.inner.len()
        }
        fn get(&self, i: usize, j: usize) -> f64 {
            self.seen.lock().unwrap().insert((i, j));
            self.inner.get(i, j)
        }
    }

    #[test]
    fn oao_reads_only_its_own_pair() {
        let (k, labels, _) = clusters(&[0, 1, 2], 4);
        let (a, b) = (0u32, 2u32);
        let allowed: Vec<usize> = (0..labels.len())
            .filter(|&i| labels[i] == a || labels[i] == b)
            .collect();
        let y: Vec<f64> = allowed
            .iter()
            .map(|&i| if labels[i] == a { 1.0 } else { -1.0 })
            .collect();
        let rec = Recording {
            inner: &k,
            seen: Mutex::new(HashSet::new()),
        };
        train_binary(&SubKernel::new(&rec, &allowed), &y, 10.0).unwrap();
        let seen = rec.seen.into_inner().unwrap();
        assert!(!seen.is_empty());
        for (i, j) in seen {
            assert!(allowed.contains(&i) && allowed.contains(&j), "read ({i}, {j})");
        }

        // Poisoning everything outside the pair leaves the sub-models intact.
        let poisoned = SymmetricMatrix::from_fn(k.len(), |i, j| {
            if labels[i] == 1 || labels[j] == 1 {
                f64::NAN
            } else {
                k.get(i, j)
            }
        });
        let clean = train_multiclass_on(&k, ctx(), &labels, Strategy::Oao, 10.0).unwrap();
        let dirty = train_multiclass_on(&poisoned, ctx(), &labels, Strategy::Oao, 10.0).unwrap();
        let pick = |m: &MulticlassModel| {
            m.binary_models
                .iter()
                .find(|e| e.positive == a && e.negative == Some(b))
                .unwrap()
                .model
                .clone()
        };
        assert_eq!(pick(&clean), pick(&dirty));
    }

    #[test]
    fn json_round_trip() {
        let (k, labels, _) = clusters(&[0, 1, 2], 3);
        let m = train_multiclass_on(&k, ctx(), &labels, Strategy::Oaa, 10.0).unwrap();
        let back = MulticlassModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("OAO".parse::<Strategy>().unwrap(), Strategy::Oao);
        assert_eq!("one-against-all".parse::<Strategy>().unwrap(), Strategy::Oaa);
        assert!("ecoc".parse::<Strategy>().is_err());
    }
}
