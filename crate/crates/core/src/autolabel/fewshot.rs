use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::descriptor::{chi_squared, Descriptor};
use crate::error::{Error, Result};
use crate::segment::DamageClass;

/// A damage class or the background ("negative") label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Damage(DamageClass),
    Negative,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Damage(c) => c.as_str(),
            Label::Negative => "negative",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "negative" {
            Ok(Label::Negative)
        } else {
            s.parse().map(Label::Damage)
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A reference crop: its histogram descriptor and its external features.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolItem {
    pub id: String,
    pub descriptor: Descriptor,
    pub features: Vec<f64>,
}

/// Labelled reference crops to draw support sets from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pools {
    pub positives: BTreeMap<DamageClass, Vec<PoolItem>>,
    pub negatives: Vec<PoolItem>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportItem {
    pub label: Label,
    pub id: String,
    pub pool_index: usize,
    pub distance: f64,
    pub features: Vec<f64>,
}

/// Support set ordered by class (in [`DamageClass::ALL`] order), negatives
/// last, and by ascending descriptor distance within each label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SupportSet {
    pub items: Vec<SupportItem>,
}

impl SupportSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

fn nearest(query: &Descriptor, pool: &[PoolItem], k: usize, label: Label) -> Vec<SupportItem> {
    let mut ranked: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .map(|(i, item)| (chi_squared(query, &item.descriptor), i))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked
        .into_iter()
        .take(k)
        .map(|(distance, i)| SupportItem {
            label,
            id: pool[i].id.clone(),
            pool_index: i,
            distance,
            features: pool[i].features.clone(),
        })
        .collect()
}

/// Selects, for each positive class and for the negatives, the `k_per_class`
/// pool items closest to `query` in chi-squared descriptor distance. Ties go
/// to the lower pool index.
pub fn build_support_set(query: &Descriptor, pools: &Pools, k_per_class: usize) -> Result<SupportSet> {
    if k_per_class == 0 {
        return Err(Error::Parameter("k_per_class must be at least 1".into()));
    }
    if pools.negatives.is_empty() {
        return Err(Error::Contract("negative pool is empty".into()));
    }
    let mut items = Vec::new();
    for (class, pool) in &pools.positives {
        if pool.is_empty() {
            return Err(Error::Contract(format!("pool for {class} is empty")));
        }
        items.extend(nearest(query, pool, k_per_class, Label::Damage(*class)));
    }
    items.extend(nearest(query, &pools.negatives, k_per_class, Label::Negative));
    Ok(SupportSet { items })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine distance `1 − a·b / (‖a‖‖b‖)`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "feature dimensions differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(Error::Contract("zero-norm or non-finite feature vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(1.0 - dot / (na * nb))
}

/// Label of the support item nearest to `query` in cosine distance; the
/// earliest item wins ties.
pub fn few_shot_classify(query: &[f64], support: &SupportSet) -> Result<Label> {
    let mut best: Option<(f64, Label)> = None;
    for item in &support.items {
        let d = cosine_distance(query, &item.features)?;
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, item.label));
        }
    }
    best.map(|(_, l)| l)
        .ok_or_else(|| Error::Contract("support set is empty".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autolabel::descriptor::DESCRIPTOR_LEN;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn desc(hot: usize) -> Descriptor {
        let mut v = vec![0.0; DESCRIPTOR_LEN];
        v[hot] = 0.6;
        v[(hot + 1) % DESCRIPTOR_LEN] = 0.4;
        Descriptor::from_values(v).unwrap()
    }

    fn item(id: &str, hot: usize, features: Vec<f64>) -> PoolItem {
        PoolItem {
            id: id.into(),
            descriptor: desc(hot),
            features,
        }
    }

    fn pools() -> Pools {
        let mut positives = BTreeMap::new();
        positives.insert(
            DamageClass::Pothole,
            vec![item("p0", 3, vec![1.0, 0.0, 0.0]), item("p1", 5, vec![0.9, 0.1, 0.0])],
        );
        positives.insert(
            DamageClass::LongitudinalCrack,
            vec![item("l0", 10, vec![0.0, 1.0, 0.0])],
        );
        Pools {
            positives,
            negatives: vec![item("n0", 20, vec![0.0, 0.0, 1.0]), item("n1", 5, vec![0.0, 0.1, 1.0])],
        }
    }

    #[test]
    fn identical_item_first() {
        let s = build_support_set(&desc(5), &pools(), 1).unwrap();
        let ids: Vec<&str> = s.items.iter().map(|i| i.id.as_str()).collect();
        // Classes in enumeration order, negatives last.
        assert_eq!(ids, vec!["l0", "p1", "n1"]);
        assert_eq!(s.items[1].distance, 0.0);
    }

    #[test]
    fn large_k_returns_whole_pool() {
        let s = build_support_set(&desc(0), &pools(), 10).unwrap();
        assert_eq!(s.len(), 5);
    }

    #[test]
    fn empty_pools_rejected() {
        let mut p = pools();
        p.negatives.clear();
        assert!(matches!(build_support_set(&desc(0), &p, 1), Err(Error::Contract(_))));
        let mut p = pools();
        p.positives.insert(DamageClass::AlligatorCrack, vec![]);
        assert!(matches!(build_support_set(&desc(0), &p, 1), Err(Error::Contract(_))));
    }

    #[test]
    fn selection_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let negatives: Vec<PoolItem> = (0..40)
            .map(|i| {
                let mut v: Vec<f64> = (0..DESCRIPTOR_LEN).map(|_| rng.random::<f64>()).collect();
                let s: f64 = v.iter().sum();
                v.iter_mut().for_each(|x| *x /= s);
                PoolItem {
                    id: format!("n{i}"),
                    descriptor: Descriptor::from_values(v).unwrap(),
                    features: vec![1.0],
                }
            })
            .collect();
        let query = negatives[7].descriptor.clone();
        let pools = Pools {
            positives: BTreeMap::new(),
            negatives: negatives.clone(),
        };
        let s = build_support_set(&query, &pools, 6).unwrap();
        let mut oracle: Vec<(f64, usize)> = negatives
            .iter()
            .enumerate()
            .map(|(i, n)| (chi_squared(&query, &n.descriptor), i))
            .collect();
        oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want: Vec<usize> = oracle.iter().take(6).map(|x| x.1).collect();
        let got: Vec<usize> = s.items.iter().map(|i| i.pool_index).collect();
        assert_eq!(got, want);
        assert_eq!(got[0], 7);
    }

    #[test]
    fn classify_examples() {
        let s = build_support_set(&desc(0), &pools(), 5).unwrap();
        assert_eq!(
            few_shot_classify(&[0.0, 1.0, 0.0], &s).unwrap(),
            Label::Damage(DamageClass::LongitudinalCrack)
        );
        assert_eq!(
            few_shot_classify(&[1.0, 0.0, 0.0], &s).unwrap(),
            Label::Damage(DamageClass::Pothole)
        );
        assert_eq!(few_shot_classify(&[0.0, 0.0, 1.0], &s).unwrap(), Label::Negative);
        assert!(matches!(few_shot_classify(&[1.0, 0.0], &s), Err(Error::Contract(_))));
        assert!(matches!(
            few_shot_classify(&[0.0, 0.0, 0.0], &s),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn tie_goes_to_first() {
        let support = SupportSet {
            items: [Label::Negative, Label::Damage(DamageClass::Pothole)]
                .into_iter()
                .enumerate()
                .map(|(i, label)| SupportItem {
                    label,
                    id: i.to_string(),
                    pool_index: i,
                    distance: 0.0,
                    features: vec![1.0, 1.0],
                })
                .collect(),
        };
        assert_eq!(few_shot_classify(&[2.0, 2.0], &support).unwrap(), Label::Negative);
    }

    #[test]
    fn label_strings() {
        for l in DamageClass::ALL.map(Label::Damage).into_iter().chain([Label::Negative]) {
            assert_eq!(l.as_str().parse::<Label>().unwrap(), l);
            let json = serde_json::to_string(&l).unwrap();
            assert_eq!(serde_json::from_str::<Label>(&json).unwrap(), l);
        }
        assert!("bump".parse::<Label>().is_err());
    }
}
