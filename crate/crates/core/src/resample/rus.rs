use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{assemble, check_proportion, retained_count, split_classes, Provenance, RebuiltTrainingSet, Strategy};
use crate::data::LabeledDataset;
use crate::error::Result;
use crate::scalar::Scalar;

/// Random undersampling: a uniform sample without replacement of
/// `round(proportion * normals)` normals, plus every agitation.
pub fn rus<T: Scalar>(train: &LabeledDataset<T>, proportion: f64, seed: u64) -> Result<RebuiltTrainingSet<T>> {
    check_proportion(proportion)?;
    let (normals, agitations) = split_classes(train);
    let m = retained_count(proportion, normals.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, normals.len(), m);
    let selected: Vec<usize> = picked.into_iter().map(|i| normals[i]).collect();
    let provenance = Provenance {
        strategy: Strategy::Rus,
        proportion,
        seed,
        k: None,
        lambda1: None,
        lambda2: None,
        pivot_minutes: None,
        source_normal_count: normals.len(),
        retained_normal_count: m,
        agitation_count: agitations.len(),
    };
    Ok(assemble(train, &agitations, selected, provenance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::test_support::*;
    use crate::data::{EpisodeAnnotation, Label, LabeledDataset};

    /// 1000 normals with categories cycling 0..5 and 13 agitations.
    pub(crate) fn source() -> LabeledDataset<f64> {
        let mut rows = Vec::new();
        for m in 0..1013u32 {
            let agit = (500..513).contains(&m);
            let mut r = inst("p", 1, m, Label::from_bool(agit));
            r.category = if agit { None } else { Some((m % 5) as u8) };
            rows.push(r);
        }
        LabeledDataset::new(rows, vec![EpisodeAnnotation::new("p", date(1), 500, 512)]).unwrap()
    }

    #[test]
    fn counts_at_twenty_percent() {
        let out = rus(&source(), 0.2, 3).unwrap();
        assert_eq!(out.retained_normal_count(), 200);
        assert_eq!(out.agitation_count(), 13);
        assert_eq!(out.len(), 213);
        assert_eq!(out.instances.iter().filter(|i| i.label == Label::Agitation).count(), 13);
    }

    #[test]
    fn full_proportion_is_identity() {
        let src = source();
        let out = rus(&src, 1.0, 9).unwrap();
        assert_eq!(out.instances, src.instances());
    }

    #[test]
    fn output_is_ordered_and_duplicate_free() {
        let out = rus(&source(), 0.37, 1).unwrap();
        assert!(out.instances.windows(2).all(|w| w[0].minute_index < w[1].minute_index));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = rus(&source(), 0.3, 5).unwrap();
        assert_eq!(a, rus(&source(), 0.3, 5).unwrap());
        assert_ne!(a.instances, rus(&source(), 0.3, 6).unwrap().instances);
    }

    #[test]
    fn category_shares_preserved_on_average() {
        let src = source();
        let mut share = [0.0f64; 5];
        let seeds = 50;
        for seed in 0..seeds {
            let out = rus(&src, 0.2, seed).unwrap();
            for i in &out.instances {
                if let Some(c) = i.category {
                    share[c as usize] += 1.0 / (200.0 * seeds as f64);
                }
            }
        }
        for s in share {
            assert!((s - 0.2).abs() <= 0.03, "{share:?}");
        }
    }

    #[test]
    fn rejects_bad_proportion() {
        assert!(rus(&source(), 0.0, 1).is_err());
        assert!(rus(&source(), 1.01, 1).is_err());
        assert!(rus(&source(), f64::NAN, 1).is_err());
    }
}
