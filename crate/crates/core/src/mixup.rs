//! Recipe mixup: exchanging whole sections between paired source and target
//! recipes, and the losses that keep the resulting intermediate domain on the
//! shortest path between the two domains.
//!
//! For batch means `S`, `T` and a mixed batch `M`, the "extra domain shift"
//! is `d(S, M) + d(T, M) - d(S, T)`, which is non-negative by the triangle
//! inequality and zero exactly when `M` lies on the segment from `S` to `T`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Axis, Graph, Tensor, Var};
use crate::corpus::{RecipeFeatures, Section};
use crate::error::{Error, Result};
use crate::model::SectionBatch;

/// Which sections are exchanged between the two recipes of a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum MixupStrategy {
    /// Title.
    Rm1,
    /// Ingredients.
    Rm2,
    /// Instructions.
    Rm3,
    /// Title and ingredients.
    Rm4,
    /// Title and instructions.
    Rm5,
    /// Ingredients and instructions.
    Rm6,
}

impl MixupStrategy {
    pub const ALL: [MixupStrategy; 6] = [
        MixupStrategy::Rm1,
        MixupStrategy::Rm2,
        MixupStrategy::Rm3,
        MixupStrategy::Rm4,
        MixupStrategy::Rm5,
        MixupStrategy::Rm6,
    ];

    pub fn exchanged(self) -> &'static [Section] {
        use Section::*;
        match self {
            MixupStrategy::Rm1 => &[Title],
            MixupStrategy::Rm2 => &[Ingredients],
            MixupStrategy::Rm3 => &[Instructions],
            MixupStrategy::Rm4 => &[Title, Ingredients],
            MixupStrategy::Rm5 => &[Title, Instructions],
            MixupStrategy::Rm6 => &[Ingredients, Instructions],
        }
    }

    pub fn exchanges(self, s: Section) -> bool {
        self.exchanged().contains(&s)
    }

    /// Strategy exchanging exactly the sections this one keeps. Source-mixed
    /// recipes under `s` equal target-mixed recipes under `s.complement()`.
    pub fn complement(self) -> MixupStrategy {
        match self {
            MixupStrategy::Rm1 => MixupStrategy::Rm6,
            MixupStrategy::Rm2 => MixupStrategy::Rm5,
            MixupStrategy::Rm3 => MixupStrategy::Rm4,
            MixupStrategy::Rm4 => MixupStrategy::Rm3,
            MixupStrategy::Rm5 => MixupStrategy::Rm2,
            MixupStrategy::Rm6 => MixupStrategy::Rm1,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            MixupStrategy::Rm1 => "rm1",
            MixupStrategy::Rm2 => "rm2",
            MixupStrategy::Rm3 => "rm3",
            MixupStrategy::Rm4 => "rm4",
            MixupStrategy::Rm5 => "rm5",
            MixupStrategy::Rm6 => "rm6",
        }
    }
}

impl fmt::Display for MixupStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for MixupStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MixupStrategy::ALL
            .into_iter()
            .find(|m| m.token().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config("mixup_strategy", format!("unknown token `{s}` (expected rm1..rm6)")))
    }
}

impl From<MixupStrategy> for String {
    fn from(m: MixupStrategy) -> String {
        m.token().to_string()
    }
}

impl TryFrom<String> for MixupStrategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Which mixed batch forms the intermediate domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MixupVariant {
    /// Source-mixed recipes only.
    #[serde(rename = "rm_s")]
    Source,
    /// Target-mixed recipes only.
    #[serde(rename = "rm_t")]
    Target,
    /// Mean of both.
    #[serde(rename = "rm_st")]
    Both,
}

impl MixupVariant {
    pub fn token(self) -> &'static str {
        match self {
            MixupVariant::Source => "rm_s",
            MixupVariant::Target => "rm_t",
            MixupVariant::Both => "rm_st",
        }
    }
}

impl FromStr for MixupVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rm_s" => Ok(MixupVariant::Source),
            "rm_t" => Ok(MixupVariant::Target),
            "rm_st" => Ok(MixupVariant::Both),
            _ => Err(Error::config("mixup_variant", format!("unknown token `{s}` (expected rm_s, rm_t or rm_st)"))),
        }
    }
}

impl fmt::Display for MixupVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// How two embedding batches are compared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// L2 distance between the batch means.
    #[default]
    BatchMean,
    /// Mean L2 distance between positionally paired rows.
    Paired,
}

/// The two mixed batches produced by one strategy.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedPair {
    pub source_mixed: Vec<RecipeFeatures>,
    pub target_mixed: Vec<RecipeFeatures>,
    pub strategy: MixupStrategy,
    /// `(source row, target row)` combined into each mixed row.
    pub provenance: Vec<(usize, usize)>,
}

/// Exchanges `strategy`'s sections between row `i` of `source` and row `i`
/// of `target`. Source-mixed rows keep the source recipe's other sections;
/// target-mixed rows are the complement.
pub fn mix(source: &[RecipeFeatures], target: &[RecipeFeatures], strategy: MixupStrategy) -> Result<MixedPair> {
    if source.len() != target.len() {
        return Err(Error::InvalidArgument(format!(
            "mix: source batch has {} rows, target batch has {}",
            source.len(),
            target.len()
        )));
    }
    let mut source_mixed = source.to_vec();
    let mut target_mixed = target.to_vec();
    for (sm, tm) in source_mixed.iter_mut().zip(target_mixed.iter_mut()) {
        for &sec in strategy.exchanged() {
            std::mem::swap(sm.section_mut(sec), tm.section_mut(sec));
        }
    }
    Ok(MixedPair {
        source_mixed,
        target_mixed,
        strategy,
        provenance: (0..source.len()).map(|i| (i, i)).collect(),
    })
}

/// [`mix`] on stacked section matrices. Returns `(source_mixed, target_mixed)`.
pub fn mix_sections(
    source: &SectionBatch,
    target: &SectionBatch,
    strategy: MixupStrategy,
) -> Result<(SectionBatch, SectionBatch)> {
    for s in Section::ALL {
        if source.section(s).shape() != target.section(s).shape() {
            return Err(Error::shape("mix", source.section(s).shape(), target.section(s).shape()));
        }
    }
    let mut sm = source.clone();
    let mut tm = target.clone();
    for &s in strategy.exchanged() {
        std::mem::swap(sm.section_mut(s), tm.section_mut(s));
    }
    Ok((sm, tm))
}

/// Distance between two embedding batches on the graph.
pub fn domain_distance(g: &mut Graph, a: Var, b: Var, mode: DistanceMode) -> Result<Var> {
    let (sa, sb) = (g.shape(a).to_vec(), g.shape(b).to_vec());
    if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
        return Err(Error::shape("domain_distance", &sa, &sb));
    }
    match mode {
        DistanceMode::BatchMean => {
            let ma = g.mean_axis(a, Axis::Rows)?;
            let mb = g.mean_axis(b, Axis::Rows)?;
            let diff = g.sub(ma, mb)?;
            Ok(g.l2_norm(diff))
        }
        DistanceMode::Paired => {
            if sa != sb {
                return Err(Error::shape("domain_distance", &sa, &sb));
            }
            let diff = g.sub(a, b)?;
            // |x| = x . (x / |x|), with the zero-row guard of normalize_rows
            let unit = g.normalize_rows(diff)?;
            let norms = g.row_dot(diff, unit)?;
            Ok(g.mean(norms))
        }
    }
}

/// L2 distance between the row means of two embedding matrices.
pub fn batch_domain_distance(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols() {
        return Err(Error::shape("batch_domain_distance", a.shape(), b.shape()));
    }
    let mean = |t: &Tensor| -> Vec<f64> {
        let mut m = vec![0.0; t.cols()];
        for row in t.iter_rows() {
            m.iter_mut().zip(row).for_each(|(x, v)| *x += v);
        }
        m.iter_mut().for_each(|x| *x /= t.rows() as f64);
        m
    };
    let (ma, mb) = (mean(a), mean(b));
    Ok(ma.iter().zip(&mb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

fn extra_shift(g: &mut Graph, source: Var, target: Var, mixed: Var, mode: DistanceMode) -> Result<Var> {
    let ds = domain_distance(g, source, mixed, mode)?;
    let dt = domain_distance(g, target, mixed, mode)?;
    let dst = domain_distance(g, source, target, mode)?;
    let sum = g.add(ds, dt)?;
    g.sub(sum, dst)
}

/// Extra domain shift introduced by the source-mixed batch.
pub fn mixup_loss_s(g: &mut Graph, source: Var, target: Var, source_mixed: Var, mode: DistanceMode) -> Result<Var> {
    extra_shift(g, source, target, source_mixed, mode)
}

/// Extra domain shift introduced by the target-mixed batch.
pub fn mixup_loss_t(g: &mut Graph, source: Var, target: Var, target_mixed: Var, mode: DistanceMode) -> Result<Var> {
    extra_shift(g, source, target, target_mixed, mode)
}

/// Mean of the source- and target-mixed extra shifts.
pub fn mixup_loss_st(
    g: &mut Graph,
    source: Var,
    target: Var,
    source_mixed: Var,
    target_mixed: Var,
    mode: DistanceMode,
) -> Result<Var> {
    let ls = mixup_loss_s(g, source, target, source_mixed, mode)?;
    let lt = mixup_loss_t(g, source, target, target_mixed, mode)?;
    let sum = g.add(ls, lt)?;
    Ok(g.scale(sum, 0.5))
}

/// The configured mixup loss. `source_mixed` / `target_mixed` may be `None`
/// when the variant does not use them.
pub fn mixup_loss(
    g: &mut Graph,
    variant: MixupVariant,
    source: Var,
    target: Var,
    source_mixed: Option<Var>,
    target_mixed: Option<Var>,
    mode: DistanceMode,
) -> Result<Var> {
    let need = |v: Option<Var>, what: &str| {
        v.ok_or_else(|| Error::InvalidArgument(format!("{} needs the {what} batch", variant.token())))
    };
    match variant {
        MixupVariant::Source => mixup_loss_s(g, source, target, need(source_mixed, "source-mixed")?, mode),
        MixupVariant::Target => mixup_loss_t(g, source, target, need(target_mixed, "target-mixed")?, mode),
        MixupVariant::Both => mixup_loss_st(
            g,
            source,
            target,
            need(source_mixed, "source-mixed")?,
            need(target_mixed, "target-mixed")?,
            mode,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Language;
    use proptest::prelude::*;

    fn recipe(tag: f64, language: Language) -> RecipeFeatures {
        RecipeFeatures {
            language,
            title: vec![tag + 0.1],
            ingredients: vec![tag + 0.2],
            instructions: vec![tag + 0.3],
        }
    }

    #[test]
    fn ingredient_exchange() {
        let s = [recipe(1.0, Language::Source)];
        let t = [recipe(2.0, Language::Translated)];
        let m = mix(&s, &t, MixupStrategy::Rm2).unwrap();
        assert_eq!(m.source_mixed[0].title, vec![1.1]);
        assert_eq!(m.source_mixed[0].ingredients, vec![2.2]);
        assert_eq!(m.source_mixed[0].instructions, vec![1.3]);
        assert_eq!(m.target_mixed[0].title, vec![2.1]);
        assert_eq!(m.target_mixed[0].ingredients, vec![1.2]);
        assert_eq!(m.target_mixed[0].instructions, vec![2.3]);
        assert_eq!(m.provenance, vec![(0, 0)]);
        assert_eq!(s[0], recipe(1.0, Language::Source));
    }

    #[test]
    fn complement_pairs() {
        use MixupStrategy::*;
        assert_eq!(Rm1.complement(), Rm6);
        assert_eq!(Rm2.complement(), Rm5);
        assert_eq!(Rm3.complement(), Rm4);
        for s in MixupStrategy::ALL {
            assert_eq!(s.complement().complement(), s);
            let n = s.exchanged().len();
            assert!(n == 1 || n == 2);
            for sec in Section::ALL {
                assert_ne!(s.exchanges(sec), s.complement().exchanges(sec));
            }
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let s = [recipe(1.0, Language::Source)];
        assert!(mix(&s, &[], MixupStrategy::Rm1).is_err());
    }

    #[test]
    fn tokens_parse() {
        for s in MixupStrategy::ALL {
            assert_eq!(s.token().parse::<MixupStrategy>().unwrap(), s);
        }
        assert!("rm7".parse::<MixupStrategy>().is_err());
        assert_eq!("rm_st".parse::<MixupVariant>().unwrap(), MixupVariant::Both);
        assert!("rm".parse::<MixupVariant>().is_err());
    }

    #[test]
    fn point_mass_distance() {
        let a = Tensor::from_rows(&[[1.0, 2.0], [1.0, 2.0]]).unwrap();
        let b = Tensor::from_rows(&[[4.0, 6.0]]).unwrap();
        assert_eq!(batch_domain_distance(&a, &b).unwrap(), 5.0);
        assert_eq!(batch_domain_distance(&a, &a).unwrap(), 0.0);
        assert!(batch_domain_distance(&a, &Tensor::zeros(&[1, 3])).is_err());
    }

    fn losses(s: &Tensor, t: &Tensor, m: &Tensor) -> (f64, f64) {
        let mut g = Graph::new();
        let (sv, tv, mv) = (g.constant(s.clone()), g.constant(t.clone()), g.constant(m.clone()));
        let ls = mixup_loss_s(&mut g, sv, tv, mv, DistanceMode::BatchMean).unwrap();
        let lt = mixup_loss_t(&mut g, tv, sv, mv, DistanceMode::BatchMean).unwrap();
        (g.value(ls).item(), g.value(lt).item())
    }

    #[test]
    fn endpoint_mixed_batch_has_zero_shift() {
        let s = Tensor::from_rows(&[[0.6, 0.8], [1.0, 0.0]]).unwrap();
        let t = Tensor::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).unwrap();
        let (ls, _) = losses(&s, &t, &s);
        assert!(ls.abs() < 1e-15);
        let (ls, _) = losses(&s, &s, &s);
        assert_eq!(ls, 0.0);
    }

    fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
        prop::collection::vec(-1.0f64..1.0, rows * cols).prop_map(move |d| Tensor::new(vec![rows, cols], d).unwrap())
    }

    proptest! {
        #[test]
        fn mixup_losses_are_symmetric_and_permutation_invariant(
            s in matrix(4, 3), t in matrix(4, 3), m in matrix(4, 3), rot in 0usize..4
        ) {
            let (ls, lt_swapped) = losses(&s, &t, &m);
            // mixup_loss_t(s, t, m) == mixup_loss_s(t, s, m)
            prop_assert!((ls - lt_swapped).abs() < 1e-12);
            prop_assert!(ls >= -1e-12);

            let perm: Vec<usize> = (0..4).map(|i| (i + rot) % 4).collect();
            let p = |x: &Tensor| x.select_rows(&perm).unwrap();
            let (lp, _) = losses(&p(&s), &p(&t), &p(&m));
            prop_assert!((ls - lp).abs() < 1e-12);
        }

        #[test]
        fn paired_mode_is_non_negative(s in matrix(3, 2), t in matrix(3, 2), m in matrix(3, 2)) {
            let mut g = Graph::new();
            let (sv, tv, mv) = (g.constant(s), g.constant(t), g.constant(m));
            let l = mixup_loss_s(&mut g, sv, tv, mv, DistanceMode::Paired).unwrap();
            prop_assert!(g.value(l).item() >= -1e-12);
        }
    }
}
