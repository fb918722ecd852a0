use std::fmt::Write as _;

use crate::corpus::Corpus;
use crate::error::Result;
use crate::mixup::{MixupStrategy, MixupVariant};
use crate::objective::LossWeights;

use super::eval::{evaluate, EvalReport};
use super::train::{train, Supervision, TrainConfig};

/// One trained configuration of the comparison table.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub name: String,
    pub config: TrainConfig,
}

/// Source-only, the adversarial baseline, single-direction and
/// two-direction mixup for every strategy, and the target-supervised oracle.
pub fn suite_variants(base: &TrainConfig) -> Vec<Variant> {
    let with = |weights: LossWeights, f: &dyn Fn(&mut TrainConfig)| {
        let mut c = TrainConfig {
            weights,
            ..base.clone()
        };
        f(&mut c);
        c
    };
    let w = base.weights;
    let mut out = vec![
        Variant {
            name: "source_only".into(),
            config: with(
                LossWeights {
                    mixup: 0.0,
                    adversarial: 0.0,
                    ..w
                },
                &|_| {},
            ),
        },
        Variant {
            name: "baseline".into(),
            config: with(LossWeights { mixup: 0.0, ..w }, &|_| {}),
        },
    ];
    for variant in [MixupVariant::Source, MixupVariant::Both] {
        for s in MixupStrategy::ALL {
            out.push(Variant {
                name: format!("{}_{}", variant.token(), s.token()),
                config: with(w, &|c| {
                    c.mixup_variant = variant;
                    c.mixup_strategy = s;
                }),
            });
        }
    }
    out.push(Variant {
        name: "oracle".into(),
        config: with(
            LossWeights {
                mixup: 0.0,
                adversarial: 0.0,
                ..w
            },
            &|c| c.supervision = Supervision::TargetOracle,
        ),
    });
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteRow {
    pub variant: String,
    pub report: EvalReport,
    pub final_loss: f64,
}

/// Trains and evaluates every variant from the same seed.
pub fn run_experiment_suite(
    corpus: &Corpus,
    base: &TrainConfig,
    q: usize,
    t: usize,
    eval_seed: u64,
    mut progress: impl FnMut(&SuiteRow),
) -> Result<Vec<SuiteRow>> {
    let mut rows = Vec::new();
    for v in suite_variants(base) {
        let outcome = train(&v.config, corpus)?;
        let report = evaluate(&outcome.checkpoint.params, corpus, q, t, eval_seed)?;
        let row = SuiteRow {
            variant: v.name,
            report,
            final_loss: outcome.log.last().map_or(f64::NAN, |e| e.total),
        };
        progress(&row);
        rows.push(row);
    }
    Ok(rows)
}

pub fn suite_csv(rows: &[SuiteRow]) -> String {
    let mut out = String::from("variant,medr,r1,r5,r10,r50,final_loss\n");
    for r in rows {
        let m = &r.report.mean;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.variant, m.medr, m.recall[0], m.recall[1], m.recall[2], m.recall[3], r.final_loss
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_named_variants() {
        let v = suite_variants(&TrainConfig::default());
        assert_eq!(v.len(), 15);
        assert_eq!(v[0].name, "source_only");
        assert_eq!(v[0].config.weights.mixup, 0.0);
        assert_eq!(v[0].config.weights.adversarial, 0.0);
        assert_eq!(v[1].config.weights.adversarial, 0.01);
        assert_eq!(v[2].name, "rm_s_rm1");
        assert_eq!(v[13].name, "rm_st_rm6");
        assert_eq!(v[14].config.supervision, Supervision::TargetOracle);
    }
}
