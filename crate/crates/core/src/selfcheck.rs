//! Built-in numerical checks behind the `selfcheck` command.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::attention::{attention_scores, AttentionConfig, AttentionModel, SCORE_EPS};
use crate::dct::{dct, idct};
use crate::error::Result;
use crate::model::{MotionModel, ModelConfig};
use crate::numerics::{finite_diff_check, seeded_rng, GradCheckOptions, GradCheckReport, ParamStore, Tape, Tensor};
use crate::pose::{make_partition, Level};
use crate::training::{loss_var, LossKind};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }

    /// `PASS name: detail` or `FAIL name: detail`.
    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::from_parts(vec![rows, cols], data)
}

/// Round trip and energy preservation of the DCT on `rows` random rows per
/// length.
pub fn dct_roundtrip(rows: usize, lens: &[usize], seed: u64) -> Result<CheckResult> {
    let mut rng = seeded_rng(seed);
    let (mut worst_rt, mut worst_energy) = (0.0f64, 0.0f64);
    for &len in lens {
        let x = random_matrix(&mut rng, rows, len);
        let c = dct(&x)?;
        worst_rt = worst_rt.max(idct(&c).max_abs_diff(&x));
        for r in 0..rows {
            let ex: f64 = x.row(r).iter().map(|v| v * v).sum();
            let ec: f64 = c.coeffs().row(r).iter().map(|v| v * v).sum();
            worst_energy = worst_energy.max((ex - ec).abs() / ex.max(f64::MIN_POSITIVE));
        }
    }
    Ok(CheckResult::new(
        "dct roundtrip",
        worst_rt < 1e-9 && worst_energy < 1e-9,
        format!("lengths {lens:?}, max roundtrip error {worst_rt:.3e}, max energy error {worst_energy:.3e}"),
    ))
}

/// Small model used by the end-to-end gradient check: 2 joints, `M = 4`,
/// `T = 2`, `d = 8`, two blocks.
pub fn gradcheck_model(loss: LossKind, seed: u64) -> Result<MotionModel> {
    let part = make_partition(6, 3, Level::Pose, None)?;
    let mut cfg = ModelConfig::new(loss.representation(), 2, 3, part).with_horizon(4, 2);
    cfg.d = 8;
    cfg.f = 8;
    cfg.blocks = 2;
    cfg.seed = seed;
    MotionModel::new(cfg)
}

/// Finite differences against the tape gradient of the full loss, for every
/// parameter of [`gradcheck_model`].
pub fn model_gradcheck(loss: LossKind, seed: u64, opts: GradCheckOptions) -> Result<GradCheckReport> {
    let model = gradcheck_model(loss, seed)?;
    let cfg = model.config();
    let mut rng = seeded_rng(seed ^ 0xa11c_e5ed);
    let history = random_matrix(&mut rng, cfg.k(), cfg.len() + 3);
    let target = random_matrix(&mut rng, cfg.k(), cfg.len());

    let eval = |store: &ParamStore, trainable: bool| -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, trainable);
        let out = model.forward(&mut tape, &bound, &history)?;
        let l = loss_var(&mut tape, loss, false, out.poses, &target)?;
        let value = tape.value(l).item();
        if !trainable {
            return Ok((value, Vec::new()));
        }
        let grads = tape.backward(l)?;
        Ok((value, bound.vars().iter().map(|v| grads.wrt(*v)).collect()))
    };

    let (_, analytic) = eval(model.store(), true)?;
    let f = |params: &[Tensor]| {
        let mut store = model.store().clone();
        store.tensors_mut().clone_from_slice(params);
        eval(&store, false).map(|(v, _)| v).unwrap_or(f64::NAN)
    };
    Ok(finite_diff_check(f, model.store().tensors(), &analytic, opts))
}

pub fn gradient_check(seeds: &[u64]) -> Result<CheckResult> {
    let mut checked = 0;
    let mut kinks = 0;
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    for loss in [LossKind::Mpjpe, LossKind::AngleL1] {
        for &seed in seeds {
            let r = model_gradcheck(loss, seed, GradCheckOptions::default())?;
            checked += r.checked;
            kinks += r.kinks.len();
            worst = worst.max(r.max_rel_error);
            if !r.passed() {
                failed.push(format!("{}/{seed}: {} coords", loss.as_str(), r.failures.len()));
            }
        }
    }
    let mut detail = format!("{checked} coordinates, max relative error {worst:.3e}, {kinks} kinks skipped");
    if !failed.is_empty() {
        detail.push_str(&format!(", failing {}", failed.join("; ")));
    }
    Ok(CheckResult::new("gradient check", failed.is_empty(), detail))
}

/// Score validity on random non-negative banks (every tenth one with an
/// all-zero query) and sliding-key equivalence on random histories.
pub fn attention_invariants(banks: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = seeded_rng(seed);
    let mut worst_sum = 0.0f64;
    let mut negative = 0usize;
    let mut fallback_ok = true;
    for b in 0..banks {
        let n = rng.gen_range(1..40);
        let d = rng.gen_range(1..16);
        let relu = |v: f64| if v > 0.0 { v } else { 0.0 };
        let q: Vec<f64> = if b % 10 == 0 {
            vec![0.0; d]
        } else {
            (0..d).map(|_| relu(rng.sample(StandardNormal))).collect()
        };
        let keys: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| relu(rng.sample(StandardNormal))).collect())
            .collect();
        let a = attention_scores(&q, &keys)?;
        negative += a.iter().filter(|&&v| v < 0.0).count();
        worst_sum = worst_sum.max((a.iter().sum::<f64>() - 1.0).abs());
        let raw: f64 = keys.iter().map(|k| q.iter().zip(k).map(|(x, y)| x * y).sum::<f64>()).sum();
        if raw < SCORE_EPS {
            fallback_ok &= a.iter().all(|&v| v == 1.0 / n as f64);
        }
    }
    let sliding = sliding_key_gap(20, seed.wrapping_add(1))?;
    Ok(CheckResult::new(
        "attention invariants",
        negative == 0 && worst_sum <= 1e-12 && fallback_ok && sliding < 1e-12,
        format!(
            "{banks} banks, max |sum - 1| {worst_sum:.3e}, {negative} negative scores, fallback {}, sliding-key gap {sliding:.3e}",
            if fallback_ok { "uniform" } else { "NOT uniform" }
        ),
    ))
}

/// Largest difference between keys encoded by sliding over the whole history
/// and keys encoded one window at a time.
pub fn sliding_key_gap(trials: usize, seed: u64) -> Result<f64> {
    let mut rng = seeded_rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let part = make_partition(6, 3, Level::Part, Some(&crate::pose::PartMap::contiguous(2)))?;
        let cfg = AttentionConfig::new(10, 10, 8, Level::Part, (6, 5));
        let mut store = ParamStore::new();
        let model = AttentionModel::new(cfg, part, &mut store, "att", &mut rng)?;
        let n = rng.gen_range(20..45);
        let history = random_matrix(&mut rng, 6, n);
        let mut bank = model.build_bank(&history)?;
        model.encode_bank_keys(&store, &mut bank)?;
        let cached = bank.encoded_keys().expect("keys were just encoded").to_vec();
        for (p, keys) in cached.iter().enumerate() {
            for i in 0..bank.len() {
                let mut tape = Tape::new();
                let bound = store.bind(&mut tape, false);
                let x = tape.constant(bank.key_window(p, i)?);
                let k = model.nets_for_part(p).key.encode(&mut tape, &bound, x)?;
                for (r, v) in tape.value(k).data().iter().enumerate() {
                    worst = worst.max((v - keys.get(r, i)).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Every suite at the sizes used by the acceptance criteria.
pub fn run_all(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        dct_roundtrip(1000, &[4, 8, 20, 64], seed)?,
        gradient_check(&[seed, seed + 1, seed + 2, seed + 3, seed + 4])?,
        attention_invariants(10_000, seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass() {
        for r in run_all(0).unwrap() {
            assert!(r.passed, "{}", r.line());
        }
    }

    #[test]
    fn broken_gradient_is_caught() {
        let opts = GradCheckOptions { tol: 1e-30, ..Default::default() };
        let r = model_gradcheck(LossKind::Mpjpe, 3, opts).unwrap();
        assert!(!r.passed());
    }
}
