//! Conditional flow-matching training on the toy datasets.
//!
//! The objective regresses the field onto per-pair straight-line velocities:
//! for a pair (x₀, x₁) and a uniform t, the target at x_t = (1−t)x₀ + tx₁
//! is x₁ − x₀. Pairs come from either an independent coupling or an exact
//! minibatch optimal-transport assignment.

use std::time::Instant;

use rayon::prelude::*;

use crate::coupling::ot_pair;
use crate::dataset::ToyDataset;
use crate::error::{Error, Result};
use crate::net::{field_forward, field_vjp, VelocityFieldParams};
use crate::numerics::{sample_standard_normal, RngState, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    Independent,
    MinibatchOt,
}

impl Coupling {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "independent" => Ok(Coupling::Independent),
            "minibatch-ot" => Ok(Coupling::MinibatchOt),
            other => Err(Error::Config(format!(
                "unknown coupling '{other}'; valid: independent, minibatch-ot"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Coupling::Independent => "independent",
            Coupling::MinibatchOt => "minibatch-ot",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Batches drawn per epoch; the datasets are samplers, not finite files.
    pub batches_per_epoch: usize,
    pub learning_rate: f64,
    pub coupling: Coupling,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub hidden_dims: Vec<usize>,
    pub time_features: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            epochs: 200,
            batches_per_epoch: 50,
            learning_rate: 1e-4,
            coupling: Coupling::Independent,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            hidden_dims: vec![128, 128, 128],
            time_features: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Contract("learning rate must be > 0".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.batches_per_epoch == 0 {
            return Err(Error::Contract("batch size, epochs, batches_per_epoch must be >= 1".into()));
        }
        if self.coupling == Coupling::MinibatchOt && self.batch_size < 2 {
            return Err(Error::Contract("minibatch-ot needs batch_size >= 2".into()));
        }
        Ok(())
    }
}

/// Paired (x₀, x₁) samples with their regression times.
#[derive(Debug, Clone)]
pub struct CouplingBatch {
    pub pairs: Vec<(Vector, Vector)>,
}

/// Point on the straight-line path and its target velocity.
pub fn interpolate(x0: &Vector, x1: &Vector, t: f64) -> Result<(Vector, Vector)> {
    if x0.dim() != x1.dim() {
        return Err(Error::Contract(format!(
            "interpolate: dims differ ({} vs {})",
            x0.dim(),
            x1.dim()
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Contract(format!("interpolate: t = {t} outside [0,1]")));
    }
    let xt = x0.scale(1.0 - t).axpy(t, x1);
    let target = x1.sub(x0);
    Ok((xt, target))
}

/// Mean squared velocity-matching loss over a batch, with its parameter
/// gradient. Per-sample gradients fan out across workers in fixed-size
/// chunks and reduce in chunk order, so the result is bit-deterministic
/// regardless of scheduling.
pub fn cfm_loss(
    params: &VelocityFieldParams,
    batch: &CouplingBatch,
    t_samples: &[f64],
) -> Result<(f64, Vector)> {
    if batch.pairs.len() != t_samples.len() {
        return Err(Error::Contract(format!(
            "batch has {} pairs but {} time samples",
            batch.pairs.len(),
            t_samples.len()
        )));
    }
    if batch.pairs.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }

    const CHUNK: usize = 8;
    let jobs: Vec<(usize, &[(Vector, Vector)])> =
        batch.pairs.chunks(CHUNK).enumerate().collect();
    let partials: Vec<Result<(f64, Vector)>> = jobs
        .into_par_iter()
        .map(|(chunk_idx, pairs)| {
            let mut loss = 0.0;
            let mut grad = Vector::zeros(params.n_params());
            for (local, (x0, x1)) in pairs.iter().enumerate() {
                let t = t_samples[chunk_idx * CHUNK + local];
                let (xt, target) = interpolate(x0, x1, t)?;
                let (v, tape) = field_forward(params, &xt, t)?;
                let err = v.sub(&target);
                loss += err.dot(&err);
                let (_, gp) = field_vjp(params, &tape, &err.scale(2.0))?;
                grad = grad.add(&gp);
            }
            Ok((loss, grad))
        })
        .collect();

    let inv_b = 1.0 / batch.pairs.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vector::zeros(params.n_params());
    for partial in partials {
        let (l, g) = partial?;
        loss += l;
        grad = grad.add(&g);
    }
    loss *= inv_b;
    grad = grad.scale(inv_b);
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite training loss {loss}")));
    }
    Ok((loss, grad))
}

/// Adam on the flat parameter vector; no weight decay.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: usize,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], step: 0, beta1, beta2, eps }
    }

    fn update(&mut self, flat: &mut Vector, grad: &Vector, lr: f64) {
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..flat.dim() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            flat[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Measured; excluded from determinism guarantees.
    pub wall_ms: f64,
}

pub fn training_log_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,mean_loss,wall_ms\n");
    for r in records {
        out.push_str(&format!("{},{:.17e},{:.3}\n", r.epoch, r.mean_loss, r.wall_ms));
    }
    out
}

/// Draw one coupled batch: x₁ from the dataset, x₀ from N(0, I), paired
/// independently or by exact minibatch OT.
pub fn draw_batch(
    dataset: &ToyDataset,
    batch_size: usize,
    coupling: Coupling,
    rng: &mut RngState,
) -> Result<(CouplingBatch, Vec<f64>)> {
    let d = dataset.dim();
    let x1s = dataset.sample_batch(batch_size, rng);
    let x0s: Vec<Vector> = (0..batch_size)
        .map(|_| sample_standard_normal(rng, d))
        .collect();
    let pairs: Vec<(Vector, Vector)> = match coupling {
        Coupling::Independent => x0s.into_iter().zip(x1s).collect(),
        Coupling::MinibatchOt => {
            let perm = ot_pair(&x0s, &x1s)?;
            x0s.into_iter()
                .zip(perm.iter().map(|&j| x1s[j].clone()))
                .collect()
        }
    };
    let ts: Vec<f64> = (0..batch_size).map(|_| rng.next_uniform()).collect();
    Ok((CouplingBatch { pairs }, ts))
}

/// Train a fresh velocity field. Bit-deterministic given (dataset kind,
/// config, rng stream): initialization and batch draws use split child
/// streams of `rng`, and reductions are ordered.
pub fn train(
    dataset: &ToyDataset,
    config: &TrainConfig,
    rng: &RngState,
) -> Result<(VelocityFieldParams, Vec<EpochRecord>)> {
    config.validate()?;
    let mut init_rng = rng.split(0);
    let mut batch_rng = rng.split(1);

    let mut params = VelocityFieldParams::init(
        dataset.dim(),
        &config.hidden_dims,
        config.time_features,
        &mut init_rng,
    );
    let mut flat = params.to_flat();
    let mut adam = Adam::new(flat.dim(), config.adam_beta1, config.adam_beta2, config.adam_eps);
    let mut records = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let mut total = 0.0;
        for _ in 0..config.batches_per_epoch {
            let (batch, ts) = draw_batch(dataset, config.batch_size, config.coupling, &mut batch_rng)?;
            let (loss, grad) = cfm_loss(&params, &batch, &ts)?;
            if loss > 1e6 {
                return Err(Error::TrainingDiverged { epoch, loss });
            }
            adam.update(&mut flat, &grad, config.learning_rate);
            params.set_from_flat(&flat)?;
            total += loss;
        }
        records.push(EpochRecord {
            epoch,
            mean_loss: total / config.batches_per_epoch as f64,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok((params, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetKind;

    #[test]
    fn interpolate_endpoints_and_midpoint() {
        let x0 = Vector::new(vec![0.0, 0.0]);
        let x1 = Vector::new(vec![2.0, 4.0]);
        let (a, va) = interpolate(&x0, &x1, 0.0).unwrap();
        assert_eq!(a.as_slice(), x0.as_slice());
        assert_eq!(va.as_slice(), &[2.0, 4.0]);
        let (b, vb) = interpolate(&x0, &x1, 1.0).unwrap();
        assert_eq!(b.as_slice(), x1.as_slice());
        assert_eq!(vb.as_slice(), &[2.0, 4.0]);
        let (m, vm) = interpolate(&x0, &x1, 0.5).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 2.0]);
        assert_eq!(vm.as_slice(), &[2.0, 4.0]);
        assert!(interpolate(&x0, &Vector::zeros(3), 0.5).is_err());
        assert!(interpolate(&x0, &x1, 1.5).is_err());
    }

    #[test]
    fn cfm_loss_zero_when_network_matches_targets() {
        // constant field c with every pair satisfying x1 - x0 = c
        let c = Vector::new(vec![0.3, -0.7]);
        let params = VelocityFieldParams::constant(&c, 2);
        let mut rng = RngState::new(800);
        let pairs: Vec<(Vector, Vector)> = (0..6)
            .map(|_| {
                let x0 = sample_standard_normal(&mut rng, 2);
                let x1 = x0.add(&c);
                (x0, x1)
            })
            .collect();
        let ts: Vec<f64> = (0..6).map(|_| rng.next_uniform()).collect();
        let (loss, grad) = cfm_loss(&params, &CouplingBatch { pairs }, &ts).unwrap();
        assert!(loss < 1e-28);
        assert!(grad.as_slice().iter().all(|&g| g.abs() < 1e-13));
    }

    #[test]
    fn cfm_loss_zero_network_closed_form() {
        let params = VelocityFieldParams::zero(2, 1);
        let mut rng = RngState::new(801);
        let pairs: Vec<(Vector, Vector)> = (0..8)
            .map(|_| {
                (
                    sample_standard_normal(&mut rng, 2),
                    sample_standard_normal(&mut rng, 2),
                )
            })
            .collect();
        let want = pairs
            .iter()
            .map(|(x0, x1)| {
                let d = x1.sub(x0);
                d.dot(&d)
            })
            .sum::<f64>()
            / 8.0;
        let ts: Vec<f64> = (0..8).map(|_| rng.next_uniform()).collect();
        let (loss, _) = cfm_loss(&params, &CouplingBatch { pairs }, &ts).unwrap();
        assert!((loss - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn cfm_gradient_matches_finite_differences() {
        let mut rng = RngState::new(802);
        let params = VelocityFieldParams::init(2, &[6], 1, &mut rng);
        let pairs: Vec<(Vector, Vector)> = (0..8)
            .map(|_| {
                (
                    sample_standard_normal(&mut rng, 2),
                    sample_standard_normal(&mut rng, 2),
                )
            })
            .collect();
        let ts: Vec<f64> = (0..8).map(|_| rng.next_uniform()).collect();
        let batch = CouplingBatch { pairs };
        let (_, grad) = cfm_loss(&params, &batch, &ts).unwrap();

        let flat = params.to_flat();
        let h = 1e-5;
        for probe in 0..20 {
            let idx = (probe * 13) % flat.dim();
            let mut fp = flat.clone();
            fp[idx] += h;
            let mut fm = flat.clone();
            fm[idx] -= h;
            let mut pp = params.clone();
            pp.set_from_flat(&fp).unwrap();
            let mut pm = params.clone();
            pm.set_from_flat(&fm).unwrap();
            let (lp, _) = cfm_loss(&pp, &batch, &ts).unwrap();
            let (lm, _) = cfm_loss(&pm, &batch, &ts).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (grad[idx] - fd).abs() <= 1e-5,
                "param {idx}: {} vs {fd}",
                grad[idx]
            );
        }
    }

    #[test]
    fn cfm_loss_nonnegative_property() {
        let mut rng = RngState::new(803);
        for _ in 0..10 {
            let params = VelocityFieldParams::init(2, &[4], 1, &mut rng);
            let pairs: Vec<(Vector, Vector)> = (0..4)
                .map(|_| {
                    (
                        sample_standard_normal(&mut rng, 2),
                        sample_standard_normal(&mut rng, 2),
                    )
                })
                .collect();
            let ts: Vec<f64> = (0..4).map(|_| rng.next_uniform()).collect();
            let (loss, _) = cfm_loss(&params, &CouplingBatch { pairs }, &ts).unwrap();
            assert!(loss >= 0.0);
        }
    }

    #[test]
    fn one_epoch_training_is_byte_deterministic() {
        let dataset = ToyDataset::new(DatasetKind::GaussMixture2d);
        let config = TrainConfig {
            epochs: 1,
            batches_per_epoch: 3,
            batch_size: 8,
            hidden_dims: vec![8],
            time_features: 1,
            coupling: Coupling::MinibatchOt,
            ..TrainConfig::default()
        };
        let (p1, _) = train(&dataset, &config, &RngState::new(5)).unwrap();
        let (p2, _) = train(&dataset, &config, &RngState::new(5)).unwrap();
        let mut b1 = Vec::new();
        let mut b2 = Vec::new();
        crate::checkpoint::encode(&p1, &mut b1).unwrap();
        crate::checkpoint::encode(&p2, &mut b2).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn training_reduces_loss() {
        let dataset = ToyDataset::new(DatasetKind::GaussMixture2d);
        let config = TrainConfig {
            epochs: 10,
            batches_per_epoch: 10,
            batch_size: 16,
            hidden_dims: vec![16, 16],
            time_features: 2,
            learning_rate: 3e-3,
            ..TrainConfig::default()
        };
        let (_, records) = train(&dataset, &config, &RngState::new(6)).unwrap();
        assert!(records.last().unwrap().mean_loss < records[0].mean_loss);
    }
}
