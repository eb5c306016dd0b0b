//! AdamW with prefix-scoped learning rates, global gradient norm clipping,
//! decoupled weight decay, and a skip path for non-finite gradients.

use super::params::ParamStore;
use crate::error::{Error, Result};
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct ParamGroup {
    /// Longest matching prefix wins; the empty prefix is the default group.
    pub prefix: String,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct AdamWConfig {
    pub groups: Vec<ParamGroup>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub clip_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            groups: vec![ParamGroup { prefix: String::new(), lr: 1e-3 }],
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            clip_norm: Some(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Applied { grad_norm: f64, clipped: bool },
    /// Some gradient came back NaN or infinite; no state was touched.
    SkippedNonFinite,
}

#[derive(Debug, Clone, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    step_count: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig) -> Self {
        AdamW { cfg, step_count: 0, moments: BTreeMap::new() }
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.cfg
    }

    pub fn steps_taken(&self) -> u64 {
        self.step_count
    }

    fn lr_for(&self, name: &str) -> f64 {
        let mut best: Option<(&ParamGroup, usize)> = None;
        for g in &self.cfg.groups {
            if name.starts_with(&g.prefix) {
                let len = g.prefix.len();
                if best.map_or(true, |(_, l)| len > l) {
                    best = Some((g, len));
                }
            }
        }
        best.map(|(g, _)| g.lr).unwrap_or(0.0)
    }

    /// Applies one update over the provided gradients. Names absent from the
    /// gradient map (frozen or untouched parameters) are left alone.
    pub fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<String, Vec<f64>>) -> Result<StepOutcome> {
        let mut sq = 0.0;
        for (name, g) in grads {
            if store.values(name).is_none() {
                return Err(Error::Training(format!("gradient for unknown parameter {name}")));
            }
            for &v in g {
                if !v.is_finite() {
                    return Ok(StepOutcome::SkippedNonFinite);
                }
                sq += v * v;
            }
        }
        let grad_norm = sq.sqrt();
        let scale = match self.cfg.clip_norm {
            Some(c) if grad_norm > c => c / grad_norm,
            _ => 1.0,
        };

        self.step_count += 1;
        let t = self.step_count as f64;
        let bc1 = 1.0 - self.cfg.beta1.powf(t);
        let bc2 = 1.0 - self.cfg.beta2.powf(t);

        for (name, g) in grads {
            let lr = self.lr_for(name);
            let mom = self.moments.entry(name.clone()).or_insert_with(|| Moments {
                m: vec![0.0; g.len()],
                v: vec![0.0; g.len()],
            });
            if mom.m.len() != g.len() {
                return Err(Error::Training(format!("optimizer state size mismatch for {name}")));
            }
            let p = store.values_mut(name).expect("checked above");
            let wd = self.cfg.weight_decay;
            for i in 0..g.len() {
                let gi = g[i] * scale;
                mom.m[i] = self.cfg.beta1 * mom.m[i] + (1.0 - self.cfg.beta1) * gi;
                mom.v[i] = self.cfg.beta2 * mom.v[i] + (1.0 - self.cfg.beta2) * gi * gi;
                let mhat = mom.m[i] / bc1;
                let vhat = mom.v[i] / bc2;
                p[i] -= lr * (mhat / (vhat.sqrt() + self.cfg.eps) + wd * p[i]);
            }
        }
        Ok(StepOutcome::Applied { grad_norm, clipped: scale < 1.0 })
    }

    pub(crate) fn export_state(&self) -> (u64, impl Iterator<Item = (&str, &[f64], &[f64])>) {
        (self.step_count, self.moments.iter().map(|(n, mv)| (n.as_str(), mv.m.as_slice(), mv.v.as_slice())))
    }

    pub(crate) fn import_state(&mut self, step_count: u64, moments: Vec<(String, Vec<f64>, Vec<f64>)>) {
        self.step_count = step_count;
        self.moments = moments.into_iter().map(|(n, m, v)| (n, Moments { m, v })).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Init;

    fn store_with(name: &str, vals: &[f64]) -> ParamStore {
        let mut s = ParamStore::new(0);
        s.insert_raw(name.into(), vec![vals.len()], vals.to_vec()).unwrap();
        s
    }

    #[test]
    fn single_step_matches_reference_update() {
        let mut store = store_with("w", &[1.0]);
        let cfg = AdamWConfig {
            groups: vec![ParamGroup { prefix: String::new(), lr: 0.1 }],
            weight_decay: 0.0,
            clip_norm: None,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), vec![0.5]);
        opt.step(&mut store, &grads).unwrap();
        // bias-corrected first step: update = lr * g / (|g| + eps)
        let expect = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((store.values("w").unwrap()[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn decoupled_decay_applies_even_with_zero_gradient() {
        let mut store = store_with("w", &[2.0]);
        let cfg = AdamWConfig {
            groups: vec![ParamGroup { prefix: String::new(), lr: 0.5 }],
            weight_decay: 0.1,
            clip_norm: None,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), vec![0.0]);
        opt.step(&mut store, &grads).unwrap();
        assert!((store.values("w").unwrap()[0] - (2.0 - 0.5 * 0.1 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn clipping_rescales_to_the_global_norm() {
        let mut store = store_with("w", &[0.0, 0.0]);
        let mut opt = AdamW::new(AdamWConfig::default());
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), vec![30.0, 40.0]);
        match opt.step(&mut store, &grads).unwrap() {
            StepOutcome::Applied { grad_norm, clipped } => {
                assert!((grad_norm - 50.0).abs() < 1e-12);
                assert!(clipped);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_gradient_skips_without_touching_state() {
        let mut store = store_with("w", &[1.0]);
        let mut opt = AdamW::new(AdamWConfig::default());
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), vec![f64::NAN]);
        assert_eq!(opt.step(&mut store, &grads).unwrap(), StepOutcome::SkippedNonFinite);
        assert_eq!(store.values("w").unwrap(), &[1.0]);
        assert_eq!(opt.steps_taken(), 0);
    }

    #[test]
    fn prefix_groups_pick_longest_match() {
        let cfg = AdamWConfig {
            groups: vec![
                ParamGroup { prefix: String::new(), lr: 1e-3 },
                ParamGroup { prefix: "encoder.".into(), lr: 2e-4 },
                ParamGroup { prefix: "encoder.text.".into(), lr: 5e-5 },
            ],
            ..Default::default()
        };
        let opt = AdamW::new(cfg);
        assert_eq!(opt.lr_for("decoder.w"), 1e-3);
        assert_eq!(opt.lr_for("encoder.conv1.w"), 2e-4);
        assert_eq!(opt.lr_for("encoder.text.proj.w"), 5e-5);
    }

    #[test]
    fn frozen_names_are_left_untouched() {
        let mut store = ParamStore::new(0);
        store.get_or_init("a", &[1], Init::Ones).unwrap();
        store.get_or_init("b", &[1], Init::Ones).unwrap();
        let mut opt = AdamW::new(AdamWConfig::default());
        let mut grads = BTreeMap::new();
        grads.insert("a".to_string(), vec![1.0]);
        opt.step(&mut store, &grads).unwrap();
        assert_eq!(store.values("b").unwrap(), &[1.0]);
        assert_ne!(store.values("a").unwrap(), &[1.0]);
    }
}
