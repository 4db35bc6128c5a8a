//! Run configuration: TOML file sections, defaults, and conversion to
//! library types.

use std::path::Path;

use anyhow::{bail, Context};
use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};
use softclik::dataset::{GenerateOptions, DEFAULT_FRACTIONS};
use softclik::rod::{ActivationMap, RodParams};
use softclik::trainer::TrainConfig;
use softclik::ActuationBox;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub rod: RodSection,
    pub dataset: DatasetSection,
    pub train: TrainSection,
    pub clik: ClikSection,
    pub task: TaskSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RodSection {
    pub length: f64,
    pub bend_stiffness: [f64; 2],
    pub torsion_stiffness: f64,
    pub axial_stiffness: f64,
    pub weight: f64,
    pub gravity: [f64; 3],
    pub longitudinal_bend: f64,
    pub longitudinal_stretch: f64,
    pub helical_bend: f64,
    pub helical_twist: f64,
    pub helical_stretch: f64,
    pub helical_turns: f64,
}

impl Default for RodSection {
    fn default() -> Self {
        let p = RodParams::default();
        let a = p.activation;
        Self {
            length: p.length,
            bend_stiffness: p.bend_stiffness,
            torsion_stiffness: p.torsion_stiffness,
            axial_stiffness: p.axial_stiffness,
            weight: p.weight,
            gravity: [p.gravity.x, p.gravity.y, p.gravity.z],
            longitudinal_bend: a.longitudinal_bend,
            longitudinal_stretch: a.longitudinal_stretch,
            helical_bend: a.helical_bend,
            helical_twist: a.helical_twist,
            helical_stretch: a.helical_stretch,
            helical_turns: a.helical_turns,
        }
    }
}

impl RodSection {
    pub fn params(&self) -> anyhow::Result<RodParams> {
        let p = RodParams {
            length: self.length,
            bend_stiffness: self.bend_stiffness,
            torsion_stiffness: self.torsion_stiffness,
            axial_stiffness: self.axial_stiffness,
            weight: self.weight,
            gravity: Vector3::from(self.gravity),
            activation: ActivationMap {
                longitudinal_bend: self.longitudinal_bend,
                longitudinal_stretch: self.longitudinal_stretch,
                helical_bend: self.helical_bend,
                helical_twist: self.helical_twist,
                helical_stretch: self.helical_stretch,
                helical_turns: self.helical_turns,
            },
        };
        p.validate().context("invalid [rod] section")?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub n: usize,
    pub n_s: usize,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Train, validation and test fractions.
    pub fractions: [f64; 3],
}

impl Default for DatasetSection {
    fn default() -> Self {
        let b = ActuationBox::three_fiber();
        let g = GenerateOptions::default();
        Self {
            n: g.n,
            n_s: g.n_s,
            box_lo: b.lo().iter().copied().collect(),
            box_hi: b.hi().iter().copied().collect(),
            tol: g.tol,
            workers: None,
            fractions: DEFAULT_FRACTIONS,
        }
    }
}

impl DatasetSection {
    pub fn bounds(&self) -> anyhow::Result<ActuationBox> {
        ActuationBox::new(DVector::from_vec(self.box_lo.clone()), DVector::from_vec(self.box_hi.clone()))
            .context("invalid actuation box")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_final: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let c = TrainConfig::default();
        Self {
            epochs: c.epochs,
            batch_size: c.batch_size,
            lr0: c.lr0,
            lr_final: c.lr_final,
            beta1: c.beta1,
            beta2: c.beta2,
            eps: c.eps,
        }
    }
}

impl TrainSection {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr0: self.lr0,
            lr_final: self.lr_final,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            seed,
            checkpoint_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClikSection {
    /// `cc` or `neural`.
    pub model: String,
    /// One value for `k·I`, or the diagonal.
    pub gain: Vec<f64>,
    pub dt: f64,
    pub t_end: f64,
    pub damping: f64,
    pub cond_warn: f64,
    /// Clamp neural runs to the training box.
    pub clamp: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q0: Option<Vec<f64>>,
    /// Segment length of the constant-curvature model.
    pub cc_length: f64,
    pub snapshot_every: usize,
}

impl Default for ClikSection {
    fn default() -> Self {
        Self {
            model: "neural".into(),
            gain: vec![8.0],
            dt: 1e-3,
            t_end: 1.0,
            damping: 1e-6,
            cond_warn: 1e8,
            clamp: true,
            q0: None,
            cc_length: 1.0,
            snapshot_every: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSection {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
    pub s_bar: f64,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self { kind: "pos_fixed".into(), target: None, s_bar: 1.0 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Writes the resolved configuration next to an output.
    pub fn echo(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, self.to_toml()).with_context(|| format!("cannot write {}", path.display()))?;
        log::info!("resolved configuration written to {}", path.display());
        Ok(())
    }
}

/// Parses `a,b,c` into numbers.
pub fn parse_list(s: &str) -> anyhow::Result<Vec<f64>> {
    let out: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    match out {
        Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => bail!("expected a comma-separated list of numbers, got `{s}`"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
        assert_eq!(RunConfig::parse("").unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("sed = 1").is_err());
        assert!(RunConfig::parse("[train]\nepoch = 3").is_err());
        assert!(RunConfig::parse("[nope]").is_err());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let c = RunConfig::parse("[train]\nepochs = 3\n[clik]\ngain = [1.0, 2.0, 3.0]").unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.clik.gain, vec![1.0, 2.0, 3.0]);
        assert_eq!(c.dataset.box_lo, vec![-1.67; 3]);
    }

    #[test]
    fn list_parsing() {
        assert_eq!(parse_list("-1.67, 0").unwrap(), vec![-1.67, 0.0]);
        assert!(parse_list("1,,2").is_err());
        assert!(parse_list("nan").is_err());
    }
}
