//! Experiment configuration files.
//!
//! A config is TOML. The `[hyper]` table holds literal hyperparameters;
//! `hyper = "optimize"` runs the search described under `[hyperopt]` first.
//!
//! ```toml
//! seed = 209
//! out = "out/driven"
//! baseline = "euler"
//! t_range = [0.0, 12.566370614359172]
//! ics = [-5.5, -2.0, 1.0, 5.5]
//!
//! [problem]
//! kind = "linear"
//! a1 = 1.0
//! a0 = 1.0
//! force = { sin = {} }
//!
//! [hyper]
//! dt = 0.0031622776601683794
//! n_nodes = 500
//! connectivity = 0.7875262340500385
//! spectral_radius = 9.97140121459961
//! regularization = 8.656278081920211
//! leaking_rate = 0.007868987508118153
//! bias = -0.2435922622680664
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bernoulli::{BernoulliOde, InitStrategy};
use crate::coeff::Coeff;
use crate::error::{Error, Result};
use crate::gd::GdConfig;
use crate::hyperopt::{BoConfig, CvProblem, Dim, SearchSpace};
use crate::linear::LinearOde;
use crate::reservoir::HyperParams;
use crate::system::{OdeSystem, SystemKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    #[default]
    None,
    Euler,
    Rk4,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProblemSpec {
    /// `a1(t) ẏ + a0(t) y = force(t)`
    Linear { a1: Coeff, a0: Coeff, force: Coeff },
    /// `a1(t) ẏ + a0(t) y + q(t) y² = force(t)`
    Bernoulli {
        a1: Coeff,
        a0: Coeff,
        q: Coeff,
        force: Coeff,
        #[serde(default)]
        init: InitStrategy,
    },
    System {
        system: SystemKind,
        #[serde(default = "yes")]
        energy_penalty: bool,
        #[serde(default = "one")]
        energy_weight: f64,
    },
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Linear { .. } => "linear",
            ProblemSpec::Bernoulli { .. } => "bernoulli",
            ProblemSpec::System { .. } => "system",
        }
    }
}

/// An initial condition: a number for scalar problems, an array for systems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Ic {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Ic {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Ic::Scalar(v) => vec![*v],
            Ic::Vector(v) => v.clone(),
        }
    }
}

/// Training settings that hyperparameter blocks may list next to the reservoir
/// hyperparameters. When present they override `[training]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enet_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enet_strength: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", alias = "spikethreshold")]
    pub spike_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_cyclic: Option<f64>,
}

impl TrainingOverrides {
    pub fn apply(&self, gd: &mut GdConfig) {
        if let Some(v) = self.enet_alpha {
            gd.enet_alpha = v;
        }
        if let Some(v) = self.enet_strength {
            gd.enet_strength = v;
        }
        if let Some(v) = self.spike_threshold {
            gd.spike_threshold = v;
        }
        if let Some(v) = self.gamma {
            gd.gamma = v;
        }
        if let Some(v) = self.gamma_cyclic {
            gd.gamma_cyclic = Some(v);
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HyperBlock {
    #[serde(flatten)]
    pub params: HyperParams,
    #[serde(flatten)]
    pub training: TrainingOverrides,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperSource {
    Literal(HyperBlock),
    /// Must be the string `"optimize"`.
    Keyword(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HyperoptSection {
    #[serde(flatten)]
    pub bo: BoConfig,
    pub space: Vec<Dim>,
    /// Values for the fields not searched; defaults to the problem preset.
    #[serde(default)]
    pub base: Option<HyperParams>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Overrides `hyper.random_seed` and the training seed when set.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub baseline: Baseline,
    pub t_range: [f64; 2],
    pub ics: Vec<Ic>,
    pub problem: ProblemSpec,
    pub hyper: HyperSource,
    #[serde(default)]
    pub training: Option<GdConfig>,
    #[serde(default)]
    pub hyperopt: Option<HyperoptSection>,
    /// Written by runs; ignored on input.
    #[serde(default, skip_serializing)]
    pub run: Option<toml::Table>,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let [t0, t1] = self.t_range;
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            return bad(format!("t_range [{t0}, {t1}] is not increasing"));
        }
        if self.ics.is_empty() {
            return bad("ics is empty".into());
        }
        let dim = match &self.problem {
            ProblemSpec::System { system, .. } => system_dim(*system),
            _ => 1,
        };
        for ic in &self.ics {
            if ic.values().len() != dim {
                return bad(format!("initial condition {ic:?} does not have {dim} component(s)"));
            }
        }
        match &self.hyper {
            HyperSource::Literal(b) => b.params.validate()?,
            HyperSource::Keyword(k) if k == "optimize" => {
                let Some(h) = &self.hyperopt else {
                    return bad("hyper = \"optimize\" needs a [hyperopt] section".into());
                };
                h.bo.validate()?;
                SearchSpace { dims: h.space.clone() }.validate()?;
            }
            HyperSource::Keyword(k) => return bad(format!("hyper must be a table or \"optimize\", got \"{k}\"")),
        }
        if let Some(h) = &self.hyperopt {
            h.bo.validate()?;
        }
        if let Some(gd) = &self.training {
            gd.validate()?;
        }
        Ok(())
    }

    pub fn t_range(&self) -> (f64, f64) {
        (self.t_range[0], self.t_range[1])
    }

    pub fn ic_values(&self) -> Vec<Vec<f64>> {
        self.ics.iter().map(Ic::values).collect()
    }

    fn scalar_ics(&self) -> Vec<f64> {
        self.ics.iter().map(|ic| ic.values()[0]).collect()
    }

    /// Hyperparameters used when the config has no literal block.
    pub fn preset_hyper(&self) -> HyperParams {
        match &self.problem {
            ProblemSpec::Linear { .. } => HyperParams::driven_population(),
            ProblemSpec::Bernoulli { .. } => HyperParams::bernoulli(),
            ProblemSpec::System { .. } => HyperParams::nonlinear_oscillator(),
        }
    }

    /// Training settings: the `[training]` table, else the problem preset.
    /// The config seed, when present, replaces the training seed.
    pub fn training(&self) -> GdConfig {
        let mut gd = self.training.clone().unwrap_or_else(|| match &self.problem {
            ProblemSpec::System { .. } => GdConfig::nonlinear_oscillator(),
            _ => GdConfig::bernoulli(),
        });
        if let HyperSource::Literal(b) = &self.hyper {
            b.training.apply(&mut gd);
        }
        if let Some(s) = self.seed {
            gd.seed = s;
        }
        gd
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn linear_ode(&self) -> Option<LinearOde> {
        match &self.problem {
            ProblemSpec::Linear { a1, a0, force } => Some(LinearOde {
                a1: a1.clone(),
                a0: a0.clone(),
                force: force.clone(),
                psi0_list: self.scalar_ics(),
                t_range: self.t_range(),
            }),
            _ => None,
        }
    }

    pub fn bernoulli_ode(&self) -> Option<BernoulliOde> {
        match &self.problem {
            ProblemSpec::Bernoulli { a1, a0, q, force, .. } => Some(BernoulliOde {
                a1: a1.clone(),
                a0: a0.clone(),
                q: q.clone(),
                force: force.clone(),
                psi0_list: self.scalar_ics(),
                t_range: self.t_range(),
            }),
            _ => None,
        }
    }

    /// The system with the first IC.
    pub fn ode_system(&self) -> Result<Option<OdeSystem>> {
        match &self.problem {
            ProblemSpec::System { system, energy_penalty, energy_weight } => {
                let mut sys = OdeSystem::from_kind(*system, self.ics[0].values(), self.t_range(), *energy_penalty)?;
                if let Some(h) = sys.hamiltonian.as_mut() {
                    h.weight = *energy_weight;
                }
                Ok(Some(sys))
            }
            _ => Ok(None),
        }
    }

    pub fn cv_problem(&self) -> Result<CvProblem> {
        if let Some(o) = self.linear_ode() {
            return Ok(CvProblem::Linear(o));
        }
        if let Some(o) = self.bernoulli_ode() {
            return Ok(CvProblem::Bernoulli(o));
        }
        Ok(CvProblem::System(self.ode_system()?.expect("system problem")))
    }
}

fn system_dim(kind: SystemKind) -> usize {
    match kind {
        SystemKind::NonlinearOscillator | SystemKind::HarmonicOscillator => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DRIVEN: &str = r#"
        t_range = [0.0, 1.0]
        ics = [-1.0, 2.5]
        [problem]
        kind = "linear"
        a1 = 1.0
        a0 = 1.0
        force = { sin = {} }
        [hyper]
        dt = 0.0031622776601683794
        n_nodes = 500
        connectivity = 0.7875262340500385
        spectral_radius = 9.97140121459961
        regularization = 8.656278081920211
        leaking_rate = 0.007868987508118153
        bias = -0.2435922622680664
    "#;

    #[test]
    fn literal_block_parses_verbatim() {
        let cfg = ExperimentConfig::from_toml_str(DRIVEN).unwrap();
        let HyperSource::Literal(b) = &cfg.hyper else { panic!() };
        assert_eq!(b.params, HyperParams::driven_population());
        assert_eq!(cfg.linear_ode().unwrap().psi0_list, vec![-1.0, 2.5]);
        assert_eq!(cfg.baseline, Baseline::None);
    }

    #[test]
    fn oscillator_block_carries_training_keys() {
        let text = r#"
            t_range = [0.0, 6.283185307179586]
            ics = [[1.3, 1.0]]
            [problem]
            kind = "system"
            system = "nonlinear_oscillator"
            [hyper]
            dt = 0.001
            regularization = 48.97788193684461
            n_nodes = 500
            connectivity = 0.017714821964432213
            spectral_radius = 2.3660330772399902
            leaking_rate = 0.0024312976747751236
            bias = 0.37677669525146484
            enet_alpha = 0.2082211971282959
            enet_strength = 0.118459548397668
            spikethreshold = 0.43705281615257263
            gamma = 0.09469877928495407
            gamma_cyclic = 0.999860422666841
            activation = "sin"
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let HyperSource::Literal(b) = &cfg.hyper else { panic!() };
        assert_eq!(b.params, HyperParams::nonlinear_oscillator());
        assert_eq!(cfg.training(), GdConfig::nonlinear_oscillator());
        assert_eq!(cfg.ode_system().unwrap().unwrap().dim(), 2);
    }

    #[test]
    fn optimize_requires_section() {
        let text = DRIVEN.replace("[hyper]", "hyper = \"optimize\"\n[unused]");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn zero_budget_is_rejected() {
        let text = format!(
            "{}\n[hyperopt]\nn_init = 1\nmax_evals = 0\nic_bundle = [[1.0]]\nspace = [{{ name = \"bias\", low = -1.0, high = 1.0 }}]\n",
            DRIVEN
        );
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("max_evals"), "{err}");
    }

    #[test]
    fn ic_shape_checked() {
        let text = DRIVEN.replace("ics = [-1.0, 2.5]", "ics = [[1.0, 2.0]]");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = DRIVEN.replace("kind = \"linear\"", "kind = \"linear\"\nfoo = 1");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }
}
