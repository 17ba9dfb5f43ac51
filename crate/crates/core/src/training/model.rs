//! Learnable state of every model kind, with flat and named-tensor views.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conv::{LatentShape, Stencil};
use crate::error::{DripError, Result};
use crate::leastaction::{la_net, LAConfig};
use crate::operators::LinearMap;
use crate::potential::{PotentialGrad, PotentialLayer, Slopes};
use crate::shooting::{hyper_resnet, InitMapGrad, InitMapParams};
use crate::solvers::CglsConfig;
use crate::training::proximal::{proximal_baseline_apply, ProxBlockGrad, ProxNet, PROX_BLOCKS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    LANet,
    HyperResNet,
    NeuralProximal,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::LANet => "la-net",
            ModelKind::HyperResNet => "hyper",
            ModelKind::NeuralProximal => "prox",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "la-net" | "lanet" | "LANet" => Ok(ModelKind::LANet),
            "hyper" | "hyper-resnet" | "HyperResNet" => Ok(ModelKind::HyperResNet),
            "prox" | "neural-proximal" | "NeuralProximal" => Ok(ModelKind::NeuralProximal),
            _ => Err(DripError::precondition(format!("unknown model kind {s:?}"))),
        }
    }
}

/// Architecture and solver settings fixed at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub shape: LatentShape,
    /// `N`, or the baseline's application count.
    pub layers: usize,
    pub hidden: usize,
    pub kernel: usize,
    pub slopes: Slopes,
    pub alpha: f64,
    pub fixed_point_sweeps: usize,
    pub max_outer_iterations: usize,
    pub baseline_hidden: usize,
    /// `τ` of the baseline gradient step.
    pub baseline_step: f64,
    #[serde(default = "enabled")]
    pub majorize: bool,
}

fn enabled() -> bool {
    true
}

impl ModelConfig {
    pub fn new(kind: ModelKind, shape: LatentShape) -> Self {
        Self {
            kind,
            shape,
            layers: 8,
            hidden: 16,
            kernel: 3,
            slopes: Slopes::default(),
            alpha: 0.1,
            fixed_point_sweeps: 3,
            max_outer_iterations: 1,
            baseline_hidden: 8,
            baseline_step: 1.0,
            majorize: true,
        }
    }

    pub fn la_config(&self, cgls: CglsConfig) -> LAConfig {
        LAConfig {
            layers: self.layers,
            alpha: self.alpha,
            fixed_point_sweeps: self.fixed_point_sweeps,
            max_outer_iterations: self.max_outer_iterations,
            cgls,
            sweep_tolerance: None,
            majorize: self.majorize,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.slopes.validate()?;
        if self.layers == 0 || self.hidden == 0 || self.kernel.is_multiple_of(2) || self.shape.is_empty() {
            return Err(DripError::precondition(format!("invalid model config: {self:?}")));
        }
        if self.alpha.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            || self.baseline_step.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            || self.max_outer_iterations == 0
        {
            return Err(DripError::precondition("alpha, step and outer iterations must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: ModelConfig,
    pub potential_layers: Vec<PotentialLayer>,
    pub init_map: Option<InitMapParams>,
    pub baseline: Option<ProxNet>,
}

/// Gradient with the same layout as [`ModelBundle`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrad {
    pub potentials: Vec<PotentialGrad>,
    pub init_map: Option<InitMapGrad>,
    pub baseline: Vec<ProxBlockGrad>,
}

/// Named parameter tensor with its logical dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

const TAP_STD: f64 = 0.05;
const INIT_MAP_STD: f64 = 0.1;
const BASELINE_STD: f64 = 0.1;

fn stencil_dims(s: &Stencil) -> Vec<usize> {
    vec![s.out_channels, s.in_channels, s.kernel, s.kernel]
}

impl ModelBundle {
    /// Seeded initialization. Output convolutions of the init map and the
    /// baseline start at zero, so both start as identities.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config.shape.channels;
        let mut bundle = Self { config, potential_layers: Vec::new(), init_map: None, baseline: None };
        match config.kind {
            ModelKind::LANet | ModelKind::HyperResNet => {
                for _ in 0..config.layers {
                    bundle.potential_layers.push(PotentialLayer::random(
                        config.hidden,
                        c,
                        config.kernel,
                        config.slopes,
                        TAP_STD,
                        0.1f64.ln(),
                        &mut rng,
                    )?);
                }
                if config.kind == ModelKind::HyperResNet {
                    bundle.init_map = Some(InitMapParams::random(
                        c,
                        config.hidden,
                        config.kernel,
                        config.slopes,
                        INIT_MAP_STD,
                        &mut rng,
                    )?);
                }
            }
            ModelKind::NeuralProximal => {
                bundle.baseline = Some(ProxNet::random(
                    c,
                    config.baseline_hidden,
                    config.kernel,
                    PROX_BLOCKS,
                    config.slopes,
                    BASELINE_STD,
                    &mut rng,
                )?);
            }
        }
        Ok(bundle)
    }

    /// Same layout as [`ModelBundle::init`] with every parameter zero
    /// (log-weights included).
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let mut m = Self::init(config, 0)?;
        let n = m.num_params();
        m.unflatten(&vec![0.0; n])?;
        Ok(m)
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn shape(&self) -> &LatentShape {
        &self.config.shape
    }

    pub fn zero_grad(&self) -> ModelGrad {
        ModelGrad {
            potentials: self.potential_layers.iter().map(|l| l.zero_grad()).collect(),
            init_map: self.init_map.as_ref().map(|x| x.zero_grad()),
            baseline: self.baseline.as_ref().map(|b| b.zero_grad()).unwrap_or_default(),
        }
    }

    /// Parameters in flattening order, with names and dimensions.
    pub fn named_tensors(&self) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        let mut push =
            |name: String, dims: Vec<usize>, data: &[f64]| out.push(NamedTensor { name, dims, data: data.to_vec() });
        for (l, layer) in self.potential_layers.iter().enumerate() {
            push(format!("potential.{l}.taps"), stencil_dims(&layer.stencil), &layer.stencil.taps);
            push(format!("potential.{l}.log_weights"), vec![layer.log_weights.len()], &layer.log_weights);
        }
        if let Some(xi) = &self.init_map {
            push("init_map.layer1".into(), stencil_dims(&xi.layer1), &xi.layer1.taps);
            push("init_map.bias1".into(), vec![xi.bias1.len()], &xi.bias1);
            push("init_map.layer2".into(), stencil_dims(&xi.layer2), &xi.layer2.taps);
            push("init_map.bias2".into(), vec![xi.bias2.len()], &xi.bias2);
        }
        if let Some(net) = &self.baseline {
            for (j, b) in net.blocks.iter().enumerate() {
                push(format!("baseline.{j}.conv1"), stencil_dims(&b.conv1), &b.conv1.taps);
                push(format!("baseline.{j}.bias1"), vec![b.bias1.len()], &b.bias1);
                push(format!("baseline.{j}.conv2"), stencil_dims(&b.conv2), &b.conv2.taps);
                push(format!("baseline.{j}.bias2"), vec![b.bias2.len()], &b.bias2);
            }
        }
        out
    }

    fn slots_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        for layer in &mut self.potential_layers {
            out.push(&mut layer.stencil.taps);
            out.push(&mut layer.log_weights);
        }
        if let Some(xi) = &mut self.init_map {
            out.push(&mut xi.layer1.taps);
            out.push(&mut xi.bias1);
            out.push(&mut xi.layer2.taps);
            out.push(&mut xi.bias2);
        }
        if let Some(net) = &mut self.baseline {
            for b in &mut net.blocks {
                out.push(&mut b.conv1.taps);
                out.push(&mut b.bias1);
                out.push(&mut b.conv2.taps);
                out.push(&mut b.bias2);
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.named_tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.named_tensors().into_iter().flat_map(|t| t.data).collect()
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        crate::error::ensure_len("flat parameters", flat.len(), self.num_params())?;
        let mut offset = 0;
        for slot in self.slots_mut() {
            let n = slot.len();
            slot.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Replaces parameters from named tensors; names and sizes must match.
    pub fn load_tensors(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        let expected = self.named_tensors();
        if expected.len() != tensors.len() {
            return Err(DripError::Format(format!("expected {} tensors, found {}", expected.len(), tensors.len())));
        }
        for (e, t) in expected.iter().zip(tensors) {
            if e.name != t.name || e.dims != t.dims {
                return Err(DripError::Format(format!(
                    "tensor {:?} {:?} does not match expected {:?} {:?}",
                    t.name, t.dims, e.name, e.dims
                )));
            }
        }
        for (slot, t) in self.slots_mut().into_iter().zip(tensors) {
            slot.copy_from_slice(&t.data);
        }
        Ok(())
    }

    /// Reconstructs `u` from data `b`. DRIP kinds run their solver with
    /// `max_outer_iterations = iterations`; the baseline applies its network
    /// `iterations` times.
    pub fn reconstruct(
        &self,
        a: &LinearMap,
        e: &LinearMap,
        b: &[f64],
        iterations: usize,
        cgls: CglsConfig,
    ) -> Result<Reconstruction> {
        let shape = &self.config.shape;
        match self.config.kind {
            ModelKind::NeuralProximal => {
                let net = self.baseline.as_ref().ok_or_else(|| DripError::precondition("missing baseline net"))?;
                let u = proximal_baseline_apply(b, a, net, shape, iterations, self.config.baseline_step)?;
                Ok(Reconstruction { u, z_star: None, shooting_residual: None, datafit_optimality: None })
            }
            kind => {
                let mut cfg = self.config.la_config(cgls);
                cfg.max_outer_iterations = iterations;
                let out = if kind == ModelKind::LANet {
                    la_net(a, e, b, &self.potential_layers, shape, &cfg)?
                } else {
                    let xi = self.init_map.as_ref().ok_or_else(|| DripError::precondition("missing init map"))?;
                    hyper_resnet(a, e, b, &self.potential_layers, xi, shape, &cfg)?
                };
                Ok(Reconstruction {
                    u: out.u_star,
                    z_star: Some(out.z_star),
                    shooting_residual: Some(out.metrics.shooting_residual),
                    datafit_optimality: Some(out.metrics.datafit_optimality),
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub u: Vec<f64>,
    pub z_star: Option<Vec<f64>>,
    pub shooting_residual: Option<f64>,
    pub datafit_optimality: Option<f64>,
}

impl ModelGrad {
    /// Same order as [`ModelBundle::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.potentials {
            out.extend_from_slice(&g.taps);
            out.extend_from_slice(&g.log_weights);
        }
        if let Some(g) = &self.init_map {
            out.extend_from_slice(&g.layer1);
            out.extend_from_slice(&g.bias1);
            out.extend_from_slice(&g.layer2);
            out.extend_from_slice(&g.bias2);
        }
        for g in &self.baseline {
            out.extend_from_slice(&g.conv1);
            out.extend_from_slice(&g.bias1);
            out.extend_from_slice(&g.conv2);
            out.extend_from_slice(&g.bias2);
        }
        out
    }
}
