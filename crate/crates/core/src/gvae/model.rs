use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bspline::KernelSpec;
use super::conv::{ConvGeometry, ConvGrad, SplineConvLayer};
use super::layers::{elu_backward, elu_in_place, pool_backward, sigmoid, unpool_backward, Dense, DenseGrad};
use crate::error::{Error, Result};
use crate::mesh::{pool, unpool, AssignmentMatrix, CoarseningHierarchy, Point3};

pub const LOGVAR_CLAMP: f64 = 20.0;

/// How the coarsest encoder feature map reaches the latent head.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// Concatenate all coarsest-vertex features. Spline convolutions only see
    /// relative offsets, so this is what lets the latent code carry *where*
    /// a feature sits on the mesh.
    #[default]
    Flatten,
    /// Average over coarsest vertices: size-independent, but blind to
    /// absolute location.
    Mean,
}

/// Channel plan of the encoder/decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    /// Encoder conv output widths, one per hierarchy level.
    pub widths: Vec<usize>,
    pub latent_dim: usize,
    pub kernel: KernelSpec,
    pub readout: Readout,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            widths: vec![16, 32, 64],
            latent_dim: 2,
            kernel: KernelSpec::default(),
            readout: Readout::Flatten,
        }
    }
}

impl Architecture {
    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::InvalidInput("architecture needs nonzero widths for at least one level".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::InvalidInput("latent_dim must be >= 1".into()));
        }
        Ok(())
    }

    /// `(in, out)` channels of decoder conv `k`, which runs at level `depth - k`.
    fn decoder_channels(&self, k: usize) -> (usize, usize) {
        let level = self.depth() - k;
        let out = if level >= 2 { self.widths[level - 2] } else { self.widths[0] };
        (self.widths[level - 1], out)
    }
}

/// Hierarchy-dependent data shared by every forward pass.
#[derive(Debug)]
pub struct ModelGeometry {
    convs: Vec<ConvGeometry>,
    assignments: Vec<AssignmentMatrix>,
    sizes: Vec<usize>,
    coarsest_positions: Vec<Point3>,
    checksum: String,
    finest_checksum: String,
}

impl ModelGeometry {
    pub fn new(hierarchy: &CoarseningHierarchy, kernel: KernelSpec) -> Result<Self> {
        let convs = hierarchy
            .graphs()
            .iter()
            .map(|g| ConvGeometry::new(g, kernel))
            .collect::<Result<_>>()?;
        Ok(ModelGeometry {
            convs,
            assignments: hierarchy.assignments().to_vec(),
            sizes: hierarchy.sizes(),
            coarsest_positions: hierarchy.coarsest().positions().to_vec(),
            checksum: hierarchy.checksum(),
            finest_checksum: hierarchy.finest().checksum(),
        })
    }

    pub fn depth(&self) -> usize {
        self.assignments.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    /// Checksum of the level-0 graph, matching dataset checksums.
    pub fn finest_checksum(&self) -> &str {
        &self.finest_checksum
    }

    pub fn coarsest_positions(&self) -> &[Point3] {
        &self.coarsest_positions
    }
}

/// Diagonal Gaussian posterior over the latent code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentGaussian {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
}

/// `z = mu + exp(logvar / 2) * eps`.
pub fn reparameterize(lg: &LatentGaussian, eps: &[f64]) -> Result<Vec<f64>> {
    if eps.len() != lg.mu.len() {
        return Err(Error::mismatch(lg.mu.len(), eps.len()));
    }
    Ok(lg
        .mu
        .iter()
        .zip(&lg.logvar)
        .zip(eps)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect())
}

/// Closed-form `KL(N(mu, exp(logvar)) || N(0, I))`.
pub fn kl_divergence(lg: &LatentGaussian) -> f64 {
    0.5 * lg
        .mu
        .iter()
        .zip(&lg.logvar)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

/// Squared reconstruction error plus weighted KL (to minimize).
pub fn elbo_loss(theta: &[f64], theta_hat: &[f64], lg: &LatentGaussian, kl_weight: f64) -> Result<f64> {
    if theta.len() != theta_hat.len() {
        return Err(Error::mismatch(theta.len(), theta_hat.len()));
    }
    let recon: f64 = theta.iter().zip(theta_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(recon + kl_weight * kl_divergence(lg))
}

/// Trainable tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GVaeParams {
    pub encoder: Vec<SplineConvLayer>,
    pub enc_head: Dense,
    pub dec_dense: Dense,
    /// `decoder[k]` runs at hierarchy level `depth - k`.
    pub decoder: Vec<SplineConvLayer>,
    pub output: SplineConvLayer,
}

impl GVaeParams {
    /// Tensors in canonical order: encoder convs, encoder head, decoder dense,
    /// decoder convs, output conv.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.encoder {
            out.extend([&l.weight[..], &l.root[..], &l.bias[..]]);
        }
        out.extend([&self.enc_head.weight[..], &self.enc_head.bias[..]]);
        out.extend([&self.dec_dense.weight[..], &self.dec_dense.bias[..]]);
        for l in self.decoder.iter().chain(std::iter::once(&self.output)) {
            out.extend([&l.weight[..], &l.root[..], &l.bias[..]]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        for l in &mut self.encoder {
            out.extend([&mut l.weight, &mut l.root, &mut l.bias]);
        }
        out.extend([&mut self.enc_head.weight, &mut self.enc_head.bias]);
        out.extend([&mut self.dec_dense.weight, &mut self.dec_dense.bias]);
        for l in self.decoder.iter_mut().chain(std::iter::once(&mut self.output)) {
            out.extend([&mut l.weight, &mut l.root, &mut l.bias]);
        }
        out
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for k in 0..self.encoder.len() {
            out.extend(["weight", "root", "bias"].map(|t| format!("encoder{k}.{t}")));
        }
        out.extend(["enc_head.weight".into(), "enc_head.bias".into()]);
        out.extend(["dec_dense.weight".into(), "dec_dense.bias".into()]);
        for k in 0..self.decoder.len() {
            out.extend(["weight", "root", "bias"].map(|t| format!("decoder{k}.{t}")));
        }
        out.extend(["weight", "root", "bias"].map(|t| format!("output.{t}")));
        out
    }

    /// Parameters shaped for `arch` with `coarse` vertices on the coarsest
    /// level (values are a fixed-seed initialization).
    pub fn shaped(arch: &Architecture, coarse: usize) -> Result<Self> {
        arch.validate()?;
        if coarse == 0 {
            return Err(Error::InvalidInput("coarsest level must be nonempty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(GVaeModel::init_params(arch, coarse, &mut rng))
    }

    /// Number of leading tensors belonging to encoder convolutions.
    pub fn encoder_conv_tensors(&self) -> usize {
        3 * self.encoder.len()
    }
}

/// Gradients laid out like [`GVaeParams`].
#[derive(Clone, Debug)]
pub struct GVaeGrads {
    pub encoder: Vec<ConvGrad>,
    pub enc_head: DenseGrad,
    pub dec_dense: DenseGrad,
    pub decoder: Vec<ConvGrad>,
    pub output: ConvGrad,
}

impl GVaeGrads {
    pub fn zeros(params: &GVaeParams) -> Self {
        GVaeGrads {
            encoder: params.encoder.iter().map(SplineConvLayer::zero_grad).collect(),
            enc_head: params.enc_head.zero_grad(),
            dec_dense: params.dec_dense.zero_grad(),
            decoder: params.decoder.iter().map(SplineConvLayer::zero_grad).collect(),
            output: params.output.zero_grad(),
        }
    }

    /// Same order as [`GVaeParams::tensors`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for g in &self.encoder {
            out.extend([&g.weight[..], &g.root[..], &g.bias[..]]);
        }
        out.extend([&self.enc_head.weight[..], &self.enc_head.bias[..]]);
        out.extend([&self.dec_dense.weight[..], &self.dec_dense.bias[..]]);
        for g in self.decoder.iter().chain(std::iter::once(&self.output)) {
            out.extend([&g.weight[..], &g.root[..], &g.bias[..]]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        for g in &mut self.encoder {
            out.extend([&mut g.weight, &mut g.root, &mut g.bias]);
        }
        out.extend([&mut self.enc_head.weight, &mut self.enc_head.bias]);
        out.extend([&mut self.dec_dense.weight, &mut self.dec_dense.bias]);
        for g in self.decoder.iter_mut().chain(std::iter::once(&mut self.output)) {
            out.extend([&mut g.weight, &mut g.root, &mut g.bias]);
        }
        out
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }
}

/// Graph-convolutional variational auto-encoder bound to one hierarchy.
#[derive(Clone, Debug)]
pub struct GVaeModel {
    arch: Architecture,
    geometry: Arc<ModelGeometry>,
    pub params: GVaeParams,
}

/// Intermediate values of one forward pass, kept for backpropagation.
struct Trace {
    enc_inputs: Vec<Array2<f64>>,
    enc_acts: Vec<Array2<f64>>,
    pooled: Array2<f64>,
    h: Vec<f64>,
    logvar_free: Vec<bool>,
    latent: LatentGaussian,
    z: Vec<f64>,
    dec_inputs: Vec<Array2<f64>>,
    dec_acts: Vec<Array2<f64>>,
    out_input: Array2<f64>,
    theta_hat: Vec<f64>,
}

/// Loss of a single sample, split into its terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
}

impl GVaeModel {
    /// Seeded initialization for `hierarchy`.
    pub fn new(arch: Architecture, hierarchy: &CoarseningHierarchy, seed: u64) -> Result<Self> {
        arch.validate()?;
        if hierarchy.depth() != arch.depth() {
            return Err(Error::InvalidInput(format!(
                "architecture has {} levels but hierarchy depth is {}",
                arch.depth(),
                hierarchy.depth()
            )));
        }
        let geometry = Arc::new(ModelGeometry::new(hierarchy, arch.kernel)?);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Self::init_params(&arch, geometry.sizes[arch.depth()], &mut rng);
        Ok(GVaeModel { arch, geometry, params })
    }

    fn init_params(arch: &Architecture, coarse: usize, rng: &mut ChaCha8Rng) -> GVaeParams {
        let depth = arch.depth();
        let q = arch.latent_dim;
        let mut encoder = Vec::with_capacity(depth);
        let mut in_ch = 1;
        for &w in &arch.widths {
            encoder.push(SplineConvLayer::init(in_ch, w, arch.kernel, rng));
            in_ch = w;
        }
        let top = arch.widths[depth - 1];
        let head_in = match arch.readout {
            Readout::Flatten => top * coarse,
            Readout::Mean => top,
        };
        let enc_head = Dense::init(head_in, 2 * q, rng);
        let dec_dense = Dense::init(q, top * coarse, rng);
        let decoder = (0..depth)
            .map(|k| {
                let (i, o) = arch.decoder_channels(k);
                SplineConvLayer::init(i, o, arch.kernel, rng)
            })
            .collect();
        let output = SplineConvLayer::init(arch.widths[0], 1, arch.kernel, rng);
        GVaeParams {
            encoder,
            enc_head,
            dec_dense,
            decoder,
            output,
        }
    }

    /// Rebinds existing parameters to a hierarchy, checking shapes.
    pub fn from_params(
        arch: Architecture,
        hierarchy: &CoarseningHierarchy,
        params: GVaeParams,
    ) -> Result<Self> {
        arch.validate()?;
        let geometry = Arc::new(ModelGeometry::new(hierarchy, arch.kernel)?);
        let model = GVaeModel { arch, geometry, params };
        model.check_shapes()?;
        Ok(model)
    }

    /// Same parameters on a different hierarchy; the decoder dense layer
    /// must already match the new coarsest size.
    pub(crate) fn with_geometry(&self, geometry: Arc<ModelGeometry>, params: GVaeParams) -> Result<Self> {
        let model = GVaeModel {
            arch: self.arch.clone(),
            geometry,
            params,
        };
        model.check_shapes()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<()> {
        let depth = self.arch.depth();
        if self.geometry.depth() != depth {
            return Err(Error::InvalidInput(format!(
                "architecture has {depth} levels but hierarchy depth is {}",
                self.geometry.depth()
            )));
        }
        let reference = {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            Self::init_params(&self.arch, self.geometry.sizes[depth], &mut rng)
        };
        let ok = reference.encoder.len() == self.params.encoder.len()
            && reference.decoder.len() == self.params.decoder.len()
            && reference
                .tensors()
                .iter()
                .zip(self.params.tensors())
                .all(|(a, b)| a.len() == b.len());
        if !ok {
            return Err(Error::InvalidInput("parameter shapes do not match the architecture".into()));
        }
        Ok(())
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn geometry(&self) -> &Arc<ModelGeometry> {
        &self.geometry
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    /// Finest graph size.
    pub fn field_len(&self) -> usize {
        self.geometry.sizes[0]
    }

    pub fn hierarchy_checksum(&self) -> &str {
        self.geometry.checksum()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.tensors().iter().map(|t| t.len()).sum()
    }

    fn encode_trace(&self, theta: &[f64]) -> Result<Trace> {
        let n = self.field_len();
        if theta.len() != n {
            return Err(Error::mismatch(format!("field of length {n}"), theta.len()));
        }
        let depth = self.arch.depth();
        let q = self.arch.latent_dim;
        let mut x = Array2::from_shape_vec((n, 1), theta.to_vec()).expect("shape");
        let mut enc_inputs = Vec::with_capacity(depth);
        let mut enc_acts = Vec::with_capacity(depth);
        for level in 0..depth {
            let mut a = self.params.encoder[level].forward(&self.geometry.convs[level], &x)?;
            elu_in_place(&mut a);
            let pooled = pool(&self.geometry.assignments[level], &a)?;
            enc_inputs.push(std::mem::replace(&mut x, pooled));
            enc_acts.push(a);
        }
        let h: Vec<f64> = match self.arch.readout {
            Readout::Flatten => x.iter().copied().collect(),
            Readout::Mean => x.mean_axis(ndarray::Axis(0)).expect("nonempty").to_vec(),
        };
        let head = self.params.enc_head.forward(&h);
        let mu = head[..q].to_vec();
        let mut logvar_free = Vec::with_capacity(q);
        let logvar = head[q..]
            .iter()
            .map(|&v| {
                logvar_free.push(v.abs() < LOGVAR_CLAMP);
                v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)
            })
            .collect();
        Ok(Trace {
            enc_inputs,
            enc_acts,
            pooled: x,
            h,
            logvar_free,
            latent: LatentGaussian { mu, logvar },
            z: Vec::new(),
            dec_inputs: Vec::new(),
            dec_acts: Vec::new(),
            out_input: Array2::zeros((0, 0)),
            theta_hat: Vec::new(),
        })
    }

    fn decode_into(&self, z: &[f64], trace: &mut Trace) -> Result<()> {
        let q = self.arch.latent_dim;
        if z.len() != q {
            return Err(Error::mismatch(format!("latent of length {q}"), z.len()));
        }
        let depth = self.arch.depth();
        let top = self.arch.widths[depth - 1];
        let coarse = self.geometry.sizes[depth];
        let mut y = Array2::from_shape_vec((coarse, top), self.params.dec_dense.forward(z)).expect("shape");
        trace.dec_inputs.clear();
        trace.dec_acts.clear();
        for k in 0..depth {
            let level = depth - k;
            let mut a = self.params.decoder[k].forward(&self.geometry.convs[level], &y)?;
            elu_in_place(&mut a);
            let up = unpool(&self.geometry.assignments[level - 1], &a)?;
            trace.dec_inputs.push(std::mem::replace(&mut y, up));
            trace.dec_acts.push(a);
        }
        let logits = self.params.output.forward(&self.geometry.convs[0], &y)?;
        trace.theta_hat = logits.iter().map(|&v| sigmoid(v)).collect();
        trace.out_input = y;
        trace.z = z.to_vec();
        Ok(())
    }

    /// Posterior parameters for a field.
    pub fn encode(&self, theta: &[f64]) -> Result<LatentGaussian> {
        Ok(self.encode_trace(theta)?.latent)
    }

    /// Decoder mean, every entry in `(0, 1)`.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut trace = self.empty_trace();
        self.decode_into(z, &mut trace)?;
        Ok(trace.theta_hat)
    }

    /// `decode(encode(theta).mu)`.
    pub fn reconstruct(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let lg = self.encode(theta)?;
        self.decode(&lg.mu)
    }

    fn empty_trace(&self) -> Trace {
        Trace {
            enc_inputs: Vec::new(),
            enc_acts: Vec::new(),
            pooled: Array2::zeros((0, 0)),
            h: Vec::new(),
            logvar_free: Vec::new(),
            latent: LatentGaussian {
                mu: Vec::new(),
                logvar: Vec::new(),
            },
            z: Vec::new(),
            dec_inputs: Vec::new(),
            dec_acts: Vec::new(),
            out_input: Array2::zeros((0, 0)),
            theta_hat: Vec::new(),
        }
    }

    /// Loss for one sample with a fixed reparameterization noise `eps`.
    pub fn loss(&self, theta: &[f64], eps: &[f64], kl_weight: f64) -> Result<LossParts> {
        let mut trace = self.encode_trace(theta)?;
        let z = reparameterize(&trace.latent, eps)?;
        self.decode_into(&z, &mut trace)?;
        Ok(loss_parts(theta, &trace, kl_weight))
    }

    /// Loss and gradient for one sample; gradients are added into `grads`.
    /// With `freeze_encoder_convs`, encoder conv gradients are left untouched.
    pub fn accumulate_gradient(
        &self,
        theta: &[f64],
        eps: &[f64],
        kl_weight: f64,
        freeze_encoder_convs: bool,
        grads: &mut GVaeGrads,
    ) -> Result<LossParts> {
        let mut trace = self.encode_trace(theta)?;
        let z = reparameterize(&trace.latent, eps)?;
        self.decode_into(&z, &mut trace)?;
        let parts = loss_parts(theta, &trace, kl_weight);

        let depth = self.arch.depth();
        let p = &self.params;
        let n = self.field_len();

        // output layer: d/d logit of (theta - sigmoid)^2
        let d_logits: Vec<f64> = trace
            .theta_hat
            .iter()
            .zip(theta)
            .map(|(&s, &t)| 2.0 * (s - t) * s * (1.0 - s))
            .collect();
        let d_logits = Array2::from_shape_vec((n, 1), d_logits).expect("shape");
        let mut dy = p
            .output
            .backward(&self.geometry.convs[0], &trace.out_input, &d_logits, Some(&mut grads.output), true)?
            .expect("input gradient requested");

        for k in (0..depth).rev() {
            let level = depth - k;
            let mut da = unpool_backward(&self.geometry.assignments[level - 1], &dy);
            elu_backward(&trace.dec_acts[k], &mut da);
            dy = p.decoder[k]
                .backward(
                    &self.geometry.convs[level],
                    &trace.dec_inputs[k],
                    &da,
                    Some(&mut grads.decoder[k]),
                    true,
                )?
                .expect("input gradient requested");
        }
        let dz = p
            .dec_dense
            .backward(&trace.z, dy.as_slice().expect("standard layout"), Some(&mut grads.dec_dense));

        let q = self.arch.latent_dim;
        let lg = &trace.latent;
        let mut d_head = vec![0.0; 2 * q];
        for j in 0..q {
            d_head[j] = dz[j] + kl_weight * lg.mu[j];
            if trace.logvar_free[j] {
                let sigma = (0.5 * lg.logvar[j]).exp();
                d_head[q + j] = dz[j] * eps[j] * 0.5 * sigma + kl_weight * 0.5 * (lg.logvar[j].exp() - 1.0);
            }
        }
        let dh = p.enc_head.backward(&trace.h, &d_head, Some(&mut grads.enc_head));
        if freeze_encoder_convs {
            return Ok(parts);
        }

        let (coarse, top) = trace.pooled.dim();
        let mut dx = match self.arch.readout {
            Readout::Flatten => Array2::from_shape_vec((coarse, top), dh).expect("shape"),
            Readout::Mean => Array2::from_shape_fn((coarse, top), |(_, c)| dh[c] / coarse as f64),
        };
        for level in (0..depth).rev() {
            let mut da = pool_backward(&self.geometry.assignments[level], &dx);
            elu_backward(&trace.enc_acts[level], &mut da);
            match p.encoder[level].backward(
                &self.geometry.convs[level],
                &trace.enc_inputs[level],
                &da,
                Some(&mut grads.encoder[level]),
                level > 0,
            )? {
                Some(d) => dx = d,
                None => break,
            }
        }
        Ok(parts)
    }
}

fn loss_parts(theta: &[f64], trace: &Trace, kl_weight: f64) -> LossParts {
    let recon: f64 = theta
        .iter()
        .zip(&trace.theta_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let kl = kl_divergence(&trace.latent);
    LossParts {
        recon,
        kl,
        total: recon + kl_weight * kl,
    }
}
