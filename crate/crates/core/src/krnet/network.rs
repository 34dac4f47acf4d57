//! kR-Net assembly: parameter layout, the op program, forward with an
//! optional tape, and the reverse sweep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    conv_backward_ref, conv_forward_ref, conv_param_count, cprelu, cprelu_backward, CPReLUParams, ConvGrad,
    ConvRef, SpectralPlans,
};
use super::scalar::Real;
use super::tensor::ComplexTensor;
use crate::error::{Error, Result};
use crate::signal::Domain;

/// Number of kR-blocks in the network.
pub const KR_BLOCKS: usize = 5;

/// Initial negative-side CPReLU slope.
pub const INIT_ETA: f64 = 0.25;

/// Which of the three studied networks a config describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Dual-domain network with interleaved transforms.
    Kr,
    /// Every block in the wavenumber domain, no internal transforms.
    K,
    /// Every block in the range domain, no internal transforms.
    R,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Kr => "kr-net",
            Variant::K => "k-net",
            Variant::R => "r-net",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub feat: usize,
    pub blocks_per: usize,
    pub kernel: usize,
    pub n_total: usize,
    pub domain_sequence: Vec<Domain>,
    pub use_domain_transforms: bool,
}

impl NetworkConfig {
    pub fn new(feat: usize, blocks_per: usize, kernel: usize, n_total: usize) -> Self {
        Self {
            feat,
            blocks_per,
            kernel,
            n_total,
            domain_sequence: vec![Domain::R, Domain::K, Domain::R, Domain::K, Domain::K],
            use_domain_transforms: true,
        }
    }

    /// F = 32, B = 8, K = 5.
    pub fn paper(n_total: usize) -> Self {
        Self::new(32, 8, 5, n_total)
    }

    /// F = 16, B = 2, K = 5.
    pub fn small(n_total: usize) -> Self {
        Self::new(16, 2, 5, n_total)
    }

    /// F = 2, B = 1, K = 3, N = 8.
    pub fn tiny() -> Self {
        Self::new(2, 1, 3, 8)
    }

    /// Same sizes, domain layout of `variant`.
    pub fn with_variant(mut self, variant: Variant) -> Self {
        match variant {
            Variant::Kr => {
                self.domain_sequence = vec![Domain::R, Domain::K, Domain::R, Domain::K, Domain::K];
                self.use_domain_transforms = true;
            }
            Variant::K => {
                self.domain_sequence = vec![Domain::K; KR_BLOCKS];
                self.use_domain_transforms = false;
            }
            Variant::R => {
                self.domain_sequence = vec![Domain::R; KR_BLOCKS];
                self.use_domain_transforms = false;
            }
        }
        self
    }

    pub fn variant(&self) -> Option<Variant> {
        if self.use_domain_transforms {
            return Some(Variant::Kr);
        }
        match self.domain_sequence.first() {
            Some(Domain::K) => Some(Variant::K),
            Some(Domain::R) => Some(Variant::R),
            None => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feat == 0 || self.blocks_per == 0 || self.n_total == 0 {
            return Err(Error::Config("feat, blocks_per and n_total must be positive".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel size {} must be odd", self.kernel)));
        }
        if self.domain_sequence.len() != KR_BLOCKS {
            return Err(Error::Config(format!(
                "domain sequence needs {KR_BLOCKS} entries, got {}",
                self.domain_sequence.len()
            )));
        }
        if self.use_domain_transforms {
            if self.domain_sequence[0] != Domain::R {
                return Err(Error::Config("first block must run in the R domain".into()));
            }
        } else if self.domain_sequence.iter().any(|&d| d != self.domain_sequence[0]) {
            return Err(Error::Config(
                "without domain transforms every block must share one domain".into(),
            ));
        }
        Ok(())
    }

    pub fn conv_count(&self) -> usize {
        2 + (KR_BLOCKS - 1) * (2 * self.blocks_per + 1) + 2 * self.blocks_per
    }

    pub fn param_count(&self) -> usize {
        ParamLayout::new(self).total
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSlot {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub offset: usize,
}

impl ConvSlot {
    fn len(&self, kernel: usize) -> usize {
        conv_param_count(self.in_ch, self.out_ch, kernel)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreluSlot {
    pub name: String,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Conv(usize),
    Prelu(usize),
    Transform(Domain),
    /// Stash a copy of the current activation.
    Push,
    /// Pop the stash, optionally transform it, add it to the current value.
    AddPopped(Option<Domain>),
}

/// Where every layer's parameters live in the flat vector, and the program
/// that runs them.
#[derive(Debug, Clone)]
struct ParamLayout {
    kernel: usize,
    convs: Vec<ConvSlot>,
    prelus: Vec<PreluSlot>,
    program: Vec<Op>,
    total: usize,
}

impl ParamLayout {
    fn new(cfg: &NetworkConfig) -> Self {
        let mut b = LayoutBuilder {
            kernel: cfg.kernel,
            convs: Vec::new(),
            prelus: Vec::new(),
            program: Vec::new(),
            total: 0,
        };
        let f = cfg.feat;
        let seq = &cfg.domain_sequence;
        let mut domain = Domain::R;

        if !cfg.use_domain_transforms && seq[0] != Domain::R {
            b.program.push(Op::Transform(seq[0]));
            domain = seq[0];
        }
        b.conv("input_conv".into(), 1, f);
        b.program.push(Op::Push);
        for (j, &d) in seq.iter().enumerate() {
            if j == KR_BLOCKS - 1 {
                if cfg.use_domain_transforms && domain != Domain::K {
                    b.program.push(Op::Transform(Domain::K));
                    domain = Domain::K;
                }
                let skip = if cfg.use_domain_transforms { Some(Domain::K) } else { None };
                b.program.push(Op::AddPopped(skip));
            }
            if cfg.use_domain_transforms && d != domain {
                b.program.push(Op::Transform(d));
                domain = d;
            }
            for r in 0..cfg.blocks_per {
                let prefix = format!("block{}.rb{}", j + 1, r + 1);
                b.program.push(Op::Push);
                b.conv(format!("{prefix}.conv_a"), f, f);
                b.prelu(format!("{prefix}.prelu"));
                b.conv(format!("{prefix}.conv_b"), f, f);
                b.program.push(Op::AddPopped(None));
            }
            if j == KR_BLOCKS - 1 {
                b.conv("output_conv".into(), f, 1);
            } else {
                b.conv(format!("block{}.tail_conv", j + 1), f, f);
            }
        }
        if domain != Domain::K {
            b.program.push(Op::Transform(Domain::K));
        }
        Self {
            kernel: b.kernel,
            convs: b.convs,
            prelus: b.prelus,
            program: b.program,
            total: b.total,
        }
    }

    fn conv_ref<'a, T: Real>(&self, slot: usize, params: &'a [T]) -> ConvRef<'a, T> {
        let s = &self.convs[slot];
        ConvRef::from_flat(s.in_ch, s.out_ch, self.kernel, &params[s.offset..s.offset + s.len(self.kernel)])
    }

    fn prelu_params<T: Real>(&self, slot: usize, params: &[T]) -> CPReLUParams<T> {
        let o = self.prelus[slot].offset;
        CPReLUParams {
            eta_r: params[o],
            eta_i: params[o + 1],
        }
    }

    fn saved_count(&self) -> usize {
        self.program
            .iter()
            .filter(|op| matches!(op, Op::Conv(_) | Op::Prelu(_)))
            .count()
    }
}

struct LayoutBuilder {
    kernel: usize,
    convs: Vec<ConvSlot>,
    prelus: Vec<PreluSlot>,
    program: Vec<Op>,
    total: usize,
}

impl LayoutBuilder {
    fn conv(&mut self, name: String, in_ch: usize, out_ch: usize) {
        let slot = ConvSlot {
            name,
            in_ch,
            out_ch,
            offset: self.total,
        };
        self.total += slot.len(self.kernel);
        self.program.push(Op::Conv(self.convs.len()));
        self.convs.push(slot);
    }

    fn prelu(&mut self, name: String) {
        self.prelus.push(PreluSlot {
            name,
            offset: self.total,
        });
        self.total += 2;
        self.program.push(Op::Prelu(self.prelus.len() - 1));
    }
}

/// Layer inputs recorded by [`KrNet::forward_tape`] for the reverse sweep.
#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    saved: Vec<ComplexTensor<T>>,
}

impl<T> Tape<T> {
    pub fn is_empty(&self) -> bool {
        self.saved.is_empty()
    }
}

/// The network with its flat parameter vector.
#[derive(Debug, Clone)]
pub struct KrNet<T: Real> {
    config: NetworkConfig,
    layout: ParamLayout,
    params: Vec<T>,
    plans: SpectralPlans<T>,
}

impl<T: Real> KrNet<T> {
    /// Fresh network: kernels uniform in `±1/sqrt(in_ch K)` per component,
    /// zero biases, CPReLU slopes at [`INIT_ETA`].
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut params = vec![T::zero(); layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = layout.kernel;
        for s in &layout.convs {
            let bound = 1.0 / ((s.in_ch * k) as f64).sqrt();
            let w = 2 * s.in_ch * s.out_ch * k;
            for v in &mut params[s.offset..s.offset + w] {
                *v = T::lit(rng.gen_range(-bound..bound));
            }
        }
        for p in &layout.prelus {
            params[p.offset] = T::lit(INIT_ETA);
            params[p.offset + 1] = T::lit(INIT_ETA);
        }
        Ok(Self {
            plans: SpectralPlans::new(config.n_total),
            config,
            layout,
            params,
        })
    }

    pub fn from_params(config: NetworkConfig, params: Vec<T>) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Shape(format!(
                "config needs {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Self {
            plans: SpectralPlans::new(config.n_total),
            config,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn conv_count(&self) -> usize {
        self.layout.convs.len()
    }

    pub fn prelu_count(&self) -> usize {
        self.layout.prelus.len()
    }

    pub fn conv_slots(&self) -> &[ConvSlot] {
        &self.layout.convs
    }

    pub fn prelu_slots(&self) -> &[PreluSlot] {
        &self.layout.prelus
    }

    /// Name of the layer that owns flat parameter `index`.
    pub fn layer_of(&self, index: usize) -> &str {
        let k = self.layout.kernel;
        for s in &self.layout.convs {
            if (s.offset..s.offset + s.len(k)).contains(&index) {
                return &s.name;
            }
        }
        for p in &self.layout.prelus {
            if index == p.offset || index == p.offset + 1 {
                return &p.name;
            }
        }
        "unknown"
    }

    pub fn cast<U: Real>(&self) -> KrNet<U> {
        KrNet {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|&v| U::lit(v.as_f64())).collect(),
            plans: SpectralPlans::new(self.config.n_total),
        }
    }

    fn check_input(&self, x: &ComplexTensor<T>) -> Result<()> {
        if x.channels() != 1 || x.len() != self.config.n_total {
            return Err(Error::Shape(format!(
                "network expects 1 x batch x {}, got {}x{}x{}",
                self.config.n_total,
                x.channels(),
                x.batch(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Maps a normalized R-domain input (1 channel) to a k-domain output.
    pub fn forward(&self, x: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
        self.run(x, None)
    }

    pub fn forward_tape(&self, x: &ComplexTensor<T>) -> Result<(ComplexTensor<T>, Tape<T>)> {
        let mut tape = Tape {
            saved: Vec::with_capacity(self.layout.saved_count()),
        };
        let y = self.run(x, Some(&mut tape))?;
        Ok((y, tape))
    }

    fn run(&self, x: &ComplexTensor<T>, mut tape: Option<&mut Tape<T>>) -> Result<ComplexTensor<T>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        let mut stash: Vec<ComplexTensor<T>> = Vec::new();
        for &op in &self.layout.program {
            match op {
                Op::Conv(s) => {
                    let y = conv_forward_ref(&cur, self.layout.conv_ref(s, &self.params))?;
                    let input = std::mem::replace(&mut cur, y);
                    if let Some(t) = tape.as_deref_mut() {
                        t.saved.push(input);
                    }
                }
                Op::Prelu(s) => {
                    let y = cprelu(&cur, self.layout.prelu_params(s, &self.params));
                    let input = std::mem::replace(&mut cur, y);
                    if let Some(t) = tape.as_deref_mut() {
                        t.saved.push(input);
                    }
                }
                Op::Transform(d) => self.plans.transform(&mut cur, d),
                Op::Push => stash.push(cur.clone()),
                Op::AddPopped(d) => {
                    let mut s = stash.pop().expect("program pushes before every add");
                    if let Some(d) = d {
                        self.plans.transform(&mut s, d);
                    }
                    cur.add_assign(&s);
                }
            }
        }
        Ok(cur)
    }

    /// Reverse sweep. Parameter gradients are added into `grad` (length
    /// [`Self::param_count`]); the input cotangent is returned.
    pub fn backward(&self, tape: Tape<T>, gy: &ComplexTensor<T>, grad: &mut [T]) -> Result<ComplexTensor<T>> {
        if tape.is_empty() {
            return Err(Error::EmptyTape);
        }
        if tape.saved.len() != self.layout.saved_count() {
            return Err(Error::Shape("tape was recorded by a different network".into()));
        }
        if grad.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "gradient buffer has {} entries, network has {}",
                grad.len(),
                self.params.len()
            )));
        }
        let last = tape.saved.last().expect("non-empty");
        if gy.shape() != (1, last.batch(), self.config.n_total) {
            return Err(Error::Shape("output cotangent does not match the recorded forward".into()));
        }
        let mut saved = tape.saved;
        let mut g = gy.clone();
        let mut gstack: Vec<ComplexTensor<T>> = Vec::new();
        let k = self.layout.kernel;
        for &op in self.layout.program.iter().rev() {
            match op {
                Op::Conv(s) => {
                    let x = saved.pop().expect("tape length checked");
                    let slot = &self.layout.convs[s];
                    let range = slot.offset..slot.offset + slot.len(k);
                    let gview = ConvGrad::from_flat(slot.in_ch, slot.out_ch, k, &mut grad[range]);
                    g = conv_backward_ref(&x, self.layout.conv_ref(s, &self.params), &g, gview);
                }
                Op::Prelu(s) => {
                    let x = saved.pop().expect("tape length checked");
                    let (gx, dr, di) = cprelu_backward(&x, self.layout.prelu_params(s, &self.params), &g);
                    let o = self.layout.prelus[s].offset;
                    grad[o] = grad[o] + dr;
                    grad[o + 1] = grad[o + 1] + di;
                    g = gx;
                }
                Op::Transform(d) => self.plans.transform_adjoint(&mut g, d),
                Op::AddPopped(d) => {
                    let mut gs = g.clone();
                    if let Some(d) = d {
                        self.plans.transform_adjoint(&mut gs, d);
                    }
                    gstack.push(gs);
                }
                Op::Push => {
                    let gs = gstack.pop().expect("every push has a matching add");
                    g.add_assign(&gs);
                }
            }
        }
        Ok(g)
    }
}

/// L1 loss `sum |d_re| + |d_im|` averaged over the batch.
pub fn loss_l1<T: Real>(pred: &ComplexTensor<T>, label: &ComplexTensor<T>) -> Result<T> {
    check_same(pred, label)?;
    let total: T = pred.raw().iter().zip(label.raw()).map(|(&a, &b)| (a - b).abs()).sum();
    Ok(total / T::lit(pred.batch().max(1) as f64))
}

/// Loss together with its gradient with respect to `pred`. The subgradient
/// at a zero difference is 0.
pub fn loss_l1_grad<T: Real>(pred: &ComplexTensor<T>, label: &ComplexTensor<T>) -> Result<(T, ComplexTensor<T>)> {
    let loss = loss_l1(pred, label)?;
    let inv = T::one() / T::lit(pred.batch().max(1) as f64);
    let mut g = ComplexTensor::zeros(pred.channels(), pred.batch(), pred.len());
    for ((o, &a), &b) in g.raw_mut().iter_mut().zip(pred.raw()).zip(label.raw()) {
        let d = a - b;
        *o = if d > T::zero() {
            inv
        } else if d < T::zero() {
            -inv
        } else {
            T::zero()
        };
    }
    Ok((loss, g))
}

fn check_same<T: Real>(a: &ComplexTensor<T>, b: &ComplexTensor<T>) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "loss operands differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}
