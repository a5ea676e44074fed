//! Semantically-conditioned recurrent generator.
//!
//! A single-layer LSTM whose cell state additionally receives a projection
//! of a decaying dialog-act memory `d_k = r_k ⊙ d_{k-1}`, where `r_k` is a
//! sigmoid reading gate over the current input and previous hidden state.
//! All parameters live in one flat `theta` vector described by a [`Layout`].

mod cell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cell::{CellState, StepCache, Trace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub embed_size: usize,
    pub vocab_size: usize,
    pub da_dim: usize,
    /// Applied to the input embedding and the pre-softmax hidden output
    /// during training only.
    #[serde(default)]
    pub dropout_rate: f64,
}

impl ModelConfig {
    pub fn new(hidden_size: usize, embed_size: usize, vocab_size: usize, da_dim: usize) -> Self {
        ModelConfig {
            hidden_size,
            embed_size,
            vocab_size,
            da_dim,
            dropout_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.embed_size == 0 || self.vocab_size == 0 || self.da_dim == 0
        {
            return Err(Error::Config("model dimensions must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Named segments of the flat parameter vector, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub segments: Vec<Segment>,
}

pub const SEGMENT_NAMES: [&str; 10] = [
    "embedding",
    "w_x",
    "w_h",
    "b",
    "w_rx",
    "w_rh",
    "b_r",
    "w_d",
    "w_out",
    "b_out",
];

impl Layout {
    pub fn for_config(c: &ModelConfig) -> Layout {
        let (h, e, v, d) = (c.hidden_size, c.embed_size, c.vocab_size, c.da_dim);
        let shapes = [
            (v, e),     // embedding
            (4 * h, e), // input -> gates (i, f, o, g)
            (4 * h, h), // hidden -> gates
            (4 * h, 1), // gate bias
            (d, e),     // input -> reading gate
            (d, h),     // hidden -> reading gate
            (d, 1),     // reading gate bias
            (h, d),     // DA memory -> cell
            (v, h),     // output projection
            (v, 1),     // output bias
        ];
        let mut offset = 0;
        let segments = SEGMENT_NAMES
            .iter()
            .zip(shapes)
            .map(|(name, (rows, cols))| {
                let s = Segment {
                    name: name.to_string(),
                    rows,
                    cols,
                    offset,
                };
                offset += rows * cols;
                s
            })
            .collect();
        Layout { segments }
    }

    pub fn total(&self) -> usize {
        self.segments
            .last()
            .map(|s| s.offset + s.len())
            .unwrap_or(0)
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    fn offset(&self, i: usize) -> usize {
        self.segments[i].offset
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta: Vec<f64>,
    pub layout: Layout,
}

impl ModelParams {
    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout.segment(name).map(|s| &self.theta[s.range()])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

/// Offsets of every segment, resolved once per forward/backward call.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Offsets {
    pub emb: usize,
    pub w_x: usize,
    pub w_h: usize,
    pub b: usize,
    pub w_rx: usize,
    pub w_rh: usize,
    pub b_r: usize,
    pub w_d: usize,
    pub w_out: usize,
    pub b_out: usize,
}

impl Model {
    /// Uniform weights in `[-0.1, 0.1]`, zero biases, forget-gate bias 1.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let layout = Layout::for_config(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = vec![0.0; layout.total()];
        for seg in &layout.segments {
            let is_bias = seg.cols == 1 && seg.name.starts_with('b');
            if is_bias {
                continue;
            }
            for w in &mut theta[seg.range()] {
                *w = rng.gen_range(-0.1..=0.1);
            }
        }
        let h = config.hidden_size;
        let b = layout.segment("b").unwrap().offset;
        for w in &mut theta[b + h..b + 2 * h] {
            *w = 1.0;
        }
        Ok(Model {
            config,
            params: ModelParams { theta, layout },
        })
    }

    pub fn from_theta(config: ModelConfig, theta: Vec<f64>) -> Result<Model> {
        config.validate()?;
        let layout = Layout::for_config(&config);
        if theta.len() != layout.total() {
            return Err(Error::Shape(format!(
                "theta has {} entries, layout needs {}",
                theta.len(),
                layout.total()
            )));
        }
        Ok(Model {
            config,
            params: ModelParams { theta, layout },
        })
    }

    pub fn theta(&self) -> &[f64] {
        &self.params.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.params.theta
    }

    pub fn num_params(&self) -> usize {
        self.params.theta.len()
    }

    pub fn layout(&self) -> &Layout {
        &self.params.layout
    }

    pub(crate) fn offsets(&self) -> Offsets {
        let l = &self.params.layout;
        Offsets {
            emb: l.offset(0),
            w_x: l.offset(1),
            w_h: l.offset(2),
            b: l.offset(3),
            w_rx: l.offset(4),
            w_rh: l.offset(5),
            b_r: l.offset(6),
            w_d: l.offset(7),
            w_out: l.offset(8),
            b_out: l.offset(9),
        }
    }

    /// Config and flat parameters as JSON; floats round-trip exactly.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Blob<'a> {
            config: &'a ModelConfig,
            theta: &'a [f64],
        }
        serde_json::to_string(&Blob {
            config: &self.config,
            theta: &self.params.theta,
        })
        .expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Model> {
        #[derive(Deserialize)]
        struct Blob {
            config: ModelConfig,
            theta: Vec<f64>,
        }
        let blob: Blob = serde_json::from_str(s)?;
        Model::from_theta(blob.config, blob.theta)
    }
}

/// Free-function form of [`Model::init`].
pub fn init_model(config: ModelConfig, seed: u64) -> Result<Model> {
    Model::init(config, seed)
}
