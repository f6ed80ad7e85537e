use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::flow::{DEFAULT_FLOW_STEPS, DEFAULT_HIDDEN};
use crate::lut::{DEFAULT_LATTICE_SIZE, DEFAULT_NUM_LUTS};
use crate::weight_net::{DEFAULT_HEAD_HIDDEN, DEFAULT_WIDTHS, MIN_INPUT_SIDE};

/// Height × width in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Resolution {
    pub height: usize,
    pub width: usize,
}

impl Resolution {
    pub const fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }

    pub fn pixels(self) -> usize {
        self.height * self.width
    }
}

impl fmt::Display for Resolution {
    /// Written `WIDTHxHEIGHT`, as on the command line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl FromStr for Resolution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected WIDTHxHEIGHT, got `{s}`"))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("invalid dimension `{t}` in `{s}`"))
        };
        Ok(Self::new(parse(h)?, parse(w)?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub num_luts: usize,
    pub lattice_size: usize,
    pub flow_steps: usize,
    pub widths: [usize; 3],
    pub head_hidden: usize,
    pub flow_hidden: usize,
    /// Input size seen by the weight generator.
    pub analysis_resolution: Resolution,
    /// Resolution the refiner runs at; `None` means the image's own size.
    pub processing_resolution: Option<Resolution>,
    pub perceptual_weight: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Seed the bank with the analytic priors instead of identity tables.
    pub specialized_init: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            num_luts: DEFAULT_NUM_LUTS,
            lattice_size: DEFAULT_LATTICE_SIZE,
            flow_steps: DEFAULT_FLOW_STEPS,
            widths: DEFAULT_WIDTHS,
            head_hidden: DEFAULT_HEAD_HIDDEN,
            flow_hidden: DEFAULT_HIDDEN,
            analysis_resolution: Resolution::new(256, 256),
            processing_resolution: None,
            perceptual_weight: 0.1,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            epochs: 1,
            batch_size: 8,
            seed: 0,
            specialized_init: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Full-width networks.
    Full,
    /// Narrow networks and a 32×32 analysis input for CPU-scale experiments.
    Toy,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(Preset::Full),
            "toy" => Ok(Preset::Toy),
            _ => Err(format!("unknown preset `{s}` (expected full or toy)")),
        }
    }
}

impl PipelineConfig {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Full => Self::default(),
            Preset::Toy => Self::toy(),
        }
    }

    /// Same bank, step count and optimizer as the default, with
    /// 8/16/32-channel blocks, a 16-unit head and a 16-channel refiner.
    pub fn toy() -> Self {
        Self {
            widths: [8, 16, 32],
            head_hidden: 16,
            flow_hidden: 16,
            analysis_resolution: Resolution::new(32, 32),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Usage(msg));
        if self.num_luts == 0 {
            return bad("num_luts must be at least 1".into());
        }
        if self.lattice_size < 2 {
            return bad(format!("lattice_size must be at least 2, got {}", self.lattice_size));
        }
        if self.flow_steps == 0 {
            return bad("flow steps K must be at least 1".into());
        }
        if self.widths.contains(&0) || self.head_hidden == 0 || self.flow_hidden == 0 {
            return bad("layer widths must be positive".into());
        }
        let a = self.analysis_resolution;
        if a.height < MIN_INPUT_SIDE || a.width < MIN_INPUT_SIDE {
            return bad(format!("analysis_resolution must be at least {MIN_INPUT_SIDE}x{MIN_INPUT_SIDE}, got {a}"));
        }
        if let Some(p) = self.processing_resolution {
            if p.height == 0 || p.width == 0 {
                return bad(format!("processing_resolution must be positive, got {p}"));
            }
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("lr must be finite and non-negative, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if !(self.perceptual_weight.is_finite() && self.perceptual_weight >= 0.0) {
            return bad(format!("perceptual_weight must be non-negative, got {}", self.perceptual_weight));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        Ok(())
    }

    /// Plain `key = value` lines, one per field. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let [w1, w2, w3] = self.widths;
        let processing = self
            .processing_resolution
            .map_or_else(|| "native".to_string(), |r| r.to_string());
        let _ = writeln!(s, "num_luts = {}", self.num_luts);
        let _ = writeln!(s, "lattice_size = {}", self.lattice_size);
        let _ = writeln!(s, "flow_steps = {}", self.flow_steps);
        let _ = writeln!(s, "widths = {w1},{w2},{w3}");
        let _ = writeln!(s, "head_hidden = {}", self.head_hidden);
        let _ = writeln!(s, "flow_hidden = {}", self.flow_hidden);
        let _ = writeln!(s, "analysis_resolution = {}", self.analysis_resolution);
        let _ = writeln!(s, "processing_resolution = {processing}");
        let _ = writeln!(s, "perceptual_weight = {:?}", self.perceptual_weight);
        let _ = writeln!(s, "lr = {:?}", self.lr);
        let _ = writeln!(s, "beta1 = {:?}", self.beta1);
        let _ = writeln!(s, "beta2 = {:?}", self.beta2);
        let _ = writeln!(s, "eps = {:?}", self.eps);
        let _ = writeln!(s, "weight_decay = {:?}", self.weight_decay);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "specialized_init = {}", self.specialized_init);
        s
    }

    /// Overrides fields named in `text`; unknown keys are errors. Blank
    /// lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|msg| Error::Config { line: line_no, msg })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("invalid value `{v}` for `{key}`"))
        }
        match key {
            "num_luts" => self.num_luts = num(key, value)?,
            "lattice_size" => self.lattice_size = num(key, value)?,
            "flow_steps" => self.flow_steps = num(key, value)?,
            "widths" => {
                let parts: Vec<usize> = value
                    .split(',')
                    .map(|t| num(key, t.trim()))
                    .collect::<std::result::Result<_, _>>()?;
                self.widths = parts
                    .try_into()
                    .map_err(|_| format!("`widths` needs three values, got `{value}`"))?;
            }
            "head_hidden" => self.head_hidden = num(key, value)?,
            "flow_hidden" => self.flow_hidden = num(key, value)?,
            "analysis_resolution" => self.analysis_resolution = value.parse()?,
            "processing_resolution" => {
                self.processing_resolution = match value {
                    "native" => None,
                    _ => Some(value.parse()?),
                }
            }
            "perceptual_weight" => self.perceptual_weight = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "eps" => self.eps = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "specialized_init" => self.specialized_init = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!((c.num_luts, c.lattice_size, c.flow_steps), (8, 33, 4));
        assert_eq!(c.lr, 1e-4);
        assert_eq!((c.beta1, c.beta2), (0.9, 0.999));
        assert_eq!(c.batch_size, 8);
        assert_eq!(c.perceptual_weight, 0.1);
        c.validate().unwrap();
    }

    #[test]
    fn text_roundtrip() {
        let mut c = PipelineConfig::toy();
        c.processing_resolution = Some(Resolution::new(120, 200));
        c.lr = 3.3e-5;
        c.seed = 99;
        c.specialized_init = false;
        assert_eq!(PipelineConfig::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn unknown_key_names_line() {
        let err = PipelineConfig::from_text("# x\nflow_steps = 2\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }), "{err}");
    }

    #[test]
    fn resolution_parses_width_first() {
        let r: Resolution = "1920x1080".parse().unwrap();
        assert_eq!((r.width, r.height), (1920, 1080));
        assert_eq!(r.to_string(), "1920x1080");
        assert!("1920".parse::<Resolution>().is_err());
    }

    #[test]
    fn validation() {
        let mut c = PipelineConfig {
            flow_steps: 0,
            ..PipelineConfig::default()
        };
        assert!(c.validate().is_err());
        c.flow_steps = 1;
        c.lr = -1.0;
        assert!(c.validate().is_err());
        c.lr = 0.0;
        c.validate().unwrap();
    }
}
