//! Analytic color transforms used to seed the LUT bank.

use std::f64::consts::PI;

/// The eight named starting transforms, in bank order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prior {
    Identity,
    Gamma,
    Warm,
    Cool,
    Saturation,
    Brightness,
    SCurve,
    Inversion,
}

impl Prior {
    pub const ALL: [Prior; 8] = [
        Prior::Identity,
        Prior::Gamma,
        Prior::Warm,
        Prior::Cool,
        Prior::Saturation,
        Prior::Brightness,
        Prior::SCurve,
        Prior::Inversion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Prior::Identity => "identity",
            Prior::Gamma => "gamma",
            Prior::Warm => "warm",
            Prior::Cool => "cool",
            Prior::Saturation => "saturation",
            Prior::Brightness => "brightness",
            Prior::SCurve => "s-curve",
            Prior::Inversion => "inversion",
        }
    }

    /// Evaluates the transform at a point of the unit RGB cube.
    pub fn eval(self, rgb: [f64; 3], params: &PriorParams) -> [f64; 3] {
        let [r, g, b] = rgb;
        let c = |v: f64| v.clamp(0.0, 1.0);
        match self {
            Prior::Identity => rgb,
            Prior::Gamma => rgb.map(|v| v.powf(params.gamma)),
            Prior::Warm => [c(r + params.temperature_shift), g, c(b - params.temperature_shift)],
            Prior::Cool => [c(r - params.temperature_shift), g, c(b + params.temperature_shift)],
            Prior::Saturation => {
                let (h, s, v) = rgb_to_hsv(rgb);
                hsv_to_rgb(h, (s * params.saturation_gain).min(1.0), v).map(c)
            }
            Prior::Brightness => rgb.map(|v| c(v + params.brightness_shift)),
            Prior::SCurve => rgb.map(|v| 0.5 - 0.5 * (PI * v).cos()),
            Prior::Inversion => rgb.map(|v| 1.0 - v),
        }
    }
}

/// Constants of the prior transforms.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorParams {
    pub gamma: f64,
    /// Added to red and removed from blue for the warm prior (reversed for cool).
    pub temperature_shift: f64,
    pub saturation_gain: f64,
    pub brightness_shift: f64,
}

impl Default for PriorParams {
    fn default() -> Self {
        Self {
            gamma: 0.75,
            temperature_shift: 0.1,
            saturation_gain: 1.3,
            brightness_shift: 0.1,
        }
    }
}

/// Hexcone RGB → HSV with hue in `[0, 6)`. When several channels share the
/// maximum, red wins over green and green over blue.
pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    (h, s, max)
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let chroma = v * s;
    let x = chroma * (1.0 - ((h % 2.0) - 1.0).abs());
    let m = v - chroma;
    let (r, g, b) = match h as u32 {
        0 => (chroma, x, 0.0),
        1 => (x, chroma, 0.0),
        2 => (0.0, chroma, x),
        3 => (0.0, x, chroma),
        4 => (x, 0.0, chroma),
        _ => (chroma, 0.0, x),
    };
    [r + m, g + m, b + m]
}
