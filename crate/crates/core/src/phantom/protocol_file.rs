//! `key = value` text form of [`PhantomProtocol`].
//!
//! ```text
//! fps = 15
//! width = 480
//! height = 360
//! seed = 7
//! # duration_s  bpm  duty  amplitude_mm  lighting
//! segment = 150 60 0.1 2 day
//! ```

use super::{BreathSegment, IlluminationModulation, PhantomProtocol};
use crate::error::{Error, Result};
use crate::textio::{fmt_f64, parse_entries};

impl PhantomProtocol {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut p = PhantomProtocol::default();
        for e in parse_entries(text)? {
            match e.key.as_str() {
                "fps" => p.fps = e.parse()?,
                "width" => p.frame_width = e.parse()?,
                "height" => p.frame_height = e.parse()?,
                "mm_per_pixel" => p.mm_per_pixel = e.parse()?,
                "blanket_gain" => p.blanket_gain = e.parse()?,
                "noise_sigma_day" => p.noise_sigma_day = e.parse()?,
                "noise_sigma_night" => p.noise_sigma_night = e.parse()?,
                "seed" => p.pattern_seed = e.parse()?,
                "horizontal_ratio" => p.horizontal_ratio = e.parse()?,
                "illumination" => {
                    let v: Vec<f64> = e.parse_list()?;
                    let [amplitude, frequency_hz] = v[..] else {
                        return Err(e.error("expected `amplitude frequency_hz`"));
                    };
                    p.illumination = Some(IlluminationModulation {
                        amplitude,
                        frequency_hz,
                    });
                }
                "segment" => {
                    let fields: Vec<&str> = e.value.split_whitespace().collect();
                    let [d, f, duty, a, light] = fields[..] else {
                        return Err(e.error("expected `duration_s bpm duty amplitude_mm day|night`"));
                    };
                    let num =
                        |s: &str| -> Result<f64> { s.parse().map_err(|_| e.error(format!("cannot parse `{s}`"))) };
                    let lighting = light.parse().map_err(|err: Error| e.error(err.to_string()))?;
                    let seg = BreathSegment::new(num(d)?, num(f)?, num(duty)?, num(a)?, lighting)
                        .map_err(|err| e.error(err.to_string()))?;
                    p.segments.push(seg);
                }
                _ => return Err(e.error("unknown key")),
            }
        }
        if p.segments.is_empty() {
            return Err(Error::Parse {
                line: text.lines().count().max(1),
                message: "protocol has no `segment` entries".into(),
            });
        }
        p.validate().map_err(|err| Error::Parse {
            line: text.lines().count().max(1),
            message: err.to_string(),
        })?;
        Ok(p)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("fps = {}\n", fmt_f64(self.fps)));
        s.push_str(&format!("width = {}\n", self.frame_width));
        s.push_str(&format!("height = {}\n", self.frame_height));
        s.push_str(&format!("mm_per_pixel = {}\n", fmt_f64(self.mm_per_pixel)));
        s.push_str(&format!("blanket_gain = {}\n", fmt_f64(self.blanket_gain)));
        s.push_str(&format!("noise_sigma_day = {}\n", fmt_f64(self.noise_sigma_day)));
        s.push_str(&format!("noise_sigma_night = {}\n", fmt_f64(self.noise_sigma_night)));
        s.push_str(&format!("seed = {}\n", self.pattern_seed));
        if self.horizontal_ratio != 0.0 {
            s.push_str(&format!("horizontal_ratio = {}\n", fmt_f64(self.horizontal_ratio)));
        }
        if let Some(m) = self.illumination {
            s.push_str(&format!(
                "illumination = {} {}\n",
                fmt_f64(m.amplitude),
                fmt_f64(m.frequency_hz)
            ));
        }
        s.push_str("# duration_s bpm duty amplitude_mm lighting\n");
        for seg in &self.segments {
            s.push_str(&format!(
                "segment = {} {} {} {} {}\n",
                fmt_f64(seg.duration),
                fmt_f64(seg.frequency_bpm),
                fmt_f64(seg.duty_cycle),
                fmt_f64(seg.amplitude_mm),
                seg.lighting
            ));
        }
        s
    }
}
