//! Backdoor trigger construction.
//!
//! The primary trigger perturbs an s×s block of DCT coefficients in a single
//! color channel and converts back to pixel space — nearly invisible, yet
//! highly distinguishable across attackers that pick different channels or
//! blocks. A transparency-patch trigger (white corner patches blended at a
//! fixed opacity) is included as a classic baseline.

mod dct;

pub use dct::{dct2, idct2};

use thiserror::Error;

use crate::image::ImageTensor;

#[derive(Debug, Error, PartialEq)]
pub enum TriggerError {
    #[error("frequency block [{u0},{v0}]..+{size} exceeds the {h}x{w} coefficient matrix")]
    BlockOutOfRange { u0: usize, v0: usize, size: usize, h: usize, w: usize },
    #[error("patch of size {size} at ({y},{x}) exceeds the {h}x{w} image")]
    PatchOutOfRange { size: usize, y: usize, x: usize, h: usize, w: usize },
    #[error("transparency {0} outside [0, 1]")]
    BadTransparency(f64),
    #[error("image must have 3 channels, got {0}")]
    NotRgb(usize),
    #[error("target label {label} out of range for {classes} classes")]
    BadTarget { label: usize, classes: usize },
    #[error("attackers {a} and {b} share an identical trigger")]
    DuplicateTrigger { a: usize, b: usize },
}

/// Color channel selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Channel {
    R = 0,
    G = 1,
    B = 2,
}

impl Channel {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "R" | "r" | "0" => Some(Channel::R),
            "G" | "g" | "1" => Some(Channel::G),
            "B" | "b" | "2" => Some(Channel::B),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::R => "R",
            Channel::G => "G",
            Channel::B => "B",
        }
    }
}

/// One attacker's frequency-domain backdoor: which channel to transform,
/// where the perturbed block sits, how strong it is, and which label the
/// backdoor forces.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerSpec {
    pub channel: Channel,
    pub block_u: usize,
    pub block_v: usize,
    pub block_size: usize,
    pub magnitude: f64,
    pub target_label: usize,
}

impl TriggerSpec {
    pub fn validate(&self, h: usize, w: usize, classes: usize) -> Result<(), TriggerError> {
        if self.block_size == 0
            || self.block_u + self.block_size > h
            || self.block_v + self.block_size > w
        {
            return Err(TriggerError::BlockOutOfRange {
                u0: self.block_u,
                v0: self.block_v,
                size: self.block_size,
                h,
                w,
            });
        }
        if self.target_label >= classes {
            return Err(TriggerError::BadTarget { label: self.target_label, classes });
        }
        Ok(())
    }
}

/// Baseline patch trigger: white squares at the given top-left corners,
/// blended into all channels with opacity `transparency`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTriggerSpec {
    pub patch_size: usize,
    pub corners: Vec<(usize, usize)>,
    pub transparency: f64,
    pub target_label: usize,
}

impl PatchTriggerSpec {
    /// The classic four-corner layout for an `h`×`w` image.
    pub fn four_corners(
        patch_size: usize,
        transparency: f64,
        target_label: usize,
        h: usize,
        w: usize,
    ) -> Self {
        let y1 = h - patch_size;
        let x1 = w - patch_size;
        Self {
            patch_size,
            corners: vec![(0, 0), (0, x1), (y1, 0), (y1, x1)],
            transparency,
            target_label,
        }
    }

    pub fn validate(&self, h: usize, w: usize, classes: usize) -> Result<(), TriggerError> {
        if !(0.0..=1.0).contains(&self.transparency) {
            return Err(TriggerError::BadTransparency(self.transparency));
        }
        for &(y, x) in &self.corners {
            if y + self.patch_size > h || x + self.patch_size > w {
                return Err(TriggerError::PatchOutOfRange {
                    size: self.patch_size,
                    y,
                    x,
                    h,
                    w,
                });
            }
        }
        if self.target_label >= classes {
            return Err(TriggerError::BadTarget { label: self.target_label, classes });
        }
        Ok(())
    }
}

/// Either trigger kind, as carried by an attacker.
#[derive(Debug, Clone, PartialEq)]
pub enum Trigger {
    Freq(TriggerSpec),
    Patch(PatchTriggerSpec),
}

impl Trigger {
    pub fn target_label(&self) -> usize {
        match self {
            Trigger::Freq(t) => t.target_label,
            Trigger::Patch(t) => t.target_label,
        }
    }

    pub fn validate(&self, h: usize, w: usize, classes: usize) -> Result<(), TriggerError> {
        match self {
            Trigger::Freq(t) => t.validate(h, w, classes),
            Trigger::Patch(t) => t.validate(h, w, classes),
        }
    }

    /// Applies the trigger and returns the poisoned image plus its target
    /// label. `clip` clamps pixels back into `[0, 255]`; training and
    /// inference use clipped images, stealth metrics use unclipped ones.
    pub fn apply(&self, img: &ImageTensor, clip: bool) -> Result<(ImageTensor, usize), TriggerError> {
        match self {
            Trigger::Freq(t) => apply_freq_trigger(img, t, clip),
            Trigger::Patch(t) => Ok(apply_patch_trigger(img, t)),
        }
    }
}

/// Checks that all attacker triggers in an experiment are pairwise distinct.
/// Frequency triggers must differ in `(channel, block origin)`; any two
/// identical triggers are rejected.
pub fn validate_distinct(triggers: &[Trigger]) -> Result<(), TriggerError> {
    for a in 0..triggers.len() {
        for b in a + 1..triggers.len() {
            let clash = match (&triggers[a], &triggers[b]) {
                (Trigger::Freq(x), Trigger::Freq(y)) => {
                    x.channel == y.channel && x.block_u == y.block_u && x.block_v == y.block_v
                }
                (Trigger::Patch(x), Trigger::Patch(y)) => {
                    x.patch_size == y.patch_size
                        && x.corners == y.corners
                        && x.transparency == y.transparency
                }
                _ => false,
            };
            if clash {
                return Err(TriggerError::DuplicateTrigger { a, b });
            }
        }
    }
    Ok(())
}

/// Adds `spec.magnitude` to each coefficient of the selected block in the
/// DCT of the selected channel, then inverts. Other channels are untouched.
pub fn apply_freq_trigger(
    img: &ImageTensor,
    spec: &TriggerSpec,
    clip: bool,
) -> Result<(ImageTensor, usize), TriggerError> {
    let (c, h, w) = img.shape();
    if c != 3 {
        return Err(TriggerError::NotRgb(c));
    }
    spec.validate(h, w, usize::MAX)?;
    let ch = spec.channel.index();
    let mut freq = dct2(img.plane(ch), h, w);
    for u in spec.block_u..spec.block_u + spec.block_size {
        for v in spec.block_v..spec.block_v + spec.block_size {
            freq[u * w + v] += spec.magnitude;
        }
    }
    let spatial = idct2(&freq, h, w);
    let mut out = img.clone();
    out.plane_mut(ch).copy_from_slice(&spatial);
    if clip {
        out.clip_to_pixel_range();
    }
    Ok((out, spec.target_label))
}

/// Blends white into every patch region: `p <- (1-t)*p + t*255` on all
/// channels.
pub fn apply_patch_trigger(img: &ImageTensor, spec: &PatchTriggerSpec) -> (ImageTensor, usize) {
    let (c, _, _) = img.shape();
    let t = spec.transparency;
    let mut out = img.clone();
    for ch in 0..c {
        for &(y0, x0) in &spec.corners {
            for y in y0..y0 + spec.patch_size {
                for x in x0..x0 + spec.patch_size {
                    let v = out.get(ch, y, x);
                    out.set(ch, y, x, (1.0 - t) * v + t * 255.0);
                }
            }
        }
    }
    (out, spec.target_label)
}
