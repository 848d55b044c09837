//! Normal-approximation power and minimum detectable effect.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PowerError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn poly(coef: &[f64; 8], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

// Published AS241 coefficients, kept digit for digit.
#[allow(clippy::excessive_precision)]
const A: [f64; 8] = [
    3.387_132_872_796_366_5,
    133.141_667_891_784_38,
    1_971.590_950_306_551_4,
    13_731.693_765_509_461,
    45_921.953_931_549_87,
    67_265.770_927_008_7,
    33_430.575_583_588_13,
    2_509.080_928_730_122_7,
];
const B: [f64; 8] = [
    1.0,
    42.313_330_701_600_91,
    687.187_007_492_057_9,
    5_394.196_021_424_751,
    21_213.794_301_586_596,
    39_307.895_800_092_71,
    28_729.085_735_721_943,
    5_226.495_278_852_546,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_545,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    0.241_780_725_177_450_6,
    0.022_723_844_989_269_184,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    0.689_767_334_985_1,
    0.148_103_976_427_480_08,
    0.015_198_666_563_616_457,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_8e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    0.296_560_571_828_504_9,
    0.026_532_189_526_576_124,
    0.001_242_660_947_388_078_4,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    0.599_832_206_555_887_9,
    0.136_929_880_922_735_8,
    0.014_875_361_290_850_615,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_7e-15,
];

/// Standard normal quantile (Wichura's AS 241 rational approximation,
/// relative accuracy about 1e-16).
pub fn z_quantile(p: f64) -> Result<f64, PowerError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(PowerError::InvalidArgument(format!("probability {p} outside (0, 1)")));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return Ok(q * poly(&A, r) / poly(&B, r));
    }
    let mut r = (-(p.min(1.0 - p)).ln()).sqrt();
    let z = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    Ok(if q < 0.0 { -z } else { z })
}

fn check_levels(alpha: f64, power: f64) -> Result<(), PowerError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(PowerError::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
    }
    if !(power > 0.0 && power < 1.0) {
        return Err(PowerError::InvalidArgument(format!("power {power} outside (0, 1)")));
    }
    Ok(())
}

/// `z_{1-alpha/2} + z_{power}`.
pub fn z_sum(alpha: f64, power: f64) -> Result<f64, PowerError> {
    check_levels(alpha, power)?;
    Ok(z_quantile(1.0 - alpha / 2.0)? + z_quantile(power)?)
}

/// Unrounded `2 ((z_{1-alpha/2} + z_{power}) / d)^2`.
pub fn n_per_group_exact(alpha: f64, power: f64, d: f64) -> Result<f64, PowerError> {
    if d == 0.0 || !d.is_finite() {
        return Err(PowerError::InvalidArgument(format!("effect size {d} must be finite and nonzero")));
    }
    Ok(2.0 * (z_sum(alpha, power)? / d).powi(2))
}

/// Events per group for a two-sided test, rounded up.
pub fn required_n_per_group(alpha: f64, power: f64, d: f64) -> Result<u64, PowerError> {
    Ok(n_per_group_exact(alpha, power, d)?.ceil() as u64)
}

/// Minimum detectable difference in means:
/// `(z_{1-alpha/2} + z_{power}) sigma sqrt(1/n1 + 1/n2)`.
pub fn mde(alpha: f64, power: f64, sigma_pooled: f64, n1: u64, n2: u64) -> Result<f64, PowerError> {
    if n1 == 0 || n2 == 0 {
        return Err(PowerError::InvalidArgument("group sizes must be at least 1".into()));
    }
    if !(sigma_pooled >= 0.0 && sigma_pooled.is_finite()) {
        return Err(PowerError::InvalidArgument(format!("sigma {sigma_pooled} must be finite and nonnegative")));
    }
    Ok(z_sum(alpha, power)? * sigma_pooled * (1.0 / n1 as f64 + 1.0 / n2 as f64).sqrt())
}

/// Standardized effect `delta / sigma_pooled`.
pub fn effect_size(delta: f64, sigma_pooled: f64) -> Result<f64, PowerError> {
    if sigma_pooled.is_nan() || sigma_pooled <= 0.0 {
        return Err(PowerError::InvalidArgument("pooled sigma must be positive".into()));
    }
    Ok(delta / sigma_pooled)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerInput {
    pub alpha: f64,
    pub power: f64,
    pub d: f64,
    pub sigma_pooled: f64,
    pub n1: u64,
    pub n2: u64,
}

impl Default for PowerInput {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            power: 0.80,
            d: 0.13,
            sigma_pooled: 0.27,
            n1: 8,
            n2: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerReport {
    pub z_alpha: f64,
    pub z_beta: f64,
    pub n_exact: f64,
    pub required_n: u64,
    pub mde: f64,
}

impl PowerInput {
    pub fn evaluate(&self) -> Result<PowerReport, PowerError> {
        check_levels(self.alpha, self.power)?;
        Ok(PowerReport {
            z_alpha: z_quantile(1.0 - self.alpha / 2.0)?,
            z_beta: z_quantile(self.power)?,
            n_exact: n_per_group_exact(self.alpha, self.power, self.d)?,
            required_n: required_n_per_group(self.alpha, self.power, self.d)?,
            mde: mde(self.alpha, self.power, self.sigma_pooled, self.n1, self.n2)?,
        })
    }
}
