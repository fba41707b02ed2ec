//! Bandit instances, reward generation and synthetic instance generators.
//!
//! An [`Instance`] couples a finite arm set in `R^d` with the hidden
//! parameter vector and a Gaussian noise scale. Rewards are
//! `theta_star · x_a + noise_std · z`, `z ~ N(0,1)`.
//!
//! All randomness comes from [`RngStream`], a ChaCha12 generator keyed by
//! `(master_seed, stream_index)`. ChaCha is counter-based, so identical
//! keys reproduce identical draw sequences on every platform, and distinct
//! stream indices give statistically independent streams.

use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;
use std::path::Path;

use crate::error::{Error, Result};

/// Arms may exceed unit Euclidean norm by at most this much.
pub const ARM_NORM_SLACK: f64 = 1e-12;

/// Strict margin by which the best arm must beat the runner-up.
pub const UNIQUE_BEST_MARGIN: f64 = 1e-12;

/// Deterministic pseudorandom stream.
///
/// Streams constructed from the same `(master_seed, stream_index)` pair
/// yield identical sequences; distinct stream indices are independent.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha12Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut inner = ChaCha12Rng::seed_from_u64(master_seed);
        inner.set_stream(stream_index);
        Self { inner }
    }

    /// One standard normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform index in `0..n`.
    pub fn uniform_index(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// A point drawn uniformly from the unit sphere in `R^d`.
pub fn sample_unit_vector(d: usize, rng: &mut RngStream) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.standard_normal());
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Ordered finite set of feature vectors, all with Euclidean norm `<= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSet {
    d: usize,
    arms: Vec<DVector<f64>>,
}

impl ArmSet {
    pub fn new(arms: Vec<DVector<f64>>) -> Result<Self> {
        if arms.len() < 2 {
            return Err(Error::invalid("an arm set needs at least two arms"));
        }
        let d = arms[0].len();
        if d == 0 {
            return Err(Error::invalid("arms must have positive dimension"));
        }
        for (i, arm) in arms.iter().enumerate() {
            if arm.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: arm.len(),
                });
            }
            if arm.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("arm {i} has a non-finite entry")));
            }
            if arm.norm() > 1.0 + ARM_NORM_SLACK {
                return Err(Error::invalid(format!(
                    "arm {i} has Euclidean norm {} > 1",
                    arm.norm()
                )));
            }
        }
        Ok(Self { d, arms })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of arms `K`.
    pub fn k(&self) -> usize {
        self.arms.len()
    }

    pub fn arm(&self, a: usize) -> &DVector<f64> {
        &self.arms[a]
    }

    pub fn arms(&self) -> &[DVector<f64>] {
        &self.arms
    }
}

/// A bandit instance: arm set, hidden parameter, Gaussian noise scale.
///
/// Construction fails unless exactly one arm attains the maximal expected
/// reward, with a strict margin over the runner-up.
#[derive(Debug, Clone)]
pub struct Instance {
    arm_set: ArmSet,
    theta_star: DVector<f64>,
    noise_std: f64,
    best: usize,
}

impl Instance {
    pub fn new(arm_set: ArmSet, theta_star: DVector<f64>, noise_std: f64) -> Result<Self> {
        if theta_star.len() != arm_set.d() {
            return Err(Error::DimensionMismatch {
                expected: arm_set.d(),
                got: theta_star.len(),
            });
        }
        if theta_star.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("theta_star has a non-finite entry"));
        }
        if !(noise_std.is_finite() && noise_std >= 0.0) {
            return Err(Error::invalid(format!(
                "noise_std must be a nonnegative real, got {noise_std}"
            )));
        }
        let rewards: Vec<f64> = arm_set.arms().iter().map(|x| theta_star.dot(x)).collect();
        let best = argmax(&rewards);
        let runner_up = rewards
            .iter()
            .enumerate()
            .filter(|(a, _)| *a != best)
            .map(|(_, r)| *r)
            .fold(f64::NEG_INFINITY, f64::max);
        if rewards[best] - runner_up <= UNIQUE_BEST_MARGIN {
            return Err(Error::ConstructionFailed(format!(
                "best arm is not unique: margin {} <= {UNIQUE_BEST_MARGIN}",
                rewards[best] - runner_up
            )));
        }
        Ok(Self {
            arm_set,
            theta_star,
            noise_std,
            best,
        })
    }

    /// Same instance with a different noise scale.
    pub fn with_noise_std(self, noise_std: f64) -> Result<Self> {
        Self::new(self.arm_set, self.theta_star, noise_std)
    }

    pub fn arm_set(&self) -> &ArmSet {
        &self.arm_set
    }

    pub fn d(&self) -> usize {
        self.arm_set.d()
    }

    pub fn k(&self) -> usize {
        self.arm_set.k()
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// Expected reward of every arm.
    pub fn rewards(&self) -> Vec<f64> {
        self.arm_set
            .arms()
            .iter()
            .map(|x| self.theta_star.dot(x))
            .collect()
    }

    /// Index of the unique optimal arm.
    pub fn best_arm(&self) -> usize {
        self.best
    }

    /// Suboptimality gaps; zero at the best arm, strictly positive elsewhere.
    pub fn gaps(&self) -> Vec<f64> {
        let rewards = self.rewards();
        let top = rewards[self.best];
        rewards.iter().map(|r| top - r).collect()
    }

    /// Smallest positive gap.
    pub fn delta_min(&self) -> f64 {
        self.gaps()
            .into_iter()
            .enumerate()
            .filter(|(a, _)| *a != self.best)
            .map(|(_, g)| g)
            .fold(f64::INFINITY, f64::min)
    }

    /// Draws one reward from arm `a`.
    ///
    /// With `noise_std == 0` this is deterministic and consumes no
    /// randomness.
    pub fn pull(&self, a: usize, rng: &mut RngStream) -> Result<f64> {
        if a >= self.k() {
            return Err(Error::ArmIndexOutOfRange {
                index: a,
                len: self.k(),
            });
        }
        let mean = self.theta_star.dot(self.arm_set.arm(a));
        if self.noise_std == 0.0 {
            Ok(mean)
        } else {
            Ok(mean + self.noise_std * rng.standard_normal())
        }
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn basis(d: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(d);
    v[i] = 1.0;
    v
}

fn check_acute(omega: f64) -> Result<()> {
    if !(omega.is_finite() && omega > 0.0 && omega < std::f64::consts::FRAC_PI_2) {
        return Err(Error::invalid(format!(
            "omega must lie in (0, pi/2), got {omega}"
        )));
    }
    Ok(())
}

/// Canonical basis `e_1..e_d` plus the probe arm `(cos w, sin w, 0, ..)`,
/// with `theta_star = e_1`. The probe arm is nearly aligned with the best
/// arm, which makes it the hard arm to discriminate.
pub fn gen_soare(d: usize, omega: f64) -> Result<Instance> {
    if d < 2 {
        return Err(Error::invalid("soare instances need d >= 2"));
    }
    check_acute(omega)?;
    let mut arms: Vec<DVector<f64>> = (0..d).map(|i| basis(d, i)).collect();
    let mut probe = DVector::zeros(d);
    probe[0] = omega.cos();
    probe[1] = omega.sin();
    arms.push(probe);
    Instance::new(ArmSet::new(arms)?, basis(d, 0), 1.0)
}

/// Two-dimensional instance `{e_1, e_2, (cos w, sin w)}` with
/// `theta_star = e_1`.
pub fn three_arm(omega: f64) -> Result<Instance> {
    check_acute(omega)?;
    let arms = vec![
        basis(2, 0),
        basis(2, 1),
        DVector::from_vec(vec![omega.cos(), omega.sin()]),
    ];
    Instance::new(ArmSet::new(arms)?, basis(2, 0), 1.0)
}

/// Assembles a closest-pair instance from already-drawn unit arms:
/// `theta_star = u + gamma (v - u)` where `(u, v)` is the pair with the
/// largest inner product (equivalently, smallest distance on the sphere).
///
/// Fails if `u` does not come out as the strict best arm.
pub fn sphere_instance_from_arms(arms: Vec<DVector<f64>>, gamma: f64) -> Result<Instance> {
    if !(gamma.is_finite() && gamma > 0.0 && gamma < 0.5) {
        return Err(Error::invalid(format!(
            "gamma must lie in (0, 0.5), got {gamma}"
        )));
    }
    let k = arms.len();
    if k < 2 {
        return Err(Error::invalid("need at least two arms"));
    }
    let (mut ui, mut vi, mut best_dot) = (0, 1, f64::NEG_INFINITY);
    for i in 0..k {
        for j in (i + 1)..k {
            let dot = arms[i].dot(&arms[j]);
            if dot > best_dot {
                best_dot = dot;
                ui = i;
                vi = j;
            }
        }
    }
    let theta = &arms[ui] + gamma * (&arms[vi] - &arms[ui]);
    let instance = Instance::new(ArmSet::new(arms)?, theta, 1.0)?;
    if instance.best_arm() != ui {
        return Err(Error::ConstructionFailed(
            "closest-pair arm u is not the strict best arm".into(),
        ));
    }
    Ok(instance)
}

/// `k` arms drawn i.i.d. uniformly on the unit sphere in `R^d`; the
/// parameter is placed near the closest pair. Redraws the whole arm set
/// (at most 100 times) if the construction does not produce a strict
/// best arm.
pub fn gen_sphere(d: usize, k: usize, gamma: f64, rng: &mut RngStream) -> Result<Instance> {
    if d < 2 || k < 2 {
        return Err(Error::invalid("sphere instances need d >= 2 and k >= 2"));
    }
    const MAX_ATTEMPTS: usize = 100;
    for _ in 0..MAX_ATTEMPTS {
        let arms: Vec<DVector<f64>> = (0..k).map(|_| sample_unit_vector(d, rng)).collect();
        match sphere_instance_from_arms(arms, gamma) {
            Ok(instance) => return Ok(instance),
            Err(Error::InvalidArgument(msg)) => return Err(Error::InvalidArgument(msg)),
            Err(_) => continue,
        }
    }
    Err(Error::ConstructionFailed(format!(
        "no valid sphere instance in {MAX_ATTEMPTS} attempts"
    )))
}

/// Two fixed arms `e_1` and `(cos 3pi/4, sin 3pi/4)` plus `k - 2` arms
/// crowded around angle `pi/4`, angular jitter `N(0, sigma^2)`;
/// `theta_star = e_1`. Jitter draws that would tie or beat the best arm
/// are rejected and redrawn.
pub fn gen_crowded(k: usize, sigma: f64, rng: &mut RngStream) -> Result<Instance> {
    if k < 3 {
        return Err(Error::invalid("crowded instances need k >= 3"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!(
            "sigma must be a positive real, got {sigma}"
        )));
    }
    let quarter = std::f64::consts::FRAC_PI_4;
    let mut arms = Vec::with_capacity(k);
    arms.push(basis(2, 0));
    let second = 3.0 * quarter;
    arms.push(DVector::from_vec(vec![second.cos(), second.sin()]));
    for _ in 2..k {
        let angle = loop {
            let phi = sigma * rng.standard_normal();
            if (quarter + phi).cos() < 1.0 - 1e-9 {
                break quarter + phi;
            }
        };
        arms.push(DVector::from_vec(vec![angle.cos(), angle.sin()]));
    }
    Instance::new(ArmSet::new(arms)?, basis(2, 0), 1.0)
}

// --- instance file format ---------------------------------------------

/// Formats a real with 17 significant digits (enough to round-trip f64).
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serializes an instance to the JSON instance-file format.
pub fn instance_to_json(instance: &Instance) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str(&format!("  \"d\": {},\n", instance.d()));
    out.push_str("  \"arms\": [\n");
    let k = instance.k();
    for (a, arm) in instance.arm_set().arms().iter().enumerate() {
        let row: Vec<String> = arm.iter().map(|x| format_real(*x)).collect();
        let sep = if a + 1 < k { "," } else { "" };
        out.push_str(&format!("    [{}]{sep}\n", row.join(", ")));
    }
    out.push_str("  ],\n");
    let theta: Vec<String> = instance.theta_star().iter().map(|x| format_real(*x)).collect();
    out.push_str(&format!("  \"theta_star\": [{}],\n", theta.join(", ")));
    out.push_str(&format!(
        "  \"noise_std\": {}\n",
        format_real(instance.noise_std())
    ));
    out.push_str("}\n");
    out
}

#[derive(Deserialize)]
struct RawInstanceFile {
    d: usize,
    arms: Vec<Vec<f64>>,
    theta_star: Option<Vec<f64>>,
    noise_std: f64,
}

/// Parses the JSON instance-file format.
///
/// `theta_star` is optional in the format (arm-set-only files), but this
/// entry point needs a full instance and rejects files without it.
pub fn instance_from_json(text: &str) -> Result<Instance> {
    let raw: RawInstanceFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let arms: Vec<DVector<f64>> = raw
        .arms
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != raw.d {
                Err(Error::Parse(format!(
                    "arm {i} has {} entries, expected d = {}",
                    row.len(),
                    raw.d
                )))
            } else {
                Ok(DVector::from_vec(row))
            }
        })
        .collect::<Result<_>>()?;
    let theta = raw
        .theta_star
        .ok_or_else(|| Error::Parse("theta_star is required to build an instance".into()))?;
    if theta.len() != raw.d {
        return Err(Error::Parse(format!(
            "theta_star has {} entries, expected d = {}",
            theta.len(),
            raw.d
        )));
    }
    Instance::new(ArmSet::new(arms)?, DVector::from_vec(theta), raw.noise_std)
}

pub fn write_instance_file(instance: &Instance, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, instance_to_json(instance))?;
    Ok(())
}

pub fn read_instance_file(path: impl AsRef<Path>) -> Result<Instance> {
    let text = std::fs::read_to_string(path)?;
    instance_from_json(&text)
}
