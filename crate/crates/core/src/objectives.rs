//! GAN value function and the adversarial losses used by the mutations.
//!
//! The measuring function is `ln` with its argument clamped to
//! `[CLAMP_EPS, 1]`, which keeps every loss and gradient finite no matter
//! how saturated the discriminator gets.

use crate::error::{Error, Result};
use crate::nn::{Batch, Network, ParamVector};

pub const CLAMP_EPS: f64 = 1e-7;

/// Clamped logarithm used inside the GAN value.
#[inline]
pub fn measure(x: f64) -> f64 {
    x.clamp(CLAMP_EPS, 1.0).ln()
}

#[inline]
fn measure_derivative(x: f64) -> f64 {
    if (CLAMP_EPS..=1.0).contains(&x) {
        1.0 / x
    } else {
        0.0
    }
}

/// Generator training objective selected by a mutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LossKind {
    /// `1/2 E[log(1 - D(G(z)))]`
    Minmax,
    /// `E[(D(G(z)) - 1)^2]`
    LeastSquare,
    /// `-1/2 E[log D(G(z))]`, the non-saturating form.
    Heuristic,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Minmax, LossKind::LeastSquare, LossKind::Heuristic];

    pub fn index(self) -> usize {
        match self {
            LossKind::Minmax => 0,
            LossKind::LeastSquare => 1,
            LossKind::Heuristic => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Minmax => "minmax",
            LossKind::LeastSquare => "least_square",
            LossKind::Heuristic => "heuristic",
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "minmax" | "bce" => Ok(LossKind::Minmax),
            "least_square" | "leastsquare" | "mse" => Ok(LossKind::LeastSquare),
            "heuristic" | "heu" => Ok(LossKind::Heuristic),
            other => Err(Error::Parse(format!("unknown loss kind `{other}`"))),
        }
    }
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len() as f64;
    xs.sum::<f64>() / n
}

/// Generator loss given the discriminator outputs on generated samples.
pub fn generator_loss(kind: LossKind, d_fake: &[f64]) -> f64 {
    let it = d_fake.iter().copied();
    match kind {
        LossKind::Minmax => 0.5 * mean(it.map(|d| measure(1.0 - d))),
        LossKind::LeastSquare => mean(it.map(|d| (d - 1.0) * (d - 1.0))),
        LossKind::Heuristic => -0.5 * mean(it.map(measure)),
    }
}

/// Derivative of [`generator_loss`] with respect to each discriminator output.
pub fn generator_loss_grad(kind: LossKind, d_fake: &[f64]) -> Vec<f64> {
    let n = d_fake.len() as f64;
    d_fake
        .iter()
        .map(|&d| match kind {
            LossKind::Minmax => -0.5 * measure_derivative(1.0 - d) / n,
            LossKind::LeastSquare => 2.0 * (d - 1.0) / n,
            LossKind::Heuristic => -0.5 * measure_derivative(d) / n,
        })
        .collect()
}

/// Binary cross entropy with real labelled 1 and fake labelled 0.
pub fn discriminator_loss(d_real: &[f64], d_fake: &[f64]) -> f64 {
    -mean(d_real.iter().map(|&d| measure(d))) - mean(d_fake.iter().map(|&d| measure(1.0 - d)))
}

/// Derivatives of [`discriminator_loss`] with respect to the real and fake outputs.
pub fn discriminator_loss_grad(d_real: &[f64], d_fake: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nr = d_real.len() as f64;
    let nf = d_fake.len() as f64;
    let real = d_real.iter().map(|&d| -measure_derivative(d) / nr).collect();
    let fake = d_fake
        .iter()
        .map(|&d| measure_derivative(1.0 - d) / nf)
        .collect();
    (real, fake)
}

/// Empirical GAN value from raw discriminator outputs.
pub fn gan_value_from_outputs(d_real: &[f64], d_fake: &[f64]) -> f64 {
    mean(d_real.iter().map(|&d| measure(d))) + mean(d_fake.iter().map(|&d| measure(1.0 - d)))
}

fn nonempty(b: &Batch, what: &str) -> Result<()> {
    if b.is_empty() {
        return Err(Error::Shape(format!("{what} batch is empty")));
    }
    Ok(())
}

fn single_output(disc: &Network) -> Result<()> {
    if disc.spec.output_dim() != 1 {
        return Err(Error::Shape(format!(
            "discriminator must have one output, has {}",
            disc.spec.output_dim()
        )));
    }
    Ok(())
}

fn disc_outputs(disc: &Network, x: &Batch) -> Result<Vec<f64>> {
    single_output(disc)?;
    Ok(disc.forward(x)?.into_vec())
}

/// `L(u, v) = mean[phi(D(x))] + mean[phi(1 - D(G(z)))]`, the fitness interaction value.
pub fn gan_value(gen: &Network, disc: &Network, real: &Batch, latent: &Batch) -> Result<f64> {
    nonempty(real, "real")?;
    nonempty(latent, "latent")?;
    let fake = gen.forward(latent)?;
    let d_real = disc_outputs(disc, real)?;
    let d_fake = disc_outputs(disc, &fake)?;
    Ok(gan_value_from_outputs(&d_real, &d_fake))
}

/// Loss and gradient of `kind` with respect to the generator parameters,
/// backpropagated through a frozen discriminator.
pub fn generator_grad(
    kind: LossKind,
    gen: &Network,
    disc: &Network,
    latent: &Batch,
) -> Result<(f64, ParamVector)> {
    nonempty(latent, "latent")?;
    let gen_trace = gen.forward_traced(latent)?;
    let fake = gen_trace.output(&gen.spec);
    single_output(disc)?;
    let disc_trace = disc.forward_traced(&fake)?;
    let d_fake = disc_trace.output_slice();
    let loss = generator_loss(kind, d_fake);
    let upstream = Batch::new(d_fake.len(), 1, generator_loss_grad(kind, d_fake))?;
    let through_disc = disc.backward_traced(&disc_trace, &upstream)?;
    let grads = gen.backward_traced(&gen_trace, &through_disc.inputs)?;
    Ok((loss, grads.params))
}

/// Loss and gradient of the discriminator BCE with respect to its parameters.
pub fn discriminator_grad(disc: &Network, real: &Batch, fake: &Batch) -> Result<(f64, ParamVector)> {
    nonempty(real, "real")?;
    nonempty(fake, "fake")?;
    single_output(disc)?;
    let real_trace = disc.forward_traced(real)?;
    let fake_trace = disc.forward_traced(fake)?;
    let (d_real, d_fake) = (real_trace.output_slice(), fake_trace.output_slice());
    let loss = discriminator_loss(d_real, d_fake);
    let (g_real, g_fake) = discriminator_loss_grad(d_real, d_fake);
    let mut grad = disc.backward_traced(&real_trace, &Batch::new(g_real.len(), 1, g_real)?)?.params;
    let fake_grad = disc.backward_traced(&fake_trace, &Batch::new(g_fake.len(), 1, g_fake)?)?.params;
    for (a, b) in grad.values.iter_mut().zip(&fake_grad.values) {
        *a += b;
    }
    Ok((loss, grad))
}
