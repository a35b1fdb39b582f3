use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Biexponential skin-conductance impulse response
/// `h(t) = (exp(-t/tau1) - exp(-t/tau2)) / peak`, scaled to unit peak so a
/// driver impulse of mass `A` produces a response of amplitude `A`.
///
/// Sampled at rate `fs` the response obeys a second-order recursion, which is
/// what makes convolution with it O(n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatemanKernel {
    pub tau1_s: f64,
    pub tau2_s: f64,
    /// Nominal support, used for sampling the kernel and event footprints.
    pub duration_s: f64,
}

impl Default for BatemanKernel {
    fn default() -> Self {
        Self {
            tau1_s: 2.0,
            tau2_s: 0.75,
            duration_s: 20.0,
        }
    }
}

/// Recursion coefficients of the sampled kernel: `h[n] = (a^n - b^n) / peak`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ArForm {
    pub a: f64,
    pub b: f64,
    pub peak: f64,
}

impl ArForm {
    /// `h[1]`, the gain between driver and the second-order difference of the
    /// phasic response.
    pub fn gain(&self) -> f64 {
        (self.a - self.b) / self.peak
    }
}

impl BatemanKernel {
    pub fn new(tau1_s: f64, tau2_s: f64, duration_s: f64) -> Result<Self> {
        let k = Self {
            tau1_s,
            tau2_s,
            duration_s,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau2_s > 0.0 && self.tau1_s > self.tau2_s && self.tau1_s.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "kernel needs tau1 > tau2 > 0 (got {}, {})",
                self.tau1_s, self.tau2_s
            )));
        }
        if !(self.duration_s > self.peak_time_s()) {
            return Err(Error::InvalidConfig(
                "kernel duration must extend past its peak".into(),
            ));
        }
        Ok(())
    }

    pub fn peak_time_s(&self) -> f64 {
        let (t1, t2) = (self.tau1_s, self.tau2_s);
        (t1 / t2).ln() * t1 * t2 / (t1 - t2)
    }

    fn raw(&self, t: f64) -> f64 {
        (-t / self.tau1_s).exp() - (-t / self.tau2_s).exp()
    }

    /// Unit-peak response at `t` seconds after the impulse; zero for `t < 0`.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            self.raw(t) / self.raw(self.peak_time_s())
        }
    }

    /// The kernel sampled over `[0, duration_s)`.
    pub fn samples(&self, rate_hz: f64) -> Vec<f64> {
        let n = (self.duration_s * rate_hz).ceil() as usize;
        (0..n).map(|i| self.eval(i as f64 / rate_hz)).collect()
    }

    pub(crate) fn ar_form(&self, rate_hz: f64) -> ArForm {
        let dt = 1.0 / rate_hz;
        ArForm {
            a: (-dt / self.tau1_s).exp(),
            b: (-dt / self.tau2_s).exp(),
            peak: self.raw(self.peak_time_s()),
        }
    }

    /// `out[n] = sum_{k<=n} driver[k] * h[n-k]`, evaluated by recursion.
    pub fn convolve(&self, driver: &[f64], rate_hz: f64) -> Vec<f64> {
        let ar = self.ar_form(rate_hz);
        let mut u = 0.0;
        let mut v = 0.0;
        driver
            .iter()
            .map(|d| {
                u = ar.a * u + d;
                v = ar.b * v + d;
                (u - v) / ar.peak
            })
            .collect()
    }
}
