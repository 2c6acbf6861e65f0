//! Step sizes `alpha_t = (H+1)/(H+t)` and the averaging profile they induce.
//!
//! For a fixed `t` the profile `alpha_t^i = alpha_i * prod_{j>i} (1 - alpha_j)`
//! sums to one and weights recent iterates more heavily. The raw relative
//! weights `w_i = alpha_t^i / alpha_t^1` grow like `i^H` and are never formed;
//! only their consecutive ratios are used.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WeightError {
    #[error("iteration index must be at least {min}, got {got}")]
    IndexTooSmall { min: usize, got: usize },
}

fn require(got: usize, min: usize) -> Result<(), WeightError> {
    if got < min {
        Err(WeightError::IndexTooSmall { min, got })
    } else {
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WeightSchedule {
    horizon: usize,
}

impl WeightSchedule {
    pub fn new(horizon: usize) -> Self {
        assert!(horizon >= 1, "horizon must be positive");
        Self { horizon }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn h(&self) -> f64 {
        self.horizon as f64
    }

    pub fn alpha(&self, t: usize) -> Result<f64, WeightError> {
        require(t, 1)?;
        Ok((self.h() + 1.0) / (self.h() + t as f64))
    }

    /// `(alpha_t^1, ..., alpha_t^t)`, built backward from `alpha_t^t = alpha_t`
    /// by dividing out one weight ratio per step.
    pub fn alpha_profile(&self, t: usize) -> Result<Vec<f64>, WeightError> {
        let last = self.alpha(t)?;
        let mut profile = vec![0.0; t];
        profile[t - 1] = last;
        for i in (2..=t).rev() {
            profile[i - 2] = profile[i - 1] * (i - 1) as f64 / (self.h() + (i - 1) as f64);
        }
        Ok(profile)
    }

    /// `w_i / w_{i-1} = (H + i - 1) / (i - 1)`.
    pub fn weight_ratio(&self, i: usize) -> Result<f64, WeightError> {
        require(i, 2)?;
        let k = (i - 1) as f64;
        Ok((self.h() + k) / k)
    }

    /// `w_{t-1} / w_t`, the factor applied to a `w_{t-1}`-normalized sum before
    /// adding the iteration-`t` term. Zero at `t = 1` since there is no history.
    pub fn carry_factor(&self, t: usize) -> Result<f64, WeightError> {
        require(t, 1)?;
        let k = (t - 1) as f64;
        Ok(k / (self.h() + k))
    }

    /// `1 - alpha_t = (t - 1) / (H + t)`: every existing profile weight is
    /// scaled by this when iteration `t` arrives.
    pub fn decay_factor(&self, t: usize) -> Result<f64, WeightError> {
        require(t, 1)?;
        Ok((t - 1) as f64 / (self.h() + t as f64))
    }

    /// `sum_i alpha_t^i / i`.
    pub fn weighted_harmonic(&self, t: usize) -> Result<f64, WeightError> {
        let profile = self.alpha_profile(t)?;
        Ok(profile
            .iter()
            .enumerate()
            .map(|(k, a)| a / (k + 1) as f64)
            .sum())
    }

    /// Upper bound `(1 + 1/H) / t` on [`weighted_harmonic`](Self::weighted_harmonic).
    pub fn harmonic_bound(&self, t: usize) -> f64 {
        (1.0 + 1.0 / self.h()) / t as f64
    }

    /// Sweeps `t = 1..=t_max` checking the profile properties.
    pub fn verify_lemma_a(&self, t_max: usize) -> Result<LemmaAReport, WeightError> {
        require(t_max, 1)?;
        let mut report = LemmaAReport::new(self.horizon, t_max);
        let h = self.h();
        let square_bound = h + 2.0;
        // running sum of alpha_i^2 over i <= t
        let mut alpha_sq_sum = 0.0;
        for t in 1..=t_max {
            let profile = self.alpha_profile(t)?;
            let tf = t as f64;
            let alpha_t = self.alpha(t)?;
            alpha_sq_sum += alpha_t * alpha_t;

            let sum: f64 = profile.iter().sum();
            report.record(Property::SumsToOne, t, PROFILE_TOL - (sum - 1.0).abs());

            let p2 = profile
                .iter()
                .enumerate()
                .map(|(k, a)| (k + 1) as f64 / tf - a)
                .fold(f64::INFINITY, f64::min);
            report.record(Property::BoundedByIndexRatio, t, p2);

            for i in 2..=t {
                let ratio = profile[i - 1] / profile[i - 2];
                let closed = self.weight_ratio(i)?;
                report.record(
                    Property::RatioClosedForm,
                    t,
                    PROFILE_TOL - ((ratio - closed) / closed).abs(),
                );
            }

            let p4 = profile
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min);
            report.record(Property::Nondecreasing, t, if t == 1 { 0.0 } else { p4 });

            let profile_sq: f64 = profile.iter().map(|a| a * a).sum();
            report.record(
                Property::SquareSums,
                t,
                (alpha_sq_sum - profile_sq).min(square_bound - alpha_sq_sum),
            );

            // probe b_i = 1/i
            let weighted: f64 = profile
                .iter()
                .enumerate()
                .map(|(k, a)| a / (k + 1) as f64)
                .sum();
            let plain: f64 = (1..=t).map(|i| 1.0 / i as f64).sum::<f64>() / tf;
            report.record(Property::NonincreasingProbe, t, plain - weighted);
        }
        Ok(report)
    }
}

/// Absolute slack allowed on every profile property.
pub const PROFILE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Property {
    /// P1: the profile sums to one.
    SumsToOne,
    /// P2: `alpha_t^i <= i / t`.
    BoundedByIndexRatio,
    /// P3: consecutive profile ratios equal `(H + i - 1)/(i - 1)`.
    RatioClosedForm,
    /// P4: the profile is nondecreasing in `i`.
    Nondecreasing,
    /// P5: `sum (alpha_t^i)^2 <= sum alpha_i^2 <= H + 2`.
    SquareSums,
    /// P6 with the probe `b_i = 1/i`.
    NonincreasingProbe,
}

impl Property {
    pub const ALL: [Property; 6] = [
        Property::SumsToOne,
        Property::BoundedByIndexRatio,
        Property::RatioClosedForm,
        Property::Nondecreasing,
        Property::SquareSums,
        Property::NonincreasingProbe,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Property::SumsToOne => "P1",
            Property::BoundedByIndexRatio => "P2",
            Property::RatioClosedForm => "P3",
            Property::Nondecreasing => "P4",
            Property::SquareSums => "P5",
            Property::NonincreasingProbe => "P6",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Property::SumsToOne => "profile sums to 1",
            Property::BoundedByIndexRatio => "alpha_t^i <= i/t",
            Property::RatioClosedForm => "profile ratio = (H+i-1)/(i-1)",
            Property::Nondecreasing => "profile nondecreasing in i",
            Property::SquareSums => "sum (alpha_t^i)^2 <= sum alpha_i^2 <= H+2",
            Property::NonincreasingProbe => "sum alpha_t^i / i <= (1/t) sum 1/i",
        }
    }
}

/// Worst slack of one property across a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropertyOutcome {
    pub property: Property,
    pub min_slack: f64,
    pub worst_t: usize,
    pub failures: usize,
}

impl PropertyOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LemmaAReport {
    pub horizon: usize,
    pub t_max: usize,
    pub outcomes: Vec<PropertyOutcome>,
}

impl LemmaAReport {
    fn new(horizon: usize, t_max: usize) -> Self {
        Self {
            horizon,
            t_max,
            outcomes: Property::ALL
                .iter()
                .map(|&property| PropertyOutcome {
                    property,
                    min_slack: f64::INFINITY,
                    worst_t: 0,
                    failures: 0,
                })
                .collect(),
        }
    }

    fn record(&mut self, property: Property, t: usize, slack: f64) {
        let o = &mut self.outcomes[property as usize];
        if !(slack >= -PROFILE_TOL) {
            o.failures += 1;
        }
        if !(slack >= o.min_slack) {
            o.min_slack = slack;
            o.worst_t = t;
        }
    }

    pub fn outcome(&self, property: Property) -> &PropertyOutcome {
        &self.outcomes[property as usize]
    }

    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(PropertyOutcome::passed)
    }
}

impl fmt::Display for LemmaAReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, o) in self.outcomes.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(
                f,
                "{} H={} t<={} {:<44} {} (min slack {:e} at t={})",
                o.property.label(),
                self.horizon,
                self.t_max,
                o.property.description(),
                if o.passed() { "PASS" } else { "FAIL" },
                o.min_slack,
                o.worst_t
            )?;
        }
        Ok(())
    }
}

/// Worst slack of `weighted_harmonic(t) <= (1 + 1/H)/t` over `t <= t_max`.
///
/// Uses the running form `x_t = (1 - alpha_t) x_{t-1} + alpha_t / t`, which
/// makes the sweep linear in `t_max`; the direct summation is
/// [`WeightSchedule::weighted_harmonic`].
pub fn harmonic_sweep(schedule: &WeightSchedule, t_max: usize) -> HarmonicSweep {
    let mut running = 0.0;
    let mut min_slack = f64::INFINITY;
    let mut worst_t = 0;
    for t in 1..=t_max {
        let alpha = schedule.alpha(t).expect("t >= 1");
        running += alpha * (1.0 / t as f64 - running);
        let slack = schedule.harmonic_bound(t) - running;
        if slack < min_slack {
            min_slack = slack;
            worst_t = t;
        }
    }
    HarmonicSweep {
        horizon: schedule.horizon(),
        t_max,
        min_slack,
        worst_t,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarmonicSweep {
    pub horizon: usize,
    pub t_max: usize,
    pub min_slack: f64,
    pub worst_t: usize,
}

impl HarmonicSweep {
    pub fn passed(&self) -> bool {
        self.min_slack >= -PROFILE_TOL
    }
}
