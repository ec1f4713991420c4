use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{FlowId, Nanos, OnuId, VponId};

pub const MIN_FRAME_BYTES: u32 = 64;
pub const MAX_FRAME_BYTES: u32 = 1518;

/// Independent deterministic random stream for `(seed, stream)`.
///
/// The seed keys a ChaCha8 generator and `stream` selects its 64-bit stream
/// number, so streams never share state and adding one leaves the others
/// untouched. Flows use their flow id as the stream number.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream number reserved for an ONU's discovery back-off draws.
pub fn discovery_stream(onu_id: OnuId) -> u64 {
    (1 << 40) | u64::from(onu_id.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceClass {
    TimeCritical,
    BestEffort,
}

impl ServiceClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            ServiceClass::TimeCritical => "time_critical",
            ServiceClass::BestEffort => "best_effort",
        }
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "snake_case")]
pub enum FlowDirection {
    #[default]
    Upstream,
    Downstream,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalProcess {
    Poisson {
        rate_pps: f64,
    },
    Cbr {
        period_ns: Nanos,
        /// First arrival offset; drawn uniformly in `[0, period)` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phase_ns: Option<Nanos>,
    },
    /// Poisson arrivals at `rate_pps` during exponentially distributed ON periods.
    OnOff {
        mean_on_ns: f64,
        mean_off_ns: f64,
        rate_pps: f64,
    },
}

impl ArrivalProcess {
    /// Long-run packets per second.
    pub fn mean_rate_pps(&self) -> f64 {
        match *self {
            ArrivalProcess::Poisson { rate_pps } => rate_pps,
            ArrivalProcess::Cbr { period_ns, .. } => 1e9 / period_ns as f64,
            ArrivalProcess::OnOff {
                mean_on_ns,
                mean_off_ns,
                rate_pps,
            } => rate_pps * mean_on_ns / (mean_on_ns + mean_off_ns),
        }
    }

    /// Multiplies the long-run rate by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> ArrivalProcess {
        match *self {
            ArrivalProcess::Poisson { rate_pps } => ArrivalProcess::Poisson {
                rate_pps: rate_pps * factor,
            },
            ArrivalProcess::Cbr {
                period_ns,
                phase_ns,
            } => ArrivalProcess::Cbr {
                period_ns: ((period_ns as f64 / factor).round() as Nanos).max(1),
                phase_ns,
            },
            ArrivalProcess::OnOff {
                mean_on_ns,
                mean_off_ns,
                rate_pps,
            } => ArrivalProcess::OnOff {
                mean_on_ns,
                mean_off_ns,
                rate_pps: rate_pps * factor,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SizeModel {
    Fixed(u32),
    /// Each packet picks one of the listed sizes with equal probability.
    Uniform(Vec<u32>),
}

impl SizeModel {
    pub fn mean_bytes(&self) -> f64 {
        match self {
            SizeModel::Fixed(b) => f64::from(*b),
            SizeModel::Uniform(v) => v.iter().map(|&b| f64::from(b)).sum::<f64>() / v.len() as f64,
        }
    }

    fn sizes(&self) -> &[u32] {
        match self {
            SizeModel::Fixed(b) => std::slice::from_ref(b),
            SizeModel::Uniform(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub flow_id: FlowId,
    /// Source ONU for upstream flows, destination ONU for downstream flows.
    pub onu_id: OnuId,
    pub class: ServiceClass,
    pub arrival: ArrivalProcess,
    pub size: SizeModel,
    #[serde(default)]
    pub direction: FlowDirection,
    /// Explicit VPON mapping, overriding the class-based segmentation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vpon: Option<VponId>,
    #[serde(default)]
    pub start_ns: Nanos,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_ns: Option<Nanos>,
}

impl FlowSpec {
    /// Checks rates and sizes; `path` prefixes config error locations.
    pub fn validate(&self, path: &str) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        match self.arrival {
            ArrivalProcess::Poisson { rate_pps } if !positive(rate_pps) => {
                return Err(Error::config(
                    format!("{path}/arrival/rate_pps"),
                    "must be positive",
                ));
            }
            ArrivalProcess::Cbr { period_ns: 0, .. } => {
                return Err(Error::config(
                    format!("{path}/arrival/period_ns"),
                    "must be positive",
                ));
            }
            ArrivalProcess::OnOff {
                mean_on_ns,
                mean_off_ns,
                rate_pps,
            } => {
                for (name, v) in [
                    ("mean_on_ns", mean_on_ns),
                    ("mean_off_ns", mean_off_ns),
                    ("rate_pps", rate_pps),
                ] {
                    if !positive(v) {
                        return Err(Error::config(
                            format!("{path}/arrival/{name}"),
                            "must be positive",
                        ));
                    }
                }
            }
            _ => {}
        }
        let sizes = self.size.sizes();
        if sizes.is_empty() {
            return Err(Error::config(
                format!("{path}/size"),
                "size list must not be empty",
            ));
        }
        if let Some(b) = sizes
            .iter()
            .find(|&&b| !(MIN_FRAME_BYTES..=MAX_FRAME_BYTES).contains(&b))
        {
            return Err(Error::config(
                format!("{path}/size"),
                format!("size {b} outside [{MIN_FRAME_BYTES}, {MAX_FRAME_BYTES}] bytes"),
            ));
        }
        if let Some(stop) = self.stop_ns {
            if stop < self.start_ns {
                return Err(Error::config(
                    format!("{path}/stop_ns"),
                    "must not precede start_ns",
                ));
            }
        }
        Ok(())
    }

    pub fn mean_bit_rate_bps(&self) -> f64 {
        self.arrival.mean_rate_pps() * self.size.mean_bytes() * 8.0
    }
}

/// A packet's lifecycle record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub packet_id: u64,
    pub flow_id: FlowId,
    pub size_bytes: u32,
    pub service_class: ServiceClass,
    pub created_ns: Nanos,
    pub delivered_ns: Option<Nanos>,
    pub vpon_id: VponId,
}

/// Per-flow packet source driven by its own random stream.
#[derive(Debug, Clone)]
pub struct FlowGenerator {
    rng: ChaCha8Rng,
    arrival: ArrivalProcess,
    size: SizeModel,
    next_ns: Option<Nanos>,
    stop_ns: Option<Nanos>,
    /// End of the current ON period for ON/OFF sources.
    on_until: f64,
    clock: f64,
}

impl FlowGenerator {
    pub fn new(spec: &FlowSpec, seed: u64) -> Self {
        let mut gen = FlowGenerator {
            rng: rng_stream(seed, u64::from(spec.flow_id.0)),
            arrival: spec.arrival.clone(),
            size: spec.size.clone(),
            next_ns: None,
            stop_ns: spec.stop_ns,
            on_until: 0.0,
            clock: spec.start_ns as f64,
        };
        let first = match spec.arrival {
            ArrivalProcess::Cbr {
                period_ns,
                phase_ns,
            } => {
                let phase = phase_ns.unwrap_or_else(|| gen.rng.random_range(0..period_ns));
                gen.clock += phase as f64;
                Some(gen.clock)
            }
            ArrivalProcess::Poisson { .. } => gen.poisson_step(),
            ArrivalProcess::OnOff { mean_on_ns, .. } => {
                gen.on_until = gen.clock + exp_sample(&mut gen.rng, mean_on_ns);
                gen.onoff_step()
            }
        };
        gen.next_ns = first.and_then(|t| gen.clip(t));
        gen
    }

    /// Time of the next pending arrival, if any.
    pub fn peek(&self) -> Option<Nanos> {
        self.next_ns
    }

    /// Consumes the pending arrival and returns its packet size.
    pub fn take(&mut self) -> Option<(Nanos, u32)> {
        let at = self.next_ns?;
        let sizes = self.size.sizes();
        let size = if sizes.len() == 1 {
            sizes[0]
        } else {
            sizes[self.rng.random_range(0..sizes.len())]
        };
        let next = match self.arrival {
            ArrivalProcess::Cbr { period_ns, .. } => {
                self.clock += period_ns as f64;
                Some(self.clock)
            }
            ArrivalProcess::Poisson { .. } => self.poisson_step(),
            ArrivalProcess::OnOff { .. } => self.onoff_step(),
        };
        self.next_ns = next.and_then(|t| self.clip(t));
        Some((at, size))
    }

    fn clip(&self, t: f64) -> Option<Nanos> {
        let t = t.round() as Nanos;
        match self.stop_ns {
            Some(stop) if t >= stop => None,
            _ => Some(t),
        }
    }

    fn poisson_step(&mut self) -> Option<f64> {
        let ArrivalProcess::Poisson { rate_pps } = self.arrival else {
            return None;
        };
        self.clock += exp_sample(&mut self.rng, 1e9 / rate_pps);
        Some(self.clock)
    }

    fn onoff_step(&mut self) -> Option<f64> {
        let ArrivalProcess::OnOff {
            mean_on_ns,
            mean_off_ns,
            rate_pps,
        } = self.arrival
        else {
            return None;
        };
        let mut t = self.clock + exp_sample(&mut self.rng, 1e9 / rate_pps);
        while t >= self.on_until {
            // memoryless: restart the inter-arrival draw at the next ON period
            let on_start = self.on_until + exp_sample(&mut self.rng, mean_off_ns);
            self.on_until = on_start + exp_sample(&mut self.rng, mean_on_ns);
            t = on_start + exp_sample(&mut self.rng, 1e9 / rate_pps);
        }
        self.clock = t;
        Some(t)
    }
}

fn exp_sample(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    Exp::new(1.0 / mean)
        .map(|d| d.sample(rng))
        .unwrap_or(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    fn draws(seed: u64, stream: u64) -> Vec<u64> {
        let mut r = rng_stream(seed, stream);
        (0..16).map(|_| r.next_u64()).collect()
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        assert_eq!(draws(1, 1), draws(1, 1));
        assert_ne!(draws(1, 1), draws(2, 1));
        assert_ne!(draws(1, 1), draws(1, 2));
        assert_ne!(draws(1, 1), draws(1, discovery_stream(OnuId(1))));
    }

    fn spec(arrival: ArrivalProcess, size: SizeModel) -> FlowSpec {
        FlowSpec {
            flow_id: FlowId(3),
            onu_id: OnuId(1),
            class: ServiceClass::BestEffort,
            arrival,
            size,
            direction: FlowDirection::Upstream,
            vpon: None,
            start_ns: 0,
            stop_ns: None,
        }
    }

    fn arrivals(gen: &mut FlowGenerator, until: Nanos) -> Vec<Nanos> {
        let mut out = Vec::new();
        while gen.peek().is_some_and(|t| t < until) {
            out.push(gen.take().unwrap().0);
        }
        out
    }

    #[test]
    fn cbr_is_periodic_after_phase() {
        let s = spec(
            ArrivalProcess::Cbr {
                period_ns: 1_000_000,
                phase_ns: Some(250),
            },
            SizeModel::Fixed(1000),
        );
        let mut g = FlowGenerator::new(&s, 9);
        assert_eq!(
            arrivals(&mut g, 3_500_000),
            vec![250, 1_000_250, 2_000_250, 3_000_250]
        );
    }

    #[test]
    fn poisson_rate_is_close() {
        let s = spec(
            ArrivalProcess::Poisson { rate_pps: 10_000.0 },
            SizeModel::Fixed(64),
        );
        let mut g = FlowGenerator::new(&s, 4);
        let n = arrivals(&mut g, 10_000_000_000).len() as f64;
        assert!((n - 100_000.0).abs() < 1_500.0, "{n}");
    }

    #[test]
    fn onoff_long_run_rate() {
        let arrival = ArrivalProcess::OnOff {
            mean_on_ns: 1e6,
            mean_off_ns: 3e6,
            rate_pps: 40_000.0,
        };
        assert_eq!(arrival.mean_rate_pps(), 10_000.0);
        let mut g = FlowGenerator::new(&spec(arrival, SizeModel::Fixed(64)), 11);
        let n = arrivals(&mut g, 10_000_000_000).len() as f64;
        assert!((n - 100_000.0).abs() < 5_000.0, "{n}");
    }

    #[test]
    fn stop_time_ends_flow() {
        let mut s = spec(
            ArrivalProcess::Cbr {
                period_ns: 10,
                phase_ns: Some(0),
            },
            SizeModel::Fixed(64),
        );
        s.start_ns = 100;
        s.stop_ns = Some(130);
        let mut g = FlowGenerator::new(&s, 0);
        assert_eq!(arrivals(&mut g, u64::MAX), vec![100, 110, 120]);
    }

    #[test]
    fn uniform_sizes_come_from_list() {
        let s = spec(
            ArrivalProcess::Poisson { rate_pps: 1e6 },
            SizeModel::Uniform(vec![64, 512, 1518]),
        );
        let mut g = FlowGenerator::new(&s, 5);
        for _ in 0..200 {
            let (_, size) = g.take().unwrap();
            assert!([64, 512, 1518].contains(&size));
        }
        assert!((s.size.mean_bytes() - 698.0).abs() < 1e-9);
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut s = spec(
            ArrivalProcess::Poisson { rate_pps: 0.0 },
            SizeModel::Fixed(64),
        );
        assert!(s.validate("/flows/0").is_err());
        s.arrival = ArrivalProcess::Poisson { rate_pps: 1.0 };
        s.size = SizeModel::Fixed(63);
        match s.validate("/flows/0") {
            Err(Error::Config { path, .. }) => assert_eq!(path, "/flows/0/size"),
            other => panic!("{other:?}"),
        }
        s.size = SizeModel::Uniform(vec![64, 2000]);
        assert!(s.validate("/flows/0").is_err());
        s.size = SizeModel::Fixed(1518);
        s.validate("/flows/0").unwrap();
    }

    #[test]
    fn scaling_preserves_shape() {
        let p = ArrivalProcess::Poisson { rate_pps: 100.0 }.scaled(2.5);
        assert_eq!(p.mean_rate_pps(), 250.0);
        let c = ArrivalProcess::Cbr {
            period_ns: 1_000_000,
            phase_ns: None,
        }
        .scaled(2.0);
        assert_eq!(c.mean_rate_pps(), 2_000.0);
    }
}
